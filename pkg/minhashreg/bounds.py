import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from minhashreg.optimization import optimal_bits, optimal_permutation_count
from minhashreg.oracle import taylor_coefficients

logger = logging.getLogger(__name__)

# Hard coded number of Taylor terms per column when summing full Taylor
# weight variances, the geometric tail (1 - 1/p)^j being below e^-60 after:
TAYLOR_TERMS_PER_COLUMN = 60

LOWER_REGIME_NAME = "lower"
UPPER_REGIME_NAME = "upper"


@dataclass(frozen=True)
class BoundInputs:
    """
    Problem quantities the closed-form bounds are evaluated at.

    Parameters
    ----------
    n, p, q :
        Rows, columns and (maximal) row sparsity of the design.
    n_permutations :
        Number L of permutations.
    bits :
        Retained bits b of b-bit hashing, if relevant.
    sigma :
        Noise standard deviation.
    eta :
        Slack of the constrained estimators' radius.
    beta_norm :
        ||beta*||_2 of a main effects signal.
    interaction_norm :
        Norm of an interaction model's coefficients.
    gamma_norm_sq :
        Squared norm of the structural error.
    weighted_column_norm_sq :
        sum_k ||X_k||^2 beta_k^2, used by the b-bit bound when b > 1.
    centered_signal_norm_sq :
        ||f* - mean(f*) 1 + gamma||^2.
    p_tilde :
        Mean of p_i (1 - p_i) under a logistic model.
    delta_bar, delta_min, q_min, v_delta :
        Sparsity statistics of unequally sparse designs.
    signal_norm_sq :
        ||X beta*||^2.
    a :
        Exponent of the row scaling of scaled signals.
    design_bounded :
        Whether the design satisfies ||X||_inf <= 1.
    """

    n: int
    p: int
    q: int
    n_permutations: int
    bits: Optional[int] = None
    sigma: Optional[float] = None
    eta: float = 1.0
    beta_norm: Optional[float] = None
    interaction_norm: Optional[float] = None
    gamma_norm_sq: float = 0.0
    weighted_column_norm_sq: Optional[float] = None
    centered_signal_norm_sq: Optional[float] = None
    p_tilde: Optional[float] = None
    delta_bar: Optional[float] = None
    delta_min: Optional[float] = None
    q_min: Optional[int] = None
    v_delta: Optional[float] = None
    signal_norm_sq: Optional[float] = None
    a: Optional[float] = None
    design_bounded: bool = True

    def __post_init__(self):
        if min(self.n, self.p, self.q, self.n_permutations) < 1:
            raise ValueError(
                f"n, p, q and L must be positive, got ({self.n}, {self.p}, {self.q}, "
                f"{self.n_permutations})."
            )
        if self.q > self.p:
            raise ValueError(f"q={self.q} exceeds p={self.p}.")
        if self.eta < 0:
            raise ValueError(f"eta must be non-negative, got {self.eta}.")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}.")


@dataclass(frozen=True)
class BoundReport:
    """
    Closed-form bounds evaluated at a set of inputs.

    Bounds whose inputs were not supplied are None. Degenerate inputs
    yield infinite bounds and are listed in flags.
    """

    inputs: BoundInputs
    approx_bound_bbit: Optional[float] = None
    approx_bound_random_sign: Optional[float] = None
    approx_bound_interaction: Optional[float] = None
    approx_bound_taylor_full: Optional[float] = None
    approx_bound_taylor_truncated: Optional[float] = None
    approx_bound_geometric: Optional[float] = None
    geometric_regime: Optional[str] = None
    geometric_regime_threshold: Optional[float] = None
    L_star: Optional[float] = None
    L_star_interaction: Optional[float] = None
    rho: Optional[float] = None
    rho2: Optional[float] = None
    p_tilde: Optional[float] = None
    ridge_radius: Optional[float] = None
    interaction_ridge_radius: Optional[float] = None
    mspe_bound_ols: Optional[float] = None
    mspe_bound_ridge: Optional[float] = None
    excess_risk_bound: Optional[float] = None
    mspe_bound_ols_interaction: Optional[float] = None
    mspe_bound_ridge_interaction: Optional[float] = None
    excess_risk_bound_interaction: Optional[float] = None
    optimal_bits: Optional[int] = None
    flags: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def approx_bound(self) -> Optional[float]:
        for bound in (
            self.approx_bound_random_sign,
            self.approx_bound_bbit,
            self.approx_bound_interaction,
            self.approx_bound_taylor_truncated,
            self.approx_bound_geometric,
            self.approx_bound_taylor_full,
        ):
            if bound is not None:
                return bound
        return None

    def to_dict(self) -> Dict:
        report = asdict(self)
        report["flags"] = list(self.flags)
        return report


def approx_bound_random_sign(p: int, q: int, n_permutations: int, coefficient_norm: float) -> float:
    """
    Bound (2 - q/p) q ||beta||^2 / L on the oracle norm and approximation error.

    With the interaction norm in place of ||beta|| this is the interaction
    model's bound.
    """
    return (2 - q / p) * q * coefficient_norm**2 / n_permutations


def approx_bound_bbit(
    n: int,
    p: int,
    q: int,
    n_permutations: int,
    bits: int,
    beta_norm: float,
    weighted_column_norm_sq: Optional[float] = None,
) -> float:
    """
    Approximation error bound of shuffled b-bit hashing on binary designs.

    (2 - q/p) q / ((2^b - 1) L) (||beta||^2 + (2^b - 2)(2 - q/p) / n sum_k ||X_k||^2 beta_k^2)
    """
    n_codes = 2**bits
    column_term = 0.0
    if n_codes > 2:
        if weighted_column_norm_sq is None:
            raise ValueError("b > 1 bounds need sum_k ||X_k||^2 beta_k^2.")
        column_term = (n_codes - 2) * (2 - q / p) * weighted_column_norm_sq / n
    return (2 - q / p) * q / ((n_codes - 1) * n_permutations) * (beta_norm**2 + column_term)


def approx_bound_taylor_full(p: int, n_permutations: int, beta_norm: float, a: float) -> float:
    """
    Per-row error bound of full Taylor weights, p ||beta||^2 / L sum_l c_(l-1)^2 (1 - 1/p)^(l-1).
    """
    coefficients = taylor_coefficients(a, TAYLOR_TERMS_PER_COLUMN * p + 1)
    decay = (1 - 1 / p) ** np.arange(len(coefficients))
    return p * beta_norm**2 / n_permutations * float(np.sum(coefficients**2 * decay))


def approx_bound_taylor_truncated(
    a: float, n_permutations: int, q_min: int, beta_norm: float, delta_min: float
) -> float:
    """
    Per-row error bound of truncated Taylor weights for (delta_min / delta)^a scaling.
    """
    scale = q_min * beta_norm**2 / n_permutations
    if a == 0.5:
        return scale * math.log(4 * math.log(n_permutations) / delta_min)
    return scale * math.log(2 * (2 * a - 1) * n_permutations) ** (2 * a - 1) / (2 * a - 1)


def geometric_regime_threshold(
    p: int, delta_bar: float, beta_norm: float, signal_norm_sq: float, n: int, v_delta: float
) -> float:
    spread = signal_norm_sq * v_delta / n
    if spread <= 0:
        return math.inf
    return p * (2 * delta_bar) ** 3 * beta_norm**2 / spread


def approx_bound_geometric(
    p: int,
    n_permutations: int,
    delta_bar: float,
    beta_norm: float,
    signal_norm_sq: float,
    n: int,
    v_delta: float,
) -> Tuple[float, str, float]:
    """
    Approximation error bound of truncated geometric weights (unscaled signal).

    Returns
    -------
    bound :
        6 p delta_bar ||beta||^2 / L below the regime threshold, otherwise
        3 (p ||beta||^2 / L)^(2/3) (||X beta||^2 V / n)^(1/3).
    regime :
        Which of the two branches applies.
    threshold :
        Number of permutations separating the two branches.
    """
    threshold = geometric_regime_threshold(p, delta_bar, beta_norm, signal_norm_sq, n, v_delta)
    if n_permutations <= threshold:
        return 6 * p * delta_bar * beta_norm**2 / n_permutations, LOWER_REGIME_NAME, threshold
    spread = signal_norm_sq * v_delta / n
    bound = 3 * (p * beta_norm**2 / n_permutations) ** (2 / 3) * spread ** (1 / 3)
    return bound, UPPER_REGIME_NAME, threshold


def concentration_rho(n_permutations: int, eta: float, delta: float, q: int) -> float:
    """
    Tail bound on ||b*||^2 exceeding (1 + eta)(2 - delta) q ||beta||^2 / L.
    """
    return math.exp(-n_permutations * eta**2 / (2 * (2 - delta) * (3 + 2 * eta) * q))


def concentration_rho2(n_permutations: int, eta: float, delta: float, q: int) -> float:
    """
    Tail bound for interaction oracles, capped at 1.
    """
    second_term = math.exp(
        -n_permutations * eta**2 / (4 * (2 - delta) ** 2 * (3 + 2 * eta) * q**2)
    )
    return min(1.0, concentration_rho(n_permutations, eta, delta, q) + second_term)


def ridge_radius(
    p: int,
    q: int,
    n_permutations: int,
    coefficient_norm: float,
    eta: float,
    interaction: bool = False,
) -> float:
    """
    Norm constraint radius of the constrained ridge and logistic estimators.

    sqrt((1 + eta)(2 - q/p) q ||beta||^2 / L) for main effects, doubled
    under the root for interaction models.
    """
    factor = 2 if interaction else 1
    return math.sqrt(
        (1 + eta) * factor * (2 - q / p) * q * coefficient_norm**2 / n_permutations
    )


def logistic_p_tilde(p_vec: np.ndarray) -> float:
    p_vec = np.asarray(p_vec, dtype=float)
    if np.any((p_vec <= 0) | (p_vec >= 1)):
        raise ValueError("Probabilities must lie in (0, 1).")
    return float(np.mean(p_vec * (1 - p_vec)))


def mspe_bound_ols(
    n: int,
    p: int,
    q: int,
    n_permutations: int,
    sigma: float,
    coefficient_norm: float,
    gamma_norm_sq: float = 0.0,
) -> float:
    """
    Mean squared prediction error bound of least squares on the compressed design.
    """
    L_star = optimal_permutation_count(n, p, q, sigma, coefficient_norm)
    if L_star == 0 or math.isinf(L_star):
        balance = math.inf
    else:
        balance = max(n_permutations / L_star, L_star / n_permutations)
    leading = 2 * math.sqrt(2 - q / p) * sigma * math.sqrt(q / n) * coefficient_norm
    # inf * 0 is undefined; a noiseless or signal-free problem keeps only the tail terms.
    leading_term = 0.0 if leading == 0 else leading * balance
    return leading_term + gamma_norm_sq / n + sigma**2 / n


def mspe_bound_ridge(
    n: int,
    p: int,
    q: int,
    n_permutations: int,
    sigma: float,
    eta: float,
    coefficient_norm: float,
    centered_signal_norm_sq: float,
    gamma_norm_sq: float = 0.0,
    interaction: bool = False,
) -> float:
    """
    Mean squared prediction error bound of constrained ridge on the compressed design.
    """
    L_star = optimal_permutation_count(n, p, q, sigma, coefficient_norm)
    ratio_factor = math.sqrt(2) if interaction else 1.0
    delta = q / p
    rho = (
        concentration_rho2(n_permutations, eta, delta, q)
        if interaction
        else concentration_rho(n_permutations, eta, delta, q)
    )
    leading = (
        math.sqrt((2 - delta) * q)
        * coefficient_norm
        * (2 * sigma * math.sqrt(1 + eta) + ratio_factor * L_star / n_permutations)
        / math.sqrt(n)
    )
    return leading + rho * centered_signal_norm_sq / n + gamma_norm_sq / n + sigma**2 / n


def excess_risk_bound(
    n: int,
    p: int,
    q: int,
    n_permutations: int,
    eta: float,
    coefficient_norm: float,
    p_tilde: float,
    sigma: float = 1.0,
    interaction: bool = False,
) -> float:
    """
    Expected excess logistic risk bound of the constrained logistic estimator.

    L* enters with unit noise level unless sigma is passed.
    """
    L_star = optimal_permutation_count(n, p, q, sigma, coefficient_norm)
    ratio_factor = math.sqrt(2) if interaction else 1.0
    delta = q / p
    rho = (
        concentration_rho2(n_permutations, eta, delta, q)
        if interaction
        else concentration_rho(n_permutations, eta, delta, q)
    )
    leading = (
        math.sqrt((2 - delta) * q)
        * coefficient_norm
        * (math.sqrt((1 + eta) * p_tilde) + ratio_factor * L_star / (4 * n_permutations))
        / math.sqrt(n)
    )
    return leading + math.log(2) * rho


def bound_report(inputs: BoundInputs) -> BoundReport:
    """
    Evaluate every bound the supplied inputs allow.

    Parameters
    ----------
    inputs :
        Problem quantities; missing optional inputs leave the bounds
        depending on them unset.

    Returns
    -------
    report :
        Bound report.
    """
    n, p, q, L = inputs.n, inputs.p, inputs.q, inputs.n_permutations
    delta = q / p
    flags: List[str] = []
    values: Dict = {}

    if not inputs.design_bounded:
        logger.warning("Design violates ||X||_inf <= 1; bounds do not apply to it.")
        flags.append("design_unbounded")

    values["optimal_bits"] = optimal_bits(delta)
    values["rho"] = concentration_rho(L, inputs.eta, delta, q)
    if inputs.p_tilde is not None:
        values["p_tilde"] = inputs.p_tilde

    beta_norm = inputs.beta_norm
    if beta_norm is not None:
        values["approx_bound_random_sign"] = approx_bound_random_sign(p, q, L, beta_norm)
        values["ridge_radius"] = ridge_radius(p, q, L, beta_norm, inputs.eta)
        if inputs.bits is not None:
            if inputs.bits > 1 and inputs.weighted_column_norm_sq is None:
                flags.append("bbit_bound_missing_column_norms")
            else:
                values["approx_bound_bbit"] = approx_bound_bbit(
                    n, p, q, L, inputs.bits, beta_norm, inputs.weighted_column_norm_sq
                )
        if inputs.a is not None:
            values["approx_bound_taylor_full"] = approx_bound_taylor_full(p, L, beta_norm, inputs.a)
            if inputs.delta_min is not None and 0.5 <= inputs.a <= 1:
                q_min = inputs.q_min if inputs.q_min is not None else q
                values["approx_bound_taylor_truncated"] = approx_bound_taylor_truncated(
                    inputs.a, L, q_min, beta_norm, inputs.delta_min
                )
        if None not in (inputs.delta_bar, inputs.signal_norm_sq, inputs.v_delta):
            bound, regime, threshold = approx_bound_geometric(
                p, L, inputs.delta_bar, beta_norm, inputs.signal_norm_sq, n, inputs.v_delta
            )
            values["approx_bound_geometric"] = bound
            values["geometric_regime"] = regime
            values["geometric_regime_threshold"] = threshold
        if inputs.sigma is not None:
            values["L_star"] = optimal_permutation_count(n, p, q, inputs.sigma, beta_norm)
            values["mspe_bound_ols"] = mspe_bound_ols(
                n, p, q, L, inputs.sigma, beta_norm, inputs.gamma_norm_sq
            )
            if inputs.centered_signal_norm_sq is not None:
                values["mspe_bound_ridge"] = mspe_bound_ridge(
                    n, p, q, L, inputs.sigma, inputs.eta, beta_norm,
                    inputs.centered_signal_norm_sq, inputs.gamma_norm_sq,
                )
        if inputs.p_tilde is not None:
            values["excess_risk_bound"] = excess_risk_bound(
                n, p, q, L, inputs.eta, beta_norm, inputs.p_tilde,
                sigma=inputs.sigma if inputs.sigma else 1.0,
            )

    interaction_norm = inputs.interaction_norm
    if interaction_norm is not None:
        values["rho2"] = concentration_rho2(L, inputs.eta, delta, q)
        values["approx_bound_interaction"] = approx_bound_random_sign(p, q, L, interaction_norm)
        values["interaction_ridge_radius"] = ridge_radius(
            p, q, L, interaction_norm, inputs.eta, interaction=True
        )
        if inputs.sigma is not None:
            values["L_star_interaction"] = optimal_permutation_count(
                n, p, q, inputs.sigma, interaction_norm
            )
            values["mspe_bound_ols_interaction"] = mspe_bound_ols(
                n, p, q, L, inputs.sigma, interaction_norm, inputs.gamma_norm_sq
            )
            if inputs.centered_signal_norm_sq is not None:
                values["mspe_bound_ridge_interaction"] = mspe_bound_ridge(
                    n, p, q, L, inputs.sigma, inputs.eta, interaction_norm,
                    inputs.centered_signal_norm_sq, inputs.gamma_norm_sq, interaction=True,
                )
        if inputs.p_tilde is not None:
            values["excess_risk_bound_interaction"] = excess_risk_bound(
                n, p, q, L, inputs.eta, interaction_norm, inputs.p_tilde,
                sigma=inputs.sigma if inputs.sigma else 1.0, interaction=True,
            )

    if inputs.sigma == 0:
        flags.append("zero_noise")
    for name, value in values.items():
        if isinstance(value, float) and math.isinf(value) and name != "geometric_regime_threshold":
            flags.append(f"infinite_{name}")
    logger.debug(f"Bound report values: {values}")

    return BoundReport(inputs=inputs, flags=tuple(flags), **values)
