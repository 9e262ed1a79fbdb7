import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from minhashreg.bounds import (
    approx_bound_bbit,
    approx_bound_geometric,
    approx_bound_random_sign,
    approx_bound_taylor_full,
    approx_bound_taylor_truncated,
    concentration_rho,
    concentration_rho2,
)
from minhashreg.config import (
    APPROX_ERROR_NAME,
    BBIT_SHUFFLED_NAME,
    COEFFICIENT_STREAM,
    CONCENTRATION_NAME,
    DESIGN_STREAM,
    GEOMETRIC_TRUNCATED_NAME,
    INTERACTION_ORACLE_NAME,
    INTERACTION_STREAM,
    MAIN_ORACLE_NAME,
    MIN_REPLICATIONS,
    ONE_SIDED_SE_THRESHOLD,
    RANDOM_SIGN_NAME,
    REPLICATE_STREAM,
    SCALED_ORACLE_NAME,
    SCALED_WEIGHT_KINDS,
    TAYLOR_FULL_NAME,
    TAYLOR_TRUNCATED_NAME,
    TWO_SIDED_SE_THRESHOLD,
    UNBIASEDNESS_NAME,
    VERIFICATION_TARGETS,
)
from minhashreg.hashing import HashConfig, build_ensemble, hash_design
from minhashreg.oracle import (
    InteractionModelSpec,
    WeightVector,
    first_hit_times,
    interaction_norm,
    oracle_b_interaction,
    oracle_b_main,
    oracle_b_scaled,
    ranks_from_first_hits,
    scaled_signal,
    weight_taylor,
)
from minhashreg.sparse import SparseMatrix, SparsityProfile, sparsity_profile
from minhashreg.utils import spawn_generator

logger = logging.getLogger(__name__)

ORACLE_KINDS = [MAIN_ORACLE_NAME, INTERACTION_ORACLE_NAME, SCALED_ORACLE_NAME]

# Hard coded number of replicates evaluated per parallel task:
REPLICATE_BLOCK_SIZE = 250

# Slack for checks whose standard error is exactly zero:
EXACT_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class VerificationSpec:
    """
    Instance on which an oracle construction is checked by Monte Carlo.

    Parameters
    ----------
    X :
        Bounded design. Main and interaction oracles need equal row
        sparsity, b-bit hashing a binary design.
    n_permutations :
        Number L of permutations per replicate ensemble.
    oracle :
        Oracle kind: main effects, interactions or row-scaled signals.
    variant :
        Hashing variant, random-sign or shuffled b-bit (main oracle only).
    bits :
        Retained bits of b-bit hashing.
    beta :
        Main effect coefficients (main and scaled oracles).
    interaction :
        Interaction model (interaction oracle).
    weight_kind :
        Scaled weight kind (scaled oracle).
    a :
        Exponent of the delta^(-a) row scaling (Taylor weight kinds).
    eta :
        Slack of the concentration event.
    """

    X: SparseMatrix
    n_permutations: int
    oracle: str = MAIN_ORACLE_NAME
    variant: str = RANDOM_SIGN_NAME
    bits: int = 1
    beta: Optional[np.ndarray] = None
    interaction: Optional[InteractionModelSpec] = None
    weight_kind: Optional[str] = None
    a: float = 0.0
    eta: float = 1.0

    def __post_init__(self):
        if self.oracle not in ORACLE_KINDS:
            raise ValueError(f"Oracle must be one of {ORACLE_KINDS}, got '{self.oracle}'.")
        if self.n_permutations < 1:
            raise ValueError(f"Number of permutations must be at least 1, got {self.n_permutations}.")
        if self.X.max_abs > 1:
            raise ValueError("Verification needs a design with ||X||_inf <= 1.")
        if self.X.row_nnz.min() == 0:
            raise ValueError("Verification designs cannot have empty rows.")

        if self.oracle == INTERACTION_ORACLE_NAME:
            if self.interaction is None:
                raise ValueError("The interaction oracle needs an interaction model.")
            if self.variant != RANDOM_SIGN_NAME:
                raise ValueError("Interaction oracles are only defined for random-sign hashing.")
        else:
            if self.beta is None:
                raise ValueError(f"The {self.oracle} oracle needs beta.")
            object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
            if self.beta.shape != (self.X.n_cols,):
                raise ValueError(
                    f"beta must have length {self.X.n_cols}, got shape {self.beta.shape}."
                )

        if self.oracle == SCALED_ORACLE_NAME:
            if self.weight_kind not in SCALED_WEIGHT_KINDS:
                raise ValueError(
                    f"Weight kind must be one of {SCALED_WEIGHT_KINDS}, got '{self.weight_kind}'."
                )
            if self.variant != RANDOM_SIGN_NAME:
                raise ValueError("Scaled oracles are only defined for random-sign hashing.")
        elif self.variant not in (RANDOM_SIGN_NAME, BBIT_SHUFFLED_NAME):
            raise ValueError(
                f"Variant must be '{RANDOM_SIGN_NAME}' or '{BBIT_SHUFFLED_NAME}', got '{self.variant}'."
            )
        if self.variant == BBIT_SHUFFLED_NAME and not self.X.is_binary:
            raise ValueError("b-bit oracles need a binary design.")

    @property
    def p(self) -> int:
        return self.X.n_cols

    @property
    def coefficient_norm(self) -> float:
        if self.oracle == INTERACTION_ORACLE_NAME:
            profile = sparsity_profile(self.X)
            return interaction_norm(self.interaction, self.p, profile.q_max)
        return float(np.linalg.norm(self.beta))

    def params(self) -> Dict:
        profile = sparsity_profile(self.X)
        params = {
            "oracle": self.oracle,
            "variant": self.variant,
            "n": self.X.n_rows,
            "p": self.p,
            "q_min": profile.q_min,
            "q_max": profile.q_max,
            "L": self.n_permutations,
            "coefficient_norm": self.coefficient_norm,
        }
        if self.variant == BBIT_SHUFFLED_NAME:
            params["bits"] = self.bits
        if self.oracle == SCALED_ORACLE_NAME:
            params["weight_kind"] = self.weight_kind
            params["a"] = self.a
        return params


@dataclass
class VerificationRecord:
    target: str
    params: Dict
    estimate: float
    se: float
    bound: float
    passed: bool
    details: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "target": self.target,
            "params": self.params,
            "estimate": self.estimate,
            "se": self.se,
            "bound": self.bound,
            "pass": self.passed,
            **self.details,
        }


def _signal_target(spec: VerificationSpec, profile: SparsityProfile) -> np.ndarray:
    if spec.oracle == INTERACTION_ORACLE_NAME:
        return spec.interaction.signal(spec.X)
    if spec.oracle == SCALED_ORACLE_NAME:
        if spec.weight_kind == TAYLOR_FULL_NAME:
            return scaled_signal(spec.X, spec.beta, a=spec.a)
        if spec.weight_kind == TAYLOR_TRUNCATED_NAME:
            return scaled_signal(spec.X, spec.beta, a=spec.a, delta_ref=profile.delta_min)
    return spec.X.dot(spec.beta)


def _scaled_weights(spec: VerificationSpec, profile: SparsityProfile) -> WeightVector:
    if spec.weight_kind == TAYLOR_FULL_NAME:
        return weight_taylor(spec.a, spec.p, TAYLOR_FULL_NAME)
    if spec.weight_kind == TAYLOR_TRUNCATED_NAME:
        return weight_taylor(
            spec.a,
            spec.p,
            TAYLOR_TRUNCATED_NAME,
            n_permutations=spec.n_permutations,
            delta_min=profile.delta_min,
        )
    signal = spec.X.dot(spec.beta)
    return weight_taylor(
        0.0,
        spec.p,
        GEOMETRIC_TRUNCATED_NAME,
        n_permutations=spec.n_permutations,
        delta_bar=profile.delta_bar,
        beta_norm_sq=float(spec.beta @ spec.beta),
        signal_norm_sq=float(signal @ signal),
        n_rows=spec.X.n_rows,
        v_delta=sparsity_profile(spec.X, signal=signal).v_delta,
    )


def _replicate(
    spec: VerificationSpec,
    profile: SparsityProfile,
    weights: Optional[WeightVector],
    seed: int,
    index: int,
) -> Tuple[np.ndarray, float]:
    rng = spawn_generator(seed, REPLICATE_STREAM, index)
    p, n_permutations = spec.p, spec.n_permutations
    config = HashConfig(n_permutations=n_permutations, bits=spec.bits, variant=spec.variant)

    if spec.oracle == SCALED_ORACLE_NAME:
        first_hits = first_hit_times(p, rng, n_permutations)
        signs = 2 * rng.integers(0, 2, size=(p, n_permutations)) - 1
        e = build_ensemble(config, p, ranks=ranks_from_first_hits(first_hits), signs=signs)
        oracle = oracle_b_scaled(spec.beta, weights, first_hits, signs, profile=profile)
    else:
        ranks = rng.permuted(np.tile(np.arange(1, p + 1), (n_permutations, 1)), axis=1)
        signs, shuffle_maps = None, None
        if spec.variant == RANDOM_SIGN_NAME:
            signs = 2 * rng.integers(0, 2, size=(p, n_permutations)) - 1
        else:
            shuffle_maps = rng.integers(0, config.n_codes, size=(n_permutations, p))
        e = build_ensemble(config, p, ranks=ranks, signs=signs, shuffle_maps=shuffle_maps)
        if spec.oracle == INTERACTION_ORACLE_NAME:
            oracle = oracle_b_interaction(spec.interaction, e, profile.q_max, profile=profile)
        else:
            oracle = oracle_b_main(spec.beta, e, profile.q_max, profile=profile)

    output = hash_design(spec.X, e)
    prediction = np.asarray(output.S @ oracle.b_star).ravel()
    return prediction, oracle.squared_norm


def _replicate_block(
    spec: VerificationSpec,
    profile: SparsityProfile,
    weights: Optional[WeightVector],
    seed: int,
    indices: range,
) -> Tuple[np.ndarray, np.ndarray]:
    predictions = np.empty((len(indices), spec.X.n_rows))
    squared_norms = np.empty(len(indices))
    for position, index in enumerate(indices):
        predictions[position], squared_norms[position] = _replicate(
            spec, profile, weights, seed, index
        )
    return predictions, squared_norms


def simulate_oracle(
    spec: VerificationSpec,
    n_replications: int,
    seed: int,
    n_jobs: int = 1,
    progress: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draw independent ensembles and evaluate the oracle prediction S b* under each.

    Replicate r is keyed on the replicate stream at index r, so the output
    does not depend on n_jobs.

    Returns
    -------
    predictions :
        (R, n) oracle predictions.
    squared_norms :
        (R,) values of ||b*||^2.
    """
    profile = sparsity_profile(spec.X)
    weights = _scaled_weights(spec, profile) if spec.oracle == SCALED_ORACLE_NAME else None
    blocks = [
        range(start, min(start + REPLICATE_BLOCK_SIZE, n_replications))
        for start in range(0, n_replications, REPLICATE_BLOCK_SIZE)
    ]
    results = Parallel(n_jobs=n_jobs)(
        delayed(_replicate_block)(spec, profile, weights, seed, block)
        for block in tqdm(blocks, desc="Replicates", disable=not progress)
    )
    predictions = np.concatenate([block_predictions for block_predictions, _ in results])
    squared_norms = np.concatenate([block_norms for _, block_norms in results])
    return predictions, squared_norms


def approximation_bound(spec: VerificationSpec) -> float:
    """
    Closed-form bound on the approximation error checked for a spec.
    """
    profile = sparsity_profile(spec.X)
    n, p, q, L = spec.X.n_rows, spec.p, profile.q_max, spec.n_permutations

    if spec.oracle == INTERACTION_ORACLE_NAME:
        return approx_bound_random_sign(p, q, L, spec.coefficient_norm)
    beta_norm = float(np.linalg.norm(spec.beta))

    if spec.oracle == MAIN_ORACLE_NAME:
        if spec.variant == BBIT_SHUFFLED_NAME:
            column_norms_sq = np.asarray(spec.X.to_csr().power(2).sum(axis=0)).ravel()
            return approx_bound_bbit(
                n, p, q, L, spec.bits, beta_norm, float(column_norms_sq @ spec.beta**2)
            )
        return approx_bound_random_sign(p, q, L, beta_norm)

    if spec.weight_kind == TAYLOR_FULL_NAME:
        return approx_bound_taylor_full(p, L, beta_norm, spec.a)
    if spec.weight_kind == TAYLOR_TRUNCATED_NAME:
        return approx_bound_taylor_truncated(spec.a, L, profile.q_min, beta_norm, profile.delta_min)
    signal = spec.X.dot(spec.beta)
    bound, regime, _ = approx_bound_geometric(
        p,
        L,
        profile.delta_bar,
        beta_norm,
        float(signal @ signal),
        n,
        sparsity_profile(spec.X, signal=signal).v_delta,
    )
    logger.debug(f"Geometric weight bound {bound} in the {regime} regime.")
    return bound


def _check_unbiasedness(predictions: np.ndarray, target: np.ndarray) -> Tuple[float, float, bool]:
    n_replications = len(predictions)
    means = predictions.mean(axis=0)
    ses = predictions.std(axis=0, ddof=1) / math.sqrt(n_replications)
    deviations = np.abs(means - target)
    passed = bool(np.all(deviations <= TWO_SIDED_SE_THRESHOLD * ses + EXACT_TOLERANCE))
    worst = int(np.argmax(deviations / np.maximum(ses, EXACT_TOLERANCE)))
    return float(deviations[worst]), float(ses[worst]), passed


def _check_approx_error(
    spec: VerificationSpec, predictions: np.ndarray, target: np.ndarray, bound: float
) -> Tuple[float, float, bool]:
    n_replications = len(predictions)
    squared_errors = (predictions - target[None, :]) ** 2
    if spec.oracle == SCALED_ORACLE_NAME and spec.weight_kind != GEOMETRIC_TRUNCATED_NAME:
        # Taylor weight bounds hold row by row.
        row_means = squared_errors.mean(axis=0)
        row_ses = squared_errors.std(axis=0, ddof=1) / math.sqrt(n_replications)
        passed = bool(np.all(row_means <= bound + ONE_SIDED_SE_THRESHOLD * row_ses + EXACT_TOLERANCE))
        worst = int(np.argmax(row_means - ONE_SIDED_SE_THRESHOLD * row_ses))
        return float(row_means[worst]), float(row_ses[worst]), passed

    mean_errors = squared_errors.mean(axis=1)
    estimate = float(mean_errors.mean())
    se = float(mean_errors.std(ddof=1) / math.sqrt(n_replications))
    return estimate, se, estimate <= bound + ONE_SIDED_SE_THRESHOLD * se + EXACT_TOLERANCE


def mc_verify(
    target: str,
    spec: VerificationSpec,
    n_replications: int,
    seed: int,
    n_jobs: int = 1,
    progress: bool = False,
) -> VerificationRecord:
    """
    Check an oracle construction by Monte Carlo over independent ensembles.

    Parameters
    ----------
    target :
        Property to check. Unbiasedness requires every component of the
        mean oracle prediction to be within 4 SE of the signal.
        Approximation error requires the mean squared distance to the
        signal to stay below its closed-form bound plus 3 SE.
        Concentration requires the frequency of ||b*||^2 exceeding its
        (1 + eta) scaled bound to stay below the tail bound plus 3
        binomial SE.
    spec :
        Instance and oracle to check.
    n_replications :
        Number R of independent ensembles, at least 1000.
    seed :
        Run seed.
    n_jobs :
        Number of joblib workers.
    progress :
        Whether to show a progress bar.

    Returns
    -------
    record :
        Estimate, standard error, bound and outcome of the check.
    """
    if target not in VERIFICATION_TARGETS:
        raise ValueError(f"Target must be one of {VERIFICATION_TARGETS}, got '{target}'.")
    if n_replications < MIN_REPLICATIONS:
        raise ValueError(
            f"Monte Carlo checks need R >= {MIN_REPLICATIONS}, got {n_replications}."
        )
    profile = sparsity_profile(spec.X)
    if target == UNBIASEDNESS_NAME and spec.oracle == SCALED_ORACLE_NAME:
        if spec.weight_kind == TAYLOR_TRUNCATED_NAME or (
            spec.weight_kind == GEOMETRIC_TRUNCATED_NAME and not profile.equal_sparsity
        ):
            raise ValueError(
                f"'{spec.weight_kind}' weights are biased on this design; check '{APPROX_ERROR_NAME}' instead."
            )
    if target == CONCENTRATION_NAME and (
        spec.oracle == SCALED_ORACLE_NAME or spec.variant != RANDOM_SIGN_NAME
    ):
        raise ValueError("Concentration is checked for random-sign main and interaction oracles only.")

    predictions, squared_norms = simulate_oracle(
        spec, n_replications, seed, n_jobs=n_jobs, progress=progress
    )
    params = {**spec.params(), "R": n_replications, "seed": seed}
    details: Dict = {}

    if target == UNBIASEDNESS_NAME:
        estimate, se, passed = _check_unbiasedness(predictions, _signal_target(spec, profile))
        bound = 0.0

    elif target == APPROX_ERROR_NAME:
        bound = approximation_bound(spec)
        estimate, se, passed = _check_approx_error(
            spec, predictions, _signal_target(spec, profile), bound
        )

    else:
        q, L, delta = profile.q_max, spec.n_permutations, profile.q_max / spec.p
        norm_sq = spec.coefficient_norm**2
        threshold = (1 + spec.eta) * (2 - delta) * q * norm_sq / L
        if spec.oracle == INTERACTION_ORACLE_NAME:
            bound = concentration_rho2(L, spec.eta, delta, q)
        else:
            bound = concentration_rho(L, spec.eta, delta, q)
        # Strict exceedance keeps the zero signal, where both sides vanish, outside the event.
        estimate = float(np.mean(squared_norms > threshold))
        se = math.sqrt(bound * (1 - bound) / n_replications)
        passed = estimate <= bound + ONE_SIDED_SE_THRESHOLD * se
        details["threshold"] = threshold
        params["eta"] = spec.eta

    logger.info(
        f"{target} check of the {spec.oracle} oracle: estimate={estimate}, se={se}, "
        f"bound={bound}, pass={passed}"
    )
    return VerificationRecord(
        target=target,
        params=params,
        estimate=estimate,
        se=se,
        bound=bound,
        passed=bool(passed),
        details=details,
    )


def _sparse_binary_rows(rng: np.random.Generator, n: int, p: int, row_sparsities: np.ndarray) -> SparseMatrix:
    rows = []
    for q_i in row_sparsities:
        support = rng.choice(p, size=int(q_i), replace=False)
        rows.append({int(k): 1.0 for k in support})
    return SparseMatrix.from_rows(rows, n_cols=p)


def build_verification_spec(
    oracle: str,
    n: int,
    p: int,
    q: int,
    n_permutations: int,
    seed: int,
    variant: str = RANDOM_SIGN_NAME,
    bits: int = 1,
    q_max: Optional[int] = None,
    weight_kind: Optional[str] = None,
    a: float = 0.0,
    eta: float = 1.0,
    n_interactions: int = 3,
) -> VerificationSpec:
    """
    Draw a random binary verification instance.

    Rows have exactly q non-zeros, or a uniform count in [q, q_max] when
    q_max is given (scaled oracles). Coefficients are Gaussian with unit
    norm. Interaction instances use beta as main effects plus
    n_interactions Gaussian pair coefficients on distinct off-diagonal
    pairs.
    """
    if not 1 <= q <= p:
        raise ValueError(f"Row sparsity must satisfy 1 <= q <= p, got q={q}, p={p}.")
    q_max = q if q_max is None else q_max
    if not q <= q_max <= p:
        raise ValueError(f"q_max must lie in [{q}, {p}], got {q_max}.")

    design_rng = spawn_generator(seed, DESIGN_STREAM)
    row_sparsities = design_rng.integers(q, q_max + 1, size=n)
    X = _sparse_binary_rows(design_rng, n, p, row_sparsities)

    beta = spawn_generator(seed, COEFFICIENT_STREAM).standard_normal(p)
    beta = beta / np.linalg.norm(beta)

    interaction = None
    if oracle == INTERACTION_ORACLE_NAME:
        interaction_rng = spawn_generator(seed, INTERACTION_STREAM)
        pairs: List[Tuple[int, int]] = []
        while len(pairs) < min(n_interactions, p * (p - 1)):
            k, k1 = (int(index) for index in interaction_rng.choice(p, size=2, replace=False))
            if (k, k1) not in pairs:
                pairs.append((k, k1))
        values = interaction_rng.standard_normal(len(pairs))
        interaction = InteractionModelSpec.from_triples(
            beta, [(k, k1, float(value)) for (k, k1), value in zip(pairs, values)]
        )

    return VerificationSpec(
        X=X,
        n_permutations=n_permutations,
        oracle=oracle,
        variant=variant,
        bits=bits,
        beta=None if oracle == INTERACTION_ORACLE_NAME else beta,
        interaction=interaction,
        weight_kind=weight_kind,
        a=a,
        eta=eta,
    )
