import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from minhashreg.config import (
    BBIT_PLAIN_NAME,
    BBIT_SHUFFLED_NAME,
    FIRST_HIT_CAP_FACTOR,
    FIRST_HIT_STREAM,
    INTERACTION_ORACLE_NAME,
    MAIN_WEIGHTS_NAME,
    RANDOM_SIGN_NAME,
    SCALED_WEIGHT_KINDS,
    TAYLOR_FULL_NAME,
    TAYLOR_TRUNCATED_NAME,
    TRUNCATED_MIN_PERMUTATIONS,
)
from minhashreg.hashing import HashEnsemble
from minhashreg.sparse import SparseMatrix, SparsityProfile
from minhashreg.utils import spawn_generator

logger = logging.getLogger(__name__)

# Radius of convergence of the Taylor series of delta^(-a) about 1:
POWER_SCALING_RADIUS = 1.0


@dataclass(frozen=True, eq=False)
class WeightVector:
    """
    Per-rank weights, w[l - 1] being the weight of rank (or first hit) l.

    Parameters
    ----------
    w :
        Stored weights. Ranks beyond the stored length weigh zero, except
        for full Taylor weights which are extended from their closed form.
    kind :
        Weight construction name.
    p :
        Number of columns the weights were built for.
    m :
        Truncation level of truncated kinds.
    a :
        Exponent of the delta^(-a) row scaling, if any.
    scale :
        Constant factor of the full Taylor weights p * scale * c_(l - 1).
    """

    w: np.ndarray
    kind: str
    p: int
    m: Optional[float] = None
    a: Optional[float] = None
    scale: float = 1.0

    def at(self, ell: np.ndarray) -> np.ndarray:
        ell = np.asarray(ell, dtype=np.int64)
        weights = np.zeros(ell.shape)
        inside = (ell >= 1) & (ell <= len(self.w))
        weights[inside] = self.w[ell[inside] - 1]
        beyond = ell > len(self.w)
        if self.kind == TAYLOR_FULL_NAME and np.any(beyond):
            coefficients = taylor_coefficients(self.a, int(ell.max()))
            weights[beyond] = self.p * self.scale * coefficients[ell[beyond] - 1]
        return weights

    @property
    def squared_norm(self) -> float:
        return float(self.w @ self.w)


@dataclass(frozen=True, eq=False)
class OracleCoefficients:
    """
    Oracle coefficient vector b* on the compressed columns.

    For the interaction oracle, b_main and b_interaction hold the main
    effect and interaction parts, with b_star their sum.
    """

    b_star: np.ndarray
    variant: str
    b_main: Optional[np.ndarray] = None
    b_interaction: Optional[np.ndarray] = None

    @property
    def squared_norm(self) -> float:
        return float(self.b_star @ self.b_star)


class FirstHitStream(NamedTuple):
    first_hits: np.ndarray
    ranks: np.ndarray


def marginal_M_pmf(p: int, q: int) -> np.ndarray:
    """
    Distribution of the winning rank M of a row with q non-zeros.

    P(M = l) = C(p - l, q - 1) / C(p, q), evaluated through the ratio
    recurrence P(l + 1) = P(l) (p - l - q + 1) / (p - l) from P(1) = q / p.

    Parameters
    ----------
    p :
        Number of columns.
    q :
        Number of non-zeros of the row.

    Returns
    -------
    pmf :
        Length p array with pmf[l - 1] = P(M = l).
    """
    if not 1 <= q <= p:
        raise ValueError(f"Row sparsity must satisfy 1 <= q <= p, got q={q}, p={p}.")
    pmf = np.zeros(p)
    ell = np.arange(1, p - q + 1)
    ratios = (p - ell - q + 1) / (p - ell)
    pmf[: p - q + 1] = (q / p) * np.concatenate([[1.0], np.cumprod(ratios)])
    return pmf


def weight_vector_main(p: int, q: int) -> WeightVector:
    """
    Minimum norm weights satisfying sum_l w_l P(M = l) = 1.
    """
    pmf = marginal_M_pmf(p, q)
    return WeightVector(w=pmf / (pmf @ pmf), kind=MAIN_WEIGHTS_NAME, p=p)


def taylor_coefficients(a: float, count: int) -> np.ndarray:
    """
    First count coefficients c_j of (1 - x)^(-a) = sum_j c_j x^j.

    c_0 = 1 and c_j = c_(j - 1) (a + j - 1) / j, all non-negative for a >= 0.
    """
    if count < 1:
        return np.zeros(0)
    j = np.arange(1, count)
    return np.concatenate([[1.0], np.cumprod((a + j - 1) / j)])


def _taylor_truncation_level(a: float, n_permutations: int, delta_min: float) -> float:
    if a == 0.5:
        return math.log(n_permutations) / (2 * delta_min)
    return math.log(2 * (2 * a - 1) * n_permutations) / (2 * delta_min)


def _geometric_truncation_level(
    p: int,
    n_permutations: int,
    delta_bar: float,
    beta_norm_sq: float,
    signal_norm_sq: float,
    n_rows: int,
    v_delta: float,
) -> int:
    m_cap = 1 / (2 * delta_bar)
    if v_delta <= 0 or signal_norm_sq <= 0:
        m = m_cap
    else:
        m = min(
            (p * beta_norm_sq * n_rows / (n_permutations * signal_norm_sq * v_delta)) ** (1 / 3),
            m_cap,
        )
    return max(1, int(round(m)))


def weight_taylor(
    a: float,
    p: int,
    mode: str,
    n_permutations: Optional[int] = None,
    delta_min: Optional[float] = None,
    delta_bar: Optional[float] = None,
    beta_norm_sq: Optional[float] = None,
    signal_norm_sq: Optional[float] = None,
    n_rows: Optional[int] = None,
    v_delta: Optional[float] = None,
) -> WeightVector:
    """
    Weights targeting a row-scaled signal under first-hit hashing.

    A row with sparsity delta has its first hit G distributed as
    Geo(delta), so weights with sum_l w_l (1 - delta)^(l - 1) = p kappa(delta)
    make the hashed signal target kappa(delta) x_i^T beta.

    Parameters
    ----------
    a :
        Exponent of the scaling kappa(delta) = delta^(-a), ignored by the
        geometric kind (constant scaling).
    p :
        Number of columns.
    mode :
        One of the scaled weight kinds: full Taylor weights, truncated
        weights for (delta_min / delta)^a or truncated geometric weights.
    n_permutations :
        Number L of permutations (truncated and geometric kinds).
    delta_min :
        Smallest row sparsity (truncated kind).
    delta_bar :
        Mean row sparsity (geometric kind).
    beta_norm_sq, signal_norm_sq, n_rows, v_delta :
        ||beta||^2, ||X beta||^2, n and the signal-weighted sparsity spread
        choosing the geometric truncation level.

    Returns
    -------
    weights :
        Weight vector with its truncation level m, if any.
    """
    if mode not in SCALED_WEIGHT_KINDS:
        raise ValueError(f"Mode must be one of {SCALED_WEIGHT_KINDS}, got '{mode}'.")

    if mode == TAYLOR_FULL_NAME:
        if a < 0:
            raise ValueError(f"Scaling exponent must be non-negative, got {a}.")
        w = p * taylor_coefficients(a, p)
        return WeightVector(w=w, kind=mode, p=p, a=a)

    elif mode == TAYLOR_TRUNCATED_NAME:
        if not 0.5 <= a <= 1:
            raise ValueError(f"Truncated weights need a in [0.5, 1], got {a}.")
        if n_permutations is None or delta_min is None:
            raise ValueError("Truncated weights need n_permutations and delta_min.")
        if not 0 < delta_min <= 1:
            raise ValueError(f"Truncated weights need delta_min in (0, 1], got {delta_min}.")
        if n_permutations < TRUNCATED_MIN_PERMUTATIONS:
            raise ValueError(
                f"Truncated weights need at least {TRUNCATED_MIN_PERMUTATIONS} permutations, "
                f"got {n_permutations}."
            )
        if a == 0.5 and delta_min > 0.5:
            raise ValueError(f"a = 0.5 needs delta_min <= 0.5, got {delta_min}.")
        if a > 0.5 and n_permutations <= 2 / (2 * a - 1):
            raise ValueError(
                f"a = {a} needs more than {2 / (2 * a - 1)} permutations, got {n_permutations}."
            )
        m = _taylor_truncation_level(a, n_permutations, delta_min)
        m_floor = math.floor(m)
        n_stored = m_floor + 1 if m == m_floor else m_floor + 2
        truncation = np.ones(n_stored)
        if m != m_floor:
            truncation[-1] = m - m_floor
        w = p * delta_min**a * taylor_coefficients(a, n_stored) * truncation
        logger.debug(f"Truncated Taylor weights with a={a}, m={m}.")
        return WeightVector(w=w, kind=mode, p=p, m=m, a=a)

    else:
        required = [n_permutations, delta_bar, beta_norm_sq, signal_norm_sq, n_rows, v_delta]
        if any(value is None for value in required):
            raise ValueError(
                "Geometric weights need n_permutations, delta_bar, beta_norm_sq, "
                "signal_norm_sq, n_rows and v_delta."
            )
        if not 0 < delta_bar <= 1:
            raise ValueError(f"Geometric weights need delta_bar in (0, 1], got {delta_bar}.")
        m = _geometric_truncation_level(
            p, n_permutations, delta_bar, beta_norm_sq, signal_norm_sq, n_rows, v_delta
        )
        ratio = 1 - delta_bar
        normalizer = delta_bar * (2 - delta_bar) / (1 - ratio ** (2 * m))
        w = p * ratio ** np.arange(m) * normalizer
        logger.debug(f"Truncated geometric weights with m={m}, delta_bar={delta_bar}.")
        return WeightVector(w=w, kind=mode, p=p, m=float(m), a=0.0)


def first_hit_stream(p: int, seed: int, index: int = 0) -> FirstHitStream:
    """
    Draw uniform columns with replacement until every column has appeared.

    The first hit g(k) of column k is the 1-based draw at which it first
    appears; ranking the first hits gives a uniform random permutation.

    Parameters
    ----------
    p :
        Number of columns.
    seed :
        Run seed.
    index :
        Stream index, eg. the permutation number.

    Returns
    -------
    stream :
        First hit times and the induced 1-based ranks.
    """
    if p < 1:
        raise ValueError(f"Number of columns must be at least 1, got {p}.")
    if p == 1:
        return FirstHitStream(first_hits=np.ones(1, dtype=np.int64), ranks=np.ones(1, dtype=np.int64))

    rng = spawn_generator(seed, FIRST_HIT_STREAM, index)
    cap = math.ceil(FIRST_HIT_CAP_FACTOR * p * math.log(p))
    batch_size = max(p, 16)
    first_hits = np.zeros(p, dtype=np.int64)
    n_drawn = 0
    while np.any(first_hits == 0):
        if n_drawn >= cap:
            raise RuntimeError(f"First hit stream cap of {cap} draws exceeded for p={p}.")
        batch = rng.integers(0, p, size=min(batch_size, cap - n_drawn))
        cols, first_positions = np.unique(batch, return_index=True)
        unseen = first_hits[cols] == 0
        first_hits[cols[unseen]] = n_drawn + first_positions[unseen] + 1
        n_drawn += len(batch)

    return FirstHitStream(first_hits=first_hits, ranks=_ranks_from_first_hits(first_hits))


def first_hit_times(p: int, rng: np.random.Generator, size: int) -> np.ndarray:
    """
    Draw size independent first hit vectors at once.

    Uses the equivalent waiting time form: the j-th new column appears
    after a Geo((p - j + 1) / p) wait, and the order in which columns
    appear is a uniform permutation.

    Returns
    -------
    first_hits :
        (size, p) first hit times.
    """
    success_probs = (p - np.arange(p)) / p
    arrival_times = np.cumsum(rng.geometric(success_probs, size=(size, p)), axis=1)
    arrival_order = rng.permuted(np.tile(np.arange(p), (size, 1)), axis=1)
    first_hits = np.empty((size, p), dtype=np.int64)
    np.put_along_axis(first_hits, arrival_order, arrival_times, axis=1)
    return first_hits


def _ranks_from_first_hits(first_hits: np.ndarray) -> np.ndarray:
    ranks = np.empty_like(first_hits)
    order = np.argsort(first_hits, axis=-1, kind="stable")
    np.put_along_axis(
        ranks, order, np.broadcast_to(np.arange(1, first_hits.shape[-1] + 1), order.shape), axis=-1
    )
    return ranks


def ranks_from_first_hits(first_hits: np.ndarray) -> np.ndarray:
    return _ranks_from_first_hits(np.atleast_2d(first_hits))


def _check_equal_sparsity(q: int, profile: Optional[SparsityProfile]) -> None:
    if profile is None:
        return
    if not profile.equal_sparsity:
        raise ValueError(
            f"Rows have unequal sparsity (q in [{profile.q_min}, {profile.q_max}]); "
            "pad the design with pad_equal_sparsity or use the scaled oracles."
        )
    if profile.q_max != q:
        raise ValueError(f"Rows have sparsity {profile.q_max} but q={q} was passed.")


def oracle_b_main(
    beta: np.ndarray,
    e: HashEnsemble,
    q: int,
    variant: Optional[str] = None,
    profile: Optional[SparsityProfile] = None,
) -> OracleCoefficients:
    """
    Unbiased oracle coefficients for a main effects signal X beta.

    Random-sign hashing uses b_l = (q / L) sum_k beta_k Psi_kl w_(pi_l(k)).
    Shuffled b-bit hashing uses, for code c of block l,
    b_lc = (q / L) sum_k beta_k w_(pi_l(k)) (1{phi_l(pi_l(k)) = c} - nu) / (1 - nu)
    with nu = 2^(-b).

    Parameters
    ----------
    beta :
        Coefficients of the signal on the original p columns.
    e :
        Hashing ensemble with explicit ranks.
    q :
        Common row sparsity of the design.
    variant :
        Hashing variant, the ensemble's one if None.
    profile :
        Optional sparsity profile, checked for equal sparsity q.

    Returns
    -------
    oracle :
        Oracle coefficients of length L (random-sign) or 2^b L (b-bit).
    """
    variant = e.config.variant if variant is None else variant
    _check_equal_sparsity(q, profile)
    if not e.has_ranks:
        raise ValueError("Main effect oracles need an ensemble with explicit ranks.")
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (e.p,):
        raise ValueError(f"beta must have length {e.p}, got shape {beta.shape}.")

    n_permutations = e.n_permutations
    w = weight_vector_main(e.p, q).w
    rank_weights = w[e.ranks - 1]

    if variant == RANDOM_SIGN_NAME:
        if e.signs is None:
            raise ValueError("Random-sign oracles need an ensemble with signs.")
        b_star = (q / n_permutations) * np.einsum("k,kl,lk->l", beta, e.signs, rank_weights)

    elif variant == BBIT_SHUFFLED_NAME:
        if e.shuffle_maps is None:
            raise ValueError("Shuffled b-bit oracles need an ensemble with shuffle maps.")
        n_codes = e.config.n_codes
        nu = 1 / n_codes
        codes = np.take_along_axis(e.shuffle_maps, e.ranks - 1, axis=1)
        weighted = beta[None, :] * rank_weights
        flat_cols = np.arange(n_permutations)[:, None] * n_codes + codes
        code_sums = np.bincount(
            flat_cols.ravel(), weights=weighted.ravel(), minlength=n_permutations * n_codes
        ).reshape(n_permutations, n_codes)
        block_sums = weighted.sum(axis=1)[:, None]
        b_star = ((q / n_permutations) * (code_sums - nu * block_sums) / (1 - nu)).ravel()

    elif variant == BBIT_PLAIN_NAME:
        raise ValueError(
            f"No unbiased oracle exists for '{BBIT_PLAIN_NAME}'; use '{BBIT_SHUFFLED_NAME}'."
        )
    else:
        raise ValueError(f"Unknown hashing variant '{variant}'.")

    return OracleCoefficients(b_star=b_star, variant=variant)


def oracle_b_scaled(
    beta: np.ndarray,
    weights: WeightVector,
    first_hits: np.ndarray,
    signs: np.ndarray,
    profile: Optional[SparsityProfile] = None,
) -> OracleCoefficients:
    """
    Oracle coefficients b_l = (1 / L) sum_k beta_k Psi_kl w_(g_l(k)) for row-scaled signals.

    Parameters
    ----------
    beta :
        Coefficients on the original columns.
    weights :
        Scaled weights (full Taylor, truncated or geometric).
    first_hits :
        (L, p) first hit times g_l(k), whose ranks define the permutations
        the paired hashed matrix must be computed from.
    signs :
        (p, L) random signs.
    profile :
        Sparsity profile of the design, required by full Taylor weights.

    Returns
    -------
    oracle :
        Random-sign oracle coefficients of length L.
    """
    beta = np.asarray(beta, dtype=float)
    first_hits = np.atleast_2d(first_hits)
    n_permutations, p = first_hits.shape
    if beta.shape != (p,) or signs.shape != (p, n_permutations):
        raise ValueError(
            f"Shapes disagree: beta {beta.shape}, first hits {first_hits.shape}, signs {signs.shape}."
        )

    if weights.kind == TAYLOR_FULL_NAME:
        if profile is None:
            raise ValueError("Full Taylor weights need the design's sparsity profile.")
        reach = max(float(profile.delta_per_row.max()), 1 / math.sqrt(p))
        if reach >= POWER_SCALING_RADIUS:
            raise ValueError(
                f"Taylor series radius {POWER_SCALING_RADIUS} does not exceed "
                f"max(max delta_i, 1/sqrt(p)) = {reach}."
            )

    hit_weights = weights.at(first_hits)
    b_star = np.einsum("k,kl,lk->l", beta, signs, hit_weights) / n_permutations

    return OracleCoefficients(b_star=b_star, variant=RANDOM_SIGN_NAME)


def scaled_signal(
    X: SparseMatrix, beta: np.ndarray, a: float = 0.0, delta_ref: float = 1.0
) -> np.ndarray:
    """
    Row-scaled signal kappa(delta_i) x_i^T beta with kappa(delta) = (delta_ref / delta)^a.

    a = 0 gives the unscaled signal, a = 1/2 the l2-style and a = 1 the
    l1-style scaling. Empty rows give zero.
    """
    signal = X.dot(beta)
    delta = X.row_nnz / X.n_cols
    kappa = np.zeros(X.n_rows)
    non_empty = delta > 0
    kappa[non_empty] = (delta_ref / delta[non_empty]) ** a
    return kappa * signal


@dataclass(frozen=True, eq=False)
class InteractionModelSpec:
    """
    Main effect and pairwise interaction coefficients.

    The signal of row i is
    f_i = sum_k X_ik theta1_k + sum_(k, k1) X_ik 1{X_ik1 = 0} theta2_(k, k1),
    where theta2 is a p x p sparse matrix with zero diagonal.
    """

    theta1: np.ndarray
    theta2: sp.csr_matrix

    def __post_init__(self):
        theta1 = np.asarray(self.theta1, dtype=float)
        theta2 = sp.csr_matrix(self.theta2, dtype=float)
        theta2.eliminate_zeros()
        p = len(theta1)
        if theta2.shape != (p, p):
            raise ValueError(f"theta2 must have shape ({p}, {p}), got {theta2.shape}.")
        if np.any(theta2.diagonal() != 0):
            raise ValueError("Interaction coefficients must have a zero diagonal.")
        if not (np.all(np.isfinite(theta1)) and np.all(np.isfinite(theta2.data))):
            raise ValueError("Interaction model coefficients must be finite.")
        object.__setattr__(self, "theta1", theta1)
        object.__setattr__(self, "theta2", theta2)

    @classmethod
    def from_triples(
        cls, theta1: np.ndarray, triples: Sequence[Tuple[int, int, float]]
    ) -> "InteractionModelSpec":
        p = len(theta1)
        if len(triples) == 0:
            return cls(theta1=theta1, theta2=sp.csr_matrix((p, p)))
        rows, cols, values = zip(*triples)
        return cls(theta1=theta1, theta2=sp.csr_matrix((values, (rows, cols)), shape=(p, p)))

    @property
    def p(self) -> int:
        return len(self.theta1)

    def signal(self, X: SparseMatrix) -> np.ndarray:
        if X.n_cols != self.p:
            raise ValueError(f"Design has {X.n_cols} columns, model has {self.p}.")
        X_csr = X.to_csr()
        support = X_csr.copy()
        support.data[:] = 1.0
        # sum_k X_ik sum_k1 theta2_kk1 minus the pairs whose k1 is non-zero in row i:
        all_pairs = X_csr @ np.asarray(self.theta2.sum(axis=1)).ravel()
        active_pairs = np.asarray(X_csr.multiply(support @ self.theta2.T).sum(axis=1)).ravel()
        return X_csr @ self.theta1 + all_pairs - active_pairs


def interaction_norm(spec: InteractionModelSpec, p: int, q: int) -> float:
    """
    Norm ||theta1|| + sqrt(2 (2 - q/p) q sum_k (sum_k1 |theta2_kk1|)^2) of an interaction model.
    """
    row_abs_sums = np.asarray(abs(spec.theta2).sum(axis=1)).ravel()
    return float(
        np.linalg.norm(spec.theta1)
        + math.sqrt(2 * (2 - q / p) * q * float(row_abs_sums @ row_abs_sums))
    )


def interaction_weights(p: int, q: int) -> Tuple[WeightVector, WeightVector]:
    """
    Main effect and interaction weight rows.

    The interaction row is W2_l = r_l / sum_(l' >= 2) (l' - 1) r_l'^2 with
    r_l = C(p - l, q - 1) / C(p - 1, q), and W2_1 = 0.

    Parameters
    ----------
    p :
        Number of columns, at least 3.
    q :
        Common row sparsity, at most p - 1.

    Returns
    -------
    w1 :
        Main effect weights.
    w2 :
        Interaction weights.
    """
    if p < 3:
        raise ValueError(f"Interaction weights need p >= 3, got p={p}.")
    if not 1 <= q <= p - 1:
        raise ValueError(f"Interaction weights need 1 <= q <= p - 1, got q={q}, p={p}.")

    # r_l shares the ratio recurrence of P(M = l), starting from r_1 = q / (p - q).
    ratios = marginal_M_pmf(p, q) * p / (p - q)
    ell = np.arange(1, p + 1)
    normalizer = np.sum((ell[1:] - 1) * ratios[1:] ** 2)
    w2 = np.where(ell >= 2, ratios / normalizer, 0.0)

    return weight_vector_main(p, q), WeightVector(w=w2, kind=INTERACTION_ORACLE_NAME, p=p)


def oracle_b_interaction(
    spec: InteractionModelSpec,
    e: HashEnsemble,
    q: int,
    profile: Optional[SparsityProfile] = None,
) -> OracleCoefficients:
    """
    Random-sign oracle coefficients for an interaction model.

    The main effect part follows the main oracle with theta1. The
    interaction part is
    b2_l = (p q / L) sum_k Psi_kl W2_(pi_l(k)) sum_k1 theta2_kk1 1{pi_l(k1) < pi_l(k)}.
    """
    _check_equal_sparsity(q, profile)
    if not e.has_ranks or e.signs is None:
        raise ValueError("Interaction oracles need an ensemble with explicit ranks and signs.")
    if spec.p != e.p:
        raise ValueError(f"Model has {spec.p} columns, ensemble has {e.p}.")
    p, n_permutations = e.p, e.n_permutations
    _, w2 = interaction_weights(p, q)

    b_main = oracle_b_main(spec.theta1, e, q, variant=RANDOM_SIGN_NAME).b_star

    theta2 = spec.theta2.tocoo()
    ks, k1s, values = theta2.row, theta2.col, theta2.data
    rank_k = e.ranks[:, ks]
    rank_k1 = e.ranks[:, k1s]
    terms = values[None, :] * (rank_k1 < rank_k) * w2.w[rank_k - 1] * e.signs[ks, :].T
    b_interaction = (p * q / n_permutations) * terms.sum(axis=1)

    return OracleCoefficients(
        b_star=b_main + b_interaction,
        variant=RANDOM_SIGN_NAME,
        b_main=b_main,
        b_interaction=b_interaction,
    )
