import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from minhashreg.config import (
    BBIT_PLAIN_NAME,
    BBIT_SHUFFLED_NAME,
    BBIT_VARIANTS,
    FISHER_YATES_NAME,
    HASHING_VARIANTS,
    MAX_BITS,
    PERMUTATION_MODES,
    PERMUTATION_STREAM,
    PROJECTION_STREAM,
    RANDOM_SIGN_NAME,
    SCORE_KEY_STREAM,
    SHUFFLE_STREAM,
    SIGN_STREAM,
)
from minhashreg.sparse import SparseMatrix
from minhashreg.utils import spawn_generator

logger = logging.getLogger(__name__)

# Hard coded number of permutations processed per vectorized chunk:
PERMUTATION_CHUNK_SIZE = 256

EMPTY_ROW_INDEX = -1
EMPTY_ROW_RANK = 0

_GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX_MULTIPLIER_1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX_MULTIPLIER_2 = np.uint64(0x94D049BB133111EB)


class IncompatibleDataError(ValueError):
    """Raised when data or hashing state cannot feed the requested variant."""


@dataclass(frozen=True)
class HashConfig:
    """
    Settings of one min-wise hashing run.

    Parameters
    ----------
    n_permutations :
        Number L of permutations, ie. blocks of columns in S.
    bits :
        Number b of retained bits, read by the b-bit variants only.
    variant :
        One of the hashing variant names in config.
    permutation_mode :
        Either explicit Fisher-Yates permutations or keyed 64-bit scores.
    seed :
        Run seed, every random draw of the ensemble is keyed on it.
    """

    n_permutations: int
    bits: int = 1
    variant: str = RANDOM_SIGN_NAME
    permutation_mode: str = FISHER_YATES_NAME
    seed: int = 0

    def __post_init__(self):
        if self.n_permutations < 1:
            raise ValueError(
                f"Number of permutations must be at least 1, got {self.n_permutations}."
            )
        if not 1 <= self.bits <= MAX_BITS:
            raise ValueError(f"Bits must lie in [1, {MAX_BITS}], got {self.bits}.")
        if self.variant not in HASHING_VARIANTS:
            raise ValueError(
                f"Variant must be one of {HASHING_VARIANTS}, got '{self.variant}'."
            )
        if self.permutation_mode not in PERMUTATION_MODES:
            raise ValueError(
                f"Permutation mode must be one of {PERMUTATION_MODES}, "
                f"got '{self.permutation_mode}'."
            )
        if self.seed < 0:
            raise ValueError(f"Seed must be non-negative, got {self.seed}.")

    @property
    def n_codes(self) -> int:
        return 2**self.bits

    @property
    def n_output_columns(self) -> int:
        if self.variant in BBIT_VARIANTS:
            return self.n_codes * self.n_permutations
        return self.n_permutations


@dataclass(frozen=True, eq=False)
class HashEnsemble:
    """
    Randomness shared by every row hashed under one configuration.

    ranks[l, k] is the 1-based position pi_l(k + 1) of 0-based column k
    under permutation l. signs[k, l] is the random sign Psi of column k
    in block l, and shuffle_maps[l, r - 1] is the random code assigned to
    rank r in block l. In hashed score mode ranks are only present when
    materialized, otherwise columns compete on keyed 64-bit scores.
    """

    config: HashConfig
    p: int
    ranks: Optional[np.ndarray] = None
    signs: Optional[np.ndarray] = None
    shuffle_maps: Optional[np.ndarray] = None
    score_keys: Optional[np.ndarray] = None

    @property
    def n_permutations(self) -> int:
        return self.config.n_permutations

    @property
    def has_ranks(self) -> bool:
        return self.ranks is not None

    def scores(self, permutation_idxs: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """
        Keyed 64-bit scores of columns, one row per permutation index.
        """
        if self.score_keys is None:
            raise ValueError("Scores are only available in hashed score mode.")
        keys = self.score_keys[np.asarray(permutation_idxs)][:, None]
        mixed = keys ^ (np.asarray(cols, dtype=np.uint64)[None, :] + np.uint64(1)) * _GOLDEN_GAMMA
        return _splitmix64(mixed)

    def inverse_ranks(self) -> np.ndarray:
        """Column with rank r in permutation l, at position [l, r - 1]."""
        if self.ranks is None:
            raise ValueError("Ensemble ranks were not materialized.")
        return np.argsort(self.ranks, axis=1)


@dataclass(frozen=True, eq=False)
class HashOutput:
    """
    Result of hashing a design.

    H holds 0-based winning columns (-1 for empty rows) and M the
    winning ranks (0 for empty rows), or raw winning scores when ranks
    were not materialized. S is a sparse binary matrix for the b-bit
    variants and a dense real matrix for random-sign hashing.
    """

    H: np.ndarray
    M: np.ndarray
    S: Union[np.ndarray, sp.csr_matrix]
    variant: str
    ranks_materialized: bool = True
    second_H: Optional[np.ndarray] = None
    second_S: Optional[np.ndarray] = None


def _splitmix64(values: np.ndarray) -> np.ndarray:
    z = values + _GOLDEN_GAMMA
    z = (z ^ (z >> np.uint64(30))) * _MIX_MULTIPLIER_1
    z = (z ^ (z >> np.uint64(27))) * _MIX_MULTIPLIER_2
    return z ^ (z >> np.uint64(31))


def _validate_ranks(ranks: np.ndarray, n_permutations: int, p: int) -> np.ndarray:
    ranks = np.atleast_2d(np.asarray(ranks, dtype=np.int64))
    if ranks.shape != (n_permutations, p):
        raise ValueError(
            f"Injected ranks must have shape ({n_permutations}, {p}), got {ranks.shape}."
        )
    expected = np.arange(1, p + 1)
    for l, row in enumerate(ranks):
        if not np.array_equal(np.sort(row), expected):
            raise ValueError(f"Injected ranks of permutation {l} are not a permutation of 1..{p}.")
    return ranks


def build_ensemble(
    config: HashConfig,
    p: int,
    ranks: Optional[np.ndarray] = None,
    signs: Optional[np.ndarray] = None,
    shuffle_maps: Optional[np.ndarray] = None,
    materialize_ranks: bool = False,
) -> HashEnsemble:
    """
    Draw the permutations, signs and shuffle maps of a hashing run.

    Permutation l, sign column l and shuffle map l each come from their
    own keyed sub-stream, so the ensemble does not depend on the order
    blocks are generated in.

    Parameters
    ----------
    config :
        Hashing configuration.
    p :
        Number of columns of the designs to be hashed.
    ranks :
        Optional (L, p) injected 1-based ranks, replacing random permutations.
    signs :
        Optional (p, L) injected signs in {-1, +1}.
    shuffle_maps :
        Optional (L, p) injected codes in [0, 2^b), indexed by rank - 1.
    materialize_ranks :
        In hashed score mode, whether to also compute the rank of every
        column from its score (needed by the b-bit variants).

    Returns
    -------
    ensemble :
        Hashing ensemble.
    """
    if p < 1:
        raise ValueError(f"Number of columns must be at least 1, got {p}.")
    n_permutations = config.n_permutations

    if config.variant in BBIT_VARIANTS and config.n_codes > p:
        logger.warning(
            f"2^b = {config.n_codes} exceeds p = {p}; some codes can never be hit."
        )

    score_keys = None
    if ranks is not None:
        ranks = _validate_ranks(ranks, n_permutations, p)
    elif config.permutation_mode == FISHER_YATES_NAME:
        ranks = np.empty((n_permutations, p), dtype=np.int64)
        for l in range(n_permutations):
            rng = spawn_generator(config.seed, PERMUTATION_STREAM, l)
            ranks[l] = rng.permutation(p) + 1
    else:
        score_keys = np.array(
            [
                spawn_generator(config.seed, SCORE_KEY_STREAM, l).integers(
                    0, 2**64, dtype=np.uint64
                )
                for l in range(n_permutations)
            ],
            dtype=np.uint64,
        )

    if signs is not None:
        signs = np.asarray(signs, dtype=np.int8).reshape(p, n_permutations)
        if not np.all(np.abs(signs) == 1):
            raise ValueError("Injected signs must all be -1 or +1.")
    elif config.variant == RANDOM_SIGN_NAME:
        signs = np.empty((p, n_permutations), dtype=np.int8)
        for l in range(n_permutations):
            rng = spawn_generator(config.seed, SIGN_STREAM, l)
            signs[:, l] = 2 * rng.integers(0, 2, size=p) - 1

    if shuffle_maps is not None:
        shuffle_maps = np.asarray(shuffle_maps, dtype=np.int64).reshape(n_permutations, p)
        if shuffle_maps.min() < 0 or shuffle_maps.max() >= config.n_codes:
            raise ValueError(f"Injected shuffle maps must take values in [0, {config.n_codes}).")
    elif config.variant == BBIT_SHUFFLED_NAME:
        shuffle_maps = np.empty((n_permutations, p), dtype=np.int64)
        for l in range(n_permutations):
            rng = spawn_generator(config.seed, SHUFFLE_STREAM, l)
            shuffle_maps[l] = rng.integers(0, config.n_codes, size=p)

    ensemble = HashEnsemble(
        config=config,
        p=p,
        ranks=ranks,
        signs=signs,
        shuffle_maps=shuffle_maps,
        score_keys=score_keys,
    )
    if ranks is None and materialize_ranks:
        ensemble = materialize_score_ranks(ensemble)
    logger.debug(
        f"Built {config.variant} ensemble with L={n_permutations}, p={p}, "
        f"mode={config.permutation_mode}."
    )

    return ensemble


def materialize_score_ranks(ensemble: HashEnsemble) -> HashEnsemble:
    """
    Convert keyed scores into explicit ranks, ties going to the smaller column.
    """
    if ensemble.has_ranks:
        return ensemble
    all_cols = np.arange(ensemble.p)
    ranks = np.empty((ensemble.n_permutations, ensemble.p), dtype=np.int64)
    for l in range(ensemble.n_permutations):
        column_scores = ensemble.scores(np.array([l]), all_cols)[0]
        order = np.argsort(column_scores, kind="stable")
        ranks[l, order] = np.arange(1, ensemble.p + 1)
    return HashEnsemble(
        config=ensemble.config,
        p=ensemble.p,
        ranks=ranks,
        signs=ensemble.signs,
        shuffle_maps=ensemble.shuffle_maps,
        score_keys=ensemble.score_keys,
    )


def _entry_keys(X: SparseMatrix, e: HashEnsemble, permutation_idxs: np.ndarray) -> np.ndarray:
    if e.has_ranks:
        return e.ranks[permutation_idxs][:, X.col_indices]
    return e.scores(permutation_idxs, X.col_indices)


def _first_argmin(
    keys: np.ndarray, starts: np.ndarray, counts: np.ndarray, nnz: int
) -> Tuple[np.ndarray, np.ndarray]:
    # Position of the first minimal key within each row segment; columns
    # increase within a row so the first minimum is the smallest column.
    row_mins = np.minimum.reduceat(keys, starts, axis=1)
    is_min = keys == np.repeat(row_mins, counts, axis=1)
    candidates = np.where(is_min, np.arange(nnz)[None, :], nnz)
    return row_mins, np.minimum.reduceat(candidates, starts, axis=1)


def _check_compatible(X: SparseMatrix, e: HashEnsemble) -> None:
    if X.n_cols != e.p:
        raise IncompatibleDataError(
            f"Design has {X.n_cols} columns but the ensemble was built for p = {e.p}."
        )


def min_hash(X: SparseMatrix, e: HashEnsemble) -> Tuple[np.ndarray, np.ndarray]:
    """
    Compute the winning columns H and winning ranks M of every row.

    Parameters
    ----------
    X :
        Design matrix.
    e :
        Hashing ensemble built for X's number of columns.

    Returns
    -------
    H :
        (n, L) 0-based column of the smallest rank among each row's
        non-zeros, -1 for empty rows.
    M :
        (n, L) rank of that column, 0 for empty rows. Without
        materialized ranks, the winning uint64 score instead.
    """
    _check_compatible(X, e)
    n_permutations = e.n_permutations
    key_dtype = np.int64 if e.has_ranks else np.uint64

    H = np.full((X.n_rows, n_permutations), EMPTY_ROW_INDEX, dtype=np.int64)
    M = np.full((X.n_rows, n_permutations), EMPTY_ROW_RANK, dtype=key_dtype)

    counts = X.row_nnz
    non_empty = np.flatnonzero(counts > 0)
    if len(non_empty) < X.n_rows:
        logger.debug(f"{X.n_rows - len(non_empty)} empty rows hashed to the empty sentinel.")
    if len(non_empty) == 0:
        return H, M
    starts = X.row_offsets[non_empty]
    counts = counts[non_empty]

    for chunk_start in range(0, n_permutations, PERMUTATION_CHUNK_SIZE):
        permutation_idxs = np.arange(
            chunk_start, min(chunk_start + PERMUTATION_CHUNK_SIZE, n_permutations)
        )
        keys = _entry_keys(X, e, permutation_idxs)
        row_mins, winners = _first_argmin(keys, starts, counts, X.nnz)
        H[non_empty[:, None], permutation_idxs[None, :]] = X.col_indices[winners].T
        M[non_empty[:, None], permutation_idxs[None, :]] = row_mins.T

    return H, M


def bbit_codes(M: np.ndarray, e: HashEnsemble) -> np.ndarray:
    """
    Residue codes of the winning ranks, the last b bits of M.

    Plain hashing reads M mod 2^b and shuffled hashing the block's random
    map at M. Empty rows receive the sentinel code 2^b. Codes are stored
    in the smallest unsigned dtype holding 2^b.
    """
    config = e.config
    if config.variant not in BBIT_VARIANTS:
        raise ValueError(f"Codes are only defined for {BBIT_VARIANTS}, not '{config.variant}'.")
    if not e.has_ranks or not np.issubdtype(M.dtype, np.signedinteger):
        raise IncompatibleDataError(
            "b-bit codes need materialized ranks; build the ensemble in "
            f"'{FISHER_YATES_NAME}' mode or with materialize_ranks=True."
        )

    empty = M == EMPTY_ROW_RANK
    if config.variant == BBIT_PLAIN_NAME:
        codes = M % config.n_codes
    else:
        safe_ranks = np.where(empty, 1, M)
        codes = e.shuffle_maps[np.arange(e.n_permutations)[None, :], safe_ranks - 1]
    codes = np.where(empty, config.n_codes, codes)

    return codes.astype(np.min_scalar_type(config.n_codes))


def expand_codes(codes: np.ndarray, bits: int) -> sp.csr_matrix:
    """
    One-hot expand (n, L) residue codes into the binary (n, 2^b L) matrix S.

    Block l occupies columns l 2^b to (l + 1) 2^b - 1 and code c sets
    column l 2^b + c. Sentinel codes (2^b) leave their block empty.
    """
    n_codes = 2**bits
    n_rows, n_permutations = codes.shape
    codes = codes.astype(np.int64)
    hit = codes < n_codes
    rows, blocks = np.nonzero(hit)
    cols = blocks * n_codes + codes[rows, blocks]

    return sp.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(n_rows, n_codes * n_permutations)
    )


def expand_bbit(M: np.ndarray, e: HashEnsemble) -> sp.csr_matrix:
    return expand_codes(bbit_codes(M, e), e.config.bits)


def _values_at(X: SparseMatrix, H: np.ndarray) -> np.ndarray:
    # Entry X[i, H[i, l]] for every (i, l) with H[i, l] >= 0, zero otherwise.
    if X.nnz == 0:
        return np.zeros(H.shape)
    entry_keys = X.row_ids() * X.n_cols + X.col_indices
    safe_H = np.where(H >= 0, H, 0)
    query_keys = np.arange(X.n_rows)[:, None] * X.n_cols + safe_H
    positions = np.clip(np.searchsorted(entry_keys, query_keys), 0, X.nnz - 1)
    return np.where(H >= 0, X.values[positions], 0.0)


def random_sign_matrix(X: SparseMatrix, H: np.ndarray, e: HashEnsemble) -> np.ndarray:
    """
    Random-sign compressed matrix with S[i, l] = Psi[H[i, l], l] X[i, H[i, l]].

    Empty rows produce zero rows.
    """
    if e.signs is None:
        raise ValueError("Random-sign hashing needs an ensemble with signs.")
    safe_H = np.where(H >= 0, H, 0)
    block_signs = e.signs[safe_H, np.arange(e.n_permutations)[None, :]]

    return block_signs * _values_at(X, H)


def second_min_hash(
    X: SparseMatrix, e: HashEnsemble, H: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Runner-up columns and their random-sign values.

    Parameters
    ----------
    X :
        Design matrix.
    e :
        Ensemble that produced H.
    H :
        Winning columns of X under e.

    Returns
    -------
    second_H :
        (n, L) column with the second smallest rank among each row's
        non-zeros, -1 for rows with fewer than two non-zeros.
    second_S :
        (n, L) values Psi[second_H, l] X[i, second_H], zero where the
        row has no runner-up.
    """
    _check_compatible(X, e)
    if e.signs is None:
        raise ValueError("Second minimum values need an ensemble with signs.")
    n_permutations = e.n_permutations
    second_H = np.full((X.n_rows, n_permutations), EMPTY_ROW_INDEX, dtype=np.int64)

    counts = X.row_nnz
    non_empty = np.flatnonzero(counts > 0)
    # Rows with a single non-zero have no runner-up.
    has_runner_up = counts[non_empty] > 1
    eligible = non_empty[has_runner_up]
    if len(eligible) > 0:
        starts = X.row_offsets[non_empty]
        row_ids = X.row_ids()
        for chunk_start in range(0, n_permutations, PERMUTATION_CHUNK_SIZE):
            permutation_idxs = np.arange(
                chunk_start, min(chunk_start + PERMUTATION_CHUNK_SIZE, n_permutations)
            )
            keys = _entry_keys(X, e, permutation_idxs)
            winner_cols = H[row_ids][:, permutation_idxs].T
            is_winner = X.col_indices[None, :] == winner_cols
            keys = np.where(is_winner, np.iinfo(keys.dtype).max, keys)
            _, runners_up = _first_argmin(keys, starts, counts[non_empty], X.nnz)
            second_H[eligible[:, None], permutation_idxs[None, :]] = X.col_indices[
                runners_up[:, has_runner_up]
            ].T

    return second_H, random_sign_matrix(X, second_H, e)


def hash_design(
    X: SparseMatrix, e: HashEnsemble, with_second_min: bool = False
) -> HashOutput:
    """
    Run the full hashing pipeline of the ensemble's variant on a design.
    """
    variant = e.config.variant
    if variant in BBIT_VARIANTS and not X.is_binary:
        raise IncompatibleDataError(
            f"Variant '{variant}' needs a binary design; binarize it or use random-sign hashing."
        )
    H, M = min_hash(X, e)
    if variant in BBIT_VARIANTS:
        S = expand_bbit(M, e)
    else:
        S = random_sign_matrix(X, H, e)

    second_H, second_S = None, None
    if with_second_min:
        second_H, second_S = second_min_hash(X, e, H)
    logger.debug(f"Hashed {X.n_rows}x{X.n_cols} design into S of shape {S.shape}.")

    return HashOutput(
        H=H,
        M=M,
        S=S,
        variant=variant,
        ranks_materialized=e.has_ranks,
        second_H=second_H,
        second_S=second_S,
    )


def random_projection(X: SparseMatrix, n_components: int, seed: int) -> np.ndarray:
    """
    Gaussian random projection S = X A.

    Column j of A is drawn from its own keyed sub-stream, so the first
    columns of the output do not depend on how many are requested.

    Parameters
    ----------
    X :
        Design matrix.
    n_components :
        Number L of projected columns.
    seed :
        Run seed.

    Returns
    -------
    S :
        Dense (n, L) projected design.
    """
    if n_components < 1:
        raise ValueError(f"Number of components must be at least 1, got {n_components}.")
    A = projection_matrix(X.n_cols, n_components, seed)
    return np.asarray(X.to_csr() @ A)


def projection_matrix(p: int, n_components: int, seed: int) -> np.ndarray:
    return np.column_stack(
        [
            spawn_generator(seed, PROJECTION_STREAM, j).standard_normal(p)
            for j in range(n_components)
        ]
    )
