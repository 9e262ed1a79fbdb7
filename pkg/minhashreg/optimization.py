import logging
import math
import time

import numpy as np

logger = logging.getLogger(__name__)

# Hard coded search range for the number of retained bits:
MAX_SEARCHED_BITS = 24


class RuntimeTracker:
    """
    Wall-clock timer that can be paused, eg. while writing artifacts.
    """

    def __init__(self):
        self.start_time = time.perf_counter()
        self.runtime = 0.0
        self.paused = False

    def _elapsed_runtime(self) -> float:
        return abs(time.perf_counter() - self.start_time)

    def pause_runtime(self):
        if not self.paused:
            self.runtime = self.runtime + self._elapsed_runtime()
            self.paused = True

    def resume_runtime(self):
        self.start_time = time.perf_counter()
        self.paused = False

    def return_runtime(self) -> float:
        if self.paused:
            return self.runtime
        return self.runtime + self._elapsed_runtime()


def bits_objective(bits: np.ndarray, sparsity: float, approximate: bool = False) -> np.ndarray:
    """
    Approximation error factor of b-bit hashing at a fixed L b budget.

    With L = c / b, the error bound scales with
    b (1 + (2^b - 2)(2 - delta) delta) / (2^b - 1), or with
    b (2^(-b-1) + delta) under the cruder approximation.
    """
    bits = np.asarray(bits, dtype=float)
    if approximate:
        return bits * (2.0 ** (-bits - 1) + sparsity)
    n_codes = 2.0**bits
    return bits * (1 + (n_codes - 2) * (2 - sparsity) * sparsity) / (n_codes - 1)


def optimal_bits(sparsity: float, approximate: bool = False) -> int:
    """
    Number of bits minimizing the approximation error at a fixed storage budget.

    Parameters
    ----------
    sparsity :
        Row sparsity q / p of the design, in (0, 1].
    approximate :
        Whether to minimize the approximate objective instead of the
        exact bound-derived one.

    Returns
    -------
    bits :
        Optimal b in [1, 24].
    """
    if not 0 < sparsity <= 1:
        raise ValueError(f"Sparsity must lie in (0, 1], got {sparsity}.")
    candidate_bits = np.arange(1, MAX_SEARCHED_BITS + 1)
    objective = bits_objective(candidate_bits, sparsity, approximate=approximate)
    bits = int(candidate_bits[np.argmin(objective)])
    logger.debug(f"Optimal bits for sparsity {sparsity}: {bits}")

    return bits


def optimal_permutation_count(
    n: int, p: int, q: int, sigma: float, coefficient_norm: float
) -> float:
    """
    Compressed dimension L* = sqrt((2 - q/p) q n) ||beta|| / sigma.

    Balances the approximation error against the estimation error of a
    least squares fit on the compressed design. Passing the interaction
    norm instead of ||beta|| gives the interaction model's L*.
    """
    if sigma < 0:
        raise ValueError(f"Noise level must be non-negative, got {sigma}.")
    if sigma == 0:
        return math.inf
    return math.sqrt((2 - q / p) * q * n) * coefficient_norm / sigma
