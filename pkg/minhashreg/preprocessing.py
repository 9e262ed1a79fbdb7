import logging
from typing import Tuple

import numpy as np

from minhashreg.sparse import SparseMatrix

logger = logging.getLogger(__name__)


def rescale_values(X: SparseMatrix) -> Tuple[SparseMatrix, float]:
    """
    Divide all values of a design by its largest absolute value.

    Parameters
    ----------
    X :
        Design matrix, possibly with entries outside [-1, 1].

    Returns
    -------
    X_rescaled :
        Bounded design with max |v| = 1 (unchanged if X is all zeros).
    scale :
        Factor the values were divided by.
    """
    scale = X.max_abs
    if scale == 0:
        return X.with_values(X.values, bounded=True), 1.0
    logger.debug(f"Rescaling design values by {scale}.")

    return X.with_values(X.values / scale, bounded=True), scale


def clip_values(X: SparseMatrix) -> SparseMatrix:
    """
    Map values through v / max|v| so that the design satisfies ||X||_inf <= 1.

    Designs that already satisfy the bound are returned as bounded copies
    without rescaling.
    """
    if X.max_abs <= 1:
        return X.with_values(X.values, bounded=True)
    X_clipped, _ = rescale_values(X)
    return X_clipped


def binarize(X: SparseMatrix) -> SparseMatrix:
    """
    Set every stored non-zero of a design to one.
    """
    return X.with_values(np.ones(X.nnz), bounded=True)


def is_within_unit_bound(X: SparseMatrix) -> bool:
    return X.max_abs <= 1
