import numpy as np
import pytest

from minhashreg.preprocessing import binarize, clip_values, is_within_unit_bound, rescale_values
from minhashreg.sparse import SparseMatrix


def test_rescale_values(toy_real_design):
    X, scale = rescale_values(toy_real_design)

    assert scale == 9.0
    assert X.bounded
    assert X.max_abs == 1.0
    assert np.allclose(X.toarray() * scale, toy_real_design.toarray())


def test_rescale_values__empty_design():
    X = SparseMatrix.from_rows([{}, {}], n_cols=3)

    X_rescaled, scale = rescale_values(X)

    assert scale == 1.0
    assert X_rescaled.nnz == 0


@pytest.mark.parametrize("unbounded", [True, False])
def test_clip_values(toy_real_design, toy_binary_design, unbounded):
    X = toy_real_design if unbounded else toy_binary_design

    X_clipped = clip_values(X)

    assert X_clipped.bounded
    assert is_within_unit_bound(X_clipped)
    if unbounded:
        assert np.allclose(X_clipped.toarray(), toy_real_design.toarray() / 9.0)
    else:
        assert np.array_equal(X_clipped.toarray(), toy_binary_design.toarray())


def test_binarize(toy_real_design):
    X = binarize(toy_real_design)

    assert X.is_binary
    assert X.bounded
    assert np.array_equal(X.col_indices, toy_real_design.col_indices)


def test_is_within_unit_bound(toy_real_design, dummy_real_design):
    assert not is_within_unit_bound(toy_real_design)
    assert is_within_unit_bound(dummy_real_design)
