import numpy as np
import pytest

from minhashreg.sparse import SparseMatrix

DEFAULT_SEED = 1234


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: long Monte Carlo runs, deselect with '-m \"not slow\"'"
    )


# Supports of the binary toy design, 0-based columns:
TOY_BINARY_SUPPORTS = [[1, 3], [2, 3], [0, 2], [1, 2], [0, 1]]

# Values of the real-valued toy design, 0-based columns:
TOY_REAL_ROWS = [
    {1: 7.0, 3: 9.0},
    {2: 1.0, 3: 4.0},
    {0: 1.0, 2: 2.0},
    {1: 6.0, 2: 1.0},
    {0: 8.0, 1: 5.0},
]

# Single permutation pi = (2, 3, 1, 4), ie. ranks of columns 1..4:
TOY_RANKS = np.array([[2, 3, 1, 4]])
TOY_SIGNS = np.array([[1], [-1], [-1], [1]])


@pytest.fixture
def toy_binary_design():
    return SparseMatrix.from_rows(
        [{k: 1.0 for k in support} for support in TOY_BINARY_SUPPORTS], n_cols=4
    )


@pytest.fixture
def toy_real_design():
    return SparseMatrix.from_rows(TOY_REAL_ROWS, n_cols=4, bounded=False)


@pytest.fixture
def toy_ranks():
    return TOY_RANKS.copy()


@pytest.fixture
def toy_signs():
    return TOY_SIGNS.copy()


@pytest.fixture
def dummy_equal_sparsity_design():
    rng = np.random.default_rng(DEFAULT_SEED)
    n, p, q = 20, 30, 5
    rows = [{int(k): 1.0 for k in rng.choice(p, size=q, replace=False)} for _ in range(n)]
    return SparseMatrix.from_rows(rows, n_cols=p)


@pytest.fixture
def dummy_real_design():
    rng = np.random.default_rng(DEFAULT_SEED)
    n, p, q = 25, 40, 6
    rows = []
    for _ in range(n):
        support = rng.choice(p, size=q, replace=False)
        values = rng.uniform(0.1, 1.0, size=q) * rng.choice([-1, 1], size=q)
        rows.append({int(k): float(v) for k, v in zip(support, values)})
    return SparseMatrix.from_rows(rows, n_cols=p)


@pytest.fixture
def dummy_regression_data():
    rng = np.random.default_rng(DEFAULT_SEED)
    n, n_cols = 60, 8
    S = rng.standard_normal((n, n_cols))
    b_true = rng.standard_normal(n_cols)
    y = 0.5 + S @ b_true + 0.1 * rng.standard_normal(n)
    return S, y, b_true


@pytest.fixture
def dummy_scenario_text():
    return "\n".join(
        [
            "# small binary scenario",
            "name = small",
            "n = 40",
            "p = 60",
            "q = 6",
            "rho = 0.2",
            "sigma = 0.5",
            "seed = 7",
            "",
        ]
    )
