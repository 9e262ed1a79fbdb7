import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minhashreg.bounds import (
    LOWER_REGIME_NAME,
    UPPER_REGIME_NAME,
    BoundInputs,
    approx_bound_bbit,
    approx_bound_geometric,
    approx_bound_random_sign,
    approx_bound_taylor_full,
    approx_bound_taylor_truncated,
    bound_report,
    concentration_rho,
    concentration_rho2,
    excess_risk_bound,
    geometric_regime_threshold,
    logistic_p_tilde,
    mspe_bound_ols,
    mspe_bound_ridge,
    ridge_radius,
)
from minhashreg.optimization import optimal_permutation_count


def test_approx_bound_random_sign():
    assert approx_bound_random_sign(p=10, q=2, n_permutations=4, coefficient_norm=2.0) == pytest.approx(3.6)


def test_approx_bound_bbit__single_bit_matches_random_sign():
    bbit_bound = approx_bound_bbit(n=10, p=10, q=2, n_permutations=4, bits=1, beta_norm=2.0)

    assert bbit_bound == pytest.approx(approx_bound_random_sign(10, 2, 4, 2.0))


def test_approx_bound_bbit__two_bits():
    bound = approx_bound_bbit(
        n=10, p=10, q=2, n_permutations=4, bits=2, beta_norm=1.0, weighted_column_norm_sq=5.0
    )

    # Column term (4 - 2)(2 - 0.2) 5 / 10 = 1.8 on top of ||beta||^2 = 1.
    assert bound == pytest.approx(1.8 * 2 / (3 * 4) * 2.8)


def test_approx_bound_bbit__missing_column_norms():
    with pytest.raises(ValueError):
        approx_bound_bbit(n=10, p=10, q=2, n_permutations=4, bits=2, beta_norm=1.0)


def test_approx_bound_taylor_full__no_scaling():
    # With a = 0 only the first coefficient is non-zero.
    assert approx_bound_taylor_full(p=10, n_permutations=5, beta_norm=1.0, a=0.0) == pytest.approx(2.0)


def test_approx_bound_taylor_full__grows_with_exponent():
    half = approx_bound_taylor_full(p=10, n_permutations=5, beta_norm=1.0, a=0.5)
    full = approx_bound_taylor_full(p=10, n_permutations=5, beta_norm=1.0, a=1.0)

    assert 2.0 < half < full


@pytest.mark.parametrize(
    "a,expected",
    [
        (0.5, 4 / 100 * math.log(4 * math.log(100) / 0.2)),
        (1.0, 4 / 100 * math.log(200)),
    ],
)
def test_approx_bound_taylor_truncated(a, expected):
    bound = approx_bound_taylor_truncated(a, n_permutations=100, q_min=4, beta_norm=1.0, delta_min=0.2)

    assert bound == pytest.approx(expected)


def test_approx_bound_geometric__regimes():
    kwargs = dict(p=100, delta_bar=0.075, beta_norm=1.0, signal_norm_sq=30.0, n=30, v_delta=0.01)
    threshold = geometric_regime_threshold(**kwargs)

    lower, lower_regime, _ = approx_bound_geometric(n_permutations=16, **kwargs)
    upper, upper_regime, _ = approx_bound_geometric(n_permutations=64, **kwargs)

    assert threshold == pytest.approx(33.75)
    assert lower_regime == LOWER_REGIME_NAME
    assert lower == pytest.approx(6 * 100 * 0.075 / 16)
    assert upper_regime == UPPER_REGIME_NAME
    assert upper == pytest.approx(3 * (100 / 64) ** (2 / 3) * 0.01 ** (1 / 3))


def test_approx_bound_geometric__continuous_at_threshold():
    kwargs = dict(p=100, delta_bar=0.075, beta_norm=1.0, signal_norm_sq=30.0, n=30, v_delta=0.01)
    threshold = geometric_regime_threshold(**kwargs)

    bound, regime, _ = approx_bound_geometric(n_permutations=threshold, **kwargs)

    assert regime == LOWER_REGIME_NAME
    # Upper branch 3 (s / (2 delta_bar)^3)^(2/3) s^(1/3) with spread s = 0.01.
    assert bound == pytest.approx(3 * 0.01 / 0.15**2)


def test_approx_bound_geometric__no_spread():
    bound, regime, threshold = approx_bound_geometric(
        p=100, n_permutations=10_000, delta_bar=0.1, beta_norm=1.0, signal_norm_sq=30.0, n=30, v_delta=0.0
    )

    assert math.isinf(threshold)
    assert regime == LOWER_REGIME_NAME
    assert bound == pytest.approx(6 * 100 * 0.1 / 10_000)


def test_concentration_rho2__capped():
    assert concentration_rho2(n_permutations=1, eta=0.1, delta=0.5, q=5) == 1.0


@given(
    n_permutations=st.integers(min_value=1, max_value=10_000),
    eta=st.floats(min_value=0.01, max_value=5.0),
    q=st.integers(min_value=1, max_value=50),
)
@settings(max_examples=100, deadline=None)
def test_bounds__decrease_with_permutations(n_permutations, eta, q):
    p = 100
    delta = q / p

    assert approx_bound_random_sign(p, q, 2 * n_permutations, 1.0) < approx_bound_random_sign(
        p, q, n_permutations, 1.0
    )
    assert ridge_radius(p, q, 2 * n_permutations, 1.0, eta) < ridge_radius(p, q, n_permutations, 1.0, eta)
    assert concentration_rho(2 * n_permutations, eta, delta, q) <= concentration_rho(
        n_permutations, eta, delta, q
    )
    assert 0 <= concentration_rho(n_permutations, eta, delta, q) <= 1
    assert 0 <= concentration_rho2(n_permutations, eta, delta, q) <= 1


def test_ridge_radius():
    assert ridge_radius(p=10, q=2, n_permutations=4, coefficient_norm=2.0, eta=1.0) == pytest.approx(
        math.sqrt(7.2)
    )
    assert ridge_radius(
        p=10, q=2, n_permutations=4, coefficient_norm=2.0, eta=1.0, interaction=True
    ) == pytest.approx(math.sqrt(14.4))


def test_logistic_p_tilde():
    assert logistic_p_tilde([0.5, 0.5]) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        logistic_p_tilde([0.0, 0.5])


def test_mspe_bound_ols__at_optimal_dimension():
    n, p, q, sigma = 400, 100, 4, 0.5
    L_star = optimal_permutation_count(n, p, q, sigma, 1.0)

    bound = mspe_bound_ols(n, p, q, L_star, sigma, 1.0)

    expected = 2 * math.sqrt(2 - q / p) * sigma * math.sqrt(q / n) + sigma**2 / n
    assert bound == pytest.approx(expected)
    assert mspe_bound_ols(n, p, q, 4 * L_star, sigma, 1.0) > bound
    assert mspe_bound_ols(n, p, q, L_star / 4, sigma, 1.0) > bound


def test_mspe_bound_ols__noiseless():
    assert mspe_bound_ols(n=100, p=50, q=5, n_permutations=20, sigma=0.0, coefficient_norm=1.0) == 0.0


def test_mspe_bound_ridge__interaction_is_looser():
    kwargs = dict(
        n=100, p=50, q=5, n_permutations=200, sigma=1.0, eta=1.0, coefficient_norm=1.0, centered_signal_norm_sq=100.0
    )

    assert mspe_bound_ridge(**kwargs, interaction=True) > mspe_bound_ridge(**kwargs)


def test_excess_risk_bound__decreases_with_permutations():
    kwargs = dict(n=100, p=50, q=5, eta=1.0, coefficient_norm=1.0, p_tilde=0.2)

    assert excess_risk_bound(n_permutations=100, **kwargs) < excess_risk_bound(n_permutations=10, **kwargs)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n=10, p=5, q=6, n_permutations=4),
        dict(n=10, p=5, q=2, n_permutations=0),
        dict(n=10, p=5, q=2, n_permutations=4, eta=-1.0),
        dict(n=10, p=5, q=2, n_permutations=4, sigma=-1.0),
    ],
)
def test_bound_inputs__invalid(kwargs):
    with pytest.raises(ValueError):
        BoundInputs(**kwargs)


def test_bound_report__main_effects():
    inputs = BoundInputs(n=100, p=50, q=5, n_permutations=20, sigma=1.0, beta_norm=1.0, centered_signal_norm_sq=50.0)

    report = bound_report(inputs)

    assert report.approx_bound == pytest.approx(approx_bound_random_sign(50, 5, 20, 1.0))
    assert report.ridge_radius == pytest.approx(ridge_radius(50, 5, 20, 1.0, 1.0))
    assert report.L_star == pytest.approx(optimal_permutation_count(100, 50, 5, 1.0, 1.0))
    assert report.mspe_bound_ols is not None
    assert report.mspe_bound_ridge is not None
    assert report.approx_bound_interaction is None
    assert report.excess_risk_bound is None
    assert report.flags == ()


def test_bound_report__flags():
    inputs = BoundInputs(
        n=100, p=50, q=5, n_permutations=20, bits=2, sigma=0.0, beta_norm=1.0, design_bounded=False
    )

    report = bound_report(inputs)

    assert "design_unbounded" in report.flags
    assert "bbit_bound_missing_column_norms" in report.flags
    assert "zero_noise" in report.flags
    assert "infinite_L_star" in report.flags
    assert report.approx_bound_bbit is None
    assert isinstance(report.to_dict()["flags"], list)


def test_bound_report__interaction():
    inputs = BoundInputs(n=100, p=50, q=5, n_permutations=20, interaction_norm=2.0, p_tilde=0.2)

    report = bound_report(inputs)

    assert report.approx_bound == pytest.approx(approx_bound_random_sign(50, 5, 20, 2.0))
    assert report.interaction_ridge_radius == pytest.approx(ridge_radius(50, 5, 20, 2.0, 1.0, interaction=True))
    assert 0 < report.rho2 <= 1
    assert report.excess_risk_bound_interaction is not None
