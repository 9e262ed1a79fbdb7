import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from minhashreg.config import (
    BBIT_PLAIN_NAME,
    BBIT_SHUFFLED_NAME,
    GEOMETRIC_TRUNCATED_NAME,
    TAYLOR_FULL_NAME,
    TAYLOR_TRUNCATED_NAME,
)
from minhashreg.hashing import HashConfig, build_ensemble, hash_design
from minhashreg.oracle import (
    InteractionModelSpec,
    first_hit_stream,
    first_hit_times,
    interaction_norm,
    interaction_weights,
    marginal_M_pmf,
    oracle_b_interaction,
    oracle_b_main,
    oracle_b_scaled,
    ranks_from_first_hits,
    scaled_signal,
    taylor_coefficients,
    weight_taylor,
    weight_vector_main,
)
from minhashreg.sparse import SparseMatrix, sparsity_profile

DEFAULT_SEED = 1234

TOY_BETA = np.array([0.5, -1.0, 2.0, 0.25])


def _all_ranks(p):
    for permutation in itertools.permutations(range(1, p + 1)):
        yield np.array([permutation])


def _average_prediction(X, config, oracle_fn, sign_sets=(None,), map_sets=(None,)):
    # Mean of S b* over every permutation crossed with every sign or shuffle map draw.
    total = np.zeros(X.n_rows)
    count = 0
    for ranks in _all_ranks(X.n_cols):
        for signs, shuffle_maps in itertools.product(sign_sets, map_sets):
            e = build_ensemble(config, X.n_cols, ranks=ranks, signs=signs, shuffle_maps=shuffle_maps)
            S = hash_design(X, e).S
            total += np.asarray(S @ oracle_fn(e)).ravel()
            count += 1
    return total / count


def test_marginal_M_pmf__small_case():
    pmf = marginal_M_pmf(4, 2)

    assert np.allclose(pmf, [1 / 2, 1 / 3, 1 / 6, 0])


@given(
    p=st.integers(min_value=1, max_value=300),
    data=st.data(),
)
@settings(max_examples=60, deadline=None)
def test_marginal_M_pmf__normalized(p, data):
    q = data.draw(st.integers(min_value=1, max_value=p))

    pmf = marginal_M_pmf(p, q)
    w = weight_vector_main(p, q).w

    assert np.all(pmf >= 0)
    assert pmf.sum() == pytest.approx(1.0)
    assert np.all(pmf[p - q + 1 :] == 0)
    assert w @ pmf == pytest.approx(1.0)


@pytest.mark.parametrize("p,q", [(4, 0), (4, 5)])
def test_marginal_M_pmf__invalid_sparsity(p, q):
    with pytest.raises(ValueError):
        marginal_M_pmf(p, q)


def test_weight_vector_main__small_case():
    weights = weight_vector_main(4, 2)

    assert np.allclose(weights.w, [9 / 7, 6 / 7, 3 / 7, 0])
    assert weights.kind == "main"


def test_interaction_weights__small_case():
    w1, w2 = interaction_weights(3, 1)

    assert np.allclose(w1.w, [1, 1, 1])
    assert np.allclose(w2.w, [0, 2 / 3, 2 / 3])


@pytest.mark.parametrize("p,q", [(2, 1), (5, 5), (5, 0)])
def test_interaction_weights__invalid(p, q):
    with pytest.raises(ValueError):
        interaction_weights(p, q)


@pytest.mark.parametrize(
    "a,expected",
    [(0.0, [1, 0, 0, 0]), (0.5, [1, 0.5, 0.375, 0.3125]), (1.0, [1, 1, 1, 1])],
)
def test_taylor_coefficients(a, expected):
    assert np.allclose(taylor_coefficients(a, 4), expected)


def test_weight_taylor__full_series_targets_power_scaling():
    p, a, delta = 4, 0.5, 0.5
    weights = weight_taylor(a, p, TAYLOR_FULL_NAME)

    ell = np.arange(1, 400)
    series = np.sum(weights.at(ell) * (1 - delta) ** (ell - 1))

    assert len(weights.w) == p
    assert series == pytest.approx(p * delta ** (-a))


def test_weight_taylor__full_extends_beyond_stored():
    weights = weight_taylor(1.0, 4, TAYLOR_FULL_NAME)

    assert np.allclose(weights.at(np.array([0, 1, 7])), [0, 4, 4])


def test_weight_taylor__truncated_level():
    p, L, delta_min = 20, 100, 0.25
    weights = weight_taylor(0.5, p, TAYLOR_TRUNCATED_NAME, n_permutations=L, delta_min=delta_min)

    m = math.log(L) / (2 * delta_min)
    assert weights.m == pytest.approx(m)
    assert len(weights.w) == math.floor(m) + 2
    assert weights.w[0] == pytest.approx(p * delta_min**0.5)
    assert weights.w[-1] == pytest.approx(
        p * delta_min**0.5 * taylor_coefficients(0.5, len(weights.w))[-1] * (m - math.floor(m))
    )


@pytest.mark.parametrize(
    "a,n_permutations,delta_min",
    [(0.3, 100, 0.25), (0.5, 5, 0.25), (0.5, 100, 0.75), (0.55, 15, 0.25)],
)
def test_weight_taylor__truncated_invalid(a, n_permutations, delta_min):
    with pytest.raises(ValueError):
        weight_taylor(a, 20, TAYLOR_TRUNCATED_NAME, n_permutations=n_permutations, delta_min=delta_min)


def test_weight_taylor__geometric():
    weights = weight_taylor(
        0.0,
        30,
        GEOMETRIC_TRUNCATED_NAME,
        n_permutations=64,
        delta_bar=0.25,
        beta_norm_sq=1.0,
        signal_norm_sq=30.0,
        n_rows=30,
        v_delta=0.01,
    )

    assert len(weights.w) == int(weights.m)
    assert 1 <= weights.m <= 2
    assert np.all(np.diff(weights.w) < 0)


def test_weight_taylor__geometric_missing_inputs():
    with pytest.raises(ValueError):
        weight_taylor(0.0, 30, GEOMETRIC_TRUNCATED_NAME, n_permutations=64)


def test_weight_taylor__unknown_mode():
    with pytest.raises(ValueError):
        weight_taylor(0.5, 30, "taylor_partial")


def test_oracle_b_main__random_sign_exact_average(toy_real_design):
    # Every row of the toy design has q = 2 non-zeros.
    sign_sets = [np.array(signs) for signs in itertools.product([-1, 1], repeat=4)]
    config = HashConfig(1)

    average = _average_prediction(
        toy_real_design,
        config,
        lambda e: oracle_b_main(TOY_BETA, e, q=2).b_star,
        sign_sets=sign_sets,
    )

    assert np.allclose(average, toy_real_design.dot(TOY_BETA))


def test_oracle_b_main__shuffled_exact_average(toy_binary_design):
    map_sets = [np.array([codes]) for codes in itertools.product([0, 1], repeat=4)]
    config = HashConfig(1, bits=1, variant=BBIT_SHUFFLED_NAME)

    average = _average_prediction(
        toy_binary_design,
        config,
        lambda e: oracle_b_main(TOY_BETA, e, q=2).b_star,
        map_sets=map_sets,
    )

    assert np.allclose(average, toy_binary_design.dot(TOY_BETA))


def test_oracle_b_interaction__exact_average(toy_real_design):
    spec = InteractionModelSpec.from_triples(TOY_BETA, [(0, 1, 1.5), (2, 3, -0.5), (3, 0, 2.0)])
    sign_sets = [np.array(signs) for signs in itertools.product([-1, 1], repeat=4)]

    average = _average_prediction(
        toy_real_design,
        HashConfig(1),
        lambda e: oracle_b_interaction(spec, e, q=2).b_star,
        sign_sets=sign_sets,
    )

    assert np.allclose(average, spec.signal(toy_real_design))


def test_oracle_b_main__output_lengths(dummy_equal_sparsity_design):
    p = dummy_equal_sparsity_design.n_cols
    beta = np.linspace(-1, 1, p)
    profile = sparsity_profile(dummy_equal_sparsity_design)

    random_sign = build_ensemble(HashConfig(7, seed=DEFAULT_SEED), p)
    shuffled = build_ensemble(HashConfig(7, bits=2, variant=BBIT_SHUFFLED_NAME, seed=DEFAULT_SEED), p)

    assert oracle_b_main(beta, random_sign, 5, profile=profile).b_star.shape == (7,)
    assert oracle_b_main(beta, shuffled, 5, profile=profile).b_star.shape == (28,)


def test_oracle_b_main__plain_bbit_rejected(toy_ranks):
    e = build_ensemble(HashConfig(1, variant=BBIT_PLAIN_NAME), 4, ranks=toy_ranks)

    with pytest.raises(ValueError):
        oracle_b_main(TOY_BETA, e, q=2)


def test_oracle_b_main__unequal_sparsity_rejected():
    X = SparseMatrix.from_rows([{0: 1.0}, {0: 1.0, 1: 1.0}], n_cols=4)
    e = build_ensemble(HashConfig(3, seed=DEFAULT_SEED), 4)

    with pytest.raises(ValueError):
        oracle_b_main(TOY_BETA, e, q=2, profile=sparsity_profile(X))


def test_oracle_b_main__beta_length(toy_ranks):
    e = build_ensemble(HashConfig(1), 4, ranks=toy_ranks)

    with pytest.raises(ValueError):
        oracle_b_main(np.ones(3), e, q=2)


def test_oracle_b_scaled__small_case():
    X = SparseMatrix.from_rows([{0: 1.0}], n_cols=2)
    weights = weight_taylor(1.0, 2, TAYLOR_FULL_NAME)

    oracle = oracle_b_scaled(
        np.array([1.0, 2.0]),
        weights,
        first_hits=np.array([[1, 3]]),
        signs=np.array([[1], [-1]]),
        profile=sparsity_profile(X),
    )

    # 1 * 1 * w_1 + 2 * (-1) * w_3 with every full weight equal to p = 2.
    assert np.allclose(oracle.b_star, [-2.0])


def test_oracle_b_scaled__full_taylor_needs_profile():
    weights = weight_taylor(1.0, 2, TAYLOR_FULL_NAME)

    with pytest.raises(ValueError):
        oracle_b_scaled(np.ones(2), weights, np.array([[1, 2]]), np.array([[1], [1]]))


def test_oracle_b_scaled__shape_mismatch():
    weights = weight_taylor(1.0, 2, TAYLOR_FULL_NAME)

    with pytest.raises(ValueError):
        oracle_b_scaled(np.ones(3), weights, np.array([[1, 2]]), np.array([[1], [1]]))


@pytest.mark.parametrize("p", [1, 2, 17, 200])
def test_first_hit_stream(p):
    stream = first_hit_stream(p, DEFAULT_SEED, index=3)

    assert np.array_equal(np.sort(stream.ranks), np.arange(1, p + 1))
    assert len(np.unique(stream.first_hits)) == p
    assert np.all(stream.first_hits >= 1)
    assert np.array_equal(np.argsort(stream.first_hits), np.argsort(stream.ranks))
    assert np.array_equal(stream.first_hits, first_hit_stream(p, DEFAULT_SEED, index=3).first_hits)


def test_first_hit_times():
    rng = np.random.default_rng(DEFAULT_SEED)

    first_hits = first_hit_times(12, rng, size=50)
    ranks = ranks_from_first_hits(first_hits)

    assert first_hits.shape == (50, 12)
    assert np.all(first_hits >= 1)
    assert np.all(np.sort(first_hits, axis=1)[:, 0] == 1)
    assert np.all(np.sort(ranks, axis=1) == np.arange(1, 13))


def test_scaled_signal(toy_binary_design):
    unscaled = scaled_signal(toy_binary_design, TOY_BETA)
    scaled = scaled_signal(toy_binary_design, TOY_BETA, a=1.0)

    assert np.allclose(unscaled, toy_binary_design.dot(TOY_BETA))
    # Every toy row has delta = 1/2.
    assert np.allclose(scaled, 2 * unscaled)


def test_scaled_signal__empty_rows():
    X = SparseMatrix.from_rows([{0: 1.0}, {}], n_cols=2)

    signal = scaled_signal(X, np.array([1.0, 1.0]), a=0.5)

    assert signal[1] == 0
    assert signal[0] == pytest.approx(math.sqrt(2))


def test_interaction_model_spec__signal_brute_force(dummy_real_design):
    rng = np.random.default_rng(DEFAULT_SEED)
    p = dummy_real_design.n_cols
    triples = [(0, 3, 1.0), (5, 2, -2.0), (7, 1, 0.5), (3, 0, 0.75)]
    spec = InteractionModelSpec.from_triples(rng.standard_normal(p), triples)
    dense = dummy_real_design.toarray()

    expected = dense @ spec.theta1
    for k, k1, value in triples:
        expected += dense[:, k] * (dense[:, k1] == 0) * value

    assert np.allclose(spec.signal(dummy_real_design), expected)


@pytest.mark.parametrize(
    "theta2",
    [np.eye(3), np.zeros((3, 2))],
)
def test_interaction_model_spec__invalid(theta2):
    with pytest.raises(ValueError):
        InteractionModelSpec(theta1=np.zeros(3), theta2=theta2)


def test_interaction_norm():
    spec = InteractionModelSpec.from_triples(np.array([3.0, 4.0, 0.0]), [(0, 1, -1.0)])

    assert interaction_norm(spec, p=3, q=1) == pytest.approx(5 + math.sqrt(10 / 3))


@pytest.mark.parametrize("p", range(1, 8))
def test_marginal_M_pmf__exhaustive_enumeration(p):
    all_ranks = np.array(list(itertools.permutations(range(1, p + 1))))

    for q in range(1, p + 1):
        winning_ranks = all_ranks[:, :q].min(axis=1)
        counts = np.bincount(winning_ranks, minlength=p + 1)[1:]

        # counts / p! = C(p - l, q - 1) / C(p, q) exactly.
        for ell, count in enumerate(counts, start=1):
            assert int(count) * math.comb(p, q) == math.comb(p - ell, q - 1) * math.factorial(p)
        assert np.allclose(marginal_M_pmf(p, q), counts / len(all_ranks), atol=1e-12)


def test_weight_taylor__truncated_rejects_zero_delta_min():
    with pytest.raises(ValueError):
        weight_taylor(0.5, 20, TAYLOR_TRUNCATED_NAME, n_permutations=64, delta_min=0.0)


def test_weight_taylor__truncated_from_profile_with_empty_row():
    X = SparseMatrix.from_rows([{0: 1.0}, {}, {1: 1.0, 2: 1.0}], n_cols=4)
    profile = sparsity_profile(X)

    weights = weight_taylor(
        0.5, 4, TAYLOR_TRUNCATED_NAME, n_permutations=64, delta_min=profile.delta_min
    )

    assert profile.delta_min == pytest.approx(0.25)
    assert np.all(np.isfinite(weights.w))


def test_weight_taylor__geometric_rejects_zero_delta_bar():
    with pytest.raises(ValueError):
        weight_taylor(
            0.0,
            30,
            GEOMETRIC_TRUNCATED_NAME,
            n_permutations=64,
            delta_bar=0.0,
            beta_norm_sq=1.0,
            signal_norm_sq=30.0,
            n_rows=30,
            v_delta=0.01,
        )


def _within_four_se(frequencies, probabilities, n_draws):
    se = np.sqrt(probabilities * (1 - probabilities) / n_draws)
    return np.all(np.abs(frequencies - probabilities) <= 4 * se + 1e-12)


def test_first_hit_times__min_over_set_is_geometric():
    p, q, n_draws = 20, 5, 20000
    rng = np.random.default_rng(DEFAULT_SEED)

    first_hits = first_hit_times(p, rng, size=n_draws)
    set_min = first_hits[:, :q].min(axis=1)

    levels = np.arange(1, 9)
    theta = q / p
    expected = (1 - theta) ** (levels - 1) * theta
    observed = np.array([np.mean(set_min == level) for level in levels])
    assert _within_four_se(observed, expected, n_draws)


def test_first_hit_times__argmin_independent_of_min():
    p, q, n_draws = 20, 5, 20000
    rng = np.random.default_rng(DEFAULT_SEED)

    first_hits = first_hit_times(p, rng, size=n_draws)
    set_hits = first_hits[:, :q]
    argmin = set_hits.argmin(axis=1)
    min_bin = np.minimum(set_hits.min(axis=1), 5) - 1

    table = np.zeros((q, 5))
    np.add.at(table, (argmin, min_bin), 1)
    assert stats.chi2_contingency(table).pvalue > 0.001


def test_first_hit_stream__two_columns_geometric():
    n_draws = 4000

    first_hit_col0 = np.array(
        [first_hit_stream(2, DEFAULT_SEED, index).first_hits[0] for index in range(n_draws)]
    )

    levels = np.arange(1, 7)
    expected = 0.5**levels
    observed = np.array([np.mean(first_hit_col0 == level) for level in levels])
    assert _within_four_se(observed, expected, n_draws)


def test_first_hit_stream__three_columns_uniform_orderings():
    n_draws = 3000
    orderings = {ordering: i for i, ordering in enumerate(itertools.permutations(range(1, 4)))}

    counts = np.zeros(len(orderings))
    for index in range(n_draws):
        counts[orderings[tuple(first_hit_stream(3, DEFAULT_SEED, index).ranks)]] += 1

    assert stats.chisquare(counts).pvalue > 0.001
