import numpy as np
import pytest

from minhashreg.config import (
    APPROX_ERROR_NAME,
    BBIT_PLAIN_NAME,
    BBIT_SHUFFLED_NAME,
    CONCENTRATION_NAME,
    GEOMETRIC_TRUNCATED_NAME,
    INTERACTION_ORACLE_NAME,
    MAIN_ORACLE_NAME,
    MIN_REPLICATIONS,
    RANDOM_SIGN_NAME,
    SCALED_ORACLE_NAME,
    TAYLOR_FULL_NAME,
    TAYLOR_TRUNCATED_NAME,
    UNBIASEDNESS_NAME,
)
from minhashreg.oracle import InteractionModelSpec
from minhashreg.sparse import SparseMatrix
from minhashreg.verification import (
    VerificationSpec,
    approximation_bound,
    build_verification_spec,
    mc_verify,
    simulate_oracle,
)

DEFAULT_SEED = 1234


@pytest.fixture
def main_spec():
    return build_verification_spec(MAIN_ORACLE_NAME, n=10, p=15, q=3, n_permutations=8, seed=DEFAULT_SEED)


@pytest.mark.parametrize("target", [UNBIASEDNESS_NAME, APPROX_ERROR_NAME, CONCENTRATION_NAME])
def test_mc_verify__random_sign_main(main_spec, target):
    record = mc_verify(target, main_spec, n_replications=MIN_REPLICATIONS, seed=DEFAULT_SEED)

    assert record.passed
    assert record.target == target
    assert record.params["R"] == MIN_REPLICATIONS
    assert record.params["L"] == 8
    assert record.to_dict()["pass"] is True


def test_mc_verify__approx_error_bound(main_spec):
    record = mc_verify(APPROX_ERROR_NAME, main_spec, n_replications=MIN_REPLICATIONS, seed=DEFAULT_SEED)

    # Unit norm coefficients: (2 - 3/15) 3 / 8.
    assert record.bound == pytest.approx(1.8 * 3 / 8)
    assert record.bound == pytest.approx(approximation_bound(main_spec))
    assert record.estimate > 0


def test_mc_verify__shuffled_bbit_unbiased():
    spec = build_verification_spec(
        MAIN_ORACLE_NAME, n=10, p=15, q=3, n_permutations=8, seed=DEFAULT_SEED, variant=BBIT_SHUFFLED_NAME, bits=2
    )

    record = mc_verify(UNBIASEDNESS_NAME, spec, n_replications=MIN_REPLICATIONS, seed=DEFAULT_SEED)

    assert record.passed
    assert record.params["bits"] == 2


def test_mc_verify__interaction_unbiased():
    spec = build_verification_spec(
        INTERACTION_ORACLE_NAME, n=10, p=15, q=3, n_permutations=8, seed=DEFAULT_SEED
    )

    record = mc_verify(UNBIASEDNESS_NAME, spec, n_replications=MIN_REPLICATIONS, seed=DEFAULT_SEED)

    assert record.passed
    assert record.params["oracle"] == INTERACTION_ORACLE_NAME


def test_mc_verify__full_taylor_unbiased():
    spec = build_verification_spec(
        SCALED_ORACLE_NAME,
        n=10,
        p=15,
        q=3,
        q_max=6,
        n_permutations=8,
        seed=DEFAULT_SEED,
        weight_kind=TAYLOR_FULL_NAME,
        a=0.5,
    )

    record = mc_verify(UNBIASEDNESS_NAME, spec, n_replications=MIN_REPLICATIONS, seed=DEFAULT_SEED)

    assert record.passed
    assert record.params["weight_kind"] == TAYLOR_FULL_NAME


def test_mc_verify__too_few_replications(main_spec):
    with pytest.raises(ValueError):
        mc_verify(UNBIASEDNESS_NAME, main_spec, n_replications=MIN_REPLICATIONS - 1, seed=DEFAULT_SEED)


def test_mc_verify__unknown_target(main_spec):
    with pytest.raises(ValueError):
        mc_verify("variance", main_spec, n_replications=MIN_REPLICATIONS, seed=DEFAULT_SEED)


def test_mc_verify__truncated_weights_not_checked_for_bias():
    spec = build_verification_spec(
        SCALED_ORACLE_NAME,
        n=10,
        p=15,
        q=3,
        q_max=6,
        n_permutations=16,
        seed=DEFAULT_SEED,
        weight_kind=TAYLOR_TRUNCATED_NAME,
        a=1.0,
    )

    with pytest.raises(ValueError):
        mc_verify(UNBIASEDNESS_NAME, spec, n_replications=MIN_REPLICATIONS, seed=DEFAULT_SEED)


def test_mc_verify__concentration_needs_random_sign():
    spec = build_verification_spec(
        MAIN_ORACLE_NAME, n=10, p=15, q=3, n_permutations=8, seed=DEFAULT_SEED, variant=BBIT_SHUFFLED_NAME
    )

    with pytest.raises(ValueError):
        mc_verify(CONCENTRATION_NAME, spec, n_replications=MIN_REPLICATIONS, seed=DEFAULT_SEED)


def test_simulate_oracle__independent_of_workers(main_spec):
    serial_predictions, serial_norms = simulate_oracle(main_spec, 300, DEFAULT_SEED, n_jobs=1)
    parallel_predictions, parallel_norms = simulate_oracle(main_spec, 300, DEFAULT_SEED, n_jobs=2)

    assert serial_predictions.shape == (300, 10)
    assert np.array_equal(serial_predictions, parallel_predictions)
    assert np.array_equal(serial_norms, parallel_norms)


def test_build_verification_spec():
    spec = build_verification_spec(
        SCALED_ORACLE_NAME, n=30, p=20, q=2, q_max=5, n_permutations=4, seed=DEFAULT_SEED, weight_kind=TAYLOR_FULL_NAME
    )

    assert spec.X.is_binary
    assert spec.X.row_nnz.min() >= 2
    assert spec.X.row_nnz.max() <= 5
    assert np.linalg.norm(spec.beta) == pytest.approx(1.0)


def test_build_verification_spec__interaction_pairs():
    spec = build_verification_spec(
        INTERACTION_ORACLE_NAME, n=10, p=6, q=2, n_permutations=4, seed=DEFAULT_SEED, n_interactions=4
    )

    assert spec.beta is None
    assert spec.interaction.theta2.nnz == 4
    assert np.linalg.norm(spec.interaction.theta1) == pytest.approx(1.0)


@pytest.mark.parametrize("q,q_max", [(0, None), (3, 2), (3, 16)])
def test_build_verification_spec__invalid_sparsity(q, q_max):
    with pytest.raises(ValueError):
        build_verification_spec(MAIN_ORACLE_NAME, n=10, p=15, q=q, q_max=q_max, n_permutations=4, seed=DEFAULT_SEED)


def test_verification_spec__empty_rows():
    X = SparseMatrix.from_rows([{0: 1.0}, {}], n_cols=3)

    with pytest.raises(ValueError):
        VerificationSpec(X=X, n_permutations=4, beta=np.ones(3))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(oracle="quadratic"),
        dict(variant=BBIT_PLAIN_NAME),
        dict(oracle=SCALED_ORACLE_NAME, weight_kind=TAYLOR_FULL_NAME, variant=BBIT_SHUFFLED_NAME),
        dict(oracle=SCALED_ORACLE_NAME, weight_kind="taylor_partial"),
        dict(beta=np.ones(5)),
        dict(n_permutations=0),
    ],
)
def test_verification_spec__invalid(toy_binary_design, kwargs):
    spec_kwargs = dict(X=toy_binary_design, n_permutations=4, beta=np.ones(4) / 2)
    spec_kwargs.update(kwargs)

    with pytest.raises(ValueError):
        VerificationSpec(**spec_kwargs)


def test_verification_spec__interaction_rejects_bbit(toy_binary_design):
    spec = InteractionModelSpec.from_triples(np.zeros(4), [(0, 1, 1.0)])

    with pytest.raises(ValueError):
        VerificationSpec(
            X=toy_binary_design,
            n_permutations=4,
            oracle=INTERACTION_ORACLE_NAME,
            variant=BBIT_SHUFFLED_NAME,
            interaction=spec,
        )


def test_verification_spec__bbit_needs_binary(dummy_real_design):
    with pytest.raises(ValueError):
        VerificationSpec(
            X=dummy_real_design,
            n_permutations=4,
            variant=BBIT_SHUFFLED_NAME,
            beta=np.zeros(dummy_real_design.n_cols),
        )


@pytest.mark.slow
@pytest.mark.parametrize("target", [UNBIASEDNESS_NAME, APPROX_ERROR_NAME])
@pytest.mark.parametrize(
    "oracle,variant",
    [
        (MAIN_ORACLE_NAME, RANDOM_SIGN_NAME),
        (MAIN_ORACLE_NAME, BBIT_SHUFFLED_NAME),
        (INTERACTION_ORACLE_NAME, RANDOM_SIGN_NAME),
    ],
)
def test_mc_verify__equal_sparsity_instance(oracle, variant, target):
    spec = build_verification_spec(
        oracle, n=20, p=30, q=5, n_permutations=32, seed=DEFAULT_SEED, variant=variant
    )

    record = mc_verify(target, spec, n_replications=20_000, seed=DEFAULT_SEED)

    assert record.passed


@pytest.mark.slow
def test_mc_verify__dense_rows_reach_the_bound():
    spec = build_verification_spec(MAIN_ORACLE_NAME, n=20, p=5, q=5, n_permutations=32, seed=DEFAULT_SEED)

    record = mc_verify(APPROX_ERROR_NAME, spec, n_replications=20_000, seed=DEFAULT_SEED)

    assert record.bound == pytest.approx(5 / 32)
    assert record.passed
    assert record.estimate >= 0.9 * record.bound


@pytest.mark.slow
@pytest.mark.parametrize("a", [0.5, 0.75, 1.0])
def test_mc_verify__truncated_taylor_bound(a):
    spec = build_verification_spec(
        SCALED_ORACLE_NAME,
        n=30,
        p=100,
        q=3,
        q_max=12,
        n_permutations=64,
        seed=DEFAULT_SEED,
        weight_kind=TAYLOR_TRUNCATED_NAME,
        a=a,
    )

    record = mc_verify(APPROX_ERROR_NAME, spec, n_replications=20_000, seed=DEFAULT_SEED)

    assert record.passed
    assert record.estimate < record.bound


@pytest.mark.slow
@pytest.mark.parametrize("n_permutations", [4, 64])
def test_mc_verify__geometric_bound(n_permutations):
    spec = build_verification_spec(
        SCALED_ORACLE_NAME,
        n=30,
        p=100,
        q=3,
        q_max=12,
        n_permutations=n_permutations,
        seed=DEFAULT_SEED,
        weight_kind=GEOMETRIC_TRUNCATED_NAME,
    )

    record = mc_verify(APPROX_ERROR_NAME, spec, n_replications=20_000, seed=DEFAULT_SEED)

    assert record.passed
