import json

import numpy as np
import pandas as pd
import pytest

from minhashreg.bounds import approx_bound_random_sign, ridge_radius
from minhashreg.cli import (
    BOUNDS_FILE,
    DESIGN_FILE,
    FIT_FILE,
    IMPORTANCE_FILE,
    MANIFEST_FILE,
    PLOT_DATA_FILE,
    RAW_RESULTS_FILE,
    REPORT_FILE,
    SUMMARY_FILE,
    main,
)
from minhashreg.config import (
    EXIT_FORMAT,
    EXIT_INCOMPATIBLE_DATA,
    EXIT_SUCCESS,
    EXIT_USAGE,
    SEED_ENV_VAR,
)
from minhashreg.sparse import load_container

DEFAULT_SEED = 1234


@pytest.fixture(autouse=True)
def clear_seed_env(monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)


def _write_svmlight(path, rows, labels):
    lines = []
    for label, row in zip(labels, rows):
        features = " ".join(f"{k + 1}:{v:g}" for k, v in sorted(row.items()))
        lines.append(f"{label:g} {features}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@pytest.fixture
def binary_svmlight(tmp_path):
    rng = np.random.default_rng(DEFAULT_SEED)
    rows = [{int(k): 1.0 for k in rng.choice(20, size=4, replace=False)} for _ in range(30)]
    labels = rng.standard_normal(30).round(3)
    path = tmp_path / "binary.svm"
    _write_svmlight(path, rows, labels)
    return path


@pytest.fixture
def real_svmlight(tmp_path):
    rng = np.random.default_rng(DEFAULT_SEED)
    rows = [
        {int(k): float(v) for k, v in zip(rng.choice(20, size=4, replace=False), rng.uniform(0.1, 0.9, 4).round(2))}
        for _ in range(30)
    ]
    path = tmp_path / "real.svm"
    _write_svmlight(path, rows, rng.standard_normal(30).round(3))
    return path


def _manifest(out_dir):
    with open(out_dir / MANIFEST_FILE, "r", encoding="utf-8") as f:
        return json.load(f)


def test_main__hash_random_sign(tmp_path, real_svmlight):
    out_dir = tmp_path / "hashed"

    status = main(["hash", "--input", str(real_svmlight), "--L", "8", "--seed", str(DEFAULT_SEED), "--out", str(out_dir)])

    assert status == EXIT_SUCCESS
    S = load_container(str(out_dir / DESIGN_FILE))
    assert S.shape == (30, 8)
    manifest = _manifest(out_dir)
    assert manifest["command"] == "hash"
    assert manifest["seed"] == DEFAULT_SEED
    assert manifest["config"]["p"] == 20
    assert set(manifest["artifacts"]) == {"S", "labels"}


def test_main__hash_is_deterministic(tmp_path, binary_svmlight):
    statuses = [
        main(
            [
                "hash",
                "--input",
                str(binary_svmlight),
                "--variant",
                "bbit-shuffled",
                "--b",
                "2",
                "--L",
                "6",
                "--seed",
                str(DEFAULT_SEED),
                "--out",
                str(tmp_path / name),
            ]
        )
        for name in ("first", "second")
    ]

    assert statuses == [EXIT_SUCCESS, EXIT_SUCCESS]
    first = (tmp_path / "first" / DESIGN_FILE).read_bytes()
    assert first == (tmp_path / "second" / DESIGN_FILE).read_bytes()
    S = load_container(str(tmp_path / "first" / DESIGN_FILE))
    assert S.shape == (30, 24)
    assert np.all(S.row_nnz == 6)


def test_main__hash_seed_from_environment(tmp_path, monkeypatch, real_svmlight):
    monkeypatch.setenv(SEED_ENV_VAR, "99")

    status = main(["hash", "--input", str(real_svmlight), "--L", "4", "--out", str(tmp_path / "env")])

    assert status == EXIT_SUCCESS
    manifest = _manifest(tmp_path / "env")
    assert manifest["seed"] == 99
    assert manifest["argv"][-2:] == ["--seed", "99"]


def test_main__hash_invalid_permutations(tmp_path, real_svmlight):
    status = main(["hash", "--input", str(real_svmlight), "--L", "0", "--out", str(tmp_path / "out")])

    assert status == EXIT_USAGE


def test_main__hash_bbit_needs_binary(tmp_path, real_svmlight):
    status = main(
        ["hash", "--input", str(real_svmlight), "--variant", "bbit", "--L", "4", "--out", str(tmp_path / "out")]
    )

    assert status == EXIT_INCOMPATIBLE_DATA


@pytest.mark.parametrize(
    "content",
    ["1.0 3:0.5 2:0.5\n", "1.0 0:0.5\n", "one 1:0.5\n", "1.0 1:1.5\n", "1.0 2-0.5\n"],
)
def test_main__hash_malformed_input(tmp_path, content):
    path = tmp_path / "bad.svm"
    path.write_text(content, encoding="utf-8")

    status = main(["hash", "--input", str(path), "--L", "4", "--out", str(tmp_path / "out")])

    assert status == EXIT_FORMAT


def test_main__hash_missing_input(tmp_path):
    status = main(["hash", "--input", str(tmp_path / "missing.svm"), "--L", "4", "--out", str(tmp_path / "out")])

    assert status == EXIT_FORMAT


def test_main__unknown_command():
    assert main(["compress", "--out", "somewhere"]) == EXIT_USAGE


def test_main__fit_ridge_radius(tmp_path, real_svmlight):
    hash_dir, fit_dir = tmp_path / "hashed", tmp_path / "fit"
    main(["hash", "--input", str(real_svmlight), "--L", "8", "--seed", str(DEFAULT_SEED), "--out", str(hash_dir)])

    status = main(
        [
            "fit",
            "--input",
            str(hash_dir),
            "--estimator",
            "ridge",
            "--eta",
            "1.0",
            "--beta-norm",
            "2.0",
            "--q",
            "4",
            "--out",
            str(fit_dir),
        ]
    )

    assert status == EXIT_SUCCESS
    with open(fit_dir / FIT_FILE, "r", encoding="utf-8") as f:
        fit = json.load(f)
    expected_radius = ridge_radius(20, 4, 8, 2.0, 1.0)
    assert fit["radius"] == pytest.approx(expected_radius)
    assert fit["b_norm"] <= expected_radius + 1e-6
    assert len(fit["b_hat"]) == 8
    assert "train_mse" in fit["metrics"]


def test_main__fit_zero_radius(tmp_path, real_svmlight):
    hash_dir, fit_dir = tmp_path / "hashed", tmp_path / "fit"
    main(["hash", "--input", str(real_svmlight), "--L", "8", "--out", str(hash_dir)])

    status = main(["fit", "--input", str(hash_dir), "--estimator", "ridge", "--radius", "0", "--out", str(fit_dir)])

    assert status == EXIT_SUCCESS
    with open(fit_dir / FIT_FILE, "r", encoding="utf-8") as f:
        fit = json.load(f)
    assert np.allclose(fit["b_hat"], 0.0)


def test_main__fit_needs_radius_inputs(tmp_path, real_svmlight):
    hash_dir = tmp_path / "hashed"
    main(["hash", "--input", str(real_svmlight), "--L", "8", "--out", str(hash_dir)])

    status = main(["fit", "--input", str(hash_dir), "--estimator", "ridge", "--eta", "1.0", "--out", str(tmp_path / "fit")])

    assert status == EXIT_USAGE


def test_main__fit_with_labels_and_importance(tmp_path, real_svmlight):
    hash_dir, fit_dir = tmp_path / "hashed", tmp_path / "fit"
    main(["hash", "--input", str(real_svmlight), "--L", "8", "--importance", "--out", str(hash_dir)])
    labels_path = tmp_path / "labels.csv"
    pd.DataFrame({"y": np.linspace(-1.0, 1.0, 30)}).to_csv(labels_path, index=False)

    status = main(
        ["fit", "--input", str(hash_dir), "--labels", str(labels_path), "--importance", "--out", str(fit_dir)]
    )

    assert status == EXIT_SUCCESS
    importance = pd.read_csv(fit_dir / IMPORTANCE_FILE)
    assert len(importance) > 0
    assert _manifest(fit_dir)["config"]["labels"] == str(labels_path)


def test_main__fit_labels_length_mismatch(tmp_path, real_svmlight):
    hash_dir = tmp_path / "hashed"
    main(["hash", "--input", str(real_svmlight), "--L", "8", "--out", str(hash_dir)])
    labels_path = tmp_path / "labels.csv"
    pd.DataFrame({"y": np.ones(5)}).to_csv(labels_path, index=False)

    status = main(["fit", "--input", str(hash_dir), "--labels", str(labels_path), "--out", str(tmp_path / "fit")])

    assert status == EXIT_FORMAT


def test_main__simulate(tmp_path, dummy_scenario_text):
    scenario_path = tmp_path / "small.scenario"
    scenario_path.write_text(dummy_scenario_text, encoding="utf-8")
    out_dir = tmp_path / "study"

    status = main(
        ["simulate", "--scenario", str(scenario_path), "--methods", "rs", "bbit1", "--L", "8", "16", "--out", str(out_dir)]
    )

    assert status == EXIT_SUCCESS
    raw_results = pd.read_csv(out_dir / RAW_RESULTS_FILE)
    summary = pd.read_csv(out_dir / SUMMARY_FILE)
    plot_data = pd.read_csv(out_dir / PLOT_DATA_FILE)
    assert len(raw_results) == 4
    assert len(summary) == 4
    assert list(plot_data.columns) == ["x", "y", "series", "metric"]
    manifest = _manifest(out_dir)
    assert manifest["seed"] == 7
    assert manifest["config"]["name"] == "small"


def test_main__simulate_malformed_scenario(tmp_path):
    scenario_path = tmp_path / "bad.scenario"
    scenario_path.write_text("n = 40\np = 60\n", encoding="utf-8")

    status = main(["simulate", "--scenario", str(scenario_path), "--L", "8", "--out", str(tmp_path / "study")])

    assert status == EXIT_FORMAT


def test_main__verify(tmp_path):
    out_dir = tmp_path / "verify"

    status = main(
        [
            "verify",
            "--target",
            "unbiasedness",
            "--n",
            "10",
            "--p",
            "15",
            "--q",
            "3",
            "--L",
            "8",
            "--reps",
            "1000",
            "--seed",
            str(DEFAULT_SEED),
            "--out",
            str(out_dir),
        ]
    )

    assert status == EXIT_SUCCESS
    lines = (out_dir / REPORT_FILE).read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1
    record = json.loads(lines[0])
    assert record["target"] == "unbiasedness"
    assert record["pass"] is True


def test_main__verify_too_few_replications(tmp_path):
    status = main(["verify", "--target", "unbiasedness", "--reps", "10", "--out", str(tmp_path / "verify")])

    assert status == EXIT_USAGE


def test_main__bounds(tmp_path):
    out_dir = tmp_path / "bounds"

    status = main(
        ["bounds", "--n", "100", "--p", "50", "--q", "5", "--L", "20", "--sigma", "1", "--beta-norm", "1", "--out", str(out_dir)]
    )

    assert status == EXIT_SUCCESS
    with open(out_dir / BOUNDS_FILE, "r", encoding="utf-8") as f:
        report = json.load(f)
    assert report["approx_bound_random_sign"] == pytest.approx(approx_bound_random_sign(50, 5, 20, 1.0))
    assert report["ridge_radius"] == pytest.approx(ridge_radius(50, 5, 20, 1.0, 1.0))


def test_main__replay(tmp_path, binary_svmlight):
    original_dir, replay_dir = tmp_path / "original", tmp_path / "replayed"
    main(["hash", "--input", str(binary_svmlight), "--variant", "bbit", "--L", "5", "--out", str(original_dir)])

    status = main(["replay", str(original_dir / MANIFEST_FILE), "--out", str(replay_dir)])

    assert status == EXIT_SUCCESS
    assert (replay_dir / DESIGN_FILE).read_bytes() == (original_dir / DESIGN_FILE).read_bytes()
    assert _manifest(replay_dir)["seed"] == _manifest(original_dir)["seed"]


def test_main__replay_equals_sign_options(tmp_path, binary_svmlight):
    original_dir, replay_dir = tmp_path / "original", tmp_path / "replayed"
    main(["hash", f"--input={binary_svmlight}", "--L", "5", "--seed=7", f"--out={original_dir}"])

    status = main(["replay", str(original_dir / MANIFEST_FILE), "--out", str(replay_dir)])

    assert status == EXIT_SUCCESS
    assert (replay_dir / DESIGN_FILE).read_bytes() == (original_dir / DESIGN_FILE).read_bytes()
    assert _manifest(original_dir)["argv"].count("--seed") == 0
    assert f"--out={replay_dir}" in _manifest(replay_dir)["argv"]
    assert _manifest(replay_dir)["seed"] == 7


def test_main__replay_malformed_manifest(tmp_path):
    manifest_path = tmp_path / MANIFEST_FILE
    manifest_path.write_text("{not json", encoding="utf-8")

    assert main(["replay", str(manifest_path)]) == EXIT_FORMAT
