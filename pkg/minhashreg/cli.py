import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp

from minhashreg import __version__
from minhashreg.bounds import BoundInputs, bound_report, ridge_radius
from minhashreg.config import (
    BBIT_VARIANTS,
    DEFAULT_REPLICATIONS,
    ESTIMATORS,
    EXIT_FORMAT,
    EXIT_INCOMPATIBLE_DATA,
    EXIT_SUCCESS,
    EXIT_USAGE,
    EXIT_VERIFICATION_FAILURE,
    FISHER_YATES_NAME,
    LOGISTIC_NAME,
    MAIN_ORACLE_NAME,
    OLS_NAME,
    PERMUTATION_MODES,
    RANDOM_SIGN_NAME,
    SCALED_WEIGHT_KINDS,
    SEED_ENV_VAR,
    SIMULATION_METHODS,
    VARIANT_FLAG_LOOKUP,
    VERIFICATION_TARGETS,
)
from minhashreg.estimation import (
    excess_risk_of_predictor,
    initialize_fit_procedure,
    mspe,
    variable_importance_table,
)
from minhashreg.hashing import (
    HashConfig,
    IncompatibleDataError,
    bbit_codes,
    build_ensemble,
    expand_codes,
    hash_design,
)
from minhashreg.optimization import RuntimeTracker
from minhashreg.preprocessing import clip_values
from minhashreg.simulation import read_scenario_file
from minhashreg.sparse import (
    CONTAINER_MAGIC,
    DataFormatError,
    SparseMatrix,
    load_container,
    read_svmlight,
    save_container,
    sparsity_profile,
)
from minhashreg.study import run_study, summarize_study, tidy_plot_data
from minhashreg.utils import resolve_seed, tabularize_records
from minhashreg.verification import ORACLE_KINDS, build_verification_spec, mc_verify

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
DESIGN_FILE = "S.mhc"
CODES_FILE = "codes.npy"
H_FILE = "H.npy"
M_FILE = "M.npy"
SECOND_S_FILE = "second_S.npy"
LABELS_FILE = "labels.csv"
FIT_FILE = "fit.json"
IMPORTANCE_FILE = "importance.csv"
RAW_RESULTS_FILE = "raw.csv"
SUMMARY_FILE = "summary.csv"
PLOT_DATA_FILE = "plot_data.csv"
REPORT_FILE = "report.jsonl"
REPORT_TABLE_FILE = "report.csv"
BOUNDS_FILE = "bounds.json"

VERBOSITY_LEVELS = [logging.WARNING, logging.INFO, logging.DEBUG]


def _to_jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable.")


class UsageArgumentParser(argparse.ArgumentParser):
    """
    Argument parser exiting with the usage status on malformed command lines.
    """

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunManifest:
    """
    Record of a run: the resolved command line and configuration, the
    seed, the written artifacts and the wall-clock spent.

    Replaying ``argv`` reproduces every artifact except the manifest's
    own wall-clock.
    """

    command: str
    argv: List[str]
    config: Dict
    seed: int
    artifacts: Dict[str, str] = field(default_factory=dict)
    wall_clock: float = 0.0
    version: str = __version__

    def write(self, out_dir: str) -> str:
        path = os.path.join(out_dir, MANIFEST_FILE)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True, default=_to_jsonable)
        return path


def read_manifest(path: str) -> Dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{path}: malformed manifest ({e}).")


def _resolved_argv(argv: List[str], seed: int) -> List[str]:
    if any(token == "--seed" or token.startswith("--seed=") for token in argv):
        return list(argv)
    return list(argv) + ["--seed", str(seed)]


def _read_design(
    path: str, rescale: bool, clip: bool
) -> Tuple[SparseMatrix, Optional[np.ndarray]]:
    with open(path, "rb") as f:
        is_container = f.read(len(CONTAINER_MAGIC)) == CONTAINER_MAGIC
    if is_container:
        X, y = load_container(path), None
    else:
        dataset = read_svmlight(path, rescale=rescale, bounded=not clip)
        X, y = dataset.X, dataset.y
    if clip:
        X = clip_values(X)
    return X, y


def _read_vector(path: str, length: int, name: str) -> np.ndarray:
    """
    First column of a CSV file with a header row.
    """
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataFormatError(f"{path}: malformed {name} file ({e}).")
    if frame.shape[1] == 0:
        raise DataFormatError(f"{path}: {name} file has no columns.")
    vector = pd.to_numeric(frame.iloc[:, 0], errors="coerce").to_numpy(dtype=float)
    if np.any(np.isnan(vector)):
        raise DataFormatError(f"{path}: {name} must be numeric.")
    if len(vector) != length:
        raise DataFormatError(f"{path}: {name} has {len(vector)} entries but S has {length} rows.")
    return vector


def _density(S) -> float:
    n_cells = S.shape[0] * S.shape[1]
    if n_cells == 0:
        return 0.0
    nnz = S.nnz if sp.issparse(S) else int(np.count_nonzero(S))
    return nnz / n_cells


def cmd_hash(args: argparse.Namespace, argv: List[str]) -> int:
    tracker = RuntimeTracker()
    seed = resolve_seed(args.seed)
    config = HashConfig(
        n_permutations=args.L,
        bits=args.b,
        variant=VARIANT_FLAG_LOOKUP[args.variant],
        permutation_mode=args.mode,
        seed=seed,
    )
    if args.importance and config.variant != RANDOM_SIGN_NAME:
        raise ValueError("Importance inputs can only be stored for random-sign hashing.")
    if args.codes and config.variant not in BBIT_VARIANTS:
        raise ValueError("Compact codes are only defined for b-bit hashing.")

    X, y = _read_design(args.input, args.rescale, args.clip)
    profile = sparsity_profile(X)
    e = build_ensemble(config, X.n_cols, materialize_ranks=config.variant in BBIT_VARIANTS)
    output = hash_design(X, e, with_second_min=args.importance)

    tracker.pause_runtime()
    os.makedirs(args.out, exist_ok=True)
    artifacts = {}
    if args.codes:
        artifacts["codes"] = os.path.join(args.out, CODES_FILE)
        np.save(artifacts["codes"], bbit_codes(output.M, e))
    else:
        artifacts["S"] = os.path.join(args.out, DESIGN_FILE)
        if sp.issparse(output.S):
            S_matrix = SparseMatrix.from_csr(output.S)
        else:
            S_matrix = SparseMatrix.from_dense(output.S, bounded=X.bounded)
        save_container(S_matrix, artifacts["S"])
    if args.hashes or args.importance:
        artifacts["H"] = os.path.join(args.out, H_FILE)
        np.save(artifacts["H"], output.H)
    if args.hashes:
        artifacts["M"] = os.path.join(args.out, M_FILE)
        np.save(artifacts["M"], output.M)
    if args.importance:
        artifacts["second_S"] = os.path.join(args.out, SECOND_S_FILE)
        np.save(artifacts["second_S"], output.second_S)
    if y is not None:
        artifacts["labels"] = os.path.join(args.out, LABELS_FILE)
        pd.DataFrame({"y": y}).to_csv(artifacts["labels"], index=False)

    print(
        f"S: {output.S.shape[0]} x {output.S.shape[1]}, density {_density(output.S):.6f}"
    )
    manifest = RunManifest(
        command="hash",
        argv=_resolved_argv(argv, seed),
        config={
            **asdict(config),
            "input": args.input,
            "n": X.n_rows,
            "p": X.n_cols,
            "n_empty_rows": profile.n_empty_rows,
            "rescale": args.rescale,
            "clip": args.clip,
            "codes": args.codes,
            "hashes": args.hashes,
            "importance": args.importance,
        },
        seed=seed,
        artifacts=artifacts,
        wall_clock=tracker.return_runtime(),
    )
    manifest.write(args.out)

    return EXIT_SUCCESS


def _load_hashed_design(hash_dir: str):
    hash_manifest = read_manifest(os.path.join(hash_dir, MANIFEST_FILE))
    hash_config = hash_manifest["config"]
    artifacts = hash_manifest["artifacts"]
    if "codes" in artifacts:
        S = expand_codes(np.load(artifacts["codes"]), hash_config["bits"])
    elif "S" in artifacts:
        S = load_container(artifacts["S"]).to_csr()
        if hash_config["variant"] == RANDOM_SIGN_NAME:
            S = S.toarray()
    else:
        raise DataFormatError(f"{hash_dir}: manifest lists no compressed design.")
    return hash_manifest, S


def cmd_fit(args: argparse.Namespace, argv: List[str]) -> int:
    tracker = RuntimeTracker()
    hash_manifest, S = _load_hashed_design(args.input)
    hash_config = hash_manifest["config"]
    artifacts = hash_manifest["artifacts"]
    n_rows = S.shape[0]

    labels_path = args.labels if args.labels is not None else artifacts.get("labels")
    if labels_path is None:
        raise ValueError("No labels stored with the hashed design; pass --labels.")
    y = _read_vector(labels_path, n_rows, "labels")

    radius = args.radius
    if args.estimator != OLS_NAME and radius is None:
        missing = [
            flag
            for flag, value in (("--eta", args.eta), ("--beta-norm", args.beta_norm), ("--q", args.q))
            if value is None
        ]
        if missing:
            raise ValueError(
                f"Estimator '{args.estimator}' needs --radius or all of --eta, --beta-norm "
                f"and --q (missing {missing})."
            )
        radius = ridge_radius(
            hash_config["p"], args.q, hash_config["n_permutations"], args.beta_norm, args.eta
        )
    procedure = initialize_fit_procedure(args.estimator, radius, fit_intercept=args.fit_intercept)
    fit = procedure.fit(S, y)

    fitted = fit.predict(S)
    metrics = {}
    if args.estimator != LOGISTIC_NAME:
        metrics["train_mse"] = mspe(fitted, y)
    if args.f_star is not None:
        f_star = _read_vector(args.f_star, n_rows, "f_star")
        if args.estimator == LOGISTIC_NAME:
            metrics["excess_risk"] = excess_risk_of_predictor(fitted, f_star)
        else:
            metrics["mspe"] = mspe(fitted, f_star)

    tracker.pause_runtime()
    os.makedirs(args.out, exist_ok=True)
    fit_artifacts = {"fit": os.path.join(args.out, FIT_FILE)}
    with open(fit_artifacts["fit"], "w", encoding="utf-8") as f:
        json.dump({**fit.to_dict(), "metrics": metrics}, f, indent=2, default=_to_jsonable)
    if args.importance:
        if "second_S" not in artifacts:
            raise ValueError("Hash the design with --importance to compute variable importance.")
        importance_table = variable_importance_table(
            fit, np.load(artifacts["H"]), S, np.load(artifacts["second_S"])
        )
        fit_artifacts["importance"] = os.path.join(args.out, IMPORTANCE_FILE)
        importance_table.to_csv(fit_artifacts["importance"], index=False)

    print(f"{fit.estimator} fit on {n_rows} x {S.shape[1]}: ||b|| = {np.linalg.norm(fit.b_hat):.6g}")
    manifest = RunManifest(
        command="fit",
        argv=list(argv),
        config={
            "input": args.input,
            "labels": labels_path,
            "f_star": args.f_star,
            "estimator": args.estimator,
            "radius": radius,
            "eta": args.eta,
            "beta_norm": args.beta_norm,
            "q": args.q,
            "fit_intercept": args.fit_intercept,
            "importance": args.importance,
        },
        seed=hash_manifest["seed"],
        artifacts=fit_artifacts,
        wall_clock=tracker.return_runtime(),
    )
    manifest.write(args.out)

    return EXIT_SUCCESS


def cmd_simulate(args: argparse.Namespace, argv: List[str]) -> int:
    tracker = RuntimeTracker()
    cfg = read_scenario_file(args.scenario)
    # Hard coded precedence: --seed, then MINHASH_SEED, then the scenario's own seed:
    if args.seed is not None or os.environ.get(SEED_ENV_VAR, "").strip() != "":
        cfg = replace(cfg, seed=resolve_seed(args.seed))

    raw_results = run_study(
        cfg,
        args.methods,
        args.L,
        n_ensembles=args.B,
        n_replications=args.reps,
        n_jobs=args.threads,
        progress=args.progress,
    )
    summary = summarize_study(raw_results)

    tracker.pause_runtime()
    os.makedirs(args.out, exist_ok=True)
    artifacts = {
        "raw": os.path.join(args.out, RAW_RESULTS_FILE),
        "summary": os.path.join(args.out, SUMMARY_FILE),
        "plot_data": os.path.join(args.out, PLOT_DATA_FILE),
    }
    raw_results.to_csv(artifacts["raw"], index=False, encoding="utf-8")
    summary.to_csv(artifacts["summary"], index=False, encoding="utf-8")
    tidy_plot_data(summary).to_csv(artifacts["plot_data"], index=False, encoding="utf-8")

    print(summary.to_string(index=False))
    manifest = RunManifest(
        command="simulate",
        argv=_resolved_argv(argv, cfg.seed),
        config={
            **asdict(cfg),
            "methods": list(args.methods),
            "L": list(args.L),
            "B": args.B,
            "reps": args.reps,
        },
        seed=cfg.seed,
        artifacts=artifacts,
        wall_clock=tracker.return_runtime(),
    )
    manifest.write(args.out)

    return EXIT_SUCCESS


def cmd_verify(args: argparse.Namespace, argv: List[str]) -> int:
    tracker = RuntimeTracker()
    seed = resolve_seed(args.seed)
    spec = build_verification_spec(
        oracle=args.oracle,
        n=args.n,
        p=args.p,
        q=args.q,
        n_permutations=args.L,
        seed=seed,
        variant=VARIANT_FLAG_LOOKUP[args.variant],
        bits=args.b,
        q_max=args.q_max,
        weight_kind=args.weights,
        a=args.a,
        eta=args.eta,
        n_interactions=args.interactions,
    )

    os.makedirs(args.out, exist_ok=True)
    report_path = os.path.join(args.out, REPORT_FILE)
    records = []
    with open(report_path, "w", encoding="utf-8") as f:
        for target in args.target:
            record = mc_verify(
                target,
                spec,
                args.reps,
                seed,
                n_jobs=args.threads,
                progress=args.progress,
            )
            f.write(json.dumps(record.to_dict(), sort_keys=True, default=_to_jsonable) + "\n")
            f.flush()
            status = "pass" if record.passed else "FAIL"
            print(
                f"{target}: {status} (estimate {record.estimate:.6g}, se {record.se:.3g}, "
                f"bound {record.bound:.6g})"
            )
            records.append(record)
    table_path = os.path.join(args.out, REPORT_TABLE_FILE)
    tabularize_records([record.to_dict() for record in records]).to_csv(table_path, index=False)

    manifest = RunManifest(
        command="verify",
        argv=_resolved_argv(argv, seed),
        config={**spec.params(), "targets": list(args.target), "reps": args.reps, "eta": args.eta},
        seed=seed,
        artifacts={"report": report_path, "report_table": table_path},
        wall_clock=tracker.return_runtime(),
    )
    all_passed = all(record.passed for record in records)
    manifest.write(args.out)

    return EXIT_SUCCESS if all_passed else EXIT_VERIFICATION_FAILURE


def cmd_bounds(args: argparse.Namespace, argv: List[str]) -> int:
    tracker = RuntimeTracker()
    inputs = BoundInputs(
        n=args.n,
        p=args.p,
        q=args.q,
        n_permutations=args.L,
        bits=args.b,
        sigma=args.sigma,
        eta=args.eta,
        beta_norm=args.beta_norm,
        interaction_norm=args.interaction_norm,
    )
    report = bound_report(inputs)

    os.makedirs(args.out, exist_ok=True)
    bounds_path = os.path.join(args.out, BOUNDS_FILE)
    with open(bounds_path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True, default=_to_jsonable)
    for name, value in report.to_dict().items():
        if name != "inputs" and value is not None:
            print(f"{name}: {value}")

    manifest = RunManifest(
        command="bounds",
        argv=list(argv),
        config=asdict(inputs),
        seed=resolve_seed(None),
        artifacts={"bounds": bounds_path},
        wall_clock=tracker.return_runtime(),
    )
    manifest.write(args.out)

    return EXIT_SUCCESS


def _with_out_dir(argv: List[str], out_dir: str) -> List[str]:
    """
    Copy of argv writing to out_dir, for both the '--out DIR' and '--out=DIR' forms.
    """
    replaced = list(argv)
    for index, token in enumerate(replaced):
        if token == "--out" and index + 1 < len(replaced):
            replaced[index + 1] = out_dir
            return replaced
        if token.startswith("--out="):
            replaced[index] = f"--out={out_dir}"
            return replaced
    return replaced + ["--out", out_dir]


def cmd_replay(args: argparse.Namespace, argv: List[str]) -> int:
    manifest = read_manifest(args.manifest)
    replay_argv = list(manifest["argv"])
    if args.out is not None:
        replay_argv = _with_out_dir(replay_argv, args.out)
    logger.info(f"Replaying {manifest['command']} with {replay_argv}.")
    return main(replay_argv)


def build_parser() -> argparse.ArgumentParser:
    parser = UsageArgumentParser(
        prog="minhashreg",
        description="Min-wise hashing compression of sparse designs and regression on the hashed data.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(subparser):
        subparser.add_argument("--out", type=str, required=True, help="Output directory")
        subparser.add_argument(
            "-v", "--verbose", action="count", default=0, help="More logging (-v info, -vv debug)"
        )

    p_hash = sub.add_parser("hash", help="Hash a sparse design into a compressed design S")
    p_hash.add_argument("--input", type=str, required=True, help="svmlight file or sparse container")
    p_hash.add_argument(
        "--variant", choices=list(VARIANT_FLAG_LOOKUP), default="random-sign", help="Hashing variant"
    )
    p_hash.add_argument("--L", type=int, required=True, help="Number of permutations")
    p_hash.add_argument("--b", type=int, default=1, help="Bits kept by b-bit variants")
    p_hash.add_argument("--seed", type=int, default=None, help=f"Seed (default: ${SEED_ENV_VAR} or 0)")
    p_hash.add_argument(
        "--mode", choices=PERMUTATION_MODES, default=FISHER_YATES_NAME, help="Permutation generation"
    )
    scaling = p_hash.add_mutually_exclusive_group()
    scaling.add_argument("--rescale", action="store_true", help="Divide values by max |value|")
    scaling.add_argument("--clip", action="store_true", help="Map values through v / max |v|")
    p_hash.add_argument("--codes", action="store_true", help="Store compact b-bit codes instead of S")
    p_hash.add_argument("--hashes", action="store_true", help="Also store H and M")
    p_hash.add_argument(
        "--importance", action="store_true", help="Also store H and runner-up values for importance"
    )
    add_common(p_hash)
    p_hash.set_defaults(handler=cmd_hash)

    p_fit = sub.add_parser("fit", help="Fit an estimator on a hashed design")
    p_fit.add_argument("--input", type=str, required=True, help="Output directory of a hash run")
    p_fit.add_argument("--labels", type=str, default=None, help="CSV of responses (first column)")
    p_fit.add_argument("--f-star", type=str, default=None, help="CSV of the true mean (first column)")
    p_fit.add_argument("--estimator", choices=ESTIMATORS, default=OLS_NAME, help="Estimator")
    p_fit.add_argument("--radius", type=float, default=None, help="Norm constraint radius")
    p_fit.add_argument("--eta", type=float, default=None, help="Radius slack eta")
    p_fit.add_argument("--beta-norm", type=float, default=None, help="Norm of the true coefficients")
    p_fit.add_argument("--q", type=int, default=None, help="Row sparsity q")
    p_fit.add_argument("--fit-intercept", action="store_true", help="Intercept in logistic fits")
    p_fit.add_argument("--importance", action="store_true", help="Write the variable importance table")
    add_common(p_fit)
    p_fit.set_defaults(handler=cmd_fit)

    p_sim = sub.add_parser("simulate", help="Run a replicated compression study on a scenario")
    p_sim.add_argument("--scenario", type=str, required=True, help="Scenario file (key = value)")
    p_sim.add_argument(
        "--methods", nargs="+", choices=SIMULATION_METHODS, default=SIMULATION_METHODS, help="Methods"
    )
    p_sim.add_argument("--L", nargs="+", type=int, required=True, help="Compressed column grid")
    p_sim.add_argument("--B", type=int, default=1, help="Aggregated ensembles per fit")
    p_sim.add_argument("--reps", type=int, default=1, help="Scenario replications")
    p_sim.add_argument("--seed", type=int, default=None, help="Overrides the scenario seed")
    p_sim.add_argument("--threads", type=int, default=1, help="Parallel workers")
    p_sim.add_argument("--progress", action="store_true", help="Show progress bars")
    add_common(p_sim)
    p_sim.set_defaults(handler=cmd_simulate)

    p_ver = sub.add_parser("verify", help="Monte Carlo check of oracle unbiasedness and bounds")
    p_ver.add_argument("--target", nargs="+", choices=VERIFICATION_TARGETS, required=True)
    p_ver.add_argument("--oracle", choices=ORACLE_KINDS, default=MAIN_ORACLE_NAME)
    p_ver.add_argument("--variant", choices=list(VARIANT_FLAG_LOOKUP), default="random-sign")
    p_ver.add_argument("--n", type=int, default=20, help="Rows")
    p_ver.add_argument("--p", type=int, default=30, help="Columns")
    p_ver.add_argument("--q", type=int, default=5, help="Row sparsity (minimum when --q-max is set)")
    p_ver.add_argument("--q-max", type=int, default=None, help="Maximal row sparsity")
    p_ver.add_argument("--L", type=int, default=32, help="Number of permutations")
    p_ver.add_argument("--b", type=int, default=1, help="Bits of b-bit variants")
    p_ver.add_argument("--weights", choices=SCALED_WEIGHT_KINDS, default=None, help="Scaled weights")
    p_ver.add_argument("--a", type=float, default=0.0, help="Exponent of the row scaling")
    p_ver.add_argument("--eta", type=float, default=1.0, help="Concentration slack eta")
    p_ver.add_argument("--interactions", type=int, default=3, help="Pair coefficients drawn")
    p_ver.add_argument("--reps", type=int, default=DEFAULT_REPLICATIONS, help="Replications R")
    p_ver.add_argument("--seed", type=int, default=None, help=f"Seed (default: ${SEED_ENV_VAR} or 0)")
    p_ver.add_argument("--threads", type=int, default=1, help="Parallel workers")
    p_ver.add_argument("--progress", action="store_true", help="Show progress bars")
    add_common(p_ver)
    p_ver.set_defaults(handler=cmd_verify)

    p_bounds = sub.add_parser("bounds", help="Evaluate the closed-form bounds of a configuration")
    p_bounds.add_argument("--n", type=int, required=True, help="Rows")
    p_bounds.add_argument("--p", type=int, required=True, help="Columns")
    p_bounds.add_argument("--q", type=int, required=True, help="Row sparsity")
    p_bounds.add_argument("--L", type=int, required=True, help="Number of permutations")
    p_bounds.add_argument("--b", type=int, default=None, help="Bits of b-bit hashing")
    p_bounds.add_argument("--sigma", type=float, default=None, help="Noise standard deviation")
    p_bounds.add_argument("--eta", type=float, default=1.0, help="Radius slack eta")
    p_bounds.add_argument("--beta-norm", type=float, default=None, help="Norm of beta")
    p_bounds.add_argument(
        "--interaction-norm", type=float, default=None, help="Norm of interaction coefficients"
    )
    add_common(p_bounds)
    p_bounds.set_defaults(handler=cmd_bounds)

    p_replay = sub.add_parser("replay", help="Re-run the command recorded in a manifest")
    p_replay.add_argument("manifest", type=str, help="Path to a manifest.json")
    p_replay.add_argument("--out", type=str, default=None, help="Output directory override")
    p_replay.add_argument("-v", "--verbose", action="count", default=0)
    p_replay.set_defaults(handler=cmd_replay)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    logging.basicConfig(
        level=VERBOSITY_LEVELS[min(args.verbose, len(VERBOSITY_LEVELS) - 1)],
        format="%(asctime)s %(name)s %(levelname)s: %(message)s",
    )
    try:
        return args.handler(args, argv)
    except DataFormatError as e:
        logger.error(str(e))
        return EXIT_FORMAT
    except IncompatibleDataError as e:
        logger.error(str(e))
        return EXIT_INCOMPATIBLE_DATA
    except OSError as e:
        logger.error(str(e))
        return EXIT_FORMAT
    except ValueError as e:
        logger.error(str(e))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
