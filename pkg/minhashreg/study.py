import logging
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from minhashreg.bounds import ridge_radius
from minhashreg.config import (
    BBIT_SHUFFLED_NAME,
    METHOD_BITS_LOOKUP,
    RANDOM_PROJECTION_METHOD_NAME,
    RANDOM_SIGN_METHOD_NAME,
    RANDOM_SIGN_NAME,
    REPLICATE_STREAM,
    SIMULATION_METHODS,
)
from minhashreg.estimation import (
    LogisticProcedure,
    OLSProcedure,
    RidgeProcedure,
    aggregate_predict,
    excess_risk_of_predictor,
    mspe,
)
from minhashreg.hashing import HashConfig, random_projection
from minhashreg.preprocessing import binarize
from minhashreg.simulation import ScenarioConfig, SimulatedDataset, generate_scenario, signal_norms
from minhashreg.utils import derive_seed
from minhashreg.wrapping import FitProcedure

logger = logging.getLogger(__name__)

# Slack of the oracle radius used by constrained fits in the study:
STUDY_RADIUS_ETA = 1.0

MSPE_METRIC_NAME = "mspe"
EXCESS_RISK_METRIC_NAME = "excess_risk"


def method_permutations(method: str, n_columns: int) -> int:
    """
    Number of permutations (or projections) giving a method n_columns columns.

    b-bit methods spend 2^b columns per permutation, so their grid value
    is divided by 2^b.
    """
    if method not in SIMULATION_METHODS:
        raise ValueError(f"Method must be one of {SIMULATION_METHODS}, got '{method}'.")
    if method in METHOD_BITS_LOOKUP:
        n_codes = 2 ** METHOD_BITS_LOOKUP[method]
        if n_columns < n_codes:
            raise ValueError(
                f"Method '{method}' needs at least {n_codes} columns, got {n_columns}."
            )
        return n_columns // n_codes
    return n_columns


def _study_procedure(
    cfg: ScenarioConfig,
    n_permutations: int,
    n_columns: int,
    coefficient_norm: float,
    interaction: bool,
) -> FitProcedure:
    radius = ridge_radius(
        cfg.p, cfg.q, n_permutations, coefficient_norm, STUDY_RADIUS_ETA, interaction=interaction
    )
    if cfg.response == "logistic":
        return LogisticProcedure(radius)
    if n_columns < cfg.n - 1:
        return OLSProcedure(warn_rank_deficient=False)
    return RidgeProcedure(radius)


def _method_prediction(
    method: str,
    dataset: SimulatedDataset,
    n_permutations: int,
    procedure: FitProcedure,
    n_ensembles: int,
    seed: int,
) -> np.ndarray:
    if method == RANDOM_PROJECTION_METHOD_NAME:
        predictions = []
        for j in range(n_ensembles):
            S = random_projection(dataset.X, n_permutations, derive_seed(seed, REPLICATE_STREAM, j))
            predictions.append(procedure.fit(S, dataset.y).predict(S))
        return np.mean(predictions, axis=0)

    if method == RANDOM_SIGN_METHOD_NAME:
        X, config = dataset.X, HashConfig(n_permutations, variant=RANDOM_SIGN_NAME, seed=seed)
    else:
        X = binarize(dataset.X)
        config = HashConfig(
            n_permutations, bits=METHOD_BITS_LOOKUP[method], variant=BBIT_SHUFFLED_NAME, seed=seed
        )
    seeds = [derive_seed(seed, REPLICATE_STREAM, j) for j in range(n_ensembles)]
    return aggregate_predict(X, dataset.y, config, n_ensembles, procedure, seeds=seeds)


def _replicate_records(
    cfg: ScenarioConfig,
    methods: Sequence[str],
    column_grid: Sequence[int],
    n_ensembles: int,
    replicate: int,
) -> List[Dict]:
    replicate_cfg = cfg.for_replicate(replicate)
    dataset = generate_scenario(replicate_cfg)
    coefficient_norm, interaction = signal_norms(replicate_cfg, dataset)
    metric = EXCESS_RISK_METRIC_NAME if cfg.response == "logistic" else MSPE_METRIC_NAME

    records = []
    for grid_index, n_columns in enumerate(column_grid):
        ensemble_seed = derive_seed(replicate_cfg.seed, REPLICATE_STREAM, grid_index)
        for method in methods:
            n_permutations = method_permutations(method, n_columns)
            procedure = _study_procedure(
                cfg, n_permutations, n_columns, coefficient_norm, interaction
            )
            prediction = _method_prediction(
                method, dataset, n_permutations, procedure, n_ensembles, ensemble_seed
            )
            if metric == MSPE_METRIC_NAME:
                value = mspe(prediction, dataset.f_star)
            else:
                value = excess_risk_of_predictor(prediction, dataset.f_star)
            records.append(
                {
                    "scenario": cfg.name,
                    "replicate": replicate,
                    "method": method,
                    "L": n_columns,
                    "estimator": procedure.name,
                    "metric": metric,
                    "value": value,
                }
            )
    return records


def run_study(
    cfg: ScenarioConfig,
    methods: Sequence[str],
    column_grid: Sequence[int],
    n_ensembles: int = 1,
    n_replications: int = 1,
    n_jobs: int = 1,
    progress: bool = False,
) -> pd.DataFrame:
    """
    Compare compression methods on replicated draws of a scenario.

    Every method is fitted on every replicate at every grid value L:
    OLS when L < n - 1, constrained ridge with the oracle radius
    otherwise, and constrained logistic regression on logistic scenarios.

    Parameters
    ----------
    cfg :
        Scenario.
    methods :
        Method names among bbit1, bbit4, rs and rp.
    column_grid :
        Numbers L of compressed columns.
    n_ensembles :
        Number B of aggregated ensembles per fit.
    n_replications :
        Number of scenario replicates.
    n_jobs :
        Number of joblib workers over replicates.
    progress :
        Whether to show a progress bar.

    Returns
    -------
    raw_results :
        One row per (replicate, method, L) with the realized metric.
    """
    unknown = [method for method in methods if method not in SIMULATION_METHODS]
    if unknown:
        raise ValueError(f"Unknown methods {unknown}; choose from {SIMULATION_METHODS}.")
    if len(methods) == 0 or len(column_grid) == 0:
        raise ValueError("The study needs at least one method and one grid value.")
    if n_ensembles < 1 or n_replications < 1:
        raise ValueError(
            f"Ensembles and replications must be positive, got {n_ensembles} and {n_replications}."
        )
    for method in methods:
        for n_columns in column_grid:
            method_permutations(method, n_columns)

    replicate_records = Parallel(n_jobs=n_jobs)(
        delayed(_replicate_records)(cfg, methods, column_grid, n_ensembles, replicate)
        for replicate in tqdm(range(n_replications), desc="Replicates", disable=not progress)
    )
    raw_results = pd.DataFrame(
        [record for records in replicate_records for record in records]
    )
    logger.info(f"Study of '{cfg.name}' produced {len(raw_results)} results.")

    return raw_results


def summarize_study(raw_results: pd.DataFrame) -> pd.DataFrame:
    """
    Mean metric, its standard error and the metric relative to the best method at each L.
    """
    summary = (
        raw_results.groupby(["scenario", "method", "L", "metric"], sort=False)["value"]
        .agg(mean="mean", se="sem", replications="count")
        .reset_index()
    )
    summary["relative"] = summary["mean"] / summary.groupby(["scenario", "L"])["mean"].transform(
        "min"
    )
    return summary.sort_values(["scenario", "L", "method"], kind="stable").reset_index(drop=True)


def tidy_plot_data(summary: pd.DataFrame) -> pd.DataFrame:
    """
    Long format (x = L, y = mean metric, series = method) for external plotting.
    """
    return pd.DataFrame(
        {
            "x": summary["L"].to_numpy(),
            "y": summary["mean"].to_numpy(),
            "series": summary["method"].to_numpy(),
            "metric": summary["metric"].to_numpy(),
        }
    )
