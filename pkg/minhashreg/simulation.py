import logging
import math
from dataclasses import dataclass, fields, replace
from typing import Dict, NamedTuple, Optional, Tuple

import numpy as np
from scipy.special import expit

from minhashreg.config import (
    COEFFICIENT_KINDS,
    COEFFICIENT_STREAM,
    DESIGN_DISTRIBUTIONS,
    DESIGN_STREAM,
    INTERACTION_STREAM,
    MAX_SIGNAL_REDRAWS,
    NOISE_STREAM,
    REPLICATE_STREAM,
    RESPONSE_KINDS,
    ROW_SCALINGS,
)
from minhashreg.oracle import InteractionModelSpec, interaction_norm, scaled_signal
from minhashreg.preprocessing import clip_values
from minhashreg.sparse import DataFormatError, SparseMatrix
from minhashreg.utils import derive_seed, spawn_generator

logger = logging.getLogger(__name__)

# Exponent a of the delta^(-a) row scaling of each scaling name:
ROW_SCALING_EXPONENTS: Dict[str, float] = {"none": 0.0, "l2": 0.5, "l1": 1.0}

# Hard coded sub-stream indices within the design stream:
VALUE_DRAWS_INDEX = 0
COPY_DRAWS_INDEX = 1


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Synthetic regression scenario.

    Parameters
    ----------
    n, p, q :
        Rows, columns and expected row sparsity; entries are non-zero
        with probability q / p.
    rho :
        Probability of copying each entry from its left neighbour.
    sigma :
        Noise standard deviation of Gaussian responses.
    interaction_strength :
        Weight kappa of the normalized block interaction signal.
    design :
        Distribution of the non-zero values.
    coefficients :
        Kind of main effect coefficients.
    scaling :
        Row scaling of the main effect signal.
    response :
        Gaussian or logistic responses.
    main_effects :
        Whether the linear signal X beta enters f*.
    clip :
        Whether to map values through v / max|v|.
    seed :
        Scenario seed.
    name :
        Label carried to result tables.
    """

    n: int
    p: int
    q: int
    rho: float = 0.0
    sigma: float = 1.0
    interaction_strength: float = 0.0
    design: str = "binary"
    coefficients: str = "exponential"
    scaling: str = "none"
    response: str = "gaussian"
    main_effects: bool = True
    clip: bool = False
    seed: int = 0
    name: str = "scenario"

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValueError(f"n and p must be positive, got n={self.n}, p={self.p}.")
        if not 1 <= self.q <= self.p:
            raise ValueError(f"q must lie in [1, p={self.p}], got {self.q}.")
        if not 0 <= self.rho < 1:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}.")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}.")
        if self.design not in DESIGN_DISTRIBUTIONS:
            raise ValueError(f"design must be one of {DESIGN_DISTRIBUTIONS}, got '{self.design}'.")
        if self.coefficients not in COEFFICIENT_KINDS:
            raise ValueError(
                f"coefficients must be one of {COEFFICIENT_KINDS}, got '{self.coefficients}'."
            )
        if self.scaling not in ROW_SCALINGS:
            raise ValueError(f"scaling must be one of {ROW_SCALINGS}, got '{self.scaling}'.")
        if self.response not in RESPONSE_KINDS:
            raise ValueError(f"response must be one of {RESPONSE_KINDS}, got '{self.response}'.")
        if not self.main_effects and self.interaction_strength == 0:
            raise ValueError("A scenario without main effects needs a non-zero interaction strength.")
        if self.interaction_strength != 0 and self.p - self.block_size < 1:
            raise ValueError(
                f"Interaction blocks of size {self.block_size} do not fit twice in p={self.p}."
            )
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}.")

    @property
    def block_size(self) -> int:
        return math.ceil(self.p / self.q)

    @property
    def has_interactions(self) -> bool:
        return self.interaction_strength != 0

    def for_replicate(self, replicate: int) -> "ScenarioConfig":
        return replace(self, seed=derive_seed(self.seed, REPLICATE_STREAM, replicate))


class InteractionSignal(NamedTuple):
    """
    Normalized product of two block sums, g = scale * (X 1_I1) * (X 1_I2).
    """

    g: np.ndarray
    first_block: np.ndarray
    second_block: np.ndarray
    scale: float


class SimulatedDataset(NamedTuple):
    X: SparseMatrix
    beta: Optional[np.ndarray]
    interaction: Optional[InteractionSignal]
    f_star: np.ndarray
    y: np.ndarray


def _bool_value(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ValueError(f"'{raw}' is not a boolean.")


def parse_scenario(text: str) -> ScenarioConfig:
    """
    Parse a flat key = value scenario description.

    '#' starts a comment and blank lines are skipped. Keys are the
    ScenarioConfig field names.
    """
    field_types = {config_field.name: config_field.type for config_field in fields(ScenarioConfig)}
    values: Dict = {}
    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if line == "":
            continue
        if "=" not in line:
            raise DataFormatError(f"Line {line_number}: expected 'key = value', got '{line}'.")
        key, raw_value = (part.strip() for part in line.split("=", 1))
        if key not in field_types:
            raise DataFormatError(f"Line {line_number}: unknown scenario key '{key}'.")
        if key in values:
            raise DataFormatError(f"Line {line_number}: duplicate scenario key '{key}'.")
        field_type = field_types[key]
        try:
            if field_type in (int, "int"):
                values[key] = int(raw_value)
            elif field_type in (float, "float"):
                values[key] = float(raw_value)
            elif field_type in (bool, "bool"):
                values[key] = _bool_value(raw_value)
            else:
                values[key] = raw_value
        except ValueError:
            raise DataFormatError(
                f"Line {line_number}: cannot read '{raw_value}' as {key}."
            )
    missing = [key for key in ("n", "p", "q") if key not in values]
    if missing:
        raise DataFormatError(f"Scenario is missing required keys {missing}.")

    return ScenarioConfig(**values)


def read_scenario_file(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as scenario_file:
        return parse_scenario(scenario_file.read())


def gen_design(cfg: ScenarioConfig) -> SparseMatrix:
    """
    Draw a correlated sparse design.

    Each entry is non-zero with probability q / p, with value one, a
    standard normal or a standard exponential draw. Then, for k = 2..p
    in order, every entry is replaced by its left neighbour with
    probability rho, so copies propagate along runs.

    Parameters
    ----------
    cfg :
        Scenario.

    Returns
    -------
    X :
        Design, marked unbounded when raw non-binary values exceed one
        and the scenario does not clip.
    """
    n, p = cfg.n, cfg.p
    value_rng = spawn_generator(cfg.seed, DESIGN_STREAM, VALUE_DRAWS_INDEX)
    non_zero = value_rng.random((n, p)) < cfg.q / cfg.p
    if cfg.design == "binary":
        values = np.ones((n, p))
    elif cfg.design == "gaussian":
        values = value_rng.standard_normal((n, p))
    else:
        values = value_rng.standard_exponential((n, p))
    dense = np.where(non_zero, values, 0.0)

    copy_rng = spawn_generator(cfg.seed, DESIGN_STREAM, COPY_DRAWS_INDEX)
    copies = copy_rng.random((n, p)) < cfg.rho
    copies[:, 0] = False
    # Entry k ends up holding the original entry of the last uncopied column at or before k.
    sources = np.maximum.accumulate(np.where(copies, 0, np.arange(p)[None, :]), axis=1)
    dense = np.take_along_axis(dense, sources, axis=1)

    X = SparseMatrix.from_dense(dense, bounded=bool(np.all(np.abs(dense) <= 1)))
    if cfg.clip:
        X = clip_values(X)
    logger.debug(f"Generated {n}x{p} {cfg.design} design with {X.nnz} non-zeros.")

    return X


def _row_scaling_exponent(cfg: ScenarioConfig) -> float:
    return ROW_SCALING_EXPONENTS[cfg.scaling]


def main_signal(cfg: ScenarioConfig, X: SparseMatrix, beta: np.ndarray) -> np.ndarray:
    """
    Main effect signal, row-scaled by delta_i^(-a) for l2 and l1 scalings.
    """
    return scaled_signal(X, beta, a=_row_scaling_exponent(cfg))


def gen_coefficients(cfg: ScenarioConfig, X: SparseMatrix) -> np.ndarray:
    """
    Draw main effect coefficients normalized so that the signal has unit mean square.

    Exponential coefficients are i.i.d. standard exponential, Brownian
    ones are partial sums of i.i.d. standard normals.

    Returns
    -------
    beta :
        Coefficients with ||f||^2 / n = 1 for the scenario's main signal f.
    """
    for attempt in range(MAX_SIGNAL_REDRAWS):
        rng = spawn_generator(cfg.seed, COEFFICIENT_STREAM, attempt)
        if cfg.coefficients == "exponential":
            beta = rng.standard_exponential(cfg.p)
        else:
            beta = np.cumsum(rng.standard_normal(cfg.p))
        mean_square = float(np.mean(main_signal(cfg, X, beta) ** 2))
        if mean_square > 0:
            return beta / math.sqrt(mean_square)
        logger.debug(f"Degenerate coefficient draw {attempt}, redrawing.")
    raise RuntimeError(
        f"No non-degenerate coefficients after {MAX_SIGNAL_REDRAWS} draws; the design may be empty."
    )


def gen_interaction(cfg: ScenarioConfig, X: SparseMatrix) -> InteractionSignal:
    """
    Draw a block interaction signal.

    Two blocks of ceil(p / q) consecutive columns start at uniform
    positions in {1, ..., p - ceil(p / q)}, and g_i is the product of the
    row's sums over both blocks, normalized to unit mean square.
    """
    size = cfg.block_size
    n_starts = cfg.p - size
    if n_starts < 1:
        raise ValueError(f"Blocks of size {size} leave no start positions in p={cfg.p}.")
    X_csr = X.to_csr()
    for attempt in range(MAX_SIGNAL_REDRAWS):
        rng = spawn_generator(cfg.seed, INTERACTION_STREAM, attempt)
        first_start, second_start = rng.integers(0, n_starts, size=2)
        first_block = np.arange(first_start, first_start + size)
        second_block = np.arange(second_start, second_start + size)
        first_sums = np.asarray(X_csr[:, first_block].sum(axis=1)).ravel()
        second_sums = np.asarray(X_csr[:, second_block].sum(axis=1)).ravel()
        raw = first_sums * second_sums
        mean_square = float(np.mean(raw**2))
        if mean_square > 0:
            scale = 1 / math.sqrt(mean_square)
            return InteractionSignal(
                g=raw * scale, first_block=first_block, second_block=second_block, scale=scale
            )
        logger.debug(f"Degenerate interaction draw {attempt}, redrawing.")
    raise RuntimeError(f"No non-degenerate interaction after {MAX_SIGNAL_REDRAWS} draws.")


def interaction_model(
    cfg: ScenarioConfig, beta: Optional[np.ndarray], interaction: InteractionSignal
) -> InteractionModelSpec:
    """
    Express main effects plus kappa * g as main effect and pair coefficients.

    On binary designs X_k1 X_k2 = X_k1 - X_k1 1{X_k2 = 0}, so the block
    product contributes |I2| scale to theta1 on I1 (one more per column
    shared by both blocks) and -scale to theta2 on the off-diagonal
    pairs of I1 x I2.
    """
    p = cfg.p
    weight = cfg.interaction_strength * interaction.scale
    theta1 = np.zeros(p) if beta is None or not cfg.main_effects else np.array(beta, dtype=float)
    triples = []
    for k1 in interaction.first_block:
        for k2 in interaction.second_block:
            theta1[k1] += weight
            if k1 != k2:
                triples.append((int(k1), int(k2), -weight))
    return InteractionModelSpec.from_triples(theta1, triples)


def gen_response(
    f_star: np.ndarray, sigma: float, seed: int, kind: str = "gaussian"
) -> np.ndarray:
    """
    Draw y = f* + eps with eps ~ N(0, sigma^2), or y ~ Bernoulli(logistic(f*)).
    """
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}.")
    f_star = np.asarray(f_star, dtype=float)
    rng = spawn_generator(seed, NOISE_STREAM)
    if kind == "gaussian":
        if sigma == 0:
            return f_star.copy()
        return f_star + sigma * rng.standard_normal(len(f_star))
    elif kind == "logistic":
        return (rng.random(len(f_star)) < expit(f_star)).astype(float)
    else:
        raise ValueError(f"Response kind must be one of {RESPONSE_KINDS}, got '{kind}'.")


def generate_scenario(cfg: ScenarioConfig) -> SimulatedDataset:
    """
    Draw the design, signal and response of one scenario realization.
    """
    X = gen_design(cfg)
    f_star = np.zeros(cfg.n)
    beta = None
    if cfg.main_effects:
        beta = gen_coefficients(cfg, X)
        f_star = f_star + main_signal(cfg, X, beta)
    interaction = None
    if cfg.has_interactions:
        interaction = gen_interaction(cfg, X)
        f_star = f_star + cfg.interaction_strength * interaction.g
    y = gen_response(f_star, cfg.sigma, cfg.seed, kind=cfg.response)

    return SimulatedDataset(X=X, beta=beta, interaction=interaction, f_star=f_star, y=y)


def signal_norms(cfg: ScenarioConfig, dataset: SimulatedDataset) -> Tuple[float, bool]:
    """
    Coefficient norm entering the oracle radius, and whether it is an interaction norm.
    """
    if dataset.interaction is None:
        return float(np.linalg.norm(dataset.beta)), False
    spec = interaction_model(cfg, dataset.beta, dataset.interaction)
    return interaction_norm(spec, cfg.p, cfg.q), True
