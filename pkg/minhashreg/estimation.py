import logging
from dataclasses import dataclass, replace
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.sparse as sp
from joblib import Parallel, delayed
from scipy.sparse.linalg import LinearOperator, cg
from scipy.special import expit
from sklearn.metrics import mean_squared_error

from minhashreg.config import (
    BBIT_VARIANTS,
    CG_TOLERANCE,
    LOGISTIC_ARMIJO_C,
    LOGISTIC_DECREASE_TOLERANCE,
    LOGISTIC_MAX_ITERATIONS,
    LOGISTIC_NAME,
    LOGISTIC_STEP_SHRINK,
    NORMAL_EQUATIONS_MAX_COLUMNS,
    OLS_NAME,
    OLS_RANK_TOLERANCE,
    RANDOM_SIGN_NAME,
    REPLICATE_STREAM,
    RIDGE_MAX_BISECTIONS,
    RIDGE_NAME,
    RIDGE_RADIUS_TOLERANCE,
)
from minhashreg.hashing import HashConfig, build_ensemble, hash_design
from minhashreg.optimization import RuntimeTracker
from minhashreg.sparse import SparseMatrix
from minhashreg.utils import derive_seed
from minhashreg.wrapping import FitProcedure

logger = logging.getLogger(__name__)

CompressedDesign = Union[np.ndarray, sp.spmatrix]


@dataclass(frozen=True, eq=False)
class FitResult:
    """
    Coefficients and solver diagnostics of a fit on a compressed design.

    Parameters
    ----------
    b_hat :
        Coefficients, one per column of S.
    estimator :
        Estimator name.
    alpha_hat :
        Intercept, None for logistic fits without intercept.
    radius :
        Norm constraint radius of constrained fits.
    iterations :
        Bisection steps (ridge) or accepted gradient steps (logistic).
    multiplier :
        Final Lagrange multiplier lambda of an active ridge constraint.
    objective :
        Residual sum of squares (least squares fits) or average logistic loss.
    rank :
        Numerical rank of the centered design, when factorized.
    converged :
        Whether the solver met its stopping rule.
    runtime :
        Wall-clock seconds spent fitting.
    objective_path :
        Loss after the start and after every accepted step (logistic fits).
    """

    b_hat: np.ndarray
    estimator: str
    alpha_hat: Optional[float] = None
    radius: Optional[float] = None
    iterations: int = 0
    multiplier: Optional[float] = None
    objective: Optional[float] = None
    rank: Optional[int] = None
    converged: bool = True
    runtime: float = 0.0
    objective_path: Optional[np.ndarray] = None

    def predict(self, S: CompressedDesign) -> np.ndarray:
        """
        Fitted values alpha + S b, the linear predictor for logistic fits.
        """
        prediction = np.asarray(S @ self.b_hat, dtype=float).ravel()
        if self.alpha_hat is not None:
            prediction = prediction + self.alpha_hat
        return prediction

    def predict_proba(self, S: CompressedDesign) -> np.ndarray:
        if self.estimator != LOGISTIC_NAME:
            raise ValueError(f"Probabilities are only defined for {LOGISTIC_NAME} fits.")
        return expit(self.predict(S))

    def to_dict(self) -> Dict:
        return {
            "estimator": self.estimator,
            "alpha_hat": self.alpha_hat,
            "b_hat": self.b_hat.tolist(),
            "b_norm": float(np.linalg.norm(self.b_hat)),
            "radius": self.radius,
            "iterations": self.iterations,
            "multiplier": self.multiplier,
            "objective": self.objective,
            "rank": self.rank,
            "converged": self.converged,
            "runtime": self.runtime,
        }


@dataclass(frozen=True, eq=False)
class LinearModelSpec:
    """
    Mean model Y = alpha* 1 + X beta* + gamma + eps of a regression problem.

    f_star holds the realized mean vector, which for interaction models
    is the interaction signal instead of X beta*.
    """

    alpha_star: float
    beta_star: np.ndarray
    gamma: np.ndarray
    sigma: float
    f_star: np.ndarray

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=float)
        f_star = np.asarray(self.f_star, dtype=float)
        if gamma.shape != f_star.shape:
            raise ValueError(
                f"gamma and f_star must have equal shapes, got {gamma.shape} and {f_star.shape}."
            )
        if abs(gamma.sum()) > 1e-10 * max(1.0, float(np.abs(gamma).sum())):
            raise ValueError(f"Structural errors must sum to zero, got sum {gamma.sum()}.")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}.")
        if not np.all(np.isfinite(f_star)):
            raise ValueError("f_star must be finite.")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "f_star", f_star)
        object.__setattr__(self, "beta_star", np.asarray(self.beta_star, dtype=float))

    @classmethod
    def from_design(
        cls,
        X: SparseMatrix,
        beta_star: np.ndarray,
        alpha_star: float = 0.0,
        gamma: Optional[np.ndarray] = None,
        sigma: float = 0.0,
        signal: Optional[np.ndarray] = None,
    ) -> "LinearModelSpec":
        gamma = np.zeros(X.n_rows) if gamma is None else np.asarray(gamma, dtype=float)
        signal = X.dot(beta_star) if signal is None else np.asarray(signal, dtype=float)
        return cls(
            alpha_star=alpha_star,
            beta_star=beta_star,
            gamma=gamma,
            sigma=sigma,
            f_star=alpha_star + signal + gamma,
        )


class _CenteredDesign:
    """
    Column-centered view of S, factorized by SVD when it has few columns.
    """

    def __init__(self, S: CompressedDesign):
        self.S = S
        self.n_rows, self.n_cols = S.shape
        self.column_means = np.asarray(S.mean(axis=0), dtype=float).ravel()
        self.factorized = self.n_cols <= NORMAL_EQUATIONS_MAX_COLUMNS
        if self.factorized:
            dense = S.toarray() if sp.issparse(S) else np.asarray(S, dtype=float)
            U, s, Vt = scipy.linalg.svd(dense - self.column_means, full_matrices=False)
            self.left_vectors, self.singular_values, self.right_vectors_t = U, s, Vt

    @property
    def numerical_support(self) -> np.ndarray:
        s = self.singular_values
        if len(s) == 0 or s.max() == 0:
            return np.zeros(len(s), dtype=bool)
        return s > OLS_RANK_TOLERANCE * s.max()

    def matvec(self, b: np.ndarray) -> np.ndarray:
        return np.asarray(self.S @ b, dtype=float).ravel() - self.column_means @ b

    def rmatvec(self, r: np.ndarray) -> np.ndarray:
        return np.asarray(self.S.T @ r, dtype=float).ravel() - self.column_means * r.sum()

    def gram_operator(self, lam: float) -> LinearOperator:
        return LinearOperator(
            (self.n_cols, self.n_cols),
            matvec=lambda b: self.rmatvec(self.matvec(np.ravel(b))) + lam * np.ravel(b),
            dtype=float,
        )


def _solve_conjugate_gradient(design: _CenteredDesign, y_centered: np.ndarray, lam: float) -> np.ndarray:
    b, info = cg(design.gram_operator(lam), design.rmatvec(y_centered), rtol=CG_TOLERANCE)
    if info != 0:
        logger.warning(f"Conjugate gradient stopped without converging (info={info}).")
    return b


def _centered_response(y: np.ndarray, n_rows: int) -> Tuple[np.ndarray, float]:
    y = np.asarray(y, dtype=float).ravel()
    if len(y) != n_rows:
        raise ValueError(f"y has length {len(y)} but S has {n_rows} rows.")
    y_mean = float(y.mean())
    return y - y_mean, y_mean


def _least_squares_result(
    design: _CenteredDesign,
    y_centered: np.ndarray,
    y_mean: float,
    b_hat: np.ndarray,
    estimator: str,
    **diagnostics,
) -> FitResult:
    residuals = y_centered - design.matvec(b_hat)
    return FitResult(
        b_hat=b_hat,
        estimator=estimator,
        alpha_hat=y_mean - float(design.column_means @ b_hat),
        objective=float(residuals @ residuals),
        **diagnostics,
    )


def fit_ols(S: CompressedDesign, y: np.ndarray, warn_rank_deficient: bool = True) -> FitResult:
    """
    Least squares fit of y on an intercept and the columns of S.

    The centered design is factorized by SVD and the minimum norm
    solution is returned when it is rank deficient. Designs with more
    than NORMAL_EQUATIONS_MAX_COLUMNS columns are solved by conjugate
    gradient on the centered normal equations instead.

    Parameters
    ----------
    S :
        Dense or sparse compressed design.
    y :
        Response.
    warn_rank_deficient :
        Whether to log a warning on rank deficiency. b-bit designs are
        always deficient after centering, as each block sums to one.

    Returns
    -------
    fit :
        Intercept, coefficients and numerical rank.
    """
    tracker = RuntimeTracker()
    design = _CenteredDesign(S)
    y_centered, y_mean = _centered_response(y, design.n_rows)

    rank = None
    if design.factorized:
        s = design.singular_values
        keep = design.numerical_support
        rank = int(keep.sum())
        z = design.left_vectors[:, keep].T @ y_centered
        b_hat = design.right_vectors_t[keep].T @ (z / s[keep])
        if rank < design.n_cols and warn_rank_deficient:
            logger.warning(
                f"Centered design has rank {rank} < {design.n_cols} columns; "
                "returning the minimum norm solution."
            )
    else:
        b_hat = _solve_conjugate_gradient(design, y_centered, 0.0)
    logger.debug(f"OLS fit on S of shape {S.shape} with rank {rank}.")

    return replace(
        _least_squares_result(design, y_centered, y_mean, b_hat, OLS_NAME, rank=rank),
        runtime=tracker.return_runtime(),
    )


def fit_ridge_constrained(S: CompressedDesign, y: np.ndarray, radius: float) -> FitResult:
    """
    Least squares fit of y on an intercept and S subject to ||b|| <= radius.

    When the minimum norm least squares solution violates the constraint,
    the multiplier lambda of b(lambda) = (S_c^T S_c + lambda I)^(-1) S_c^T y_c
    is found by bisection so that ||b(lambda)|| matches the radius to a
    relative 1e-8.

    Parameters
    ----------
    S :
        Dense or sparse compressed design.
    y :
        Response.
    radius :
        Constraint radius, zero giving b = 0 and alpha = mean(y).

    Returns
    -------
    fit :
        Intercept, coefficients, final multiplier and bisection count.
    """
    if radius < 0:
        raise ValueError(f"Radius must be non-negative, got {radius}.")
    tracker = RuntimeTracker()
    design = _CenteredDesign(S)
    y_centered, y_mean = _centered_response(y, design.n_rows)

    if radius == 0:
        return replace(
            _least_squares_result(
                design, y_centered, y_mean, np.zeros(design.n_cols), RIDGE_NAME, radius=0.0
            ),
            runtime=tracker.return_runtime(),
        )

    if design.factorized:
        s = design.singular_values
        z = design.left_vectors.T @ y_centered
        keep = design.numerical_support

        def coefficients(lam: float) -> np.ndarray:
            if lam == 0:
                return design.right_vectors_t[keep].T @ (z[keep] / s[keep])
            return design.right_vectors_t.T @ (s * z / (s**2 + lam))

    else:

        def coefficients(lam: float) -> np.ndarray:
            return _solve_conjugate_gradient(design, y_centered, lam)

    b_hat = coefficients(0.0)
    if np.linalg.norm(b_hat) <= radius:
        logger.debug("Ridge constraint inactive, returning the least squares fit.")
        return replace(
            _least_squares_result(
                design, y_centered, y_mean, b_hat, RIDGE_NAME, radius=radius, multiplier=0.0
            ),
            runtime=tracker.return_runtime(),
        )

    # ||b(lambda)|| <= ||S_c^T y_c|| / lambda, so this upper bracket is feasible up to rounding.
    lam_low, lam_high = 0.0, float(np.linalg.norm(design.rmatvec(y_centered))) / radius
    while np.linalg.norm(coefficients(lam_high)) > radius:
        lam_high *= 2

    iterations, converged = 0, False
    lam = lam_high
    for iterations in range(1, RIDGE_MAX_BISECTIONS + 1):
        lam = 0.5 * (lam_low + lam_high)
        b_hat = coefficients(lam)
        b_norm = np.linalg.norm(b_hat)
        if abs(b_norm - radius) <= RIDGE_RADIUS_TOLERANCE * radius:
            converged = True
            break
        if b_norm > radius:
            lam_low = lam
        else:
            lam_high = lam
    if not converged:
        lam = lam_high
        b_hat = coefficients(lam)
        logger.warning(f"Ridge bisection hit its cap of {RIDGE_MAX_BISECTIONS} steps.")
    logger.debug(f"Ridge fit with radius {radius}: lambda={lam} after {iterations} bisections.")

    return replace(
        _least_squares_result(
            design,
            y_centered,
            y_mean,
            b_hat,
            RIDGE_NAME,
            radius=radius,
            multiplier=lam,
            iterations=iterations,
            converged=converged,
        ),
        runtime=tracker.return_runtime(),
    )


def _logistic_loss(linear_predictor: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, linear_predictor) - y * linear_predictor))


def _project_onto_ball(b: np.ndarray, radius: float) -> np.ndarray:
    b_norm = np.linalg.norm(b)
    if b_norm > radius:
        return b * (radius / b_norm)
    return b


def fit_logistic_constrained(
    S: CompressedDesign,
    y: np.ndarray,
    radius: float,
    fit_intercept: bool = False,
    b_init: Optional[np.ndarray] = None,
) -> FitResult:
    """
    Minimize the average logistic loss over ||b|| <= radius.

    Projected gradient descent with Armijo backtracking, the projection
    rescaling b radially onto the ball. Stops once an accepted step
    decreases the loss by less than 1e-10.

    Parameters
    ----------
    S :
        Dense or sparse compressed design.
    y :
        Labels in {0, 1}.
    radius :
        Constraint radius.
    fit_intercept :
        Whether to add an unconstrained intercept.
    b_init :
        Starting coefficients, projected onto the ball. Zeros by default.

    Returns
    -------
    fit :
        Coefficients, average loss, iteration count and loss path.
    """
    if radius < 0:
        raise ValueError(f"Radius must be non-negative, got {radius}.")
    y = np.asarray(y, dtype=float).ravel()
    n_rows, n_cols = S.shape
    if len(y) != n_rows:
        raise ValueError(f"y has length {len(y)} but S has {n_rows} rows.")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("Logistic labels must be 0 or 1.")
    tracker = RuntimeTracker()

    def linear_predictor(b: np.ndarray, alpha: float) -> np.ndarray:
        return np.asarray(S @ b, dtype=float).ravel() + alpha

    squared_frobenius = float(S.multiply(S).sum()) if sp.issparse(S) else float(np.sum(S**2))
    if fit_intercept:
        squared_frobenius += n_rows
    step = 4 * n_rows / squared_frobenius if squared_frobenius > 0 else 1.0
    min_step = 1e-16 * step

    if b_init is None:
        b = np.zeros(n_cols)
    else:
        b = np.asarray(b_init, dtype=float).ravel()
        if len(b) != n_cols:
            raise ValueError(f"b_init has length {len(b)} but S has {n_cols} columns.")
        b = _project_onto_ball(b, radius)
    alpha = 0.0
    loss = _logistic_loss(linear_predictor(b, alpha), y)
    objective_path = [loss]
    iterations, converged = 0, False
    for iterations in range(1, LOGISTIC_MAX_ITERATIONS + 1):
        residuals = expit(linear_predictor(b, alpha)) - y
        gradient_b = np.asarray(S.T @ residuals, dtype=float).ravel() / n_rows
        gradient_alpha = float(residuals.mean()) if fit_intercept else 0.0

        step = 2 * step
        while True:
            b_new = _project_onto_ball(b - step * gradient_b, radius)
            alpha_new = alpha - step * gradient_alpha
            new_loss = _logistic_loss(linear_predictor(b_new, alpha_new), y)
            directional = gradient_b @ (b_new - b) + gradient_alpha * (alpha_new - alpha)
            if new_loss <= loss + LOGISTIC_ARMIJO_C * directional:
                break
            step = LOGISTIC_STEP_SHRINK * step
            if step < min_step:
                b_new, alpha_new, new_loss = b, alpha, loss
                break

        decrease = loss - new_loss
        b, alpha, loss = b_new, alpha_new, new_loss
        objective_path.append(loss)
        if decrease < LOGISTIC_DECREASE_TOLERANCE:
            converged = True
            break
    if not converged:
        logger.warning(
            f"Logistic solver hit its cap of {LOGISTIC_MAX_ITERATIONS} iterations."
        )
    logger.debug(f"Logistic fit with radius {radius}: loss={loss} after {iterations} steps.")

    return FitResult(
        b_hat=b,
        estimator=LOGISTIC_NAME,
        alpha_hat=alpha if fit_intercept else None,
        radius=radius,
        iterations=iterations,
        objective=loss,
        converged=converged,
        runtime=tracker.return_runtime(),
        objective_path=np.array(objective_path),
    )


def mspe(prediction: np.ndarray, f_star: np.ndarray) -> float:
    """
    Realized mean squared prediction error ||f* - prediction||^2 / n.
    """
    prediction = np.asarray(prediction, dtype=float).ravel()
    f_star = np.asarray(f_star, dtype=float).ravel()
    if prediction.shape != f_star.shape:
        raise ValueError(
            f"Prediction has length {len(prediction)} but f_star has length {len(f_star)}."
        )
    return float(mean_squared_error(f_star, prediction))


def excess_risk_logistic(
    b_hat: np.ndarray,
    S: CompressedDesign,
    linear_predictor: np.ndarray,
    p_vec: Optional[np.ndarray] = None,
) -> float:
    """
    Excess logistic risk of S b_hat over the true linear predictor.

    (1/n) sum_i [-p_i s_i^T b + log(1 + e^(s_i^T b))]
    - (1/n) sum_i [-p_i eta_i + log(1 + e^(eta_i))]

    Parameters
    ----------
    b_hat :
        Fitted coefficients.
    S :
        Compressed design.
    linear_predictor :
        True linear predictor eta_i = x_i^T beta* + gamma_i.
    p_vec :
        Success probabilities, logistic(eta) if None.

    Returns
    -------
    excess_risk :
        Excess risk, zero when S b_hat equals eta.
    """
    return excess_risk_of_predictor(np.asarray(S @ b_hat, dtype=float), linear_predictor, p_vec)


def excess_risk_of_predictor(
    fitted: np.ndarray, linear_predictor: np.ndarray, p_vec: Optional[np.ndarray] = None
) -> float:
    """
    Excess logistic risk of a fitted linear predictor, eg. an average over ensembles.
    """
    fitted = np.asarray(fitted, dtype=float).ravel()
    linear_predictor = np.asarray(linear_predictor, dtype=float).ravel()
    if fitted.shape != linear_predictor.shape:
        raise ValueError(
            f"Fitted predictor has length {len(fitted)} but the linear predictor has "
            f"{len(linear_predictor)}."
        )
    p_vec = expit(linear_predictor) if p_vec is None else np.asarray(p_vec, dtype=float)
    if np.any((p_vec <= 0) | (p_vec >= 1)):
        raise ValueError("Probabilities must lie in (0, 1).")

    fitted_risk = np.mean(np.logaddexp(0.0, fitted) - p_vec * fitted)
    optimal_risk = np.mean(np.logaddexp(0.0, linear_predictor) - p_vec * linear_predictor)
    return float(fitted_risk - optimal_risk)


class OLSProcedure(FitProcedure):
    name = OLS_NAME

    def __init__(self, warn_rank_deficient: bool = True):
        self.warn_rank_deficient = warn_rank_deficient

    def fit(self, S: CompressedDesign, y: np.ndarray) -> FitResult:
        return fit_ols(S, y, warn_rank_deficient=self.warn_rank_deficient)


class RidgeProcedure(FitProcedure):
    name = RIDGE_NAME

    def __init__(self, radius: float):
        self.radius = radius

    def fit(self, S: CompressedDesign, y: np.ndarray) -> FitResult:
        return fit_ridge_constrained(S, y, self.radius)


class LogisticProcedure(FitProcedure):
    name = LOGISTIC_NAME

    def __init__(self, radius: float, fit_intercept: bool = False):
        self.radius = radius
        self.fit_intercept = fit_intercept

    def fit(self, S: CompressedDesign, y: np.ndarray) -> FitResult:
        return fit_logistic_constrained(S, y, self.radius, fit_intercept=self.fit_intercept)


def initialize_fit_procedure(
    estimator: str, radius: Optional[float] = None, fit_intercept: bool = False
) -> FitProcedure:
    """
    Initialize the fit procedure of an estimator name.
    """
    if estimator == OLS_NAME:
        return OLSProcedure()
    elif estimator in (RIDGE_NAME, LOGISTIC_NAME):
        if radius is None:
            raise ValueError(f"Estimator '{estimator}' needs a constraint radius.")
        if estimator == RIDGE_NAME:
            return RidgeProcedure(radius)
        return LogisticProcedure(radius, fit_intercept=fit_intercept)
    else:
        raise ValueError(f"{estimator} is not a valid estimator.")


def _fit_and_predict(
    X: SparseMatrix,
    y: np.ndarray,
    config: HashConfig,
    procedure: FitProcedure,
    X_predict: SparseMatrix,
) -> np.ndarray:
    e = build_ensemble(config, X.n_cols, materialize_ranks=config.variant in BBIT_VARIANTS)
    S = hash_design(X, e).S
    fit = procedure.fit(S, y)
    if X_predict is not X:
        S = hash_design(X_predict, e).S
    return fit.predict(S)


def aggregate_predict(
    X: SparseMatrix,
    y: np.ndarray,
    config: HashConfig,
    n_ensembles: int,
    procedure: FitProcedure,
    seeds: Optional[Sequence[int]] = None,
    X_predict: Optional[SparseMatrix] = None,
    n_jobs: int = 1,
) -> np.ndarray:
    """
    Average the predictions of fits on independently hashed designs.

    Parameters
    ----------
    X :
        Training design.
    y :
        Training response.
    config :
        Hashing configuration, its seed being replaced per ensemble.
    n_ensembles :
        Number B of ensembles.
    procedure :
        Fit procedure applied to every compressed design.
    seeds :
        Ensemble seeds. Defaults to the configuration's seed followed by
        seeds derived from it, so that B = 1 reproduces a single fit.
    X_predict :
        Design to predict, X itself if None.
    n_jobs :
        Number of joblib workers.

    Returns
    -------
    prediction :
        Mean of the B prediction vectors.
    """
    if n_ensembles < 1:
        raise ValueError(f"Number of ensembles must be at least 1, got {n_ensembles}.")
    if seeds is None:
        seeds = [config.seed] + [
            derive_seed(config.seed, REPLICATE_STREAM, j) for j in range(1, n_ensembles)
        ]
    elif len(seeds) != n_ensembles:
        raise ValueError(f"Got {len(seeds)} seeds for {n_ensembles} ensembles.")
    X_predict = X if X_predict is None else X_predict

    predictions = Parallel(n_jobs=n_jobs)(
        delayed(_fit_and_predict)(X, y, replace(config, seed=int(seed)), procedure, X_predict)
        for seed in seeds
    )
    return np.mean(predictions, axis=0)


def _check_importance_inputs(fit: FitResult, H: np.ndarray, S: np.ndarray, second_S: Optional[np.ndarray]):
    if second_S is None:
        raise ValueError("Variable importance needs the second minimum values of the design.")
    if sp.issparse(S):
        raise ValueError(f"Variable importance is defined for '{RANDOM_SIGN_NAME}' designs only.")
    if not (H.shape == S.shape == second_S.shape):
        raise ValueError(
            f"H, S and second_S must share a shape, got {H.shape}, {S.shape}, {second_S.shape}."
        )
    if len(fit.b_hat) != S.shape[1]:
        raise ValueError(f"Fit has {len(fit.b_hat)} coefficients but S has {S.shape[1]} columns.")


def variable_importance(
    fit: FitResult,
    H: np.ndarray,
    S: np.ndarray,
    second_S: np.ndarray,
    k: int,
    n_cols: Optional[int] = None,
) -> Tuple[np.ndarray, float]:
    """
    Change in predictions when variable k is removed from the design.

    diff_i = sum_l (S_il - S2_il) 1{H_il = k} b_l, where S2 holds the
    random-sign values of each row's runner-up column. This equals the
    prediction on X minus the prediction on X with column k zeroed,
    hashed with the same ensemble.

    Parameters
    ----------
    fit :
        Fit on the random-sign design S.
    H :
        Winning columns.
    S :
        Random-sign design.
    second_S :
        Random-sign values of the runner-up columns.
    k :
        0-based variable index.
    n_cols :
        Number of columns p, checked against k when passed.

    Returns
    -------
    diff :
        Per-row prediction differences.
    importance :
        l2 norm of diff.
    """
    _check_importance_inputs(fit, H, S, second_S)
    if k < 0 or (n_cols is not None and k >= n_cols):
        raise ValueError(f"Variable index {k} is out of range.")
    diff = np.sum(np.where(H == k, (S - second_S) * fit.b_hat[None, :], 0.0), axis=1)
    return diff, float(np.linalg.norm(diff))


def variable_importance_table(
    fit: FitResult, H: np.ndarray, S: np.ndarray, second_S: np.ndarray
) -> pd.DataFrame:
    """
    Importance norms of every variable winning at least one (row, permutation).

    Returns
    -------
    importance_table :
        Columns k, norm and rank (1 for the most important), sorted by rank.
    """
    _check_importance_inputs(fit, H, S, second_S)
    rows, blocks = np.nonzero(H >= 0)
    winners = H[rows, blocks]
    if len(winners) == 0:
        return pd.DataFrame({"k": [], "norm": [], "rank": []})
    contributions = (S[rows, blocks] - second_S[rows, blocks]) * fit.b_hat[blocks]
    diffs = sp.csc_matrix(
        (contributions, (rows, winners)), shape=(H.shape[0], int(winners.max()) + 1)
    )
    norms = np.sqrt(np.asarray(diffs.multiply(diffs).sum(axis=0)).ravel())
    ks = np.unique(winners)

    importance_table = pd.DataFrame({"k": ks, "norm": norms[ks]})
    importance_table = importance_table.sort_values(
        ["norm", "k"], ascending=[False, True], kind="stable"
    ).reset_index(drop=True)
    importance_table["rank"] = np.arange(1, len(importance_table) + 1)
    logger.debug(f"Importance table over {len(importance_table)} variables.")

    return importance_table
