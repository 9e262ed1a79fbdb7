from typing import Dict, List

# Reference names of hashing variants:
BBIT_PLAIN_NAME: str = "bbit_plain"
BBIT_SHUFFLED_NAME: str = "bbit_shuffled"
RANDOM_SIGN_NAME: str = "random_sign"

HASHING_VARIANTS: List[str] = [BBIT_PLAIN_NAME, BBIT_SHUFFLED_NAME, RANDOM_SIGN_NAME]
BBIT_VARIANTS: List[str] = [BBIT_PLAIN_NAME, BBIT_SHUFFLED_NAME]

# Command line spellings of hashing variants:
VARIANT_FLAG_LOOKUP: Dict[str, str] = {
    "bbit": BBIT_PLAIN_NAME,
    "bbit-shuffled": BBIT_SHUFFLED_NAME,
    "random-sign": RANDOM_SIGN_NAME,
}

# Reference names of permutation generation modes:
FISHER_YATES_NAME: str = "fisher_yates"
HASHED_SCORES_NAME: str = "hashed_scores"

PERMUTATION_MODES: List[str] = [FISHER_YATES_NAME, HASHED_SCORES_NAME]

MAX_BITS: int = 16

# Reference names of estimators fitted on compressed data:
OLS_NAME: str = "ols"
RIDGE_NAME: str = "ridge"
LOGISTIC_NAME: str = "logistic"

ESTIMATORS: List[str] = [OLS_NAME, RIDGE_NAME, LOGISTIC_NAME]

# Reference names of scaling weight kinds:
MAIN_WEIGHTS_NAME: str = "main"
TAYLOR_FULL_NAME: str = "taylor_full"
TAYLOR_TRUNCATED_NAME: str = "taylor_truncated"
GEOMETRIC_TRUNCATED_NAME: str = "geometric_truncated"

SCALED_WEIGHT_KINDS: List[str] = [
    TAYLOR_FULL_NAME,
    TAYLOR_TRUNCATED_NAME,
    GEOMETRIC_TRUNCATED_NAME,
]

# Reference names of Monte Carlo verification targets:
UNBIASEDNESS_NAME: str = "unbiasedness"
APPROX_ERROR_NAME: str = "approx_error"
CONCENTRATION_NAME: str = "concentration"

VERIFICATION_TARGETS: List[str] = [
    UNBIASEDNESS_NAME,
    APPROX_ERROR_NAME,
    CONCENTRATION_NAME,
]

# Reference names of oracle constructions checked by Monte Carlo:
MAIN_ORACLE_NAME: str = "main"
INTERACTION_ORACLE_NAME: str = "interaction"
SCALED_ORACLE_NAME: str = "scaled"

# Monte Carlo pass thresholds, in standard errors:
TWO_SIDED_SE_THRESHOLD: float = 4.0
ONE_SIDED_SE_THRESHOLD: float = 3.0
DEFAULT_REPLICATIONS: int = 20000
MIN_REPLICATIONS: int = 1000

# Smallest number of permutations for truncated Taylor weights:
TRUNCATED_MIN_PERMUTATIONS: int = 10

# Cap on first-hit stream length, as a multiple of p*log(p):
FIRST_HIT_CAP_FACTOR: int = 64

# Solver tolerances:
OLS_RANK_TOLERANCE: float = 1e-10
RIDGE_RADIUS_TOLERANCE: float = 1e-8
RIDGE_MAX_BISECTIONS: int = 500
NORMAL_EQUATIONS_MAX_COLUMNS: int = 4096
CG_TOLERANCE: float = 1e-10
LOGISTIC_ARMIJO_C: float = 1e-4
LOGISTIC_STEP_SHRINK: float = 0.5
LOGISTIC_DECREASE_TOLERANCE: float = 1e-10
LOGISTIC_MAX_ITERATIONS: int = 10000

# Number of redraws allowed when a generated signal is degenerate:
MAX_SIGNAL_REDRAWS: int = 10

# Seed stream identifiers (every random draw is keyed on one of these):
PERMUTATION_STREAM: int = 0
SIGN_STREAM: int = 1
SHUFFLE_STREAM: int = 2
PROJECTION_STREAM: int = 3
FIRST_HIT_STREAM: int = 4
REPLICATE_STREAM: int = 5
DESIGN_STREAM: int = 6
COEFFICIENT_STREAM: int = 7
INTERACTION_STREAM: int = 8
NOISE_STREAM: int = 9
SCORE_KEY_STREAM: int = 10

# Simulation study method names:
BBIT1_METHOD_NAME: str = "bbit1"
BBIT4_METHOD_NAME: str = "bbit4"
RANDOM_SIGN_METHOD_NAME: str = "rs"
RANDOM_PROJECTION_METHOD_NAME: str = "rp"

SIMULATION_METHODS: List[str] = [
    BBIT1_METHOD_NAME,
    BBIT4_METHOD_NAME,
    RANDOM_SIGN_METHOD_NAME,
    RANDOM_PROJECTION_METHOD_NAME,
]

# Bits used by each b-bit study method:
METHOD_BITS_LOOKUP: Dict[str, int] = {BBIT1_METHOD_NAME: 1, BBIT4_METHOD_NAME: 4}

# Scenario design, coefficient, scaling and response kinds:
DESIGN_DISTRIBUTIONS: List[str] = ["binary", "gaussian", "exponential"]
COEFFICIENT_KINDS: List[str] = ["exponential", "brownian"]
ROW_SCALINGS: List[str] = ["none", "l2", "l1"]
RESPONSE_KINDS: List[str] = ["gaussian", "logistic"]

# Process exit codes:
EXIT_SUCCESS: int = 0
EXIT_VERIFICATION_FAILURE: int = 1
EXIT_INCOMPATIBLE_DATA: int = 2
EXIT_USAGE: int = 64
EXIT_FORMAT: int = 65

SEED_ENV_VAR: str = "MINHASH_SEED"
DEFAULT_SEED: int = 0
