"""
Configuration file for the CosDefense federated-learning simulator

This file contains all the constants and default parameters used by the
simulator, the defenses and the experiment runner.
"""

# ============================================================================
# FEDERATED PROTOCOL DEFAULTS
# ============================================================================

NUM_CLIENTS = 100  # K
NUM_ROUNDS = 1000  # T
SAMPLE_RATE = 0.1  # 10 of 100 clients per round
LEARNING_RATE = 0.01  # local SGD step size
BATCH_SIZE = 128
LOCAL_ITERS = 1
NONIID_Q = 0.5
MALICIOUS_FRACTION = 0.3
ATTACK_START_ROUND = 200
DEFAULT_SEED = 0

# ============================================================================
# MODEL DEFAULTS
# ============================================================================

# Dense network 784 -> 128 -> 64 -> 10
HIDDEN_DIMS = (128, 64)

HIDDEN_ACTIVATION = "relu"
OUTPUT_ACTIVATION = "identity"  # softmax is applied inside the loss
ACTIVATIONS = (HIDDEN_ACTIVATION, OUTPUT_ACTIVATION)

# ============================================================================
# ATTACK AND DEFENSE PARAMETERS
# ============================================================================

ATTACK_KINDS = ("none", "ipm", "label_flip", "sign_flip", "gauss_noise")
DEFENSE_KINDS = (
    "none",
    "cos_defense",
    "krum",
    "multi_krum",
    "median",
    "clipping_median",
)
POST_FILTER_AGGREGATIONS = ("fedavg", "median")

DEFAULT_ATTACK = "ipm"
DEFAULT_DEFENSE = "cos_defense"

IPM_EPSILON = 0.5
GAUSS_NOISE_SIGMA = 1.0

# Benign rounds run to calibrate the clipping bound when none is given
CALIBRATION_ROUNDS = 50

# Cosine values drifting past +-1 by more than this are a bug, not rounding
COSINE_CLAMP_TOLERANCE = 1e-12

# ============================================================================
# DATASETS
# ============================================================================

DATASETS = ("mnist", "fmnist", "synthetic")
DATA_DIR = "data"

# Files live under <data_dir>/<dataset>/, optionally gzipped
IDX_FILES = {
    "train": {
        "images": "train-images-idx3-ubyte",
        "labels": "train-labels-idx1-ubyte",
    },
    "test": {
        "images": "t10k-images-idx3-ubyte",
        "labels": "t10k-labels-idx1-ubyte",
    },
}
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
PIXEL_SCALE = 255.0

IDX_NUM_CLASSES = 10

# Synthetic Gaussian clusters: class c centred at SYNTHETIC_RADIUS * e_c
SYNTHETIC_CLASSES = 10
SYNTHETIC_PER_CLASS = 600
SYNTHETIC_TEST_PER_CLASS = 100
SYNTHETIC_DIM = 20
SYNTHETIC_RADIUS = 4.0
SYNTHETIC_NOISE_STD = 1.0

# ============================================================================
# RANDOM STREAMS
# ============================================================================

# Keys mixed into SeedSequence so every consumer draws an independent stream
STREAM_SAMPLING = 0
STREAM_LOCAL_TRAINING = 1
STREAM_ATTACK_NOISE = 2
STREAM_PARTITION = 3
STREAM_PLACEMENT = 4

# ============================================================================
# METRICS
# ============================================================================

SMOOTHING_WINDOW = 40

# Round windows (inclusive) compared by the trace-separation check
PRE_ATTACK_WINDOW = (40, 200)
POST_ATTACK_WINDOW = (240, 400)

SIMILARITY_CLIENTS = 10
SIMILARITY_ITERS = 1000
SIMILARITY_SAMPLE_EVERY = 50

# ============================================================================
# OUTPUT
# ============================================================================

OUTPUT_DIR = "results"

ROUNDS_CSV = "rounds.csv"
SUMMARY_JSON = "summary.json"
MANIFEST_JSON = "manifest.json"
SWEEP_CSV = "sweep_summary.csv"
SWEEP_XLSX = "sweep_summary.xlsx"
SIMILARITY_CSV = "layer_similarity.csv"

# Per-round trace columns, in output order
ROUND_CSV_COLUMNS = [
    "round",
    "test_accuracy",
    "mean_abs_cos_all",
    "mean_abs_cos_benign_truth",
    "mean_abs_cos_malicious_truth",
    "n_filtered",
    "filtered_ids",
    "attack_active",
]
FILTERED_IDS_SEPARATOR = ";"

# ============================================================================
# SWEEPS
# ============================================================================

SWEEP_AXES = {
    "malicious_frac": [0.1, 0.2, 0.3, 0.4],
    "q": [0.1, 0.3, 0.5],
    "ipm_eps": [0.1, 0.5, 1.0, 2.0],
}
SWEEP_DEFENSES = ["cos_defense", "krum", "clipping_median"]

# child_seed = base_seed * SWEEP_SEED_STRIDE + cell_index
SWEEP_SEED_STRIDE = 1000

# Sweep summary columns, in output order
SWEEP_COLUMNS = [
    "axis",
    "value",
    "defense",
    "seed",
    "final_accuracy",
    "best_accuracy",
    "status",
    "error",
]

# ============================================================================
# EXCEL OUTPUT SETTINGS
# ============================================================================

SWEEP_SHEET = "Sweep_Summary"

COLUMN_WIDTHS = {
    "axis": 16,
    "value": 10,
    "defense": 18,
    "seed": 10,
    "final_accuracy": 16,
    "best_accuracy": 16,
    "status": 10,
    "error": 40,
}

NUMBER_FORMATS = {
    "accuracy": "0.00%",
}

# ============================================================================
# LOGGING SETTINGS
# ============================================================================

LOG_LEVEL = "INFO"  # Options: DEBUG, INFO, WARNING, ERROR, CRITICAL

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# ============================================================================
# METADATA
# ============================================================================

METADATA = {
    "project": "cosdefense-sim",
    "version": "0.1.0",
}
