import os
import logging

# Try both direct environment variables and dotenv file
try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    pass

LOG_LEVEL = os.environ.get("HIERNAS_LOG_LEVEL", "INFO").upper()

# Setup logging
logging.basicConfig(
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    level=getattr(logging, LOG_LEVEL, logging.INFO),
)
logger = logging.getLogger(__name__)


def _env_int(name, default):
    """Read an integer override from the environment, falling back to default"""
    value = os.environ.get(name)
    if value is None or value == "":
        return default
    try:
        return int(value)
    except ValueError:
        logger.warning(f"Ignoring non-integer {name}={value!r}")
        return default


# Search defaults
DEFAULT_POPULATION_SIZE = 200
DEFAULT_TOTAL_STEPS = 7000
DEFAULT_TOURNAMENT_FRACTION = 0.05
DEFAULT_INIT_MUTATIONS = 1000
DEFAULT_EVAL_RUNS = 4
DEFAULT_WORKERS = _env_int("HIERNAS_WORKERS", 1)
DEFAULT_SEED = 0
DEFAULT_FITNESS_BACKEND = "surrogate"
DEFAULT_LOG_EVERY = 50

FITNESS_BACKENDS = ("surrogate", "param", "trainer")

# Output directory for CLI runs
DEFAULT_OUT_DIR = os.environ.get("HIERNAS_OUT_DIR", "runs")

# Search-space presets
PRESET_REPRESENTATIONS = {
    "hierarchical": {
        "levels": 3,
        "channels": 16,
        "motif_counts": [6, 6, 1],
        "node_counts": [[4, 4, 4, 4, 4, 4], [5]],
    },
    "flat": {
        "levels": 2,
        "channels": 16,
        "motif_counts": [6, 1],
        "node_counts": [[11]],
    },
}
DEFAULT_REPRESENTATION = "hierarchical"

# Surrogate landscape
# Target op mix over (identity, 1x1, depthwise, separable, max-pool, avg-pool)
SURROGATE_TARGET = (0.05, 0.15, 0.10, 0.40, 0.10, 0.20)
SURROGATE_DEPTH_SCALE = 4.0
DEFAULT_SURROGATE = {
    "param_weight": 0.0,
    "param_scale": 5000.0,
}

# Desk-scale trainer settings
DEFAULT_MODEL = {
    "stem_channels": 8,
    "cells_per_group": 1,
    "groups": 3,
}
DEFAULT_TRAINER = {
    "steps": 200,
    "batch": 32,
    "schedule": [[0, 0.1], [160, 0.01], [180, 0.001]],
    "momentum": 0.9,
    "weight_decay": 3e-4,
    "seed": 0,
}
# Six orientations at low contrast in heavy noise; an identity-chain cell
# scores well above chance and well below 1
DEFAULT_DATASET = {
    "classes": 6,
    "per_class": 40,
    "size": 8,
    "seed": 0,
    "validation_fraction": 0.25,
    "contrast": 0.6,
    "noise": 0.6,
    "offset": 0.1,
    "label_noise": 0.05,
}

# Normalization constants
NORM_EPSILON = 1e-5
NORM_MOMENTUM = 0.1

# Persistence format versions
GENOTYPE_FORMAT_VERSION = 1
CHECKPOINT_FORMAT_VERSION = 1
