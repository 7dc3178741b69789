"""
Configuration Module for the SAIRS control toolkit

This module contains the configuration constants and documented defaults of the
toolkit. Centralized configuration makes it easy to adjust numerical settings
without modifying the simulation code.

Run-specific values (model parameters, initial state, horizon) come from the
JSON run configs parsed by ``run_config.py``; every key they omit falls back to
the defaults below.
"""

import os
from pathlib import Path

# ============================================================================
# APPLICATION SETTINGS
# ============================================================================

APP_NAME = "sairs-control"
APP_VERSION = "1.0.0"

# ============================================================================
# FILE PATHS
# ============================================================================

BASE_DIR = Path(__file__).parent.resolve()  # Absolute path
CONFIGS_DIR = BASE_DIR / "configs"
DEFAULT_OUTPUT_DIR = BASE_DIR / "output"
LOG_DIR = Path(os.environ.get("SAIRS_LOG_DIR", BASE_DIR / "logs"))

try:
    LOG_DIR.mkdir(exist_ok=True, parents=True)
except OSError as e:
    print(f"Warning: Failed to create log directory: {e}")

LOG_FILE = LOG_DIR / "sairs_control.log"

# ============================================================================
# SIMULATION DEFAULTS
# ============================================================================

DEFAULT_T0 = 0.0
DEFAULT_T_END = 500.0
DEFAULT_DT = 0.002  # step used throughout the numerical examples
DEFAULT_RECORD_EVERY = 1  # keep every state unless a run asks for thinning

DEFAULT_N_TRAJ = 200
DEFAULT_MASTER_SEED = 20240101
DEFAULT_WORKERS = 1

# Gaussian increments are pre-drawn per trajectory in blocks of this many steps
NOISE_CHUNK_STEPS = 4096

# Ensemble statistics are stored at (at most) this many time points
MAX_SUMMARY_POINTS = 2001

QUANTILE_LEVELS = (0.05, 0.50, 0.95)

# ============================================================================
# ANALYSIS DEFAULTS
# ============================================================================

DEFAULT_BURN_IN_FRACTION = 0.2  # burn-in = 20% of the horizon
DEFAULT_FIT_WINDOW_FRACTION = 0.5  # fit window = last 50% of the horizon
DEFAULT_N_BINS = 50
DEFAULT_EXTINCTION_TOLERANCE = 1.0  # persons; terminal A+I below this counts as extinct
HISTOGRAM_MASS_TOLERANCE = 1e-12

# ============================================================================
# CONTROL DEFAULTS
# ============================================================================

DEFAULT_RELAXATION = 0.5
DEFAULT_TOLERANCE = 1e-4
DEFAULT_MAX_ITER = 100
PROJECTION_MODES = ("hamiltonian", "paper")
DEFAULT_PROJECTION_MODE = "hamiltonian"
ADJOINT_PATHS = ("nominal", "frozen")
DEFAULT_ADJOINT_PATH = "nominal"

# ============================================================================
# CLI EXIT CODES
# ============================================================================

EXIT_OK = 0
EXIT_VALIDATION_ERROR = 1
EXIT_RUNTIME_ERROR = 2
EXIT_VERIFY_FAILED = 3

# ============================================================================
# LOGGING SETTINGS
# ============================================================================

LOG_LEVEL = os.environ.get("SAIRS_LOG_LEVEL", "INFO").upper()  # DEBUG, INFO, WARNING, ERROR
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
