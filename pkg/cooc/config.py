from __future__ import annotations

import logging
import os

log = logging.getLogger(__name__)

# Numerical guards
SIGMA_FLOOR = 1e-7
PRED_EPSILON = 1e-7

# Training recipe defaults; desk-scale presets override some
LEARNING_RATE = 1e-4
CLIP_VALUE = 1.0
BATCH_SIZE = 64
EPOCHS = 30
HIDDEN_UNITS = 32
DROPOUT_RATE = 0.5

# Adam constants
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Balancer (simplified label-set oversampler)
BALANCE_LAMBDA = 1e-5
BALANCE_ITERATIONS = 4000
BALANCE_MAX_OCCURRENCE = 6

# Evaluation
DECISION_THRESHOLD = 0.5
SELECTION_THRESHOLD = 0.4
DEFAULT_FOLDS = 5
DEFAULT_RHOS = (0.0, 0.3, 0.45, 0.6, 0.8)
FINETUNE_EPOCHS = 10

# Gradient check
GRADCHECK_STEP = 1e-5
GRADCHECK_RTOL = 1e-4
GRADCHECK_ATOL = 1e-7
GRADCHECK_INSTANCES = 100

# Output formatting
CORR_DECIMALS = 6
FEATURE_SIG_DIGITS = 9
METRIC_DECIMALS = 6

THREADS_ENV = "COOC_THREADS"


def worker_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        log.warning("%s=%r is not an integer; using 1 worker", THREADS_ENV, raw)
        return 1
    if n < 1:
        log.warning("%s=%d is below 1; using 1 worker", THREADS_ENV, n)
        return 1
    return n
