from .base import (ALGORITHMS, DEFAULT_PARAMS, FingerprintError, ModelConfig, ModelError,
                   TrainedModel, TrainingError, check_fingerprint, predict, predict_raw, split,
                   split_indices)
from .forest import fit_random_forest
from .mlp import fit_mlp
from .stepwise import fit_stepwise
from .svr import fit_svr


def fit(train, config: ModelConfig):
    """Dispatch on ``config.algorithm``; stepwise returns only the model here."""
    if config.algorithm == "stepwise-regression":
        return fit_stepwise(train, config=config)[0]
    if config.algorithm == "random-forest":
        return fit_random_forest(train, config)
    if config.algorithm == "mlp":
        return fit_mlp(train, config)
    return fit_svr(train, config)


__all__ = [
    "ALGORITHMS", "DEFAULT_PARAMS", "FingerprintError", "ModelConfig", "ModelError",
    "TrainedModel", "TrainingError", "check_fingerprint", "fit", "fit_mlp",
    "fit_random_forest", "fit_stepwise", "fit_svr", "predict", "predict_raw", "split",
    "split_indices",
]
