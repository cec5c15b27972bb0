"""Model configuration, trained-model artifacts, splitting and prediction."""

from __future__ import annotations

import io
import json
import math
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..features import FeatureMatrix, inverse_target

ARTIFACT_VERSION = 1
ALGORITHMS = ("stepwise-regression", "random-forest", "mlp", "svr")

DEFAULT_PARAMS: dict[str, dict] = {
    "stepwise-regression": {"alpha": 0.05},
    "random-forest": {"n_estimators": 400, "max_depth": None, "min_samples_leaf": 1,
                      "max_features": 1 / 3},
    "mlp": {"hidden": [100, 75, 50, 25], "activation": "relu", "optimizer": "nadam",
            "loss": "mse", "epochs": 100, "batch_size": 25, "learning_rate": 0.001,
            "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
    "svr": {"kernel": "rbf", "gamma": "scale", "C": 5.0, "epsilon": 0.1, "tol": 1e-3,
            "max_iter": 1_000_000},
}


class ModelError(ValueError):
    pass


class FingerprintError(ModelError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass
class ModelConfig:
    algorithm: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ModelError(f"unknown algorithm {self.algorithm!r}")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.algorithm])
        if unknown:
            raise ModelError(f"unknown {self.algorithm} parameters {sorted(unknown)}")
        self.params = {**DEFAULT_PARAMS[self.algorithm], **self.params}
        if not 0 <= int(self.seed) < 2**64:
            raise ModelError("seed must be an unsigned 64-bit integer")
        self._validate()

    def _validate(self):
        p = self.params
        if self.algorithm == "stepwise-regression":
            if not 0 < p["alpha"] < 1:
                raise ModelError("alpha must lie in (0, 1)")
        elif self.algorithm == "random-forest":
            if p["n_estimators"] < 1 or p["min_samples_leaf"] < 1:
                raise ModelError("n_estimators and min_samples_leaf must be positive")
            if p["max_depth"] is not None and p["max_depth"] < 1:
                raise ModelError("max_depth must be positive")
            if not 0 < p["max_features"] <= 1:
                raise ModelError("max_features is a fraction in (0, 1]")
        elif self.algorithm == "mlp":
            if not p["hidden"] or any(int(w) < 1 for w in p["hidden"]):
                raise ModelError("hidden layer widths must be positive")
            if p["epochs"] < 1 or p["batch_size"] < 1 or not p["learning_rate"] > 0:
                raise ModelError("epochs, batch_size and learning_rate must be positive")
            if (p["activation"], p["optimizer"], p["loss"]) != ("relu", "nadam", "mse"):
                raise ModelError("only relu / nadam / mse networks are supported")
        elif self.algorithm == "svr":
            if not p["C"] > 0 or p["epsilon"] < 0 or not p["tol"] > 0:
                raise ModelError("C and tol must be positive, epsilon non-negative")
            if p["kernel"] != "rbf":
                raise ModelError("only the rbf kernel is supported")
            if p["gamma"] != "scale" and not float(p["gamma"]) > 0:
                raise ModelError("gamma must be 'scale' or positive")

    def summary(self) -> str:
        p = self.params
        if self.algorithm == "stepwise-regression":
            return f"Backward Elimination (alpha={p['alpha']})"
        if self.algorithm == "random-forest":
            return f"n_estimators={p['n_estimators']}"
        if self.algorithm == "mlp":
            widths = " - ".join(str(w) for w in p["hidden"])
            return (f"{len(p['hidden'])} Hidden Layer ({widths}); activation (relu); "
                    f"optimizer='nadam'; loss='mse'; epoch = {p['epochs']}; "
                    f"batch_size = {p['batch_size']}")
        return f"kernel = 'rbf'; gamma = '{p['gamma']}'; c = {p['C']:g}"

    def to_dict(self) -> dict:
        return {"algorithm": self.algorithm, "params": self.params, "seed": int(self.seed)}


@dataclass
class TrainedModel:
    algorithm: str
    columns: tuple[str, ...]
    fingerprint: str
    target_transform: str
    config: dict
    arrays: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)

    def raw_predict(self, X: np.ndarray) -> np.ndarray:
        from . import forest, mlp, stepwise, svr
        module = {"stepwise-regression": stepwise, "random-forest": forest,
                  "mlp": mlp, "svr": svr}[self.algorithm]
        return module.raw_predict(self, np.ascontiguousarray(X, dtype=np.float64))

    # -- artifact

    def save(self, path: str | Path) -> None:
        """Zip of a JSON header plus one .npy per learned array.

        Entries are written in sorted order with a fixed timestamp so equal
        models give byte-identical files.
        """
        header = {
            "artifact_version": ARTIFACT_VERSION,
            "algorithm": self.algorithm,
            "columns": list(self.columns),
            "fingerprint": self.fingerprint,
            "target_transform": self.target_transform,
            "config": self.config,
            "metadata": self.metadata,
            "arrays": sorted(self.arrays),
        }
        with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
            zf.writestr(_entry("header.json"), json.dumps(header, indent=2, sort_keys=True))
            for name in sorted(self.arrays):
                buf = io.BytesIO()
                np.save(buf, np.ascontiguousarray(self.arrays[name]), allow_pickle=False)
                zf.writestr(_entry(f"{name}.npy"), buf.getvalue())

    @classmethod
    def load(cls, path: str | Path) -> "TrainedModel":
        with zipfile.ZipFile(path) as zf:
            header = json.loads(zf.read("header.json"))
            if header.get("artifact_version") != ARTIFACT_VERSION:
                raise ModelError(f"unsupported artifact version {header.get('artifact_version')!r}")
            arrays = {name: np.load(io.BytesIO(zf.read(f"{name}.npy")), allow_pickle=False)
                      for name in header["arrays"]}
        return cls(header["algorithm"], tuple(header["columns"]), header["fingerprint"],
                   header["target_transform"], header["config"], arrays, header["metadata"])


def _entry(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
    info.compress_type = zipfile.ZIP_DEFLATED
    return info


def split_indices(n: int, train_fraction: float = 0.6, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    if n < 2:
        raise ModelError("need at least two rows to split")
    if not 0 < train_fraction < 1:
        raise ModelError("train fraction must lie in (0, 1)")
    n_train = math.floor(train_fraction * n)
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split(matrix: FeatureMatrix, train_fraction: float = 0.6,
          seed: int = 0) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Random train/test partition; the train side has floor(fraction * N) rows."""
    train_idx, test_idx = split_indices(len(matrix), train_fraction, seed)
    return matrix.take(train_idx), matrix.take(test_idx)


def check_fingerprint(model: TrainedModel, matrix: FeatureMatrix) -> None:
    if model.fingerprint != matrix.fingerprint:
        raise FingerprintError(
            f"schema fingerprint mismatch: model {model.fingerprint}, matrix {matrix.fingerprint}")


def model_inputs(model: TrainedModel, matrix: FeatureMatrix) -> np.ndarray:
    check_fingerprint(model, matrix)
    missing = [c for c in model.columns if c not in matrix.columns]
    if missing:
        raise FingerprintError(f"matrix lacks model columns {missing}")
    idx = [matrix.columns.index(c) for c in model.columns]
    return matrix.X[:, idx]


def predict_raw(model: TrainedModel, matrix: FeatureMatrix) -> np.ndarray:
    """Model output on the target scale it was trained on."""
    return model.raw_predict(model_inputs(model, matrix))


def predict(model: TrainedModel, matrix: FeatureMatrix) -> np.ndarray:
    """Predicted ping in ms."""
    out = inverse_target(predict_raw(model, matrix), model.target_transform)
    if not np.all(np.isfinite(out)):
        raise ModelError("non-finite prediction")
    return out


def make_model(config: ModelConfig, matrix: FeatureMatrix, arrays: dict,
               metadata: dict | None = None) -> TrainedModel:
    meta = {"seed": int(config.seed), "n_train": len(matrix), "n_features": len(matrix.columns)}
    meta.update(metadata or {})
    return TrainedModel(config.algorithm, tuple(matrix.columns), matrix.fingerprint,
                        matrix.target_transform, config.to_dict(), arrays, meta)
