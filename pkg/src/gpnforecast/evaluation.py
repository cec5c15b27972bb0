"""Error metrics, latency buckets and unit-aware leaderboards."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .features import FeatureMatrix, target_values
from .models.base import TrainedModel, check_fingerprint, predict_raw

UNIT_TAGS = {"identity": "ms", "log": "ln(ms)"}


class MetricError(ValueError):
    pass


def _pair(pred, actual) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=float).ravel()
    actual = np.asarray(actual, dtype=float).ravel()
    if pred.shape != actual.shape:
        raise MetricError(f"length mismatch: {pred.size} predictions vs {actual.size} actuals")
    if pred.size == 0:
        raise MetricError("metrics need at least one observation")
    return pred, actual


def rmse(pred, actual) -> float:
    pred, actual = _pair(pred, actual)
    return math.sqrt(float(np.mean((pred - actual) ** 2)))


def mape(pred, actual) -> float:
    """Mean absolute percentage error, in percent. Undefined when an actual is zero."""
    pred, actual = _pair(pred, actual)
    if np.any(actual == 0):
        raise MetricError("MAPE does not make sense when the dependent variable takes on zero values")
    return 100.0 * float(np.mean(np.abs(pred - actual) / np.abs(actual)))


# (label, inclusive upper edge in ms)
LATENCY_BUCKETS = (("0-5ms", 5.0), ("5-50ms", 50.0), ("50-200ms", 200.0), (">200ms", math.inf))


def latency_bucket(ping: float) -> str:
    if not ping > 0:
        raise MetricError(f"ping must be positive, got {ping}")
    for label, upper in LATENCY_BUCKETS:
        if ping <= upper:
            return label
    raise AssertionError("unreachable")


def bucket_counts(pings) -> dict[str, int]:
    counts = {label: 0 for label, _ in LATENCY_BUCKETS}
    for p in pings:
        counts[latency_bucket(float(p))] += 1
    return counts


@dataclass
class EvalRow:
    algorithm: str
    feature_option: str
    details: str
    unit: str
    rmse: float
    mape: float | None
    mape_ms: float | None
    n: int


@dataclass
class EvalReport:
    rows: list[EvalRow]
    split: dict = field(default_factory=dict)

    def groups(self) -> dict[str, list[EvalRow]]:
        out: dict[str, list[EvalRow]] = {}
        for row in self.rows:
            out.setdefault(row.unit, []).append(row)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["unit", "algorithm", "feature", "model_details", "rmse", "mape", "mape_ms", "n"])
        for r in self.rows:
            w.writerow([r.unit, r.algorithm, r.feature_option, r.details, f"{r.rmse:.6g}",
                        "" if r.mape is None else f"{r.mape:.6g}",
                        "" if r.mape_ms is None else f"{r.mape_ms:.6g}", r.n])
        return buf.getvalue()

    def to_markdown(self) -> str:
        parts = []
        for unit, rows in self.groups().items():
            parts.append(f"Target unit: {unit}\n")
            extra = unit != "ms"
            head = "| Algorithm | Feature | Model Details | RMSE | MAPE |"
            rule = "|---|---|---|---|---|"
            if extra:
                head += " MAPE (ms) |"
                rule += "---|"
            parts.append(head)
            parts.append(rule)
            for r in rows:
                line = (f"| {r.algorithm} | {r.feature_option} | {r.details} | {r.rmse:.4g} | "
                        f"{_pct(r.mape)} |")
                if extra:
                    line += f" {_pct(r.mape_ms)} |"
                parts.append(line)
            parts.append("")
        return "\n".join(parts)


def _pct(v):
    return "n/a" if v is None else f"{v:.2f}%"


ALGORITHM_LABELS = {"stepwise-regression": "Stepwise Regression", "random-forest": "Random Forest",
                    "mlp": "Multiple Layer Perceptron", "svr": "Support Vector Regression"}


def _details(model: TrainedModel) -> str:
    from .models.base import ModelConfig
    cfg = model.config
    return ModelConfig(cfg["algorithm"], cfg["params"], cfg["seed"]).summary()


def leaderboard(entries: Sequence[tuple[str, TrainedModel]], test: FeatureMatrix,
                split_info: dict | None = None) -> EvalReport:
    """Score ``(feature_option, model)`` pairs on one test matrix.

    Log-target models are scored in log space, with ms-space MAPE alongside.
    Rows are grouped by target unit and sorted by MAPE within each group;
    RMSE is never compared across groups.
    """
    rows = []
    for option, model in entries:
        check_fingerprint(model, test)
        raw = predict_raw(model, test)
        actual = target_values(test.ping, model.target_transform)
        unit = UNIT_TAGS[model.target_transform]
        m = mape(raw, actual) if np.all(actual > 0) else None
        if model.target_transform == "log":
            m_ms = mape(np.exp(raw), test.ping)
        else:
            m_ms = m
        rows.append(EvalRow(ALGORITHM_LABELS[model.algorithm], option, _details(model), unit,
                            rmse(raw, actual), m, m_ms, len(test)))
    order = {"ms": 0, "ln(ms)": 1}
    rows.sort(key=lambda r: (order[r.unit], math.inf if r.mape is None else r.mape))
    return EvalReport(rows, dict(split_info or {}))
