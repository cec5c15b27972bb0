"""Backward-elimination stepwise OLS (the baseline model and select-list source)."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..features import FeatureMatrix
from .base import ModelConfig, ModelError, TrainedModel, make_model

log = logging.getLogger(__name__)


class CollinearityWarning(UserWarning):
    pass


@dataclass
class OLSFit:
    coef: np.ndarray       # intercept first
    stderr: np.ndarray
    pvalues: np.ndarray
    df: int
    rss: float


def ols(X: np.ndarray, y: np.ndarray) -> OLSFit:
    """OLS with an intercept column prepended; two-sided t-test p-values."""
    n = X.shape[0]
    A = np.hstack([np.ones((n, 1)), X])
    k = A.shape[1]
    df = n - k
    if df <= 0:
        raise ModelError(f"need more rows ({n}) than coefficients ({k})")
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    rss = float(resid @ resid)
    tss = float(((y - y.mean()) ** 2).sum())
    xtx_inv = np.linalg.inv(A.T @ A)
    sigma2 = rss / df
    stderr = np.sqrt(np.maximum(np.diag(xtx_inv) * sigma2, 0.0))
    if rss <= 1e-24 * max(tss, float(y @ y), 1e-300):
        # Exact fit: t-statistics are undefined. A slope counts as present iff its
        # contribution is above round-off relative to the target.
        scale = np.sqrt(np.maximum((A ** 2).sum(axis=0), 1e-300))
        ynorm = max(float(np.sqrt(y @ y)), 1e-300)
        present = np.abs(coef) * scale > 1e-8 * ynorm
        pvalues = np.where(present, 0.0, 1.0)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(stderr > 0, coef / stderr, 0.0)
        pvalues = 2 * stats.t.sf(np.abs(t), df)
    return OLSFit(coef, stderr, pvalues, df, rss)


def independent_columns(X: np.ndarray, rtol: float = 1e-9) -> list[int]:
    """Indices of columns kept by Gram-Schmidt in column order (intercept included first).

    A column whose residual after projection on the kept columns (and the
    intercept) is below ``rtol`` of its norm is exactly collinear and dropped.
    """
    n = X.shape[0]
    basis = [np.ones(n) / np.sqrt(n)]
    keep = []
    for j in range(X.shape[1]):
        v = X[:, j].astype(float)
        norm = np.linalg.norm(v)
        if norm == 0:
            continue
        r = v.copy()
        for _ in range(2):  # re-orthogonalise for stability
            for q in basis:
                r -= (q @ r) * q
        rn = np.linalg.norm(r)
        if rn <= rtol * norm:
            continue
        basis.append(r / rn)
        keep.append(j)
    return keep


def backward_eliminate(X: np.ndarray, y: np.ndarray, names, alpha: float = 0.05):
    """Returns (kept column indices, final OLSFit, elimination history)."""
    keep = independent_columns(X)
    dropped = [names[j] for j in range(X.shape[1]) if j not in keep]
    if dropped:
        warnings.warn(f"dropping exactly collinear columns: {dropped}", CollinearityWarning,
                      stacklevel=3)
    history = []
    while True:
        fit = ols(X[:, keep], y)
        if not keep:
            break
        slope_p = fit.pvalues[1:]
        worst = int(np.argmax(slope_p))
        if slope_p[worst] <= alpha:
            break
        history.append((names[keep[worst]], float(slope_p[worst])))
        del keep[worst]
    return keep, fit, history


def fit_stepwise(train: FeatureMatrix, alpha: float = 0.05,
                 config: ModelConfig | None = None) -> tuple[TrainedModel, list[str]]:
    config = config or ModelConfig("stepwise-regression", {"alpha": alpha})
    alpha = config.params["alpha"]
    X, y = train.X, train.target
    if X.shape[0] <= 1:
        raise ModelError("stepwise regression needs more than one row")
    keep, fit, history = backward_eliminate(X, y, train.columns, alpha)
    select = [train.columns[j] for j in keep]
    coef = np.zeros(len(train.columns))
    coef[keep] = fit.coef[1:]
    pvals = np.ones(len(train.columns))
    pvals[keep] = fit.pvalues[1:]
    model = make_model(config, train, {"intercept": np.array([fit.coef[0]]), "coef": coef,
                                       "pvalues": pvals},
                       {"select_list": select,
                        "eliminated": [name for name, _ in history]})
    return model, select


def raw_predict(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    return model.arrays["intercept"][0] + X @ model.arrays["coef"]
