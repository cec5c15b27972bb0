"""Epsilon-insensitive support vector regression with an RBF kernel, solved by SMO.

The dual is written over 2l variables: a_i (sign +1) for i < l and a*_i
(sign -1) for i >= l, minimising 0.5 a'Qa + p'a subject to sum(sign * a) = 0
and 0 <= a <= C, with p = eps - y for a and eps + y for a*. Each iteration
picks the maximal violating pair and solves the two-variable subproblem in
closed form; it stops when the violation gap drops below ``tol``.
"""

from __future__ import annotations

import numba
import numpy as np

from ..features import FeatureMatrix
from .base import ModelConfig, ModelError, TrainedModel, TrainingError, make_model

_TAU = 1e-12


def scale_gamma(X: np.ndarray) -> float:
    """1 / (n_features * variance of all feature values); 1.0 for constant input."""
    var = float(X.var())
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


@numba.njit(cache=True)
def _kernel_row(X, sqn, gamma, i, out):
    for t in range(X.shape[0]):
        dot = 0.0
        for f in range(X.shape[1]):
            dot += X[i, f] * X[t, f]
        d = sqn[i] + sqn[t] - 2.0 * dot
        if d < 0.0:
            d = 0.0
        out[t] = np.exp(-gamma * d)


@numba.njit(cache=True)
def _smo(X, y, C, eps, gamma, tol, max_iter):
    l = X.shape[0]
    n2 = 2 * l
    sqn = np.empty(l)
    for i in range(l):
        s = 0.0
        for f in range(X.shape[1]):
            s += X[i, f] * X[i, f]
        sqn[i] = s
    sign = np.empty(n2)
    alpha = np.zeros(n2)
    grad = np.empty(n2)
    for i in range(l):
        sign[i] = 1.0
        sign[i + l] = -1.0
        grad[i] = eps - y[i]
        grad[i + l] = eps + y[i]
    ki = np.empty(l)
    kj = np.empty(l)

    it = 0
    gap = np.inf
    while it < max_iter:
        # Maximal violating pair.
        gmax = -np.inf
        gmin = np.inf
        i = -1
        j = -1
        for t in range(n2):
            v = -sign[t] * grad[t]
            up = (sign[t] > 0 and alpha[t] < C) or (sign[t] < 0 and alpha[t] > 0)
            low = (sign[t] > 0 and alpha[t] > 0) or (sign[t] < 0 and alpha[t] < C)
            if up and v > gmax:
                gmax = v
                i = t
            if low and v < gmin:
                gmin = v
                j = t
        gap = gmax - gmin
        if i < 0 or j < 0 or gap < tol:
            break
        it += 1

        ri = i % l
        rj = j % l
        _kernel_row(X, sqn, gamma, ri, ki)
        _kernel_row(X, sqn, gamma, rj, kj)
        kij = ki[rj]
        quad = ki[ri] + kj[rj] - 2.0 * kij
        if quad <= 0.0:
            quad = _TAU
        yi = sign[i]
        yj = sign[j]
        # Move along the feasible direction that keeps sum(sign * alpha) fixed.
        delta = (-yi * grad[i] + yj * grad[j]) / quad
        # alpha_i += yi * delta, alpha_j -= yj * delta; clip to the box.
        lo_d = -np.inf
        hi_d = np.inf
        if yi > 0:
            lo_d = max(lo_d, -alpha[i])
            hi_d = min(hi_d, C - alpha[i])
        else:
            lo_d = max(lo_d, alpha[i] - C)
            hi_d = min(hi_d, alpha[i])
        if yj > 0:
            lo_d = max(lo_d, alpha[j] - C)
            hi_d = min(hi_d, alpha[j])
        else:
            lo_d = max(lo_d, -alpha[j])
            hi_d = min(hi_d, C - alpha[j])
        if delta < lo_d:
            delta = lo_d
        if delta > hi_d:
            delta = hi_d
        dai = yi * delta
        daj = -yj * delta
        alpha[i] += dai
        alpha[j] += daj
        # Snap to bounds against round-off.
        for t in (i, j):
            if alpha[t] < 1e-14 * C:
                alpha[t] = 0.0
            elif alpha[t] > C * (1 - 1e-14):
                alpha[t] = C
        # grad_t += Q_ti dai + Q_tj daj with Q_ts = sign_t sign_s K.
        for t in range(n2):
            r = t % l
            grad[t] += sign[t] * (yi * ki[r] * dai + yj * kj[r] * daj)

    # rho: average over free variables, else midpoint of the feasible interval.
    ub = np.inf
    lb = -np.inf
    acc = 0.0
    nfree = 0
    for t in range(n2):
        yg = sign[t] * grad[t]
        if alpha[t] >= C:
            if sign[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0.0:
            if sign[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            nfree += 1
            acc += yg
    if nfree > 0:
        rho = acc / nfree
    else:
        rho = 0.5 * (ub + lb)
    coef = alpha[:l] - alpha[l:]
    return coef, -rho, alpha, it, gap


def fit_svr(train: FeatureMatrix, config: ModelConfig | None = None) -> TrainedModel:
    config = config or ModelConfig("svr")
    if config.algorithm != "svr":
        raise ModelError(f"expected an svr config, got {config.algorithm}")
    p = config.params
    X = np.ascontiguousarray(train.X, dtype=np.float64)
    y = np.ascontiguousarray(train.target, dtype=np.float64)
    if X.shape[0] == 0:
        raise ModelError("cannot fit an SVR on an empty training set")
    gamma = scale_gamma(X) if p["gamma"] == "scale" else float(p["gamma"])
    coef, bias, alpha, iters, gap = _smo(X, y, float(p["C"]), float(p["epsilon"]), gamma,
                                         float(p["tol"]), int(p["max_iter"]))
    if gap >= p["tol"]:
        raise TrainingError(f"SMO did not converge within {iters} iterations (gap {gap:.3g})")
    support = np.flatnonzero(coef != 0.0)
    arrays = {"support_vectors": X[support], "dual_coef": coef[support],
              "bias": np.array([bias]), "gamma": np.array([gamma]),
              "alpha": alpha[:X.shape[0]], "alpha_star": alpha[X.shape[0]:]}
    return make_model(config, train, arrays, {"iterations": int(iters), "gap": float(gap),
                                              "n_support": int(support.size)})


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    d = (A ** 2).sum(1)[:, None] + (B ** 2).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(d, 0.0))


def raw_predict(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    a = model.arrays
    out = np.full(X.shape[0], a["bias"][0])
    sv = a["support_vectors"]
    if sv.shape[0]:
        for start in range(0, X.shape[0], 2048):
            block = X[start:start + 2048]
            out[start:start + 2048] += rbf_kernel(block, sv, a["gamma"][0]) @ a["dual_coef"]
    return out


def kkt_violations(model: TrainedModel, X: np.ndarray, y: np.ndarray, tol: float = 1e-3) -> dict:
    """Check box feasibility and the epsilon-tube conditions at every training point.

    Returns the worst violation of each condition; all must be <= tol.
    """
    a = model.arrays
    C = float(model.config["params"]["C"])
    eps = float(model.config["params"]["epsilon"])
    al, als = a["alpha"], a["alpha_star"]
    resid = y - raw_predict(model, X)  # y - f(x)
    box = float(max(0.0, -al.min(), -als.min(), al.max() - C, als.max() - C))
    equality = abs(float((al - als).sum()))
    # a_i = 0 requires y - f <= eps; 0 < a_i < C requires y - f = eps; a_i = C requires y - f >= eps.
    upper = np.where(al <= 0, np.maximum(resid - eps, 0.0),
                     np.where(al >= C, np.maximum(eps - resid, 0.0), np.abs(resid - eps)))
    # a*_i = 0 requires f - y <= eps, and so on mirrored.
    lower = np.where(als <= 0, np.maximum(-resid - eps, 0.0),
                     np.where(als >= C, np.maximum(eps + resid, 0.0), np.abs(-resid - eps)))
    complementarity = float(np.max(np.minimum(al, als))) if len(al) else 0.0
    return {"box": box, "equality": equality, "tube_upper": float(upper.max(initial=0.0)),
            "tube_lower": float(lower.max(initial=0.0)), "complementarity": complementarity}
