"""Fully connected ReLU regression network trained with Nadam on mean squared error."""

from __future__ import annotations

import math

import numpy as np

from ..features import FeatureMatrix
from .base import ModelConfig, ModelError, TrainedModel, TrainingError, make_model

# Momentum schedule constant of the Nadam variant used by Keras and PyTorch.
MOMENTUM_DECAY = 0.004


def init_params(sizes, rng: np.random.Generator) -> list[np.ndarray]:
    """[W1, b1, W2, b2, ...]; weights uniform in +-sqrt(6 / fan_in), biases zero."""
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / fan_in)
        params.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def forward(params, X):
    """Returns (output vector, list of layer inputs, list of pre-activations)."""
    a = X
    inputs, pre = [], []
    n_layers = len(params) // 2
    for k in range(n_layers):
        W, b = params[2 * k], params[2 * k + 1]
        inputs.append(a)
        z = a @ W + b
        pre.append(z)
        a = np.maximum(z, 0.0) if k < n_layers - 1 else z
    return a[:, 0], inputs, pre


def loss_and_grads(params, X, y):
    """Mean squared error and its gradient with respect to every parameter."""
    out, inputs, pre = forward(params, X)
    n = X.shape[0]
    resid = out - y
    loss = float(resid @ resid) / n
    delta = (2.0 / n) * resid[:, None]
    grads = [None] * len(params)
    for k in range(len(params) // 2 - 1, -1, -1):
        grads[2 * k] = inputs[k].T @ delta
        grads[2 * k + 1] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ params[2 * k].T) * (pre[k - 1] > 0)
    return loss, grads


class Nadam:
    """Adam with Nesterov momentum and the 0.96-power momentum schedule."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0
        self.mu_product = 1.0

    def _mu(self, t):
        return self.beta1 * (1.0 - 0.5 * 0.96 ** (t * MOMENTUM_DECAY))

    def step(self, params, grads):
        self.t += 1
        t = self.t
        mu_t, mu_next = self._mu(t), self._mu(t + 1)
        self.mu_product *= mu_t
        mu_prod_next = self.mu_product * mu_next
        bias2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = mu_next * m / (1.0 - mu_prod_next) + (1.0 - mu_t) * g / (1.0 - self.mu_product)
            v_hat = v / bias2
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def fit_mlp(train: FeatureMatrix, config: ModelConfig | None = None) -> TrainedModel:
    config = config or ModelConfig("mlp")
    if config.algorithm != "mlp":
        raise ModelError(f"expected an mlp config, got {config.algorithm}")
    p = config.params
    X = np.ascontiguousarray(train.X, dtype=np.float64)
    y = np.ascontiguousarray(train.target, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise ModelError("cannot fit a network on an empty training set")
    rng = np.random.Generator(np.random.PCG64(int(config.seed)))
    sizes = [X.shape[1]] + [int(w) for w in p["hidden"]] + [1]
    params = init_params(sizes, rng)
    opt = Nadam(params, p["learning_rate"], p["beta1"], p["beta2"], p["eps"])
    batch = int(p["batch_size"])
    losses = []
    # overflow is caught below as a non-finite loss
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, int(p["epochs"]) + 1):
            order = rng.permutation(n)
            for start in range(0, n, batch):
                rows = order[start:start + batch]
                loss, grads = loss_and_grads(params, X[rows], y[rows])
                if not math.isfinite(loss):
                    raise TrainingError(f"mlp training diverged at epoch {epoch}")
                opt.step(params, grads)
            out, _, _ = forward(params, X)
            epoch_loss = float(np.mean((out - y) ** 2))
            if not math.isfinite(epoch_loss):
                raise TrainingError(f"mlp training diverged at epoch {epoch}")
            losses.append(epoch_loss)
    arrays = {f"param{k:02d}": a for k, a in enumerate(params)}
    arrays["loss_curve"] = np.array(losses)
    return make_model(config, train, arrays, {"layers": sizes, "final_loss": losses[-1]})


def model_params(model: TrainedModel) -> list[np.ndarray]:
    names = sorted(k for k in model.arrays if k.startswith("param"))
    return [model.arrays[k] for k in names]


def raw_predict(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    out, _, _ = forward(model_params(model), X)
    return out
