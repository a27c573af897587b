"""Fully connected feed-forward regressor trained by mini-batch gradient descent.

Forward and backward passes live as module functions over explicit weight
lists so gradients can be checked against finite differences directly. The
output layer is a single linear unit; the loss is batch-mean squared error
plus an L2 weight decay (biases are not decayed).
"""

from __future__ import annotations

import numpy as np

from .base import BaseEstimator, ConvergenceError, check_array, check_is_fitted, check_n_features, check_X_y


def _logistic(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


ACTIVATIONS = {
    "identity": (lambda z: z, lambda z, a: np.ones_like(z)),
    "logistic": (_logistic, lambda z, a: a * (1.0 - a)),
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "relu": (lambda z: np.maximum(0.0, z), lambda z, a: (z > 0.0).astype(float)),
}


def _forward_full(weights, biases, activations, X):
    """Pre-activations and activations for every layer."""
    acts = [np.asarray(X, dtype=float)]
    zs = []
    a = acts[0]
    for layer, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W + b
        zs.append(z)
        a = ACTIVATIONS[activations[layer]][0](z) if layer < len(weights) - 1 else z
        acts.append(a)
    return zs, acts


def forward_pass(weights, biases, activations, X):
    """Layer activations for a batch; the last entry is the scalar output column."""
    return _forward_full(weights, biases, activations, X)[1]


def loss_and_gradients(weights, biases, activations, X, y, l2_decay=0.0):
    """Batch MSE plus weight decay, with gradients for every parameter."""
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    zs, acts = _forward_full(weights, biases, activations, X)
    pred = acts[-1][:, 0]
    loss = float(np.mean((pred - y) ** 2))
    loss += l2_decay * sum(float(np.sum(W * W)) for W in weights)

    grad_W = [None] * len(weights)
    grad_b = [None] * len(biases)
    # delta holds dLoss/dz for the layer being processed; the output is linear
    delta = (2.0 / n) * (pred - y).reshape(-1, 1)
    for layer in range(len(weights) - 1, -1, -1):
        grad_W[layer] = acts[layer].T @ delta + 2.0 * l2_decay * weights[layer]
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            dact = ACTIVATIONS[activations[layer - 1]][1]
            delta = (delta @ weights[layer].T) * dact(zs[layer - 1], acts[layer])
    return loss, grad_W, grad_b


class MLPRegressor(BaseEstimator):
    """Multi-layer perceptron with configurable hidden widths and activations.

    ``activation`` may be a single name applied to every hidden layer or a
    sequence with one entry per hidden layer (identity, logistic, tanh, relu).
    Initial weights are seeded uniforms scaled by 1/sqrt(fan_in); training is
    deterministic given (params, data). When a validation set is supplied,
    training stops after ``patience`` epochs without improvement and the best
    parameters are restored.
    """

    def __init__(
        self,
        hidden_widths=(64, 32),
        activation="relu",
        learning_rate: float = 1e-3,
        epochs: int = 200,
        batch_size: int = 256,
        l2_decay: float = 1e-5,
        seed: int = 0,
        patience: int = 20,
    ):
        self.hidden_widths = hidden_widths
        self.activation = activation
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.l2_decay = l2_decay
        self.seed = seed
        self.patience = patience

    def _activation_names(self) -> list[str]:
        hidden = list(self.hidden_widths)
        if isinstance(self.activation, str):
            names = [self.activation] * len(hidden)
        else:
            names = list(self.activation)
        if len(names) != len(hidden):
            raise ValueError("need one activation per hidden layer")
        for name in names:
            if name not in ACTIVATIONS:
                raise ValueError(f"unknown activation {name!r}")
        return names

    def fit(self, X, y, X_val=None, y_val=None):
        hidden = [int(w) for w in self.hidden_widths]
        if not hidden or any(w < 1 for w in hidden):
            raise ValueError("hidden_widths must hold positive integers")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        names = self._activation_names()
        X, y = check_X_y(X, y)
        validate = X_val is not None
        if validate:
            X_val, y_val = check_X_y(X_val, y_val)

        rng = np.random.default_rng(np.random.SeedSequence(self.seed))
        sizes = [X.shape[1]] + hidden + [1]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            scale = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-scale, scale, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))

        n = X.shape[0]
        batch = min(self.batch_size, n)
        self.loss_curve_ = []
        best_val = np.inf
        best_params = None
        stale = 0
        last_finite = None
        with np.errstate(over="ignore", invalid="ignore"):
            for epoch in range(self.epochs):
                perm = rng.permutation(n)
                for start in range(0, n, batch):
                    rows = perm[start : start + batch]
                    loss, gW, gb = loss_and_gradients(
                        weights, biases, names, X[rows], y[rows], self.l2_decay
                    )
                    if not np.isfinite(loss):
                        raise ConvergenceError(
                            f"training diverged at epoch {epoch} (last finite loss {last_finite})",
                            epoch=epoch,
                            last_loss=last_finite,
                        )
                    last_finite = loss
                    for W, g in zip(weights, gW):
                        W -= self.learning_rate * g
                    for b, g in zip(biases, gb):
                        b -= self.learning_rate * g
                epoch_loss, _, _ = loss_and_gradients(weights, biases, names, X, y, self.l2_decay)
                self.loss_curve_.append(epoch_loss)
                if validate:
                    val_pred = forward_pass(weights, biases, names, X_val)[-1][:, 0]
                    val_loss = float(np.mean((val_pred - y_val) ** 2))
                    if val_loss < best_val - 1e-12:
                        best_val = val_loss
                        best_params = ([W.copy() for W in weights], [b.copy() for b in biases])
                        stale = 0
                    else:
                        stale += 1
                        if stale >= self.patience:
                            break
        if validate and best_params is not None:
            weights, biases = best_params
        self.weights_ = weights
        self.biases_ = biases
        self.activation_names_ = names
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "weights_")
        X = check_array(X)
        check_n_features(self, X)
        return forward_pass(self.weights_, self.biases_, self.activation_names_, X)[-1][:, 0]

    def to_dict(self) -> dict:
        params = self.get_params()
        params["hidden_widths"] = list(params["hidden_widths"])
        if not isinstance(params["activation"], str):
            params["activation"] = list(params["activation"])
        return {
            "params": params,
            "shapes": [list(W.shape) for W in self.weights_],
            "weights": [W.ravel().tolist() for W in self.weights_],
            "biases": [b.tolist() for b in self.biases_],
        }

    @classmethod
    def from_dict(cls, d) -> "MLPRegressor":
        m = cls(**d["params"])
        m.weights_ = [
            np.asarray(flat, dtype=float).reshape(shape)
            for flat, shape in zip(d["weights"], d["shapes"])
        ]
        m.biases_ = [np.asarray(b, dtype=float) for b in d["biases"]]
        m.activation_names_ = m._activation_names()
        m.n_features_in_ = m.weights_[0].shape[0]
        return m
