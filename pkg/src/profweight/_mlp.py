"""Feed-forward softmax network core shared by the complex model, probes and
the differentiable simple models.

Parameters are kept as a list of ``(W, b)`` pairs with ``W`` of shape
``(fan_out, fan_in)``; :func:`pack` / :func:`unpack` convert to the flat
vector :func:`profweight.numerics.sgd_train` works on.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidSpecError
from .numerics import log_loss_terms, softmax

ACTIVATIONS = ("relu", "identity")


def init_layers(sizes, rng):
    """Scaled-uniform init: every entry ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = rng.uniform(-bound, bound, size=fan_out)
        layers.append((W, b))
    return layers


def pack(layers) -> np.ndarray:
    return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in layers])


def unpack(theta, shapes):
    layers, pos = [], 0
    for fan_out, fan_in in shapes:
        n = fan_out * fan_in
        W = theta[pos:pos + n].reshape(fan_out, fan_in)
        pos += n
        b = theta[pos:pos + fan_out]
        pos += fan_out
        layers.append((W, b))
    return layers


def shapes_of(layers):
    return [W.shape for W, _ in layers]


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "identity":
        return z
    raise InvalidSpecError(f"unknown activation {kind!r}")


def forward(layers, activations, X):
    """Return ``(pre_activations, hidden_outputs, logits)``.

    ``activations`` names the nonlinearity after each hidden layer; the last
    affine map is always linear.
    """
    a = np.asarray(X, dtype=np.float64)
    pre, hidden = [], []
    for (W, b), kind in zip(layers[:-1], activations):
        z = a @ W.T + b
        a = _activate(z, kind)
        pre.append(z)
        hidden.append(a)
    W, b = layers[-1]
    return pre, hidden, a @ W.T + b


def predict_proba(layers, activations, X):
    return softmax(forward(layers, activations, X)[2])


def loss_and_grad(layers, activations, X, targets, weights):
    """Weighted cross-entropy normalized by ``sum(weights)`` and its gradient.

    ``targets`` may be integer labels or a matrix of soft targets.  The
    gradient ignores the probability floor (it is the gradient of the
    unfloored loss), which only matters for probabilities below 1e-12.
    """
    X = np.asarray(X, dtype=np.float64)
    pre, hidden, logits = forward(layers, activations, X)
    probs = softmax(logits)
    v = np.asarray(weights, dtype=np.float64)
    v = v / v.sum()
    loss = float(np.dot(v, log_loss_terms(probs, targets)))
    t = np.asarray(targets)
    delta = probs.copy()
    if t.ndim == 1:
        delta[np.arange(X.shape[0]), t.astype(np.int64)] -= 1.0
    else:
        delta -= t
    delta *= v[:, None]
    grads = [None] * len(layers)
    inputs = [X] + hidden
    for li in range(len(layers) - 1, -1, -1):
        W, _ = layers[li]
        grads[li] = (delta.T @ inputs[li], delta.sum(axis=0))
        if li > 0:
            back = delta @ W
            if activations[li - 1] == "relu":
                back = back * (pre[li - 1] > 0)
            delta = back
    return loss, grads
