"""Dense numerical kernel: softmax, weighted cross-entropy, momentum SGD and
finite-difference gradient checking.

Everything runs in float64.  Shuffling uses numpy's PCG64 generator
(``numpy.random.default_rng``) so a given ``SgdConfig.seed`` replays the same
batch order on every platform numpy supports.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateWeightsError, DivergenceError, InvalidArgumentError

PROB_FLOOR = 1e-12

Objective = Callable[[np.ndarray, np.ndarray], "tuple[float, np.ndarray]"]


def softmax(logits):
    """Row-wise numerically stable softmax.

    Accepts a vector or a 2-D array (one distribution per row).
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0 or z.shape[-1] == 0:
        raise InvalidArgumentError("softmax needs at least one logit")
    if not np.all(np.isfinite(z)):
        raise InvalidArgumentError("softmax received non-finite logits")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_loss_terms(probs, targets):
    """Per-sample cross-entropy ``-sum_c t_c log p_c`` with the probability floor.

    ``targets`` is either an integer label vector or a row-stochastic matrix.
    """
    p = np.asarray(probs, dtype=np.float64)
    t = np.asarray(targets)
    logp = np.log(np.maximum(p, PROB_FLOOR))
    if t.ndim == 1:
        return -logp[np.arange(p.shape[0]), t.astype(np.int64)]
    return -(t * logp).sum(axis=1)


def _check_weights(weights, m):
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (m,):
        raise InvalidArgumentError(f"expected {m} weights, got shape {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidArgumentError("weights must be finite and non-negative")
    total = w.sum()
    if total <= 0:
        raise DegenerateWeightsError("sample weights sum to zero")
    return w, total


def weighted_cross_entropy(probs, labels, weights) -> float:
    """``(1 / sum w) * sum_i w_i * -ln(probs_i[label_i])``, probabilities floored at 1e-12."""
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (p.shape[0],):
        raise InvalidArgumentError("probs and labels differ in length")
    if np.any(y < 0) or np.any(y >= p.shape[1]):
        raise InvalidArgumentError("label outside the class range")
    w, total = _check_weights(weights, p.shape[0])
    return float(np.dot(w / total, log_loss_terms(p, y)))


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 0.05
    batch_size: int = 32
    epochs: int = 20
    l2_penalty: float = 0.0
    momentum: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if self.batch_size < 1:
            raise InvalidArgumentError("batch_size must be >= 1")
        if self.epochs < 1:
            raise InvalidArgumentError("epochs must be >= 1")
        if self.l2_penalty < 0:
            raise InvalidArgumentError("l2_penalty must be non-negative")
        if not 0 <= self.momentum < 1:
            raise InvalidArgumentError("momentum must lie in [0, 1)")

    def replace(self, **changes) -> "SgdConfig":
        return SgdConfig(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)


def sgd_train(
    objective: Objective,
    init_params,
    cfg: SgdConfig,
    data_indices: Sequence[int],
    loss_log: list | None = None,
) -> np.ndarray:
    """Minibatch SGD with classical momentum and an optional L2 penalty.

    ``objective(params, batch_indices)`` returns ``(loss, gradient)`` for the
    batch.  The L2 term ``0.5 * l2 * ||params||^2`` is added here.  Batch order
    depends only on ``cfg.seed``.  When ``loss_log`` is given, the mean batch
    loss of every epoch is appended to it.
    """
    theta = np.array(init_params, dtype=np.float64, copy=True)
    idx = np.asarray(data_indices, dtype=np.int64)
    if idx.size == 0:
        raise InvalidArgumentError("sgd_train needs at least one data index")
    rng = np.random.default_rng(cfg.seed)
    velocity = np.zeros_like(theta)
    n_batches = -(-idx.size // cfg.batch_size)
    for epoch in range(cfg.epochs):
        order = idx[rng.permutation(idx.size)]
        epoch_loss = 0.0
        for b in range(n_batches):
            batch = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            loss, grad = objective(theta, batch)
            if cfg.l2_penalty:
                loss = loss + 0.5 * cfg.l2_penalty * float(theta @ theta)
                grad = grad + cfg.l2_penalty * theta
            if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
                raise DivergenceError(
                    f"non-finite loss or gradient at epoch {epoch}, batch {b}",
                    epoch=epoch, batch=b)
            velocity = cfg.momentum * velocity - cfg.learning_rate * grad
            theta = theta + velocity
            epoch_loss += float(loss)
        if loss_log is not None:
            loss_log.append(epoch_loss / n_batches)
    return theta


def gradient_check(objective: Callable, params, step: float = 1e-5) -> float:
    """Largest per-coordinate relative error between analytic and central-difference gradients.

    ``objective(params)`` must return ``(loss, gradient)``.  The relative error
    of a coordinate is ``|a - n| / max(1e-8, |a| + |n|)``.
    """
    if not step > 0:
        raise InvalidArgumentError("step must be positive")
    theta = np.array(params, dtype=np.float64, copy=True)
    _, analytic = objective(theta)
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + step
        f_plus = objective(theta)[0]
        theta[i] = orig - step
        f_minus = objective(theta)[0]
        theta[i] = orig
        numeric[i] = (f_plus - f_minus) / (2 * step)
    if not (np.all(np.isfinite(numeric)) and np.all(np.isfinite(analytic))):
        raise DivergenceError("non-finite value during gradient check")
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))
