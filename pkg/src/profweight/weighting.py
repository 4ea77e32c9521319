"""Sample weights from probe confidence profiles.

* :func:`select_probes` keeps the probes whose error beats the simple model's
  by a margin ``alpha``.
* :func:`auc_weights` averages each sample's true-label confidences over the
  selected probes.
* :func:`learn_weights_nn` learns a small ReLU network mapping confidence
  vectors to weights, alternating with the simple model's own training.
* :func:`conf_weights` is the single-probe baseline: the complex model's
  confidence in the true label.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import _mlp
from .complex_model import LayeredModel, predict_proba
from .data import Dataset
from .errors import DataError, EmptyProbeSetError, InvalidArgumentError
from .jsonio import format_float
from .numerics import SgdConfig
from .probes import ConfidenceProfile, build_profile
from .simple_models import SimpleModelSpec, evaluate, per_sample_loss, train_simple

log = logging.getLogger(__name__)

SCHEMES = ("standard", "confweight", "profweight-auc", "profweight-nn")
# absorbs the rounding in e_S - (e_S - e_u) so a margin built from an error difference selects that probe
SELECT_ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class WeightVector:
    weights: np.ndarray
    scheme: str

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidArgumentError("weights must be finite and non-negative")
        if self.scheme == "profweight-auc" and np.any(w > 1):
            raise InvalidArgumentError("AUC weights must lie in [0, 1]")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.shape[0]

    def summary(self, hard=None) -> dict:
        w = self.weights
        out = {"min": float(w.min()), "mean": float(w.mean()), "max": float(w.max())}
        if hard is not None:
            h = np.asarray(hard, dtype=bool)
            out["mean_hard"] = float(w[h].mean()) if h.any() else None
            out["mean_easy"] = float(w[~h].mean()) if (~h).any() else None
            hf = h.astype(np.float64)
            if w.std() > 0 and hf.std() > 0:
                out["corr_with_hard"] = float(np.corrcoef(w, hf)[0, 1])
            else:
                out["corr_with_hard"] = None
        return out


def save_weights_csv(weights: WeightVector, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_index", "weight"])
        for i, v in enumerate(weights.weights):
            w.writerow([i, format_float(v)])


def load_weights_csv(path, scheme: str = "standard") -> WeightVector:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["sample_index", "weight"]:
        raise DataError(f"{path}: expected a 'sample_index,weight' header")
    body = rows[1:]
    idx = [int(r[0]) for r in body]
    if idx != list(range(len(body))):
        raise DataError(f"{path}: sample indices must run 0..m-1 in order")
    return WeightVector(np.array([float(r[1]) for r in body]), scheme)


@dataclass(frozen=True)
class MarginSelection:
    alpha: float | None  # None when a lowest unit was forced instead
    simple_error: float
    probe_errors: tuple  # ((key, error), ...) in probe order
    selected: tuple

    def table(self) -> str:
        if self.alpha is None:
            head = f"e_S = {self.simple_error:.6f}   lowest unit forced: {self.selected[0]}"
        else:
            thr = self.simple_error - self.alpha
            head = f"e_S = {self.simple_error:.6f}   alpha = {self.alpha:.6g}   threshold e_S - alpha = {thr:.6f}"
        lines = [head, f"{'unit':>10}  {'e_u':>10}  selected"]
        chosen = set(self.selected)
        for key, e in self.probe_errors:
            lines.append(f"{str(key):>10}  {e:10.6f}  {'yes' if key in chosen else 'no'}")
        lines.append(f"I = {{{', '.join(str(k) for k in self.selected)}}}")
        return "\n".join(lines)


def select_probes(probe_errors, e_S: float, alpha: float) -> MarginSelection:
    """``I = {u : e_u <= e_S - alpha}``.

    ``probe_errors`` is a mapping from unit key to error, or a sequence (keys
    are then the positions).  An empty ``I`` is returned as such.
    """
    if isinstance(probe_errors, Mapping):
        items = tuple((k, float(v)) for k, v in probe_errors.items())
    else:
        items = tuple(enumerate(float(v) for v in probe_errors))
    for k, e in items:
        if not 0.0 <= e <= 1.0:
            raise InvalidArgumentError(f"probe {k!r}: error {e} outside [0, 1]")
    threshold = e_S - alpha
    selected = tuple(k for k, e in items if e <= threshold + SELECT_ATOL)
    return MarginSelection(float(alpha), float(e_S), items, selected)


def lowest_unit_selection(probe_errors: Mapping, lowest_unit, e_S: float) -> MarginSelection:
    """Manual override: every probe from ``lowest_unit`` upward, in probe order."""
    keys = list(probe_errors)
    if lowest_unit not in keys:
        raise InvalidArgumentError(f"unknown lowest unit {lowest_unit!r}")
    chosen = tuple(keys[keys.index(lowest_unit):])
    items = tuple((k, float(v)) for k, v in probe_errors.items())
    return MarginSelection(None, float(e_S), items, chosen)


def auc_weights(profile: ConfidenceProfile) -> WeightVector:
    """Mean true-label confidence over the selected probes, per sample."""
    if len(profile.unit_names) == 0 or profile.scores.shape[1] == 0:
        raise EmptyProbeSetError("no probes selected; lower alpha so at least one probe qualifies")
    return WeightVector(profile.scores.mean(axis=1), "profweight-auc")


def conf_weights(model: LayeredModel, D_S: Dataset) -> WeightVector:
    p = predict_proba(model, D_S.features)
    return WeightVector(p[np.arange(D_S.m), D_S.labels], "confweight")


def weight_regularizer(w, gamma: float) -> float:
    """``gamma * (mean(w) - 1)^2``."""
    w = np.asarray(getattr(w, "weights", w), dtype=np.float64)
    if w.size == 0:
        raise InvalidArgumentError("need at least one weight")
    return float(gamma * (w.mean() - 1.0) ** 2)


# --------------------------------------------------------------------------
# learned weights


@dataclass(frozen=True)
class WeightNetSpec:
    """Settings for the learned (ReLU-output) weighting network.

    The weight step is full-batch gradient descent with Armijo backtracking, so
    each accepted step lowers the weight-step objective.
    """

    hidden_widths: tuple = (8,)
    gamma: float = 1.0
    l2: float = 1e-4
    outer_iterations: int = 5
    inner_steps: int = 50
    learning_rate: float = 1.0
    backtrack_factor: float = 0.5
    max_backtracks: int = 40
    armijo: float = 1e-4
    tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.gamma < 0:
            raise InvalidArgumentError("gamma must be non-negative")
        if self.outer_iterations < 1 or self.inner_steps < 0:
            raise InvalidArgumentError("iteration counts must be positive")
        object.__setattr__(self, "hidden_widths", tuple(int(h) for h in self.hidden_widths))


class WeightNet:
    """MLP from a confidence vector to one non-negative weight (ReLU output)."""

    def __init__(self, n_inputs: int, hidden_widths, seed: int = 0):
        sizes = [n_inputs, *hidden_widths, 1]
        layers = _mlp.init_layers(sizes, np.random.default_rng(seed))
        # zero output map with unit bias: every initial weight is exactly 1
        W_out, _ = layers[-1]
        layers[-1] = (np.zeros_like(W_out), np.ones(1))
        self.shapes = _mlp.shapes_of(layers)
        self.activations = ("relu",) * len(hidden_widths)
        self.theta = _mlp.pack(layers)

    def forward(self, theta, C):
        layers = _mlp.unpack(theta, self.shapes)
        pre, hidden, out = _mlp.forward(layers, self.activations, C)
        return pre, hidden, out[:, 0]

    def weights(self, C, theta=None) -> np.ndarray:
        return np.maximum(self.forward(self.theta if theta is None else theta, C)[2], 0.0)


def weight_step_objective(net: WeightNet, C, losses, gamma: float, l2: float):
    """Objective of the weight step with the simple model held fixed.

    ``J(theta) = (1/m) sum_i w_i * loss_i + gamma * (mean(w) - 1)^2 + (l2/2)*||theta||^2``
    with ``w_i = relu(net(C_i))``.  Returns a callable giving ``(J, dJ/dtheta)``.
    """
    C = np.asarray(C, dtype=np.float64)
    losses = np.asarray(losses, dtype=np.float64)
    m = C.shape[0]

    def objective(theta):
        layers = _mlp.unpack(theta, net.shapes)
        pre, hidden, out = _mlp.forward(layers, net.activations, C)
        a = out[:, 0]
        w = np.maximum(a, 0.0)
        mean_w = w.mean()
        J = float(np.dot(w, losses) / m + gamma * (mean_w - 1.0) ** 2 + 0.5 * l2 * theta @ theta)
        dw = losses / m + 2.0 * gamma * (mean_w - 1.0) / m
        delta = (dw * (a > 0))[:, None]
        grads = [None] * len(layers)
        inputs = [C] + hidden
        for li in range(len(layers) - 1, -1, -1):
            W, _ = layers[li]
            grads[li] = (delta.T @ inputs[li], delta.sum(axis=0))
            if li > 0:
                delta = (delta @ W) * (pre[li - 1] > 0)
        return J, _mlp.pack(grads) + l2 * theta

    return objective


def _backtracking_descent(objective, theta, spec: WeightNetSpec, trace: list):
    J, g = objective(theta)
    trace.append(J)
    step = spec.learning_rate
    for _ in range(spec.inner_steps):
        gg = float(g @ g)
        if gg == 0.0:
            break
        accepted = False
        for _ in range(spec.max_backtracks):
            cand = theta - step * g
            J_new, g_new = objective(cand)
            if np.isfinite(J_new) and J_new <= J - spec.armijo * step * gg:
                accepted = True
                break
            step *= spec.backtrack_factor
        if not accepted:
            break
        theta, J, g = cand, J_new, g_new
        trace.append(J)
        step = min(step * 2.0, spec.learning_rate)
    return theta, J


@dataclass
class WeightLearningResult:
    weights: WeightVector
    objective_trace: list = field(default_factory=list)  # after each half step
    inner_traces: list = field(default_factory=list)  # per weight step: J after each accepted step
    first_beta_loss: float | None = None
    model: object = None


def _alternation_objective(w, losses, gamma):
    return float(np.dot(w, losses) / w.shape[0] + gamma * (w.mean() - 1.0) ** 2)


def learn_weights_nn(profile: ConfidenceProfile, D_S: Dataset, simple_spec: SimpleModelSpec,
                     spec: WeightNetSpec) -> WeightLearningResult:
    """Alternate simple-model fits and weight-net updates.

    Each round: (a) train the simple model on ``D_S`` with the current weights;
    (b) with that model fixed, run backtracking gradient descent on the
    weight-net parameters.  ``objective_trace`` holds
    ``(1/m) sum w_i loss_i + gamma * R(w)`` after every half step.  Stops after
    ``spec.outer_iterations`` rounds or when a full round improves the
    objective by less than ``spec.tol``.
    """
    if profile.scores.shape[1] == 0:
        raise EmptyProbeSetError("no probes selected; lower alpha so at least one probe qualifies")
    if profile.m != D_S.m:
        raise InvalidArgumentError("profile rows do not align with D_S")
    C = profile.scores
    net = WeightNet(C.shape[1], spec.hidden_widths, spec.seed)
    w = net.weights(C)
    result = WeightLearningResult(WeightVector(w, "profweight-nn"))
    previous = None
    for it in range(spec.outer_iterations):
        if not w.sum() > 0:
            log.warning("weight net collapsed to all-zero weights at round %d", it)
            break
        model = train_simple(D_S, w, simple_spec)
        losses = per_sample_loss(model, D_S)
        if it == 0:
            result.first_beta_loss = float(np.dot(w, losses) / w.sum())
        result.objective_trace.append(_alternation_objective(w, losses, spec.gamma))
        objective = weight_step_objective(net, C, losses, spec.gamma, spec.l2)
        trace: list = []
        net.theta, _ = _backtracking_descent(objective, net.theta, spec, trace)
        result.inner_traces.append(trace)
        w_new = net.weights(C)
        current = _alternation_objective(w_new, losses, spec.gamma)
        result.objective_trace.append(current)
        w = w_new
        result.model = model
        if previous is not None and previous - current < spec.tol:
            break
        previous = current
    result.weights = WeightVector(w, "profweight-nn")
    return result


# --------------------------------------------------------------------------
# end to end


@dataclass
class ProfWeightResult:
    weights: WeightVector
    model: object
    selection: MarginSelection
    standard_model: object
    simple_error: float
    learning: WeightLearningResult | None = None


def probe_error_map(probes) -> dict:
    errs = {}
    for p in probes:
        if p.error is None:
            raise InvalidArgumentError(f"probe {p.unit_name!r} has no recorded error; score it on D_S first")
        errs[p.unit_name] = p.error
    return errs


def profweight(model: LayeredModel, probes, D_S: Dataset, simple_spec: SimpleModelSpec,
               alpha: float = 0.0, scheme: str = "auc", nn_spec: WeightNetSpec | None = None,
               error_data: Dataset | None = None, lowest_unit=None) -> ProfWeightResult:
    """Train the unweighted simple model, select probes, weight ``D_S`` and retrain.

    ``error_data`` switches the simple model's error ``e_S`` to another split
    (by default it is measured on ``D_S`` itself).  ``lowest_unit`` replaces the
    margin rule by "this probe and every later one".
    """
    if scheme not in ("auc", "nn"):
        raise InvalidArgumentError(f"unknown scheme {scheme!r}; expected 'auc' or 'nn'")
    standard = train_simple(D_S, np.ones(D_S.m), simple_spec)
    e_S = evaluate(standard, error_data if error_data is not None else D_S).error
    errors = probe_error_map(probes)
    if lowest_unit is not None:
        selection = lowest_unit_selection(errors, lowest_unit, e_S)
    else:
        selection = select_probes(errors, e_S, alpha)
    if not selection.selected:
        raise EmptyProbeSetError(
            f"no probe has error <= e_S - alpha = {e_S - alpha:.6f}; lower alpha (currently {alpha})")
    profile = build_profile(model, probes, selection.selected, D_S)
    learning = None
    if scheme == "auc":
        weights = auc_weights(profile)
    else:
        learning = learn_weights_nn(profile, D_S, simple_spec, nn_spec or WeightNetSpec())
        weights = learning.weights
    trained = train_simple(D_S, weights.weights, simple_spec)
    return ProfWeightResult(weights, trained, selection, standard, e_S, learning)
