"""Linear probes on frozen intermediate representations and the confidence
profiles they produce."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _mlp, jsonio
from .complex_model import LayeredModel, apply_output_layer, parameter_hash, representation
from .data import Dataset
from .errors import InvalidArgumentError, InvalidSpecError, ProfWeightError, UnknownUnitError
from .numerics import SgdConfig, sgd_train, softmax

OUTPUT_UNIT = "output"


@dataclass(frozen=True, eq=False)
class Probe:
    """Softmax classifier ``softmax(W r + b)`` reading the representation of ``source_unit``.

    For an ordinary probe ``unit_name == source_unit``.  The model's own output
    layer is exposed as the probe named ``"output"`` reading the last hidden unit.
    """

    unit_name: str
    source_unit: str
    weights: np.ndarray
    bias: np.ndarray
    error: float | None = None

    def predict_proba(self, model: LayeredModel, X) -> np.ndarray:
        R = representation(model, self.source_unit, np.atleast_2d(X))
        return softmax(R @ self.weights.T + self.bias)


def output_probe(model: LayeredModel) -> Probe:
    """The final softmax layer viewed as the last probe."""
    W, b = model.params[-1]
    return Probe(OUTPUT_UNIT, model.unit_names[-1], W, b)


def probe_objective(R, y, num_classes: int):
    """Mean cross-entropy of ``softmax(W r + b)`` on representations ``R``; flat ``theta = [W, b]``."""
    R = np.asarray(R, dtype=np.float64)
    y = np.asarray(y)
    ones = np.ones(R.shape[0])
    shapes = [(num_classes, R.shape[1])]

    def objective(theta, batch):
        layers = _mlp.unpack(theta, shapes)
        loss, grads = _mlp.loss_and_grad(layers, (), R[batch], y[batch], ones[batch])
        return loss, _mlp.pack(grads)

    return objective


def train_probes(model: LayeredModel, unit_names, D_N: Dataset, cfg: SgdConfig,
                 include_output: bool = True) -> list[Probe]:
    """Fit one probe per unit on ``D_N``; the complex model is never updated.

    With ``include_output`` the model's output layer is appended as the last
    probe (it needs no training).
    """
    before = parameter_hash(model)
    y = D_N.labels
    probes = []
    for u in unit_names:
        if u == OUTPUT_UNIT:
            continue
        R = representation(model, u, D_N.features)
        rng = np.random.default_rng(cfg.seed)
        init = _mlp.init_layers([R.shape[1], model.num_classes], rng)
        shapes = _mlp.shapes_of(init)
        objective = probe_objective(R, y, model.num_classes)
        theta = sgd_train(objective, _mlp.pack(init), cfg, np.arange(D_N.m))
        (W, b), = _mlp.unpack(theta, shapes)
        probes.append(Probe(u, u, W.copy(), b.copy()))
    if include_output:
        probes.append(output_probe(model))
    if parameter_hash(model) != before:
        raise ProfWeightError("internal invariant violated: probe training changed the complex model")
    return probes


def probe_error(probe: Probe, model: LayeredModel, D: Dataset) -> float:
    """Misclassification rate, argmax ties to the lowest class index."""
    if D.m == 0:
        raise InvalidArgumentError("cannot score a probe on an empty dataset")
    pred = np.argmax(probe.predict_proba(model, D.features), axis=1)
    accuracy = np.count_nonzero(pred == D.labels) / D.m
    return 1.0 - accuracy


def score_probes(probes, model: LayeredModel, D_S: Dataset) -> list[Probe]:
    return [replace(p, error=probe_error(p, model, D_S)) for p in probes]


@dataclass(frozen=True, eq=False)
class ConfidenceProfile:
    """``scores[i, j]`` is probe ``unit_names[j]``'s probability for sample i's true label."""

    unit_names: tuple
    scores: np.ndarray

    @property
    def m(self) -> int:
        return int(self.scores.shape[0])


def build_profile(model: LayeredModel, probes, selected, D_S: Dataset) -> ConfidenceProfile:
    by_name = {p.unit_name: p for p in probes}
    if D_S.m == 0:
        raise InvalidArgumentError("empty dataset")
    cols = []
    rows = np.arange(D_S.m)
    cache = {}
    for u in selected:
        if u not in by_name:
            raise UnknownUnitError(f"unit {u!r} has no trained probe")
        p = by_name[u]
        if p.source_unit not in cache:
            cache[p.source_unit] = representation(model, p.source_unit, D_S.features)
        R = cache[p.source_unit]
        if u == OUTPUT_UNIT:
            probs = softmax(apply_output_layer(model, R))
        else:
            probs = softmax(R @ p.weights.T + p.bias)
        cols.append(probs[rows, D_S.labels])
    scores = np.column_stack(cols) if cols else np.empty((D_S.m, 0))
    scores.setflags(write=False)
    return ConfidenceProfile(tuple(selected), scores)


def to_dict(probes) -> dict:
    return {
        "format_version": 1,
        "kind": "probe_set",
        "probes": [
            {"unit_name": p.unit_name, "source_unit": p.source_unit, "error": p.error,
             "weights": p.weights, "bias": p.bias}
            for p in probes
        ],
    }


def from_dict(doc: dict) -> list[Probe]:
    if doc.get("kind") != "probe_set":
        raise InvalidSpecError("not a probe-set document")
    out = []
    for e in doc["probes"]:
        W = np.array(e["weights"], dtype=np.float64)
        out.append(Probe(e["unit_name"], e["source_unit"], W,
                         np.array(e["bias"], dtype=np.float64).reshape(W.shape[0]),
                         None if e["error"] is None else float(e["error"])))
    return out


def save(probes, path) -> None:
    jsonio.write(path, to_dict(probes))


def load(path) -> list[Probe]:
    return from_dict(jsonio.read(path))
