"""The high-accuracy teacher network: an MLP whose hidden layers are named
units exposing their (flattened) outputs for probing."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from . import _mlp, jsonio
from .data import Dataset
from .errors import FrozenModelError, InvalidSpecError, UnknownUnitError
from .numerics import SgdConfig, sgd_train, softmax

FORMAT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    name: str
    width: int
    activation: str = "relu"

    def __post_init__(self):
        if self.width < 1:
            raise InvalidSpecError(f"unit {self.name!r}: width must be >= 1")
        if self.activation not in _mlp.ACTIVATIONS:
            raise InvalidSpecError(f"unit {self.name!r}: unknown activation {self.activation!r}")


@dataclass(frozen=True, eq=False)
class LayeredModel:
    input_dim: int
    layers: tuple
    num_classes: int
    params: tuple  # ((W, b), ...) one pair per hidden layer plus the output map
    frozen: bool = False
    seed: int = 0
    train_accuracy: float | None = None

    @property
    def unit_names(self) -> tuple:
        return tuple(spec.name for spec in self.layers)

    @property
    def activations(self) -> tuple:
        return tuple(spec.activation for spec in self.layers)

    def unit_index(self, unit_name: str) -> int:
        try:
            return self.unit_names.index(unit_name)
        except ValueError:
            raise UnknownUnitError(f"unknown unit {unit_name!r}; model has {list(self.unit_names)}") from None

    def predict_proba(self, X) -> np.ndarray:
        return predict_proba(self, X)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


def build_model(input_dim: int, layer_specs, num_classes: int, seed: int = 0) -> LayeredModel:
    specs = tuple(s if isinstance(s, LayerSpec) else LayerSpec(**s) for s in layer_specs)
    if not specs:
        raise InvalidSpecError("the model needs at least one hidden layer")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise InvalidSpecError(f"duplicate unit names in {names}")
    if "output" in names:
        raise InvalidSpecError("'output' is reserved for the final softmax layer")
    if input_dim < 1 or num_classes < 2:
        raise InvalidSpecError("need input_dim >= 1 and num_classes >= 2")
    sizes = [input_dim, *(s.width for s in specs), num_classes]
    params = tuple(_mlp.init_layers(sizes, np.random.default_rng(seed)))
    return LayeredModel(input_dim, specs, num_classes, params, frozen=False, seed=seed)


def parameter_hash(model: LayeredModel) -> str:
    h = hashlib.sha256()
    for W, b in model.params:
        h.update(np.ascontiguousarray(W, dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(b, dtype=np.float64).tobytes())
    return h.hexdigest()


def _freeze_arrays(params):
    out = []
    for W, b in params:
        W, b = np.array(W, dtype=np.float64), np.array(b, dtype=np.float64)
        W.setflags(write=False)
        b.setflags(write=False)
        out.append((W, b))
    return tuple(out)


def training_objective(model: LayeredModel, D_N: Dataset):
    """``objective(theta, batch) -> (mean cross-entropy, gradient)`` over the model's flat parameters."""
    shapes = _mlp.shapes_of(model.params)
    X, y = D_N.features, D_N.labels
    ones = np.ones(D_N.m)
    acts = model.activations

    def objective(theta, batch):
        layers = _mlp.unpack(theta, shapes)
        loss, grads = _mlp.loss_and_grad(layers, acts, X[batch], y[batch], ones[batch])
        return loss, _mlp.pack(grads)

    return objective


def train_complex(model: LayeredModel, D_N: Dataset, cfg: SgdConfig) -> LayeredModel:
    """Unweighted cross-entropy training; returns a new, frozen model."""
    if model.frozen:
        raise FrozenModelError("model is frozen; build a fresh one to train")
    if D_N.labels.max() >= model.num_classes:
        raise InvalidSpecError("labels exceed the model's class count")
    if D_N.d != model.input_dim:
        raise InvalidSpecError(f"model expects {model.input_dim} features, data has {D_N.d}")
    shapes = _mlp.shapes_of(model.params)
    objective = training_objective(model, D_N)
    theta = sgd_train(objective, _mlp.pack(model.params), cfg, np.arange(D_N.m))
    params = _freeze_arrays(_mlp.unpack(theta, shapes))
    trained = replace(model, params=params, frozen=True)
    acc = float(np.mean(predict(trained, D_N.features) == D_N.labels))
    return replace(trained, train_accuracy=acc)


def _require_frozen(model):
    if not model.frozen:
        raise FrozenModelError("model must be trained and frozen first")


def _hidden_outputs(model, X, upto: int):
    a = np.atleast_2d(np.asarray(X, dtype=np.float64))
    for (W, b), kind in zip(model.params[:upto + 1], model.activations):
        z = a @ W.T + b
        a = np.maximum(z, 0.0) if kind == "relu" else z
    return a


def representation(model: LayeredModel, unit_name: str, X) -> np.ndarray:
    """Output of ``unit_name`` for each row of ``X`` (a single vector gives a single row back)."""
    _require_frozen(model)
    k = model.unit_index(unit_name)
    single = np.ndim(X) == 1
    out = _hidden_outputs(model, X, k)
    return out[0] if single else out


def output_logits(model: LayeredModel, X) -> np.ndarray:
    _require_frozen(model)
    h = _hidden_outputs(model, X, len(model.layers) - 1)
    return apply_output_layer(model, h)


def apply_output_layer(model: LayeredModel, hidden) -> np.ndarray:
    W, b = model.params[-1]
    return np.atleast_2d(hidden) @ W.T + b


def predict_proba(model: LayeredModel, X) -> np.ndarray:
    single = np.ndim(X) == 1
    p = softmax(output_logits(model, X))
    return p[0] if single else p


def predict(model: LayeredModel, X) -> np.ndarray:
    return np.argmax(predict_proba(model, np.atleast_2d(X)), axis=1)


def to_dict(model: LayeredModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "layered_model",
        "input_dim": model.input_dim,
        "num_classes": model.num_classes,
        "layers": [{"name": s.name, "width": s.width, "activation": s.activation} for s in model.layers],
        "frozen": model.frozen,
        "seed": model.seed,
        "train_accuracy": model.train_accuracy,
        "params": [{"weights": W, "bias": b} for W, b in model.params],
    }


def from_dict(doc: dict) -> LayeredModel:
    if doc.get("kind") != "layered_model" or doc.get("format_version") != FORMAT_VERSION:
        raise InvalidSpecError("not a layered-model document of a supported version")
    layers = tuple(LayerSpec(**spec) for spec in doc["layers"])
    sizes = [doc["input_dim"], *(s.width for s in layers), doc["num_classes"]]
    params = []
    for (fan_in, fan_out), block in zip(zip(sizes[:-1], sizes[1:]), doc["params"]):
        W = np.array(block["weights"], dtype=np.float64).reshape(fan_out, fan_in)
        params.append((W, np.array(block["bias"], dtype=np.float64).reshape(fan_out)))
    acc = doc.get("train_accuracy")
    return LayeredModel(doc["input_dim"], layers, doc["num_classes"], _freeze_arrays(params),
                        frozen=bool(doc["frozen"]), seed=doc["seed"],
                        train_accuracy=None if acc is None else float(acc))


def save(model: LayeredModel, path) -> None:
    jsonio.write(path, to_dict(model))


def load(path) -> LayeredModel:
    return from_dict(jsonio.read(path))
