"""Low-capacity learners that accept per-sample weights: softmax regression,
a small MLP and a weighted-Gini CART tree, plus the distillation baseline."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _mlp, jsonio
from .data import Dataset
from .errors import DegenerateWeightsError, InvalidArgumentError, InvalidSpecError
from .numerics import SgdConfig, sgd_train, softmax

KINDS = ("logistic", "mlp", "tree")
GAIN_TIE_TOL = 1e-12


@dataclass(frozen=True)
class SimpleModelSpec:
    """What to train.

    ``min_leaf_weight`` is a fraction of the total sample weight (trees only);
    ``l2`` is the penalty used by the SGD learners.
    """

    kind: str = "logistic"
    max_depth: int = 2
    min_leaf_weight: float = 0.01
    hidden_widths: tuple = ()
    l2: float = 1e-4
    sgd: SgdConfig = field(default_factory=lambda: SgdConfig(learning_rate=0.1, batch_size=32,
                                                             epochs=30, momentum=0.9))
    name: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpecError(f"unknown simple-model kind {self.kind!r}")
        if self.max_depth < 1:
            raise InvalidSpecError("max_depth must be >= 1")
        if not self.min_leaf_weight > 0:
            raise InvalidSpecError("min_leaf_weight must be positive")
        object.__setattr__(self, "hidden_widths", tuple(int(h) for h in self.hidden_widths))
        if self.kind == "logistic" and self.hidden_widths:
            raise InvalidSpecError("logistic regression has no hidden layers")

    @property
    def label(self) -> str:
        return self.name or (f"tree{self.max_depth}" if self.kind == "tree" else self.kind)

    @property
    def differentiable(self) -> bool:
        return self.kind != "tree"

    def to_dict(self) -> dict:
        return {"name": self.label, "kind": self.kind, "max_depth": self.max_depth,
                "min_leaf_weight": self.min_leaf_weight, "hidden_widths": list(self.hidden_widths),
                "l2": self.l2, "sgd": self.sgd.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "SimpleModelSpec":
        d = dict(d)
        sgd = d.pop("sgd", None)
        spec = cls(**d)
        if sgd is not None:
            spec = replace(spec, sgd=SgdConfig(**sgd))
        return spec


def _validate_weights(D: Dataset, w):
    w = np.ones(D.m) if w is None else np.asarray(w, dtype=np.float64)
    if w.shape != (D.m,):
        raise InvalidArgumentError(f"{w.shape[0]} weights for {D.m} samples")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidArgumentError("weights must be finite and non-negative")
    if not w.sum() > 0:
        raise DegenerateWeightsError("all sample weights are zero")
    return w


# --------------------------------------------------------------------------
# softmax regression / MLP


@dataclass(frozen=True, eq=False)
class NetworkModel:
    kind: str
    activations: tuple
    params: tuple
    num_classes: int

    def logits(self, X) -> np.ndarray:
        return _mlp.forward(self.params, self.activations, np.atleast_2d(X))[2]

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.logits(X))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def to_dict(self) -> dict:
        return {"format_version": 1, "kind": self.kind, "num_classes": self.num_classes,
                "activations": list(self.activations),
                "params": [{"weights": W, "bias": b} for W, b in self.params]}


def network_objective(D: Dataset, targets, weights, hidden_widths, activations=None):
    """Return ``(objective, init_shapes)`` for a network over ``D``.

    ``objective(theta, batch)`` gives the weight-normalized cross-entropy of
    the batch and its gradient.  Exposed for gradient checking.
    """
    sizes = [D.d, *hidden_widths, D.num_classes]
    shapes = [(o, i) for i, o in zip(sizes[:-1], sizes[1:])]
    acts = tuple(activations or ("relu",) * len(hidden_widths))
    X = D.features

    def objective(theta, batch):
        layers = _mlp.unpack(theta, shapes)
        loss, grads = _mlp.loss_and_grad(layers, acts, X[batch], targets[batch], weights[batch])
        return loss, _mlp.pack(grads)

    return objective, shapes, acts


def _train_network(D: Dataset, targets, w, spec: SimpleModelSpec) -> NetworkModel:
    objective, shapes, acts = network_objective(D, targets, w, spec.hidden_widths)
    sizes = [D.d, *spec.hidden_widths, D.num_classes]
    init = _mlp.init_layers(sizes, np.random.default_rng(spec.sgd.seed))
    cfg = spec.sgd.replace(l2_penalty=spec.l2)
    # zero-weight rows never enter a batch, so they cannot perturb the shuffle
    active = np.flatnonzero(w > 0)
    theta = sgd_train(objective, _mlp.pack(init), cfg, active)
    params = tuple((W.copy(), b.copy()) for W, b in _mlp.unpack(theta, shapes))
    return NetworkModel(spec.kind, acts, params, D.num_classes)


def train_weighted_logistic(D_S: Dataset, w, spec: SimpleModelSpec) -> NetworkModel:
    spec = replace(spec, kind="logistic", hidden_widths=())
    return _train_network(D_S, D_S.labels, _validate_weights(D_S, w), spec)


def train_weighted_mlp(D_S: Dataset, w, spec: SimpleModelSpec) -> NetworkModel:
    if spec.kind != "mlp":
        spec = replace(spec, kind="mlp")
    return _train_network(D_S, D_S.labels, _validate_weights(D_S, w), spec)


# --------------------------------------------------------------------------
# weighted CART


@dataclass(frozen=True, eq=False)
class TreeNode:
    """Internal node when ``feature`` is not None, else a leaf.

    Rows with ``x[feature] <= threshold`` go left.
    """

    distribution: np.ndarray
    weight: float
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    gain: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @property
    def depth(self) -> int:
        return 0 if self.is_leaf else 1 + max(self.left.depth, self.right.depth)


def gini(class_weights) -> float:
    total = class_weights.sum()
    if total <= 0:
        return 0.0
    p = class_weights / total
    return float(1.0 - np.dot(p, p))


def candidate_splits(X, feature):
    vals = np.unique(X[:, feature])
    return (vals[:-1] + vals[1:]) / 2.0


def best_split(X, y, w, num_classes, min_leaf):
    """Greedy weighted-Gini split search over features in index order.

    Gain is the weighted impurity decrease
    ``W*G(parent) - W_L*G(left) - W_R*G(right)``.  A split is accepted only if
    it beats the incumbent by more than ``GAIN_TIE_TOL`` times the node weight,
    so near-ties resolve to the lower feature index, then the lower threshold.  Returns
    ``(gain, feature, threshold)`` or ``None``.
    """
    onehot = np.zeros((len(y), num_classes))
    onehot[np.arange(len(y)), y] = w
    total = onehot.sum(axis=0)
    W = total.sum()
    parent = W * gini(total)
    tol = GAIN_TIE_TOL * W
    best = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        cum = np.cumsum(onehot[order], axis=0)
        # positions where the next value differs: split between i and i+1
        cut = np.flatnonzero(xs[:-1] < xs[1:])
        if cut.size == 0:
            continue
        left = cum[cut]
        right = total - left
        wl, wr = left.sum(axis=1), right.sum(axis=1)
        gl = wl - (left ** 2).sum(axis=1) / np.where(wl > 0, wl, 1.0)
        gr = wr - (right ** 2).sum(axis=1) / np.where(wr > 0, wr, 1.0)
        gains = parent - gl - gr
        ok = (wl >= min_leaf) & (wr >= min_leaf)
        for j in np.flatnonzero(ok):
            g = gains[j]
            if best is None or g > best[0] + tol:
                best = (float(g), f, float((xs[cut[j]] + xs[cut[j] + 1]) / 2.0))
    return best


def _grow(X, y, w, num_classes, depth, max_depth, min_leaf):
    counts = np.bincount(y, weights=w, minlength=num_classes).astype(np.float64)
    W = counts.sum()
    leaf = TreeNode(counts / W, float(W))
    if depth >= max_depth or np.count_nonzero(counts) <= 1 or W < 2 * min_leaf:
        return leaf
    found = best_split(X, y, w, num_classes, min_leaf)
    if found is None or found[0] <= GAIN_TIE_TOL * W:
        return leaf
    gain, f, t = found
    mask = X[:, f] <= t
    left = _grow(X[mask], y[mask], w[mask], num_classes, depth + 1, max_depth, min_leaf)
    right = _grow(X[~mask], y[~mask], w[~mask], num_classes, depth + 1, max_depth, min_leaf)
    return TreeNode(counts / W, float(W), f, t, left, right, gain)


@dataclass(frozen=True, eq=False)
class TreeModel:
    root: TreeNode
    num_classes: int
    num_features: int

    kind = "tree"

    def _leaf_distributions(self, X):
        X = np.atleast_2d(X)
        out = np.empty((X.shape[0], self.num_classes))
        for i, x in enumerate(X):
            node = self.root
            while not node.is_leaf:
                node = node.left if x[node.feature] <= node.threshold else node.right
            out[i] = node.distribution
        return out

    def predict_proba(self, X) -> np.ndarray:
        return self._leaf_distributions(X)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def feature_importances(self) -> np.ndarray:
        """Total weighted impurity decrease per feature, normalized to sum 1 (zeros if no split)."""
        imp = np.zeros(self.num_features)
        stack = [self.root]
        while stack:
            node = stack.pop()
            if not node.is_leaf:
                imp[node.feature] += node.gain
                stack += [node.left, node.right]
        s = imp.sum()
        return imp / s if s > 0 else imp

    def to_dict(self) -> dict:
        return {"format_version": 1, "kind": "tree", "num_classes": self.num_classes,
                "num_features": self.num_features, "root": _node_to_dict(self.root)}

    def render(self, feature_names=None) -> str:
        names = feature_names or [f"x{j}" for j in range(self.num_features)]
        lines = []

        def walk(node, indent):
            pad = "    " * indent
            if node.is_leaf:
                dist = ", ".join(f"{p:.3f}" for p in node.distribution)
                lines.append(f"{pad}predict {int(np.argmax(node.distribution))}  [{dist}]  weight={node.weight:.4g}")
                return
            lines.append(f"{pad}if {names[node.feature]} <= {node.threshold:.6g}:")
            walk(node.left, indent + 1)
            lines.append(f"{pad}else:  # {names[node.feature]} > {node.threshold:.6g}")
            walk(node.right, indent + 1)

        walk(self.root, 0)
        return "\n".join(lines) + "\n"


def _node_to_dict(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"leaf": True, "distribution": node.distribution, "weight": node.weight}
    return {"leaf": False, "feature": node.feature, "threshold": node.threshold, "gain": node.gain,
            "weight": node.weight, "distribution": node.distribution,
            "left": _node_to_dict(node.left), "right": _node_to_dict(node.right)}


def _node_from_dict(d: dict) -> TreeNode:
    dist = np.array(d["distribution"], dtype=np.float64)
    if d["leaf"]:
        return TreeNode(dist, float(d["weight"]))
    return TreeNode(dist, float(d["weight"]), int(d["feature"]), float(d["threshold"]),
                    _node_from_dict(d["left"]), _node_from_dict(d["right"]), float(d["gain"]))


def train_weighted_tree(D_S: Dataset, w, spec: SimpleModelSpec) -> TreeModel:
    """Greedy CART on weighted Gini; zero-weight rows are dropped up front."""
    w = _validate_weights(D_S, w)
    keep = w > 0
    X, y, w = D_S.features[keep], D_S.labels[keep], w[keep]
    min_leaf = spec.min_leaf_weight * w.sum()
    root = _grow(X, y, w, D_S.num_classes, 0, spec.max_depth, min_leaf)
    return TreeModel(root, D_S.num_classes, D_S.d)


# --------------------------------------------------------------------------
# dispatch, distillation, evaluation


def train_simple(D_S: Dataset, w, spec: SimpleModelSpec):
    if spec.kind == "tree":
        return train_weighted_tree(D_S, w, spec)
    if spec.kind == "logistic":
        return train_weighted_logistic(D_S, w, spec)
    return train_weighted_mlp(D_S, w, spec)


def soft_targets(teacher_logits, temperature: float) -> np.ndarray:
    if not temperature > 0:
        raise InvalidArgumentError("temperature must be positive")
    return softmax(np.asarray(teacher_logits, dtype=np.float64) / temperature)


@dataclass(frozen=True, eq=False)
class DistillConfig:
    temperature: float
    teacher_logits: np.ndarray

    def __post_init__(self):
        if not self.temperature > 0:
            raise InvalidArgumentError("temperature must be positive")


def distill(D_S: Dataset, cfg: DistillConfig, spec: SimpleModelSpec):
    """Fit the student to ``softmax(teacher_logits / t)``.

    Trees cannot consume distributions, so for them the soft targets are
    hardened to their argmax and an ordinary unweighted tree is grown.
    """
    logits = np.asarray(cfg.teacher_logits, dtype=np.float64)
    if logits.shape != (D_S.m, D_S.num_classes):
        raise InvalidArgumentError(f"teacher logits shape {logits.shape} does not match the data")
    targets = soft_targets(logits, cfg.temperature)
    if spec.kind == "tree":
        hard = Dataset(D_S.features, np.argmax(targets, axis=1), D_S.num_classes,
                       D_S.feature_names, D_S.provenance)
        return train_weighted_tree(hard, None, spec)
    return _train_network(D_S, targets, np.ones(D_S.m), spec)


@dataclass(frozen=True, eq=False)
class Evaluation:
    accuracy: float
    error: float
    confusion: np.ndarray  # rows: true class, columns: predicted class

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "error": self.error, "confusion": self.confusion.tolist()}


def evaluate(model, D: Dataset) -> Evaluation:
    """Accuracy and confusion matrix; argmax ties go to the lowest class index."""
    if D.m == 0:
        raise InvalidArgumentError("cannot evaluate on an empty dataset")
    pred = np.argmax(model.predict_proba(D.features), axis=1)
    conf = np.zeros((D.num_classes, max(D.num_classes, pred.max() + 1)), dtype=np.int64)
    np.add.at(conf, (D.labels, pred), 1)
    conf = conf[:, :D.num_classes]
    acc = int(np.trace(conf)) / D.m
    return Evaluation(acc, 1.0 - acc, conf)


def per_sample_loss(model, D: Dataset) -> np.ndarray:
    """Cross-entropy of each sample's true label under ``model`` (probability floor applied)."""
    from .numerics import log_loss_terms
    return log_loss_terms(model.predict_proba(D.features), D.labels)


def model_to_dict(model) -> dict:
    return model.to_dict()


def model_from_dict(doc: dict):
    if doc.get("kind") == "tree":
        return TreeModel(_node_from_dict(doc["root"]), int(doc["num_classes"]), int(doc["num_features"]))
    if doc.get("kind") in ("logistic", "mlp"):
        params = tuple((np.array(p["weights"], dtype=np.float64).reshape(len(p["bias"]), -1),
                        np.array(p["bias"], dtype=np.float64)) for p in doc["params"])
        return NetworkModel(doc["kind"], tuple(doc["activations"]), params, int(doc["num_classes"]))
    raise InvalidSpecError(f"unknown simple-model document kind {doc.get('kind')!r}")


def save_model(model, path) -> None:
    jsonio.write(path, model.to_dict())


def load_model(path):
    return model_from_dict(jsonio.read(path))
