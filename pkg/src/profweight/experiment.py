"""Config-driven experiment pipeline.

A run is a sequence of stages writing into ``<out>/seed_<k>/``:

``train-complex`` -> ``complex_model.json``
``train-probes``  -> ``probes.json`` (probe errors measured on D_S)
``compute-weights`` -> ``weights_<scheme>_<model>.csv`` and ``selection_<model>.json``
``train-simple``  -> ``simple_<scheme>_<model>.json``
``evaluate``      -> ``evaluation.json``

and :func:`write_report` aggregates every ``seed_*/evaluation.json`` under
``<out>`` into ``report.json`` / ``report.txt``.  Every stage re-derives the
dataset split from the config and seed, so stages can be run one at a time
or through :func:`run_experiment` with identical results.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import complex_model as cm
from . import jsonio
from . import probes as pr
from .data import Dataset, HardRegionGenerator, SplitPlan, load_csv, split, synth_hard_regions
from .errors import ConfigError, InvalidArgumentError, MissingArtifactError, ProfWeightError
from .numerics import SgdConfig
from .simple_models import (DistillConfig, SimpleModelSpec, distill, evaluate, load_model,
                            save_model, train_simple)
from .weighting import (WeightNetSpec, WeightVector, auc_weights, conf_weights, learn_weights_nn,
                        load_weights_csv, lowest_unit_selection, probe_error_map,
                        save_weights_csv, select_probes)

log = logging.getLogger(__name__)

ALL_SCHEMES = ("standard", "confweight", "distillation", "profweight-auc", "profweight-nn")
WEIGHTED_SCHEMES = ("standard", "confweight", "profweight-auc", "profweight-nn")

DEFAULT_CONFIG = {
    "dataset": {"source": "synthetic", "m": 4000, "noise_rate": 0.35,
                "path": None, "label_column": -1, "header": True, "generator": {}},
    "split": {"mode": "random", "fractions": [0.45, 0.30, 0.05, 0.20]},
    "complex": {
        "layers": [{"name": "h1", "width": 32, "activation": "relu"},
                   {"name": "h2", "width": 32, "activation": "relu"},
                   {"name": "h3", "width": 32, "activation": "relu"}],
        "sgd": {"learning_rate": 0.05, "batch_size": 32, "epochs": 60, "l2_penalty": 0.0,
                "momentum": 0.9},
    },
    "probes": {"units": None,
               "sgd": {"learning_rate": 0.1, "batch_size": 32, "epochs": 40, "l2_penalty": 0.0,
                       "momentum": 0.9}},
    "alpha": 0.0,
    "lowest_unit": None,
    "error_split": "D_S",
    "schemes": list(ALL_SCHEMES),
    "simple_models": [
        {"name": "tree2", "kind": "tree", "max_depth": 2, "min_leaf_weight": 0.01},
        {"name": "logistic", "kind": "logistic", "l2": 1e-4,
         "sgd": {"learning_rate": 0.1, "batch_size": 32, "epochs": 30, "l2_penalty": 0.0,
                 "momentum": 0.9}},
    ],
    "distillation": {"temperatures": [0.5 * 2 ** k for k in range(10)]},
    "weight_net": {"hidden_widths": [8], "gamma": 1.0, "l2": 1e-4, "outer_iterations": 5,
                   "inner_steps": 50, "learning_rate": 1.0},
    "seeds": list(range(10)),
    "output_dir": "runs",
}

_STAGE_IDS = {"data": 0, "split": 1, "complex": 2, "probes": 3, "simple": 4, "weight_net": 5}


def stage_seed(seed: int, stage: str) -> int:
    """Independent 32-bit seed for one stage of one run."""
    return int(np.random.SeedSequence([int(seed), _STAGE_IDS[stage]]).generate_state(1)[0])


# --------------------------------------------------------------------------
# configuration


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if k not in out:
            raise ConfigError(f"unknown config key {k!r}")
        if isinstance(out[k], dict) and isinstance(v, dict):
            out[k] = _merge(out[k], v) if k not in ("sgd", "generator") else {**out[k], **v}
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    raw: dict

    @classmethod
    def from_dict(cls, d: dict | None) -> "ExperimentConfig":
        cfg = cls(_merge(DEFAULT_CONFIG, d or {}))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
        if doc is not None and not isinstance(doc, dict):
            raise ConfigError("config must be a mapping")
        return cls.from_dict(doc)

    def dump(self) -> str:
        return yaml.safe_dump(self.raw, sort_keys=False, default_flow_style=None)

    def validate(self):
        r = self.raw
        try:
            if not r["schemes"]:
                raise ConfigError("at least one scheme is required")
            for s in r["schemes"]:
                if s not in ALL_SCHEMES:
                    raise ConfigError(f"unknown scheme {s!r}; choose from {ALL_SCHEMES}")
            if not r["seeds"]:
                raise ConfigError("at least one seed is required")
            if not math.isfinite(float(r["alpha"])):
                raise ConfigError("alpha must be finite")
            if r["error_split"] not in ("D_S", "validation"):
                raise ConfigError("error_split must be 'D_S' or 'validation'")
            if r["dataset"]["source"] not in ("synthetic", "csv"):
                raise ConfigError("dataset.source must be 'synthetic' or 'csv'")
            if r["dataset"]["source"] == "csv" and not r["dataset"]["path"]:
                raise ConfigError("dataset.path is required for csv sources")
            if not r["simple_models"]:
                raise ConfigError("at least one simple model is required")
            specs = self.simple_specs(0)
            if len({s.label for s in specs}) != len(specs):
                raise ConfigError("simple model names must be unique")
            SplitPlan(tuple(r["split"]["fractions"]), r["split"]["mode"], 0)
            self.complex_sgd(0)
            self.probe_sgd(0)
            self.weight_net_spec(0)
            for t in r["distillation"]["temperatures"]:
                if not float(t) > 0:
                    raise ConfigError("distillation temperatures must be positive")
            [cm.LayerSpec(**l) for l in r["complex"]["layers"]]
        except ConfigError:
            raise
        except (ProfWeightError, TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    # typed views --------------------------------------------------------

    @property
    def schemes(self):
        return list(self.raw["schemes"])

    @property
    def seeds(self):
        return [int(s) for s in self.raw["seeds"]]

    def complex_sgd(self, seed) -> SgdConfig:
        return SgdConfig(**{**self.raw["complex"]["sgd"], "seed": stage_seed(seed, "complex")})

    def probe_sgd(self, seed) -> SgdConfig:
        return SgdConfig(**{**self.raw["probes"]["sgd"], "seed": stage_seed(seed, "probes")})

    def simple_specs(self, seed) -> list[SimpleModelSpec]:
        out = []
        for d in self.raw["simple_models"]:
            d = dict(d)
            sgd = d.pop("sgd", None) or {}
            spec = SimpleModelSpec(**d)
            base = spec.sgd.to_dict()
            base.update(sgd)
            base["seed"] = stage_seed(seed, "simple")
            out.append(SimpleModelSpec(**{**d, "sgd": SgdConfig(**base)}))
        return out

    def weight_net_spec(self, seed) -> WeightNetSpec:
        return WeightNetSpec(**{**self.raw["weight_net"], "seed": stage_seed(seed, "weight_net")})


# --------------------------------------------------------------------------
# stages


def seed_dir(out, seed) -> Path:
    return Path(out) / f"seed_{int(seed)}"


def load_splits(cfg: ExperimentConfig, seed: int):
    ds = cfg.raw["dataset"]
    if ds["source"] == "synthetic":
        gen = HardRegionGenerator(**(ds.get("generator") or {}))
        data = synth_hard_regions(int(ds["m"]), float(ds["noise_rate"]), stage_seed(seed, "data"), gen)
    else:
        data, report = load_csv(ds["path"], ds["label_column"], bool(ds["header"]))
        if report.rejected_rows:
            log.warning("rejected %d rows with missing values: %s", len(report.rejected_rows),
                        list(report.rejected_rows)[:20])
    plan = SplitPlan(tuple(cfg.raw["split"]["fractions"]), cfg.raw["split"]["mode"],
                     stage_seed(seed, "split"))
    return split(data, plan)


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"missing {path}; run the '{producer}' subcommand first")
    return path


def stage_train_complex(cfg: ExperimentConfig, seed: int, out) -> Path:
    D_N, _, _, _ = load_splits(cfg, seed)
    model = cm.build_model(D_N.d, [cm.LayerSpec(**l) for l in cfg.raw["complex"]["layers"]],
                           max(D_N.num_classes, 2), stage_seed(seed, "complex"))
    model = cm.train_complex(model, D_N, cfg.complex_sgd(seed))
    d = seed_dir(out, seed)
    d.mkdir(parents=True, exist_ok=True)
    path = d / "complex_model.json"
    cm.save(model, path)
    return path


def _load_complex(out, seed):
    return cm.load(_require(seed_dir(out, seed) / "complex_model.json", "train-complex"))


def _load_probes(out, seed):
    return pr.load(_require(seed_dir(out, seed) / "probes.json", "train-probes"))


def stage_train_probes(cfg: ExperimentConfig, seed: int, out) -> Path:
    D_N, D_S, _, _ = load_splits(cfg, seed)
    model = _load_complex(out, seed)
    units = cfg.raw["probes"]["units"] or list(model.unit_names)
    probes = pr.train_probes(model, units, D_N, cfg.probe_sgd(seed))
    probes = pr.score_probes(probes, model, D_S)
    path = seed_dir(out, seed) / "probes.json"
    pr.save(probes, path)
    return path


def _selection(cfg, probes, e_S):
    errors = probe_error_map(probes)
    if cfg.raw["lowest_unit"] is not None:
        return lowest_unit_selection(errors, cfg.raw["lowest_unit"], e_S)
    return select_probes(errors, e_S, float(cfg.raw["alpha"]))


def compute_weights(cfg: ExperimentConfig, seed: int, scheme: str, spec: SimpleModelSpec,
                    model, probes, D_S: Dataset, D_val: Dataset):
    """Weights for one (scheme, simple model) pair plus the probe selection used (or None)."""
    if scheme == "standard":
        return WeightVector(np.ones(D_S.m), "standard"), None
    if scheme == "confweight":
        return conf_weights(model, D_S), None
    standard = train_simple(D_S, np.ones(D_S.m), spec)
    e_S = evaluate(standard, D_val if cfg.raw["error_split"] == "validation" else D_S).error
    selection = _selection(cfg, probes, e_S)
    profile = pr.build_profile(model, probes, selection.selected, D_S)
    if scheme == "profweight-auc":
        return auc_weights(profile), selection
    result = learn_weights_nn(profile, D_S, spec, cfg.weight_net_spec(seed))
    return result.weights, selection


def stage_compute_weights(cfg: ExperimentConfig, seed: int, out, schemes=None, echo=None) -> list[Path]:
    _, D_S, D_val, _ = load_splits(cfg, seed)
    model = _load_complex(out, seed)
    probes = _load_probes(out, seed)
    d = seed_dir(out, seed)
    written = []
    schemes = [s for s in (schemes or cfg.schemes) if s in WEIGHTED_SCHEMES]
    for spec in cfg.simple_specs(seed):
        selection_written = False
        for scheme in schemes:
            w, selection = compute_weights(cfg, seed, scheme, spec, model, probes, D_S, D_val)
            path = d / f"weights_{scheme}_{spec.label}.csv"
            save_weights_csv(w, path)
            written.append(path)
            if selection is not None and not selection_written:
                jsonio.write(d / f"selection_{spec.label}.json", {
                    "simple_model": spec.label, "alpha": selection.alpha,
                    "simple_error": selection.simple_error,
                    "probe_errors": [[k, e] for k, e in selection.probe_errors],
                    "selected": list(selection.selected)})
                selection_written = True
                if echo:
                    echo(f"[seed {seed}] simple model {spec.label}\n{selection.table()}")
    return written


def _distill_best(cfg, spec, model, D_S, D_val):
    logits = cm.output_logits(model, D_S.features)
    best = None
    for t in cfg.raw["distillation"]["temperatures"]:
        student = distill(D_S, DistillConfig(float(t), logits), spec)
        acc = evaluate(student, D_val).accuracy
        if best is None or acc > best[0]:
            best = (acc, float(t), student)
    return best[2], best[1]


def stage_train_simple(cfg: ExperimentConfig, seed: int, out) -> list[Path]:
    _, D_S, D_val, _ = load_splits(cfg, seed)
    d = seed_dir(out, seed)
    written = []
    temps = {}
    for spec in cfg.simple_specs(seed):
        for scheme in cfg.schemes:
            if scheme == "distillation":
                model = _load_complex(out, seed)
                student, t = _distill_best(cfg, spec, model, D_S, D_val)
                temps[spec.label] = t
            else:
                wpath = _require(d / f"weights_{scheme}_{spec.label}.csv", "compute-weights")
                w = load_weights_csv(wpath, scheme)
                if len(w) != D_S.m:
                    raise InvalidArgumentError(f"{wpath} has {len(w)} weights for {D_S.m} samples")
                student = train_simple(D_S, w.weights, spec)
            path = d / f"simple_{scheme}_{spec.label}.json"
            save_model(student, path)
            written.append(path)
    if temps:
        jsonio.write(d / "distillation.json", {"selected_temperature": temps})
    return written


def stage_evaluate(cfg: ExperimentConfig, seed: int, out) -> Path:
    D_N, D_S, _, D_hold = load_splits(cfg, seed)
    d = seed_dir(out, seed)
    model = _load_complex(out, seed)
    probes = _load_probes(out, seed)
    rows, weights, selections = [], {}, {}
    for spec in cfg.simple_specs(seed):
        sel_path = d / f"selection_{spec.label}.json"
        if sel_path.exists():
            selections[spec.label] = jsonio.read(sel_path)
        for scheme in cfg.schemes:
            student = load_model(_require(d / f"simple_{scheme}_{spec.label}.json", "train-simple"))
            rows.append({"scheme": scheme, "simple_model": spec.label, "seed": seed,
                         "holdout_accuracy": evaluate(student, D_hold).accuracy})
            if scheme in WEIGHTED_SCHEMES:
                w = load_weights_csv(d / f"weights_{scheme}_{spec.label}.csv", scheme)
                weights[f"{scheme}/{spec.label}"] = w.summary(D_S.hard)
    doc = {
        "seed": seed,
        "complex": {"train_accuracy": model.train_accuracy,
                    "holdout_accuracy": evaluate(model, D_hold).accuracy},
        "split_sizes": [D_N.m, D_S.m, len(load_splits(cfg, seed)[2]), D_hold.m],
        "probe_errors": {p.unit_name: p.error for p in probes},
        "selections": selections,
        "rows": rows,
        "weights": weights,
    }
    if (d / "distillation.json").exists():
        doc["distillation"] = jsonio.read(d / "distillation.json")
    path = d / "evaluation.json"
    jsonio.write(path, doc)
    return path


def run_seed(cfg: ExperimentConfig, seed: int, out, echo=None) -> Path:
    stages = [("train-complex", lambda: stage_train_complex(cfg, seed, out)),
              ("train-probes", lambda: stage_train_probes(cfg, seed, out)),
              ("compute-weights", lambda: stage_compute_weights(cfg, seed, out, echo=echo)),
              ("train-simple", lambda: stage_train_simple(cfg, seed, out)),
              ("evaluate", lambda: stage_evaluate(cfg, seed, out))]
    result = None
    for name, fn in stages:
        try:
            result = fn()
        except ProfWeightError as exc:
            exc.stage = name
            exc.args = (f"[stage {name}, seed {seed}] {exc}",)
            raise
    return result


def run_experiment(cfg: ExperimentConfig, out=None, echo=None) -> dict:
    """Every stage for every seed, then the aggregate report."""
    out = Path(out or cfg.raw["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(cfg.dump(), encoding="utf-8")
    for seed in cfg.seeds:
        run_seed(cfg, seed, out, echo=echo)
    return write_report(out, cfg)


# --------------------------------------------------------------------------
# report


def aggregate(rows) -> list[dict]:
    """Mean and sample standard deviation of holdout accuracy per (scheme, simple model)."""
    groups = {}
    for r in rows:
        groups.setdefault((r["scheme"], r["simple_model"]), []).append(float(r["holdout_accuracy"]))
    out = []
    for (scheme, name), vals in groups.items():
        a = np.array(vals)
        out.append({"scheme": scheme, "simple_model": name, "n": len(vals),
                    "mean": float(a.mean()),
                    "std": float(a.std(ddof=1)) if len(vals) > 1 else None})
    return out


def build_report(evaluations: list[dict], config: dict | None = None) -> dict:
    evaluations = sorted(evaluations, key=lambda e: e["seed"])
    rows = [r for e in evaluations for r in e["rows"]]
    return {
        "config": config,
        "seeds": [e["seed"] for e in evaluations],
        "aggregates": aggregate(rows),
        "rows": rows,
        "complex": [{"seed": e["seed"], **e["complex"]} for e in evaluations],
        "probe_errors": [{"seed": e["seed"], **e["probe_errors"]} for e in evaluations],
        "selections": [{"seed": e["seed"], "by_model": e["selections"]} for e in evaluations],
        "weights": [{"seed": e["seed"], "by_scheme": e["weights"]} for e in evaluations],
    }


def render_report(report: dict) -> str:
    aggs = report["aggregates"]
    models = list(dict.fromkeys(a["simple_model"] for a in aggs))
    schemes = list(dict.fromkeys(a["scheme"] for a in aggs))
    cell = {(a["scheme"], a["simple_model"]): a for a in aggs}
    width = max(16, *(len(m) + 4 for m in models))
    lines = [f"holdout accuracy (%) over seeds {report['seeds']}: mean (± sample std)", ""]
    lines.append(f"{'scheme':<16}" + "".join(f"{m:>{width + 6}}" for m in models))
    for s in schemes:
        parts = []
        for m in models:
            a = cell.get((s, m))
            if a is None:
                parts.append(f"{'-':>{width + 6}}")
                continue
            std = "n/a" if a["std"] is None else f"{100 * a['std']:.2f}"
            parts.append(f"{100 * a['mean']:.2f} (± {std})".rjust(width + 6))
        lines.append(f"{s:<16}" + "".join(parts))
    lines.append("")
    cx = [c["holdout_accuracy"] for c in report["complex"]]
    lines.append(f"complex model holdout accuracy: mean {100 * np.mean(cx):.2f}%")
    return "\n".join(lines) + "\n"


def write_report(out, cfg: ExperimentConfig | None = None) -> dict:
    out = Path(out)
    paths = sorted(out.glob("seed_*/evaluation.json"))
    if not paths:
        raise MissingArtifactError(f"no seed_*/evaluation.json under {out}; run 'evaluate' first")
    config = cfg.raw if cfg is not None else None
    if config is None and (out / "config.yaml").exists():
        config = yaml.safe_load((out / "config.yaml").read_text(encoding="utf-8"))
    report = build_report([jsonio.read(p) for p in paths], config)
    jsonio.write(out / "report.json", report)
    (out / "report.txt").write_text(render_report(report), encoding="utf-8")
    return report


def load_report(path, atol: float = 1e-12) -> dict:
    """Read a report and check its aggregates against its per-seed rows."""
    report = jsonio.read(path)
    fresh = {(a["scheme"], a["simple_model"]): a for a in aggregate(report["rows"])}
    for a in report["aggregates"]:
        b = fresh.get((a["scheme"], a["simple_model"]))
        if b is None or b["n"] != a["n"] or abs(b["mean"] - a["mean"]) > atol or (
                (a["std"] is None) != (b["std"] is None)
                or (a["std"] is not None and abs(b["std"] - a["std"]) > atol)):
            raise InvalidArgumentError(f"aggregate for {a['scheme']}/{a['simple_model']} "
                                       "does not match its rows")
    return report
