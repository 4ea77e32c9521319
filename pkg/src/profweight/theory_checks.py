"""Brute-force checks of the identities behind the weighting scheme, on
discrete distributions.

* ratio-sum lemma: for interior distributions ``p, q, r``,
  ``sum_x p(x) r(x) / q(x) = 1`` should only happen at ``q = p`` or ``q = r``;
* the weight constraint ``E_{P_M}[P / P_M'] = 1`` (the same equation with
  ``q = P_M'``), whose solutions are ``P_M' = P_M`` and ``P_M' = P``;
* Bayes error of an equal-prior two-class mixture equals ``1/2 - TV/2``.

The grid verifiers enumerate candidate ``q`` on the interior of the simplex
(``q = k / resolution`` with every ``k_i >= 1``).

For ``n = 2`` the level set ``{q : ratio_sum = 1}`` is exactly the two points
above.  For ``n >= 3`` and ``p != r`` it is a closed curve through ``p`` and
``r`` (the ratio sum is convex in ``q`` with minimum
``(sum sqrt(p r))^2 < 1``), so the grid verifier additionally counts sign
changes of ``ratio_sum - 1`` along grid edges away from ``p`` and ``r`` and
reports them as ``crossings_outside``.  Those are not counted as violations,
which are defined strictly as near-exact grid solutions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidArgumentError


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    masses: np.ndarray

    def __post_init__(self):
        p = np.array(self.masses, dtype=np.float64).reshape(-1)
        if p.size == 0:
            raise InvalidArgumentError("a distribution needs at least one atom")
        if np.any(p <= 0) or not np.all(np.isfinite(p)):
            raise InvalidArgumentError("every mass must be strictly positive and finite")
        if abs(p.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError(f"masses sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "masses", p)

    @property
    def n(self) -> int:
        return int(self.masses.size)

    @classmethod
    def random(cls, n: int, rng) -> "DiscreteDistribution":
        x = rng.dirichlet(np.ones(n))
        x = np.maximum(x, 1e-6)
        x /= x.sum()
        return cls(x)


def _masses(d):
    return d.masses if isinstance(d, DiscreteDistribution) else DiscreteDistribution(d).masses


def _same_dim(*ds):
    arrs = [_masses(d) for d in ds]
    if len({a.size for a in arrs}) != 1:
        raise InvalidArgumentError("distributions differ in dimension")
    return arrs


def ratio_sum(p, q, r) -> float:
    """``sum_i p_i r_i / q_i``."""
    p, q, r = _same_dim(p, q, r)
    return float(np.sum(p * r / q))


def tv_distance(p0, p1) -> float:
    p0, p1 = _same_dim(p0, p1)
    return float(0.5 * np.sum(np.abs(p0 - p1)))


def bayes_error_discrete(p0, p1) -> float:
    """Error of the optimal rule on an equal-prior mixture, by picking the better class per atom."""
    p0, p1 = _same_dim(p0, p1)
    err = 0.0
    for a, b in zip(p0, p1):
        # predict the class with the larger mass; the other class's mass is lost
        err += 0.5 * (b if a >= b else a)
    return float(err)


def simplex_grid(n: int, resolution: int) -> np.ndarray:
    """All interior points ``k / resolution`` with integer ``k_i >= 1``, shape ``(N, n)``."""
    if n == 2:
        k = np.arange(1, resolution)
        return np.column_stack([k, resolution - k]) / resolution
    if n == 3:
        i, j = np.meshgrid(np.arange(1, resolution), np.arange(1, resolution), indexing="ij")
        keep = (i + j) <= resolution - 1
        i, j = i[keep], j[keep]
        return np.column_stack([i, j, resolution - i - j]) / resolution
    pts = [k for k in itertools.product(range(1, resolution), repeat=n - 1) if sum(k) <= resolution - 1]
    return np.array([[*k, resolution - sum(k)] for k in pts], dtype=np.float64) / resolution


def _level_values(p, r, Q):
    return (p * r / Q).sum(axis=1) - 1.0


def _near(Q, centers, radius):
    return np.any([np.max(np.abs(Q - c), axis=-1) <= radius for c in centers], axis=0)


def _roots_1d(p, r, resolution, values):
    """Refine every sign change of ratio_sum - 1 along the n = 2 grid to a root."""
    roots = []
    f = lambda t: p[0] * r[0] / t + p[1] * r[1] / (1.0 - t) - 1.0
    s = np.sign(values)
    for i in np.flatnonzero(s[:-1] * s[1:] < 0):
        a, b = (i + 1) / resolution, (i + 2) / resolution
        roots.append(brentq(f, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps))
    return roots


@dataclass
class LemmaReport:
    p: list
    r: list
    resolution: int
    tolerance: float
    radius: float
    grid_points: int
    near_solutions: list = field(default_factory=list)  # grid points with |ratio_sum - 1| < tol
    roots: list = field(default_factory=list)  # refined roots (n = 2 only)
    violations: list = field(default_factory=list)
    crossings_outside: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"p": self.p, "r": self.r, "resolution": self.resolution, "tolerance": self.tolerance,
                "radius": self.radius, "grid_points": self.grid_points,
                "near_solutions": self.near_solutions, "roots": self.roots,
                "violations": self.violations, "crossings_outside": self.crossings_outside,
                "ok": self.ok}


def _edge_crossings_outside(p, r, resolution, radius):
    """Count grid edges (n = 3) where ratio_sum - 1 changes sign away from p and r."""
    Q = simplex_grid(3, resolution)
    vals = _level_values(p, r, Q)
    index = {(int(round(a * resolution)), int(round(b * resolution))): k
             for k, (a, b, _) in enumerate(Q)}
    near = _near(Q, [p, r], radius)
    count = 0
    for (i, j), k in index.items():
        for di, dj in ((1, 0), (0, 1), (1, -1)):
            k2 = index.get((i + di, j + dj))
            if k2 is None or near[k] or near[k2]:
                continue
            if vals[k] * vals[k2] < 0:
                count += 1
    return count


def lemma_grid_verify(p, r, resolution: int = 10_000, tolerance: float = 1e-9,
                      radius: float | None = None, count_crossings: bool = True) -> LemmaReport:
    """Enumerate interior ``q`` and flag near-solutions of ``ratio_sum(p, q, r) = 1``
    lying farther than ``radius`` (L-infinity, default ``2 / resolution``) from
    both ``p`` and ``r``.  For ``n = 2`` sign changes are also refined to roots,
    each of which must lie near ``p`` or ``r``."""
    p, r = _same_dim(p, r)
    n = p.size
    if n not in (2, 3):
        raise InvalidArgumentError("grid verification supports n in {2, 3}")
    if resolution < 100:
        raise InvalidArgumentError("resolution must be at least 100")
    radius = 2.0 / resolution if radius is None else radius
    Q = simplex_grid(n, resolution)
    vals = _level_values(p, r, Q)
    hits = np.flatnonzero(np.abs(vals) < tolerance)
    near = _near(Q[hits], [p, r], radius) if hits.size else np.zeros(0, dtype=bool)
    rep = LemmaReport(p.tolist(), r.tolist(), resolution, tolerance, radius, int(Q.shape[0]))
    rep.near_solutions = [Q[k].tolist() for k in hits]
    rep.violations = [Q[k].tolist() for k, ok in zip(hits, near) if not ok]
    if n == 2:
        for t in _roots_1d(p, r, resolution, vals):
            q = np.array([t, 1.0 - t])
            rep.roots.append(q.tolist())
            if not _near(q[None, :], [p, r], radius)[0]:
                rep.violations.append(q.tolist())
    elif count_crossings:
        rep.crossings_outside = _edge_crossings_outside(p, r, resolution, radius)
    return rep


def weight_constraint(P, P_M, P_candidate) -> float:
    """``E_{P_M}[P / P_candidate]``: expected importance weight under the training distribution."""
    return ratio_sum(P, P_candidate, P_M)


def _cluster(points, radius):
    clusters = []
    for q in points:
        for c in clusters:
            if np.max(np.abs(np.asarray(c[0]) - q)) <= radius:
                c.append(q)
                break
        else:
            clusters.append([q])
    return clusters


@dataclass
class WeightConstraintReport:
    P: list
    P_M: list
    resolution: int
    solutions: list  # every grid near-solution or refined root
    neighborhoods: list  # [{"center": [...], "family": ..., "size": k}]
    unexplained: list

    @property
    def ok(self) -> bool:
        return not self.unexplained

    def to_dict(self) -> dict:
        return {"P": self.P, "P_M": self.P_M, "resolution": self.resolution,
                "neighborhoods": self.neighborhoods, "unexplained": self.unexplained,
                "solution_count": len(self.solutions), "ok": self.ok}


def weight_constraint_check(P, P_M, resolution: int = 10_000, tolerance: float = 1e-9,
                   radius: float | None = None) -> WeightConstraintReport:
    """Find every candidate ``P_M'`` on the grid with ``E_{P_M}[P / P_M'] = 1``.

    Solutions are grouped into neighborhoods and labelled by family:
    ``"importance_ratio"`` near ``P_M' = P_M`` (weights ``P / P_M``) and
    ``"unit_weights"`` near ``P_M' = P`` (weights identically 1).
    """
    P_arr, P_M_arr = _same_dim(P, P_M)
    radius = 2.0 / resolution if radius is None else radius
    rep = lemma_grid_verify(P_arr, P_M_arr, resolution, tolerance, radius, count_crossings=False)
    points = [np.asarray(q) for q in rep.near_solutions + rep.roots]
    neighborhoods, unexplained = [], []
    for cl in _cluster(points, 2 * radius):
        center = np.mean(cl, axis=0)
        fams = []
        if np.max(np.abs(center - P_M_arr)) <= radius:
            fams.append("importance_ratio")
        if np.max(np.abs(center - P_arr)) <= radius:
            fams.append("unit_weights")
        if not fams:
            unexplained.extend(q.tolist() for q in cl)
        neighborhoods.append({"center": center.tolist(), "families": fams, "size": len(cl)})
    return WeightConstraintReport(P_arr.tolist(), P_M_arr.tolist(), resolution,
                          [q.tolist() for q in points], neighborhoods, unexplained)


# --------------------------------------------------------------------------
# suites used by the CLI and the acceptance tests


def bayes_tv_suite(pairs: int = 1000, max_n: int = 10, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(pairs):
        n = 2 + k % (max_n - 1)
        a, b = DiscreteDistribution.random(n, rng), DiscreteDistribution.random(n, rng)
        gap = abs(bayes_error_discrete(a, b) - (0.5 - 0.5 * tv_distance(a, b)))
        worst = max(worst, gap)
    return {"name": "bayes_tv_identity", "pairs": pairs, "max_abs_gap": worst, "ok": worst < 1e-12}


def ratio_lemma_suite(pairs: int, n: int, resolution: int, seed: int = 0,
                      tolerance: float = 1e-9) -> dict:
    rng = np.random.default_rng(seed)
    violations, crossings, near = 0, 0, 0
    for _ in range(pairs):
        p, r = DiscreteDistribution.random(n, rng), DiscreteDistribution.random(n, rng)
        rep = lemma_grid_verify(p, r, resolution, tolerance)
        violations += len(rep.violations)
        crossings += rep.crossings_outside
        near += len(rep.near_solutions) + len(rep.roots)
    return {"name": f"ratio_sum_lemma_n{n}", "pairs": pairs, "resolution": resolution,
            "tolerance": tolerance, "violations": violations, "solutions_found": near,
            "crossings_outside": crossings, "ok": violations == 0}


def weight_constraint_suite(resolution: int = 10_000) -> dict:
    rep = weight_constraint_check([0.3, 0.7], [0.6, 0.4], resolution)
    return {"name": "weight_constraint", **rep.to_dict(),
            "ok": rep.ok and len(rep.neighborhoods) == 2}


def run_all(seed: int = 0, quick: bool = False) -> list[dict]:
    """Every suite with the default sizes (``quick`` shrinks them for smoke tests)."""
    if quick:
        return [bayes_tv_suite(100, 10, seed), ratio_lemma_suite(10, 2, 10_000, seed),
                ratio_lemma_suite(2, 3, 100, seed), weight_constraint_suite()]
    return [bayes_tv_suite(1000, 10, seed), ratio_lemma_suite(100, 2, 10_000, seed),
            ratio_lemma_suite(10, 3, 200, seed), weight_constraint_suite()]


def render(results: list[dict]) -> str:
    lines = []
    for res in results:
        status = "PASS" if res["ok"] else "FAIL"
        detail = {k: v for k, v in res.items()
                  if k in ("pairs", "resolution", "max_abs_gap", "violations", "solutions_found",
                           "crossings_outside", "solution_count")}
        lines.append(f"[{status}] {res['name']}: " + ", ".join(f"{k}={v}" for k, v in detail.items()))
        if res.get("crossings_outside"):
            lines.append("       note: sign changes of ratio_sum - 1 away from q=p and q=r; for n >= 3 "
                         "the solution set is a curve, which this grid does not sample exactly")
    return "\n".join(lines) + "\n"
