"""Aggregation of repeated trials into worst-case/percentile statistics,
bound-shaped curve fitting, and optimum approximation."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .bounds import BoundCurve
from .objectives import Objective
from .oracles import NoiseModel
from .optimizers import MomentumRule, RunConfig, run_trial

__all__ = [
    "TrialBattery",
    "FittedCurve",
    "trajectory_statistic",
    "fit_curve",
    "shared_c1_refit",
    "approx_opt",
    "bound_violation_rate",
]


class TrialBattery:
    """Trials sharing everything but ``run_id``: an (N, T) value matrix per
    recorded series, rows sorted by run id so aggregation is independent of
    completion order."""

    def __init__(self, run_ids, t, f_true, f_running_avg, algorithm: str):
        order = np.argsort(run_ids)
        self.run_ids = np.asarray(run_ids)[order]
        self.t = np.asarray(t)
        self.f_true = np.asarray(f_true, dtype=float)[order]
        self.f_running_avg = np.asarray(f_running_avg, dtype=float)[order]
        self.algorithm = algorithm
        if self.f_true.shape != (self.n_runs, self.t.size):
            raise ValueError("trajectory matrix shape disagrees with run ids and grid")

    @property
    def n_runs(self) -> int:
        return self.run_ids.size

    def series(self, name: str) -> np.ndarray:
        if name == "f_true":
            return self.f_true
        if name == "f_running_avg":
            return self.f_running_avg
        raise ValueError(f"unknown series {name!r}")

    @classmethod
    def from_records(cls, records) -> "TrialBattery":
        records = list(records)
        if not records:
            raise ValueError("empty battery")
        base = replace(records[0].config, run_id=0)
        for rec in records[1:]:
            if replace(rec.config, run_id=0) != base:
                raise ValueError("battery records must share their configuration")
        return cls(
            run_ids=[rec.config.run_id for rec in records],
            t=records[0].t,
            f_true=[rec.f_true for rec in records],
            f_running_avg=[rec.f_running_avg for rec in records],
            algorithm=base.algorithm,
        )

    @classmethod
    def from_csv(cls, path) -> "TrialBattery":
        per_run: dict[int, list[tuple[int, float, float]]] = {}
        algorithm = None
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "run_id,algorithm,t,f_true,f_running_avg":
                raise ValueError(f"{path}: unexpected battery header {header!r}")
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rid, alg, t, f, avg = line.split(",")
                if algorithm is None:
                    algorithm = alg
                elif alg != algorithm:
                    raise ValueError(f"{path}: mixed algorithms in one battery")
                per_run.setdefault(int(rid), []).append((int(t), float(f), float(avg)))
        if not per_run:
            raise ValueError(f"{path}: empty battery")
        run_ids = sorted(per_run)
        grids = []
        f_true, f_avg = [], []
        for rid in run_ids:
            rows = sorted(per_run[rid])
            grids.append([r[0] for r in rows])
            f_true.append([r[1] for r in rows])
            f_avg.append([r[2] for r in rows])
        if any(g != grids[0] for g in grids[1:]):
            raise ValueError(f"{path}: runs disagree on the iteration grid")
        return cls(run_ids, grids[0], f_true, f_avg, algorithm)


def trajectory_statistic(battery: TrialBattery, stat, series: str = "f_true"):
    """Per-iteration statistic across runs.

    ``stat`` is ``"min"``, ``"median"``, ``"mean"``, or a float ``q`` in
    (0, 1) for the nearest-rank quantile (the ``ceil(q N)``-th order
    statistic, no interpolation).  Returns ``(t, values)``.
    """
    data = battery.series(series)
    if isinstance(stat, str):
        if stat == "min":
            values = data.min(axis=0)
        elif stat == "median":
            values = np.median(data, axis=0)
        elif stat == "mean":
            values = data.mean(axis=0)
        else:
            raise ValueError(f"unknown statistic {stat!r}")
    else:
        q = float(stat)
        if not (0.0 < q < 1.0):
            raise ValueError("quantile level must lie in (0, 1)")
        rank = math.ceil(q * battery.n_runs)
        values = np.sort(data, axis=0)[rank - 1]
    return battery.t.copy(), values


@dataclass(frozen=True)
class FittedCurve:
    """Least-squares fit ``c1 - c2 / t^p`` to an empirical statistic curve."""

    c1: float
    c2: float
    p: float
    label: str = ""
    residual: float = 0.0
    n_points: int = 0


def _fit_design(t, y, p: float, t_min: int):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = t >= t_min
    t, y = t[mask], y[mask]
    if t.size < 2:
        raise ValueError("need at least two points with t >= t_min")
    if np.all(t == t[0]):
        raise ValueError("singular design: all t equal")
    return t, y, t**-p


def fit_curve(t, y, p: float = 0.5, t_min: int = 1, label: str = "") -> FittedCurve:
    """Ordinary least squares of ``y`` on the basis ``{1, -t^-p}`` over points
    with ``t >= t_min``, by the closed-form normal equations."""
    t, y, u = _fit_design(t, y, p, t_min)
    n = t.size
    s1, s2 = u.sum(), (u * u).sum()
    sy, syu = y.sum(), (y * u).sum()
    det = s1 * s1 - n * s2
    if abs(det) < 1e-300:
        raise ValueError("singular design")
    c1 = (s1 * syu - s2 * sy) / det
    c2 = (n * syu - s1 * sy) / det
    resid = float(np.sum((y - c1 + c2 * u) ** 2))
    return FittedCurve(float(c1), float(c2), p, label, resid, n)


def shared_c1_refit(curves, p: float = 0.5, t_min: int = 1) -> list[FittedCurve]:
    """Two-stage fit across related statistic curves.

    Stage one fits every ``(t, y, label)`` curve independently; the shared
    asymptote is the mean of the individual ``c1`` values.  Stage two refits
    each ``c2`` as the exact conditional least-squares optimum given the
    shared ``c1``.
    """
    curves = list(curves)
    if not curves:
        raise ValueError("need at least one curve")
    stage1 = [fit_curve(t, y, p, t_min, label) for t, y, label in curves]
    c1_shared = float(np.mean([f.c1 for f in stage1]))
    out = []
    for (t, y, label), _ in zip(curves, stage1):
        t, y, u = _fit_design(t, y, p, t_min)
        c2 = float(np.sum((c1_shared - y) * u) / np.sum(u * u))
        resid = float(np.sum((y - c1_shared + c2 * u) ** 2))
        out.append(FittedCurve(c1_shared, c2, p, label, resid, t.size))
    return out


def approx_opt(objective: Objective, master_seed: int = 0, n_runs: int = 100,
               iterations: int = 5000, noise: NoiseModel | None = None,
               momentum_rule: MomentumRule = MomentumRule()) -> float:
    """Optimum approximation: the best final value across repeated greedy runs.

    With a noise model the runs differ through their streams and the maximum
    of the exact objective at their final iterates is returned; without one
    the run is deterministic, so a single run suffices.
    """
    if noise is None or noise.kind == "none":
        noise = NoiseModel.none()
        n_runs = 1
    best = -math.inf
    for run_id in range(n_runs):
        cfg = RunConfig(algorithm="scg", T=iterations, master_seed=master_seed,
                        run_id=run_id, momentum_rule=momentum_rule)
        rec = run_trial(objective, noise, cfg)
        best = max(best, rec.returned_value)
    return best


def bound_violation_rate(battery: TrialBattery, curve: BoundCurve, convention: str) -> float:
    """Fraction of runs whose returned statistic at the final iteration falls
    strictly below the bound there.

    ``convention`` is ``"average_iterate"`` (running average, projected
    ascent guarantees) or ``"final_iterate"`` (greedy guarantees).
    """
    if convention not in ("average_iterate", "final_iterate"):
        raise ValueError(f"unknown convention {convention!r}")
    if curve.t.size != battery.t.size or np.any(curve.t != battery.t):
        raise ValueError("grid mismatch between bound curve and battery")
    horizon = int(battery.t[-1])
    threshold = curve.at(horizon)
    series = battery.f_running_avg if convention == "average_iterate" else battery.f_true
    return float(np.mean(series[:, -1] < threshold))
