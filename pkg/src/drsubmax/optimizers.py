"""The four stochastic ascent algorithms, producing full trajectories.

``pga_run`` and ``boosted_pga_run`` are projected ascent variants recorded
iterate by iterate (their guarantees concern the running average value).
``scg_run`` and ``scgpp_run`` are Frank-Wolfe style: starting from the
origin they add one scaled vertex per iteration, so the final iterate is a
convex combination of vertices and always feasible.

Per-trial randomness comes exclusively from the trial's ``OracleStream``
generator, in a fixed query order (initialization draws, then one group of
draws per iteration, then the returned-iterate draw), which makes every
run bit-reproducible from ``(master_seed, run_id)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import lmo, project
from .objectives import Objective
from .oracles import NoiseModel, OracleStream

__all__ = [
    "StepRule",
    "MomentumRule",
    "RunConfig",
    "RunRecord",
    "boost_s_from_uniform",
    "pga_run",
    "boosted_pga_run",
    "scg_run",
    "scgpp_run",
    "run_trial",
    "run_battery",
    "records_to_csv",
]

ALGORITHMS = ("pga", "boosted_pga", "scg", "scgpp")
CONVENTIONS = ("uniform_random_iterate", "last_iterate", "best_iterate")


@dataclass(frozen=True)
class StepRule:
    """Ascent step size: ``constant`` eta or diminishing ``value / sqrt(t)``."""

    kind: str = "inv_sqrt"
    value: float = 2.0

    def __post_init__(self):
        if self.kind not in ("constant", "inv_sqrt"):
            raise ValueError(f"unknown step rule {self.kind!r}")
        if self.value <= 0:
            raise ValueError("step size must be positive")

    def eta(self, t: int) -> float:
        if self.kind == "constant":
            return self.value
        return self.value / math.sqrt(t)


@dataclass(frozen=True)
class MomentumRule:
    """Momentum coefficient sequence for the greedy gradient average.

    ``poly48``:   rho_t = 4 / (t + 8)^(2/3)
    ``alpha``:    rho_t = t^(-value) with value in (0, 1)
    ``constant``: rho_t = value (direct override, mainly for tests)
    """

    kind: str = "poly48"
    value: float = 0.0

    def __post_init__(self):
        if self.kind == "alpha" and not (0.0 < self.value < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if self.kind == "constant" and not (0.0 < self.value <= 1.0):
            raise ValueError("constant momentum must lie in (0, 1]")
        if self.kind not in ("poly48", "alpha", "constant"):
            raise ValueError(f"unknown momentum rule {self.kind!r}")

    def rho(self, t: int) -> float:
        if self.kind == "poly48":
            return 4.0 / (t + 8.0) ** (2.0 / 3.0)
        if self.kind == "alpha":
            return float(t) ** -self.value
        return self.value


@dataclass(frozen=True)
class RunConfig:
    """Everything one trial needs besides the objective and noise model."""

    algorithm: str
    T: int
    master_seed: int = 0
    run_id: int = 0
    step_rule: StepRule = StepRule()
    gamma: float = 1.0
    momentum_rule: MomentumRule = MomentumRule()
    batch_size: int | None = None
    init_rule: str = "gaussian_project"
    returned_convention: str | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must lie in (0, 1]")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.init_rule not in ("zero", "gaussian_project", "upper"):
            raise ValueError(f"unknown init rule {self.init_rule!r}")
        conv = self.returned_convention
        if conv is None:
            conv = "uniform_random_iterate" if self.algorithm in ("pga", "boosted_pga") \
                else "last_iterate"
            object.__setattr__(self, "returned_convention", conv)
        elif conv not in CONVENTIONS:
            raise ValueError(f"unknown returned convention {conv!r}")
        if self.algorithm in ("scg", "scgpp") and self.returned_convention != "last_iterate":
            raise ValueError("greedy variants return the final iterate")

    @property
    def effective_batch(self) -> int:
        return self.T if self.batch_size is None else self.batch_size


@dataclass(frozen=True)
class RunRecord:
    """One trial's trajectory: iterates with exact objective values."""

    config: RunConfig
    t: np.ndarray
    iterates: np.ndarray
    f_true: np.ndarray
    f_running_avg: np.ndarray
    returned_value: float
    returned_convention: str


def _finish(objective: Objective, cfg: RunConfig, rng, iterates: list[np.ndarray]) -> RunRecord:
    xs = np.asarray(iterates)
    f = np.array([objective.value(x) for x in xs])
    avg = np.cumsum(f) / np.arange(1, cfg.T + 1)
    conv = cfg.returned_convention
    if conv == "uniform_random_iterate":
        tau = int(rng.integers(1, cfg.T + 1))
        returned = float(f[tau - 1])
    elif conv == "best_iterate":
        returned = float(np.max(f))
    else:
        returned = float(f[-1])
    return RunRecord(
        config=cfg,
        t=np.arange(1, cfg.T + 1),
        iterates=xs,
        f_true=f,
        f_running_avg=avg,
        returned_value=returned,
        returned_convention=conv,
    )


def _init_point(objective: Objective, cfg: RunConfig, rng) -> np.ndarray:
    if cfg.init_rule == "zero":
        return np.zeros(objective.dim)
    if cfg.init_rule == "upper":
        return project(objective.polytope, objective.polytope.upper)
    # a standard normal draw may land outside the region, so project it back
    return project(objective.polytope, rng.standard_normal(objective.dim))


def pga_run(objective: Objective, oracle: OracleStream, cfg: RunConfig) -> RunRecord:
    """Projected stochastic gradient ascent; records every post-update iterate."""
    if cfg.algorithm != "pga":
        raise ValueError("config is not for pga")
    poly = objective.polytope
    x = _init_point(objective, cfg, oracle.rng)
    iterates = []
    for t in range(1, cfg.T + 1):
        g = oracle.grad(x)
        x = project(poly, x + cfg.step_rule.eta(t) * g)
        iterates.append(x)
    return _finish(objective, cfg, oracle.rng, iterates)


def boost_s_from_uniform(u: float, gamma: float = 1.0) -> float:
    """Inverse CDF of the scale distribution with density
    ``exp(gamma (s - 1)) / ((1 - exp(-gamma)) / gamma)`` on [0, 1]."""
    if not (0.0 <= u <= 1.0):
        raise ValueError("u must lie in [0, 1]")
    eg = math.exp(-gamma)
    return 1.0 + math.log(eg + u * (1.0 - eg)) / gamma


def boosted_pga_run(objective: Objective, oracle: OracleStream, cfg: RunConfig) -> RunRecord:
    """Projected ascent on the reweighted auxiliary gradient.

    Each iteration draws a scale ``s`` by inverse CDF, queries the noisy
    gradient at ``s * x``, and multiplies it by ``(1 - exp(-gamma)) / gamma``;
    the update is then the same project-ascent step as plain ascent.
    """
    if cfg.algorithm != "boosted_pga":
        raise ValueError("config is not for boosted_pga")
    poly = objective.polytope
    gamma = cfg.gamma
    factor = (1.0 - math.exp(-gamma)) / gamma
    x = _init_point(objective, cfg, oracle.rng)
    iterates = []
    for t in range(1, cfg.T + 1):
        s = boost_s_from_uniform(float(oracle.rng.random()), gamma)
        g = factor * oracle.grad(s * x)
        x = project(poly, x + cfg.step_rule.eta(t) * g)
        iterates.append(x)
    return _finish(objective, cfg, oracle.rng, iterates)


def scg_run(objective: Objective, oracle: OracleStream, cfg: RunConfig) -> RunRecord:
    """Momentum Frank-Wolfe from the origin with step 1/T.

    Each iteration first folds the fresh noisy gradient into the momentum
    average, then moves toward the vertex maximizing it.
    """
    if cfg.algorithm != "scg":
        raise ValueError("config is not for scg")
    poly = objective.polytope
    T = cfg.T
    x = np.zeros(objective.dim)
    gbar = np.zeros(objective.dim)
    iterates = []
    for t in range(1, T + 1):
        rho = cfg.momentum_rule.rho(t)
        gbar = (1.0 - rho) * gbar + rho * oracle.grad(x)
        v = lmo(poly, gbar)
        x = x + v / T
        iterates.append(x)
    return _finish(objective, cfg, oracle.rng, iterates)


def scgpp_run(objective: Objective, oracle: OracleStream, cfg: RunConfig) -> RunRecord:
    """Variance-reduced Frank-Wolfe with a path-integrated gradient estimate.

    The first iteration averages ``batch`` noisy gradients at the origin.
    Later iterations draw ``batch`` interpolation points between the two most
    recent iterates, average noisy Hessians there, and accumulate the
    Hessian-times-displacement correction onto the running gradient estimate.
    """
    if cfg.algorithm != "scgpp":
        raise ValueError("config is not for scgpp")
    poly = objective.polytope
    T = cfg.T
    batch = cfg.effective_batch
    x = np.zeros(objective.dim)
    x_prev = None
    ghat = None
    iterates = []
    for t in range(1, T + 1):
        if t == 1:
            ghat = np.mean([oracle.grad(x) for _ in range(batch)], axis=0)
        else:
            step = x - x_prev
            hbar = np.zeros((objective.dim, objective.dim))
            for _ in range(batch):
                a = float(oracle.rng.random())
                hbar += oracle.hessian(a * x + (1.0 - a) * x_prev)
            hbar /= batch
            ghat = ghat + hbar @ step
        v = lmo(poly, ghat)
        x_prev = x
        x = x + v / T
        iterates.append(x)
    return _finish(objective, cfg, oracle.rng, iterates)


_RUNNERS = {
    "pga": pga_run,
    "boosted_pga": boosted_pga_run,
    "scg": scg_run,
    "scgpp": scgpp_run,
}


def run_trial(objective: Objective, noise: NoiseModel, cfg: RunConfig) -> RunRecord:
    """Build the trial's oracle stream and dispatch on the configured algorithm."""
    oracle = OracleStream(objective, noise, cfg.master_seed, cfg.run_id)
    return _RUNNERS[cfg.algorithm](objective, oracle, cfg)


def run_battery(objective: Objective, noise: NoiseModel, cfg: RunConfig, n_runs: int,
                first_run_id: int = 0) -> list[RunRecord]:
    """``n_runs`` independent trials differing only in ``run_id``."""
    return [
        run_trial(objective, noise, replace(cfg, run_id=first_run_id + i))
        for i in range(n_runs)
    ]


def records_to_csv(records, path) -> None:
    """Write trajectories as ``run_id,algorithm,t,f_true,f_running_avg`` rows
    sorted by (run_id, t), floats with 17 significant digits."""
    records = sorted(records, key=lambda r: r.config.run_id)
    with open(path, "w") as fh:
        fh.write("run_id,algorithm,t,f_true,f_running_avg\n")
        for rec in records:
            rid = rec.config.run_id
            alg = rec.config.algorithm
            for t, f, avg in zip(rec.t, rec.f_true, rec.f_running_avg):
                fh.write(f"{rid},{alg},{t},{f:.17g},{avg:.17g}\n")
