"""Benchmark objective families: monotone DR-submodular quadratics and
budget allocation over a bipartite channel/customer graph.

Both families expose exact value, gradient, and Hessian access plus an
attached feasible region, so solvers and noise oracles can treat them
uniformly.  Generators are seeded and fully deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Polytope, _fmt_row, _parse_block, _polytope_block

__all__ = [
    "Objective",
    "NqpObjective",
    "BudgetAllocationObjective",
    "FrequencyMapping",
    "generate_nqp",
    "generate_budget",
    "load_bipartite",
    "save_nqp",
    "load_nqp",
]


class Objective:
    """Common surface: ``value``/``grad``/``hessian``, ``dim``, ``polytope``."""

    polytope: Polytope

    @property
    def dim(self) -> int:
        return self.polytope.dim

    def value(self, x) -> float:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x) -> np.ndarray:
        raise NotImplementedError


class NqpObjective(Objective):
    """Quadratic ``f(x) = x'Hx/2 + h'x`` with symmetric entrywise-nonpositive H.

    The linear term is always ``h = -H @ upper``, which makes the gradient
    ``H (x - upper)`` nonnegative on the box, hence f monotone.
    """

    def __init__(self, h_matrix, polytope: Polytope):
        h_matrix = np.asarray(h_matrix, dtype=float)
        if h_matrix.ndim != 2 or h_matrix.shape[0] != h_matrix.shape[1]:
            raise ValueError("H must be a square matrix")
        if h_matrix.shape[0] != polytope.dim:
            raise ValueError("H dimension disagrees with the polytope")
        if not np.allclose(h_matrix, h_matrix.T, atol=1e-12, rtol=0.0):
            raise ValueError("H must be symmetric (within 1e-12)")
        if np.any(h_matrix > 0):
            raise ValueError("all entries of H must be <= 0")
        self.h_matrix = h_matrix
        self.h_vector = -h_matrix @ polytope.upper
        self.polytope = polytope

    def value(self, x) -> float:
        x = self._check(x)
        return float(0.5 * x @ self.h_matrix @ x + self.h_vector @ x)

    def grad(self, x) -> np.ndarray:
        x = self._check(x)
        return self.h_matrix @ x + self.h_vector

    def hessian(self, x=None) -> np.ndarray:
        return self.h_matrix.copy()

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.dim:
            raise ValueError(f"x has dimension {x.size}, objective has {self.dim}")
        return x


def generate_nqp(seed, n: int, m: int, entry_low: float, entry_high: float) -> NqpObjective:
    """Random monotone DR-submodular quadratic instance.

    H is symmetric with upper-triangle entries i.i.d. Uniform[entry_low,
    entry_high] mirrored; the region is ``A x <= 1`` with A i.i.d.
    Uniform[0, 1] (m rows, possibly 0) inside the unit box.  Deterministic
    for a fixed seed.
    """
    if entry_high > 0:
        raise ValueError("entry_high must be <= 0 to keep the Hessian nonpositive")
    if entry_low > entry_high:
        raise ValueError("entry_low must be <= entry_high")
    if n < 1 or m < 0:
        raise ValueError("need n >= 1 and m >= 0")
    rng = np.random.default_rng(seed)
    draw = rng.uniform(entry_low, entry_high, size=(n, n))
    h = np.triu(draw)
    h = h + np.triu(h, 1).T
    if m == 0:
        poly = Polytope.box(np.ones(n))
    else:
        a = rng.uniform(0.0, 1.0, size=(m, n))
        poly = Polytope(a, np.ones(m), np.ones(n))
    return NqpObjective(h, poly)


@dataclass(frozen=True)
class FrequencyMapping:
    """Rule turning a (phrase, customer) frequency into an influence probability.

    ``exp``:    p = 1 - exp(-freq / f_max)
    ``linear``: p = min(freq / f_max, p_cap)

    ``f_max`` is the maximum frequency seen in the corpus being loaded.
    """

    kind: str = "exp"
    p_cap: float = 0.99

    def __post_init__(self):
        if self.kind not in ("exp", "linear"):
            raise ValueError(f"unknown frequency mapping {self.kind!r}")

    def __call__(self, freq: float, f_max: float) -> float:
        if self.kind == "exp":
            return 1.0 - math.exp(-freq / f_max)
        return min(freq / f_max, self.p_cap)


class BudgetAllocationObjective(Objective):
    """Influence-coverage objective over a bipartite channel/customer graph.

    Each of ``k`` advertisers holds a budget vector over the channels; the
    influence on customer t is ``1 - prod (1 - p_st)^{x_s}``, accumulated in
    log space to avoid underflow.  Advertiser blocks are separable, so the
    Hessian is block diagonal and entrywise nonpositive.
    """

    def __init__(self, n_channels: int, n_customers: int, edges, k: int = 1,
                 alphas=None, per_advertiser_upper=None):
        if n_channels < 1 or n_customers < 1:
            raise ValueError("need at least one channel and one customer")
        if k < 1:
            raise ValueError("need at least one advertiser")
        edges = list(edges)
        if not edges:
            raise ValueError("no edges")
        coeff = np.zeros((n_customers, n_channels))
        for s, t, p in edges:
            if not (0.0 < p < 1.0):
                raise ValueError(f"edge probability {p} outside (0, 1)")
            coeff[t, s] += -math.log1p(-p)
        self.n_channels = n_channels
        self.n_customers = n_customers
        self.edges = tuple((int(s), int(t), float(p)) for s, t, p in edges)
        self.k = k
        if alphas is None:
            alphas = np.full(k, 1.0 / k)
        self.alphas = np.asarray(alphas, dtype=float).ravel()
        if self.alphas.size != k or np.any(self.alphas <= 0):
            raise ValueError("alphas must be k positive weights")
        self._coeff = coeff
        if per_advertiser_upper is None:
            per_advertiser_upper = np.ones(n_channels)
        elif np.isscalar(per_advertiser_upper):
            per_advertiser_upper = np.full(n_channels, float(per_advertiser_upper))
        else:
            per_advertiser_upper = np.asarray(per_advertiser_upper, dtype=float).ravel()
        if per_advertiser_upper.size != n_channels:
            raise ValueError("per-advertiser budget must have one entry per channel")
        self.per_advertiser_upper = per_advertiser_upper
        self.polytope = Polytope.box(np.tile(per_advertiser_upper, k))

    def _blocks(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.dim:
            raise ValueError(f"x has dimension {x.size}, objective has {self.dim}")
        if np.any(x < 0):
            raise ValueError("budget allocations must be nonnegative")
        return x.reshape(self.k, self.n_channels)

    def value(self, x) -> float:
        blocks = self._blocks(x)
        w = blocks @ self._coeff.T  # (k, customers) accumulated -log(1-p) mass
        return float(np.sum(self.alphas[:, None] * -np.expm1(-w)))

    def grad(self, x) -> np.ndarray:
        blocks = self._blocks(x)
        w = blocks @ self._coeff.T
        g = self.alphas[:, None] * (np.exp(-w) @ self._coeff)
        return g.ravel()

    def hessian(self, x) -> np.ndarray:
        blocks = self._blocks(x)
        w = blocks @ self._coeff.T
        out = np.zeros((self.dim, self.dim))
        n = self.n_channels
        for i in range(self.k):
            block = -self.alphas[i] * (self._coeff.T * np.exp(-w[i])) @ self._coeff
            out[i * n : (i + 1) * n, i * n : (i + 1) * n] = block
        return out

    def hessian_entry(self, x, i: int, s: int, s2: int) -> float:
        """Exact second partial within advertiser block ``i``."""
        if not (0 <= i < self.k and 0 <= s < self.n_channels and 0 <= s2 < self.n_channels):
            raise IndexError("advertiser or channel index out of range")
        blocks = self._blocks(x)
        w = self._coeff @ blocks[i]
        return float(-self.alphas[i] * np.sum(self._coeff[:, s] * self._coeff[:, s2] * np.exp(-w)))


def load_bipartite(path, mapping: FrequencyMapping | None = None, k: int = 1,
                   alphas=None, upper=None) -> BudgetAllocationObjective:
    """Build a budget-allocation objective from a tab-separated edge file.

    Lines are ``channel_id <TAB> customer_id <TAB> frequency``; duplicate
    (channel, customer) pairs have their frequencies summed before mapping.
    Channels and customers are indexed densely in first-appearance order.
    The default budget limit is the mean frequency pushed through the same
    mapping; pass ``upper`` (scalar or per-channel) to override.
    """
    mapping = mapping or FrequencyMapping()
    channel_ids: dict[str, int] = {}
    customer_ids: dict[str, int] = {}
    freqs: dict[tuple[int, int], float] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
            chan, cust, freq_text = parts
            try:
                freq = float(freq_text)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad frequency {freq_text!r}") from None
            if freq < 1:
                raise ValueError(f"{path}:{lineno}: frequency must be >= 1")
            s = channel_ids.setdefault(chan, len(channel_ids))
            t = customer_ids.setdefault(cust, len(customer_ids))
            freqs[(s, t)] = freqs.get((s, t), 0.0) + freq
    if not freqs:
        raise ValueError(f"{path}: no edges")
    f_max = max(freqs.values())
    edges = []
    for (s, t), freq in sorted(freqs.items()):
        p = mapping(freq, f_max)
        if not (0.0 < p < 1.0):
            raise ValueError(f"mapped probability {p} for frequency {freq} outside (0, 1)")
        edges.append((s, t, p))
    if upper is None:
        mean_freq = sum(freqs.values()) / len(freqs)
        upper = mapping(mean_freq, f_max)
    return BudgetAllocationObjective(
        len(channel_ids), len(customer_ids), edges, k=k, alphas=alphas,
        per_advertiser_upper=upper,
    )


def generate_budget(seed, n_channels: int, n_customers: int, density: float,
                    p_low: float, p_high: float, k: int = 1, alphas=None,
                    upper=1.0) -> BudgetAllocationObjective:
    """Seeded synthetic bipartite instance with edge probabilities in
    ``[p_low, p_high]``; every channel and customer receives at least one
    edge so the indexing is dense."""
    if not (0.0 < p_low <= p_high < 1.0):
        raise ValueError("need 0 < p_low <= p_high < 1")
    if not (0.0 < density <= 1.0):
        raise ValueError("density must be in (0, 1]")
    rng = np.random.default_rng(seed)
    mask = rng.random((n_channels, n_customers)) < density
    for t in range(n_customers):
        if not mask[:, t].any():
            mask[rng.integers(n_channels), t] = True
    for s in range(n_channels):
        if not mask[s].any():
            mask[s, rng.integers(n_customers)] = True
    edges = [
        (s, t, float(rng.uniform(p_low, p_high)))
        for s in range(n_channels)
        for t in range(n_customers)
        if mask[s, t]
    ]
    return BudgetAllocationObjective(n_channels, n_customers, edges, k=k,
                                     alphas=alphas, per_advertiser_upper=upper)


def save_nqp(path, obj: NqpObjective) -> None:
    """Write a quadratic instance: the polytope block plus one H row per line."""
    with open(path, "w") as fh:
        fh.write(_polytope_block(obj.polytope))
        for row in obj.h_matrix:
            fh.write("H " + _fmt_row(row) + "\n")


def load_nqp(path) -> NqpObjective:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    h_rows = [[float(v) for v in ln[2:].split()] for ln in lines if ln.startswith("H ")]
    poly = _parse_block([ln for ln in lines if not ln.startswith("H ")])
    if len(h_rows) != poly.dim:
        raise ValueError("H block size disagrees with the polytope dimension")
    return NqpObjective(np.array(h_rows), poly)
