"""Down-closed polytope feasible regions and their two oracles.

The feasible region is ``{x : A x <= b, 0 <= x <= upper}`` with a strictly
feasible origin (all entries of ``b`` and ``upper`` positive).  Two oracles
are provided: Euclidean projection (Dykstra's alternating projections over
the individual halfspaces and the box) and linear maximization (a dense
primal simplex with Bland's anti-cycling rule).  Both are deterministic
functions of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Polytope",
    "ProjectionError",
    "LmoError",
    "contains",
    "project",
    "lmo",
    "diameter_bound",
    "save_polytope",
    "load_polytope",
]

#: absolute optimality tolerance of the linear maximization oracle
TOL_LP = 1e-9

_PIVOT_EPS = 1e-10


class ProjectionError(RuntimeError):
    """Dykstra did not converge; carries the last iterate and its residual."""

    def __init__(self, message: str, iterate: np.ndarray, residual: float):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual


class LmoError(RuntimeError):
    """The simplex pivot budget was exhausted (must not happen with Bland's rule)."""


@dataclass(frozen=True, eq=False)
class Polytope:
    """Immutable region ``{x : A x <= b, 0 <= x <= upper}``.

    ``a_matrix`` is ``(m, n)`` with ``m == 0`` allowed (pure box), ``b_vector``
    has length ``m`` and ``upper`` length ``n``.  All entries of ``b_vector``
    and ``upper`` must be strictly positive so the origin is strictly feasible.
    """

    a_matrix: np.ndarray
    b_vector: np.ndarray
    upper: np.ndarray
    _row_norms_sq: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a_matrix, dtype=float))
        b = np.asarray(self.b_vector, dtype=float).ravel()
        u = np.asarray(self.upper, dtype=float).ravel()
        if a.size == 0:
            a = np.zeros((0, u.size))
        if a.shape[0] != b.size:
            raise ValueError(f"A has {a.shape[0]} rows but b has {b.size} entries")
        if a.shape[0] > 0 and a.shape[1] != u.size:
            raise ValueError(f"A has {a.shape[1]} columns but upper has {u.size} entries")
        if u.size == 0:
            raise ValueError("polytope must have at least one coordinate")
        if np.any(u <= 0):
            raise ValueError("all box upper bounds must be strictly positive")
        if np.any(b <= 0):
            raise ValueError("all right-hand sides b must be strictly positive")
        a.setflags(write=False)
        b.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "a_matrix", a)
        object.__setattr__(self, "b_vector", b)
        object.__setattr__(self, "upper", u)
        rn = np.einsum("ij,ij->i", a, a) if a.shape[0] else np.zeros(0)
        rn.setflags(write=False)
        object.__setattr__(self, "_row_norms_sq", rn)

    @property
    def dim(self) -> int:
        return self.upper.size

    @property
    def n_halfspaces(self) -> int:
        return self.b_vector.size

    @classmethod
    def box(cls, upper) -> "Polytope":
        u = np.asarray(upper, dtype=float).ravel()
        return cls(np.zeros((0, u.size)), np.zeros(0), u)


def _check_dim(p: Polytope, x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != p.dim:
        raise ValueError(f"{name} has dimension {x.size}, polytope has dimension {p.dim}")
    return x


def contains(p: Polytope, x, tol: float = 1e-9) -> bool:
    """True iff every box and halfspace constraint holds within ``tol``."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    x = _check_dim(p, x, "x")
    if np.any(x < -tol) or np.any(x > p.upper + tol):
        return False
    if p.n_halfspaces and np.any(p.a_matrix @ x > p.b_vector + tol):
        return False
    return True


def violation(p: Polytope, x) -> float:
    """Largest constraint violation of ``x`` (0 when feasible)."""
    x = _check_dim(p, x, "x")
    v = max(float(np.max(-x, initial=0.0)), float(np.max(x - p.upper, initial=0.0)))
    if p.n_halfspaces:
        v = max(v, float(np.max(p.a_matrix @ x - p.b_vector)))
    return max(v, 0.0)


def project(p: Polytope, y, tol: float = 1e-8, max_sweeps: int = 10000) -> np.ndarray:
    """Euclidean projection of ``y`` onto the polytope.

    Already-feasible points are returned unchanged.  A pure box is clamped in
    closed form.  Otherwise Dykstra's alternating projections cycle over the
    halfspaces and the box until the iterate moves less than ``tol`` in one
    sweep; each sweep ends with the box so the result is box-exact.

    Raises ``ProjectionError`` after ``max_sweeps`` sweeps without convergence.
    """
    y = _check_dim(p, y, "y")
    if contains(p, y, 0.0):
        return y.copy()
    if p.n_halfspaces == 0:
        return np.clip(y, 0.0, p.upper)

    a, b, rn = p.a_matrix, p.b_vector, p._row_norms_sq
    m = p.n_halfspaces
    x = y.copy()
    # one correction vector per set: m halfspaces followed by the box
    corr = np.zeros((m + 1, p.dim))
    corr_prev = np.empty_like(corr)
    for _ in range(max_sweeps):
        corr_prev[:] = corr
        for i in range(m):
            z = x + corr[i]
            slack = a[i] @ z - b[i]
            if slack > 0.0 and rn[i] > 0.0:
                x = z - (slack / rn[i]) * a[i]
            else:
                x = z
            corr[i] = z - x
        z = x + corr[m]
        x = np.clip(z, 0.0, p.upper)
        corr[m] = z - x
        # the iterate can park at a (possibly feasible) corner for many sweeps
        # while corrections still accumulate, so iterate movement is not a
        # sound test; stop only once the corrections themselves stabilize
        if float(np.max(np.abs(corr - corr_prev))) < tol and violation(p, x) <= tol:
            return x
    raise ProjectionError(
        f"projection did not converge within {max_sweeps} sweeps",
        iterate=x,
        residual=violation(p, x),
    )


def lmo(p: Polytope, g) -> np.ndarray:
    """A vertex maximizing ``<g, v>`` over the polytope.

    Pure boxes use the sign rule ``v_j = upper_j if g_j > 0 else 0``.  With
    halfspaces the LP ``max g.v  s.t. [A; I] v <= [b; upper], v >= 0`` is
    solved with a dense primal tableau simplex.  Bland's rule (lowest-index
    entering variable, lowest-index basic variable on ratio ties) makes the
    result deterministic and cycle-free; coordinates whose reduced objective
    coefficient never turns positive rest at their lower bound 0.
    """
    g = _check_dim(p, g, "g")
    n = p.dim
    if p.n_halfspaces == 0:
        return np.where(g > 0.0, p.upper, 0.0)

    m = p.n_halfspaces
    rows = m + n
    cols = n + rows  # structural variables then one slack per row
    tab = np.zeros((rows, cols + 1))
    tab[:m, :n] = p.a_matrix
    tab[m:rows, :n] = np.eye(n)
    tab[:, n : n + rows] = np.eye(rows)
    tab[:m, cols] = p.b_vector
    tab[m:rows, cols] = p.upper
    # reduced objective row for maximization: entering requires obj[j] < -TOL_LP
    obj = np.zeros(cols + 1)
    obj[:n] = -g
    basis = np.arange(n, n + rows)

    max_pivots = 1000 + 50 * cols
    for _ in range(max_pivots):
        candidates = np.flatnonzero(obj[:cols] < -TOL_LP)
        if candidates.size == 0:
            break
        j = int(candidates[0])  # Bland: lowest-index entering variable
        col = tab[:, j]
        pos = col > _PIVOT_EPS
        if not np.any(pos):
            raise LmoError("linear program is unbounded; polytope invariant violated")
        ratios = np.full(rows, np.inf)
        ratios[pos] = tab[pos, cols] / col[pos]
        best = ratios.min()
        tied = np.flatnonzero(ratios <= best + _PIVOT_EPS * max(1.0, abs(best)))
        r = int(tied[np.argmin(basis[tied])])  # Bland: lowest basic index on ties
        piv = tab[r, j]
        tab[r] /= piv
        factors = tab[:, j].copy()
        factors[r] = 0.0
        tab -= np.outer(factors, tab[r])
        obj -= obj[j] * tab[r]
        basis[r] = j
    else:
        raise LmoError(f"pivot budget {max_pivots} exhausted")

    v = np.zeros(n)
    structural = basis < n
    v[basis[structural]] = tab[structural, cols]
    return np.clip(v, 0.0, p.upper)


def diameter_bound(p: Polytope) -> float:
    """Upper bound ``||upper||_2`` on the Euclidean diameter of the region."""
    return float(np.linalg.norm(p.upper))


def _fmt_row(values) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(values, dtype=float).ravel())


def save_polytope(path, p: Polytope) -> None:
    """Write the region in the line-oriented text format (exact round-trip)."""
    with open(path, "w") as fh:
        fh.write(_polytope_block(p))


def _polytope_block(p: Polytope) -> str:
    lines = [f"n {p.dim}", f"m {p.n_halfspaces}", "u " + _fmt_row(p.upper)]
    if p.n_halfspaces:
        lines.append("b " + _fmt_row(p.b_vector))
        for row in p.a_matrix:
            lines.append("A " + _fmt_row(row))
    return "\n".join(lines) + "\n"


def _parse_block(lines) -> Polytope:
    n = m = None
    u = b = None
    a_rows = []
    for line in lines:
        key, _, rest = line.partition(" ")
        if key == "n":
            n = int(rest)
        elif key == "m":
            m = int(rest)
        elif key == "u":
            u = np.array([float(v) for v in rest.split()])
        elif key == "b":
            b = np.array([float(v) for v in rest.split()])
        elif key == "A":
            a_rows.append([float(v) for v in rest.split()])
        else:
            raise ValueError(f"unknown polytope key {key!r}")
    if n is None or m is None or u is None:
        raise ValueError("polytope block must define n, m, and u")
    if u.size != n:
        raise ValueError("u length disagrees with n")
    if m == 0:
        return Polytope.box(u)
    if b is None or b.size != m or len(a_rows) != m:
        raise ValueError("A/b rows disagree with m")
    return Polytope(np.array(a_rows), b, u)


def load_polytope(path) -> Polytope:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    return _parse_block(lines)
