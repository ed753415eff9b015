"""Numerical evaluation of the high-probability lower bounds.

Each ``theoremN_bound`` evaluates one guarantee as a function of the
iteration budget ``T`` and a confidence parameter, given the problem
constants (smoothness, diameter, noise bounds, optimum).  Bounds may be
negative: vacuous values are meaningful outputs for plotting.  Helper
numerics live here too: a Lanczos gamma function, the momentum series
constant, and a power-iteration spectral norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import diameter_bound
from .objectives import Objective
from .oracles import NoiseModel, noise_constants

__all__ = [
    "BoundConstants",
    "BoundCurve",
    "spectral_norm",
    "gamma_fn",
    "k_constant",
    "theorem1_bound",
    "theorem2_bound",
    "theorem3_bound",
    "theorem4_bound",
    "theorem5_bound",
    "momentum_series_check",
    "constants_for",
    "save_bound_curve",
    "load_bound_curve",
]

ONE_MINUS_INV_E = 1.0 - math.exp(-1.0)

# Lanczos approximation, g = 7 with 9 coefficients (double precision set)
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def spectral_norm(h_matrix, max_iter: int = 100000, tol: float = 1e-12) -> float:
    """Largest singular value of a square matrix.

    Power iteration on ``H' H`` with Rayleigh-quotient stopping (three
    consecutive relative changes below ``tol``); restarts with a fresh
    random vector if the iterate collapses.  Raises after ``max_iter``
    iterations without convergence.
    """
    h = np.asarray(h_matrix, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("spectral_norm expects a square matrix")
    if not np.all(np.isfinite(h)):
        raise ValueError("matrix entries must be finite")
    if np.all(h == 0.0):
        return 0.0
    b = h.T @ h
    rng = np.random.default_rng(0x5EC7)
    v = rng.standard_normal(h.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    calm = 0
    for _ in range(max_iter):
        w = b @ v
        norm_w = float(np.linalg.norm(w))
        if norm_w < 1e-300:
            v = rng.standard_normal(h.shape[0])
            v /= np.linalg.norm(v)
            calm = 0
            continue
        lam_new = float(v @ w)
        v = w / norm_w
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            calm += 1
            if calm >= 3:
                return math.sqrt(max(lam_new, 0.0))
        else:
            calm = 0
        lam = lam_new
    raise RuntimeError(f"power iteration did not converge in {max_iter} iterations")


def gamma_fn(x: float) -> float:
    """Gamma function for ``x > 0`` (Lanczos approximation, ~1e-14 relative).

    Integer arguments use the factorial identity so values such as
    ``gamma_fn(2.0) == 1.0`` hold exactly.
    """
    x = float(x)
    if x <= 0.0:
        raise ValueError("gamma_fn is defined for x > 0 only")
    if x == math.floor(x) and x <= 170.0:
        return float(math.factorial(int(x) - 1))
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * gamma_fn(1.0 - x))
    z = x - 1.0
    acc = _LANCZOS_COEF[0]
    for i in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * math.exp(-t) * acc


def k_constant(alpha: float) -> float:
    """Momentum series constant ``(1/(1-alpha)) * Gamma(1/(1-alpha))``."""
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    inv = 1.0 / (1.0 - alpha)
    return inv * gamma_fn(inv)


def momentum_series_check(alpha: float, T: int) -> float:
    """Partial sum ``sum_{t=1..T} (1 - t^-alpha)^t``; never exceeds
    ``k_constant(alpha)``."""
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    t = np.arange(1, T + 1, dtype=float)
    return float(np.sum((1.0 - t ** -alpha) ** t))


@dataclass(frozen=True)
class BoundConstants:
    """Problem constants consumed by the bound evaluators.

    ``lipschitz``   smoothness constant of the exact gradient
    ``diameter``    bound on the feasible region's Euclidean diameter
    ``noise_bound`` worst-case gradient error norm (may be inf)
    ``noise_sigma`` total standard deviation of the gradient error
    ``opt``         optimum value or an approximation of it
    ``grad0_norm``  gradient-estimate error norm at the start (origin,
                    zero-initialized momentum)
    """

    lipschitz: float
    diameter: float
    noise_bound: float = 0.0
    noise_sigma: float = 0.0
    opt: float = 1.0
    grad0_norm: float = 0.0

    def __post_init__(self):
        if self.lipschitz < 0 or self.diameter < 0:
            raise ValueError("lipschitz and diameter must be nonnegative")
        if self.noise_bound < 0 or self.noise_sigma < 0 or self.grad0_norm < 0:
            raise ValueError("noise constants must be nonnegative")
        if self.opt <= 0:
            raise ValueError("opt must be positive")


def constants_for(objective: Objective, noise: NoiseModel, opt: float,
                  g_max: float | None = None) -> BoundConstants:
    """Assemble bound constants from an objective and a noise model.

    Smoothness comes from the spectral norm of the Hessian at the origin
    (where both benchmark families attain their entrywise-largest Hessian),
    the diameter from the box bound, and the start error from the exact
    gradient at the origin.
    """
    m_bound, sigma = noise_constants(noise, objective.dim, g_max=g_max)
    return BoundConstants(
        lipschitz=spectral_norm(objective.hessian(np.zeros(objective.dim))),
        diameter=diameter_bound(objective.polytope),
        noise_bound=m_bound,
        noise_sigma=sigma,
        opt=opt,
        grad0_norm=float(np.linalg.norm(objective.grad(np.zeros(objective.dim)))),
    )


def _as_T(T):
    t = np.asarray(T, dtype=float)
    if np.any(t < 1):
        raise ValueError("T must be at least 1")
    return t


def _maybe_scalar(value, T):
    return float(value) if np.isscalar(T) or np.ndim(T) == 0 else value


def _check_delta_unit(delta: float) -> None:
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")


def theorem1_bound(c: BoundConstants, T, delta: float):
    """Lower bound on the running average value of projected ascent with
    diminishing steps, holding with probability at least ``1 - delta``.

    Requires a finite worst-case gradient error ``noise_bound``.
    """
    _check_delta_unit(delta)
    if not math.isfinite(c.noise_bound):
        raise ValueError("bounded gradient error M unavailable for this noise model")
    t = _as_T(T)
    big_c = (8.0 * (c.lipschitz + c.noise_bound) ** 2 + c.diameter**2) / 8.0
    dev = c.diameter * c.noise_bound * np.sqrt(math.log(1.0 / delta) / (2.0 * t))
    return _maybe_scalar(c.opt / 2.0 - big_c / np.sqrt(t) - dev, T)


def boosted_constants(c: BoundConstants, gamma: float = 1.0,
                      main_text_smoothness: bool = False) -> tuple[float, float]:
    """Smoothness and noise constants of the reweighted auxiliary objective.

    Returns ``(L_aux, M_aux)``.  The default smoothness is the proof-backed
    ``L (gamma + exp(-gamma) - 1) / gamma^2``; the flag switches to the
    looser ``L (1 + 1/e)`` variant.
    """
    if not (0.0 < gamma <= 1.0):
        raise ValueError("gamma must lie in (0, 1]")
    shrink = (1.0 - math.exp(-gamma)) / gamma
    m_aux = (c.noise_bound + 2.0 * c.lipschitz * c.diameter) * shrink
    if main_text_smoothness:
        l_aux = c.lipschitz * (1.0 + math.exp(-1.0))
    else:
        l_aux = c.lipschitz * (gamma + math.exp(-gamma) - 1.0) / gamma**2
    return l_aux, m_aux


def theorem2_bound(c: BoundConstants, T, delta: float, gamma: float = 1.0,
                   main_text_smoothness: bool = False):
    """Lower bound on the running average value of boosted projected ascent,
    holding with probability at least ``1 - delta``; approaches
    ``(1 - exp(-gamma)) * opt``."""
    _check_delta_unit(delta)
    if not math.isfinite(c.noise_bound):
        raise ValueError("bounded gradient error M unavailable for this noise model")
    t = _as_T(T)
    l_aux, m_aux = boosted_constants(c, gamma, main_text_smoothness)
    big_c = (8.0 * (l_aux * c.diameter + m_aux) ** 2 + c.diameter**2) / 8.0
    dev = c.diameter * m_aux * np.sqrt(math.log(1.0 / delta) / (2.0 * t))
    asymptote = (1.0 - math.exp(-gamma)) * c.opt
    return _maybe_scalar(asymptote - big_c / np.sqrt(t) - dev, T)


def _chebyshev_prob(T, delta: float):
    return np.maximum(0.0, 1.0 - np.asarray(T, dtype=float) / delta**2)


def theorem3_bound(c: BoundConstants, T, delta: float):
    """(bound, probability) for the final iterate of momentum Frank-Wolfe
    under bounded gradient variance; the bound holds with the returned
    probability ``max(0, 1 - T / delta^2)``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    t = _as_T(T)
    q = max(c.grad0_norm**2 * 9.0 ** (2.0 / 3.0),
            16.0 * c.noise_sigma**2 + 3.0 * c.lipschitz**2 * c.diameter**2)
    bound = (ONE_MINUS_INV_E * c.opt
             - delta * 2.0 * math.sqrt(q) * c.diameter / t ** (1.0 / 3.0)
             - c.lipschitz * c.diameter**2 / (2.0 * t**2))
    return _maybe_scalar(bound, T), _maybe_scalar(_chebyshev_prob(t, delta), T)


def theorem4_bound(c: BoundConstants, T, delta: float, alpha: float = 0.5):
    """Lower bound on the final iterate of momentum Frank-Wolfe with
    ``rho_t = t^-alpha`` under sub-Gaussian gradient noise, holding with
    probability at least ``1 - delta``."""
    _check_delta_unit(delta)
    t = _as_T(T)
    k = k_constant(alpha)
    dev = 2.0 * c.diameter * k * c.noise_sigma * math.sqrt(math.log(1.0 / delta)) / np.sqrt(t)
    curv = (4.0 * k + 1.0) / 2.0 * c.lipschitz * c.diameter**2 / t
    return _maybe_scalar(ONE_MINUS_INV_E * c.opt - dev - curv, T)


def theorem5_bound(c: BoundConstants, T, delta: float, main_text_exponent: bool = False):
    """(bound, probability) for the final iterate of the variance-reduced
    greedy.  The default deficit is ``delta L D^2 / T`` (the proof-backed
    form, consistent with the fixed-confidence corollary); the flag switches
    to the ``delta L D^2 / T^2`` variant."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    t = _as_T(T)
    ld2 = c.lipschitz * c.diameter**2
    denom = t**2 if main_text_exponent else t
    bound = ONE_MINUS_INV_E * c.opt - delta * ld2 / denom - ld2 / (2.0 * t**2)
    return _maybe_scalar(bound, T), _maybe_scalar(_chebyshev_prob(t, delta), T)


@dataclass(frozen=True)
class BoundCurve:
    """An evaluated theoretical lower bound per iteration count."""

    label: str
    t: np.ndarray
    bound: np.ndarray
    prob: np.ndarray | None = None
    meta: tuple = ()

    def at(self, t_query: int) -> float:
        idx = np.flatnonzero(self.t == t_query)
        if idx.size == 0:
            raise ValueError(f"bound curve has no entry for t={t_query}")
        return float(self.bound[idx[0]])


def save_bound_curve(path, curve: BoundCurve) -> None:
    """CSV ``t,bound_value,prob`` (prob empty when not applicable), with the
    evaluation constants echoed in ``#`` comment lines."""
    with open(path, "w") as fh:
        fh.write(f"# {curve.label}\n")
        for key, value in curve.meta:
            fh.write(f"# {key}={value:.17g}\n" if isinstance(value, float)
                     else f"# {key}={value}\n")
        fh.write("t,bound_value,prob\n")
        for i, t in enumerate(curve.t):
            prob = "" if curve.prob is None else f"{curve.prob[i]:.17g}"
            fh.write(f"{int(t)},{curve.bound[i]:.17g},{prob}\n")


def load_bound_curve(path) -> BoundCurve:
    label = "bound"
    meta = []
    ts, bs, ps = [], [], []
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    for ln in lines:
        if ln.startswith("# "):
            body = ln[2:]
            if "=" in body:
                key, _, val = body.partition("=")
                meta.append((key, val))
            else:
                label = body
        elif ln and not ln.startswith("t,"):
            t, b, p = ln.split(",")
            ts.append(int(t))
            bs.append(float(b))
            ps.append(float(p) if p else math.nan)
    prob = np.array(ps)
    return BoundCurve(
        label=label,
        t=np.array(ts),
        bound=np.array(bs),
        prob=None if np.all(np.isnan(prob)) else prob,
        meta=tuple(meta),
    )
