"""Seeded stochastic gradient/Hessian oracles wrapping an objective.

A noise model describes the perturbation applied to each query and carries
the constants (worst-case error bound, total standard deviation) that the
bound evaluators consume.  Every trial owns one ``OracleStream`` whose
generator is derived from ``(master_seed, run_id)``, so reruns are
reproducible regardless of scheduling.

Stream contract: all randomness of a trial (noise draws plus any sampling
the solver performs) comes from the stream's single numpy ``Generator`` in
query order.  Identical ``(master_seed, run_id)`` and an identical query
sequence therefore reproduce identical realizations bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .objectives import Objective

__all__ = ["NoiseModel", "OracleStream", "noise_constants"]

_KINDS = ("none", "gaussian_fixed", "gaussian_prop", "clipped_gaussian")


@dataclass(frozen=True)
class NoiseModel:
    """Additive perturbation of gradient and Hessian queries.

    kinds:
      ``none``              exact oracle
      ``gaussian_fixed``    per-coordinate N(0, sigma^2)
      ``gaussian_prop``     per-coordinate N(0, (scale * ||grad|| / n)^2),
                            using the true gradient norm at the query point
      ``clipped_gaussian``  per-coordinate clip(N(0, sigma), -2 sigma, 2 sigma)

    ``hessian_sigma`` is the per-entry deviation of the symmetric noise added
    to Hessian queries; it defaults to ``sigma / 10``.
    """

    kind: str = "none"
    sigma: float = 0.0
    scale: float = 0.0
    hessian_sigma: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0 or self.scale < 0:
            raise ValueError("sigma and scale must be nonnegative")
        if self.hessian_sigma is None:
            object.__setattr__(self, "hessian_sigma", 0.1 * self.sigma)
        elif self.hessian_sigma < 0:
            raise ValueError("hessian_sigma must be nonnegative")

    @classmethod
    def none(cls) -> "NoiseModel":
        return cls("none", hessian_sigma=0.0)

    @classmethod
    def gaussian_fixed(cls, sigma: float, hessian_sigma: float | None = None) -> "NoiseModel":
        return cls("gaussian_fixed", sigma=sigma, hessian_sigma=hessian_sigma)

    @classmethod
    def gaussian_prop(cls, scale: float, hessian_sigma: float | None = None) -> "NoiseModel":
        return cls("gaussian_prop", scale=scale,
                   hessian_sigma=0.0 if hessian_sigma is None else hessian_sigma)

    @classmethod
    def clipped_gaussian(cls, sigma: float, hessian_sigma: float | None = None) -> "NoiseModel":
        return cls("clipped_gaussian", sigma=sigma, hessian_sigma=hessian_sigma)


def noise_constants(nm: NoiseModel, n: int, g_max: float | None = None) -> tuple[float, float]:
    """Constants ``(M, sigma_total)`` of a noise model in dimension ``n``.

    ``M`` bounds the Euclidean norm of the gradient error on every draw
    (infinite for unclipped Gaussians) and ``sigma_total`` bounds its total
    standard deviation.  The gradient-proportional model has state-dependent
    variance, so its ``sigma_total`` is the upper estimate
    ``scale * g_max / sqrt(n)`` and requires a gradient-norm bound ``g_max``.
    """
    if n < 1:
        raise ValueError("dimension must be positive")
    if nm.kind == "none":
        return 0.0, 0.0
    if nm.kind == "gaussian_fixed":
        return math.inf, nm.sigma * math.sqrt(n)
    if nm.kind == "clipped_gaussian":
        return 2.0 * nm.sigma * math.sqrt(n), nm.sigma * math.sqrt(n)
    if g_max is None:
        raise ValueError(
            "state-dependent noise: supply G_max, a bound on the gradient norm"
        )
    return math.inf, nm.scale * g_max / math.sqrt(n)


class OracleStream:
    """Single-owner stochastic oracle; the generator advances on every query."""

    def __init__(self, objective: Objective, noise: NoiseModel, master_seed: int, run_id: int):
        self.objective = objective
        self.noise = noise
        self.master_seed = int(master_seed)
        self.run_id = int(run_id)
        self.rng = np.random.default_rng(
            np.random.SeedSequence(entropy=self.master_seed, spawn_key=(self.run_id,))
        )

    def grad(self, x) -> np.ndarray:
        """Unbiased noisy gradient at ``x``."""
        g = self.objective.grad(x)
        kind = self.noise.kind
        if kind == "none":
            return g
        n = g.size
        if kind == "gaussian_fixed":
            return g + self.rng.normal(0.0, self.noise.sigma, size=n)
        if kind == "clipped_gaussian":
            s = self.noise.sigma
            z = self.rng.normal(0.0, s, size=n)
            return g + np.clip(z, -2.0 * s, 2.0 * s)
        sd = self.noise.scale * float(np.linalg.norm(g)) / n
        if sd == 0.0:  # stationary query point: no draw consumed
            return g.copy()
        return g + self.rng.normal(0.0, sd, size=n)

    def hessian(self, x) -> np.ndarray:
        """Unbiased noisy Hessian at ``x``; the perturbation is symmetric with
        i.i.d. upper-triangle entries mirrored below the diagonal."""
        try:
            h = self.objective.hessian(x)
        except NotImplementedError:
            raise ValueError("objective does not provide Hessian access") from None
        hs = self.noise.hessian_sigma
        if hs == 0.0:
            return h
        n = h.shape[0]
        iu = np.triu_indices(n)
        z = np.zeros((n, n))
        z[iu] = self.rng.normal(0.0, hs, size=iu[0].size)
        z = z + np.triu(z, 1).T
        return h + z
