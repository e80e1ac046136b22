"""Prior objects: directing measures, score distributions, trajectories.

A compound random measure (CoRM) vector is built from one driving completely
random measure with Levy intensity nu*(dz) alpha(dx) and independent positive
scores attached per group: mu_j = sum_i m_{j,i} J_i delta_{x_i}. The nested
variant draws one shared trajectory, one score row per mixture component, and
assigns each group to a component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateMeasureError, JumpCapError
from .numerics import (
    QuadratureSpec,
    RootFindSpec,
    invert_monotone_tail,
    log_gamma,
    semi_infinite_integral,
)

__all__ = [
    "GammaScores",
    "StableDirecting",
    "BetaDirecting",
    "directing_measure",
    "CrmTrajectory",
    "CormVector",
    "NestedCormDraw",
    "fk_prior_trajectory",
    "attach_scores",
    "sample_nested_prior",
    "normalize",
    "marginal_levy_intensity",
]


@dataclass(frozen=True)
class GammaScores:
    """Score distribution m ~ Gamma(phi, 1), the product-form kernel case."""

    phi: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.phi) and self.phi > 0.0):
            raise ValueError(f"phi must be positive, got {self.phi!r}")

    def density(self, m: np.ndarray) -> np.ndarray:
        m = np.asarray(m, dtype=float)
        out = np.zeros_like(m)
        pos = m > 0.0
        out[pos] = np.exp(
            (self.phi - 1.0) * np.log(m[pos]) - m[pos] - log_gamma(self.phi)
        )
        return out

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.gamma(self.phi, 1.0, size=size)

    def log_laplace(self, t: np.ndarray) -> np.ndarray:
        """log E[exp(-t m)] = -phi * log(1 + t)."""
        return -self.phi * np.log1p(np.asarray(t, dtype=float))

    def log_tilted_moment(self, t: np.ndarray, n: int) -> np.ndarray:
        """log integral exp(-t m) m^n f(m) dm = log (phi)_n - (phi+n) log(1+t)."""
        t = np.asarray(t, dtype=float)
        log_poch = log_gamma(self.phi + n) - log_gamma(self.phi)
        return log_poch - (self.phi + n) * np.log1p(t)

    @property
    def mean(self) -> float:
        return self.phi

    @property
    def cv_squared(self) -> float:
        """Squared coefficient of variation, var/mean^2 = 1/phi."""
        return 1.0 / self.phi


@dataclass(frozen=True)
class StableDirecting:
    """nu*(dz) = sigma Gamma(phi) / (Gamma(sigma+phi) Gamma(1-sigma)) z^{-1-sigma} dz.

    This normalization makes each group marginal of the gamma-score CoRM a
    sigma-stable CRM: nu_j(ds) = sigma s^{-1-sigma} / Gamma(1-sigma) ds,
    free of phi.
    """

    sigma: float
    phi: float

    def __post_init__(self) -> None:
        if not (0.0 < self.sigma < 1.0):
            raise ValueError(f"sigma must lie in (0, 1), got {self.sigma!r}")
        if not (math.isfinite(self.phi) and self.phi > 0.0):
            raise ValueError(f"phi must be positive, got {self.phi!r}")

    @property
    def support_upper(self) -> float:
        return math.inf

    @property
    def log_constant(self) -> float:
        return (
            math.log(self.sigma)
            + log_gamma(self.phi)
            - log_gamma(self.sigma + self.phi)
            - log_gamma(1.0 - self.sigma)
        )

    def log_density(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return self.log_constant - (1.0 + self.sigma) * np.log(z)

    def density(self, z: np.ndarray) -> np.ndarray:
        return np.exp(self.log_density(z))

    def tail_mass(self, z) -> np.ndarray:
        """integral_z^inf nu*(ds) = (c / sigma) z^{-sigma}, closed form."""
        z = np.asarray(z, dtype=float)
        return np.exp(self.log_constant - math.log(self.sigma)
                      - self.sigma * np.log(z))

    def inverse_tail(self, target) -> np.ndarray:
        """Closed-form inverse of tail_mass, vectorized over targets."""
        target = np.asarray(target, dtype=float)
        log_z = (self.log_constant - math.log(self.sigma) - np.log(target)) / self.sigma
        return np.exp(log_z)

    def truncated_mean_mass(self, eps: float) -> float:
        """integral_0^eps z nu*(dz) = c eps^{1-sigma} / (1-sigma)."""
        return math.exp(
            self.log_constant + (1.0 - self.sigma) * math.log(eps)
        ) / (1.0 - self.sigma)


_BETA_GL_X, _BETA_GL_W = np.polynomial.legendre.leggauss(24)
_BETA_SERIES_K = np.arange(144.0)


@dataclass(frozen=True)
class BetaDirecting:
    """nu*(dz) = z^{-1} (1-z)^{phi-1} dz on (0, 1).

    With gamma scores the group marginals are gamma processes:
    nu_j(ds) = s^{-1} e^{-s} ds. The tail integral splits at z = 1/2: above
    it a positive-term series in (1-z) handles the (1-z)^{phi-1} endpoint,
    below it Gauss-Legendre panels in w = log(1/(2z)) integrate the analytic
    function (1 - e^{-w}/2)^{phi-1}, so no adaptive quadrature is needed.
    """

    phi: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.phi) and self.phi > 0.0):
            raise ValueError(f"phi must be positive, got {self.phi!r}")

    @property
    def support_upper(self) -> float:
        return 1.0

    def log_density(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return -np.log(z) + (self.phi - 1.0) * np.log1p(-z)

    def density(self, z: np.ndarray) -> np.ndarray:
        return np.exp(self.log_density(z))

    def _tail_above_half(self, z: np.ndarray) -> np.ndarray:
        powers = self.phi + _BETA_SERIES_K
        terms = np.exp(np.log1p(-z)[..., None] * powers) / powers
        return np.sum(terms, axis=-1)

    def _tail_below_half(self, z: np.ndarray) -> np.ndarray:
        t_half = float(self._tail_above_half(np.asarray(0.5)))
        out = np.empty_like(z)
        for i, zi in enumerate(z):
            width = math.log(0.5 / zi)
            n_panels = max(1, math.ceil(width))
            edges = np.linspace(0.0, width, n_panels + 1)
            centers = 0.5 * (edges[1:] + edges[:-1])
            halves = 0.5 * (edges[1:] - edges[:-1])
            w = centers[:, None] + halves[:, None] * _BETA_GL_X[None, :]
            vals = np.exp((self.phi - 1.0) * np.log1p(-0.5 * np.exp(-w)))
            out[i] = t_half + float((vals @ _BETA_GL_W) @ halves)
        return out

    def tail_mass(self, z) -> np.ndarray:
        """integral_z^1 nu*(ds); closed form for phi = 1, series/panels otherwise."""
        z = np.asarray(z, dtype=float)
        if self.phi == 1.0:
            return -np.log(z)
        flat = np.atleast_1d(z).astype(float)
        out = np.empty_like(flat)
        hi = flat >= 0.5
        if np.any(hi):
            out[hi] = self._tail_above_half(flat[hi])
        if np.any(~hi):
            out[~hi] = self._tail_below_half(flat[~hi])
        return out if z.ndim else float(out[0])

    def inverse_tail(self, target) -> np.ndarray:
        target = np.asarray(target, dtype=float)
        if self.phi == 1.0:
            return np.exp(-target)
        spec = RootFindSpec(bracket_lo=1e-6, bracket_hi=0.5, hi_cap=1.0)
        flat = np.atleast_1d(target).astype(float)
        out = np.array(
            [invert_monotone_tail(lambda z: float(self.tail_mass(z)), float(t), spec)
             for t in flat]
        )
        return out if target.ndim else float(out[0])

    def truncated_mean_mass(self, eps: float) -> float:
        """integral_0^eps z nu*(dz) = (1 - (1-eps)^phi) / phi."""
        return -math.expm1(self.phi * math.log1p(-eps)) / self.phi


def directing_measure(kind: str, sigma: float = 0.5, phi: float = 1.0):
    """Factory for the supported directing measures."""
    if kind == "stable":
        return StableDirecting(sigma=sigma, phi=phi)
    if kind == "beta":
        return BetaDirecting(phi=phi)
    raise ValueError(f"unknown directing measure {kind!r}")


@dataclass
class CrmTrajectory:
    """Truncated trajectory of a CRM: jumps above epsilon plus their atoms."""

    jumps: np.ndarray
    atoms: np.ndarray
    epsilon: float

    def __post_init__(self) -> None:
        self.jumps = np.asarray(self.jumps, dtype=float)
        self.atoms = np.asarray(self.atoms)
        if self.jumps.ndim != 1:
            raise ValueError("jumps must be a 1-d array")
        if self.atoms.shape[:1] != self.jumps.shape:
            raise ValueError("atoms must align with jumps along the first axis")
        if self.jumps.size and (
            not np.all(np.isfinite(self.jumps)) or np.any(self.jumps <= 0.0)
        ):
            raise ValueError("jumps must be finite and strictly positive")
        if np.any(np.diff(self.jumps) > 0.0):
            raise ValueError("jumps must be non-increasing")
        if self.jumps.size and self.jumps[-1] <= self.epsilon:
            raise ValueError("all retained jumps must exceed epsilon")

    @property
    def size(self) -> int:
        return int(self.jumps.size)

    def total_mass(self) -> float:
        return float(np.sum(self.jumps))


@dataclass
class CormVector:
    """A trajectory with one score row per group: mu_j = sum m_{j,i} J_i delta."""

    trajectory: CrmTrajectory
    scores: np.ndarray

    def __post_init__(self) -> None:
        self.scores = np.asarray(self.scores, dtype=float)
        if self.scores.ndim != 2 or self.scores.shape[1] != self.trajectory.size:
            raise ValueError("scores must have shape (groups, jumps)")
        if self.scores.size and (
            not np.all(np.isfinite(self.scores)) or np.any(self.scores <= 0.0)
        ):
            raise ValueError("scores must be finite and strictly positive")

    @property
    def n_groups(self) -> int:
        return int(self.scores.shape[0])

    def group_masses(self) -> np.ndarray:
        return self.scores @ self.trajectory.jumps


@dataclass
class NestedCormDraw:
    """Shared trajectory, per-component scores, weights pi, group labels."""

    trajectory: CrmTrajectory
    scores: np.ndarray  # (q, jumps)
    pi: np.ndarray  # (q,)
    labels: np.ndarray  # (d,) values in 0..q-1

    def component_vector(self) -> CormVector:
        return CormVector(self.trajectory, self.scores)

    def group_weights(self, j: int) -> np.ndarray:
        """Normalized weights of group j's measure (its component's measure)."""
        row = self.scores[self.labels[j]]
        return normalize_weights(row * self.trajectory.jumps)


def _strictly_decreasing(jumps: np.ndarray) -> np.ndarray:
    """Break rare representation ties so sorted jumps strictly decrease."""
    for i in range(1, jumps.size):
        if jumps[i] >= jumps[i - 1]:
            jumps[i] = np.nextafter(jumps[i - 1], 0.0)
    return jumps


def _waiting_times(rng: np.random.Generator, total: float, max_jumps: int) -> np.ndarray:
    """Standard-Poisson arrival times below `total`, drawn in blocks."""
    times = []
    level = 0.0
    count = 0
    block = max(16, int(total + 10.0 * math.sqrt(max(total, 1.0)) + 16.0))
    while True:
        gaps = rng.exponential(size=block)
        arrivals = level + np.cumsum(gaps)
        inside = arrivals[arrivals < total]
        times.append(inside)
        count += inside.size
        if count > max_jumps:
            raise JumpCapError(
                f"trajectory exceeded the jump cap of {max_jumps} above epsilon"
            )
        if inside.size < arrivals.size:
            return np.concatenate(times) if times else np.empty(0)
        level = float(arrivals[-1])
        block = max(16, block // 4)


def fk_prior_trajectory(
    dm,
    base_sampler: Callable[[np.random.Generator, int], np.ndarray],
    epsilon: float,
    rng: np.random.Generator,
    max_jumps: int = 100_000,
    force_numeric_inverse: bool = False,
) -> CrmTrajectory:
    """Ferguson-Klass draw of the driving CRM truncated at jump size epsilon.

    Jumps are placed at successive standard-Poisson waiting times S_1 < S_2 <
    ... and inverted through the decreasing tail of nu*; generation stops at
    the first jump at or below epsilon, equivalently at the first waiting
    time past tail_mass(epsilon).
    """
    if not (epsilon > 0.0 and math.isfinite(epsilon)):
        raise ValueError("epsilon must be positive and finite")
    if epsilon >= dm.support_upper:
        raise ValueError("epsilon must lie inside the support of nu*")
    total = float(dm.tail_mass(epsilon))
    times = _waiting_times(rng, total, max_jumps)
    if not force_numeric_inverse and hasattr(dm, "inverse_tail"):
        jumps = np.asarray(dm.inverse_tail(times), dtype=float)
    else:
        spec = RootFindSpec(
            bracket_lo=max(epsilon, 1e-12),
            bracket_hi=max(2.0 * epsilon, 1.0)
            if math.isinf(dm.support_upper)
            else 0.5 * (epsilon + dm.support_upper),
            hi_cap=dm.support_upper,
        )
        jumps = np.array(
            [invert_monotone_tail(lambda z: float(dm.tail_mass(z)), float(t), spec)
             for t in times]
        )
    # waiting times are strictly increasing, so jumps are strictly decreasing
    # up to root-finder resolution
    jumps = _strictly_decreasing(jumps)
    atoms = base_sampler(rng, jumps.size)
    return CrmTrajectory(jumps=jumps, atoms=np.asarray(atoms), epsilon=epsilon)


def attach_scores(
    trajectory: CrmTrajectory,
    sd: GammaScores,
    n_groups: int,
    rng: np.random.Generator,
) -> CormVector:
    """Draw i.i.d. Gamma(phi, 1) scores, one row per group."""
    if n_groups < 1:
        raise ValueError("need at least one group")
    scores = sd.sample(rng, size=(n_groups, trajectory.size))
    return CormVector(trajectory=trajectory, scores=scores)


def sample_nested_prior(
    q: int,
    beta: float,
    dm,
    sd: GammaScores,
    n_groups: int,
    base_sampler: Callable[[np.random.Generator, int], np.ndarray],
    epsilon: float,
    rng: np.random.Generator,
    max_jumps: int = 100_000,
) -> NestedCormDraw:
    """One draw of the nested prior: shared atoms, q score rows, labels."""
    if q < 1:
        raise ValueError("q must be at least 1")
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    trajectory = fk_prior_trajectory(dm, base_sampler, epsilon, rng, max_jumps)
    scores = sd.sample(rng, size=(q, trajectory.size))
    pi = rng.dirichlet(np.full(q, beta))
    labels = rng.choice(q, size=n_groups, p=pi)
    return NestedCormDraw(trajectory=trajectory, scores=scores, pi=pi, labels=labels)


def normalize_weights(masses: np.ndarray) -> np.ndarray:
    masses = np.asarray(masses, dtype=float)
    total = float(np.sum(masses))
    if not (total > 0.0 and math.isfinite(total)):
        raise DegenerateMeasureError(
            f"cannot normalize a measure with total mass {total!r}"
        )
    return masses / total


def normalize(cv: CormVector, j: int) -> np.ndarray:
    """Normalized weights of group j: m_{j,i} J_i / sum_r m_{j,r} J_r."""
    if not 0 <= j < cv.n_groups:
        raise ValueError(f"group index {j} out of range")
    return normalize_weights(cv.scores[j] * cv.trajectory.jumps)


def marginal_levy_intensity(
    dm,
    sd: GammaScores,
    s: float,
    quad: QuadratureSpec | None = None,
) -> float:
    """Group-marginal intensity nu_j(s) = integral z^{-1} f(s/z) nu*(dz).

    Evaluated in the score variable t = s/z, where the integrand is a tilted
    gamma density with its peak at a known location, so the adaptive rule can
    be seeded reliably.
    """
    if not (s > 0.0 and math.isfinite(s)):
        raise ValueError("s must be positive and finite")
    quad = quad or QuadratureSpec()
    if quad.transform != "arctan_halfline":
        quad = QuadratureSpec(
            abs_tol=quad.abs_tol, rel_tol=quad.rel_tol,
            node_count=quad.node_count, max_panels=quad.max_panels,
        )

    def integrand(t: np.ndarray) -> np.ndarray:
        return sd.density(t) * dm.density(s / t) / t

    lower = 0.0 if math.isinf(dm.support_upper) else s
    peak = max(sd.phi, 1.0) + lower
    edges = peak * np.power(2.0, np.arange(-6.0, 7.0))
    return semi_infinite_integral(integrand, quad, lower=lower, initial_edges=edges)
