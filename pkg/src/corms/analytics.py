"""Dependence diagnostics and posterior functionals.

The closed forms here (across-group weight correlation, expected
Kullback-Leibler divergence between the baseline and a group density)
describe the prior; the draw-level functionals (mixture densities on a
grid, exceedance probabilities) map one sampler state to one posterior
functional draw, and DensityGrid aggregates such draws into pointwise
summaries.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, gammaln

from .errors import (
    DegenerateMeasureError,
    UnsupportedKernelError,
    ValidationError,
)
from .kernels import KernelSpec
from .samplers import ChainState

__all__ = [
    "weight_correlation",
    "expected_kl",
    "j_divergence",
    "DensityGrid",
    "default_grid",
    "mixture_density_draw",
    "baseline_mixture_draw",
    "exceedance_probability",
    "scalar_summary",
]

_KL_FLOOR = 1e-300


def weight_correlation(cv_score: float, jump_snr: float) -> float:
    """Correlation across groups of one shared atom's unnormalized weights.

    With scores of coefficient of variation cv and a jump law of squared
    signal-to-noise ratio snr = E[J]^2 / Var[J],

        corr(m_j J, m_l J) = 1 / (1 + cv^2 (1 + snr)),

    so degenerate scores give perfect dependence and noisier scores
    decouple the groups. Gamma(phi) scores have cv^2 = 1 / phi.
    """
    if not (math.isfinite(cv_score) and math.isfinite(jump_snr)):
        raise ValidationError("cv_score and jump_snr must be finite")
    if cv_score < 0.0 or jump_snr < 0.0:
        raise ValidationError("cv_score and jump_snr must be nonnegative")
    return 1.0 / (1.0 + cv_score**2 * (1.0 + jump_snr))


def expected_kl(sigma: float, phi: float) -> float:
    """Expected KL divergence of a group density from the baseline.

    For the stable directing measure with gamma scores the expectation
    has the closed form -psi(phi) + log(Gamma(phi + sigma) / Gamma(phi))
    / sigma. It decreases in phi and vanishes as phi grows, where every
    group's measure collapses onto the shared baseline.
    """
    if not (0.0 < sigma < 1.0):
        raise ValidationError("sigma must lie in (0, 1)")
    if not (phi > 0.0 and math.isfinite(phi)):
        raise ValidationError("phi must be positive and finite")
    return float(-digamma(phi) + (gammaln(phi + sigma) - gammaln(phi)) / sigma)


def j_divergence(h1: np.ndarray, h2: np.ndarray, grid: np.ndarray) -> float:
    """Symmetrized KL divergence 0.5 KL(h1 | h2) + 0.5 KL(h2 | h1).

    Both integrals run over the shared grid by the trapezoid rule.
    Density values below 1e-300 are clipped to that floor; when the
    counterpart density is positive there, the clip changes the value and
    a warning reports it.
    """
    h1 = np.asarray(h1, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if h1.shape != grid.shape or h2.shape != grid.shape:
        raise ValidationError("densities and grid must share one shape")
    if np.any(h1 < 0.0) or np.any(h2 < 0.0):
        raise ValidationError("densities must be nonnegative")
    if grid.size < 2 or np.any(np.diff(grid) <= 0.0):
        raise ValidationError("grid must be strictly increasing")
    clipped = ((h1 < _KL_FLOOR) & (h2 > _KL_FLOOR)) | (
        (h2 < _KL_FLOOR) & (h1 > _KL_FLOOR)
    )
    if np.any(clipped):
        warnings.warn(
            f"{int(clipped.sum())} grid points with a vanishing density "
            f"were clipped at {_KL_FLOOR:g}",
            RuntimeWarning,
            stacklevel=2,
        )
    a = np.clip(h1, _KL_FLOOR, None)
    b = np.clip(h2, _KL_FLOOR, None)
    integrand = 0.5 * (a - b) * (np.log(a) - np.log(b))
    return float(np.trapezoid(integrand, grid))


@dataclass
class DensityGrid:
    """Posterior density draws on a shared grid with pointwise summaries."""

    grid: np.ndarray
    draws: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    level: float = 0.95

    def __post_init__(self) -> None:
        self.grid = np.asarray(self.grid, dtype=float)
        self.draws = np.asarray(self.draws, dtype=float)
        if self.grid.ndim != 1 or self.grid.size < 2:
            raise ValidationError("grid must be a 1-d array of 2+ points")
        if np.any(np.diff(self.grid) <= 0.0):
            raise ValidationError("grid must be strictly increasing")
        if self.draws.size == 0:
            self.draws = self.draws.reshape(0, self.grid.size)
        if self.draws.ndim != 2 or self.draws.shape[1] != self.grid.size:
            raise ValidationError("draws must have one row per posterior draw")
        if np.any(self.draws < 0.0):
            raise ValidationError("density draws must be nonnegative")
        if not (0.0 < self.level < 1.0):
            raise ValidationError("band level must lie in (0, 1)")

    def append(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValidationError("draw shape does not match the grid")
        if np.any(values < 0.0):
            raise ValidationError("density draws must be nonnegative")
        self.draws = np.vstack([self.draws, values[None, :]])

    def summary(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pointwise mean and equal-tailed band at the configured level."""
        if self.draws.shape[0] == 0:
            raise ValidationError("no density draws to summarize")
        mean = self.draws.mean(axis=0)
        tail = 0.5 * (1.0 - self.level)
        lo = np.quantile(self.draws, tail, axis=0)
        hi = np.quantile(self.draws, 1.0 - tail, axis=0)
        return mean, lo, hi


def default_grid(
    data: np.ndarray, kernel: KernelSpec, points: int = 512
) -> np.ndarray:
    """Evaluation grid spanning the data range plus three robust SDs.

    The spread is 1.4826 times the median absolute deviation, falling
    back to the standard deviation and then to 1 for degenerate samples.
    For the log-normal kernel the grid is geometric: equally spaced on
    the log scale over the same rule applied to log data.
    """
    data = np.asarray(data, dtype=float).ravel()
    if data.size == 0:
        raise ValidationError("cannot build a grid from no data")
    kernel.validate_data(data)
    scale = kernel.to_latent(data)
    spread = 1.4826 * float(np.median(np.abs(scale - np.median(scale))))
    if spread <= 0.0:
        spread = float(np.std(scale))
    if spread <= 0.0:
        spread = 1.0
    lo = float(np.min(scale)) - 3.0 * spread
    hi = float(np.max(scale)) + 3.0 * spread
    grid = np.linspace(lo, hi, points)
    return np.exp(grid) if kernel.variant == "lognormal" else grid


def _mixture_on_grid(
    weights: np.ndarray,
    params: np.ndarray,
    kernel: KernelSpec,
    grid: np.ndarray,
) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    total = float(weights.sum())
    if not (total > 0.0 and np.isfinite(total)):
        raise DegenerateMeasureError("mixing measure has no positive mass")
    log_k = kernel.log_density(grid, params[:, 0], params[:, 1])
    return np.exp(log_k) @ (weights / total)


def mixture_density_draw(
    state: ChainState, kernel: KernelSpec, group: int, grid: np.ndarray
) -> np.ndarray:
    """One draw of group `group`'s mixture density on the grid.

    The mixing measure is the group's normalized random measure: score
    times jump weights on the continuous atoms plus the fixed-atom
    weights at the distinct kernel parameters.
    """
    weights, params = state.group_weights_and_atoms(group)
    return _mixture_on_grid(weights, params, kernel, grid)


def baseline_mixture_draw(
    state: ChainState, kernel: KernelSpec, grid: np.ndarray
) -> np.ndarray:
    """One draw of the shared baseline density on the grid.

    The baseline mixes the kernel against the normalized driving measure
    itself: plain jumps on the continuous atoms and the fixed jumps at
    the distinct kernel parameters, with no group scores. When every
    score equals one it coincides with each group's density.
    """
    weights, params = state.baseline_weights_and_atoms()
    return _mixture_on_grid(weights, params, kernel, grid)


def exceedance_probability(
    state: ChainState, kernel: KernelSpec, group: int, threshold: float
) -> float:
    """One draw of P(Y > threshold) under group `group`'s mixture.

    Defined for the log-normal kernel, where the threshold is a positive
    concentration level and each atom contributes its log-normal upper
    tail weighted by the normalized mixing measure.
    """
    if kernel.variant != "lognormal":
        raise UnsupportedKernelError(
            "exceedance probabilities are defined for the log-normal "
            f"kernel, not {kernel.variant!r}"
        )
    if not (threshold > 0.0 and math.isfinite(threshold)):
        raise ValidationError("threshold must be positive and finite")
    weights, params = state.group_weights_and_atoms(group)
    total = float(weights.sum())
    if not (total > 0.0 and np.isfinite(total)):
        raise DegenerateMeasureError("mixing measure has no positive mass")
    tails = kernel.upper_tail(threshold, params[:, 0], params[:, 1])
    return float(tails @ weights / total)


def scalar_summary(
    values: np.ndarray, level: float = 0.95
) -> tuple[float, float, float]:
    """Mean and equal-tailed interval of scalar posterior draws."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValidationError("no draws to summarize")
    if not (0.0 < level < 1.0):
        raise ValidationError("interval level must lie in (0, 1)")
    tail = 0.5 * (1.0 - level)
    return (
        float(values.mean()),
        float(np.quantile(values, tail)),
        float(np.quantile(values, 1.0 - tail)),
    )
