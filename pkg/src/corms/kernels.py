"""Mixture kernels and the normal-inverse-gamma base measure.

Atoms carry theta = (zeta, s2). The Gaussian kernel reads them as mean and
variance; the log-normal kernel as log-mean and log-variance, which is the
Gaussian kernel on log y with the change-of-variable factor 1/y. Using the
log scale keeps the normal-inverse-gamma updates conjugate for both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

__all__ = [
    "KernelSpec",
    "NigParams",
    "BaseMeasureSpec",
    "nig_sample_atoms",
    "nig_conjugate_update",
    "nig_sample_posterior_atom",
    "sample_m0",
    "sample_k0",
    "sample_b0",
    "refresh_hypers",
]

_LOG_TWO_PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class KernelSpec:
    """Observation kernel: variant in {gaussian, lognormal}."""

    variant: str = "gaussian"

    def __post_init__(self) -> None:
        if self.variant not in ("gaussian", "lognormal"):
            raise ValueError(f"unknown kernel variant {self.variant!r}")

    @property
    def positive_support(self) -> bool:
        return self.variant == "lognormal"

    def validate_data(self, y: np.ndarray) -> None:
        if not np.all(np.isfinite(y)):
            raise ValueError("observations must be finite")
        if self.positive_support and np.any(y <= 0.0):
            raise ValueError("log-normal kernel requires positive data")

    def to_latent(self, y: np.ndarray) -> np.ndarray:
        """Map data to the scale on which atoms are Gaussian."""
        y = np.asarray(y, dtype=float)
        return np.log(y) if self.variant == "lognormal" else y

    def latent_log_density(self, t: np.ndarray, zeta: np.ndarray,
                           var: np.ndarray) -> np.ndarray:
        """Gaussian log density of latent values as (observations, atoms).

        Omits the data-scale Jacobian, which is constant per observation
        and cancels wherever atoms compete for the same observation.
        """
        t = np.asarray(t, dtype=float)[:, None]
        var = np.asarray(var, dtype=float)[None, :]
        zeta = np.asarray(zeta, dtype=float)[None, :]
        return -0.5 * (_LOG_TWO_PI + np.log(var)) - (t - zeta) ** 2 / (2.0 * var)

    def log_density(self, y: np.ndarray, zeta: np.ndarray,
                    var: np.ndarray) -> np.ndarray:
        """log K(y_i | theta_a) as an (observations, atoms) matrix."""
        y = np.asarray(y, dtype=float)
        out = self.latent_log_density(self.to_latent(y), zeta, var)
        if self.variant == "lognormal":
            out = out - np.log(y)[:, None]
        return out

    def upper_tail(self, c: float, zeta: np.ndarray,
                   var: np.ndarray) -> np.ndarray:
        """P(Y > c | theta_a) per atom."""
        zeta = np.asarray(zeta, dtype=float)
        sd = np.sqrt(np.asarray(var, dtype=float))
        if self.variant == "lognormal":
            if c <= 0.0:
                return np.ones_like(zeta)
            return stats.norm.sf((math.log(c) - zeta) / sd)
        return stats.norm.sf((c - zeta) / sd)


@dataclass(frozen=True)
class NigParams:
    """Normal-inverse-gamma parameters: zeta | s2 ~ N(m0, s2/k0), s2 ~
    InvGamma(a0, b0)."""

    m0: float
    k0: float
    a0: float
    b0: float

    def __post_init__(self) -> None:
        if not all(
            math.isfinite(v) for v in (self.m0, self.k0, self.a0, self.b0)
        ):
            raise ValueError("normal-inverse-gamma parameters must be finite")
        if min(self.k0, self.a0, self.b0) <= 0.0:
            raise ValueError("k0, a0, b0 must be positive")


@dataclass(frozen=True)
class BaseMeasureSpec:
    """Hyperpriors: m0 ~ N(m1, s1sq), k0 ~ Gamma(a1, b1), b0 ~ Gamma(c1, d1);
    a0 stays fixed. update_hypers=False freezes (m0, k0, b0) instead."""

    a0: float = 2.0
    m1: float = 0.0
    s1sq: float = 10.0
    a1: float = 2.0
    b1: float = 2.0
    c1: float = 2.0
    d1: float = 2.0
    update_hypers: bool = True

    def __post_init__(self) -> None:
        if min(self.a0, self.s1sq, self.a1, self.b1, self.c1, self.d1) <= 0.0:
            raise ValueError("hyperprior scales must be positive")


def nig_sample_atoms(params: NigParams, n: int,
                     rng: np.random.Generator) -> np.ndarray:
    """n iid draws of (zeta, s2) from the base measure, as an (n, 2) array."""
    s2 = params.b0 / rng.gamma(params.a0, 1.0, size=n)
    zeta = rng.normal(params.m0, np.sqrt(s2 / params.k0))
    return np.column_stack([zeta, s2])


def nig_conjugate_update(params: NigParams, values: np.ndarray) -> NigParams:
    """Posterior parameters given Gaussian observations with atom (zeta, s2).

    m0* = (k0 m0 + n ybar) / (k0 + n), k0* = k0 + n, a0* = a0 + n/2,
    b0* = b0 + sum (y - ybar)^2 / 2 + k0 n (ybar - m0)^2 / (2 (k0 + n)).
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    if n == 0:
        return params
    ybar = float(values.mean())
    ss = float(np.sum((values - ybar) ** 2))
    k_new = params.k0 + n
    return NigParams(
        m0=(params.k0 * params.m0 + n * ybar) / k_new,
        k0=k_new,
        a0=params.a0 + 0.5 * n,
        b0=params.b0
        + 0.5 * ss
        + 0.5 * params.k0 * n * (ybar - params.m0) ** 2 / k_new,
    )


def nig_sample_posterior_atom(params: NigParams, values: np.ndarray,
                              rng: np.random.Generator) -> tuple[float, float]:
    """One draw of (zeta, s2) from the conjugate full conditional."""
    post = nig_conjugate_update(params, values)
    s2 = post.b0 / rng.gamma(post.a0, 1.0)
    zeta = rng.normal(post.m0, math.sqrt(s2 / post.k0))
    return float(zeta), float(s2)


def sample_m0(params: NigParams, spec: BaseMeasureSpec, zeta_star: np.ndarray,
              var_star: np.ndarray, rng: np.random.Generator) -> float:
    """Full conditional of m0 given the distinct atoms: Gaussian."""
    prec = 1.0 / spec.s1sq + params.k0 * float(np.sum(1.0 / var_star))
    mean = (
        spec.m1 / spec.s1sq
        + params.k0 * float(np.sum(zeta_star / var_star))
    ) / prec
    return float(rng.normal(mean, math.sqrt(1.0 / prec)))


def sample_k0(params: NigParams, spec: BaseMeasureSpec, zeta_star: np.ndarray,
              var_star: np.ndarray, rng: np.random.Generator) -> float:
    """Full conditional of k0: Gamma, since each zeta* has precision k0/s2*."""
    shape = spec.a1 + 0.5 * zeta_star.size
    rate = spec.b1 + 0.5 * float(
        np.sum((zeta_star - params.m0) ** 2 / var_star)
    )
    return float(rng.gamma(shape, 1.0 / rate))


def sample_b0(params: NigParams, spec: BaseMeasureSpec,
              var_star: np.ndarray, rng: np.random.Generator) -> float:
    """Full conditional of b0: Gamma with rate d1 + sum 1/s2*."""
    shape = spec.c1 + spec.a0 * var_star.size
    rate = spec.d1 + float(np.sum(1.0 / var_star))
    return float(rng.gamma(shape, 1.0 / rate))


def refresh_hypers(params: NigParams, spec: BaseMeasureSpec,
                   theta_star: np.ndarray,
                   rng: np.random.Generator) -> NigParams:
    """Resample (m0, k0, b0) from their conjugate full conditionals."""
    if not spec.update_hypers or theta_star.shape[0] == 0:
        return params
    zeta_star = theta_star[:, 0]
    var_star = theta_star[:, 1]
    m0 = sample_m0(params, spec, zeta_star, var_star, rng)
    params = replace(params, m0=m0)
    k0 = sample_k0(params, spec, zeta_star, var_star, rng)
    params = replace(params, k0=k0)
    b0 = sample_b0(params, spec, var_star, rng)
    return replace(params, b0=b0)
