"""Scalar special functions, semi-infinite quadrature, and tail inversion.

The quadrature maps (0, inf) to (0, 1) through y = (2/pi) * arctan(s) and
integrates with adaptive composite Gauss-Legendre panels, so integrable
endpoint singularities (s^{-1-sigma} tails, s^{sigma-1} origins) are handled
by panel refinement without ever evaluating the endpoints themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import QuadratureError, RootFindError

__all__ = [
    "QuadratureSpec",
    "RootFindSpec",
    "log_gamma",
    "digamma",
    "semi_infinite_integral",
    "adaptive_integral",
    "invert_monotone_tail",
]

_LANCZOS_G = 7.0
_LANCZOS_C = (
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
_HALF_LOG_TWO_PI = 0.5 * math.log(2.0 * math.pi)

# psi(x) ~ ln x - 1/(2x) - sum B_{2n} / (2n x^{2n}); coefficients of x^{-2n}
_DIGAMMA_TAIL = (
    -1.0 / 12.0,
    1.0 / 120.0,
    -1.0 / 252.0,
    1.0 / 240.0,
    -1.0 / 132.0,
    691.0 / 32760.0,
    -1.0 / 12.0,
)


def log_gamma(x: float) -> float:
    """Natural log of the gamma function for x > 0 (Lanczos, g=7, 9 terms)."""
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise ValueError(f"log_gamma requires finite x > 0, got {x!r}")
    if x < 0.5:
        # reflection keeps the Lanczos sum away from its poles near zero
        return math.log(math.pi / math.sin(math.pi * x)) - log_gamma(1.0 - x)
    z = x - 1.0
    acc = _LANCZOS_C[0]
    for i, c in enumerate(_LANCZOS_C[1:], start=1):
        acc += c / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_TWO_PI + (z + 0.5) * math.log(t) - t + math.log(acc)


def digamma(x: float) -> float:
    """Digamma for x > 0: upward recurrence to x >= 8, then the tail series."""
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise ValueError(f"digamma requires finite x > 0, got {x!r}")
    acc = 0.0
    while x < 8.0:
        acc -= 1.0 / x
        x += 1.0
    inv_sq = 1.0 / (x * x)
    tail = 0.0
    power = inv_sq
    for coef in _DIGAMMA_TAIL:
        tail += coef * power
        power *= inv_sq
    return acc + math.log(x) - 0.5 / x + tail


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerance and panel policy for the adaptive composite rule."""

    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    node_count: int = 16
    transform: str = "arctan_halfline"
    max_panels: int = 4096

    def __post_init__(self) -> None:
        if self.abs_tol <= 0.0 or self.rel_tol <= 0.0:
            raise ValueError("quadrature tolerances must be positive")
        if self.node_count < 2:
            raise ValueError("node_count must be at least 2")
        if self.transform not in ("arctan_halfline", "identity_unit_interval"):
            raise ValueError(f"unknown transform {self.transform!r}")


@dataclass(frozen=True)
class RootFindSpec:
    """Bracket policy for inverting decreasing tail functions."""

    bracket_lo: float = 1e-6
    bracket_hi: float = 1.0
    tol: float = 1e-10
    max_iter: int = 200
    hi_cap: float = math.inf

    def __post_init__(self) -> None:
        if not 0.0 < self.bracket_lo < self.bracket_hi:
            raise ValueError("need 0 < bracket_lo < bracket_hi")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.bracket_hi > self.hi_cap:
            raise ValueError("bracket_hi exceeds hi_cap")


def _gauss_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(n)
    # rescale from [-1, 1] to [0, 1]
    return 0.5 * (nodes + 1.0), 0.5 * weights


def _panel_values(
    g: Callable[[np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    xi: np.ndarray,
    w: np.ndarray,
) -> np.ndarray:
    """Gauss-Legendre estimates of integral(g) over each [lo_i, hi_i]."""
    length = hi - lo
    # anchor nodes from the nearer endpoint so they stay strictly interior
    # even when the panel is a few ulps wide
    from_lo = lo[:, None] + length[:, None] * xi[None, :]
    from_hi = hi[:, None] - length[:, None] * (1.0 - xi[None, :])
    pts = np.where(xi[None, :] < 0.5, from_lo, from_hi)
    pts = np.clip(pts, np.nextafter(lo, hi)[:, None], np.nextafter(hi, lo)[:, None])
    vals = np.asarray(g(pts.ravel()), dtype=float).reshape(pts.shape)
    if not np.all(np.isfinite(vals)):
        bad = pts.ravel()[~np.isfinite(vals.ravel())][0]
        raise QuadratureError(f"integrand returned a non-finite value at node {bad!r}")
    return length * (vals @ w)


def adaptive_integral(
    g: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    spec: QuadratureSpec,
    initial_edges: np.ndarray | None = None,
) -> float:
    """Adaptive composite Gauss-Legendre integral of a vectorized integrand.

    initial_edges lets callers seed the panel layout when they know where the
    integrand varies (peaked likelihood factors); refinement proceeds from
    that layout.
    """
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise ValueError("adaptive_integral needs finite bounds with hi > lo")
    xi, w = _gauss_nodes(spec.node_count)
    if initial_edges is None:
        edges = np.linspace(lo, hi, 9)
    else:
        interior = np.asarray(initial_edges, dtype=float)
        interior = interior[(interior > lo) & (interior < hi)]
        edges = np.unique(np.concatenate([[lo], interior, [hi]]))
    los, his = edges[:-1], edges[1:]
    coarse = _panel_values(g, los, his, xi, w)
    mids = 0.5 * (los + his)
    fine = _panel_values(g, los, mids, xi, w) + _panel_values(g, mids, his, xi, w)
    err = np.abs(fine - coarse)
    prev_total = math.inf
    stable_rounds = 0
    for _ in range(300):
        total = float(np.sum(fine))
        tol = max(spec.abs_tol, spec.rel_tol * abs(total))
        # the |fine - coarse| indicator undershoots on panels converging at
        # sqrt(2) rate (endpoint singularities), so require the running total
        # to stop moving across refinement rounds as well
        if abs(total - prev_total) <= 0.125 * tol:
            stable_rounds += 1
        else:
            stable_rounds = 0
        prev_total = total
        if stable_rounds >= 2 or 8.0 * float(np.sum(err)) <= tol:
            return total
        # equidistributed budget: a length-proportional budget never clears
        # integrable endpoint singularities, so split every panel holding
        # more than its share of the error
        bad = err > tol / (32.0 * los.size)
        if not bad.any():
            bad = err >= 0.5 * err.max()
        # panels a few ulps wide cannot be refined further in double
        # precision; whatever error remains there is unreachable
        scale = np.maximum(1.0, np.maximum(np.abs(los), np.abs(his)))
        bad &= (his - los) > 16.0 * np.finfo(float).eps * scale
        if not bad.any():
            return total
        if los.size + int(bad.sum()) > spec.max_panels:
            raise QuadratureError(
                f"needed more than {spec.max_panels} panels on [{lo}, {hi}]"
            )
        b_lo, b_hi = los[bad], his[bad]
        b_mid = 0.5 * (b_lo + b_hi)
        new_lo = np.concatenate([los[~bad], b_lo, b_mid])
        new_hi = np.concatenate([his[~bad], b_mid, b_hi])
        keep_fine = fine[~bad]
        keep_err = err[~bad]
        child_coarse = _panel_values(g, np.concatenate([b_lo, b_mid]),
                                     np.concatenate([b_mid, b_hi]), xi, w)
        c_lo = np.concatenate([b_lo, b_mid])
        c_hi = np.concatenate([b_mid, b_hi])
        c_mid = 0.5 * (c_lo + c_hi)
        child_fine = (
            _panel_values(g, c_lo, c_mid, xi, w)
            + _panel_values(g, c_mid, c_hi, xi, w)
        )
        los, his = new_lo, new_hi
        fine = np.concatenate([keep_fine, child_fine])
        err = np.concatenate([keep_err, np.abs(child_fine - child_coarse)])
    raise QuadratureError("adaptive refinement did not converge")


def to_unit_interval(s: np.ndarray) -> np.ndarray:
    """Forward arctan map: s in (0, inf) to y in (0, 1)."""
    return (2.0 / math.pi) * np.arctan(s)


def from_unit_interval(y: np.ndarray) -> np.ndarray:
    """Inverse arctan map: y in (0, 1) to s in (0, inf)."""
    return np.tan(0.5 * math.pi * y)


def transformed_integrand(
    f: Callable[[np.ndarray], np.ndarray],
) -> Callable[[np.ndarray], np.ndarray]:
    """Pull f on (0, inf) back to (0, 1) including the Jacobian."""

    def g(y: np.ndarray) -> np.ndarray:
        s = from_unit_interval(y)
        jac = 0.5 * math.pi * (1.0 + s * s)
        return np.asarray(f(s), dtype=float) * jac

    return g


def _upper_transformed_integrand(
    f: Callable[[np.ndarray], np.ndarray],
) -> Callable[[np.ndarray], np.ndarray]:
    """Same substitution written in u = 1 - y, with s = cot(pi u / 2).

    Evaluating tan near its pole loses precision; the complementary variable
    keeps nodes for large s well conditioned because floats are dense near 0.
    """

    def h(u: np.ndarray) -> np.ndarray:
        s = 1.0 / np.tan(0.5 * math.pi * u)
        jac = 0.5 * math.pi * (1.0 + s * s)
        return np.asarray(f(s), dtype=float) * jac

    return h


def semi_infinite_integral(
    f: Callable[[np.ndarray], np.ndarray],
    spec: QuadratureSpec,
    lower: float = 0.0,
    initial_edges: np.ndarray | None = None,
) -> float:
    """Integral of f over (lower, inf), or (lower, 1) for the unit transform.

    The integrand must accept numpy arrays elementwise. Non-finite values
    raise QuadratureError naming the offending node. initial_edges are in the
    original s coordinate.
    """
    if lower < 0.0 or not math.isfinite(lower):
        raise ValueError("lower bound must be finite and non-negative")
    edges = None if initial_edges is None else np.asarray(initial_edges, dtype=float)
    if spec.transform == "identity_unit_interval":
        if lower >= 1.0:
            raise ValueError("lower bound must be below 1 for the unit transform")
        return adaptive_integral(f, lower, 1.0, spec, initial_edges=edges)
    total = 0.0
    if lower < 1.0:
        y_lo = float(to_unit_interval(np.asarray(lower))) if lower > 0.0 else 0.0
        y_edges = None
        if edges is not None:
            inner = edges[(edges > lower) & (edges < 1.0)]
            y_edges = to_unit_interval(inner) if inner.size else None
        total += adaptive_integral(
            transformed_integrand(f), y_lo, 0.5, spec, initial_edges=y_edges
        )
        u_hi = 0.5
    else:
        # u = (2/pi) * atan(1/s) is exact where 1 - (2/pi) * atan(s) is not
        u_hi = float((2.0 / math.pi) * math.atan(1.0 / lower))
    u_edges = None
    if edges is not None:
        outer = edges[(edges > max(lower, 1.0)) & np.isfinite(edges)]
        if outer.size:
            u_edges = (2.0 / math.pi) * np.arctan(1.0 / outer)
    total += adaptive_integral(
        _upper_transformed_integrand(f), 0.0, u_hi, spec, initial_edges=u_edges
    )
    return total


def invert_monotone_tail(
    tail: Callable[[float], float],
    target: float,
    spec: RootFindSpec,
) -> float:
    """Solve tail(J) = target for a strictly decreasing tail function.

    Brackets by geometric expansion (factor 10 away from the start bracket,
    shrinking toward hi_cap for bounded supports), then refines with Brent's
    hybrid bisection/secant and checks the residual against spec.tol.
    """
    target = float(target)
    if not math.isfinite(target) or target <= 0.0:
        raise ValueError("target must be finite and positive")
    lo, hi = spec.bracket_lo, spec.bracket_hi
    t_lo = float(tail(lo))
    t_hi = float(tail(hi))
    expansions = 0
    while t_lo < target:
        lo /= 10.0
        expansions += 1
        if expansions > spec.max_iter or lo < 1e-300:
            raise RootFindError(
                f"tail stayed below target {target} while expanding toward 0"
            )
        t_lo = float(tail(lo))
    while t_hi > target:
        if math.isfinite(spec.hi_cap):
            hi = spec.hi_cap - (spec.hi_cap - hi) / 10.0
        else:
            hi *= 10.0
        expansions += 1
        if expansions > spec.max_iter or hi > 1e300:
            raise RootFindError(
                f"tail stayed above target {target} while expanding upward"
            )
        t_hi = float(tail(hi))
    if t_lo == target:
        return lo
    if t_hi == target:
        return hi
    root = brentq(
        lambda s: float(tail(s)) - target,
        lo,
        hi,
        xtol=1e-300,
        rtol=8.9e-16,
        maxiter=spec.max_iter,
    )
    residual = abs(float(tail(root)) - target)
    if residual > spec.tol * max(1.0, abs(target)):
        raise RootFindError(
            f"residual {residual:.3e} above tolerance at root {root!r}"
        )
    return float(root)
