"""Partition probability functions, partition distances, point estimates.

The tie-pattern probability of a CoRM vector is a (d+1)-fold integral: an
outer integral over the auxiliary vector u of a product of gamma kernels,
the exponential of the driving Laplace-type exponent, and one inner jump
integral per distinct value. Inner integrals are evaluated on a log-scale
trapezoid grid (the integrands decay exponentially in log s on both sides
and the trapezoid rule converges geometrically there). The outer integrand
has algebraic endpoint behaviour in every u_j, with a genuine corner
singularity at the origin for joint patterns, so the outer axes use
tanh-sinh nodes: adaptive (scipy) for the one-group law, a fixed tensor
rule split into charts u = x and u = 1/x for d in {2, 3}.
"""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np
from scipy import integrate

from .errors import NumericError
from .measures import BetaDirecting, GammaScores, StableDirecting
from .numerics import QuadratureSpec, log_gamma
from .posterior import FrequencyTable

__all__ = [
    "tau_one",
    "eppf_exchangeable",
    "peppf_corm",
    "peppf_nested",
    "vi_distance",
    "vi_point_estimate",
    "similarity_matrix",
    "set_partitions",
    "canonical_labels",
]

_INNER_H = 0.15
_INNER_MARGIN = 42.0


def tau_one(q: int, beta: float) -> float:
    """P(two groups share a component) under symmetric Dirichlet weights.

    tau_1 = E[sum_s pi_s^2] = (beta + 1) / (q beta + 1).
    """
    if q < 1 or beta <= 0.0:
        raise ValueError("need q >= 1 and beta > 0")
    return (beta + 1.0) / (q * beta + 1.0)


def _log_trapezoid(log_f, x_lo: float, x_hi: float) -> np.ndarray:
    """log integral of exp(log_f(x)) over a grid covering (x_lo, x_hi).

    log_f maps a grid (p,) to (rows, p); rows are integrated independently.
    """
    count = max(64, int(math.ceil((x_hi - x_lo) / _INNER_H)) + 1)
    grid = np.linspace(x_lo, x_hi, count)
    vals = log_f(grid)
    top = np.max(vals, axis=-1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    sums = np.sum(np.exp(vals - top), axis=-1)
    out = np.log(sums) + top[..., 0] + math.log(grid[1] - grid[0])
    return out


def _window(u: np.ndarray, left_rate: float, right_rate: float,
            bounded: bool) -> tuple[float, float]:
    """Grid bounds in the log-scale variable for the inner integrals."""
    if bounded:
        shift = math.log1p(float(np.max(u))) if u.size else 0.0
        return (
            -_INNER_MARGIN / left_rate - shift - 4.0,
            _INNER_MARGIN / right_rate + shift + 4.0,
        )
    positive = u[u > 0.0]
    centers = -np.log(positive) if positive.size else np.zeros(1)
    return (
        float(np.min(centers)) - _INNER_MARGIN / left_rate,
        float(np.max(centers)) + _INNER_MARGIN / right_rate,
    )


def _laplace_exponent(dm, sd: GammaScores, u_rows: np.ndarray) -> np.ndarray:
    """integral (1 - prod_j (1 + u_j s)^-phi) nu*(ds), rowwise over u."""
    phi = sd.phi
    if isinstance(dm, StableDirecting):
        x_lo, x_hi = _window(u_rows, 1.0 - dm.sigma, dm.sigma, bounded=False)
        with np.errstate(divide="ignore"):
            log_u = np.log(u_rows)

        def log_f(x: np.ndarray) -> np.ndarray:
            tilt = np.zeros((u_rows.shape[0], x.size))
            for j in range(u_rows.shape[1]):
                # log1p(u e^x) without overflow; log u = -inf drops out
                tilt += np.logaddexp(0.0, log_u[:, j, None] + x[None, :])
            with np.errstate(divide="ignore"):
                body = np.log(-np.expm1(-phi * tilt))
            return dm.log_constant - dm.sigma * x[None, :] + body

        return np.exp(_log_trapezoid(log_f, x_lo, x_hi))
    if isinstance(dm, BetaDirecting):
        x_lo, x_hi = _window(u_rows, 1.0, dm.phi, bounded=True)

        def log_f(x: np.ndarray) -> np.ndarray:
            log_s = -np.logaddexp(0.0, -x)
            log_1ms = -np.logaddexp(0.0, x)
            s = np.exp(log_s)
            tilt = np.zeros((u_rows.shape[0], x.size))
            for j in range(u_rows.shape[1]):
                tilt += np.log1p(u_rows[:, j, None] * s[None, :])
            with np.errstate(divide="ignore"):
                body = np.log(-np.expm1(-phi * tilt))
            return body + dm.phi * log_1ms[None, :]

        return np.exp(_log_trapezoid(log_f, x_lo, x_hi))
    raise TypeError(f"unsupported directing measure {type(dm).__name__}")


def _log_block_integral(dm, sd: GammaScores, u_rows: np.ndarray,
                        counts_row: np.ndarray) -> np.ndarray:
    """log integral prod_j E[exp(-u_j m s) (m s)^{n_j}] nu*(ds), rowwise.

    For gamma scores the score expectations contribute Pochhammer constants
    (phi)_{n_j} and tilts (1 + u_j s)^-(phi + n_j), and the jump contributes
    s^{n_.}.
    """
    phi = sd.phi
    counts_row = np.asarray(counts_row, dtype=int)
    n_total = float(counts_row.sum())
    log_poch = float(
        sum(log_gamma(phi + int(n)) - log_gamma(phi) for n in counts_row)
    )
    if isinstance(dm, StableDirecting):
        left = n_total - dm.sigma
        right = dm.sigma + phi * counts_row.size
        x_lo, x_hi = _window(u_rows, left, right, bounded=False)
        with np.errstate(divide="ignore"):
            log_u = np.log(u_rows)

        def log_f(x: np.ndarray) -> np.ndarray:
            out = dm.log_constant + left * x[None, :] + np.zeros(
                (u_rows.shape[0], 1)
            )
            for j in range(u_rows.shape[1]):
                out = out - (phi + counts_row[j]) * np.logaddexp(
                    0.0, log_u[:, j, None] + x[None, :]
                )
            return out

        return log_poch + _log_trapezoid(log_f, x_lo, x_hi)
    if isinstance(dm, BetaDirecting):
        x_lo, x_hi = _window(u_rows, n_total, dm.phi, bounded=True)

        def log_f(x: np.ndarray) -> np.ndarray:
            log_s = -np.logaddexp(0.0, -x)
            log_1ms = -np.logaddexp(0.0, x)
            s = np.exp(log_s)
            out = n_total * log_s[None, :] + dm.phi * log_1ms[None, :] + (
                np.zeros((u_rows.shape[0], 1))
            )
            for j in range(u_rows.shape[1]):
                out = out - (phi + counts_row[j]) * np.log1p(
                    u_rows[:, j, None] * s[None, :]
                )
            return out

        return log_poch + _log_trapezoid(log_f, x_lo, x_hi)
    raise TypeError(f"unsupported directing measure {type(dm).__name__}")


def _log_peppf_integrand(dm, sd, alpha_mass: float, counts: np.ndarray,
                         u_rows: np.ndarray) -> np.ndarray:
    """Rowwise log of the u-integrand of the tie-pattern probability."""
    group_sizes = counts.sum(axis=0)
    out = np.zeros(u_rows.shape[0])
    for j, n_j in enumerate(group_sizes):
        out += (n_j - 1.0) * np.log(u_rows[:, j]) - log_gamma(float(n_j))
    out -= alpha_mass * _laplace_exponent(dm, sd, u_rows)
    out += counts.shape[0] * math.log(alpha_mass)
    for row in counts:
        out += _log_block_integral(dm, sd, u_rows, row)
    return out


def eppf_exchangeable(block_sizes, dm, sd: GammaScores, alpha_mass: float,
                      quad: QuadratureSpec | None = None) -> float:
    """Probability of a tie pattern in a single fully exchangeable group.

    One-dimensional case of the tie-pattern probability: a single adaptive
    u-integral of u^{n-1}/Gamma(n) exp(-alpha L(u)) alpha^k prod_l I_l(u),
    split at u = 1 with the far half mapped back through u = 1/x. Both
    halves go through tanh-sinh quadrature, which absorbs the algebraic
    endpoint behaviour (u^{k sigma - 1} at zero, power tails at infinity).
    """
    block_sizes = np.asarray(block_sizes, dtype=int)
    if block_sizes.ndim != 1 or np.any(block_sizes < 1):
        raise ValueError("block sizes must be positive integers")
    n = int(block_sizes.sum())
    if n > 10:
        raise ValueError("exchangeable evaluator is desk-scale (n <= 10)")
    if alpha_mass <= 0.0:
        raise ValueError("alpha_mass must be positive")
    quad = quad or QuadratureSpec()
    counts = block_sizes[:, None]

    def integrand(u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        flat = u.ravel()
        out = np.zeros(flat.size)
        pos = flat > 0.0
        if np.any(pos):
            out[pos] = np.exp(
                _log_peppf_integrand(dm, sd, alpha_mass, counts,
                                     flat[pos, None])
            )
        return out.reshape(u.shape)

    # ask for three digits beyond the spec tolerance; the error estimate of
    # the first levels is optimistic for endpoint-singular integrands
    rtol = max(2e-13, 1e-3 * quad.rel_tol)
    near = integrate.tanhsinh(integrand, 0.0, 1.0, rtol=rtol)
    far = integrate.tanhsinh(
        lambda x: integrand(1.0 / np.asarray(x)) / np.asarray(x) ** 2,
        0.0, 1.0, rtol=rtol,
    )
    value = float(near.integral + far.integral)
    if not (near.success and far.success):
        err = float(near.error + far.error)
        if not err < max(quad.abs_tol, quad.rel_tol * abs(value)):
            raise NumericError(
                "exchangeable tie-pattern integral did not converge"
            )
    return value


def _tanh_sinh_axis(step: float, t_max: float = 3.8
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Node/log-weight pairs covering (0, inf), tanh-sinh in each chart.

    Chart one places x = sigmoid(pi sinh t) on (0, 1); chart two maps the
    same nodes through u = 1/x onto (1, inf). Weights decay double
    exponentially toward every endpoint, which makes the tensor rule immune
    to the algebraic edge and corner singularities of the u-integrand.
    """
    m = int(math.ceil(t_max / step))
    t = step * np.arange(-m, m + 1)
    sh = math.pi * np.sinh(t)
    log_x = -np.logaddexp(0.0, -sh)
    log_1mx = -np.logaddexp(0.0, sh)
    x = np.exp(log_x)
    log_dx = (
        math.log(math.pi) + np.log(np.cosh(t)) + log_x + log_1mx
        + math.log(step)
    )
    u = np.concatenate([x, 1.0 / x])
    log_w = np.concatenate([log_dx, log_dx - 2.0 * log_x])
    return u, log_w


def peppf_corm(freq: FrequencyTable, dm, sd: GammaScores, alpha_mass: float,
               quad: QuadratureSpec | None = None) -> float:
    """Probability of a cross-group tie pattern under the CoRM prior.

    Desk-scale evaluator (d <= 3, n <= 8) of the (d+1)-fold integral; the
    outer u-axes use a tensor product of tanh-sinh rules (coarser nodes at
    d = 3 to keep the grid tractable).
    """
    counts = freq.counts
    d = freq.d
    n = int(counts.sum())
    if d > 3:
        raise ValueError("tie-pattern evaluator is desk-scale (d <= 3)")
    if n > 8:
        raise ValueError("tie-pattern evaluator is desk-scale (n <= 8)")
    if np.any(counts.sum(axis=0) < 1):
        raise ValueError("every group needs at least one observation")
    if alpha_mass <= 0.0:
        raise ValueError("alpha_mass must be positive")
    quad = quad or QuadratureSpec()
    # node_count sets the tanh-sinh step; the default (16) gives ~1e-11
    # accuracy at d = 2, coarser grids trade accuracy for the d = 3 tensor
    step = (1.12 if d <= 2 else 2.24) / quad.node_count
    u_axis, log_w = _tanh_sinh_axis(step)

    grids = np.meshgrid(*([np.arange(u_axis.size)] * d), indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1)
    total = -np.inf
    chunk = 4096
    for start in range(0, idx.shape[0], chunk):
        sel = idx[start : start + chunk]
        u_rows = u_axis[sel]
        log_vals = _log_peppf_integrand(dm, sd, alpha_mass, counts, u_rows)
        log_vals = log_vals + log_w[sel].sum(axis=1)
        top = max(total, float(np.max(log_vals)))
        total = top + math.log(
            math.exp(total - top) + float(np.sum(np.exp(log_vals - top)))
        )
    value = math.exp(total)
    if not math.isfinite(value):
        raise NumericError("tie-pattern integral did not evaluate finitely")
    return value


def peppf_nested(freq: FrequencyTable, tau1: float, dm, sd: GammaScores,
                 alpha_mass: float,
                 quad: QuadratureSpec | None = None) -> float:
    """Two-group tie-pattern probability under the nested prior.

    Exact convex mixture: with probability tau1 the groups share one
    component (fully exchangeable law on the merged sample), otherwise they
    follow the two-group CoRM law.
    """
    if freq.d != 2:
        raise ValueError("nested evaluator is defined for d = 2")
    if not 0.0 <= tau1 <= 1.0:
        raise ValueError("tau1 must lie in [0, 1]")
    shared = (
        eppf_exchangeable(freq.row_sums, dm, sd, alpha_mass, quad)
        if tau1 > 0.0
        else 0.0
    )
    split = peppf_corm(freq, dm, sd, alpha_mass, quad) if tau1 < 1.0 else 0.0
    return tau1 * shared + (1.0 - tau1) * split


def canonical_labels(labels) -> np.ndarray:
    """Relabel blocks by order of first appearance (0, 1, 2, ...)."""
    labels = np.asarray(labels)
    _, first = np.unique(labels, return_index=True)
    order = labels[np.sort(first)]
    lookup = {val: i for i, val in enumerate(order)}
    return np.array([lookup[v] for v in labels], dtype=int)


def set_partitions(n: int) -> Iterator[np.ndarray]:
    """All set partitions of {0..n-1} as canonical label vectors."""
    if n < 1:
        raise ValueError("n must be at least 1")
    labels = np.zeros(n, dtype=int)

    def rec(i: int, k: int):
        if i == n:
            yield labels.copy()
            return
        for b in range(k + 1):
            labels[i] = b
            yield from rec(i + 1, k + (b == k))

    yield from rec(1, 1)


def _entropy_and_mutual(a: np.ndarray, b: np.ndarray) -> tuple[float, float, float]:
    n = a.size
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    ka, kb = ai.max() + 1, bi.max() + 1
    joint = np.zeros((ka, kb))
    np.add.at(joint, (ai, bi), 1.0)
    joint /= n
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    ha = -float(np.sum(pa * np.log(pa)))
    hb = -float(np.sum(pb * np.log(pb)))
    mask = joint > 0.0
    mi = float(
        np.sum(
            joint[mask]
            * (np.log(joint[mask]) - np.log(np.outer(pa, pb)[mask]))
        )
    )
    return ha, hb, mi


def vi_distance(a, b, normalized: bool = False) -> float:
    """Variation of information H(a) + H(b) - 2 I(a, b), in nats.

    The normalized variant divides by log n, the maximum over partitions of
    n items (zero for n = 1 by convention).
    """
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.size != b.size or a.size == 0:
        raise ValueError("partitions must be nonempty and of equal length")
    ha, hb, mi = _entropy_and_mutual(a, b)
    vi = max(0.0, ha + hb - 2.0 * mi)
    if normalized:
        return vi / math.log(a.size) if a.size > 1 else 0.0
    return vi


def _unique_draws(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    canon = np.stack([canonical_labels(row) for row in samples])
    uniq, counts = np.unique(canon, axis=0, return_counts=True)
    return uniq, counts


def _mean_vi(candidate: np.ndarray, uniq: np.ndarray,
             counts: np.ndarray) -> float:
    total = sum(
        c * vi_distance(candidate, row) for row, c in zip(uniq, counts)
    )
    return total / counts.sum()


def _greedy_merge(start: np.ndarray, uniq: np.ndarray,
                  counts: np.ndarray) -> np.ndarray:
    best = canonical_labels(start)
    best_score = _mean_vi(best, uniq, counts)
    improved = True
    while improved and best.max() > 0:
        improved = False
        k = best.max() + 1
        for a in range(k - 1):
            for b in range(a + 1, k):
                trial = np.where(best == b, a, best)
                score = _mean_vi(trial, uniq, counts)
                if score < best_score - 1e-15:
                    best, best_score = canonical_labels(trial), score
                    improved = True
    return best


def vi_point_estimate(samples, candidates: str = "draws") -> np.ndarray:
    """Partition minimizing the mean VI distance to the posterior draws.

    candidates="draws" searches the draws themselves (deterministic first
    index tie-break); "greedy-merge" then tries merging block pairs of the
    winner while the mean VI keeps decreasing.
    """
    samples = np.asarray(samples)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValueError("need a nonempty (draws, items) array of partitions")
    if candidates not in ("draws", "greedy-merge"):
        raise ValueError(f"unknown candidate set {candidates!r}")
    uniq, counts = _unique_draws(samples)
    scores = [_mean_vi(row, uniq, counts) for row in uniq]
    order = int(np.argmin(scores))
    # argmin on unique rows is not the documented first-index tie-break over
    # draws; resolve ties by earliest appearance in the original sample list
    best_score = scores[order]
    ties = [i for i, s in enumerate(scores) if s <= best_score + 1e-15]
    if len(ties) > 1:
        canon = np.stack([canonical_labels(row) for row in samples])
        for row in canon:
            for i in ties:
                if np.array_equal(row, uniq[i]):
                    order = i
                    break
            else:
                continue
            break
    winner = uniq[order]
    if candidates == "greedy-merge":
        winner = _greedy_merge(winner, uniq, counts)
    return canonical_labels(winner)


def similarity_matrix(samples) -> np.ndarray:
    """Fraction of draws in which each pair of items is co-clustered."""
    samples = np.asarray(samples)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValueError("need a nonempty (draws, items) array of partitions")
    n = samples.shape[1]
    out = np.zeros((n, n))
    for row in samples:
        out += row[:, None] == row[None, :]
    return out / samples.shape[0]
