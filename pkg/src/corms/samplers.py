"""Conditional Gibbs samplers for CoRM and nested CoRM mixture models.

Each sweep conditions on the persistent state (the partition of
observations, the distinct kernel parameters, the auxiliary variables U,
the directing parameters sigma and phi and, in the nested model, the
component labels) and runs: Metropolis moves on (sigma, phi) against the
measure-free conditional, a Ferguson-Klass draw of the posterior driving
trajectory, gamma score refresh, fixed-atom jump and score draws,
multinomial reallocation of every observation, auxiliary-variable
refresh, and a conjugate update of the distinct kernel parameters and
their hyperpriors. The (sigma, phi) move runs first because its target
integrates the measure out: interleaving it between the measure draw and
a step that reuses the measure would break the invariant law.

Both models run through one engine. The plain CoRM vector is the nested
model with every group pinned to its own component (the per-group scores
are the component scores), so the sweep is written against components: a
component s is tilted by V_s, the sum of U_j over the groups it carries.
The nested sampler adds a Dirichlet update of the component probabilities
and a marginal reallocation of the group labels in which the group's
auxiliary U_j is integrated out and redrawn, which keeps empty components
live through the same code path (V_s = 0 leaves the score conditionals at
their prior).

Only the stable directing measure is supported here: the fixed-atom and
hyperparameter conditionals rely on its closed-form tail behaviour.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import ConfigError, ValidationError
from .kernels import (
    BaseMeasureSpec,
    KernelSpec,
    NigParams,
    nig_sample_atoms,
    nig_sample_posterior_atom,
    refresh_hypers,
)
from .measures import GammaScores, StableDirecting
from .partitions import _laplace_exponent, _log_block_integral
from .posterior import (
    ImportanceSpec,
    fk_posterior_trajectory,
    sample_fixed_scores,
    sample_free_scores,
    sigma_ell_importance,
)

__all__ = [
    "ModelSpec",
    "ChainConfig",
    "ChainState",
    "init_state",
    "sweep_corm",
    "sweep_ncorm",
    "run_chain",
]

_MH_TARGET_RATE = 0.234


@dataclass(frozen=True)
class ModelSpec:
    """Model choice: kernel, base measure, priors, nesting structure.

    ``phi`` fixes the score shape parameter; set it to None to give phi a
    Gamma(phi_prior) hyperprior. ``q`` and ``beta`` only matter for the
    nested model, where q is the number of mixture components for the
    group-level distribution and beta the symmetric Dirichlet weight.
    """

    kind: str = "corm"
    kernel: KernelSpec = field(default_factory=KernelSpec)
    base: BaseMeasureSpec = field(default_factory=BaseMeasureSpec)
    directing: str = "stable"
    sigma_prior: tuple[float, float] = (2.0, 2.0)
    phi: float | None = 1.0
    phi_prior: tuple[float, float] = (2.0, 2.0)
    q: int = 2
    beta: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("corm", "ncorm"):
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.directing != "stable":
            raise ConfigError(
                "posterior sampling is only implemented for the stable "
                f"directing measure, got {self.directing!r}"
            )
        if self.phi is not None and not (
            math.isfinite(self.phi) and self.phi > 0.0
        ):
            raise ConfigError(f"fixed phi must be positive, got {self.phi!r}")
        for name, pair in (("sigma", self.sigma_prior), ("phi", self.phi_prior)):
            if len(pair) != 2 or not all(p > 0.0 for p in pair):
                raise ConfigError(f"{name}_prior must be two positive numbers")
        if self.kind == "ncorm" and self.q < 1:
            raise ConfigError(f"q must be at least 1, got {self.q}")
        if self.kind == "ncorm" and not self.beta > 0.0:
            raise ConfigError(f"beta must be positive, got {self.beta!r}")


@dataclass(frozen=True)
class ChainConfig:
    """Chain length, truncation level, proposal scales and seed.

    ``fixed_jump_sampler`` selects how the fixed-atom directing jumps are
    drawn: "grid" inverts the exact conditional CDF on a log-scale grid,
    "sir" uses sampling-importance-resampling with gamma proposals. The
    grid is the default: the conditional has polynomial tails, so gamma
    proposals carry unbounded importance weights and visibly oversample
    large jumps, which biases the partition toward extra blocks.
    """

    iterations: int = 15_000
    burn_in: int = 10_000
    thinning: int = 5
    epsilon: float = 1e-6
    fixed_jump_sampler: str = "grid"
    importance: ImportanceSpec = field(default_factory=ImportanceSpec)
    step_sigma: float = 0.5
    step_phi: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ConfigError("iterations must be at least 1")
        if not (0 <= self.burn_in < self.iterations):
            raise ConfigError("burn_in must lie in [0, iterations)")
        if self.thinning < 1:
            raise ConfigError("thinning must be at least 1")
        if not (0.0 < self.epsilon < 1.0):
            raise ConfigError("epsilon must lie in (0, 1)")
        if self.fixed_jump_sampler not in ("grid", "sir"):
            raise ConfigError(
                f"unknown fixed jump sampler {self.fixed_jump_sampler!r}"
            )
        if not (self.step_sigma > 0.0 and self.step_phi > 0.0):
            raise ConfigError("proposal step sizes must be positive")


@dataclass
class ChainState:
    """One sweep's worth of chain state.

    Persistent across sweeps: blocks (per-group arrays of global block
    ids, together the partition), theta_star (distinct kernel parameters,
    one row per block), u, sigma, phi, nig, comp (component label of each
    group) and pi. The measure itself (jumps, atom_params, scores,
    fixed_jumps, fixed_scores) is regenerated every sweep but kept on the
    state so emitted draws support density and mass functionals. Because
    reallocation can change the block set after the measure is drawn,
    fixed_atom_params records the kernel parameters the fixed jumps were
    drawn for; functionals of the measure must pair the fixed jumps with
    those, not with theta_star.
    """

    blocks: list[np.ndarray]
    theta_star: np.ndarray
    u: np.ndarray
    sigma: float
    phi: float
    nig: NigParams
    comp: np.ndarray
    pi: np.ndarray
    jumps: np.ndarray
    atom_params: np.ndarray
    scores: np.ndarray
    fixed_jumps: np.ndarray
    fixed_scores: np.ndarray
    fixed_atom_params: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    diagnostics: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return int(self.theta_star.shape[0])

    def partition_labels(self) -> np.ndarray:
        """Block id of every observation, groups concatenated in order."""
        return np.concatenate([np.asarray(b) for b in self.blocks])

    def group_weights_and_atoms(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Unnormalized atom weights and kernel parameters for group j."""
        s = int(self.comp[j])
        weights = np.concatenate(
            [self.scores[s] * self.jumps, self.fixed_scores[:, s] * self.fixed_jumps]
        )
        params = np.vstack([self.atom_params, self.fixed_atom_params])
        return weights, params

    def baseline_weights_and_atoms(self) -> tuple[np.ndarray, np.ndarray]:
        """Atom weights of the driving measure itself (all scores at one)."""
        weights = np.concatenate([self.jumps, self.fixed_jumps])
        params = np.vstack([self.atom_params, self.fixed_atom_params])
        return weights, params


def _as_group_arrays(data: Sequence[np.ndarray]) -> list[np.ndarray]:
    groups = [np.asarray(y, dtype=float).ravel() for y in data]
    if not groups:
        raise ValidationError("need at least one group of observations")
    for j, y in enumerate(groups):
        if y.size == 0:
            raise ValidationError(f"group {j} has no observations")
        if not np.all(np.isfinite(y)):
            raise ValidationError(f"group {j} contains non-finite values")
    return groups


def _init_blocks(latent: list[np.ndarray]) -> tuple[list[np.ndarray], np.ndarray]:
    """Quantile binning of each group into at most five starter blocks."""
    blocks: list[np.ndarray] = []
    centers: list[tuple[float, float]] = []
    overall = np.concatenate(latent)
    fallback = float(np.var(overall)) if overall.size > 1 else 1.0
    if not fallback > 0.0:
        fallback = 1.0
    offset = 0
    for t in latent:
        n_bins = min(5, t.size)
        edges = np.quantile(t, np.linspace(0.0, 1.0, n_bins + 1))
        local = np.clip(np.searchsorted(edges[1:-1], t, side="right"), 0, n_bins - 1)
        kept = np.unique(local)
        local = np.searchsorted(kept, local)
        for b in range(kept.size):
            vals = t[local == b]
            var = float(np.var(vals)) if vals.size > 1 else fallback
            centers.append((float(np.mean(vals)), var if var > 0.0 else fallback))
        blocks.append(local + offset)
        offset += kept.size
    return blocks, np.asarray(centers, dtype=float)


def init_state(
    data: Sequence[np.ndarray], model: ModelSpec, rng: np.random.Generator
) -> ChainState:
    """Deterministic-shape starting point: quantile blocks, U_j = n_j."""
    groups = _as_group_arrays(data)
    model.kernel.validate_data(np.concatenate(groups))
    latent = [model.kernel.to_latent(y) for y in groups]
    blocks, theta_star = _init_blocks(latent)
    d = len(groups)
    overall = np.concatenate(latent)
    spread = float(np.var(overall)) if overall.size > 1 else 1.0
    if not spread > 0.0:
        spread = 1.0
    a0 = model.base.a0
    nig = NigParams(
        m0=float(np.mean(overall)),
        k0=1.0,
        a0=a0,
        b0=max((a0 - 1.0) * spread / 2.0, 1e-3),
    )
    n_comp = model.q if model.kind == "ncorm" else d
    comp = (
        np.arange(d) % model.q if model.kind == "ncorm" else np.arange(d)
    )
    pi = np.full(n_comp, 1.0 / n_comp) if model.kind == "ncorm" else np.ones(1)
    phi = model.phi if model.phi is not None else 1.0
    return ChainState(
        blocks=blocks,
        theta_star=theta_star,
        u=np.asarray([float(y.size) for y in groups]),
        sigma=0.5,
        phi=float(phi),
        nig=nig,
        comp=comp.astype(int),
        pi=pi,
        jumps=np.empty(0),
        atom_params=np.empty((0, 2)),
        scores=np.empty((n_comp, 0)),
        fixed_jumps=np.empty(0),
        fixed_scores=np.empty((0, n_comp)),
        fixed_atom_params=np.empty((0, 2)),
    )


def _block_counts(
    blocks: Sequence[np.ndarray], comp: np.ndarray, k: int, n_comp: int
) -> np.ndarray:
    """Observation counts per (block, component) pair, shape (k, n_comp)."""
    counts = np.zeros((k, n_comp), dtype=int)
    for j, blk in enumerate(blocks):
        np.add.at(counts, (blk, int(comp[j])), 1)
    return counts


def _component_tilts(u: np.ndarray, comp: np.ndarray, n_comp: int) -> np.ndarray:
    """V_s = sum of U_j over the groups carried by component s."""
    return np.bincount(comp, weights=u, minlength=n_comp)


def _measure_masses(
    jumps: np.ndarray,
    scores: np.ndarray,
    fixed_jumps: np.ndarray,
    fixed_scores: np.ndarray,
) -> np.ndarray:
    """Total mass of each component's measure, shape (n_comp,)."""
    cont = scores @ jumps if jumps.size else np.zeros(scores.shape[0])
    return cont + fixed_scores.T @ fixed_jumps


_GRID_STEP = 0.02
_GRID_MARGIN = 20.0


def _grid_fixed_jump(
    counts_row: np.ndarray,
    tilts: np.ndarray,
    sd: GammaScores,
    dm: StableDirecting,
    rng: np.random.Generator,
) -> float:
    """Inverse-CDF draw of one fixed-atom jump from its exact conditional.

    In x = log s coordinates the target s^{n - sigma} prod_j
    (1 + V_j s)^{-(phi + n_j)} decays exponentially on both sides, with
    rate n - sigma on the left and sigma + phi |{V_j > 0}| on the right
    (every block observation lives in a tilted component). A uniform grid
    wide enough to cut both tails at exp(-margin) then supports a
    piecewise-linear CDF inversion.
    """
    counts_row = np.asarray(counts_row, dtype=float)
    tilts = np.asarray(tilts, dtype=float)
    pos = tilts > 0.0
    n_tot = float(counts_row.sum())
    left_rate = n_tot - dm.sigma
    right_rate = dm.sigma + sd.phi * float(pos.sum()) + float(
        counts_row[pos].sum()
    ) - n_tot
    centers = -np.log(tilts[pos]) if np.any(pos) else np.zeros(1)
    x_lo = float(np.min(centers)) - _GRID_MARGIN / left_rate
    x_hi = float(np.max(centers)) + _GRID_MARGIN / right_rate
    count = max(int(math.ceil((x_hi - x_lo) / _GRID_STEP)), 64) + 1
    x = np.linspace(x_lo, x_hi, count)
    log_h = (n_tot - dm.sigma) * x
    for n_j, v_j in zip(counts_row[pos], tilts[pos]):
        log_h -= (sd.phi + n_j) * np.logaddexp(0.0, math.log(v_j) + x)
    h = np.exp(log_h - np.max(log_h))
    segments = 0.5 * (h[1:] + h[:-1])
    cdf = np.cumsum(segments)
    target = rng.uniform() * cdf[-1]
    idx = int(np.searchsorted(cdf, target))
    inside = target - (cdf[idx - 1] if idx else 0.0)
    frac = inside / segments[idx]
    return float(np.exp(x[idx] + frac * (x[idx + 1] - x[idx])))


def sigma_phi_log_target(
    sigma: float,
    phi: float,
    model: ModelSpec,
    tilts: np.ndarray,
    counts: np.ndarray,
) -> float:
    """Log conditional of (sigma, phi) given partition, tilts and priors.

    Joint over the blocks and the auxiliary variables: the product of the
    fixed-atom integrals (one per block, Pochhammer factors included) times
    exp(-psi(tilts)) for the Laplace exponent psi of the driving measure,
    plus the Beta log prior on sigma and, when phi is free, its Gamma log
    prior.
    """
    if not (0.0 < sigma < 1.0) or not phi > 0.0:
        return -math.inf
    dm = StableDirecting(sigma, phi)
    sd = GammaScores(phi)
    a_s, b_s = model.sigma_prior
    value = (a_s - 1.0) * math.log(sigma) + (b_s - 1.0) * math.log1p(-sigma)
    if model.phi is None:
        a_p, b_p = model.phi_prior
        value += (a_p - 1.0) * math.log(phi) - b_p * phi
    tilts = np.asarray(tilts, dtype=float)
    counts = np.asarray(counts, dtype=int).reshape(-1, tilts.size)
    # empty nested components carry tilt 0 and no observations, so their
    # factors are identically 1; dropping the columns is exact
    active = tilts > 0.0
    if counts.size:
        active |= counts.sum(axis=0) > 0
    rows = tilts[active][None, :]
    value -= float(_laplace_exponent(dm, sd, rows)[0])
    for row in counts[:, active]:
        value += float(_log_block_integral(dm, sd, rows, row)[0])
    return value


def _update_sigma_phi(
    sigma: float,
    phi: float,
    log_target: Callable[[float, float], float],
    steps: dict,
    phi_free: bool,
    rng: np.random.Generator,
) -> tuple[float, float, float, float]:
    """Random-walk Metropolis on omega = tan(pi sigma - pi/2), rho = log phi.

    Returns the new values and the two acceptance probabilities (the phi
    one is nan when phi is held fixed).
    """
    current = log_target(sigma, phi)
    omega = math.tan(math.pi * sigma - math.pi / 2.0)
    prop_omega = omega + steps["sigma"] * rng.standard_normal()
    prop_sigma = (math.atan(prop_omega) + math.pi / 2.0) / math.pi
    proposed = log_target(prop_sigma, phi)
    delta = (
        proposed
        - math.log1p(prop_omega * prop_omega)
        - current
        + math.log1p(omega * omega)
    )
    alpha_sigma = math.exp(min(delta, 0.0)) if math.isfinite(delta) else 0.0
    if math.log(max(rng.uniform(), 1e-300)) < delta:
        sigma, current = prop_sigma, proposed
    alpha_phi = math.nan
    if phi_free:
        rho = math.log(phi)
        prop_rho = rho + steps["phi"] * rng.standard_normal()
        prop_phi = math.exp(prop_rho)
        proposed = log_target(sigma, prop_phi)
        delta = proposed + prop_rho - current - rho
        alpha_phi = math.exp(min(delta, 0.0)) if math.isfinite(delta) else 0.0
        if math.log(max(rng.uniform(), 1e-300)) < delta:
            phi = prop_phi
    return sigma, phi, alpha_sigma, alpha_phi


def _atom_log_densities(
    t: np.ndarray,
    kernel: KernelSpec,
    atom_params: np.ndarray,
    theta_star: np.ndarray,
) -> np.ndarray:
    """Latent-scale kernel log densities at every atom, continuous first.

    t holds one group's observations already mapped to the latent scale.
    Shape (n_j, I + k); shared by the label and allocation steps, which
    see the same atom set within a sweep. The data-scale Jacobian is
    constant per observation, so dropping it leaves both steps invariant.
    """
    parts = []
    if atom_params.shape[0]:
        parts.append(
            kernel.latent_log_density(t, atom_params[:, 0], atom_params[:, 1])
        )
    parts.append(
        kernel.latent_log_density(t, theta_star[:, 0], theta_star[:, 1])
    )
    return np.concatenate(parts, axis=1)


def _atom_log_weights(
    jumps: np.ndarray,
    scores: np.ndarray,
    fixed_jumps: np.ndarray,
    fixed_scores: np.ndarray,
) -> np.ndarray:
    """Log atom weights per component, shape (I + k, n_comp)."""
    fixed = np.log(fixed_scores) + np.log(fixed_jumps)[:, None]
    if not jumps.size:
        return fixed
    cont = np.log(scores.T) + np.log(jumps)[:, None]
    return np.concatenate([cont, fixed], axis=0)


def _allocate_group(
    log_k: np.ndarray, log_w: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Multinomial table draw for one group via the Gumbel-max trick.

    Returns atom indices with continuous atoms first, so index i >= I
    means fixed atom i - I.
    """
    logits = log_k + log_w[None, :]
    gumbel = rng.gumbel(size=logits.shape)
    return np.argmax(logits + gumbel, axis=1)


def _rebuild_partition(
    picks: list[np.ndarray],
) -> tuple[list[np.ndarray], np.ndarray]:
    """Relabel picked atom indices into dense block ids 0..k-1."""
    occupied = np.unique(np.concatenate(picks))
    return [np.searchsorted(occupied, p) for p in picks], occupied


def _resample_theta(
    blocks: Sequence[np.ndarray],
    latent: Sequence[np.ndarray],
    k: int,
    nig: NigParams,
    rng: np.random.Generator,
) -> np.ndarray:
    """Conjugate redraw of the distinct kernel parameters, one per block."""
    values = np.concatenate(latent)
    labels = np.concatenate([np.asarray(b) for b in blocks])
    theta = np.empty((k, 2))
    for ell in range(k):
        theta[ell] = nig_sample_posterior_atom(nig, values[labels == ell], rng)
    return theta


def _group_log_marginals(
    log_k: np.ndarray, log_weights: np.ndarray, masses: np.ndarray
) -> np.ndarray:
    """log P(group | component s), allocations integrated out, per s.

    The inner logsumexp over atoms runs as a matrix product of the
    row-scaled kernel matrix with the column-scaled weight matrix, which
    is much faster than a per-component pass. Two-sided scaling can push
    a term below the double floor when an observation's plausible atoms
    all carry negligible weight; those entries fall back to the direct
    computation.
    """
    row_top = np.max(log_k, axis=1, keepdims=True)
    col_top = np.max(log_weights, axis=0, keepdims=True)
    inner = np.exp(log_k - row_top) @ np.exp(log_weights - col_top)
    with np.errstate(divide="ignore"):
        lse = np.log(inner) + row_top + col_top
    if not np.all(inner > 0.0):
        for i, s in zip(*np.nonzero(inner == 0.0)):
            m = log_k[i] + log_weights[:, s]
            top = float(np.max(m))
            lse[i, s] = (
                top + math.log(float(np.sum(np.exp(m - top))))
                if math.isfinite(top)
                else -math.inf
            )
    return lse.sum(axis=0) - log_k.shape[0] * np.log(masses)


def _sweep(
    latent: list[np.ndarray],
    model: ModelSpec,
    cfg: ChainConfig,
    state: ChainState,
    steps: dict,
    rng: np.random.Generator,
    update_labels: bool,
) -> ChainState:
    """One full Gibbs sweep; returns a fresh state with diagnostics."""
    kernel = model.kernel
    d = len(latent)
    sizes = np.asarray([t.size for t in latent], dtype=float)
    n_comp = state.scores.shape[0]
    comp = state.comp
    u = state.u.copy()
    pi = state.pi.copy()
    tilts = _component_tilts(u, comp, n_comp)
    counts = _block_counts(state.blocks, comp, state.k, n_comp)
    diagnostics: dict = {}

    # Metropolis moves on the directing parameters. The target integrates
    # the measure out, so this must run before the measure is drawn: a
    # collapsed update sandwiched between a draw of the measure and a step
    # that reuses it would break the invariant law.
    def log_target(s: float, p: float) -> float:
        return sigma_phi_log_target(s, p, model, tilts, counts)

    sigma, phi, alpha_sigma, alpha_phi = _update_sigma_phi(
        state.sigma, state.phi, log_target, steps, model.phi is None, rng
    )

    dm = StableDirecting(sigma, phi)
    sd = GammaScores(phi)

    # [1] posterior driving trajectory above the truncation level
    trajectory = fk_posterior_trajectory(
        dm,
        sd,
        tilts,
        cfg.epsilon,
        lambda r, n: nig_sample_atoms(state.nig, n, r),
        rng,
    )
    jumps = trajectory.jumps
    atom_params = np.asarray(trajectory.atoms, dtype=float).reshape(-1, 2)

    # [2] score refresh: free jumps, fixed-atom jumps, fixed scores
    scores = sample_free_scores(jumps, tilts, sd, rng)
    fixed_jumps = np.empty(state.k)
    ess = np.full(state.k, math.nan)
    for ell in range(state.k):
        if cfg.fixed_jump_sampler == "sir":
            fixed_jumps[ell], ess[ell] = sigma_ell_importance(
                counts[ell], tilts, sd, dm, cfg.importance, rng
            )
        else:
            fixed_jumps[ell] = _grid_fixed_jump(counts[ell], tilts, sd, dm, rng)
    fixed_scores = sample_fixed_scores(counts, fixed_jumps, tilts, sd, rng)

    log_k_groups = [
        _atom_log_densities(latent[j], kernel, atom_params, state.theta_star)
        for j in range(d)
    ]
    log_weights = _atom_log_weights(jumps, scores, fixed_jumps, fixed_scores)

    if update_labels:
        # [8] component probabilities given the current labels
        occupancy = np.bincount(comp, minlength=n_comp)
        pi = rng.dirichlet(model.beta + occupancy.astype(float))
        # [9] group labels with allocations and U_j integrated out, then a
        # fresh U_j from its conditional under the new label
        masses = _measure_masses(jumps, scores, fixed_jumps, fixed_scores)
        comp = comp.copy()
        for j in range(d):
            log_p = np.log(pi) + _group_log_marginals(
                log_k_groups[j], log_weights, masses
            )
            gumbel = rng.gumbel(size=n_comp)
            comp[j] = int(np.argmax(log_p + gumbel))
            u[j] = rng.gamma(sizes[j], 1.0 / masses[comp[j]])

    # [4] reallocate every observation over the full atom set
    picks = [
        _allocate_group(log_k_groups[j], log_weights[:, int(comp[j])], rng)
        for j in range(d)
    ]
    blocks, occupied = _rebuild_partition(picks)
    k_new = occupied.size

    # [5] auxiliary refresh from the component masses (skipped when the
    # label step already redrew U against the same measure)
    if not update_labels:
        masses = _measure_masses(jumps, scores, fixed_jumps, fixed_scores)
        u = rng.gamma(sizes, 1.0 / masses[comp])

    # [6] conjugate redraw of the distinct kernel parameters
    theta_star = _resample_theta(blocks, latent, k_new, state.nig, rng)

    # [7] base-measure hyperparameters
    nig = refresh_hypers(state.nig, model.base, theta_star, rng)

    diagnostics.update(
        {
            "k": int(k_new),
            "n_jumps": int(jumps.size),
            "accept_sigma": alpha_sigma,
            "accept_phi": alpha_phi,
            "ess_min": float(np.min(ess)) if np.any(np.isfinite(ess)) else math.nan,
            "ess_mean": float(np.mean(ess)) if np.any(np.isfinite(ess)) else math.nan,
        }
    )
    return ChainState(
        blocks=blocks,
        theta_star=theta_star,
        u=u,
        sigma=sigma,
        phi=phi,
        nig=nig,
        comp=comp,
        pi=pi,
        jumps=jumps,
        atom_params=atom_params,
        scores=scores,
        fixed_jumps=fixed_jumps,
        fixed_scores=fixed_scores,
        fixed_atom_params=state.theta_star,
        diagnostics=diagnostics,
    )


def sweep_corm(
    latent: list[np.ndarray],
    model: ModelSpec,
    cfg: ChainConfig,
    state: ChainState,
    steps: dict,
    rng: np.random.Generator,
) -> ChainState:
    """CoRM sweep: every group is its own component, labels never move."""
    return _sweep(latent, model, cfg, state, steps, rng, update_labels=False)


def sweep_ncorm(
    latent: list[np.ndarray],
    model: ModelSpec,
    cfg: ChainConfig,
    state: ChainState,
    steps: dict,
    rng: np.random.Generator,
) -> ChainState:
    """Nested sweep: adds the pi and label updates unless q is one.

    With a single component the label conditional is degenerate, so the
    sweep collapses to the plain CoRM pass over the pooled component.
    """
    if model.q == 1:
        return _sweep(latent, model, cfg, state, steps, rng, update_labels=False)
    return _sweep(latent, model, cfg, state, steps, rng, update_labels=True)


def run_chain(
    data: Sequence[np.ndarray], model: ModelSpec, cfg: ChainConfig
) -> Iterator[tuple[int, ChainState]]:
    """Run the Gibbs chain; yields (iteration, state) after burn-in.

    Sweeps are numbered from 1. A state is emitted when its sweep index i
    satisfies i > burn_in and (i - burn_in - 1) % thinning == 0, so a run
    with iterations = burn_in + 1 emits exactly one state. The proposal
    scales adapt toward a 0.234 acceptance rate during burn-in only, and
    the whole stream is a deterministic function of cfg.seed.
    """
    groups = _as_group_arrays(data)
    model.kernel.validate_data(np.concatenate(groups))
    rng = np.random.default_rng(cfg.seed)
    state = init_state(groups, model, rng)
    latent = [model.kernel.to_latent(y) for y in groups]
    sweep = sweep_ncorm if model.kind == "ncorm" else sweep_corm
    steps = {"sigma": cfg.step_sigma, "phi": cfg.step_phi}
    for i in range(1, cfg.iterations + 1):
        state = sweep(latent, model, cfg, state, steps, rng)
        if i <= cfg.burn_in:
            gain = i ** -0.6
            for name in ("sigma", "phi"):
                alpha = state.diagnostics[f"accept_{name}"]
                if math.isfinite(alpha):
                    scale = math.exp(gain * (alpha - _MH_TARGET_RATE))
                    steps[name] = min(max(steps[name] * scale, 1e-3), 1e3)
        if i > cfg.burn_in and (i - cfg.burn_in - 1) % cfg.thinning == 0:
            yield i, state
