"""Tests for directing measures, scores, and prior trajectory simulation."""

import math

import numpy as np
import pytest
from scipy import integrate

from corms.errors import DegenerateMeasureError, JumpCapError
from corms.measures import (
    BetaDirecting,
    CormVector,
    CrmTrajectory,
    GammaScores,
    StableDirecting,
    attach_scores,
    directing_measure,
    fk_prior_trajectory,
    marginal_levy_intensity,
    normalize,
    sample_nested_prior,
)
from corms.numerics import log_gamma

UNIFORM_BASE = lambda rng, n: rng.uniform(size=n)


def stable_marginal_closed_form(s: float, sigma: float) -> float:
    return sigma * s ** (-1.0 - sigma) / math.exp(log_gamma(1.0 - sigma))


def test_marginal_intensity_stable_gamma_identity():
    # the defining compound integral must reproduce the phi-free closed form
    for s in (0.5, 1.0, 2.0):
        for sigma in (0.25, 0.5, 0.75):
            for phi in (0.5, 1.0, 3.0):
                dm = StableDirecting(sigma=sigma, phi=phi)
                got = marginal_levy_intensity(dm, GammaScores(phi), s)
                want = stable_marginal_closed_form(s, sigma)
                assert got == pytest.approx(want, rel=1e-6)


def test_marginal_intensity_frozen_point():
    # s=1, sigma=0.5: 0.5 / Gamma(0.5) = 0.28209479177387814
    dm = StableDirecting(sigma=0.5, phi=1.0)
    got = marginal_levy_intensity(dm, GammaScores(1.0), 1.0)
    assert got == pytest.approx(0.28209479177387814, rel=1e-8)


def test_marginal_intensity_beta_gamma_is_gamma_process():
    # beta directing with gamma(phi) scores has marginal s^-1 e^-s
    for s in (0.3, 1.0, 2.5):
        for phi in (0.7, 1.0, 2.0, 5.0):
            got = marginal_levy_intensity(BetaDirecting(phi=phi), GammaScores(phi), s)
            assert got == pytest.approx(math.exp(-s) / s, rel=1e-6)


def test_marginal_intensity_matches_scipy_route():
    dm = StableDirecting(sigma=0.4, phi=2.0)
    sd = GammaScores(2.0)
    s = 1.7

    def raw(z):
        score_part = float(sd.density(np.asarray([s / z]))[0])
        return score_part / z * float(dm.density(np.asarray([z]))[0])

    ref, _ = integrate.quad(raw, 0.0, np.inf)
    assert marginal_levy_intensity(dm, sd, s) == pytest.approx(ref, rel=1e-7)


def test_stable_tail_and_inverse_roundtrip():
    dm = StableDirecting(sigma=0.6, phi=2.5)
    z = np.array([1e-4, 0.01, 1.0, 30.0])
    back = dm.inverse_tail(dm.tail_mass(z))
    assert np.allclose(back, z, rtol=1e-12)


def test_beta_tail_closed_form_phi_one():
    dm = BetaDirecting(phi=1.0)
    assert float(dm.tail_mass(0.2)) == pytest.approx(-math.log(0.2), rel=1e-12)
    assert float(dm.inverse_tail(2.0)) == pytest.approx(math.exp(-2.0), rel=1e-12)


def test_beta_tail_quadrature_vs_closed_phi_two():
    # phi=2: integral_z^1 u^-1 (1-u) du = -ln z - (1 - z)
    dm = BetaDirecting(phi=2.0)
    for z in (0.05, 0.3, 0.8):
        want = -math.log(z) - (1.0 - z)
        assert float(dm.tail_mass(z)) == pytest.approx(want, rel=1e-9)


def test_beta_tail_vs_scipy_small_phi():
    # phi < 1 has an integrable singularity at the upper endpoint
    dm = BetaDirecting(phi=0.4)
    for z in (1e-6, 0.01, 0.4, 0.9):
        want, _ = integrate.quad(
            lambda u: u ** -1.0 * (1.0 - u) ** -0.6, z, 1.0, points=[1.0]
        )
        assert float(dm.tail_mass(z)) == pytest.approx(want, rel=1e-9)


def test_beta_inverse_roundtrip_general_phi():
    for phi in (0.4, 2.0, 7.5):
        dm = BetaDirecting(phi=phi)
        z = np.array([1e-5, 0.02, 0.45, 0.93])
        back = dm.inverse_tail(dm.tail_mass(z))
        assert np.allclose(back, z, rtol=1e-8)


def test_directing_measure_factory_and_validation():
    assert isinstance(directing_measure("stable", sigma=0.3, phi=2.0), StableDirecting)
    assert isinstance(directing_measure("beta", phi=2.0), BetaDirecting)
    with pytest.raises(ValueError):
        directing_measure("poisson")
    with pytest.raises(ValueError):
        StableDirecting(sigma=1.0, phi=1.0)
    with pytest.raises(ValueError):
        GammaScores(0.0)


def test_fk_count_calibration():
    # E[# jumps above eps] = tail_mass(eps) = (2/pi) * eps^-0.5 at sigma=0.5, phi=1
    dm = StableDirecting(sigma=0.5, phi=1.0)
    eps = 1e-4
    want = float(dm.tail_mass(eps))
    assert want == pytest.approx(200.0 / math.pi, rel=1e-12)
    rng = np.random.default_rng(7)
    counts = [fk_prior_trajectory(dm, UNIFORM_BASE, eps, rng).size for _ in range(400)]
    mean = np.mean(counts)
    se = np.std(counts) / math.sqrt(len(counts))
    assert abs(mean - want) <= 3.0 * se


def test_fk_jumps_strictly_decreasing_and_above_eps():
    dm = StableDirecting(sigma=0.7, phi=0.8)
    rng = np.random.default_rng(21)
    tr = fk_prior_trajectory(dm, UNIFORM_BASE, 1e-3, rng)
    assert np.all(np.diff(tr.jumps) < 0.0)
    assert tr.jumps[-1] > 1e-3
    assert tr.atoms.shape == tr.jumps.shape


def test_fk_numeric_inverse_matches_closed_form_same_seed():
    dm = StableDirecting(sigma=0.5, phi=1.0)
    t1 = fk_prior_trajectory(dm, UNIFORM_BASE, 1e-2, np.random.default_rng(9))
    t2 = fk_prior_trajectory(
        dm, UNIFORM_BASE, 1e-2, np.random.default_rng(9), force_numeric_inverse=True
    )
    assert t1.size == t2.size
    assert np.allclose(t1.jumps, t2.jumps, rtol=1e-9)


def test_fk_beta_total_mass_calibration():
    # E[sum of retained jumps] = integral_eps^1 z nu*(dz) = (1-eps)^phi / phi
    dm = BetaDirecting(phi=2.0)
    eps = 1e-3
    want = (1.0 - eps) ** 2.0 / 2.0
    rng = np.random.default_rng(13)
    masses = [
        fk_prior_trajectory(dm, UNIFORM_BASE, eps, rng).total_mass()
        for _ in range(600)
    ]
    mean = np.mean(masses)
    se = np.std(masses) / math.sqrt(len(masses))
    assert abs(mean - want) <= 3.0 * se


def test_fk_determinism():
    dm = StableDirecting(sigma=0.5, phi=2.0)
    a = fk_prior_trajectory(dm, UNIFORM_BASE, 1e-3, np.random.default_rng(5))
    b = fk_prior_trajectory(dm, UNIFORM_BASE, 1e-3, np.random.default_rng(5))
    assert np.array_equal(a.jumps, b.jumps)
    assert np.array_equal(a.atoms, b.atoms)


def test_fk_jump_cap():
    dm = StableDirecting(sigma=0.5, phi=1.0)
    with pytest.raises(JumpCapError):
        fk_prior_trajectory(dm, UNIFORM_BASE, 1e-9, np.random.default_rng(1),
                            max_jumps=1000)


def test_trajectory_validation():
    with pytest.raises(ValueError):
        CrmTrajectory(jumps=np.array([1.0, 2.0]), atoms=np.zeros(2), epsilon=0.1)
    with pytest.raises(ValueError):
        CrmTrajectory(jumps=np.array([1.0, -0.5]), atoms=np.zeros(2), epsilon=0.1)
    with pytest.raises(ValueError):
        CrmTrajectory(jumps=np.array([1.0, 0.05]), atoms=np.zeros(2), epsilon=0.1)


def test_attach_scores_and_normalize():
    dm = StableDirecting(sigma=0.5, phi=3.0)
    rng = np.random.default_rng(2)
    tr = fk_prior_trajectory(dm, UNIFORM_BASE, 1e-3, rng)
    cv = attach_scores(tr, GammaScores(3.0), 4, rng)
    assert cv.scores.shape == (4, tr.size)
    for j in range(4):
        w = normalize(cv, j)
        assert w.shape == (tr.size,)
        assert np.all(w > 0.0)
        assert float(np.sum(w)) == pytest.approx(1.0, abs=1e-12)


def test_unit_scores_reduce_to_driving_weights():
    dm = StableDirecting(sigma=0.5, phi=1.0)
    rng = np.random.default_rng(4)
    tr = fk_prior_trajectory(dm, UNIFORM_BASE, 1e-3, rng)
    cv = CormVector(trajectory=tr, scores=np.ones((2, tr.size)))
    w = normalize(cv, 0)
    assert np.allclose(w, tr.jumps / tr.jumps.sum(), rtol=1e-14)


def test_score_moments():
    sd = GammaScores(2.5)
    rng = np.random.default_rng(17)
    draws = sd.sample(rng, size=200_000)
    assert np.mean(draws) == pytest.approx(2.5, rel=0.02)
    assert sd.cv_squared == pytest.approx(1.0 / 2.5)
    assert float(sd.log_laplace(np.asarray(1.0))) == pytest.approx(
        -2.5 * math.log(2.0)
    )


def test_score_tilted_moment_matches_quadrature():
    sd = GammaScores(1.7)
    t, n = 0.8, 3
    ref, _ = integrate.quad(
        lambda m: math.exp(-t * m) * m ** n * float(sd.density(np.asarray([m]))[0]),
        0.0,
        np.inf,
    )
    assert float(sd.log_tilted_moment(np.asarray(t), n)) == pytest.approx(
        math.log(ref), rel=1e-9
    )


def test_nested_prior_shapes_and_tau1():
    dm = StableDirecting(sigma=0.5, phi=1.0)
    sd = GammaScores(1.0)
    rng = np.random.default_rng(31)
    q, beta = 3, 0.8
    sums = []
    for _ in range(3000):
        pi = rng.dirichlet(np.full(q, beta))
        sums.append(float(np.sum(pi ** 2)))
    want = (beta + 1.0) / (q * beta + 1.0)
    mean = np.mean(sums)
    se = np.std(sums) / math.sqrt(len(sums))
    assert abs(mean - want) <= 3.0 * se
    draw = sample_nested_prior(q, beta, dm, sd, 6, UNIFORM_BASE, 1e-3, rng)
    assert draw.scores.shape == (q, draw.trajectory.size)
    assert draw.pi.shape == (q,)
    assert draw.labels.shape == (6,)
    assert set(draw.labels) <= set(range(q))
    w = draw.group_weights(2)
    assert float(np.sum(w)) == pytest.approx(1.0, abs=1e-12)


def test_normalize_zero_mass_raises():
    tr = CrmTrajectory(jumps=np.array([1.0]), atoms=np.zeros(1), epsilon=0.5)
    cv = CormVector(trajectory=tr, scores=np.array([[1.0]]))
    cv.scores = np.array([[0.0]])  # force degenerate state past validation
    with pytest.raises(DegenerateMeasureError):
        normalize(cv, 0)
