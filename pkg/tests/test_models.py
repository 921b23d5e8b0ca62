import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from parc.bras import TrajectoryPair, estimate_error
from parc.models import (
    INTEGRATOR3D_K,
    NEAR_HOVER_LAYOUT,
    AffineFit,
    PolynomialParams,
    RankDeficiencyError,
    TrackerGains,
    dubins_model,
    fit_affine_model,
    integrator_system,
    near_hover_2d_model,
    polynomial_model,
    polynomial_system,
    single_integrator_3d,
    toy_unicycle_tracker,
)
from parc.polytope import AffineMap, HPolytope, support
from parc.pwa import PWASystem, StateLayout, affinize, check_eti, finite_difference_jacobian, rollout

BOX5 = HPolytope.box([-1] * 5, [1] * 5)


# Dubins ----------------------------------------------------------------------


def test_dubins_vector_field_examples():
    f = dubins_model().f
    assert np.allclose(f(0, [0, 0, 0], [1, 0]), [1, 0, 0])
    assert np.allclose(f(0, [0, 0, np.pi / 2], [2, 0.3]), [0, 2, 0.3], atol=1e-15)


def test_dubins_jacobian_matches_finite_differences():
    m = dubins_model()
    p = np.array([0.0, 0.0, np.pi / 5])
    k = np.array([1.3, -0.2])
    Jp, Jk = m.jac(0.0, p, k)
    Fp, Fk = finite_difference_jacobian(m.f, 0.0, p, k, 1e-6)
    assert np.max(np.abs(Jp - Fp)) < 1e-6 and np.max(np.abs(Jk - Fk)) < 1e-6


@settings(max_examples=10, deadline=None)
@given(st.lists(st.integers(-31, 31), min_size=1, max_size=6, unique=True))
def test_dubins_affinizations_are_eti(ticks):
    dom = HPolytope.box([-5, -5, 0.5, -1, -np.pi], [5, 5, 2, 1, np.pi])
    pts = np.array([[0, 0, 1.2, 0, 0.1 * i] for i in ticks])
    assert check_eti(affinize(dubins_model(), [pts], dom, 0.5, 1.0), 4).passed


# single integrator ----------------------------------------------------------------------


def test_single_integrator_examples():
    m = single_integrator_3d()
    assert np.allclose(m.f(0, np.zeros(3), [0.5, 0, 0]), [0.5, 0, 0])
    assert np.allclose(m.f(0, np.ones(3), np.zeros(3)), 0)
    for e in np.eye(3):
        assert support(INTEGRATOR3D_K, e) == pytest.approx(0.5)
        assert support(INTEGRATOR3D_K, -e) == pytest.approx(0.5)


def test_single_integrator_discrete_map():
    s = integrator_system(3, 0.2, 0.4)
    C = s.map_at(0, 0).C
    ref = np.eye(6)
    ref[:3, 3:] = 0.2 * np.eye(3)
    assert np.array_equal(C, ref) and np.all(s.map_at(1, 0).d == 0)


# polynomial ----------------------------------------------------------------------


def exact_velocity(t, k, tp=Fraction(1), tf=Fraction(3)):
    """Rational evaluation of the printed velocity polynomials."""
    kv, ka, kpk = (Fraction(x) for x in k)
    t = Fraction(t)
    T = tf - tp
    c1 = 12 / tp**3 * kv + 6 / tp**2 * ka - 12 / tp**3 * kpk
    c2 = -6 / tp**2 * kv - 4 / tp * ka + 6 / tp**2 * kpk
    c3 = 12 / T**3 * kpk
    c4 = -6 / T**2 * kpk
    if t < tp:
        return c1 * t**3 / 6 + c2 * t**2 / 2 + ka * t + kv
    s = t - tp
    return c3 * s**3 / 6 + c4 * s**2 / 2 + kpk


K_SAMPLES = [(0.3, -0.2, 0.7), (1, 0, 0), (0, 1, 0), (0, 0, 1), (-0.4, 0.25, -1.5)]


@pytest.mark.parametrize("k", K_SAMPLES)
def test_polynomial_velocity_boundary_values(k):
    pp = PolynomialParams()
    assert exact_velocity(1, k) == Fraction(k[2])
    assert exact_velocity(3, k) == 0
    assert exact_velocity(0, k) == Fraction(k[0])
    assert pp.velocity(1.0, k) == pytest.approx(k[2], abs=1e-12)
    assert pp.velocity(3.0, k) == pytest.approx(0.0, abs=1e-12)
    for t in np.linspace(0, 3, 13):
        assert pp.velocity(t, k) == pytest.approx(float(exact_velocity(Fraction(t).limit_denominator(1000), k)), abs=1e-12)


def test_polynomial_outside_horizon():
    with pytest.raises(ValueError):
        PolynomialParams().velocity(3.5, (0, 0, 1))
    with pytest.raises(ValueError):
        PolynomialParams(t_pk=3, t_f=3)


@pytest.mark.parametrize("k", K_SAMPLES)
def test_polynomial_exact_increment_matches_quadrature(k):
    pp = PolynomialParams()
    s = polynomial_system(pp, 0.5)
    r = rollout(s, [0.0, *k])
    for t in range(s.n_steps):
        ref, _ = quad(lambda u: pp.velocity(u, k), t * 0.5, (t + 1) * 0.5, epsabs=1e-13)
        assert r.states[t + 1, 0] - r.states[t, 0] == pytest.approx(ref, abs=1e-9)


def test_polynomial_system_is_eti_and_affine():
    s = polynomial_system(PolynomialParams(), 0.5)
    assert check_eti(s).passed
    assert all(len(step) == 1 for step in s.steps)


def test_polynomial_generic_path_converges_to_exact():
    pp = PolynomialParams()
    k = (0.3, -0.2, 0.7)
    m = polynomial_model(pp)
    gaps = []
    for dt in [0.1, 0.01]:
        n = int(round(3 / dt))
        dom = HPolytope.box([-50, -5, -5, -5], [50, 5, 5, 5])
        s = affinize(m, [np.zeros((1, 4))], dom, dt, 3.0)
        gaps.append(abs(rollout(s, [0.0, *k]).states[-1, 0] - pp.position(3.0, k)))
        assert len(s.steps) == n
    assert gaps[1] < gaps[0] and gaps[1] < 1e-2


# near hover ----------------------------------------------------------------------


def test_near_hover_hover_equilibrium():
    m = near_hover_2d_model()
    p = np.zeros(6)
    assert np.allclose(m.f(0, p, [9.81 / 2, 9.81 / 2]), 0)
    Jp, Jk = m.jac(0, np.array([0, 0, 0.2, 0.1, 0, 0]), np.array([5.0, 4.0]))
    Fp, Fk = finite_difference_jacobian(m.f, 0, np.array([0, 0, 0.2, 0.1, 0, 0]), np.array([5.0, 4.0]), 1e-6)
    assert np.allclose(Jp, Fp, atol=1e-5) and np.allclose(Jk, Fk, atol=1e-5)
    assert NEAR_HOVER_LAYOUT.n_other == 3


# affine fit ----------------------------------------------------------------------


def rollout_pairs(system, ks, p0):
    lay = system.layout
    out = []
    for k in ks:
        r = rollout(system, lay.augment(p0, k))
        P = r.states[:, lay.p_idx]
        out.append(TrajectoryPair(r.times, P, P, k))
    return out


def random_affine_system(rng, lay, dt, tf):
    maps = []
    for _ in range(int(round(tf / dt))):
        C = np.eye(lay.n)
        d = np.zeros(lay.n)
        C[np.ix_(lay.p_idx, lay.k_idx)] = rng.normal(size=(lay.n_p, lay.n_k))
        d[lay.p_idx] = rng.normal(size=lay.n_p)
        maps.append(AffineMap(C, d))
    return PWASystem.affine(lay, dt, tf, maps)


def test_fit_recovers_known_affine_model(rng):
    lay = StateLayout(2, 3, 1)
    truth = random_affine_system(rng, lay, 0.5, 2.0)
    pairs = rollout_pairs(truth, rng.uniform(-1, 1, (12, 3)), [0.1, -0.2, 0.3])
    fit = fit_affine_model(pairs, 0.5, 2.0, 2)
    for t, M in enumerate(fit.maps()):
        assert np.max(np.abs(M.C - truth.map_at(t, 0).C)) < 1e-8
        assert np.max(np.abs(M.d - truth.map_at(t, 0).d)) < 1e-8
    assert np.all(fit.residuals < 1e-8)


def test_fit_closed_form_family():
    # x(t + dt) = x(t) + 0.1 v, y unchanged
    pairs = []
    for v in [-1.0, 0.0, 0.5, 2.0]:
        for w in [-0.3, 0.4]:
            t = np.arange(4) * 0.5
            plan = np.column_stack([0.1 * v * np.arange(4), np.zeros(4)])
            pairs.append(TrajectoryPair(t, plan, plan, [v, w]))
    fit = fit_affine_model(pairs, 0.5, 1.5, 2)
    for t in range(3):
        assert fit.coef[t, 0] == pytest.approx([0.1, 0, 0], abs=1e-12)
        assert fit.coef[t, 1] == pytest.approx([0, 0, 0], abs=1e-12)


def test_fit_noisy_matches_normal_equations(rng):
    ks = rng.uniform(-1, 1, (20, 2))
    t = np.arange(3) * 0.5
    pairs = [TrajectoryPair(t, rng.normal(size=(3, 2)), np.zeros((3, 2)), k) for k in ks]
    fit = fit_affine_model(pairs, 0.5, 1.0, 1)
    X = np.hstack([ks, np.ones((20, 1))])
    P = np.array([p.plan for p in pairs])
    for step in range(2):
        Y = P[:, step + 1] - P[:, step]
        ref = np.linalg.solve(X.T @ X, X.T @ Y)
        assert np.allclose(fit.coef[step], ref.T, atol=1e-10)
        assert np.allclose(fit.residuals[step], np.linalg.norm(X @ ref - Y, axis=0), atol=1e-10)
        assert np.all(fit.residuals[step] > 0)


def test_fit_is_fixed_point_of_its_rollouts(rng):
    ks = rng.uniform(-1, 1, (10, 2))
    t = np.arange(5) * 0.25
    pairs = [TrajectoryPair(t, rng.normal(size=(5, 3)), np.zeros((5, 3)), k) for k in ks]
    fit = fit_affine_model(pairs, 0.25, 1.0, 2)
    p0 = pairs[0].plan[0]
    refit = fit_affine_model(rollout_pairs(fit.system(), ks, p0), 0.25, 1.0, 2)
    assert np.allclose(refit.coef, fit.coef, atol=1e-10)


def test_fit_rank_deficiency_names_timestep():
    t = np.arange(3) * 0.5
    pairs = [TrajectoryPair(t, np.zeros((3, 1)), np.zeros((3, 1)), [1.0, 2.0]) for _ in range(5)]
    with pytest.raises(RankDeficiencyError) as exc:
        fit_affine_model(pairs, 0.5, 1.0, 1)
    assert exc.value.t_index == 0


def test_fit_misaligned_grid():
    pairs = [TrajectoryPair([0, 0.3, 1.0], np.zeros((3, 1)), np.zeros((3, 1)), [k]) for k in (0.0, 1.0, 2.0)]
    with pytest.raises(ValueError):
        fit_affine_model(pairs, 0.5, 1.0, 1)


def test_fit_round_trip(rng):
    lay = StateLayout(1, 2, 0)
    truth = random_affine_system(rng, lay, 0.5, 1.0)
    fit = fit_affine_model(rollout_pairs(truth, rng.uniform(-1, 1, (5, 2)), [0.0]), 0.5, 1.0, 1)
    again = AffineFit.from_dict(json.loads(json.dumps(fit.to_dict())))
    assert np.array_equal(again.coef, fit.coef) and again.layout == fit.layout
    assert check_eti(again.system()).passed


# tracker ----------------------------------------------------------------------

LINE = np.array([[0.5 * i, 0.0, 0.0] for i in range(9)])


def envelope(tp, dt=0.5, tf=4.0):
    return estimate_error([tp], BOX5, dt, tf, 2)


def test_tracker_straight_line_high_gains():
    tp = toy_unicycle_tracker(LINE, 0.5, [1.0, 0.0], [0, 0, 0, 1.0], TrackerGains(16, 32, 32))
    assert envelope(tp).e_int.max() < 1e-2
    assert tp.t[0] == 0 and tp.t[-1] == pytest.approx(4.0)
    assert len(tp.t) == 8 * 10 + 1


def test_tracker_initial_offset_bounds_error():
    tp = toy_unicycle_tracker(LINE, 0.5, [1.0, 0.0], [0, 0.1, 0, 1.0])
    assert envelope(tp).e_int[0, 1] >= 0.1


def test_tracker_zero_gains_drift():
    tp = toy_unicycle_tracker(LINE, 0.5, [1.0, 0.0], [0, 0.1, 0.2, 1.0], TrackerGains(0, 0, 0))
    e = envelope(tp).e_int
    assert np.all(np.diff(e[:, 1]) > 0)
    assert e[-1, 1] > 0.5


def test_tracker_gain_ladder_monotone():
    means = []
    for s in [0.5, 1, 2, 4, 8]:
        g = TrackerGains(4 * s, 8 * s, 8 * s)
        tp = toy_unicycle_tracker(LINE, 0.5, [1.0, 0.0], [0, 0.1, 0, 1.0], g, sim_dt=0.5 / max(10, int(40 * s)))
        means.append(np.mean(np.abs(tp.plan[:, 1] - tp.realized[:, 1])))
    assert np.all(np.diff(means) < 0)


def test_tracker_rejects_coarse_sim_step():
    with pytest.raises(ValueError):
        toy_unicycle_tracker(LINE, 0.5, [1.0, 0.0], [0, 0, 0, 1.0], sim_dt=0.1)
