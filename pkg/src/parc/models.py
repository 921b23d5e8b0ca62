"""Concrete planning models, affine fitting from data, and a toy tracker."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bras import TrajectoryPair
from .polytope import AffineMap, HPolytope
from .pwa import PlanningModel, PWASystem, StateLayout, affinize, grid_points

GRAVITY = 9.81


# ---------------------------------------------------------------------------
# Dubins car


DUBINS_LAYOUT = StateLayout(n_w=2, n_k=2, n_p_other=1)


def _dubins_f(t, p, k):
    v, w = k
    th = p[2]
    return np.array([v * np.cos(th), v * np.sin(th), w])


def _dubins_jac(t, p, k):
    v = k[0]
    th = p[2]
    Jp = np.zeros((3, 3))
    Jp[0, 2] = -v * np.sin(th)
    Jp[1, 2] = v * np.cos(th)
    Jk = np.array([[np.cos(th), 0.0], [np.sin(th), 0.0], [0.0, 1.0]])
    return Jp, Jk


def dubins_model() -> PlanningModel:
    """Dubins car ``[v cos(theta), v sin(theta), omega]`` with ``k = [v, omega]``."""
    return PlanningModel(DUBINS_LAYOUT, _dubins_f, _dubins_jac, name="dubins")


def dubins_system(domain: HPolytope, dt: float, tf: float, n_theta: int = 8, n_v: int = 1, v_range=(0.5, 2.0)) -> PWASystem:
    """Affinize the Dubins car on a heading (and optionally speed) grid.

    Linearization points sit at ``p_w = 0``, ``omega = 0``; cells are
    therefore heading sectors, split by speed when ``n_v > 1``.
    """
    pts = grid_points([0, 0, v_range[0], 0, -np.pi], [0, 0, v_range[1], 0, np.pi], [1, 1, n_v, 1, n_theta])
    return affinize(dubins_model(), [pts], domain, dt, tf)


# ---------------------------------------------------------------------------
# single integrator


INTEGRATOR3D_LAYOUT = StateLayout(n_w=3, n_k=3, n_p_other=0)
INTEGRATOR3D_K = HPolytope.box([-0.5] * 3, [0.5] * 3)


def single_integrator_3d() -> PlanningModel:
    """``p_dot = k`` in 3-D; the default parameter box is ``[-0.5, 0.5]^3``."""
    return PlanningModel(
        INTEGRATOR3D_LAYOUT,
        lambda t, p, k: np.array(k, dtype=float),
        lambda t, p, k: (np.zeros((3, 3)), np.eye(3)),
        name="integrator3d",
    )


def integrator_system(n: int, dt: float, tf: float, domain: HPolytope | None = None) -> PWASystem:
    """Exact ``x' = x + dt k`` in ``n`` dimensions (one region per step)."""
    lay = StateLayout(n_w=n, n_k=n, n_p_other=0)
    C = np.eye(2 * n)
    C[:n, n:] = dt * np.eye(n)
    M = AffineMap(C, np.zeros(2 * n))
    return PWASystem.affine(lay, dt, tf, [M] * int(round(tf / dt)), domain)


# ---------------------------------------------------------------------------
# time-switched polynomial planner (one axis)


POLY_LAYOUT = StateLayout(n_w=1, n_k=3, n_p_other=0)


@dataclass(frozen=True)
class PolynomialParams:
    t_pk: float = 1.0
    t_f: float = 3.0

    def __post_init__(self):
        if not 0 < self.t_pk < self.t_f:
            raise ValueError("need 0 < t_pk < t_f")

    def coefficients(self, k) -> tuple[float, float, float, float]:
        kv, ka, kpk = k
        tp = self.t_pk
        T = self.t_f - self.t_pk
        c1 = 12 / tp**3 * kv + 6 / tp**2 * ka - 12 / tp**3 * kpk
        c2 = -6 / tp**2 * kv - 4 / tp * ka + 6 / tp**2 * kpk
        c3 = 12 / T**3 * kpk
        c4 = -6 / T**2 * kpk
        return c1, c2, c3, c4

    def velocity(self, t: float, k) -> float:
        if t < -1e-12 or t > self.t_f + 1e-12:
            raise ValueError(f"time {t} outside [0, {self.t_f}]")
        c1, c2, c3, c4 = self.coefficients(k)
        kv, ka, kpk = k
        if t < self.t_pk:
            return c1 * t**3 / 6 + c2 * t**2 / 2 + ka * t + kv
        s = t - self.t_pk
        return c3 * s**3 / 6 + c4 * s**2 / 2 + kpk

    def position(self, t: float, k) -> float:
        """Displacement from time 0 (closed-form antiderivative)."""
        if t < -1e-12 or t > self.t_f + 1e-12:
            raise ValueError(f"time {t} outside [0, {self.t_f}]")
        c1, c2, c3, c4 = self.coefficients(k)
        kv, ka, kpk = k

        def phase1(s):
            return c1 * s**4 / 24 + c2 * s**3 / 6 + ka * s**2 / 2 + kv * s

        if t <= self.t_pk:
            return phase1(t)
        s = t - self.t_pk
        return phase1(self.t_pk) + c3 * s**4 / 24 + c4 * s**3 / 6 + kpk * s

    def increment_row(self, t0: float, t1: float) -> np.ndarray:
        """Row ``a`` with ``p(t1) - p(t0) = a @ k`` (the motion is linear in k)."""
        return np.array([self.position(t1, e) - self.position(t0, e) for e in np.eye(3)])


def polynomial_model(params: PolynomialParams) -> PlanningModel:
    """One axis of the time-switched polynomial planner, ``k = [k_v, k_a, k_pk]``."""

    def f(t, p, k):
        return np.array([params.velocity(t, k)])

    def jac(t, p, k):
        return np.zeros((1, 1)), np.array([[params.velocity(t, e) for e in np.eye(3)]])

    return PlanningModel(POLY_LAYOUT, f, jac, name="polynomial")


def polynomial_system(params: PolynomialParams, dt: float, domain: HPolytope | None = None) -> PWASystem:
    """Exact time-variant affine discretisation of one polynomial axis."""
    n_steps = int(round(params.t_f / dt))
    maps = []
    for t in range(n_steps):
        C = np.eye(4)
        C[0, 1:] = params.increment_row(t * dt, (t + 1) * dt)
        maps.append(AffineMap(C, np.zeros(4)))
    return PWASystem.affine(POLY_LAYOUT, dt, params.t_f, maps, domain)


# ---------------------------------------------------------------------------
# 2-D near-hover quadrotor


NEAR_HOVER_LAYOUT = StateLayout(n_w=2, n_k=2, n_p_other=4, n_eti=5)


def near_hover_2d_model(m: float = 1.0, inertia: float = 0.01, r: float = 0.25, g: float = GRAVITY) -> PlanningModel:
    """Planar near-hover quadrotor with constant forces ``k = [F_l, F_r]``.

    Planning state ``p = [p_x, p_z, theta, v_x, v_z, omega]``; the augmented
    order is ``[p_x, p_z, F_l, F_r, theta, v_x, v_z, omega]``.
    """

    def f(t, p, k):
        _, _, th, vx, vz, om = p
        F = k[0] + k[1]
        return np.array([vx, vz, om, F * np.sin(th) / m, F * np.cos(th) / m - g, r / inertia * (k[0] - k[1])])

    def jac(t, p, k):
        th = p[2]
        F = k[0] + k[1]
        Jp = np.zeros((6, 6))
        Jp[0, 3] = Jp[1, 4] = Jp[2, 5] = 1.0
        Jp[3, 2] = F * np.cos(th) / m
        Jp[4, 2] = -F * np.sin(th) / m
        Jk = np.zeros((6, 2))
        Jk[3] = np.sin(th) / m
        Jk[4] = np.cos(th) / m
        Jk[5] = [r / inertia, -r / inertia]
        return Jp, Jk

    return PlanningModel(NEAR_HOVER_LAYOUT, f, jac, name="near-hover-2d")


# ---------------------------------------------------------------------------
# least-squares affine fit


class RankDeficiencyError(ValueError):
    def __init__(self, t_index: int):
        super().__init__(f"least-squares design matrix is rank deficient at timestep {t_index}")
        self.t_index = t_index


@dataclass(frozen=True)
class AffineFit:
    """``coef[t, j] = [c_{k_1 j, t}, ..., c_{k_m j, t}, d_{j, t}]`` per planning coordinate ``j``."""

    layout: StateLayout
    dt: float
    tf: float
    coef: np.ndarray
    residuals: np.ndarray

    def maps(self) -> list[AffineMap]:
        lay = self.layout
        out = []
        for t in range(self.coef.shape[0]):
            C = np.eye(lay.n)
            d = np.zeros(lay.n)
            for j, row in enumerate(lay.p_idx):
                C[row, lay.k_idx] = self.coef[t, j, :-1]
                d[row] = self.coef[t, j, -1]
            out.append(AffineMap(C, d))
        return out

    def system(self, domain: HPolytope | None = None) -> PWASystem:
        return PWASystem.affine(self.layout, self.dt, self.tf, self.maps(), domain)

    def to_dict(self) -> dict:
        return {
            "layout": self.layout.to_dict(),
            "dt": self.dt,
            "tf": self.tf,
            "coef": self.coef.tolist(),
            "residuals": self.residuals.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AffineFit":
        return cls(
            StateLayout.from_dict(data["layout"]),
            float(data["dt"]),
            float(data["tf"]),
            np.asarray(data["coef"], dtype=float),
            np.asarray(data["residuals"], dtype=float),
        )


def _grid_rows(t: np.ndarray, grid: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    idx = np.searchsorted(t, grid - tol)
    idx = np.minimum(idx, len(t) - 1)
    if np.any(np.abs(t[idx] - grid) > tol):
        raise ValueError("trajectory time grid does not contain every multiple of dt")
    return idx


def fit_affine_model(trajectories: Sequence[TrajectoryPair], dt: float, tf: float, n_w: int) -> AffineFit:
    """Per-timestep least squares ``p_j(t + dt) - p_j(t) ≈ c_j @ k + d_j``.

    Uses the ``plan`` samples and ``k`` labels of each trajectory.  The
    planning state ``p = [w; p_other]`` is taken from the sample columns.
    """
    if not trajectories:
        raise ValueError("need trajectories to fit")
    n_steps = int(round(tf / dt))
    grid = np.arange(n_steps + 1) * dt
    P = []
    Kmat = []
    for tr in trajectories:
        rows = _grid_rows(tr.t, grid)
        P.append(tr.plan[rows])
        Kmat.append(tr.k)
    P = np.array(P)
    Kmat = np.array(Kmat)
    n_p = P.shape[2]
    n_k = Kmat.shape[1]
    if not 0 < n_w <= n_p:
        raise ValueError("n_w must lie in [1, n_p]")
    layout = StateLayout(n_w, n_k, n_p - n_w)
    X = np.hstack([Kmat, np.ones((len(Kmat), 1))])
    coef = np.zeros((n_steps, n_p, n_k + 1))
    res = np.zeros((n_steps, n_p))
    for t in range(n_steps):
        if np.linalg.matrix_rank(X) < n_k + 1:
            raise RankDeficiencyError(t)
        Y = P[:, t + 1] - P[:, t]
        sol, *_ = np.linalg.lstsq(X, Y, rcond=None)
        coef[t] = sol.T
        res[t] = np.linalg.norm(X @ sol - Y, axis=0)
    return AffineFit(layout, dt, tf, coef, res)


# ---------------------------------------------------------------------------
# toy unicycle tracker


@dataclass(frozen=True)
class TrackerGains:
    k_p: float = 4.0
    k_theta: float = 8.0
    k_v: float = 8.0


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def toy_unicycle_tracker(
    plan_states,
    dt: float,
    k,
    z0,
    gains: TrackerGains = TrackerGains(),
    sim_dt: float | None = None,
) -> TrajectoryPair:
    """Track a piecewise-linear workspace plan with a 4-D unicycle.

    ``plan_states`` holds planning states ``[p_x, p_y, theta]`` at the
    ``dt`` grid.  The tracker state is ``z = [p_x, p_y, theta, v]``.  The
    desired velocity vector is the plan's segment velocity plus ``k_p``
    times the position error; heading and speed follow it proportionally.
    Integration is RK4 with step ``sim_dt`` (default ``dt / 10``).
    """
    plan = np.atleast_2d(np.asarray(plan_states, dtype=float))
    n_steps = len(plan) - 1
    sim_dt = dt / 10 if sim_dt is None else sim_dt
    sub = int(round(dt / sim_dt))
    if sub < 10 or abs(sub * sim_dt - dt) > 1e-9 * dt:
        raise ValueError("sim_dt must divide dt with at least 10 substeps")
    h = dt / sub

    def ref(t):
        i = min(int(np.floor(t / dt + 1e-12)), n_steps - 1)
        g = (t - i * dt) / dt
        vel = (plan[i + 1, :2] - plan[i, :2]) / dt
        return plan[i, :2] + g * (plan[i + 1, :2] - plan[i, :2]), vel

    def rhs(t, z):
        r, rdot = ref(t)
        px, py, th, v = z
        vd = rdot + gains.k_p * (r - z[:2])
        th_d = np.arctan2(vd[1], vd[0])
        u_w = gains.k_theta * _wrap(th_d - th)
        u_a = gains.k_v * (np.hypot(vd[0], vd[1]) - v)
        return np.array([v * np.cos(th), v * np.sin(th), u_w, u_a])

    z = np.asarray(z0, dtype=float).copy()
    times = [0.0]
    realized = [z[:3].copy()]
    for n in range(n_steps * sub):
        t = n * h
        s1 = rhs(t, z)
        s2 = rhs(t + h / 2, z + h / 2 * s1)
        s3 = rhs(t + h / 2, z + h / 2 * s2)
        s4 = rhs(t + h, z + h * s3)
        z = z + h / 6 * (s1 + 2 * s2 + 2 * s3 + s4)
        times.append((n + 1) * h)
        realized.append(z[:3].copy())
    times = np.array(times)
    idx = np.minimum((times / dt + 1e-9).astype(int), n_steps - 1)
    gam = (times - idx * dt) / dt
    planned = plan[idx] + gam[:, None] * (plan[idx + 1] - plan[idx])
    return TrajectoryPair(times, planned, np.array(realized), np.asarray(k, dtype=float))


MODEL_NAMES = ("dubins", "integrator3d", "polynomial", "near-hover-2d")
