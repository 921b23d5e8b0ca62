"""Discrete-time, time-variant piecewise-affine (PWA) planning systems.

The augmented state is ordered ``[w; k; p_other]``: workspace coordinates,
then the (constant) trajectory parameters, then the remaining planning
states.  Region indices and timestep indices are 0-based throughout.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .polytope import (
    MEMBERSHIP_TOL,
    AffineMap,
    chebyshev_center,
    HPolytope,
    PolytopeError,
    contains_point,
    convex_hull_pair,
    intersect,
    is_empty,
    vertex_enumeration,
)

ETI_TOL = 1e-10


class OutOfDomainError(ValueError):
    """A state lies in no PWA region at the queried timestep."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class RolloutWarning(UserWarning):
    pass


@dataclass(frozen=True)
class StateLayout:
    n_w: int
    n_k: int
    n_p_other: int
    n_eti: int | None = None

    def __post_init__(self):
        if min(self.n_w, self.n_k, self.n_p_other) < 0:
            raise ValueError("layout dimensions must be nonnegative")
        if self.n_eti is None:
            object.__setattr__(self, "n_eti", self.n_w + self.n_k)
        if not self.n_w + self.n_k <= self.n_eti <= self.n:
            raise ValueError(f"n_eti={self.n_eti} must lie in [{self.n_w + self.n_k}, {self.n}]")

    @property
    def n(self) -> int:
        return self.n_w + self.n_k + self.n_p_other

    @property
    def n_p(self) -> int:
        return self.n_w + self.n_p_other

    @property
    def n_other(self) -> int:
        return self.n - self.n_eti

    @property
    def w_idx(self) -> list[int]:
        return list(range(self.n_w))

    @property
    def k_idx(self) -> list[int]:
        return list(range(self.n_w, self.n_w + self.n_k))

    @property
    def other_idx(self) -> list[int]:
        return list(range(self.n_w + self.n_k, self.n))

    @property
    def p_idx(self) -> list[int]:
        """Augmented indices of the planning state ``p = [w; p_other]``."""
        return self.w_idx + self.other_idx

    def augment(self, p, k) -> np.ndarray:
        p = np.asarray(p, dtype=float).reshape(-1)
        k = np.asarray(k, dtype=float).reshape(-1)
        return np.concatenate([p[: self.n_w], k, p[self.n_w:]])

    def split(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Augmented state -> (p, k)."""
        x = np.asarray(x, dtype=float)
        return x[..., self.p_idx], x[..., self.k_idx]

    def to_dict(self) -> dict:
        return {"n_w": self.n_w, "n_k": self.n_k, "n_p_other": self.n_p_other, "n_eti": self.n_eti}

    @classmethod
    def from_dict(cls, data: dict) -> "StateLayout":
        return cls(int(data["n_w"]), int(data["n_k"]), int(data["n_p_other"]), data.get("n_eti"))


@dataclass(frozen=True)
class PWARegion:
    region: HPolytope
    map: AffineMap


@dataclass(frozen=True)
class PWASystem:
    layout: StateLayout
    dt: float
    tf: float
    steps: tuple[tuple[PWARegion, ...], ...]

    def __post_init__(self):
        ratio = self.tf / self.dt
        n = int(round(ratio))
        if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"tf={self.tf} is not a positive integer multiple of dt={self.dt}")
        steps = tuple(tuple(regions) for regions in self.steps)
        if len(steps) != n:
            raise ValueError(f"expected {n} timesteps, got {len(steps)}")
        for t, regions in enumerate(steps):
            if not regions:
                raise ValueError(f"timestep {t} has no regions")
            for r in regions:
                if r.region.dim != self.layout.n or r.map.dim != self.layout.n:
                    raise ValueError(f"region at timestep {t} does not match layout dimension {self.layout.n}")
        object.__setattr__(self, "steps", steps)

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def n(self) -> int:
        return self.layout.n

    def map_at(self, t_index: int, mode: int) -> AffineMap:
        return self.steps[t_index][mode].map

    def to_dict(self) -> dict:
        return {
            "layout": self.layout.to_dict(),
            "dt": self.dt,
            "tf": self.tf,
            "steps": [
                [{"region": r.region.to_dict(), "C": r.map.C.tolist(), "d": r.map.d.tolist()} for r in regions]
                for regions in self.steps
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PWASystem":
        steps = tuple(
            tuple(PWARegion(HPolytope.from_dict(r["region"]), AffineMap(np.asarray(r["C"], dtype=float), np.asarray(r["d"], dtype=float))) for r in regions)
            for regions in data["steps"]
        )
        return cls(StateLayout.from_dict(data["layout"]), float(data["dt"]), float(data["tf"]), steps)

    @classmethod
    def affine(cls, layout: StateLayout, dt: float, tf: float, maps: Sequence[AffineMap], domain: HPolytope | None = None):
        """Single-region (time-variant affine) system."""
        domain = domain if domain is not None else HPolytope.full(layout.n)
        return cls(layout, dt, tf, tuple((PWARegion(domain, m),) for m in maps))


ModeSequence = tuple


@dataclass
class Rollout:
    """Discrete states, modes, and the linearly interpolated dense path.

    ``exit_step`` is the first timestep whose state lies in no region; the
    arrays are truncated there.
    """

    states: np.ndarray
    modes: tuple
    times: np.ndarray
    dense_times: np.ndarray
    dense: np.ndarray
    exit_step: int | None = None

    @property
    def ok(self) -> bool:
        return self.exit_step is None


@dataclass
class PlanningModel:
    """Continuous planning dynamics ``p_dot = f(t, p, k)``.

    ``jacobian(t, p, k)`` returns ``(df/dp, df/dk)``; when omitted, central
    finite differences with step ``fd_step`` are used.
    """

    layout: StateLayout
    f: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    jacobian: Callable[[float, np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None
    fd_step: float = 1e-6
    name: str = field(default="model")

    def jac(self, t: float, p, k) -> tuple[np.ndarray, np.ndarray]:
        p = np.asarray(p, dtype=float)
        k = np.asarray(k, dtype=float)
        if self.jacobian is not None:
            Jp, Jk = self.jacobian(t, p, k)
            return np.asarray(Jp, dtype=float), np.asarray(Jk, dtype=float)
        return finite_difference_jacobian(self.f, t, p, k, self.fd_step)


def finite_difference_jacobian(f, t, p, k, h=1e-6):
    p = np.asarray(p, dtype=float)
    k = np.asarray(k, dtype=float)
    f0 = np.asarray(f(t, p, k), dtype=float)
    Jp = np.empty((f0.size, p.size))
    Jk = np.empty((f0.size, k.size))
    for j in range(p.size):
        e = np.zeros(p.size)
        e[j] = h
        Jp[:, j] = (np.asarray(f(t, p + e, k)) - np.asarray(f(t, p - e, k))) / (2 * h)
    for j in range(k.size):
        e = np.zeros(k.size)
        e[j] = h
        Jk[:, j] = (np.asarray(f(t, p, k + e)) - np.asarray(f(t, p, k - e))) / (2 * h)
    return Jp, Jk


# ---------------------------------------------------------------------------
# linearization points and regions


def grid_points(lo, hi, counts) -> np.ndarray:
    """Uniform grid over a box; a count of 1 places the midpoint."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    axes = []
    for a, b, c in zip(lo, hi, counts):
        c = int(c)
        if c < 1:
            raise ValueError("grid counts must be >= 1")
        if c == 1:
            axes.append(np.array([(a + b) / 2]))
        else:
            axes.append(a + (b - a) * (np.arange(c) + 0.5) / c)
    return np.array(list(itertools.product(*axes)))


def uniform_points(lo, hi, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return lo + (hi - lo) * rng.random((n, lo.size))


def voronoi_regions(points, domain: HPolytope, tol: float = 1e-9) -> list[HPolytope]:
    """Voronoi cells of ``points`` clipped to ``domain``.

    Cell ``i`` has one bisector row ``(2 x_j - 2 x_i)^T x <= |x_j|^2 - |x_i|^2``
    per other point ``j``, followed by the domain rows.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if len(X) == 0:
        raise ValueError("need at least one linearization point")
    if X.shape[1] != domain.dim:
        raise ValueError("linearization points do not match domain dimension")
    for i, j in itertools.combinations(range(len(X)), 2):
        if np.linalg.norm(X[i] - X[j]) <= tol:
            raise ValueError(f"duplicate linearization points {i} and {j}")
    sq = np.sum(X**2, axis=1)
    cells = []
    for i in range(len(X)):
        others = [j for j in range(len(X)) if j != i]
        A = 2 * X[others] - 2 * X[i]
        b = sq[others] - sq[i]
        cells.append(intersect(HPolytope(A.reshape(-1, X.shape[1]), b), domain))
    return cells


def _augmented_step(model: PlanningModel, t: float, x: np.ndarray, dt: float):
    """One Euler step of the planning model in augmented coordinates, and its Jacobian."""
    lay = model.layout
    p, k = lay.split(x)
    f = np.asarray(model.f(t, p, k), dtype=float)
    Jp, Jk = model.jac(t, p, k)
    g = np.array(x, dtype=float)
    g[lay.p_idx] = p + dt * f
    n = lay.n
    G = np.eye(n)
    pi = lay.p_idx
    G[np.ix_(pi, pi)] += dt * Jp
    G[np.ix_(pi, lay.k_idx)] = dt * Jk
    return g, G


def affinize(
    model: PlanningModel,
    points_per_step: Sequence,
    domain: HPolytope,
    dt: float,
    tf: float,
    merge: bool = False,
) -> PWASystem:
    """Voronoi-partitioned Taylor affinization of the Euler-discretised model.

    ``points_per_step`` is either one list of augmented linearization points
    reused at every timestep, or one list per timestep.
    """
    n_steps = int(round(tf / dt))
    pts = [np.atleast_2d(np.asarray(p, dtype=float)) for p in points_per_step]
    if len(pts) == 1 and n_steps > 1 and np.ndim(points_per_step[0]) == 2:
        pts = pts * n_steps
    elif np.ndim(points_per_step) == 2:
        pts = [np.atleast_2d(np.asarray(points_per_step, dtype=float))] * n_steps
    if len(pts) != n_steps:
        raise ValueError(f"need linearization points for {n_steps} timesteps, got {len(pts)}")
    steps = []
    cache: dict[int, list[HPolytope]] = {}
    for t_index, X in enumerate(pts):
        for x in X:
            if not contains_point(domain, x):
                raise ValueError(f"linearization point {x} lies outside the domain")
        key = id(X)
        if key not in cache:
            cache[key] = voronoi_regions(X, domain)
        cells = cache[key]
        regions = []
        for x_star, cell in zip(X, cells):
            g, G = _augmented_step(model, t_index * dt, x_star, dt)
            if not (np.all(np.isfinite(G)) and np.all(np.isfinite(g))):
                raise ValueError(f"Jacobian evaluation failed at timestep {t_index}")
            regions.append(PWARegion(cell, AffineMap(G, g - G @ x_star)))
        if merge:
            regions = merge_regions(regions)
        steps.append(tuple(regions))
    return PWASystem(model.layout, dt, tf, tuple(steps))


def _union_is_convex(P: HPolytope, Q: HPolytope) -> tuple[bool, HPolytope | None]:
    H = convex_hull_pair(P, Q)
    rows = np.vstack([P.A / np.linalg.norm(P.A, axis=1, keepdims=True), Q.A / np.linalg.norm(Q.A, axis=1, keepdims=True)])
    # Fast reject: a hull facet that is no row of P or Q means a concave seam.
    for a in H.A:
        if not np.any(np.max(np.abs(rows - a), axis=1) <= 1e-7):
            return False, None
    # conv \ P must lie inside Q: check every piece conv ∩ {row of P violated}.
    for a, c in zip(P.A, P.b):
        piece = intersect(H, HPolytope(-a[None, :], [-c]))
        if is_empty(piece) or chebyshev_center(piece)[1] <= 1e-9:
            continue  # boundary contact only
        V = vertex_enumeration(piece).vertices
        if not all(contains_point(Q, v, 1e-7) for v in V):
            return False, None
    return True, H


def merge_regions(regions: Sequence[PWARegion], map_tol: float = 1e-10) -> list[PWARegion]:
    """Greedily merge pairs with identical maps whose union is convex."""
    regions = list(regions)
    changed = True
    while changed:
        changed = False
        for i, j in itertools.combinations(range(len(regions)), 2):
            ri, rj = regions[i], regions[j]
            if np.max(np.abs(ri.map.C - rj.map.C)) > map_tol or np.max(np.abs(ri.map.d - rj.map.d)) > map_tol:
                continue
            convex, hull = _union_is_convex(ri.region, rj.region)
            if convex:
                regions[i] = PWARegion(hull, ri.map)
                del regions[j]
                changed = True
                break
    return regions


# ---------------------------------------------------------------------------
# queries


def mode_of(system: PWASystem, t_index: int, x, tol: float = MEMBERSHIP_TOL) -> int:
    """Smallest region index containing ``x`` at timestep ``t_index``."""
    for i, r in enumerate(system.steps[t_index]):
        if contains_point(r.region, x, tol):
            return i
    raise OutOfDomainError(f"state lies in no region at timestep {t_index}", t_index)


def _interpolate(states: np.ndarray, dt: float, substeps: int) -> tuple[np.ndarray, np.ndarray]:
    if len(states) < 2:
        return np.zeros(len(states)), states.copy()
    m = substeps + 1
    gam = np.arange(m) / m
    pieces = [states[i] + gam[:, None] * (states[i + 1] - states[i]) for i in range(len(states) - 1)]
    dense = np.vstack(pieces + [states[-1:]])
    times = np.concatenate([(i + gam) * dt for i in range(len(states) - 1)] + [[(len(states) - 1) * dt]])
    return times, dense


def rollout(system: PWASystem, x0, substeps: int = 0) -> Rollout:
    """Iterate the PWA dynamics from ``x0``, interpolating linearly between steps.

    Leaving the domain emits a :class:`RolloutWarning` and truncates the
    rollout at the offending timestep.
    """
    x = np.asarray(x0, dtype=float).reshape(-1)
    states = [x]
    modes = []
    exit_step = None
    for t in range(system.n_steps):
        try:
            m = mode_of(system, t, x)
        except OutOfDomainError:
            exit_step = t
            warnings.warn(f"rollout left the PWA domain at timestep {t}", RolloutWarning, stacklevel=2)
            break
        modes.append(m)
        x = system.map_at(t, m)(x)
        states.append(x)
    S = np.array(states)
    times, dense = _interpolate(S, system.dt, substeps)
    return Rollout(S, tuple(modes), np.arange(len(S)) * system.dt, times, dense, exit_step)


def rollout_sequence(system: PWASystem, modes: Sequence[int], x0, substeps: int = 0) -> Rollout:
    """Rollout under the time-variant affine dynamics of a fixed mode sequence."""
    if len(modes) != system.n_steps:
        raise ValueError("mode sequence length does not match the number of timesteps")
    x = np.asarray(x0, dtype=float).reshape(-1)
    states = [x]
    for t, m in enumerate(modes):
        x = system.map_at(t, m)(x)
        states.append(x)
    S = np.array(states)
    times, dense = _interpolate(S, system.dt, substeps)
    return Rollout(S, tuple(modes), np.arange(len(S)) * system.dt, times, dense, None)


def mode_sequence(system: PWASystem, x0) -> ModeSequence:
    """Modes visited by the rollout from ``x0``; raises if it leaves the domain."""
    x = np.asarray(x0, dtype=float).reshape(-1)
    modes = []
    for t in range(system.n_steps):
        try:
            m = mode_of(system, t, x)
        except OutOfDomainError as exc:
            raise OutOfDomainError(f"rollout leaves the PWA domain at timestep {t}", t) from exc
        modes.append(m)
        x = system.map_at(t, m)(x)
    return tuple(modes)


# ---------------------------------------------------------------------------
# extended translation invariance


@dataclass(frozen=True)
class EtiResult:
    t_index: int
    mode: int
    passed: bool
    residuals: tuple[float, float, float]
    failing_rows: tuple[int, ...]


@dataclass(frozen=True)
class EtiReport:
    n_eti: int
    results: tuple[EtiResult, ...]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failures(self) -> list[EtiResult]:
        return [r for r in self.results if not r.passed]

    def region(self, t_index: int, mode: int) -> EtiResult:
        for r in self.results:
            if r.t_index == t_index and r.mode == mode:
                return r
        raise KeyError((t_index, mode))


def eti_residuals(M: AffineMap, eti: Sequence[int], tol: float = ETI_TOL):
    """Norms of ``C1 C1``, ``C1 C2`` and ``C1 d1`` for the given ETI index set.

    ``C1``/``C2`` are the ETI-row blocks of ``C - I`` restricted to ETI and
    non-ETI columns, ``d1`` the ETI part of ``d``.  Also returns the ETI rows
    (as augmented indices) where any product is nonzero.
    """
    eti = list(eti)
    other = [j for j in range(M.dim) if j not in eti]
    Ch = M.C - np.eye(M.dim)
    C1 = Ch[np.ix_(eti, eti)]
    C2 = Ch[np.ix_(eti, other)]
    d1 = M.d[eti]
    P11 = C1 @ C1
    P12 = C1 @ C2
    P1d = C1 @ d1
    res = (float(np.linalg.norm(P11)), float(np.linalg.norm(P12)), float(np.linalg.norm(P1d)))
    bad = np.zeros(len(eti), dtype=bool)
    bad |= np.any(np.abs(P11) > tol, axis=1)
    if P12.size:
        bad |= np.any(np.abs(P12) > tol, axis=1)
    bad |= np.abs(P1d) > tol
    return res, tuple(eti[i] for i in np.flatnonzero(bad))


def check_eti(system: PWASystem, n_eti: int | None = None, tol: float = ETI_TOL) -> EtiReport:
    """Check the PWA-ETI identities for every region with the leading ``n_eti`` states."""
    n_eti = system.layout.n_eti if n_eti is None else n_eti
    if not 0 < n_eti <= system.n:
        raise ValueError(f"n_eti={n_eti} out of range")
    results = []
    for t, regions in enumerate(system.steps):
        for i, r in enumerate(regions):
            res, rows = eti_residuals(r.map, range(n_eti), tol)
            results.append(EtiResult(t, i, all(v <= tol for v in res) and not rows, res, rows))
    return EtiReport(n_eti, tuple(results))


def eti_states(system: PWASystem, tol: float = ETI_TOL) -> list[int]:
    """Greedy ETI classification of the augmented states.

    Starts from the workspace and parameter states and adds each remaining
    state, in order, if every region still satisfies the ETI identities.
    """
    lay = system.layout
    base = lay.w_idx + lay.k_idx
    maps = [r.map for regions in system.steps for r in regions]

    def ok(idx):
        return all(not eti_residuals(m, idx, tol)[1] for m in maps)

    eti = list(base)
    if not ok(eti):
        return []
    for j in lay.other_idx:
        if ok(eti + [j]):
            eti.append(j)
    return eti


def regions_cover(system: PWASystem, t_index: int, domain: HPolytope, n_samples: int = 2000, seed: int = 0) -> float:
    """Fraction of domain samples lying in some region at ``t_index``."""
    from .polytope import sample_interior

    X = sample_interior(domain, n_samples, seed)
    hit = 0
    for x in X:
        try:
            mode_of(system, t_index, x)
            hit += 1
        except OutOfDomainError:
            pass
    return hit / n_samples


__all__ = [
    "StateLayout",
    "PWARegion",
    "PWASystem",
    "PlanningModel",
    "Rollout",
    "OutOfDomainError",
    "RolloutWarning",
    "EtiReport",
    "grid_points",
    "uniform_points",
    "voronoi_regions",
    "affinize",
    "merge_regions",
    "mode_of",
    "mode_sequence",
    "rollout",
    "rollout_sequence",
    "check_eti",
    "eti_residuals",
    "eti_states",
    "regions_cover",
    "PolytopeError",
]
