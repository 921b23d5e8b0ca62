"""Backward reach-avoid sets (BRAS) for PWA planning systems.

The BRAS is never materialised as a set difference: a plan ``x0`` is in the
BRAS when it lies in the reach set ``Omega_0`` and in none of the tagged
avoid polytopes.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import lp
from .polytope import (
    MEMBERSHIP_TOL,
    WORLD_BOX,
    HPolytope,
    Segment,
    cartesian_product,
    clip,
    contains_point,
    contains_points,
    convex_hull_pair,
    embed,
    intersect,
    inverse_affine_map,
    is_empty,
    minkowski_sum,
    pontryagin_diff,
    project,
    project_onto,
    sample_interior,
    segment_intersects,
    support,
)
from .pwa import (
    OutOfDomainError,
    PWASystem,
    StateLayout,
    check_eti,
    eti_residuals,
    mode_sequence,
    rollout,
)

log = logging.getLogger(__name__)


class ExpertPlanError(ValueError):
    """The supplied expert plan does not reach the (shrunk) goal."""


class EtiError(ValueError):
    """A region used by the mode sequence violates the ETI identities."""


class TagMismatchError(ValueError):
    pass


# ---------------------------------------------------------------------------
# scenario


@dataclass(frozen=True)
class Scenario:
    """Goal, obstacles and parameter/state domains.

    ``goal`` lives over the first ``goal_dims`` planning coordinates
    ``[w; p_other]`` (default: the workspace).  Obstacles live over the
    workspace.  ``workspace`` optionally bounds the workspace coordinates of
    the planning domain; ``p0`` is an optional start state for expert search.
    """

    layout: StateLayout
    goal: HPolytope
    obstacles: tuple[HPolytope, ...]
    K: HPolytope
    P_other: HPolytope
    tf: float
    goal_dims: int | None = None
    workspace: HPolytope | None = None
    p0: np.ndarray | None = None

    def __post_init__(self):
        lay = self.layout
        gd = lay.n_w if self.goal_dims is None else int(self.goal_dims)
        object.__setattr__(self, "goal_dims", gd)
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if not lay.n_w <= gd <= lay.n_p:
            raise ValueError(f"goal_dims={gd} must lie in [{lay.n_w}, {lay.n_p}]")
        if self.goal.dim != gd:
            raise ValueError(f"goal has dim {self.goal.dim}, expected {gd}")
        for i, O in enumerate(self.obstacles):
            if O.dim != lay.n_w:
                raise ValueError(f"obstacle {i} has dim {O.dim}, expected {lay.n_w}")
        if self.K.dim != lay.n_k:
            raise ValueError(f"K has dim {self.K.dim}, expected {lay.n_k}")
        if self.P_other.dim != lay.n_p_other:
            raise ValueError(f"P_other has dim {self.P_other.dim}, expected {lay.n_p_other}")
        if self.workspace is not None and self.workspace.dim != lay.n_w:
            raise ValueError("workspace domain does not match n_w")
        if self.p0 is not None:
            p0 = np.asarray(self.p0, dtype=float).reshape(-1)
            if p0.size != lay.n_p:
                raise ValueError(f"p0 has {p0.size} entries, expected {lay.n_p}")
            object.__setattr__(self, "p0", p0)

    def domain(self) -> HPolytope:
        """Augmented domain ``W x K x P_other`` (workspace free when unset)."""
        lay = self.layout
        W = self.workspace if self.workspace is not None else HPolytope.full(lay.n_w)
        return cartesian_product(cartesian_product(W, self.K), self.P_other)

    def other_domain(self) -> HPolytope:
        """Domain of the non-ETI states (a trailing block of ``p_other``)."""
        lay = self.layout
        first = lay.n_eti - lay.n_w - lay.n_k
        if first == lay.n_p_other:
            return HPolytope.full(0)
        if first == 0:
            return self.P_other
        return project_onto(self.P_other, range(first, lay.n_p_other))

    def to_dict(self) -> dict:
        out = {
            "layout": self.layout.to_dict(),
            "goal": self.goal.to_dict(),
            "goal_dims": self.goal_dims,
            "obstacles": [O.to_dict() for O in self.obstacles],
            "K": self.K.to_dict(),
            "P_other": self.P_other.to_dict(),
            "tf": self.tf,
        }
        if self.workspace is not None:
            out["W"] = self.workspace.to_dict()
        if self.p0 is not None:
            out["p0"] = self.p0.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        return cls(
            layout=StateLayout.from_dict(data["layout"]),
            goal=HPolytope.from_dict(data["goal"]),
            obstacles=tuple(HPolytope.from_dict(o) for o in data.get("obstacles", [])),
            K=HPolytope.from_dict(data["K"]),
            P_other=HPolytope.from_dict(data["P_other"]),
            tf=float(data["tf"]),
            goal_dims=data.get("goal_dims"),
            workspace=HPolytope.from_dict(data["W"]) if "W" in data else None,
            p0=data.get("p0"),
        )


def lift_workspace_set(P: HPolytope, scenario: Scenario) -> HPolytope:
    """``P x K x P_other`` for a workspace set ``P``."""
    return cartesian_product(cartesian_product(P, scenario.K), scenario.P_other)


def augment(scenario: Scenario) -> tuple[HPolytope, list[HPolytope]]:
    """Lift goal and obstacles to the augmented state ``[w; k; p_other]``."""
    lay = scenario.layout
    gd = scenario.goal_dims
    goal_idx = lay.p_idx[:gd]
    goal = embed(scenario.goal, goal_idx, lay.n)
    goal = intersect(goal, embed(scenario.K, lay.k_idx, lay.n))
    n_goal_other = gd - lay.n_w
    if n_goal_other < lay.n_p_other:
        rest = range(n_goal_other, lay.n_p_other)
        P_rest = scenario.P_other if n_goal_other == 0 else project_onto(scenario.P_other, rest)
        goal = intersect(goal, embed(P_rest, [lay.other_idx[j] for j in rest], lay.n))
    obstacles = [lift_workspace_set(O, scenario) for O in scenario.obstacles]
    return goal, obstacles


# ---------------------------------------------------------------------------
# reach sets


@dataclass(frozen=True)
class ReachChain:
    sets: tuple[HPolytope, ...]
    empty: bool

    @property
    def reach(self) -> HPolytope:
        return self.sets[0]


def _check_sequence(system: PWASystem, S: Sequence[int]) -> None:
    if len(S) != system.n_steps:
        raise ValueError(f"mode sequence has length {len(S)}, expected {system.n_steps}")
    for t, m in enumerate(S):
        if not 0 <= m < len(system.steps[t]):
            raise ValueError(f"mode {m} is invalid at timestep {t}")


def reach_set(system: PWASystem, S: Sequence[int], goal: HPolytope, restrict_regions: bool = False) -> ReachChain:
    """Exact backward reach chain ``[Omega_0, ..., Omega_tf]`` for sequence ``S``.

    With ``restrict_regions`` each ``Omega_t`` is also cut to region ``s_t``,
    so every member actually follows ``S`` under the PWA dynamics.
    """
    _check_sequence(system, S)
    sets = [goal]
    for t in reversed(range(system.n_steps)):
        prev = inverse_affine_map(sets[-1], system.map_at(t, S[t]))
        if restrict_regions:
            prev = intersect(prev, system.steps[t][S[t]].region)
        sets.append(prev)
    sets.reverse()
    return ReachChain(tuple(sets), is_empty(sets[0]))


def reach_set_with_error(
    system: PWASystem,
    S: Sequence[int],
    goal: HPolytope,
    E_tf: HPolytope,
    X_valid: HPolytope,
    restrict_regions: bool = False,
) -> ReachChain:
    """Reach chain of the goal shrunk by ``E_tf``; ``Omega_0`` is cut to ``X_valid``."""
    shrunk = pontryagin_diff(goal, E_tf)
    if is_empty(shrunk):
        empty = HPolytope.empty(goal.dim)
        return ReachChain(tuple([empty] * (system.n_steps + 1)), True)
    chain = reach_set(system, S, shrunk, restrict_regions)
    sets = list(chain.sets)
    sets[0] = intersect(sets[0], X_valid)
    return ReachChain(tuple(sets), is_empty(sets[0]))


# ---------------------------------------------------------------------------
# avoid sets


def hull_intersects(P: HPolytope, Q: HPolytope, O: HPolytope) -> bool:
    """Whether ``O`` meets ``conv(P, Q)`` for bounded ``P``, ``Q``.

    Uses the homogenised description ``{u + v | A_P u <= l b_P,
    A_Q v <= (1 - l) b_Q, 0 <= l <= 1}``, which equals the hull when both
    sets are bounded and nonempty.
    """
    n = P.dim
    if is_empty(P):
        return not is_empty(intersect(Q, O))
    if is_empty(Q):
        return not is_empty(intersect(P, O))
    mP, mQ, mO = P.n_constraints, Q.n_constraints, O.n_constraints
    A = np.zeros((mP + mQ + mO, 2 * n + 1))
    b = np.zeros(mP + mQ + mO)
    A[:mP, :n] = P.A
    A[:mP, 2 * n] = -P.b
    A[mP:mP + mQ, n:2 * n] = Q.A
    A[mP:mP + mQ, 2 * n] = Q.b
    b[mP:mP + mQ] = Q.b
    A[mP + mQ:, :n] = O.A
    A[mP + mQ:, n:2 * n] = O.A
    b[mP + mQ:] = O.b
    bounds = [(None, None)] * (2 * n) + [(0.0, 1.0)]
    res = lp.solve(np.zeros(2 * n + 1), A, b, bounds=bounds)
    return res.ok


def collision_filter(omega_t: HPolytope, omega_next: HPolytope, obstacle: HPolytope) -> bool:
    """True when ``obstacle`` meets ``conv(omega_t, omega_next)``.

    ``False`` certifies that no segment from ``omega_t`` to ``omega_next``
    touches the obstacle.
    """
    return hull_intersects(omega_t, omega_next, obstacle)


def intermediate_avoid(
    system: PWASystem,
    S: Sequence[int],
    t_index: int,
    omega_t: HPolytope,
    obstacle: HPolytope,
    n_eti: int,
    domain_other: HPolytope,
    other_bound: HPolytope | None = None,
    clip_bound: float = WORLD_BOX,
) -> HPolytope:
    """Intermediate avoid set at ``t_index`` for one (augmented) obstacle.

    The unbounded non-ETI factor of the pre-image set is realised by the
    world box.  ``other_bound`` optionally restricts the current non-ETI
    states of that pre-image set instead; since only plans whose non-ETI
    states lie in the domain matter, passing ``domain_other`` there keeps the
    guarantee and avoids huge clipped vertices.
    """
    M = system.map_at(t_index, S[t_index])
    eti = list(range(n_eti))
    res, rows = eti_residuals(M, eti)
    if rows:
        raise EtiError(f"region {S[t_index]} at timestep {t_index} violates ETI in rows {list(rows)}")
    n = system.n
    n_other = n - n_eti
    if n_other == 0:
        A = inverse_affine_map(obstacle, M)
        lifted = clip(A, clip_bound)
        return intersect(convex_hull_pair(lifted, clip(obstacle, clip_bound)), omega_t)
    O_eti = project(obstacle, 0, n_eti)
    target = clip(cartesian_product(O_eti, HPolytope.full(n_other)), clip_bound)
    A = inverse_affine_map(target, M)
    if other_bound is not None:
        A = intersect(A, embed(other_bound, range(n_eti, n), n))
    A = clip(A, clip_bound)
    if is_empty(A):
        return HPolytope.empty(n)
    left = cartesian_product(project(A, 0, n_eti), domain_other)
    left = clip(left, clip_bound)
    hull = convex_hull_pair(left, clip(obstacle, clip_bound))
    return intersect(hull, omega_t)


def avoid_chain(system: PWASystem, S: Sequence[int], lam: HPolytope, t_index: int) -> HPolytope:
    """Pull an avoid set at ``t_index`` back to time 0 through ``S``."""
    out = lam
    for t in reversed(range(t_index)):
        out = inverse_affine_map(out, system.map_at(t, S[t]))
    return out


# ---------------------------------------------------------------------------
# tracking error


@dataclass(frozen=True)
class ErrorProfile:
    """Per-coordinate workspace tracking-error bounds.

    ``e_int[t]`` bounds the error over ``[t dt, (t + 1) dt]``; ``e_tf`` bounds
    the final error.  ``valid_region`` is the augmented box the estimates
    were collected over.
    """

    e_tf: np.ndarray
    e_int: np.ndarray
    valid_region: HPolytope
    n_samples: int | None = None

    def __post_init__(self):
        e_tf = np.asarray(self.e_tf, dtype=float).reshape(-1)
        e_int = np.atleast_2d(np.asarray(self.e_int, dtype=float))
        if np.any(e_tf < 0) or np.any(e_int < 0):
            raise ValueError("error entries must be nonnegative")
        if e_int.shape[1] != e_tf.size:
            raise ValueError("e_int and e_tf disagree on the workspace dimension")
        object.__setattr__(self, "e_tf", e_tf)
        object.__setattr__(self, "e_int", e_int)

    @classmethod
    def zero(cls, n_w: int, n_steps: int, valid_region: HPolytope) -> "ErrorProfile":
        return cls(np.zeros(n_w), np.zeros((n_steps, n_w)), valid_region)

    def to_dict(self) -> dict:
        out = {"e_tf": self.e_tf.tolist(), "e_int": self.e_int.tolist(), "valid_region": self.valid_region.to_dict()}
        if self.n_samples is not None:
            out["n_samples"] = self.n_samples
            out["caveat"] = "maxima over the supplied samples only; valid only if enough samples were drawn"
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ErrorProfile":
        return cls(
            np.asarray(data["e_tf"], dtype=float),
            np.asarray(data["e_int"], dtype=float).reshape(len(data["e_int"]), -1),
            HPolytope.from_dict(data["valid_region"]),
            data.get("n_samples"),
        )


@dataclass(frozen=True)
class TrajectoryPair:
    """Planned and realised samples on a shared time grid (planning dims)."""

    t: np.ndarray
    plan: np.ndarray
    realized: np.ndarray
    k: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        plan = np.atleast_2d(np.asarray(self.plan, dtype=float))
        realized = np.atleast_2d(np.asarray(self.realized, dtype=float))
        if plan.shape != realized.shape or plan.shape[0] != t.size:
            raise ValueError("plan, realized and t must have matching sample counts")
        if np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "plan", plan)
        object.__setattr__(self, "realized", realized)
        object.__setattr__(self, "k", np.asarray(self.k, dtype=float).reshape(-1))

    def to_dict(self) -> dict:
        return {"k": self.k.tolist(), "t": self.t.tolist(), "plan": self.plan.tolist(), "realized": self.realized.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "TrajectoryPair":
        return cls(data["t"], data["plan"], data["realized"], data["k"])


def estimate_error(
    pairs: Sequence[TrajectoryPair],
    valid_region: HPolytope,
    dt: float,
    tf: float,
    n_w: int,
    time_tol: float = 1e-9,
) -> ErrorProfile:
    """Max final and per-interval workspace errors over all pairs.

    Interval ``t`` covers samples with time in ``[t dt, (t + 1) dt]``
    (endpoints shared by neighbouring intervals).
    """
    if not pairs:
        raise ValueError("need at least one trajectory pair")
    n_steps = int(round(tf / dt))
    e_tf = np.zeros(n_w)
    e_int = np.zeros((n_steps, n_w))
    grid = np.arange(n_steps + 1) * dt
    for j, pr in enumerate(pairs):
        if abs(pr.t[0]) > time_tol or abs(pr.t[-1] - tf) > time_tol:
            raise ValueError(f"pair {j} does not cover [0, {tf}]")
        for g in grid:
            if np.min(np.abs(pr.t - g)) > time_tol:
                raise ValueError(f"pair {j} has no sample at grid time {g}")
        err = np.abs(pr.plan[:, :n_w] - pr.realized[:, :n_w])
        e_tf = np.maximum(e_tf, err[-1])
        for t in range(n_steps):
            sel = (pr.t >= grid[t] - time_tol) & (pr.t <= grid[t + 1] + time_tol)
            e_int[t] = np.maximum(e_int[t], err[sel].max(axis=0))
    return ErrorProfile(e_tf, e_int, valid_region, n_samples=len(pairs))


def workspace_error_box(e) -> HPolytope:
    e = np.asarray(e, dtype=float)
    return HPolytope.box(-e, e)


def _error_set(e, layout: StateLayout) -> HPolytope:
    e = np.asarray(e, dtype=float)
    zeros = np.zeros(layout.n - layout.n_w)
    return HPolytope.box(np.concatenate([-e, zeros]), np.concatenate([e, zeros]))


def error_sets(profile: ErrorProfile, layout: StateLayout) -> tuple[HPolytope, list[HPolytope]]:
    """``E_tf`` and ``[E_0, ..., E_{tf - dt}]`` in augmented coordinates."""
    if profile.e_tf.size != layout.n_w:
        raise ValueError("error profile does not match the workspace dimension")
    return _error_set(profile.e_tf, layout), [_error_set(e, layout) for e in profile.e_int]


def buffer_obstacle(obstacle: HPolytope, error: HPolytope) -> HPolytope:
    """``obstacle ⊕ error``."""
    return minkowski_sum(obstacle, error)


# ---------------------------------------------------------------------------
# BRAS assembly


@dataclass(frozen=True)
class AvoidSet:
    obstacle: int
    t_index: int
    polytope: HPolytope


@dataclass(frozen=True)
class BrasResult:
    mode_sequence: tuple[int, ...]
    reach: HPolytope
    reach_chain: tuple[HPolytope, ...]
    avoid: tuple[AvoidSet, ...]
    filtered: dict
    empty: bool = False
    meta: dict = field(default_factory=dict)

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        """BRAS membership: in the reach set and in no avoid set."""
        if not contains_point(self.reach, x, -tol):
            return False
        return not any(contains_point(a.polytope, x, tol) for a in self.avoid)

    def contains_many(self, X, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        ok = contains_points(self.reach, X, -tol)
        for a in self.avoid:
            ok &= ~contains_points(a.polytope, X, tol)
        return ok

    def to_dict(self) -> dict:
        return {
            "mode_sequence": list(self.mode_sequence),
            "reach": self.reach.to_dict(),
            "reach_chain": [P.to_dict() for P in self.reach_chain],
            "avoid": [{"obstacle": a.obstacle, "t": a.t_index, "polytope": a.polytope.to_dict()} for a in self.avoid],
            "filtered": [{"obstacle": i, "t": t, "hit": bool(v)} for (i, t), v in sorted(self.filtered.items())],
            "empty": self.empty,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BrasResult":
        return cls(
            mode_sequence=tuple(int(m) for m in data["mode_sequence"]),
            reach=HPolytope.from_dict(data["reach"]),
            reach_chain=tuple(HPolytope.from_dict(P) for P in data["reach_chain"]),
            avoid=tuple(AvoidSet(int(a["obstacle"]), int(a["t"]), HPolytope.from_dict(a["polytope"])) for a in data["avoid"]),
            filtered={(int(f["obstacle"]), int(f["t"])): bool(f["hit"]) for f in data.get("filtered", [])},
            empty=bool(data.get("empty", False)),
            meta=dict(data.get("meta", {})),
        )


def _goal_reached(system: PWASystem, x0, goal: HPolytope) -> tuple[bool, tuple[int, ...] | None]:
    try:
        S = mode_sequence(system, x0)
    except OutOfDomainError:
        return False, None
    x = np.asarray(x0, dtype=float)
    for t, m in enumerate(S):
        x = system.map_at(t, m)(x)
    return contains_point(goal, x), S


def compute_bras(
    system: PWASystem,
    scenario: Scenario,
    expert_x0,
    profile: ErrorProfile | None = None,
    skip_filter: bool = False,
    threads: int = 1,
    tighten_other: bool = False,
    restrict_regions: bool = False,
    clip_bound: float = WORLD_BOX,
) -> BrasResult:
    """Reach set and tagged avoid sets for the expert plan's mode sequence.

    With a profile, the goal is shrunk by ``E_tf``, obstacles are buffered by
    the per-interval error boxes, and ``Omega_0`` is cut to the profile's
    valid region; without one it is cut to the scenario domain.

    ``restrict_regions`` cuts each reach set to its region of ``S``.
    ``tighten_other`` replaces the non-ETI domain in the avoid-set
    construction by the bounding box of the non-ETI states over ``Omega_t``
    (valid because only plans starting in ``Omega_t`` are classified).
    """
    lay = scenario.layout
    if lay != system.layout:
        raise ValueError("scenario and system layouts differ")
    goal, _ = augment(scenario)
    x0 = np.asarray(expert_x0, dtype=float).reshape(-1)

    if profile is not None:
        E_tf, E_int = error_sets(profile, lay)
        if len(E_int) != system.n_steps:
            raise ValueError("error profile timestep count does not match the system")
        target = pontryagin_diff(goal, E_tf)
        X_valid = profile.valid_region
    else:
        E_tf = None
        target = goal
        X_valid = scenario.domain()
    meta = {
        "skip_filter": skip_filter,
        "tighten_other": tighten_other,
        "restrict_regions": restrict_regions,
        "clip": clip_bound,
        "tol_membership": MEMBERSHIP_TOL,
        "tol_lp": lp.FEAS_TOL,
        "error_profile": profile is not None,
    }
    if is_empty(target):
        # the error swallows the goal: no plan can be certified
        empty = HPolytope.empty(lay.n)
        return BrasResult((), empty, tuple([empty] * (system.n_steps + 1)), (), {}, True, meta)
    ws_obstacles = buffered_obstacles(scenario, profile, system.n_steps)

    reached, S = _goal_reached(system, x0, target)
    if not reached:
        raise ExpertPlanError("expert plan does not reach the goal" + (" shrunk by the final error" if profile else ""))

    report = check_eti(system)
    for t, m in enumerate(S):
        r = report.region(t, m)
        if not r.passed:
            raise EtiError(f"region {m} at timestep {t} violates ETI (rows {list(r.failing_rows)})")

    if profile is not None:
        chain = reach_set_with_error(system, S, goal, E_tf, X_valid, restrict_regions)
    else:
        base = reach_set(system, S, goal, restrict_regions)
        sets = list(base.sets)
        sets[0] = intersect(sets[0], X_valid)
        chain = ReachChain(tuple(sets), is_empty(sets[0]))

    if chain.empty:
        return BrasResult(tuple(S), chain.reach, chain.sets, (), {}, True, meta)

    domain_other = scenario.other_domain()
    lifted = [[lift_workspace_set(O_t, scenario) for O_t in per_t] for per_t in ws_obstacles]
    tasks = [(i, t) for i in range(len(lifted)) for t in range(system.n_steps)]

    def run(task):
        i, t = task
        O = lifted[i][t]
        hit = True if skip_filter else collision_filter(chain.sets[t], chain.sets[t + 1], O)
        if not hit:
            return i, t, False, None
        X_other, bound = domain_other, None
        if tighten_other and lay.n_other:
            lo, hi = box_bounds(project_onto(chain.sets[t], range(lay.n_eti, lay.n)))
            X_other = intersect(domain_other, HPolytope.box(lo, hi))
            bound = X_other
        lam = intermediate_avoid(system, S, t, chain.sets[t], O, lay.n_eti, X_other, bound, clip_bound)
        if is_empty(lam):
            return i, t, True, None
        return i, t, True, avoid_chain(system, S, lam, t)

    if threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, tasks))
    else:
        outcomes = [run(task) for task in tasks]

    filtered = {}
    avoid = []
    for i, t, hit, lam in outcomes:
        filtered[(i, t)] = hit
        if lam is not None:
            avoid.append(AvoidSet(i, t, lam))
    log.info("BRAS: %d avoid sets from %d obstacle/timestep pairs", len(avoid), len(tasks))
    return BrasResult(tuple(S), chain.reach, chain.sets, tuple(avoid), filtered, False, meta)


# ---------------------------------------------------------------------------
# sampling and verification


@dataclass(frozen=True)
class SampleResult:
    samples: np.ndarray
    attempts: int
    exhausted: bool

    @property
    def status(self) -> str:
        return "exhausted" if self.exhausted else "complete"


def sample_bras(
    result: BrasResult,
    n: int,
    seed: int,
    budget: int = 100_000,
    system: PWASystem | None = None,
    thin: int = 5,
) -> SampleResult:
    """Rejection-sample the BRAS from a hit-and-run walk over ``Omega_0``.

    When ``system`` is given, samples whose own PWA mode sequence differs from
    the result's sequence (or that leave the domain) are rejected too, since
    the sets are only valid for that sequence.
    """
    if result.empty or is_empty(result.reach):
        raise ValueError("reach set is empty")
    dim = result.reach.dim
    if n <= 0:
        return SampleResult(np.empty((0, dim)), 0, False)
    out = []
    attempts = 0
    batch = max(4 * n, 64)
    round_ = 0
    while len(out) < n and attempts < budget:
        m = min(batch, budget - attempts)
        X = sample_interior(result.reach, m, seed + 7919 * round_, thin=thin)
        round_ += 1
        ok = result.contains_many(X)
        for x, good in zip(X, ok):
            attempts += 1
            if good and system is not None:
                try:
                    good = mode_sequence(system, x) == tuple(result.mode_sequence)
                except OutOfDomainError:
                    good = False
            if good:
                out.append(x)
                if len(out) == n:
                    break
            if attempts >= budget:
                break
    samples = np.array(out).reshape(-1, dim)
    return SampleResult(samples, attempts, len(out) < n)


def buffered_obstacles(scenario: Scenario, profile: ErrorProfile | None, n_steps: int) -> list[list[HPolytope]]:
    """Workspace obstacles buffered by each interval error box."""
    if profile is None:
        return [[O] * n_steps for O in scenario.obstacles]
    return [
        [buffer_obstacle(O, workspace_error_box(profile.e_int[t])) for t in range(n_steps)]
        for O in scenario.obstacles
    ]


@dataclass(frozen=True)
class VerifyReport:
    passed: bool
    reached_goal: bool
    collision: tuple[int, int] | None
    message: str
    states: np.ndarray


def verify_plan(
    system: PWASystem,
    scenario: Scenario,
    profile: ErrorProfile | None,
    x0,
    substeps: int = 50,
    buffered: Sequence[Sequence[HPolytope]] | None = None,
) -> VerifyReport:
    """Independent check of one plan: goal at ``tf`` and obstacle-free segments.

    Works in workspace coordinates against obstacles buffered by the
    per-interval error boxes.  Every interval segment is tested exactly and
    its ``substeps`` sub-segments are tested as well.  ``buffered`` may
    carry precomputed obstacles from :func:`buffered_obstacles`.
    """
    import warnings

    from .pwa import RolloutWarning

    lay = scenario.layout
    goal, _ = augment(scenario)
    if profile is not None:
        E_tf, _ = error_sets(profile, lay)
        goal = pontryagin_diff(goal, E_tf)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RolloutWarning)
        roll = rollout(system, x0, substeps)
    if not roll.ok:
        return VerifyReport(False, False, None, f"plan leaves the domain at timestep {roll.exit_step}", roll.states)
    reached = contains_point(goal, roll.states[-1])
    W = roll.states[:, : lay.n_w]
    if buffered is None:
        buffered = buffered_obstacles(scenario, profile, system.n_steps)
    for i, per_t in enumerate(buffered):
        for t in range(system.n_steps):
            Ob = per_t[t]
            pts = W[t] + np.linspace(0.0, 1.0, substeps + 2)[:, None] * (W[t + 1] - W[t])
            hit = segment_intersects(Ob, Segment(W[t], W[t + 1])) or any(
                segment_intersects(Ob, Segment(a, b)) for a, b in zip(pts[:-1], pts[1:])
            )
            if hit:
                return VerifyReport(False, reached, (i, t), f"segment {t} meets obstacle {i}", roll.states)
    if not reached:
        return VerifyReport(False, False, None, "terminal state misses the goal", roll.states)
    return VerifyReport(True, True, None, "ok", roll.states)


# ---------------------------------------------------------------------------
# decoupled recombination


def combine_decoupled(parts: Sequence[BrasResult], orders: Sequence[Sequence[int]] | None = None) -> BrasResult:
    """Recombine BRAS results over disjoint coordinate blocks.

    The reach set is the Cartesian product of the part reach sets.  For each
    (obstacle, timestep) tag present in every part, the product of the part
    avoid sets is one avoid set of the combined result.  Coordinates are in
    block order unless ``orders`` gives the target index of each part
    coordinate.
    """
    if not parts:
        raise ValueError("need at least one part")
    n_steps = {len(p.reach_chain) for p in parts}
    if len(n_steps) != 1:
        raise TagMismatchError("parts have different timestep counts")
    n_obs = {max([i for i, _ in p.filtered] + [-1]) for p in parts if p.filtered}
    if len(n_obs) > 1:
        raise TagMismatchError("parts have different obstacle counts")

    def product(polys):
        out = polys[0]
        for P in polys[1:]:
            out = cartesian_product(out, P)
        return out

    perm = None
    if orders is not None:
        flat = [j for o in orders for j in o]
        if sorted(flat) != list(range(len(flat))):
            raise ValueError("orders must be a permutation of the combined coordinates")
        perm = np.argsort(flat)

    def reorder(P):
        if perm is None:
            return P
        return HPolytope(P.A[:, perm], P.b, clipped=P.clipped)

    reach = reorder(product([p.reach for p in parts]))
    chain = tuple(reorder(product([p.reach_chain[t] for p in parts])) for t in range(len(parts[0].reach_chain)))
    tags = [{(a.obstacle, a.t_index): a.polytope for a in p.avoid} for p in parts]
    common = sorted(set.intersection(*[set(t) for t in tags]))
    avoid = tuple(AvoidSet(i, t, reorder(product([tg[(i, t)] for tg in tags]))) for i, t in common)
    filtered = {}
    for key in set().union(*[p.filtered.keys() for p in parts]):
        filtered[key] = all(p.filtered.get(key, False) for p in parts)
    seq = tuple(parts[0].mode_sequence)
    empty = any(p.empty for p in parts) or is_empty(reach)
    return BrasResult(seq, reach, chain, avoid, filtered, empty, {"parts": len(parts)})


# ---------------------------------------------------------------------------
# expert search


def box_bounds(P: HPolytope) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned bounding box of a bounded polytope."""
    n = P.dim
    lo = np.array([-support(P, -e) for e in np.eye(n)])
    hi = np.array([support(P, e) for e in np.eye(n)])
    return lo, hi


def target_goal(scenario: Scenario, profile: ErrorProfile | None = None) -> HPolytope:
    """Augmented goal, shrunk by the final error when a profile is given."""
    goal, _ = augment(scenario)
    if profile is not None:
        goal = pontryagin_diff(goal, error_sets(profile, scenario.layout)[0])
    return goal


def find_expert(
    system: PWASystem,
    scenario: Scenario,
    p0,
    n: int = 512,
    seed: int = 0,
    profile: ErrorProfile | None = None,
) -> np.ndarray | None:
    """First of ``n`` uniformly sampled parameters whose rollout reaches the goal."""
    lay = scenario.layout
    goal = target_goal(scenario, profile)
    lo, hi = box_bounds(scenario.K)
    rng = np.random.default_rng(seed)
    for _ in range(n):
        k = lo + (hi - lo) * rng.random(lay.n_k)
        if not contains_point(scenario.K, k):
            continue
        x0 = lay.augment(p0, k)
        if profile is not None and not contains_point(profile.valid_region, x0):
            continue
        if _goal_reached(system, x0, goal)[0]:
            return x0
    return None
