"""H-polytope calculus.

A polytope is stored purely in halfspace form ``{x | A x <= b}``.  Exact
operations (intersection, Cartesian product, inverse affine map) only stack
or transform rows; the rest (support, Pontryagin difference, redundancy
removal, projection) are LP-backed, and vertex enumeration / hulls go through
qhull after reducing degenerate sets to their affine hull.

Lower-dimensional sets, e.g. error boxes with ``{0}`` factors, are encoded
with paired rows ``a x <= c`` and ``-a x <= -c``; there is no separate
equality type.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import null_space
from scipy.spatial import ConvexHull, HalfspaceIntersection
from scipy.spatial import QhullError

from . import lp

MEMBERSHIP_TOL = 1e-8
DEDUP_TOL = 1e-7
WORLD_BOX = 1e6

_ZERO_ROW_TOL = 1e-12
_EQ_TOL = 1e-9


class PolytopeError(ValueError):
    pass


class DimensionMismatchError(PolytopeError):
    pass


class EmptyPolytopeError(PolytopeError):
    pass


class UnboundedError(PolytopeError):
    pass


class HPolytope:
    """Convex set ``{x | A x <= b}``.

    Instances are treated as immutable; the arrays are flagged read-only.
    ``clipped`` records that the set was intersected with the world box to
    make it bounded.
    """

    __slots__ = ("A", "b", "clipped")

    def __init__(self, A, b, clipped: bool = False):
        A = np.array(A, dtype=float)
        b = np.array(b, dtype=float).reshape(-1)
        if A.ndim != 2:
            if A.size == 0:
                A = A.reshape(0, 0)
            else:
                raise PolytopeError("A must be a 2-D array")
        if A.shape[0] != b.shape[0]:
            raise DimensionMismatchError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        A.setflags(write=False)
        b.setflags(write=False)
        self.A = A
        self.b = b
        self.clipped = clipped

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def n_constraints(self) -> int:
        return self.A.shape[0]

    @property
    def degenerate_rows(self) -> np.ndarray:
        """Indices of all-zero rows of ``A`` (vacuous when ``b >= 0``)."""
        return np.flatnonzero(np.all(np.abs(self.A) <= _ZERO_ROW_TOL, axis=1))

    @classmethod
    def full(cls, n: int) -> "HPolytope":
        return cls(np.zeros((0, n)), np.zeros(0))

    @classmethod
    def empty(cls, n: int) -> "HPolytope":
        """Canonical empty set: the single row ``0 x <= -1``."""
        return cls(np.zeros((1, n)), [-1.0])

    @classmethod
    def box(cls, lo, hi) -> "HPolytope":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape:
            raise DimensionMismatchError("box bounds differ in length")
        n = lo.size
        eye = np.eye(n)
        return cls(np.vstack([eye, -eye]), np.concatenate([hi, -lo]))

    @classmethod
    def from_vertices(cls, vertices) -> "HPolytope":
        return convex_hull_points(vertices)

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist(), "dim": self.dim}

    @classmethod
    def from_dict(cls, data: dict) -> "HPolytope":
        dim = int(data["dim"])
        A = np.asarray(data["A"], dtype=float).reshape(-1, dim)
        return cls(A, data["b"])

    def __contains__(self, x) -> bool:
        return contains_point(self, x)

    def __repr__(self) -> str:
        return f"HPolytope(dim={self.dim}, n_constraints={self.n_constraints})"


@dataclass(frozen=True)
class AffineMap:
    """x -> C x + d."""

    C: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        C = np.array(self.C, dtype=float)
        d = np.array(self.d, dtype=float).reshape(-1)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise DimensionMismatchError("C must be square")
        if d.size != C.shape[0]:
            raise DimensionMismatchError("d length does not match C")
        C.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "d", d)

    @property
    def dim(self) -> int:
        return self.C.shape[0]

    def __call__(self, x) -> np.ndarray:
        return self.C @ np.asarray(x, dtype=float) + self.d

    @classmethod
    def identity(cls, n: int) -> "AffineMap":
        return cls(np.eye(n), np.zeros(n))


@dataclass(frozen=True)
class VRep:
    vertices: np.ndarray

    def __len__(self) -> int:
        return len(self.vertices)

    def to_dict(self) -> dict:
        return {"vertices": np.asarray(self.vertices).tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "VRep":
        return cls(np.asarray(data["vertices"], dtype=float))


@dataclass(frozen=True)
class Segment:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.shape != y.shape:
            raise DimensionMismatchError("segment endpoints differ in dimension")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def point(self, gamma: float) -> np.ndarray:
        return self.x + gamma * (self.y - self.x)


def _check_same_dim(P: HPolytope, Q: HPolytope) -> None:
    if P.dim != Q.dim:
        raise DimensionMismatchError(f"dimension mismatch: {P.dim} vs {Q.dim}")


# ---------------------------------------------------------------------------
# exact row operations


def intersect(P: HPolytope, Q: HPolytope) -> HPolytope:
    _check_same_dim(P, Q)
    return HPolytope(np.vstack([P.A, Q.A]), np.concatenate([P.b, Q.b]), clipped=P.clipped or Q.clipped)


def cartesian_product(P: HPolytope, Q: HPolytope) -> HPolytope:
    A = np.block([
        [P.A, np.zeros((P.n_constraints, Q.dim))],
        [np.zeros((Q.n_constraints, P.dim)), Q.A],
    ])
    return HPolytope(A, np.concatenate([P.b, Q.b]), clipped=P.clipped or Q.clipped)


def inverse_affine_map(P: HPolytope, M: AffineMap) -> HPolytope:
    """Preimage ``{x | C x + d in P}`` = ``P(A C, b - A d)``; C may be singular."""
    if P.dim != M.dim:
        raise DimensionMismatchError(f"polytope has dim {P.dim}, map has dim {M.dim}")
    return HPolytope(P.A @ M.C, P.b - P.A @ M.d, clipped=P.clipped)


def translate(P: HPolytope, v) -> HPolytope:
    """``P + v``."""
    v = np.asarray(v, dtype=float)
    return HPolytope(P.A, P.b + P.A @ v, clipped=P.clipped)


def embed(P: HPolytope, dims: Sequence[int], n: int) -> HPolytope:
    """Lift ``P`` into R^n, placing its coordinates at ``dims`` (others free)."""
    dims = list(dims)
    if len(dims) != P.dim:
        raise DimensionMismatchError("dims must list one index per coordinate of P")
    A = np.zeros((P.n_constraints, n))
    A[:, dims] = P.A
    return HPolytope(A, P.b, clipped=P.clipped)


def clip(P: HPolytope, bound: float = WORLD_BOX) -> HPolytope:
    """Intersect with the world box ``[-bound, bound]^n`` and mark as clipped."""
    n = P.dim
    Q = intersect(P, HPolytope.box(-bound * np.ones(n), bound * np.ones(n)))
    return HPolytope(Q.A, Q.b, clipped=True)


# ---------------------------------------------------------------------------
# LP queries


def contains_point(P: HPolytope, x, tol: float = MEMBERSHIP_TOL) -> bool:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != P.dim:
        raise DimensionMismatchError(f"point has dim {x.size}, polytope has dim {P.dim}")
    if P.n_constraints == 0:
        return True
    return bool(np.all(P.A @ x <= P.b + tol))


def contains_points(P: HPolytope, X, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
    """Vectorised membership for the rows of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != P.dim:
        raise DimensionMismatchError(f"points have dim {X.shape[1]}, polytope has dim {P.dim}")
    if P.n_constraints == 0:
        return np.ones(len(X), dtype=bool)
    return np.all(X @ P.A.T <= P.b + tol, axis=1)


def is_empty(P: HPolytope) -> bool:
    if P.dim == 0 or P.n_constraints == 0:
        return bool(np.any(P.b < -MEMBERSHIP_TOL))
    res = lp.solve(np.zeros(P.dim), P.A, P.b)
    return res.status == lp.INFEASIBLE


def chebyshev_center(P: HPolytope, radius_cap: float = WORLD_BOX) -> tuple[np.ndarray, float]:
    """Center and radius of the largest inscribed ball (radius capped).

    Raises :class:`EmptyPolytopeError` when ``P`` is empty.
    """
    n = P.dim
    if P.n_constraints == 0:
        return np.zeros(n), radius_cap
    norms = np.linalg.norm(P.A, axis=1)
    A = np.hstack([P.A, norms[:, None]])
    c = np.zeros(n + 1)
    c[-1] = -1.0
    bounds = [(None, None)] * n + [(0.0, radius_cap)]
    res = lp.solve(c, A, P.b, bounds=bounds)
    if res.status == lp.INFEASIBLE:
        raise EmptyPolytopeError("polytope is empty")
    if not res.ok:
        raise lp.LPError(f"Chebyshev LP returned {res.status}")
    return res.x[:n], float(res.x[n])


def support(P: HPolytope, a) -> float:
    """max over ``P`` of ``a @ x``."""
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.size != P.dim:
        raise DimensionMismatchError("direction has wrong dimension")
    if not np.any(a):
        if is_empty(P):
            raise EmptyPolytopeError("support of an empty polytope")
        return 0.0
    res = lp.solve(-a, P.A, P.b)
    if res.status == lp.INFEASIBLE:
        raise EmptyPolytopeError("support of an empty polytope")
    if res.status == lp.UNBOUNDED:
        raise UnboundedError("polytope is unbounded in the requested direction")
    return -res.value


def is_bounded(P: HPolytope) -> bool:
    if P.dim == 0:
        return True
    if P.n_constraints == 0:
        return False
    for i in range(P.dim):
        for s in (1.0, -1.0):
            e = np.zeros(P.dim)
            e[i] = s
            res = lp.solve(-e, P.A, P.b)
            if res.status == lp.UNBOUNDED:
                return False
            if res.status == lp.INFEASIBLE:
                return True
    return True


def segment_intersects(P: HPolytope, s: Segment, tol: float = MEMBERSHIP_TOL) -> bool:
    """Whether some point ``x + g (y - x)``, ``g`` in [0, 1], lies in ``P``.

    Each row restricts ``g`` to a half-line; the segment meets ``P`` iff the
    intersection of those half-lines with [0, 1] is nonempty.
    """
    if s.x.size != P.dim:
        raise DimensionMismatchError("segment and polytope dimensions differ")
    lo, hi = 0.0, 1.0
    alpha = P.A @ s.x - P.b
    beta = P.A @ (s.y - s.x)
    for a_i, b_i in zip(alpha, beta):
        if abs(b_i) <= 1e-15:
            if a_i > tol:
                return False
            continue
        g = (tol - a_i) / b_i
        if b_i > 0:
            hi = min(hi, g)
        else:
            lo = max(lo, g)
        if lo > hi:
            return False
    return True


# ---------------------------------------------------------------------------
# affine hull handling


@dataclass(frozen=True)
class _Reduced:
    """``P`` expressed as ``x = origin + basis @ y`` with ``y`` in ``inner``."""

    origin: np.ndarray
    basis: np.ndarray
    inner: HPolytope
    center: np.ndarray
    radius: float


def _normalized(P: HPolytope) -> HPolytope:
    norms = np.linalg.norm(P.A, axis=1)
    keep = norms > _ZERO_ROW_TOL
    if np.any(~keep & (P.b < -MEMBERSHIP_TOL)):
        return HPolytope.empty(P.dim)
    A = P.A[keep] / norms[keep, None]
    b = P.b[keep] / norms[keep]
    return HPolytope(A, b, clipped=P.clipped)


def _reduce(P: HPolytope) -> _Reduced:
    """Find the affine hull of a nonempty polytope and re-express ``P`` in it."""
    n = P.dim
    Pn = _normalized(P)
    center, radius = chebyshev_center(Pn)
    if radius > _EQ_TOL:
        return _Reduced(np.zeros(n), np.eye(n), Pn, center, radius)
    # Flat set: rows tight everywhere on P are implicit equalities.
    eq = np.zeros(Pn.n_constraints, dtype=bool)
    for i in range(Pn.n_constraints):
        res = lp.solve(Pn.A[i], Pn.A, Pn.b)
        if not res.ok:
            raise lp.LPError(f"implicit-equality LP returned {res.status}")
        eq[i] = Pn.b[i] - res.value <= 1e-7
    A_eq, b_eq = Pn.A[eq], Pn.b[eq]
    origin = np.linalg.lstsq(A_eq, b_eq, rcond=None)[0]
    basis = null_space(A_eq, rcond=1e-9)
    A_in = Pn.A[~eq] @ basis
    b_in = Pn.b[~eq] - Pn.A[~eq] @ origin
    k = basis.shape[1]
    if k == 0:
        return _Reduced(origin, basis, HPolytope.full(0), np.zeros(0), 0.0)
    inner = _normalized(HPolytope(A_in, b_in))
    c_in, r_in = chebyshev_center(inner)
    return _Reduced(origin, basis, inner, c_in, r_in)


def affine_dimension(P: HPolytope) -> int:
    if is_empty(P):
        return -1
    return _reduce(P).basis.shape[1]


def _dedup(points: np.ndarray, tol: float = DEDUP_TOL) -> np.ndarray:
    kept: list[np.ndarray] = []
    for p in points:
        if not any(np.max(np.abs(p - q)) <= tol for q in kept):
            kept.append(p)
    return np.array(kept).reshape(-1, points.shape[1])


def _lexsorted(points: np.ndarray) -> np.ndarray:
    if len(points) == 0:
        return points
    keys = np.round(points, 9) + 0.0
    order = np.lexsort(keys.T[::-1])
    return points[order]


def vertex_enumeration(P: HPolytope) -> VRep:
    """All vertices of a bounded polytope, lexicographically ordered.

    Empty input yields an empty vertex list; unbounded input raises.
    """
    n = P.dim
    if n == 0:
        return VRep(np.zeros((0 if is_empty(P) else 1, 0)))
    if is_empty(P):
        return VRep(np.zeros((0, n)))
    if not is_bounded(P):
        raise UnboundedError("vertex enumeration needs a bounded polytope")
    red = _reduce(P)
    k = red.basis.shape[1]
    if k == 0:
        local = np.zeros((1, 0))
    elif k == 1:
        a = red.inner.A[:, 0]
        lo = max((red.inner.b[i] / a[i] for i in range(len(a)) if a[i] < 0), default=-np.inf)
        hi = min((red.inner.b[i] / a[i] for i in range(len(a)) if a[i] > 0), default=np.inf)
        local = np.array([[lo], [hi]])
    else:
        halfspaces = np.hstack([red.inner.A, -red.inner.b[:, None]])
        try:
            hs = HalfspaceIntersection(halfspaces, red.center)
        except QhullError as exc:
            raise lp.LPError(f"qhull failed during vertex enumeration: {exc}") from exc
        local = hs.intersections
    verts = red.origin + local @ red.basis.T
    verts = _lexsorted(_dedup(verts))
    return VRep(verts)


# ---------------------------------------------------------------------------
# hulls and sums


def convex_hull_points(points) -> HPolytope:
    """H-representation of the convex hull of a finite point set."""
    V = np.atleast_2d(np.asarray(points, dtype=float))
    n = V.shape[1]
    if len(V) == 0:
        return HPolytope.empty(n)
    mean = V.mean(axis=0)
    centered = V - mean
    _, sv, vt = np.linalg.svd(centered, full_matrices=True)
    scale = max(1.0, float(np.max(np.abs(V))))
    rank = int(np.sum(sv > 1e-10 * scale))
    U = vt[:rank].T
    W = vt[rank:].T
    rows, rhs = [], []
    if rank == 1:
        y = centered @ U[:, 0]
        rows += [U[:, 0], -U[:, 0]]
        rhs += [y.max() + U[:, 0] @ mean, -y.min() - U[:, 0] @ mean]
    elif rank >= 2:
        Y = centered @ U
        try:
            hull = ConvexHull(Y)
        except QhullError as exc:
            raise lp.LPError(f"qhull failed computing a convex hull: {exc}") from exc
        eqs = hull.equations
        normals = eqs[:, :-1] @ U.T
        offsets = -eqs[:, -1] + normals @ mean
        for a, c in zip(normals, offsets):
            rows.append(a)
            rhs.append(c)
    for j in range(W.shape[1]):
        w = W[:, j]
        c = w @ mean
        rows += [w, -w]
        rhs += [c, -c]
    A = np.array(rows).reshape(-1, n)
    b = np.array(rhs)
    return _unique_rows(HPolytope(A, b))


def _unique_rows(P: HPolytope, tol: float = 1e-9) -> HPolytope:
    P = _normalized(P)
    keep: list[int] = []
    for i in range(P.n_constraints):
        dup = False
        for j in keep:
            if np.max(np.abs(P.A[i] - P.A[j])) <= tol and abs(P.b[i] - P.b[j]) <= tol * max(1.0, abs(P.b[j])):
                dup = True
                break
        if not dup:
            keep.append(i)
    return HPolytope(P.A[keep], P.b[keep], clipped=P.clipped)


def convex_hull_pair(P: HPolytope, Q: HPolytope) -> HPolytope:
    """conv(P ∪ Q) for bounded P, Q (an empty argument is ignored)."""
    _check_same_dim(P, Q)
    VP = vertex_enumeration(P).vertices
    VQ = vertex_enumeration(Q).vertices
    pts = np.vstack([VP, VQ])
    if len(pts) == 0:
        return HPolytope.empty(P.dim)
    H = convex_hull_points(pts)
    return HPolytope(H.A, H.b, clipped=P.clipped or Q.clipped)


def _single_point(P: HPolytope) -> np.ndarray | None:
    V = vertex_enumeration(P).vertices
    if len(V) == 1:
        return V[0]
    return None


def minkowski_sum(P: HPolytope, Q: HPolytope, method: str = "vertex") -> HPolytope:
    """P ⊕ Q for bounded P, Q.

    ``method="vertex"`` sums vertex pairs and takes the hull;
    ``method="lift"`` projects the lifted set ``{(z, x) | x in P, z - x in Q}``.
    A singleton summand is applied as an exact translation.
    """
    _check_same_dim(P, Q)
    if is_empty(P) or is_empty(Q):
        return HPolytope.empty(P.dim)
    if not (is_bounded(P) and is_bounded(Q)):
        raise UnboundedError("Minkowski sum needs bounded operands")
    q = _single_point(Q)
    if q is not None:
        return translate(P, q) if np.any(q) else P
    p = _single_point(P)
    if p is not None:
        return translate(Q, p) if np.any(p) else Q
    if method == "lift":
        n = P.dim
        A = np.block([
            [np.zeros((P.n_constraints, n)), P.A],
            [Q.A, -Q.A],
        ])
        lifted = HPolytope(A, np.concatenate([P.b, Q.b]))
        return project(lifted, 0, n)
    if method != "vertex":
        raise ValueError(f"unknown Minkowski method {method!r}")
    VP = vertex_enumeration(P).vertices
    VQ = vertex_enumeration(Q).vertices
    sums = (VP[:, None, :] + VQ[None, :, :]).reshape(-1, P.dim)
    return convex_hull_points(sums)


def pontryagin_diff(P: HPolytope, Q: HPolytope) -> HPolytope:
    """P ⊖ Q: each offset ``b_i`` shrinks by the support of Q along ``a_i``."""
    _check_same_dim(P, Q)
    if is_empty(Q):
        return P
    q = _single_point(Q) if is_bounded(Q) else None
    if q is not None:
        return translate(P, -q) if np.any(q) else P
    h = np.array([support(Q, a) for a in P.A])
    return HPolytope(P.A, P.b - h, clipped=P.clipped)


# ---------------------------------------------------------------------------
# redundancy removal and projection


def remove_redundancy(P: HPolytope, tol: float = 1e-9) -> HPolytope:
    """Drop rows whose removal leaves the set unchanged.

    Rows are normalised first; each remaining row is tested by maximising
    its own functional over the others (with the row relaxed by one unit so
    the LP stays bounded).  Surviving rows keep their original order.
    """
    if P.n_constraints == 0:
        return P
    if is_empty(P):
        return HPolytope.empty(P.dim)
    Pn = _unique_rows(P)
    A, b = Pn.A, Pn.b
    keep = np.ones(len(b), dtype=bool)
    for i in range(len(b)):
        keep[i] = False
        A_rest = np.vstack([A[keep], A[i]])
        b_rest = np.concatenate([b[keep], [b[i] + 1.0]])
        res = lp.solve(-A[i], A_rest, b_rest)
        if res.status == lp.INFEASIBLE:
            raise lp.LPError("redundancy LP infeasible on a nonempty polytope")
        redundant = res.ok and -res.value <= b[i] + tol
        keep[i] = not redundant
    return HPolytope(A[keep], b[keep], clipped=P.clipped)


def _eliminate(A: np.ndarray, b: np.ndarray, j: int) -> tuple[np.ndarray, np.ndarray]:
    col = A[:, j]
    scale = np.max(np.abs(A), axis=1, initial=0.0)
    pos = np.flatnonzero(col > 1e-12 * np.maximum(scale, 1.0))
    neg = np.flatnonzero(col < -1e-12 * np.maximum(scale, 1.0))
    zero = np.setdiff1d(np.arange(len(b)), np.concatenate([pos, neg]))
    rows = [A[zero]]
    rhs = [b[zero]]
    if len(pos) and len(neg):
        Ap = A[pos] / col[pos, None]
        bp = b[pos] / col[pos]
        An = A[neg] / -col[neg, None]
        bn = b[neg] / -col[neg]
        rows.append((Ap[:, None, :] + An[None, :, :]).reshape(-1, A.shape[1]))
        rhs.append((bp[:, None] + bn[None, :]).reshape(-1))
    A_new = np.vstack(rows)
    A_new[:, j] = 0.0
    return A_new, np.concatenate(rhs)


def project_onto(P: HPolytope, keep: Sequence[int]) -> HPolytope:
    """Image of ``P`` under selection of the coordinates ``keep`` (in order).

    Fourier-Motzkin elimination, one variable at a time, with LP redundancy
    removal after each step.
    """
    keep = list(keep)
    n = P.dim
    if any(k < 0 or k >= n for k in keep) or len(set(keep)) != len(keep):
        raise PolytopeError(f"invalid projection coordinates {keep}")
    if is_empty(P):
        return HPolytope.empty(len(keep))
    drop = [j for j in range(n) if j not in keep]
    cur = remove_redundancy(P)
    A, b = np.array(cur.A), np.array(cur.b)
    for j in drop:
        A, b = _eliminate(A, b, j)
        cur = remove_redundancy(HPolytope(A, b))
        A, b = np.array(cur.A), np.array(cur.b)
    return HPolytope(A[:, keep], b, clipped=P.clipped)


def project(P: HPolytope, start: int, stop: int) -> HPolytope:
    """Projection onto the contiguous coordinates ``start:stop`` (0-based, half-open)."""
    if not 0 <= start < stop <= P.dim:
        raise PolytopeError(f"invalid projection range {start}:{stop} for dim {P.dim}")
    return project_onto(P, range(start, stop))


# ---------------------------------------------------------------------------
# sampling


def sample_interior(P: HPolytope, n: int, seed: int, burn_in: int = 20, thin: int = 1) -> np.ndarray:
    """Hit-and-run samples started at the Chebyshev center.

    For flat polytopes the walk runs inside the affine hull.  Returns an
    ``(n, dim)`` array; deterministic for a given seed.
    """
    if is_empty(P):
        raise EmptyPolytopeError("cannot sample an empty polytope")
    if not is_bounded(P):
        raise UnboundedError("cannot sample an unbounded polytope")
    red = _reduce(P)
    rng = np.random.default_rng(seed)
    out = np.empty((n, P.dim))
    k = red.basis.shape[1]
    if k == 0:
        out[:] = red.origin
        return out
    walker = _HitAndRun(red.inner, red.center, rng)
    for _ in range(burn_in):
        walker.step()
    for i in range(n):
        for _ in range(thin):
            walker.step()
        out[i] = red.origin + red.basis @ walker.y
    return out


class _HitAndRun:
    def __init__(self, P: HPolytope, start: np.ndarray, rng: np.random.Generator):
        self.A = P.A
        self.b = P.b
        self.y = np.array(start, dtype=float)
        self.rng = rng

    def step(self) -> np.ndarray:
        u = self.rng.standard_normal(self.y.size)
        u /= np.linalg.norm(u)
        slack = self.b - self.A @ self.y
        rate = self.A @ u
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = slack / rate
        pos = rate > 1e-14
        neg = rate < -1e-14
        hi = np.min(ratio[pos]) if np.any(pos) else np.inf
        lo = np.max(ratio[neg]) if np.any(neg) else -np.inf
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise UnboundedError("hit-and-run chord is unbounded")
        hi = max(hi, 0.0)
        lo = min(lo, 0.0)
        self.y = self.y + self.rng.uniform(lo, hi) * u
        return self.y
