"""Polytope and zonotope kernel.

Halfspace algebra (Pontryagin difference, preimages, intersection,
redundancy removal), containment certificates via the generalized Farkas
encoding, and Monte-Carlo volume estimation. All sets are immutable after
construction and every operation is pure, so everything here is safe to use
concurrently on independent inputs.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import (
    DimensionMismatch,
    EmptySetError,
    NotCertified,
    UnboundedSetError,
)

_FEAS_TOL = 1e-9


def _solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None):
    """scipy linprog (HiGHS) with free variables by default."""
    n = len(c)
    if bounds is None:
        bounds = [(None, None)] * n
    return linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                   bounds=bounds, method="highs")


@dataclass(frozen=True)
class HPolytope:
    """Convex set {x | normals @ x <= offsets} in halfspace representation.

    Nonemptiness is checked on construction (feasibility LP); boundedness is
    not required. Rows with zero normal are rejected.
    """

    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        N = np.atleast_2d(np.asarray(self.normals, dtype=float))
        b = np.asarray(self.offsets, dtype=float).ravel()
        if N.shape[0] != b.shape[0]:
            raise DimensionMismatch(
                f"{N.shape[0]} normals vs {b.shape[0]} offsets")
        norms = np.linalg.norm(N, axis=1)
        if np.any(norms < 1e-13):
            raise ValueError("zero rows in the normal matrix")
        object.__setattr__(self, "normals", N)
        object.__setattr__(self, "offsets", b)
        if not self._feasible():
            raise EmptySetError("halfspace system is infeasible")

    def _feasible(self) -> bool:
        res = _solve_lp(np.zeros(self.dim), A_ub=self.normals, b_ub=self.offsets)
        return res.status == 0

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    @property
    def num_halfspaces(self) -> int:
        return self.normals.shape[0]

    @classmethod
    def from_box(cls, lower, upper) -> "HPolytope":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        d = lower.size
        eye = np.eye(d)
        return cls(np.vstack([eye, -eye]), np.concatenate([upper, -lower]))

    def contains(self, points, tol: float = 1e-9):
        """Membership test; accepts a single point or an (n, d) batch."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.all(pts @ self.normals.T <= self.offsets + tol, axis=1)
        return inside if np.ndim(points) > 1 else bool(inside[0])

    def support(self, direction) -> float:
        """max direction @ x over the set; UnboundedSetError if infinite."""
        a = np.asarray(direction, dtype=float)
        res = _solve_lp(-a, A_ub=self.normals, b_ub=self.offsets)
        if res.status == 3:
            raise UnboundedSetError("support is +inf along this direction")
        if res.status != 0:
            raise EmptySetError("support LP failed: " + res.message)
        return -res.fun

    def bounding_box(self):
        """Axis-aligned bounding box (lower, upper) via 2*dim support LPs."""
        lower = np.empty(self.dim)
        upper = np.empty(self.dim)
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = 1.0
            upper[j] = self.support(e)
            lower[j] = -self.support(-e)
        return lower, upper

    def interior_point(self):
        """Chebyshev-style strictly feasible point (may sit on faces for
        unbounded or degenerate sets)."""
        norms = np.linalg.norm(self.normals, axis=1)
        c = np.zeros(self.dim + 1)
        c[-1] = -1.0
        A = np.hstack([self.normals, norms[:, None]])
        bounds = [(None, None)] * self.dim + [(0.0, 1e6)]
        res = linprog(c, A_ub=A, b_ub=self.offsets, bounds=bounds, method="highs")
        if res.status != 0:
            raise EmptySetError("interior-point LP failed")
        return res.x[: self.dim]

    def to_json(self) -> str:
        return json.dumps({
            "dim": self.dim,
            "normals": self.normals.tolist(),
            "offsets": self.offsets.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "HPolytope":
        data = json.loads(text)
        P = cls(np.array(data["normals"]), np.array(data["offsets"]))
        if P.dim != data["dim"]:
            raise DimensionMismatch("dim field disagrees with normals")
        return P


@dataclass(frozen=True)
class Zonotope:
    """Centrally symmetric set {center + generators @ xi | ||xi||_inf <= 1}."""

    center: np.ndarray
    generators: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).ravel()
        G = np.asarray(self.generators, dtype=float)
        if G.ndim == 1:
            G = G[:, None]
        if G.shape[0] != c.shape[0]:
            raise DimensionMismatch(
                f"center dim {c.shape[0]} vs generator dim {G.shape[0]}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "generators", G)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def order(self) -> int:
        return self.generators.shape[1]

    @classmethod
    def origin(cls, dim: int) -> "Zonotope":
        return cls(np.zeros(dim), np.zeros((dim, 0)))

    @classmethod
    def from_box(cls, lower, upper) -> "Zonotope":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        return cls((lower + upper) / 2.0, np.diag((upper - lower) / 2.0))

    def support(self, direction) -> float:
        """Exact support function a @ c + sum_i |a @ g_i|."""
        a = np.asarray(direction, dtype=float)
        return float(a @ self.center + np.abs(a @ self.generators).sum())

    def bounding_box(self):
        half = np.abs(self.generators).sum(axis=1)
        return self.center - half, self.center + half

    def map(self, M) -> "Zonotope":
        M = np.asarray(M, dtype=float)
        return Zonotope(M @ self.center, M @ self.generators)

    def minkowski_sum(self, other: "Zonotope") -> "Zonotope":
        if other.dim != self.dim:
            raise DimensionMismatch("zonotope dims differ")
        return Zonotope(self.center + other.center,
                        np.hstack([self.generators, other.generators]))

    def scale(self, factor: float) -> "Zonotope":
        return Zonotope(self.center * factor, self.generators * factor)

    def sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        xi = rng.uniform(-1.0, 1.0, size=(n, self.order))
        return self.center + xi @ self.generators.T

    def vertices_sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        xi = rng.choice([-1.0, 1.0], size=(n, self.order))
        return self.center + xi @ self.generators.T

    def coordinates(self, point, tol: float = 1e-7):
        """Generator coordinates xi with center + G xi = point, minimizing
        ||xi||_inf; raises EmptySetError when the point is outside."""
        d = np.asarray(point, dtype=float) - self.center
        g = self.order
        if g == 0:
            if np.linalg.norm(d) > tol:
                raise EmptySetError("point outside degenerate zonotope")
            return np.zeros(0)
        # vars (xi, t): min t  s.t. G xi = d, -t <= xi_i <= t
        c = np.zeros(g + 1)
        c[-1] = 1.0
        A_eq = np.hstack([self.generators, np.zeros((self.dim, 1))])
        ones = np.ones((g, 1))
        A_ub = np.block([[np.eye(g), -ones], [-np.eye(g), -ones]])
        res = _solve_lp(c, A_ub=A_ub, b_ub=np.zeros(2 * g), A_eq=A_eq, b_eq=d)
        if res.status != 0 or res.x[-1] > 1.0 + tol:
            raise EmptySetError("point outside zonotope")
        return res.x[:g]

    def contains(self, point, tol: float = 1e-7) -> bool:
        try:
            self.coordinates(point, tol=tol)
            return True
        except EmptySetError:
            return False

    def to_json(self) -> str:
        return json.dumps({"center": self.center.tolist(),
                           "generators": self.generators.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "Zonotope":
        data = json.loads(text)
        return cls(np.array(data["center"]), np.array(data["generators"]))


@dataclass(frozen=True)
class ContainmentCertificate:
    """Witness (Gamma, beta, Lambda >= 0) for the Farkas-style containment
    conditions; existence implies X ⊆ Y."""

    Gamma: np.ndarray
    beta: np.ndarray
    Lambda: np.ndarray


# ---------------------------------------------------------------------------
# operations


def erode(P: HPolytope, S) -> HPolytope:
    """Pontryagin difference P ⊖ S, computed halfspace-wise.

    offsets_i' = offsets_i − h_S(normals_i); exact for zonotopes and for
    bounded H-polytopes (support via LP). Valid also for unbounded P.
    """
    if S.dim != P.dim:
        raise DimensionMismatch("erode: dims differ")
    # Zonotope.support is exact; HPolytope.support raises on unbounded S
    sup = np.array([S.support(a) for a in P.normals])
    return HPolytope(P.normals, P.offsets - sup)


def preimage(P: HPolytope, M) -> HPolytope:
    """{xi | M xi ∈ P}. No invertibility needed; zero rows with nonnegative
    offset are vacuous and dropped, with negative offset the set is empty."""
    M = np.asarray(M, dtype=float)
    if M.shape[0] != P.dim:
        raise DimensionMismatch(f"map has {M.shape[0]} rows, set dim {P.dim}")
    N = P.normals @ M
    b = P.offsets.copy()
    norms = np.linalg.norm(N, axis=1)
    dead = norms < 1e-13
    if np.any(dead & (b < -_FEAS_TOL)):
        raise EmptySetError("preimage empty: a constraint excludes all points")
    keep = ~dead
    if not np.any(keep):
        raise EmptySetError("preimage has no effective constraints "
                            "(whole space is not representable)")
    return HPolytope(N[keep], b[keep])


def intersect(polytopes) -> HPolytope:
    """Stacked-halfspace intersection; no redundancy removal."""
    polys = list(polytopes)
    if not polys:
        raise ValueError("need at least one polytope")
    d = polys[0].dim
    for P in polys:
        if P.dim != d:
            raise DimensionMismatch("intersect: dims differ")
    return HPolytope(np.vstack([P.normals for P in polys]),
                     np.concatenate([P.offsets for P in polys]))


def remove_redundancy(P: HPolytope, tol: float = 1e-9) -> HPolytope:
    """Minimal representation of the same set.

    Row i is removed iff max normals_i @ x over the remaining rows is
    <= offsets_i (+ tol); one bounded-objective LP per row, removed rows stay
    removed. A duplicate-row sweep runs first to keep the LP count down.
    """
    N = P.normals.copy()
    b = P.offsets.copy()

    # exact-duplicate sweep: same direction -> keep smallest offset
    scale = np.linalg.norm(N, axis=1)
    Nn = N / scale[:, None]
    bn = b / scale
    keyed = {}
    order = []
    for i in range(len(bn)):
        key = tuple(np.round(Nn[i], 12))
        if key in keyed:
            j = keyed[key]
            if bn[i] < bn[j]:
                keyed[key] = i
        else:
            keyed[key] = i
            order.append(key)
    idx = [keyed[k] for k in order]
    N, b = Nn[idx], bn[idx]

    keep = list(range(len(b)))
    i = 0
    while i < len(keep) and len(keep) > 1:
        r = keep[i]
        others = [k for k in keep if k != r]
        res = _solve_lp(-N[r],
                        A_ub=np.vstack([N[others], N[r][None, :]]),
                        b_ub=np.concatenate([b[others], [b[r] + 1.0]]))
        if res.status == 0 and -res.fun <= b[r] + tol:
            keep.pop(i)
        else:
            i += 1
    return HPolytope(N[keep], b[keep])


def check_containment(X, Y: HPolytope, tol: float = 1e-9) -> ContainmentCertificate:
    """Certify X ⊆ Y for X an HPolytope or a Zonotope, Y an HPolytope.

    Zonotopes use the exact support-function condition (assembled into a
    certificate directly); polytopes use the sufficient Farkas feasibility LP
    Λ H_x = H_y, Λ h_x <= h_y, Λ >= 0. Raises NotCertified on failure — which
    for the polytope case means "not certified", not "not contained".
    """
    Hy, hy = Y.normals, Y.offsets
    if isinstance(X, Zonotope):
        if X.dim != Y.dim:
            raise DimensionMismatch("containment: dims differ")
        margins = hy - Hy @ X.center - np.abs(Hy @ X.generators).sum(axis=1)
        if np.any(margins < -tol):
            raise NotCertified("zonotope support exceeds a polytope offset")
        HyG = Hy @ X.generators
        Lam = np.hstack([np.maximum(HyG, 0.0), np.maximum(-HyG, 0.0)])
        return ContainmentCertificate(Gamma=X.generators.copy(),
                                      beta=-X.center.copy(), Lambda=Lam)

    Hx, hx = X.normals, X.offsets
    if X.dim != Y.dim:
        raise DimensionMismatch("containment: dims differ")
    qy, qx = Hy.shape[0], Hx.shape[0]
    d = Y.dim
    # vars: vec(Lambda) row-major, Lambda >= 0
    nv = qy * qx
    # eq: Lambda Hx = Hy  (qy x d)
    A_eq = sp.kron(sp.eye(qy), sp.csr_matrix(Hx.T), format="csr")
    b_eq = Hy.reshape(-1)  # row-major: row i of (Lambda Hx) = Hx.T @ lambda_i
    # ineq: Lambda hx <= hy
    A_ub = sp.kron(sp.eye(qy), sp.csr_matrix(hx[None, :]), format="csr")
    res = linprog(np.zeros(nv), A_ub=A_ub, b_ub=hy, A_eq=A_eq, b_eq=b_eq,
                  bounds=[(0, None)] * nv, method="highs")
    if res.status != 0:
        raise NotCertified("polytope containment LP infeasible")
    Lam = res.x.reshape(qy, qx)
    return ContainmentCertificate(Gamma=np.eye(d), beta=np.zeros(d), Lambda=Lam)


def zonotope_in_zonotope(X: Zonotope, Y: Zonotope,
                         tol: float = 1e-9) -> ContainmentCertificate:
    """Sufficient containment LP for X ⊆ Y, both zonotopes.

    Finds Gamma, beta with G_x = G_y Gamma, c_y − c_x = G_y beta and
    |Gamma| 1 + |beta| <= 1 rowwise. Raises NotCertified when infeasible.
    """
    if X.dim != Y.dim:
        raise DimensionMismatch("containment: dims differ")
    n = X.dim
    gx, gy = X.order, Y.order
    nG = gy * gx
    # vars: vec(Gamma) col-major, |Gamma| entries, beta, |beta|
    nv = 2 * nG + 2 * gy
    A_eq = sp.hstack([
        sp.kron(sp.eye(gx), sp.csr_matrix(Y.generators)),
        sp.csr_matrix((n * gx, nG + 2 * gy)),
    ], format="csr")
    b_eq = X.generators.flatten(order="F")
    A_eq = sp.vstack([A_eq, sp.hstack([
        sp.csr_matrix((n, 2 * nG)), sp.csr_matrix(Y.generators),
        sp.csr_matrix((n, gy))])], format="csr")
    b_eq = np.concatenate([b_eq, Y.center - X.center])

    I_G = sp.eye(nG)
    abs_rows = sp.lil_matrix((gy, nv))
    for i in range(gy):
        for j in range(gx):
            abs_rows[i, nG + j * gy + i] = 1.0
        abs_rows[i, 2 * nG + gy + i] = 1.0
    A_ub = sp.vstack([
        sp.hstack([I_G, -I_G, sp.csr_matrix((nG, 2 * gy))]),
        sp.hstack([-I_G, -I_G, sp.csr_matrix((nG, 2 * gy))]),
        sp.hstack([sp.csr_matrix((gy, 2 * nG)), sp.eye(gy), -sp.eye(gy)]),
        sp.hstack([sp.csr_matrix((gy, 2 * nG)), -sp.eye(gy), -sp.eye(gy)]),
        abs_rows.tocsr(),
    ], format="csr")
    b_ub = np.concatenate([np.zeros(2 * nG + 2 * gy), np.ones(gy) + tol])
    res = linprog(np.zeros(nv), A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=[(None, None)] * nv, method="highs")
    if res.status != 0:
        raise NotCertified("zonotope containment LP infeasible")
    Gamma = res.x[:nG].reshape(gy, gx, order="F")
    beta = res.x[2 * nG: 2 * nG + gy]
    return ContainmentCertificate(Gamma=Gamma, beta=beta,
                                  Lambda=np.abs(Gamma))


@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    stderr: float
    samples: int
    box_volume: float
    hits: int = field(default=0)


def mc_volume(P: HPolytope, samples: int, seed) -> VolumeEstimate:
    """Rejection-sampling volume estimate over the axis-aligned bounding box.

    Requires a bounded set (per-axis bounding LPs raise otherwise).
    """
    lower, upper = P.bounding_box()  # raises UnboundedSetError if unbounded
    box_vol = float(np.prod(upper - lower))
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    batch = 200_000
    while done < samples:
        n = min(batch, samples - done)
        pts = rng.uniform(lower, upper, size=(n, P.dim))
        hits += int(np.count_nonzero(P.contains(pts)))
        done += n
    p = hits / samples
    value = p * box_vol
    stderr = box_vol * float(np.sqrt(max(p * (1 - p), 0.0) / samples))
    return VolumeEstimate(value=value, stderr=stderr, samples=samples,
                          box_volume=box_vol, hits=hits)
