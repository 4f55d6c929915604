"""Ancillary-controller synthesis, RPI tube computation, constraint tightening.

The tube keeps the true state within a fixed zonotope around the nominal
trajectory; the nominal problem then runs on constraints eroded by the tube
cross-section.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceError,
    DegenerateDisturbance,
    DimensionMismatch,
    NotCertified,
)
from .geometry import HPolytope, Zonotope, erode, zonotope_in_zonotope


@dataclass(frozen=True)
class LTISystem:
    """x+ = A x + B u (+ w), sampled at tau seconds."""

    A: np.ndarray
    B: np.ndarray
    tau: float

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch("A must be square")
        if B.shape[0] != A.shape[0]:
            raise DimensionMismatch("B row count must match A")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class TubeDesign:
    """Ancillary gain, terminal weight and the certified RPI cross-section."""

    K: np.ndarray
    P_terminal: np.ndarray
    Z: Zonotope
    alpha: float
    s_rpi: int

    def to_json(self) -> str:
        return json.dumps({
            "K": self.K.tolist(),
            "P_terminal": self.P_terminal.tolist(),
            "Z_center": self.Z.center.tolist(),
            "Z_generators": self.Z.generators.tolist(),
            "alpha": self.alpha,
            "s_rpi": self.s_rpi,
        })

    @classmethod
    def from_json(cls, text: str) -> "TubeDesign":
        d = json.loads(text)
        return cls(K=np.array(d["K"]), P_terminal=np.array(d["P_terminal"]),
                   Z=Zonotope(np.array(d["Z_center"]), np.array(d["Z_generators"])),
                   alpha=d["alpha"], s_rpi=d["s_rpi"])


def dlqr(sys: LTISystem, Q, R, tol: float = 1e-12, max_iter: int = 100_000):
    """Discrete LQR by Riccati fixed-point iteration from P = Q.

    Returns (K, P) with K = (R + B'PB)^{-1} B'PA. Divergence or a cap hit
    signals a non-stabilizable pair (ConvergenceError).
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    A, B = sys.A, sys.B
    P = Q.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        K = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = A.T @ P @ (A - B @ K) + Q
        P_next = 0.5 * (P_next + P_next.T)
        gap = np.max(np.abs(P_next - P))
        P = P_next
        if not np.isfinite(gap):
            raise ConvergenceError("Riccati iteration diverged")
        if gap <= tol * max(np.max(np.abs(P)), 1.0):
            break
    else:
        raise ConvergenceError("Riccati iteration hit the iteration cap")
    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    if np.max(np.abs(np.linalg.eigvals(A - B @ K))) >= 1.0:
        raise ConvergenceError("closed loop not Schur after Riccati iteration")
    return K, P


def riccati_residual(sys: LTISystem, Q, R, P) -> float:
    """inf-norm of the DARE residual at P, for test oracles."""
    A, B = sys.A, sys.B
    M = A.T @ P @ A - P - A.T @ P @ B @ np.linalg.solve(
        R + B.T @ P @ B, B.T @ P @ A) + Q
    return float(np.max(np.abs(M)))


def _zonotope_facet_normals(Z: Zonotope):
    """Facet normal directions of a full-dimensional zonotope.

    Each facet is spanned by n-1 generators; returns the unit normals of all
    nondegenerate (n-1)-subsets. Exact but combinatorial: meant for the small
    disturbance sets used here.
    """
    n, g = Z.dim, Z.order
    if g < n:
        raise DegenerateDisturbance("zonotope has fewer generators than dims")
    if n == 1:
        return np.array([[1.0]])
    normals = []
    for idx in itertools.combinations(range(g), n - 1):
        Gs = Z.generators[:, idx]
        _, sv, vt = np.linalg.svd(Gs.T, full_matrices=True)
        if sv.size and sv.min() < 1e-12:
            continue
        normals.append(vt[-1])
    if not normals:
        raise DegenerateDisturbance("no nondegenerate facet normals found")
    return np.array(normals)


def compute_rpi(A_K, W: Zonotope, alpha: float = 1e-6, s_cap: int = 2000):
    """Scaled geometric-sum RPI set.

    Finds the smallest s with A_K^s W ⊆ alpha W (support check on W's facet
    normals, exact for full-dimensional W) and returns
    Z = (1-alpha)^{-1} (W ⊕ A_K W ⊕ ... ⊕ A_K^{s-1} W) plus (alpha, s).

    For a rank-deficient W that containment can never hold; raises
    DegenerateDisturbance (use reduced_rpi for those).
    """
    A_K = np.asarray(A_K, dtype=float)
    n = A_K.shape[0]
    if np.max(np.abs(np.linalg.eigvals(A_K))) >= 1.0:
        raise ConvergenceError("A_K is not Schur stable")
    if np.linalg.matrix_rank(W.generators, tol=1e-12) < n:
        raise DegenerateDisturbance(
            "disturbance zonotope is rank-deficient; A_K^s W ⊆ alpha W is "
            "infeasible for every s — use reduced_rpi")
    if np.linalg.norm(W.center) > 1e-12:
        raise ValueError("W must be centered at the origin")

    normals = _zonotope_facet_normals(W)
    hW = np.array([W.support(a) for a in normals])
    M = np.eye(n)
    s = 0
    while s < s_cap:
        s += 1
        M = A_K @ M
        GM = M @ W.generators
        lhs = np.abs(normals @ GM).sum(axis=1)
        if np.all(lhs <= alpha * hW):
            break
    else:
        raise ConvergenceError(
            f"no s <= {s_cap} with A_K^s W ⊆ alpha W (alpha={alpha:g})")

    gens = [W.generators]
    M = np.eye(n)
    for _ in range(1, s):
        M = A_K @ M
        gens.append(M @ W.generators)
    Z = Zonotope(np.zeros(n), np.hstack(gens) / (1.0 - alpha))
    return Z, alpha, s


def _real_modal_form(A_K):
    """Real modal decomposition A_K = T Lam T^{-1} with Lam block diagonal
    (1x1 real, 2x2 rotation-scaling blocks)."""
    evals, evecs = np.linalg.eig(A_K)
    n = A_K.shape[0]
    T = np.zeros((n, n))
    used = np.zeros(n, dtype=bool)
    col = 0
    for i in range(n):
        if used[i]:
            continue
        lam, v = evals[i], evecs[:, i]
        if abs(lam.imag) < 1e-12:
            T[:, col] = v.real
            used[i] = True
            col += 1
        else:
            T[:, col] = v.real
            T[:, col + 1] = v.imag
            used[i] = True
            j = np.argmin(np.abs(evals - lam.conjugate()) + used * 1e9)
            used[j] = True
            col += 2
    if np.linalg.matrix_rank(T) < n:
        raise ConvergenceError("A_K is defective; modal tail bound unavailable")
    Tinv = np.linalg.inv(T)
    Lam = Tinv @ A_K @ T
    return T, Tinv, Lam


def reduced_rpi(A_K, W: Zonotope, head: int = 60, s_cap: int = 2000,
                slack: float = 1e-9, certify: bool = True):
    """Low-order RPI zonotope: head of the geometric sum plus a rigorous
    tail box in the closed-loop eigenbasis.

    The tail Σ_{j>=head} A_K^j W is over-approximated by T diag(beta) with
    beta = (I − |Λ|)^{-1} |T^{-1} A_K^head G_W| 1 in modal coordinates, which
    absorbs its own A_K image by construction. Works for rank-deficient W.
    Returns (Z, s) with Z certified RPI via the containment LP when
    `certify` is set.
    """
    A_K = np.asarray(A_K, dtype=float)
    n = A_K.shape[0]
    if head < 1 or head > s_cap:
        raise ValueError("head must be in [1, s_cap]")
    if np.linalg.norm(W.center) > 1e-12:
        raise ValueError("W must be centered at the origin")
    T, Tinv, Lam = _real_modal_form(A_K)
    absLam = np.abs(Lam)
    if np.max(np.abs(np.linalg.eigvals(absLam))) >= 1.0:
        raise ConvergenceError(
            "|Lambda| is not contractive; modal tail bound unavailable")

    gens = []
    M = np.eye(n)
    for _ in range(head):
        gens.append(M @ W.generators)
        M = A_K @ M
    feed = np.abs(Tinv @ M @ W.generators).sum(axis=1)
    beta = np.linalg.solve(np.eye(n) - absLam, feed)
    tail = T @ np.diag(beta * (1.0 + slack))
    tail = tail[:, np.abs(tail).sum(axis=0) > 0]
    Z = Zonotope(np.zeros(n), np.hstack(gens + [tail]))
    if certify:
        rpi_certificate(A_K, W, Z)  # raises NotCertified on failure
    return Z, head


def rpi_certificate(A_K, W: Zonotope, Z: Zonotope):
    """Certificate for Def.-style invariance A_K Z ⊕ W ⊆ Z.

    Sufficient containment LP on zonotopes; raises NotCertified if the LP
    is infeasible.
    """
    image = Z.map(np.asarray(A_K, dtype=float)).minkowski_sum(W)
    return zonotope_in_zonotope(image, Z)


def coupled_cross_section(Z: Zonotope, K) -> Zonotope:
    """{(z, Kz) | z ∈ Z}: the exact error/feedback pair set used to erode
    coupled state-input constraints."""
    K = np.asarray(K, dtype=float)
    return Zonotope(np.concatenate([Z.center, K @ Z.center]),
                    np.vstack([Z.generators, K @ Z.generators]))


def cartesian_cross_section(Z: Zonotope, K) -> Zonotope:
    """Literal Cartesian product Z × KZ (strict paper parity option)."""
    K = np.asarray(K, dtype=float)
    n, g = Z.dim, Z.order
    m = K.shape[0]
    G = np.block([[Z.generators, np.zeros((n, g))],
                  [np.zeros((m, g)), K @ Z.generators]])
    return Zonotope(np.concatenate([Z.center, K @ Z.center]), G)


def tighten(F: HPolytope, X_T: HPolytope, Z: Zonotope, K,
            coupled: bool = True):
    """Tightened constraint pair (F_bar, X_T_bar).

    F_bar erodes the state-input set by the tube cross-section — by default
    the coupled set {(z, Kz)}, which the closed-loop error actually produces
    and which is a subset of the Cartesian product, so F_bar is no smaller;
    pass coupled=False for the literal product. X_T_bar = X_T ⊖ Z.
    Raises EmptySetError when the tube is too large for the constraints.
    """
    cross = coupled_cross_section(Z, K) if coupled else cartesian_cross_section(Z, K)
    if cross.dim != F.dim:
        raise DimensionMismatch("F must live in the stacked (x, u) space")
    F_bar = erode(F, cross)
    X_T_bar = erode(X_T, Z)
    return F_bar, X_T_bar
