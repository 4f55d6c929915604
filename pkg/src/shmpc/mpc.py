"""Shrinking-horizon QP assembly, solution and the closed-loop state machine.

Decision variables are the nominal boundary states (kept explicit, which
preserves sparsity), the blocked inputs, and tube coordinates lambda with
z0 = x_k + G_Z lambda, ||lambda||_inf <= 1 — an exact encoding of the
initial-set constraint for the symmetric tube cross-section.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
import osqp
import scipy.sparse as sp

from .blocking import (
    BlockingTransition,
    BlockingVector,
    TransitionKind,
    advance,
    warm_start,
)
from .condense import StageCache
from .errors import (
    InfeasibleProblem,
    MissingStage,
    RecursiveFeasibilityViolation,
    SolverNotConverged,
)
from .geometry import HPolytope, Zonotope
from .tube import LTISystem, TubeDesign, tighten

MODES = ("full", "raw", "minimal", "approx")

# primal/dual tolerance for the QP and the post-solve violation audit
QP_EPS = 1e-7
AUDIT_TOL = 1e-5


@dataclass(frozen=True)
class ManeuverProblem:
    """A complete finite-time maneuver: system, sets, cost and horizon data."""

    sys: LTISystem
    F: HPolytope
    X_T: HPolytope
    W: Zonotope
    H: np.ndarray
    N0: int
    N_max: int
    x_ref: np.ndarray
    tube: TubeDesign
    s0: BlockingVector
    F_bar: HPolytope = field(init=False)
    X_T_bar: HPolytope = field(init=False)

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        d = self.sys.n + self.sys.m
        if H.shape != (d, d):
            raise ValueError("H must act on the stacked (x, u) pair")
        if np.any(np.linalg.eigvalsh(0.5 * (H + H.T)) <= 0):
            raise ValueError("H must be positive definite")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "x_ref",
                           np.asarray(self.x_ref, dtype=float).ravel())
        if self.s0.horizon != self.N0:
            raise ValueError("sum(s0) must equal N0")
        if len(self.s0) > self.N_max:
            raise ValueError("len(s0) exceeds the decision-input budget")
        F_bar, X_T_bar = tighten(self.F, self.X_T, self.tube.Z, self.tube.K)
        object.__setattr__(self, "F_bar", F_bar)
        object.__setattr__(self, "X_T_bar", X_T_bar)

    def stage_cache(self, cache_dir=None) -> StageCache:
        return StageCache(self.sys, self.H, self.F_bar, cache_dir=cache_dir)


@dataclass
class QPData:
    """One assembled QP in OSQP form: min 1/2 x'Px + q'x, l <= Ax <= u."""

    P: sp.csc_matrix
    q: np.ndarray
    A: sp.csc_matrix
    l: np.ndarray
    u: np.ndarray
    const: float
    n: int
    m: int
    g: int
    lengths: tuple
    mode: str

    @property
    def num_intervals(self) -> int:
        return len(self.lengths)

    def var_slices(self):
        N = self.num_intervals
        nz = (N + 1) * self.n
        return (slice(0, nz), slice(nz, nz + N * self.m),
                slice(nz + N * self.m, nz + N * self.m + self.g))

    def to_triplet_json(self) -> str:
        """Documented sparse-triplet export for external cross-checking."""
        def trip(M):
            C = M.tocoo()
            return {"rows": C.row.tolist(), "cols": C.col.tolist(),
                    "vals": C.data.tolist(), "shape": list(C.shape)}
        return json.dumps({
            "P": trip(self.P), "q": self.q.tolist(), "A": trip(self.A),
            "l": [None if v == -np.inf else v for v in self.l.tolist()],
            "u": [None if v == np.inf else v for v in self.u.tolist()],
            "objective_constant": self.const,
            "mode": self.mode, "lengths": list(self.lengths),
        })


@dataclass
class QPSolution:
    V_bar: np.ndarray
    z0: np.ndarray
    z_seq: np.ndarray
    lam: np.ndarray
    cost: float
    status: str
    iterations: int
    solve_time: float
    max_violation: float


def _stage_sequence(problem: ManeuverProblem, cache: StageCache | None,
                    s: BlockingVector | None, N_k: int, mode: str):
    """Per-interval (A, B, H, F) tuples for the requested mode."""
    if mode == "full":
        F = problem.F_bar
        sysA, sysB = problem.sys.A, problem.sys.B
        return [(sysA, sysB, problem.H, F) for _ in range(N_k)], (1,) * N_k
    if s is None or cache is None:
        raise MissingStage("blocked modes need a blocking vector and stages")
    seq = []
    for length in s:
        stage = cache._stages.get(length)
        if stage is None:
            raise MissingStage(f"stage for length {length} not precomputed")
        seq.append((stage.A_blk, stage.B_blk, stage.H_blk,
                    stage.constraints(mode)))
    return seq, tuple(s)


def assemble(problem: ManeuverProblem, cache: StageCache | None, x_k,
             s: BlockingVector, mode: str) -> QPData:
    """Build the QP for state x_k under blocking s.

    Full mode expects the degenerate all-ones blocking (one decision input
    per step) and uses F_bar directly at every step.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    x_k = np.asarray(x_k, dtype=float).ravel()
    n, m = problem.sys.n, problem.sys.m
    stages, lengths = _stage_sequence(problem, cache, s, s.horizon, mode)
    N = len(stages)
    Z = problem.tube.Z
    g = Z.order
    x_ref = problem.x_ref
    r = np.concatenate([x_ref, np.zeros(m)])

    nz = (N + 1) * n
    nv = N * m
    ntot = nz + nv + g
    zi = lambda i: i * n
    vi = lambda i: nz + i * m
    li = nz + nv

    P_rows, P_cols, P_vals = [], [], []
    q = np.zeros(ntot)
    const = 0.0

    def add_quad(Hm, rows, cols):
        for a, ra in enumerate(rows):
            for b, cb in enumerate(cols):
                v = Hm[a, b]
                if v != 0.0:
                    P_rows.append(ra)
                    P_cols.append(cb)
                    P_vals.append(2.0 * v)

    for i, (Ab, Bb, Hb, _) in enumerate(stages):
        idx = list(range(zi(i), zi(i) + n)) + list(range(vi(i), vi(i) + m))
        add_quad(Hb, idx, idx)
        lin = -2.0 * (Hb @ r)
        q[idx] += lin
        const += float(r @ Hb @ r)

    Pt = problem.tube.P_terminal
    idxT = list(range(zi(N), zi(N) + n))
    add_quad(Pt, idxT, idxT)
    q[idxT] += -2.0 * (Pt @ x_ref)
    const += float(x_ref @ Pt @ x_ref)

    P = sp.coo_matrix((P_vals, (P_rows, P_cols)), shape=(ntot, ntot)).tocsc()
    P = sp.triu(P, format="csc")

    A_rows, A_cols, A_vals = [], [], []
    lo, up = [], []
    row = 0

    def put(r_, c_, v_):
        A_rows.append(r_)
        A_cols.append(c_)
        A_vals.append(v_)

    # z0 - G lam = x_k + c_Z
    for a in range(n):
        put(row + a, zi(0) + a, 1.0)
        for b in range(g):
            gv = Z.generators[a, b]
            if gv != 0.0:
                put(row + a, li + b, -gv)
    rhs = x_k + Z.center
    lo.extend(rhs.tolist())
    up.extend(rhs.tolist())
    row += n

    # lambda box
    for b in range(g):
        put(row + b, li + b, 1.0)
    lo.extend([-1.0] * g)
    up.extend([1.0] * g)
    row += g

    # dynamics: z_{i+1} - Ab z_i - Bb v_i = 0
    for i, (Ab, Bb, _, _) in enumerate(stages):
        for a in range(n):
            put(row + a, zi(i + 1) + a, 1.0)
            for b in range(n):
                v = Ab[a, b]
                if v != 0.0:
                    put(row + a, zi(i) + b, -v)
            for b in range(m):
                v = Bb[a, b]
                if v != 0.0:
                    put(row + a, vi(i) + b, -v)
        lo.extend([0.0] * n)
        up.extend([0.0] * n)
        row += n

    # stage constraints
    for i, (_, _, _, Fp) in enumerate(stages):
        Nmat, offs = Fp.normals, Fp.offsets
        for a in range(Nmat.shape[0]):
            for b in range(n):
                v = Nmat[a, b]
                if v != 0.0:
                    put(row + a, zi(i) + b, v)
            for b in range(m):
                v = Nmat[a, n + b]
                if v != 0.0:
                    put(row + a, vi(i) + b, v)
        lo.extend([-np.inf] * Nmat.shape[0])
        up.extend(offs.tolist())
        row += Nmat.shape[0]

    # terminal set
    XT = problem.X_T_bar
    for a in range(XT.num_halfspaces):
        for b in range(n):
            v = XT.normals[a, b]
            if v != 0.0:
                put(row + a, zi(N) + b, v)
    lo.extend([-np.inf] * XT.num_halfspaces)
    up.extend(XT.offsets.tolist())
    row += XT.num_halfspaces

    A = sp.coo_matrix((A_vals, (A_rows, A_cols)), shape=(row, ntot)).tocsc()
    return QPData(P=P, q=q, A=A, l=np.array(lo), u=np.array(up), const=const,
                  n=n, m=m, g=g, lengths=lengths, mode=mode)


_OSQP_SETTINGS = dict(
    verbose=False,
    eps_abs=QP_EPS,
    eps_rel=QP_EPS,
    polish=True,
    max_iter=200_000,
    adaptive_rho_interval=50,  # fixed interval keeps runs deterministic
)


def solve(qp: QPData, warm: np.ndarray | None = None) -> QPSolution:
    """Solve an assembled QP with OSQP; deterministic for identical inputs.

    Raises InfeasibleProblem (primal infeasible), SolverNotConverged
    (iteration cap or audit failure).
    """
    t0 = time.perf_counter()
    solver = osqp.OSQP()
    solver.setup(qp.P, qp.q, qp.A, qp.l, qp.u, **_OSQP_SETTINGS)
    if warm is not None:
        solver.warm_start(x=np.asarray(warm, dtype=float))
    res = solver.solve()
    elapsed = time.perf_counter() - t0

    status = res.info.status
    if "infeasible" in status:
        raise InfeasibleProblem(f"QP {status}")
    if "maximum iterations" in status:
        raise SolverNotConverged("QP hit the iteration cap")
    if "solved" not in status:
        raise SolverNotConverged(f"QP solver returned {status!r}")

    x = res.x
    ax = qp.A @ x
    viol = float(max(np.max(ax - qp.u, initial=0.0),
                     np.max(qp.l - ax, initial=0.0)))
    if viol > AUDIT_TOL:
        raise SolverNotConverged(
            f"post-solve audit failed: violation {viol:.2e} > {AUDIT_TOL:g}")

    zs, vs, ls = qp.var_slices()
    N = qp.num_intervals
    return QPSolution(
        V_bar=x[vs].copy(),
        z0=x[zs][: qp.n].copy(),
        z_seq=x[zs].reshape(N + 1, qp.n).copy(),
        lam=x[ls].copy(),
        cost=float(res.info.obj_val + qp.const),
        status=status,
        iterations=int(res.info.iter),
        solve_time=elapsed,
        max_violation=viol,
    )


def control(x_k, sol: QPSolution, K) -> np.ndarray:
    """Tube feedback u = vbar0* − K (x_k − z0*)."""
    K = np.asarray(K, dtype=float)
    m = K.shape[0]
    return sol.V_bar[:m] - K @ (np.asarray(x_k, dtype=float) - sol.z0)


@dataclass
class ControllerState:
    """Mutable per-maneuver record threaded through step()."""

    k: int
    s: BlockingVector | None
    prev: QPSolution | None
    mode: str
    last_transition: BlockingTransition | None = None
    last_qp: QPData | None = None


def _warm_vector(problem: ManeuverProblem, cache: StageCache | None,
                 qp: QPData, x_k, z0_warm, V_warm: np.ndarray) -> np.ndarray:
    """Full primal warm start: nominal rollout from z0_warm under V_warm,
    lambda by clipped least squares on z0_warm = x_k + c_Z + G lambda."""
    n, m, g = qp.n, qp.m, qp.g
    N = qp.num_intervals
    Z = problem.tube.Z
    d = np.asarray(z0_warm, dtype=float) - np.asarray(x_k, dtype=float) - Z.center
    if g:
        lam, *_ = np.linalg.lstsq(Z.generators, d, rcond=None)
        lam = np.clip(lam, -1.0, 1.0)
    else:
        lam = np.zeros(0)
    z = np.empty((N + 1, n))
    z[0] = z0_warm
    if qp.mode == "full":
        A_, B_ = problem.sys.A, problem.sys.B
        for i in range(N):
            z[i + 1] = A_ @ z[i] + B_ @ V_warm[i * m:(i + 1) * m]
    else:
        for i, length in enumerate(qp.lengths):
            st = cache._stages[length]
            z[i + 1] = st.A_blk @ z[i] + st.B_blk @ V_warm[i * m:(i + 1) * m]
    return np.concatenate([z.ravel(), V_warm, lam])


def roll_warm_nominal(problem: ManeuverProblem, prev: QPSolution) -> np.ndarray:
    """Nominal start for the next step: one per-step advance of the previous
    nominal under its first blocked input."""
    return problem.sys.A @ prev.z0 + problem.sys.B @ prev.V_bar[: problem.sys.m]


def step(problem: ManeuverProblem, cache: StageCache | None,
         state: ControllerState, x_k) -> tuple[np.ndarray, ControllerState]:
    """One controller step: advance blocking, warm start, solve, apply law.

    Infeasibility at k = 0 reports the state as outside the region of
    attraction; at k > 0 it violates the recursive-feasibility theorem and
    aborts loudly.
    """
    k = state.k
    N_k = problem.N0 - k
    if N_k < 1:
        raise RecursiveFeasibilityViolation("stepped past the horizon")
    m = problem.sys.m

    if k == 0:
        s_new = (BlockingVector((1,) * N_k) if state.mode == "full"
                 else problem.s0)
        qp = assemble(problem, cache, x_k, s_new, state.mode)
        try:
            sol = solve(qp)
        except InfeasibleProblem:
            raise InfeasibleProblem(
                "maneuver infeasible at k=0: x0 outside the region of attraction")
        transition = None
    else:
        if state.mode == "full":
            s_new = BlockingVector((1,) * N_k)
            V_warm = state.prev.V_bar[m:]
            transition = BlockingTransition(TransitionKind.DROP_ONLY)
        else:
            s_new, transition = advance(state.s, N_k + 1, problem.N_max)
            V_warm = warm_start(state.prev.V_bar, transition, m)
        qp = assemble(problem, cache, x_k, s_new, state.mode)
        z0_warm = roll_warm_nominal(problem, state.prev)
        warm = _warm_vector(problem, cache, qp, x_k, z0_warm, V_warm)
        try:
            sol = solve(qp, warm=warm)
        except InfeasibleProblem as exc:
            raise RecursiveFeasibilityViolation(
                f"QP infeasible at k={k}, which Theorem-level recursive "
                f"feasibility forbids: {exc}") from exc

    u = control(x_k, sol, problem.tube.K)
    new_state = ControllerState(k=k + 1, s=s_new, prev=sol, mode=state.mode,
                                last_transition=transition, last_qp=qp)
    return u, new_state


def initial_state(mode: str) -> ControllerState:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    return ControllerState(k=0, s=None, prev=None, mode=mode)
