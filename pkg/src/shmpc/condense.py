"""Per-interval compression of dynamics, cost and constraints.

A blocked interval of length s collapses to one transition z+ = A^s z + (Σ A^j B) v
with cost weight H_blk(s) = Σ (A_aug^j)' H A_aug^j and constraint set
F_blk(s) = ∩_j preimage(F_bar, A_aug^j) — the state-input pairs that stay
feasible for the whole interval. The LP-based inner approximation replaces
F_blk by a scaled/translated low-complexity template certified inside it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import EmptySetError, InfeasibleProblem, UnboundedSetError
from .geometry import HPolytope, intersect, preimage, remove_redundancy
from .tube import LTISystem


@dataclass(frozen=True)
class AugmentedSystem:
    """Constant-input transition matrix [[A, B], [0, I]] acting on (z, v)."""

    A_aug: np.ndarray

    @classmethod
    def from_system(cls, sys: LTISystem) -> "AugmentedSystem":
        n, m = sys.n, sys.m
        A_aug = np.block([[sys.A, sys.B],
                          [np.zeros((m, n)), np.eye(m)]])
        return cls(A_aug=A_aug)

    @property
    def dim(self) -> int:
        return self.A_aug.shape[0]

    def powers(self, count: int):
        """[I, A_aug, ..., A_aug^(count-1)]."""
        out = [np.eye(self.dim)]
        for _ in range(count - 1):
            out.append(self.A_aug @ out[-1])
        return out


def block_dynamics(sys: LTISystem, s: int):
    """(A^s, Σ_{j<s} A^j B) by iterated accumulation."""
    if s < 1:
        raise ValueError("interval length must be >= 1")
    A_blk = np.eye(sys.n)
    B_blk = np.zeros((sys.n, sys.m))
    for _ in range(s):
        B_blk = B_blk + A_blk @ sys.B
        A_blk = sys.A @ A_blk
    return A_blk, B_blk


def block_cost(H, aug: AugmentedSystem, s: int) -> np.ndarray:
    """Σ_{j<s} (A_aug^j)' H A_aug^j; symmetric PD when H is."""
    if s < 1:
        raise ValueError("interval length must be >= 1")
    H = np.asarray(H, dtype=float)
    out = np.zeros_like(H)
    M = np.eye(aug.dim)
    for _ in range(s):
        out += M.T @ H @ M
        M = aug.A_aug @ M
    return 0.5 * (out + out.T)


def block_constraints_exact(F_bar: HPolytope, aug: AugmentedSystem, s: int,
                            minimal: bool = False) -> HPolytope:
    """∩_{j<s} preimage(F_bar, A_aug^j).

    minimal=False keeps the literal stacked rows (the constraint matrices of
    the uncompressed formulation); minimal=True removes redundant halfspaces.
    """
    polys = [preimage(F_bar, M) for M in aug.powers(s)]
    P = intersect(polys)
    return remove_redundancy(P) if minimal else P


@dataclass(frozen=True)
class TemplateSpec:
    """Which interval steps the template intersects over."""

    pi: tuple

    def __post_init__(self):
        pi = tuple(sorted(set(int(j) for j in self.pi)))
        if not pi:
            raise ValueError("template index set must be nonempty")
        if any(j < 0 for j in pi):
            raise ValueError("template indices must be nonnegative")
        object.__setattr__(self, "pi", pi)

    @classmethod
    def default(cls, s: int) -> "TemplateSpec":
        # first, middle (rounded toward zero) and last step of the interval
        return cls(pi=(0, (s - 1) // 2, s - 1))


def build_template(F_bar: HPolytope, aug: AugmentedSystem, s: int,
                   spec: TemplateSpec | None = None,
                   minimal: bool = True) -> HPolytope:
    """∩_{j in pi} preimage(F_bar, A_aug^j), redundancy-removed by default."""
    spec = spec or TemplateSpec.default(s)
    if any(j > s - 1 for j in spec.pi):
        raise ValueError("template index beyond the interval")
    powers = aug.powers(s)
    P = intersect([preimage(F_bar, powers[j]) for j in spec.pi])
    return remove_redundancy(P) if minimal else P


@dataclass(frozen=True)
class ApproxSolution:
    """Optimal scaling/translation of the template plus the LP multiplier."""

    sigma: np.ndarray
    x_offset: np.ndarray
    Lambda: np.ndarray


def _unbounded_axes(P: HPolytope):
    """Coordinate axes along which the set extends to infinity (either sign)."""
    out = []
    for j in range(P.dim):
        e = np.zeros(P.dim)
        e[j] = 1.0
        try:
            P.support(e)
            P.support(-e)
        except UnboundedSetError:
            out.append(j)
    return out


def inner_approximate(F_exact: HPolytope, template: HPolytope,
                      sigma_min: float = 1e-6, sigma_cap: float = 1e6,
                      pin_unbounded: bool = True):
    """Largest scaled/translated copy of the template inside F_exact.

    Solves the containment LP
        max Σ σ_i  s.t.  Λ F_t = F diag(σ), Λ f_t <= f − F x̄, Λ >= 0,
                         σ_min <= σ <= σ_cap
    and recovers the inner approximation
        {x | F_t diag(σ*)^{-1} x <= f_t + F_t diag(σ*)^{-1} x̄*},
    which is contained in F_exact by construction.

    Volume maximization is meaningless along recession directions, and
    letting σ grow there distorts every coupled halfspace; with
    `pin_unbounded` (default) axes along which F_exact is unbounded get
    σ = 1, x̄ = 0 and the objective runs over the bounded axes only.
    """
    F, f = F_exact.normals, F_exact.offsets
    Ft, ft = template.normals, template.offsets
    if template.dim != F_exact.dim:
        raise ValueError("template dimension mismatch")
    qF, d = F.shape
    qt = Ft.shape[0]
    pinned = set(_unbounded_axes(F_exact)) if pin_unbounded else set()

    # vars: sigma (d), xbar (d), Lambda (qF x qt, row-major, >= 0)
    nv = 2 * d + qF * qt

    # eq rows (qF*d): Lambda Ft − F diag(sigma) = 0
    lam_block = sp.kron(sp.eye(qF), sp.csr_matrix(Ft.T), format="coo")
    rows = np.arange(qF * d)
    sig_cols = np.tile(np.arange(d), qF)
    sig_vals = -F.reshape(-1)
    sig_block = sp.coo_matrix((sig_vals, (rows, sig_cols)), shape=(qF * d, d))
    A_eq = sp.hstack([sig_block.tocsr(),
                      sp.csr_matrix((qF * d, d)),
                      lam_block.tocsr()], format="csr")
    b_eq = np.zeros(qF * d)

    # ineq rows (qF): Lambda ft + F xbar <= f
    lam_ub = sp.kron(sp.eye(qF), sp.csr_matrix(ft[None, :]), format="csr")
    A_ub = sp.hstack([sp.csr_matrix((qF, d)), sp.csr_matrix(F), lam_ub],
                     format="csr")

    c = np.zeros(nv)
    c[:d] = -1.0
    sig_bounds = [(sigma_min, sigma_cap)] * d
    off_bounds = [(None, None)] * d
    for j in pinned:
        c[j] = 0.0
        sig_bounds[j] = (1.0, 1.0)
        off_bounds[j] = (0.0, 0.0)
    bounds = sig_bounds + off_bounds + [(0.0, None)] * (qF * qt)
    res = linprog(c, A_ub=A_ub, b_ub=f, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                  method="highs")
    if res.status == 2:
        raise InfeasibleProblem("template shape incompatible with the target set")
    if res.status == 3:
        raise UnboundedSetError("scaling LP unbounded; degenerate template")
    if res.status != 0:
        raise InfeasibleProblem("scaling LP failed: " + res.message)

    sigma = res.x[:d]
    x_off = res.x[d:2 * d]
    Lam = res.x[2 * d:].reshape(qF, qt)
    Dinv = Ft / sigma[None, :]
    recovered = HPolytope(Dinv, ft + Dinv @ x_off)
    return ApproxSolution(sigma=sigma, x_offset=x_off, Lambda=Lam), recovered


@dataclass
class BlockStage:
    """Everything a QP needs for one interval length."""

    length: int
    A_blk: np.ndarray
    B_blk: np.ndarray
    H_blk: np.ndarray
    F_raw: HPolytope | None = None
    F_min: HPolytope | None = None
    F_approx: HPolytope | None = None
    approx_solution: ApproxSolution | None = None

    def constraints(self, mode: str) -> HPolytope:
        P = {"raw": self.F_raw, "minimal": self.F_min,
             "approx": self.F_approx}.get(mode)
        if P is None:
            raise KeyError(f"stage {self.length} lacks the {mode!r} variant")
        return P


_MODE_VARIANTS = {"raw": ("raw",), "minimal": ("raw", "minimal"),
                  "approx": ("raw", "minimal", "approx")}


class StageCache:
    """BlockStage memo keyed by interval length, with optional disk persistence.

    Disk entries are keyed by a hash of the system, cost, constraint data and
    build options so stale caches can never be reused across problems.
    """

    def __init__(self, sys: LTISystem, H, F_bar: HPolytope,
                 template: TemplateSpec | None = None,
                 cache_dir: str | Path | None = None,
                 sigma_min: float = 1e-6, sigma_cap: float = 1e6):
        self.sys = sys
        self.H = np.asarray(H, dtype=float)
        self.F_bar = F_bar
        self.aug = AugmentedSystem.from_system(sys)
        self.template_spec = template
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.sigma_min = sigma_min
        self.sigma_cap = sigma_cap
        self._stages: dict[int, BlockStage] = {}
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)

    def _key(self, s: int) -> str:
        h = hashlib.sha256()
        for arr in (self.sys.A, self.sys.B, self.H,
                    self.F_bar.normals, self.F_bar.offsets):
            h.update(np.ascontiguousarray(arr).tobytes())
        pi = self.template_spec.pi if self.template_spec else ("default",)
        h.update(json.dumps([s, list(map(str, pi)),
                             self.sigma_min, self.sigma_cap]).encode())
        return h.hexdigest()[:24]

    def _path(self, s: int) -> Path:
        return self.cache_dir / f"stage_{s}_{self._key(s)}.npz"

    def get(self, s: int, mode: str = "approx") -> BlockStage:
        """Stage for length s with at least the variants `mode` needs built."""
        stage = self._stages.get(s)
        if stage is None:
            stage = self._load(s) or self._base_stage(s)
            self._stages[s] = stage
        changed = self._ensure_variants(stage, _MODE_VARIANTS[mode])
        if changed and self.cache_dir:
            self._store(stage)
        return stage

    def build_all(self, lengths, mode: str = "approx"):
        for s in lengths:
            self.get(s, mode)
        return self

    def _base_stage(self, s: int) -> BlockStage:
        A_blk, B_blk = block_dynamics(self.sys, s)
        H_blk = block_cost(self.H, self.aug, s)
        return BlockStage(length=s, A_blk=A_blk, B_blk=B_blk, H_blk=H_blk)

    def _ensure_variants(self, stage: BlockStage, variants) -> bool:
        changed = False
        s = stage.length
        if "raw" in variants and stage.F_raw is None:
            stage.F_raw = block_constraints_exact(self.F_bar, self.aug, s)
            changed = True
        if "minimal" in variants and stage.F_min is None:
            stage.F_min = remove_redundancy(stage.F_raw)
            changed = True
        if "approx" in variants and stage.F_approx is None:
            spec = self.template_spec or TemplateSpec.default(s)
            # clamp template steps to the interval
            spec = TemplateSpec(tuple(min(j, s - 1) for j in spec.pi))
            templ = build_template(self.F_bar, self.aug, s, spec)
            sol, recovered = inner_approximate(
                stage.F_min, templ, self.sigma_min, self.sigma_cap)
            stage.F_approx = recovered
            stage.approx_solution = sol
            changed = True
        return changed

    def _store(self, stage: BlockStage):
        data = {"length": stage.length, "A_blk": stage.A_blk,
                "B_blk": stage.B_blk, "H_blk": stage.H_blk}
        for name in ("F_raw", "F_min", "F_approx"):
            P = getattr(stage, name)
            if P is not None:
                data[name + "_N"] = P.normals
                data[name + "_b"] = P.offsets
        if stage.approx_solution is not None:
            data["sigma"] = stage.approx_solution.sigma
            data["x_offset"] = stage.approx_solution.x_offset
            data["Lambda"] = stage.approx_solution.Lambda
        np.savez_compressed(self._path(stage.length), **data)

    def _load(self, s: int):
        if not self.cache_dir:
            return None
        path = self._path(s)
        if not path.exists():
            return None
        with np.load(path) as z:
            stage = BlockStage(length=int(z["length"]), A_blk=z["A_blk"],
                               B_blk=z["B_blk"], H_blk=z["H_blk"])
            for name in ("F_raw", "F_min", "F_approx"):
                if name + "_N" in z:
                    setattr(stage, name,
                            HPolytope(z[name + "_N"], z[name + "_b"]))
            if "sigma" in z:
                stage.approx_solution = ApproxSolution(
                    sigma=z["sigma"], x_offset=z["x_offset"], Lambda=z["Lambda"])
        return stage
