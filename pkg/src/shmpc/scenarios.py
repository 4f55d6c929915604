"""Scenario library: the helicopter landing benchmark and the random
second-order systems of the constraint-reduction study."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.signal import place_poles
from scipy.spatial import ConvexHull

from .blocking import BlockingVector
from .geometry import HPolytope, Zonotope
from .mpc import ManeuverProblem
from .tube import LTISystem, TubeDesign, dlqr, reduced_rpi


def triple_integrator_axis(tau: float):
    A = np.array([[1.0, tau, tau ** 2 / 2],
                  [0.0, 1.0, tau],
                  [0.0, 0.0, 1.0]])
    B = np.array([[tau ** 3 / 6], [tau ** 2 / 2], [tau]])
    return A, B


def rotation6(angle: float) -> np.ndarray:
    """R(a) ⊗ I3 on the state (px, vx, ax, pz, vz, az)."""
    c, s = np.cos(angle), np.sin(angle)
    I3 = np.eye(3)
    return np.block([[c * I3, -s * I3], [s * I3, c * I3]])


@dataclass(frozen=True)
class HelicopterScenario:
    """The inclined-platform landing benchmark with all derived objects."""

    problem: ManeuverProblem
    incline: float
    x0_box_lower: np.ndarray
    x0_box_upper: np.ndarray


def helicopter(tube_pole: float = 0.96, tube_head: int = 60,
               glideslope_offset: float = 1.0) -> HelicopterScenario:
    """Build the landing benchmark.

    Planning model: two jerk-driven integrator chains at tau = 0.02 s, state
    (px, vx, ax, pz, vz, az), acceleration disturbances |w_i| <= 0.2 entering
    through (tau^2/2, tau, 0). Flight constraints: altitude floor, velocity
    box, approach-direction limit, acceleration/jerk boxes and a glideslope
    band tied to the 25-degree platform plane. The target is a rotated box on
    the platform with gravity-compensated acceleration bounds.

    The ancillary gain is placed per axis at radius `tube_pole` (the nominal
    LQR weights produce a closed loop too slow for any RPI tube to fit the
    target box); the MPC cost keeps H = diag(Q, R) and P from the Riccati
    solution of those weights. `glideslope_offset` is +1: the flight envelope
    extends one meter below the platform plane, which is what makes touchdown
    reachable; see the design notes in the README.
    """
    tau = 0.02
    Ax, Bx = triple_integrator_axis(tau)
    A = np.block([[Ax, np.zeros((3, 3))], [np.zeros((3, 3)), Ax]])
    B = np.block([[Bx, np.zeros((3, 1))], [np.zeros((3, 1)), Bx]])
    sys = LTISystem(A=A, B=B, tau=tau)

    w_dir = np.array([tau ** 2 / 2, tau, 0.0])
    G_W = 0.2 * np.block([[w_dir[:, None], np.zeros((3, 1))],
                          [np.zeros((3, 1)), w_dir[:, None]]])
    W = Zonotope(np.zeros(6), G_W)

    a = np.deg2rad(25.0)
    e = np.eye(8)
    rows, offs = [], []

    def add(row, off):
        rows.append(row)
        offs.append(off)

    add(-e[3], 0.0)                       # pz >= 0
    add(e[1], 15.0)                       # vx <= 15
    add(-e[1], 4.0)                       # vx >= -4
    add(e[4], 5.0)                        # vz <= 5
    add(-e[4], 10.0)                      # vz >= -10
    add(-0.3 * e[1] - e[4], 2.0)          # approach direction
    for i, bound in [(2, 4.0), (5, 5.0), (6, 3.0), (7, 10.0)]:
        add(e[i], bound)
        add(-e[i], bound)
    add(np.tan(a) * e[0] - e[3], glideslope_offset)
    F = HPolytope(np.array(rows), np.array(offs))

    R6 = rotation6(a)
    b_l = -np.array([0.8, -1.0, 1.0, 0.9, 0.4, 4.0])
    b_u = np.array([0.8, 2.2, 1.0, 0.0, 0.4, 4.0])
    grav = (np.eye(6) - R6) @ np.array([0, 0, 0, 0, 0, 9.81])
    X_T = HPolytope(np.vstack([R6.T, -R6.T]),
                    np.concatenate([b_u + grav, -(b_l + grav)]))

    Q = np.diag([5.0, 5.0, 5.0, 5.0, 10.0, 10.0])
    R = np.diag([0.1, 1.0])
    _, P_term = dlqr(sys, Q, R)

    poles = np.array([tube_pole, tube_pole - 0.03, tube_pole - 0.06])
    Kx = place_poles(Ax, Bx, poles).gain_matrix
    K = np.block([[Kx, np.zeros((1, 3))], [np.zeros((1, 3)), Kx]])
    Z, s_rpi = reduced_rpi(A - B @ K, W, head=tube_head)
    tube = TubeDesign(K=K, P_terminal=P_term, Z=Z, alpha=0.0, s_rpi=s_rpi)

    H = np.block([[Q, np.zeros((6, 2))], [np.zeros((2, 6)), R]])
    x_ref = np.array([-0.7, 1.4, 0.2, -0.4, -4.1, -0.9])
    problem = ManeuverProblem(
        sys=sys, F=F, X_T=X_T, W=W, H=H, N0=300, N_max=10, x_ref=x_ref,
        tube=tube, s0=BlockingVector((30,) * 10))

    #        px    vx   ax    pz   vz    az
    lower = [-14.0, 0.5, -1.0, 1.0, -1.5, -1.0]
    upper = [-6.0, 6.0, 1.0, 4.0, 1.0, 1.0]
    return HelicopterScenario(problem=problem, incline=a,
                              x0_box_lower=np.array(lower),
                              x0_box_upper=np.array(upper))


@dataclass(frozen=True)
class RandomPlanarInstance:
    """One system of the constraint-reduction study."""

    sys: LTISystem
    F: HPolytope        # X x U in (x, u) coordinates, R^3
    contains_origin: bool


def random_planar_instance(rng: np.random.Generator,
                           tau: float = 0.05) -> RandomPlanarInstance:
    """Second-order system with uniform [-1, 1] continuous-time entries,
    zero-order-hold discretized; X the hull of 62 uniform random points,
    U the unit input box, W = {0}."""
    Ac = rng.uniform(-1.0, 1.0, (2, 2))
    Bc = rng.uniform(-1.0, 1.0, (2, 1))
    M = expm(np.block([[Ac, Bc], [np.zeros((1, 3))]]) * tau)
    sys = LTISystem(A=M[:2, :2], B=M[:2, 2:3], tau=tau)

    pts = rng.uniform(-1.0, 1.0, (62, 2))
    hull = ConvexHull(pts)
    Hx = hull.equations[:, :2]
    hx = -hull.equations[:, 2]
    F = HPolytope(
        np.block([[Hx, np.zeros((len(hx), 1))],
                  [np.zeros((2, 2)), np.array([[1.0], [-1.0]])]]),
        np.concatenate([hx, [1.0, 1.0]]))
    contains_origin = bool(np.all(hx > 0))
    return RandomPlanarInstance(sys=sys, F=F, contains_origin=contains_origin)
