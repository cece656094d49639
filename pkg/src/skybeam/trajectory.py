"""Trajectory block: path update with frozen steering and convex kinematics.

Steering vectors are frozen at the previous path, making the rate a function
of the squared 3D distances alone; the first rate term is minorized by its
tangent in the distance, the second is bounded through per-(slot, user)
slacks z with exp(-z) below the linearized distance.  The minimum-speed
constraint is linearized at the previous path (the linear form implies the
true constraint), maximum speed and acceleration stay as second-order cones.
"""

from __future__ import annotations

from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from . import channel, surrogates
from .conic import ConicProgram, Solution, SolveFailedError, solve
from .scenario import Scenario, Trajectory

__all__ = [
    "DegenerateTrajectoryError",
    "TrajectoryStep",
    "build_trajectory_program",
    "solve_trajectory_program",
]

# Inactive-by-construction cap on the distance slacks: the binding value is
# -ln(d) with d in square metres, far below this.
_Z_CAP = 60.0

# Interference levels below this fraction of the noise-times-distance scale
# contribute < 1e-12 bit; their objective term is folded into a constant.
_UPSILON_REL_FLOOR = 1e-12


class DegenerateTrajectoryError(ValueError):
    """Previous path cannot anchor the minimum-speed linearization."""


@dataclass
class TrajectoryStep:
    """Candidate path and the distance slacks returned by one block solve."""

    Q: Trajectory
    Z: np.ndarray  # (N, K)


def build_trajectory_program(s: Scenario, W, X, Q_prev) -> ConicProgram:
    """Concave surrogate program in the path positions and distance slacks.

    The objective value is in bits and equals the frozen-steering rate at the
    expansion path when the slacks bind.  Raises
    :class:`DegenerateTrajectoryError` when ``Q_prev`` moves slower than the
    minimum speed somewhere it must not (the linearized constraint would be
    infeasible).
    """
    N, K = s.N, s.K
    qp = channel.positions(Q_prev)
    terms = surrogates.trajectory_surrogate(s, W, X, Q_prev)
    tau = s.tau
    dq_prev = np.diff(qp, axis=0)  # (N, 2)
    if N >= 2:
        step_prev = np.linalg.norm(dq_prev[1:], axis=1)
        short = step_prev < s.V_min * tau * (1.0 - 1e-6)
        if np.any(short):
            worst = int(np.argmin(step_prev))
            raise DegenerateTrajectoryError(
                "previous path is too slow to linearize the minimum-speed "
                f"constraint (slot {worst + 2}: {step_prev[worst] / tau:.4g} m/s "
                f"< V_min = {s.V_min:g} m/s)"
            )

    prog = ConicProgram("trajectory")
    q = prog.add_variable("q", (N + 1, 2))
    z = prog.add_variable("z", (N * K,))

    prog.add_equality(q[0], s.q0)
    if s.enforce_endpoints:
        prog.add_equality(q[N], s.qf)

    users = s.users
    d_prev = terms.d_prev

    # distance slacks: exp(-z) below the linearized squared distance, scaled
    # per entry for conditioning
    lin_exprs = []
    for n in range(N):
        for k in range(K):
            lin = d_prev[n, k] + 2.0 * (qp[n + 1] - users[k]) @ (q[n + 1] - qp[n + 1])
            lin_exprs.append(lin / d_prev[n, k])
    lin_vec = cp.hstack(lin_exprs)
    scale_log = np.log(d_prev).reshape(-1)
    prog.add_cone_constraint(
        "exp", -z - scale_log, np.ones(N * K), lin_vec
    )
    prog.add_cone_constraint("nonneg", _Z_CAP - z)

    # squared-distance epigraphs where the tangent slope is active; each is
    # normalized by the expansion distance so the slack sits near 1
    sel_t = [(n, k) for n in range(N) for k in range(K) if terms.r1_slope[n, k] > 0.0]
    affine = 0.0
    if sel_t:
        t = prog.add_variable("t", (len(sel_t),))
        for i, (n, k) in enumerate(sel_t):
            prog.add_squared_norm_le(
                (q[n + 1] - users[k]) / np.sqrt(d_prev[n, k]), t[i]
            )
        slopes = np.array([terms.r1_slope[n, k] * d_prev[n, k] for (n, k) in sel_t])
        affine = affine - slopes @ t

    # interference epigraphs t2 >= ln(Upsilon * e^z / sigma^2 + 1)
    floor = _UPSILON_REL_FLOOR * terms.sigma2[None, :] * d_prev
    sel_r2 = [(n, k) for n in range(N) for k in range(K) if terms.Upsilon[n, k] > floor[n, k]]
    if sel_r2:
        t2 = prog.add_variable("t2", (len(sel_r2),))
        u1 = prog.add_variable("u1", (len(sel_r2),))
        u2 = prog.add_variable("u2", (len(sel_r2),))
        idx = [n * K + k for (n, k) in sel_r2]
        ln_ups = np.array(
            [np.log(terms.Upsilon[n, k] / terms.sigma2[k]) for (n, k) in sel_r2]
        )
        ones = np.ones(len(sel_r2))
        prog.add_cone_constraint("exp", z[idx] + ln_ups - t2, ones, u1)
        prog.add_cone_constraint("exp", -t2, ones, u2)
        prog.add_cone_constraint("nonneg", 1.0 - u1 - u2)
        affine = affine - surrogates.LOG2E * cp.sum(t2)

    # kinematics: speed band on every slot after the first, acceleration
    # after the second
    for i in range(2, N + 1):
        prog.add_cone_constraint("soc", s.V_max * tau, q[i] - q[i - 1])
        step = dq_prev[i - 1]
        prog.add_cone_constraint(
            "nonneg",
            2.0 * step @ (q[i] - q[i - 1]) - float(step @ step) - (s.V_min * tau) ** 2,
        )
    for i in range(3, N + 1):
        prog.add_cone_constraint(
            "soc", s.a_max * tau * tau, q[i] - 2.0 * q[i - 1] + q[i - 2]
        )

    const = float(
        np.sum(terms.r1_const - terms.r1_slope * (s.H**2 - d_prev))
        - N * np.sum(np.log2(terms.sigma2))
    )
    prog.set_objective(affine + const, ())
    prog.meta = {
        "N": N,
        "K": K,
        "tau": tau,
        "q_init": s.q0,
        "q_final": s.qf,
        "enforce_endpoints": s.enforce_endpoints,
    }
    return prog


def solve_trajectory_program(program: ConicProgram,
                             tol: float = 1e-8) -> tuple[TrajectoryStep, Solution]:
    """Solve the path program; snaps the endpoint equalities exactly."""
    sol = solve(program, tol=tol)
    if sol.status != "optimal":
        raise SolveFailedError(
            f"trajectory solve failed: {sol.status} ({sol.message})", sol
        )
    meta = program.meta
    q = np.array(sol.values["q"], dtype=float)
    q[0] = meta["q_init"]
    if meta["enforce_endpoints"]:
        q[-1] = meta["q_final"]
    Z = np.array(sol.values["z"], dtype=float).reshape(meta["N"], meta["K"])
    return TrajectoryStep(Q=Trajectory(q=q, tau=meta["tau"]), Z=Z), sol
