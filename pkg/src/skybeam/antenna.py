"""Antenna-placement block: per-slot element coordinates on the segment.

The rate objective is replaced by a sum of fractional SINR terms handled with
one Dinkelbach step (weights set to the current SINRs), and the beam power
terms are replaced by the global quadratic bounds from :mod:`surrogates`
through signal and interference slacks.  Because the surrogate tracks the
SINR sum rather than the rate sum, every candidate layout is re-checked
against the exact rate and rejected if it does not improve it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import channel, surrogates
from .conic import ConicProgram, Solution, solve
from .scenario import AntennaLayout, Scenario

__all__ = [
    "dinkelbach_eta",
    "build_antenna_program",
    "AntennaStepContext",
    "AntennaStep",
    "solve_antenna_with_safeguard",
]

log = logging.getLogger(__name__)


def dinkelbach_eta(s: Scenario, Q, X, W) -> np.ndarray:
    """Fractional-programming weights: the current SINR of every (slot, user)."""
    snap = channel.snapshot(s, Q)
    return channel.sinr_matrix(snap, X, W)


def _psd_factor(B: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
    """Factor G with G^T G = B for PSD B; rows spanning only the range of B."""
    B = 0.5 * (B + B.T)
    vals, vecs = np.linalg.eigh(B)
    top = max(float(vals[-1]), 0.0)
    keep = vals > rel_tol * max(top, 1.0)
    if not np.any(keep):
        return np.empty((0, B.shape[0]))
    return (vecs[:, keep] * np.sqrt(vals[keep])).T


def _add_curvature_bound(prog: ConicProgram, G: np.ndarray, y, rhs) -> None:
    # ||G y||^2 <= rhs, degenerating to rhs >= 0 for a rank-zero quadratic
    if G.shape[0] == 0:
        prog.add_cone_constraint("nonneg", rhs)
    else:
        prog.add_squared_norm_le(G @ y, rhs)


def _repair_layout_row(row: np.ndarray, L: float, d_min: float) -> np.ndarray:
    """Push a near-feasible row onto the spacing/range polytope exactly.

    Solver output can sit ~1e-7 outside; the forward/backward sweep moves
    each coordinate by at most that much (feasibility of the polytope is
    guaranteed by scenario validation).
    """
    row = np.clip(np.asarray(row, dtype=float), 0.0, L)
    for m in range(1, len(row)):
        row[m] = max(row[m], row[m - 1] + d_min)
    row[-1] = min(row[-1], L)
    for m in range(len(row) - 2, -1, -1):
        row[m] = min(row[m], row[m + 1] - d_min)
    return row


def build_antenna_program(s: Scenario, W, Q, X_prev, eta: np.ndarray,
                          slots=None) -> ConicProgram:
    """Per-slot layout program with signal/interference slacks.

    Constraints: coordinate range [0, L], the ordered spacing chain
    x_{m+1} - x_m >= d_min, concave quadratic lower bounds on the signal
    slacks and convex quadratic upper bounds on the interference slacks.  The
    objective (affine in the slacks) is scaled by the typical received signal
    power for conditioning; slacks are stored in per-term normalized units,
    with the norms and the scale recorded in ``meta``.
    """
    snap = channel.snapshot(s, Q)
    w = channel.weights(W)
    xp = channel.coords(X_prev)
    eta = np.asarray(eta, dtype=float)
    slots = list(range(s.N)) if slots is None else [int(n) for n in slots]
    h2 = snap.h**2
    # conditioning: the objective is scaled by the typical received signal
    # power, and every quadratic (with its slack) is normalized by the squared
    # amplitude sum of its weight vector, its natural magnitude; weight
    # vectors of switched-off users otherwise leave constraint scales many
    # orders apart and break interior-point equilibration
    a_prev = np.exp(1j * snap.vartheta[:, :, None] * xp[:, None, :])
    sig_pow = h2 * np.abs(np.einsum("nkm,nkm->nk", a_prev.conj(), w)) ** 2
    scale = 1.0 / float(np.exp(np.mean(np.log(sig_pow + s.noise[None, :]))))
    amp2 = np.sum(np.abs(w), axis=2) ** 2  # (N, K)
    norm = np.where(amp2 > 0.0, amp2, 1.0)

    prog = ConicProgram("antenna")
    affine = 0.0
    const = 0.0
    d0 = np.empty((len(slots), s.K))
    z0 = np.empty((len(slots), s.K, max(s.K - 1, 1)))
    for i, n in enumerate(slots):
        x = prog.add_variable(f"x_n{n}", (s.M,))
        delta = prog.add_variable(f"delta_n{n}", (s.K,))  # normalized units
        prog.add_cone_constraint("nonneg", x)
        prog.add_cone_constraint("nonneg", s.L - x)
        if s.M > 1:
            prog.add_cone_constraint("nonneg", x[1:] - x[:-1] - s.d_min)
        for k in range(s.K):
            # constraints are written in coordinates centered at the previous
            # layout; the absolute-coordinate pieces of each quadratic are
            # orders larger than their sum and would drown the solver in
            # cancellation
            y = x - xp[n]
            sq = surrogates.assemble_signal_quadratic(w[n, k], snap.vartheta[n, k], xp[n])
            d0[i, k] = norm[n, k]
            v0 = sq.value(xp[n]) / d0[i, k]
            grad = (sq.A @ xp[n] + sq.b) / d0[i, k]
            G = _psd_factor(-0.5 * sq.A / d0[i, k])
            _add_curvature_bound(prog, G, y, grad @ y + v0 - delta[k])
            affine = affine + scale * h2[n, k] * d0[i, k] * delta[k]
            const -= scale * eta[n, k] * s.noise[k]
            if s.K > 1:
                zeta = prog.add_variable(f"zeta_n{n}_k{k}", (s.K - 1,))
                others = [l for l in range(s.K) if l != k]
                for j, l in enumerate(others):
                    iq = surrogates.assemble_interference_quadratic(
                        w[n, l], snap.vartheta[n, k], xp[n]
                    )
                    z0[i, k, j] = norm[n, l]
                    v0t = iq.value(xp[n]) / z0[i, k, j]
                    gradt = (iq.A @ xp[n] + iq.b) / z0[i, k, j]
                    Gt = _psd_factor(0.5 * iq.A / z0[i, k, j])
                    _add_curvature_bound(prog, Gt, y, zeta[j] - gradt @ y - v0t)
                    affine = (
                        affine
                        - scale * eta[n, k] * h2[n, k] * z0[i, k, j] * zeta[j]
                    )
    prog.set_objective(affine + const, ())
    prog.meta = {
        "slots": slots,
        "K": s.K,
        "M": s.M,
        "L": s.L,
        "objective_scale": scale,
        "eta": eta,
        "delta_norm": d0,
        "zeta_norm": z0,
    }
    return prog


@dataclass
class AntennaStepContext:
    """Everything needed to evaluate the exact rate of a candidate layout."""

    scenario: Scenario
    Q: object
    W: object


@dataclass
class AntennaStep:
    """Outcome of one safeguarded layout update."""

    X: AntennaLayout
    delta: np.ndarray | None  # (n_slots, K) signal slacks
    zeta: np.ndarray | None  # (n_slots, K, K-1) interference slacks
    eta: np.ndarray
    accepted: bool
    rate_before: float
    rate_candidate: float
    surrogate_objective: float | None  # Dinkelbach objective value (power units)
    solution: Solution | None


def solve_antenna_with_safeguard(program: ConicProgram, X_prev,
                                 context: AntennaStepContext,
                                 tol: float = 1e-8,
                                 accept_tol: float = 1e-9) -> AntennaStep:
    """Solve the layout program and accept only rate-non-decreasing updates.

    Solver failure or a candidate that lowers the exact rate keeps the
    previous layout (logged, not raised).
    """
    s = context.scenario
    xp = channel.coords(X_prev)
    eta = program.meta.get("eta")
    rate_before = channel.total_rate(s, context.Q, xp, context.W)
    sol = solve(program, tol=tol)
    if sol.status != "optimal":
        log.warning("antenna solve failed (%s); keeping previous layout", sol.status)
        return AntennaStep(
            X=AntennaLayout(xp.copy()), delta=None, zeta=None, eta=eta,
            accepted=False, rate_before=rate_before, rate_candidate=rate_before,
            surrogate_objective=None, solution=sol,
        )
    slots = program.meta["slots"]
    K, M, L = program.meta["K"], program.meta["M"], program.meta["L"]
    x_new = xp.copy()
    delta = np.empty((len(slots), K))
    zeta = np.empty((len(slots), K, K - 1)) if K > 1 else None
    for i, n in enumerate(slots):
        x_new[n] = _repair_layout_row(sol.values[f"x_n{n}"], L, s.d_min)
        delta[i] = (
            np.asarray(sol.values[f"delta_n{n}"], dtype=float)
            * program.meta["delta_norm"][i]
        )
        if K > 1:
            for k in range(K):
                zeta[i, k] = (
                    np.asarray(sol.values[f"zeta_n{n}_k{k}"], dtype=float)
                    * program.meta["zeta_norm"][i, k]
                )
    rate_candidate = channel.total_rate(s, context.Q, x_new, context.W)
    accepted = rate_candidate >= rate_before - accept_tol
    if not accepted:
        log.info(
            "antenna candidate rejected: rate %.9f -> %.9f bits",
            rate_before, rate_candidate,
        )
    return AntennaStep(
        X=AntennaLayout(x_new if accepted else xp.copy()),
        delta=delta,
        zeta=zeta,
        eta=eta,
        accepted=accepted,
        rate_before=rate_before,
        rate_candidate=rate_candidate,
        surrogate_objective=(
            None if sol.objective is None
            else sol.objective / program.meta["objective_scale"]
        ),
        solution=sol,
    )
