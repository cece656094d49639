"""Alternating optimizer: beamforming, then path, then layout, per iteration.

Each block maximizes a surrogate that is tight at the current iterate and
bounds the exact objective, so the exact sum rate cannot decrease; every
candidate is additionally re-evaluated on the exact rate and rejected if it
would (surrogate tightness does not survive rank-one extraction or thawed
steering, so the check is cheap insurance that keeps the recorded objective
trace monotone).  An iteration whose gain falls to the stop threshold first
tries a few uniform-spacing layout probes with refreshed beams (block ascent
otherwise parks on ridges where no single block can move); the loop stops
when neither the blocks nor the probes gain more than the threshold, or at
the iteration cap.  The outer loop is sequential; distinct scenarios can be
optimized concurrently.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from . import antenna as antenna_block
from . import beamforming as beamforming_block
from . import channel
from . import trajectory as trajectory_block
from .conic import SolveFailedError
from .scenario import (
    AntennaLayout,
    BeamformerSet,
    Scenario,
    ScenarioError,
    Trajectory,
    audit,
    validate,
)

__all__ = [
    "AoOptions",
    "BlockOutcome",
    "IterationRecord",
    "AoTrace",
    "AoResult",
    "initialize",
    "initial_layout",
    "optimize",
    "trace_table",
    "trajectory_table",
    "layout_table",
    "solution_bundle",
    "parse_solution_bundle",
]

log = logging.getLogger(__name__)

BLOCKS = ("beamforming", "trajectory", "antenna")


@dataclass
class AoOptions:
    epsilon_star: float = 1e-3  # stop when one full iteration gains <= this (bits)
    i_max: int = 30
    fpa_mode: bool = False  # freeze the layout at the uniform baseline
    seed: int = 0
    solver_tol: float = 1e-8
    accept_tol: float = 1e-9
    block_order: tuple[str, ...] = BLOCKS
    keep_iterates: bool = True
    run_audit: bool = True
    stall_probes: int = 6  # uniform-spacing layouts tried before stopping

    def __post_init__(self):
        if self.epsilon_star <= 0:
            raise ValueError("epsilon_star must be positive")
        if self.i_max < 1:
            raise ValueError("i_max must be at least 1")
        unknown = set(self.block_order) - set(BLOCKS)
        if unknown:
            raise ValueError(f"unknown blocks in block_order: {sorted(unknown)}")


@dataclass
class BlockOutcome:
    status: str  # solver status, "skipped", or "error"
    accepted: bool
    delta: float  # applied objective change (bits)
    candidate_delta: float  # objective change the candidate would have applied
    message: str = ""


@dataclass
class IterationRecord:
    index: int
    objective: float  # exact total rate after this iteration (bits)
    gain: float  # objective - previous objective
    blocks: dict[str, BlockOutcome]
    wall_time: float
    inexact_extractions: int = 0
    fallback_draws: int = 0
    audit_violations: list[str] = field(default_factory=list)


@dataclass
class AoTrace:
    initial_objective: float
    records: list[IterationRecord] = field(default_factory=list)
    terminal_reason: str = ""
    iterates: list[tuple[BeamformerSet, Trajectory, AntennaLayout]] = field(
        default_factory=list
    )

    @property
    def objectives(self) -> list[float]:
        return [r.objective for r in self.records]


@dataclass
class AoResult:
    scenario: Scenario
    W: BeamformerSet
    Q: Trajectory
    X: AntennaLayout
    objective: float
    trace: AoTrace


# ---------------------------------------------------------------------------
# initialization


def initial_layout(s: Scenario) -> AntennaLayout:
    """Uniform half-wavelength grid from the segment origin (the fixed-array
    baseline); falls back to d_min spacing when half-wavelength is infeasible."""
    spacing = s.wavelength / 2.0
    if spacing < s.d_min or (s.M - 1) * spacing > s.L:
        spacing = s.d_min
    row = np.arange(s.M) * spacing
    return AntennaLayout(np.tile(row, (s.N, 1)))


def _arc_positions(q0: np.ndarray, qf: np.ndarray, n_seg: int, chord: float) -> np.ndarray:
    """Vertices of an equal-chord circular arc from q0 to qf (n_seg chords).

    Used when the straight line would be slower than the minimum speed; the
    arc stretches the path so every slot advances exactly ``chord`` metres.
    """
    span = float(np.linalg.norm(qf - q0))

    def endpoint_gap(radius: float) -> float:
        return 2.0 * radius * np.sin(n_seg * np.arcsin(chord / (2.0 * radius))) - span

    r_lo = chord / (2.0 * np.sin(np.pi / n_seg)) if n_seg >= 2 else chord / 2.0
    r_hi = max(1e6, 1e3 * n_seg * chord)
    if span <= 1e-9 * chord:  # closed loop: the full circle fits exactly
        radius = r_lo
    elif endpoint_gap(r_hi) < 0.0:  # numerically straight already
        radius = r_hi
    else:
        radius = brentq(endpoint_gap, r_lo * (1.0 + 1e-12), r_hi, xtol=1e-12)
    half_step = np.arcsin(chord / (2.0 * radius))
    angles = (2.0 * np.arange(n_seg + 1) - n_seg) * half_step
    local = radius * np.column_stack([np.sin(angles), -np.cos(angles)])
    local -= local[0]
    if span > 0.0:
        u = (qf - q0) / span
    else:
        u = np.array([1.0, 0.0])
    rot = np.column_stack([u, np.array([-u[1], u[0]])])
    return q0 + local @ rot.T


def _initial_trajectory(s: Scenario) -> Trajectory:
    q0, qf = s.q0, s.qf
    span = float(np.linalg.norm(qf - q0))
    straight_speed = span / s.T
    if straight_speed >= s.V_min * (1.0 - 1e-12) or s.N == 1:
        steps = np.linspace(0.0, 1.0, s.N + 1)[:, None]
        q = q0[None, :] + steps * (qf - q0)[None, :]
    else:
        q = _arc_positions(q0, qf, s.N, s.V_min * s.tau)
    return Trajectory(q=q, tau=s.tau)


def initialize(s: Scenario) -> tuple[BeamformerSet, Trajectory, AntennaLayout]:
    """Feasible starting point: straight/arc path, uniform layout, equal-power
    matched beams toward each user."""
    Q0 = _initial_trajectory(s)
    X0 = initial_layout(s)
    snap = channel.snapshot(s, Q0)
    a = np.exp(1j * snap.vartheta[:, :, None] * X0.x[:, None, :])  # (N, K, M)
    norms = np.linalg.norm(a, axis=2, keepdims=True)
    w = np.sqrt(s.P_max / s.K) * a / norms
    return BeamformerSet(w), Q0, X0


# ---------------------------------------------------------------------------
# main loop


def _beamforming_passes(s: Scenario, X: AntennaLayout, Q: Trajectory,
                        W0: BeamformerSet, snap, passes: int, tol: float):
    w = W0
    for _ in range(passes):
        prog = beamforming_block.build_beamforming_program(s, X, Q, w)
        mats, _ = beamforming_block.solve_beamforming_program(prog, tol=tol)
        vecs, _ = beamforming_block.extract_beamformers(
            mats, s, snap, X, rng=np.random.default_rng(0)
        )
        w = BeamformerSet(vecs)
    return w


def _stall_probe(s: Scenario, W: BeamformerSet, Q: Trajectory, objective: float,
                 count: int, tol: float):
    """Try uniform-spacing layouts with refreshed beams before giving up.

    Block-coordinate ascent can park on a ridge where neither the layout nor
    the beams improve alone although moving both would (the layout landscape
    under fixed beams peaks exactly at the current point).  Re-solving the
    beamforming block at a few structured layouts is a cheap joint move; each
    probe is scored from both the incumbent beams and a fresh matched-beam
    restart, and adopted only when its exact rate strictly beats the
    incumbent, so the objective trace stays monotone.
    """
    if s.M < 2 or count < 1:
        return None
    best = None
    snap = channel.snapshot(s, Q)
    for spacing in np.linspace(s.d_min, s.L / (s.M - 1), count):
        x_probe = AntennaLayout(np.tile(np.arange(s.M) * spacing, (s.N, 1)))
        a = np.exp(1j * snap.vartheta[:, :, None] * x_probe.x[:, None, :])
        matched = BeamformerSet(
            np.sqrt(s.P_max / s.K) * a / np.linalg.norm(a, axis=2, keepdims=True)
        )
        for w0, passes in ((W, 1), (matched, 2)):
            try:
                w_probe = _beamforming_passes(s, x_probe, Q, w0, snap, passes, tol)
            except SolveFailedError:
                continue
            rate = channel.total_rate(s, Q, x_probe, w_probe)
            if rate > objective and (best is None or rate > best[0]):
                best = (rate, x_probe, w_probe)
    return best


def optimize(s: Scenario, options: AoOptions | None = None, **overrides) -> AoResult:
    """Run the alternating optimization on a validated scenario."""
    if options is None:
        options = AoOptions(**overrides)
    elif overrides:
        options = replace(options, **overrides)
    violations = validate(s)
    if violations:
        raise ScenarioError(
            "invalid scenario:\n" + "\n".join(f"  - {v}" for v in violations)
        )
    rng = np.random.default_rng(options.seed)
    W, Q, X = initialize(s)
    X0 = AntennaLayout(X.x.copy())
    objective = channel.total_rate(s, Q, X, W)
    trace = AoTrace(initial_objective=objective)
    consecutive_failed = 0

    for i in range(1, options.i_max + 1):
        t_start = time.perf_counter()
        outcomes: dict[str, BlockOutcome] = {}
        inexact = 0
        fallback = 0
        solver_failures = 0
        executed = 0

        for block in options.block_order:
            if block == "antenna" and options.fpa_mode:
                outcomes[block] = BlockOutcome("skipped", False, 0.0, 0.0,
                                               "layout frozen at baseline")
                continue
            executed += 1
            try:
                if block == "beamforming":
                    prog = beamforming_block.build_beamforming_program(s, X, Q, W)
                    mats, sol = beamforming_block.solve_beamforming_program(
                        prog, tol=options.solver_tol
                    )
                    snap = channel.snapshot(s, Q)
                    w_new, stats = beamforming_block.extract_beamformers(
                        mats, s, snap, X, rng=rng
                    )
                    inexact += len(stats.inexact)
                    fallback += stats.fallback_used
                    candidate_rate = channel.total_rate(s, Q, X, w_new)
                    accepted = candidate_rate >= objective - options.accept_tol
                    if accepted:
                        W = BeamformerSet(w_new)
                    outcomes[block] = BlockOutcome(
                        sol.status, accepted,
                        (candidate_rate - objective) if accepted else 0.0,
                        candidate_rate - objective,
                    )
                    if accepted:
                        objective = candidate_rate
                elif block == "trajectory":
                    prog = trajectory_block.build_trajectory_program(s, W, X, Q)
                    step, sol = trajectory_block.solve_trajectory_program(
                        prog, tol=options.solver_tol
                    )
                    # The frozen-steering surrogate is only trustworthy near
                    # the expansion path, so damp the step: walk the segment
                    # toward the candidate (every point on it is feasible,
                    # the constraint set is convex in the positions) and keep
                    # the exact-rate maximizer; keep the old path when
                    # nothing on the segment improves it.
                    candidate_delta = channel.total_rate(s, step.Q, X, W) - objective
                    best_rate, best_q = objective, None
                    alpha = 1.0
                    for _ in range(7):
                        q_try = Q.q + alpha * (step.Q.q - Q.q)
                        r = channel.total_rate(s, q_try, X, W)
                        if r > best_rate:
                            best_rate, best_q = r, q_try
                        alpha *= 0.5
                    accepted = best_q is not None
                    if accepted:
                        Q = Trajectory(q=best_q, tau=s.tau)
                    outcomes[block] = BlockOutcome(
                        sol.status, accepted,
                        (best_rate - objective) if accepted else 0.0,
                        candidate_delta,
                    )
                    if accepted:
                        objective = best_rate
                else:  # antenna
                    eta = antenna_block.dinkelbach_eta(s, Q, X, W)
                    prog = antenna_block.build_antenna_program(s, W, Q, X, eta)
                    step = antenna_block.solve_antenna_with_safeguard(
                        prog, X, antenna_block.AntennaStepContext(s, Q, W),
                        tol=options.solver_tol, accept_tol=options.accept_tol,
                    )
                    status = step.solution.status if step.solution else "error"
                    if status != "optimal":
                        solver_failures += 1
                    if step.accepted:
                        X = step.X
                        objective = step.rate_candidate
                    outcomes[block] = BlockOutcome(
                        status, step.accepted,
                        (step.rate_candidate - step.rate_before) if step.accepted else 0.0,
                        step.rate_candidate - step.rate_before,
                    )
            except (SolveFailedError, trajectory_block.DegenerateTrajectoryError) as exc:
                solver_failures += 1
                outcomes[block] = BlockOutcome("error", False, 0.0, 0.0, str(exc))
                log.warning("%s block failed at iteration %d: %s", block, i, exc)

        prev = trace.records[-1].objective if trace.records else trace.initial_objective
        if (objective - prev <= options.epsilon_star and not options.fpa_mode
                and "antenna" in options.block_order and solver_failures == 0):
            probe = _stall_probe(s, W, Q, objective, options.stall_probes,
                                 options.solver_tol)
            if probe is not None:
                rate, X, W = probe
                outcomes["probe"] = BlockOutcome(
                    "optimal", True, rate - objective, rate - objective,
                    "stall-escape layout probe",
                )
                objective = rate
        record = IterationRecord(
            index=i,
            objective=objective,
            gain=objective - prev,
            blocks=outcomes,
            wall_time=time.perf_counter() - t_start,
            inexact_extractions=inexact,
            fallback_draws=fallback,
        )
        if options.run_audit:
            record.audit_violations = audit(s, Q, X, W)
            if record.audit_violations:
                log.warning("iteration %d failed the feasibility audit: %s",
                            i, record.audit_violations)
        trace.records.append(record)
        if options.keep_iterates:
            trace.iterates.append(
                (BeamformerSet(W.w.copy()), Trajectory(Q.q.copy(), Q.tau),
                 AntennaLayout(X.x.copy()))
            )

        if solver_failures >= executed and executed > 0:
            consecutive_failed += 1
            if consecutive_failed >= 3:
                trace.terminal_reason = "failure"
                break
        else:
            consecutive_failed = 0
        if record.gain <= options.epsilon_star:
            trace.terminal_reason = "epsilon"
            break
    if not trace.terminal_reason:
        trace.terminal_reason = "max_iter"

    if options.fpa_mode and not np.array_equal(X.x, X0.x):
        raise AssertionError("layout moved in fixed-array mode")
    return AoResult(scenario=s, W=W, Q=Q, X=X, objective=objective, trace=trace)


# ---------------------------------------------------------------------------
# text exports (all consumed by the CLI; every table declares its columns)


def trace_table(trace: AoTrace) -> str:
    lines = [
        "# columns: iteration objective_bits gain_bits "
        + " ".join(f"accept_{b} status_{b}" for b in BLOCKS),
        f"# terminal_reason: {trace.terminal_reason}",
        f"# initial_objective_bits: {trace.initial_objective:.12g}",
    ]
    for r in trace.records:
        cells = [str(r.index), f"{r.objective:.12g}", f"{r.gain:.12g}"]
        for b in BLOCKS:
            out = r.blocks.get(b)
            if out is None:
                cells += ["-", "absent"]
            else:
                cells += ["1" if out.accepted else "0", out.status]
        lines.append(" ".join(cells))
    return "\n".join(lines) + "\n"


def trajectory_table(Q: Trajectory) -> str:
    lines = ["# columns: n q_x q_y v_x v_y speed"]
    v = Q.v
    sp = Q.speeds
    for n in range(Q.N + 1):
        if n == 0:
            lines.append(f"0 {Q.q[0, 0]:.12g} {Q.q[0, 1]:.12g} nan nan nan")
        else:
            lines.append(
                f"{n} {Q.q[n, 0]:.12g} {Q.q[n, 1]:.12g} "
                f"{v[n - 1, 0]:.12g} {v[n - 1, 1]:.12g} {sp[n - 1]:.12g}"
            )
    return "\n".join(lines) + "\n"


def layout_table(X: AntennaLayout) -> str:
    lines = ["# columns: n " + " ".join(f"x_{m + 1}" for m in range(X.M))]
    for n in range(X.N):
        lines.append(f"{n + 1} " + " ".join(f"{v:.12g}" for v in X.x[n]))
    return "\n".join(lines) + "\n"


def solution_bundle(result: AoResult) -> str:
    """Single structured text document with the full solution."""
    s = result.scenario
    lines = [
        "[summary]",
        f"scenario = {s.name}",
        f"objective_bits = {result.objective:.12g}",
        f"slots = {s.N}",
        f"users = {s.K}",
        f"elements = {s.M}",
        "",
        "[trajectory]",
        "# columns: n q_x q_y",
    ]
    for n in range(result.Q.N + 1):
        lines.append(f"{n} {float(result.Q.q[n, 0])!r} {float(result.Q.q[n, 1])!r}")
    lines += ["", "[layout]", "# columns: n x_1..x_M"]
    for n in range(result.X.N):
        lines.append(f"{n + 1} " + " ".join(repr(float(v)) for v in result.X.x[n]))
    lines += ["", "[beamformers]", "# columns: n k re_1 im_1 .. re_M im_M"]
    for n in range(s.N):
        for k in range(s.K):
            parts = []
            for m in range(s.M):
                parts += [repr(float(result.W.w[n, k, m].real)),
                          repr(float(result.W.w[n, k, m].imag))]
            lines.append(f"{n + 1} {k + 1} " + " ".join(parts))
    return "\n".join(lines) + "\n"


def parse_solution_bundle(text: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read back (weights (N,K,M), positions (N+1,2), layout (N,M)) from a bundle."""
    section = None
    q_rows: dict[int, list[float]] = {}
    x_rows: dict[int, list[float]] = {}
    w_rows: dict[tuple[int, int], list[float]] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            section = line.strip("[]")
            continue
        if section == "trajectory":
            parts = line.split()
            q_rows[int(parts[0])] = [float(parts[1]), float(parts[2])]
        elif section == "layout":
            parts = line.split()
            x_rows[int(parts[0])] = [float(v) for v in parts[1:]]
        elif section == "beamformers":
            parts = line.split()
            w_rows[(int(parts[0]), int(parts[1]))] = [float(v) for v in parts[2:]]
    q = np.array([q_rows[n] for n in sorted(q_rows)])
    x = np.array([x_rows[n] for n in sorted(x_rows)])
    n_slots = max(n for (n, _k) in w_rows)
    n_users = max(k for (_n, k) in w_rows)
    m = len(next(iter(w_rows.values()))) // 2
    w = np.zeros((n_slots, n_users, m), dtype=complex)
    for (n, k), vals in w_rows.items():
        re = np.array(vals[0::2])
        im = np.array(vals[1::2])
        w[n - 1, k - 1] = re + 1j * im
    return w, q, x
