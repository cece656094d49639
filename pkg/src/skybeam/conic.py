"""Solver-agnostic convex-program container shared by the three blocks.

A :class:`ConicProgram` collects declared variables, affine expressions, cone
memberships (nonnegative, second-order, exponential, PSD) and linear
equalities, plus an objective of the form affine + sum of weighted natural
logs of affine arguments.  Programs are convex by construction: only these
cones are expressible and every expression is checked for affinity.

Lowering and numerics are delegated to cvxpy; :func:`solve` prefers the
Clarabel interior-point backend and falls back to SCS.  Hermitian matrix
variables are lowered to real symmetric PSD form through the standard real
embedding inside the backend; :func:`hermitian_real_embedding` exposes the
same map for verification.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import cvxpy as cp
import numpy as np

__all__ = [
    "DEFAULT_TOL",
    "ConicProgram",
    "ConicProgramError",
    "SolveFailedError",
    "Solution",
    "solve",
    "dump",
    "hermitian_real_embedding",
]

DEFAULT_TOL = 1e-8

CONE_KINDS = ("nonneg", "soc", "exp", "psd")


class ConicProgramError(ValueError):
    """Malformed program construction (dimensions, duplicates, curvature)."""


class SolveFailedError(RuntimeError):
    """A block solve did not return an optimal point.

    Carries the offending :class:`Solution` for diagnostics.
    """

    def __init__(self, message: str, solution: "Solution | None" = None):
        super().__init__(message)
        self.solution = solution


@dataclass
class Solution:
    """Result of one solve: status, primal values by variable name, residuals."""

    status: str  # "optimal" | "infeasible" | "numerical-failure"
    values: dict
    objective: float | None
    residual: float | None
    solver: str
    solve_time: float
    message: str = ""


def _as_expr(x) -> cp.Expression:
    return x if isinstance(x, cp.Expression) else cp.Constant(x)


def _require_affine(expr: cp.Expression, what: str) -> cp.Expression:
    expr = _as_expr(expr)
    if not expr.is_affine():
        raise ConicProgramError(f"{what} must be affine in the declared variables")
    return expr


class ConicProgram:
    """Append-only builder for one convex conic program.

    Construction is add-variable / add-constraint / set-objective; setting the
    objective seals the program, after which it is an immutable value that can
    be solved any number of times (solving never mutates it).
    """

    def __init__(self, name: str = "program"):
        self.name = name
        self._vars: dict[str, cp.Variable] = {}
        self._hermitian: set[str] = set()
        self._constraints: list = []
        self._kinds: list[str] = []
        self._objective: cp.Expression | None = None
        self.meta: dict = {}

    # -- construction ------------------------------------------------------

    def _check_open(self):
        if self._objective is not None:
            raise ConicProgramError("program is sealed (objective already set)")

    def add_variable(self, name: str, shape=(), hermitian: bool = False):
        self._check_open()
        if name in self._vars:
            raise ConicProgramError(f"duplicate variable name {name!r}")
        if hermitian:
            if len(shape) != 2 or shape[0] != shape[1]:
                raise ConicProgramError(
                    f"hermitian variable {name!r} needs a square shape, got {shape}"
                )
            var = cp.Variable(shape, name=name, hermitian=True)
            self._hermitian.add(name)
        else:
            var = cp.Variable(shape, name=name)
        self._vars[name] = var
        return var

    def add_cone_constraint(self, kind: str, *args):
        """Add a cone membership over affine expressions.

        nonneg(e): e >= 0 elementwise; soc(t, x): ||x||_2 <= t;
        exp(x, y, z): y * exp(x / y) <= z elementwise; psd(E): E >> 0.
        """
        self._check_open()
        if kind not in CONE_KINDS:
            raise ConicProgramError(f"unknown cone kind {kind!r}")
        if kind == "nonneg":
            (expr,) = args
            self._constraints.append(_require_affine(expr, "nonneg argument") >= 0)
        elif kind == "soc":
            t, x = args
            t = _require_affine(t, "soc bound")
            x = _require_affine(x, "soc vector")
            if t.shape not in ((), (1,)):
                raise ConicProgramError("soc bound must be a scalar expression")
            self._constraints.append(cp.SOC(t, cp.vec(x, order="C")))
        elif kind == "exp":
            x, y, z = (_require_affine(a, "exp-cone argument") for a in args)
            if not (x.shape == y.shape == z.shape):
                raise ConicProgramError("exp-cone arguments must share one shape")
            self._constraints.append(cp.constraints.ExpCone(x, y, z))
        else:  # psd
            (expr,) = args
            expr = _require_affine(expr, "psd argument")
            if len(expr.shape) != 2 or expr.shape[0] != expr.shape[1]:
                raise ConicProgramError("psd argument must be a square matrix")
            self._constraints.append(expr >> 0)
        self._kinds.append(kind)

    def add_equality(self, lhs, rhs=0.0):
        self._check_open()
        lhs = _require_affine(lhs, "equality left side")
        rhs = _require_affine(rhs, "equality right side")
        self._constraints.append(lhs == rhs)
        self._kinds.append("zero")

    def add_squared_norm_le(self, vec, bound):
        """||vec||^2 <= bound, lowered to one second-order cone membership."""
        bound = _require_affine(bound, "squared-norm bound")
        vec = _require_affine(vec, "squared-norm vector")
        if int(np.prod(vec.shape)) == 0:
            self.add_cone_constraint("nonneg", bound)
            return
        stacked = cp.hstack([2.0 * cp.vec(vec, order="C"), cp.reshape(bound - 1.0, (1,), order="C")])
        self.add_cone_constraint("soc", bound + 1.0, stacked)

    def set_objective(self, affine=0.0, log_terms=()):
        """Maximize affine + sum(weight * log(arg)); seals the program.

        Log weights must be positive and arguments scalar affine, keeping the
        objective concave; logs lower to exponential cones in the backend.
        """
        self._check_open()
        obj = _require_affine(affine, "objective affine part")
        for weight, arg in log_terms:
            if not weight > 0:
                raise ConicProgramError("log-term weights must be positive")
            arg = _require_affine(arg, "log-term argument")
            if arg.shape not in ((), (1,)):
                raise ConicProgramError("log-term arguments must be scalar")
            obj = obj + weight * cp.log(arg)
        self._objective = obj

    # -- inspection ----------------------------------------------------------

    @property
    def variable_names(self) -> list[str]:
        return list(self._vars)

    @property
    def sealed(self) -> bool:
        return self._objective is not None

    def variable(self, name: str):
        return self._vars[name]


def _status_of(problem: cp.Problem) -> str:
    st = problem.status
    if st == cp.OPTIMAL:
        return "optimal"
    if st in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return "infeasible"
    return "numerical-failure"


_SOLVER_OPTIONS = {
    "CLARABEL": lambda tol: {
        "tol_gap_abs": tol,
        "tol_gap_rel": tol,
        "tol_feas": tol,
        # a stalled run only counts as almost-solved within these
        "reduced_tol_gap_abs": 1e3 * tol,
        "reduced_tol_gap_rel": 1e3 * tol,
        "reduced_tol_feas": 1e3 * tol,
    },
    # first-order fallback: capped effort, still far tighter than the
    # acceptance tolerances
    "SCS": lambda tol: {
        "eps_abs": max(tol, 1e-7),
        "eps_rel": max(tol, 1e-7),
        "max_iters": 50_000,
    },
}


def solve(program: ConicProgram, tol: float = DEFAULT_TOL,
          solver: str | None = None) -> Solution:
    """Solve a sealed program to tolerance ``tol``.

    Deterministic for identical inputs and backend version.  Infeasibility is
    reported in the status, not raised; genuine backend breakdowns fall
    through to the next solver in the preference order.
    """
    if not program.sealed:
        raise ConicProgramError("cannot solve: objective not set")
    problem = cp.Problem(cp.Maximize(program._objective), program._constraints)
    order = [solver] if solver is not None else ["CLARABEL", "SCS"]
    last_message = ""
    best: Solution | None = None
    for name in order:
        opts = _SOLVER_OPTIONS.get(name, lambda _t: {})(tol)
        start = time.perf_counter()
        try:
            with warnings.catch_warnings():
                # inaccurate-solution warnings are redundant with the status
                # handling below
                warnings.simplefilter("ignore", UserWarning)
                problem.solve(solver=name, verbose=False, **opts)
        except (cp.error.SolverError, ValueError, ArithmeticError) as exc:
            last_message = f"{name}: {exc}"
            continue
        elapsed = time.perf_counter() - start
        status = _status_of(problem)
        message = ""
        values = {}
        for vname, var in program._vars.items():
            val = var.value
            if val is not None and vname in program._hermitian:
                val = 0.5 * (val + val.conj().T)
            values[vname] = val
        residual = None
        if status == "optimal" or problem.status == cp.OPTIMAL_INACCURATE:
            try:
                residual = max(
                    (float(np.max(c.violation())) for c in problem.constraints),
                    default=0.0,
                )
            except Exception:
                residual = None
        if problem.status == cp.OPTIMAL_INACCURATE and residual is not None:
            # interior-point stall a hair above the target: accept when the
            # measured residual is still within an order of the tolerance
            if residual <= 10.0 * tol:
                status = "optimal"
                message = f"{name} stalled near tolerance (residual {residual:.2e})"
        value = problem.value
        if value is not None and not np.isfinite(value):
            value = None
        sol = Solution(
            status=status,
            values=values,
            objective=None if value is None else float(value),
            residual=residual,
            solver=name,
            solve_time=elapsed,
            message=message if status == "optimal" else f"{name} status: {problem.status}",
        )
        if status == "optimal":
            return sol
        if best is None or (best.status == "numerical-failure" and status == "infeasible"):
            best = sol
    if best is not None:
        return best
    return Solution(
        status="numerical-failure",
        values={},
        objective=None,
        residual=None,
        solver="none",
        solve_time=0.0,
        message=last_message or "no solver available",
    )


def dump(program: ConicProgram) -> str:
    """Readable text form of a program for external cross-checking."""
    lines = [f"program {program.name}", "variables:"]
    for name, var in program._vars.items():
        tag = " hermitian" if name in program._hermitian else ""
        lines.append(f"  {name} shape={tuple(var.shape)}{tag}")
    lines.append("constraints:")
    for kind, con in zip(program._kinds, program._constraints):
        lines.append(f"  {kind}: {con}")
    lines.append(f"objective: maximize {program._objective}")
    return "\n".join(lines)


def hermitian_real_embedding(mat: np.ndarray) -> np.ndarray:
    """Standard real embedding [[Re, -Im], [Im, Re]] of a Hermitian matrix.

    The embedding is symmetric, PSD iff the input is, and satisfies
    tr(embed(A) @ embed(B)) = 2 * Re tr(A @ B).
    """
    mat = np.asarray(mat, dtype=complex)
    return np.block([[mat.real, -mat.imag], [mat.imag, mat.real]])
