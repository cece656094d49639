import math

import cvxpy as cp
import numpy as np
import pytest

from skybeam.conic import (
    ConicProgram,
    ConicProgramError,
    dump,
    hermitian_real_embedding,
    solve,
)


def test_scalar_box_program():
    prog = ConicProgram("box")
    x = prog.add_variable("x")
    prog.add_cone_constraint("nonneg", 1.0 - x)
    prog.add_cone_constraint("nonneg", x)
    prog.set_objective(x)
    sol = solve(prog)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(1.0, abs=1e-7)
    assert sol.values["x"] == pytest.approx(1.0, abs=1e-7)
    assert sol.residual is not None and sol.residual <= 1e-7


def test_second_order_cone_geometry():
    prog = ConicProgram("soc")
    t = prog.add_variable("t")
    prog.add_cone_constraint("soc", t, np.array([1.0, 1.0]))
    prog.set_objective(-t)
    sol = solve(prog)
    assert sol.status == "optimal"
    assert -sol.objective == pytest.approx(math.sqrt(2.0), rel=1e-7)


def test_log_atom_lowered_to_exponential_cone():
    prog = ConicProgram("log")
    x = prog.add_variable("x")
    prog.add_cone_constraint("nonneg", math.e - x)
    prog.set_objective(0.0, log_terms=[(1.0, x)])
    sol = solve(prog)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(1.0, abs=1e-7)


def test_exponential_cone_membership():
    prog = ConicProgram("exp")
    x = prog.add_variable("x")
    prog.add_cone_constraint("exp", x, 1.0, math.e)
    prog.set_objective(x)
    sol = solve(prog)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(1.0, abs=1e-6)


def test_psd_trace_cap_reaches_largest_eigenvalue():
    c = np.array([[2.0, 1.0], [1.0, 3.0]])
    prog = ConicProgram("psd")
    W = prog.add_variable("W", (2, 2), hermitian=True)
    prog.add_cone_constraint("psd", W)
    prog.add_cone_constraint("nonneg", 1.0 - cp.real(cp.trace(W)))
    prog.set_objective(cp.real(cp.trace(c @ W)))
    sol = solve(prog)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(np.linalg.eigvalsh(c)[-1], rel=1e-6)
    eigs = np.linalg.eigvalsh(sol.values["W"])
    assert eigs[0] >= -1e-7
    assert eigs[0] / eigs[-1] <= 1e-6  # rank one


def test_complex_hermitian_variable_objective():
    rng = np.random.default_rng(0)
    g = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    c = 0.5 * (g + g.conj().T)
    prog = ConicProgram("herm")
    W = prog.add_variable("W", (3, 3), hermitian=True)
    prog.add_cone_constraint("psd", W)
    prog.add_cone_constraint("nonneg", 1.0 - cp.real(cp.trace(W)))
    prog.set_objective(cp.real(cp.trace(c @ W)))
    sol = solve(prog)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(np.linalg.eigvalsh(c)[-1], rel=1e-6)
    got = sol.values["W"]
    assert np.allclose(got, got.conj().T)


def test_squared_norm_epigraph():
    prog = ConicProgram("sqnorm")
    v = prog.add_variable("v", (2,))
    b = prog.add_variable("b")
    prog.add_equality(v, np.array([1.0, 2.0]))
    prog.add_squared_norm_le(v, b)
    prog.set_objective(-b)
    sol = solve(prog)
    assert sol.status == "optimal"
    assert -sol.objective == pytest.approx(5.0, rel=1e-7)


def test_infeasible_program_reports_status():
    prog = ConicProgram("bad")
    x = prog.add_variable("x")
    prog.add_cone_constraint("nonneg", x - 1.0)
    prog.add_cone_constraint("nonneg", -x)
    prog.set_objective(x)
    sol = solve(prog)
    assert sol.status == "infeasible"
    assert sol.objective is None


def test_construction_errors():
    prog = ConicProgram()
    x = prog.add_variable("x")
    with pytest.raises(ConicProgramError, match="duplicate"):
        prog.add_variable("x")
    with pytest.raises(ConicProgramError, match="unknown cone"):
        prog.add_cone_constraint("octagon", x)
    with pytest.raises(ConicProgramError, match="affine"):
        prog.add_cone_constraint("nonneg", cp.square(x))
    with pytest.raises(ConicProgramError, match="scalar"):
        v = prog.add_variable("v", (3,))
        prog.add_cone_constraint("soc", v, v)
    with pytest.raises(ConicProgramError, match="square"):
        prog.add_variable("H", (2, 3), hermitian=True)
    with pytest.raises(ConicProgramError, match="positive"):
        prog.set_objective(x, log_terms=[(-1.0, x)])
    prog.set_objective(x, log_terms=[(2.0, x)])
    with pytest.raises(ConicProgramError, match="sealed"):
        prog.add_variable("y")


def test_solve_requires_objective():
    prog = ConicProgram()
    prog.add_variable("x")
    with pytest.raises(ConicProgramError, match="objective"):
        solve(prog)


def test_solver_determinism():
    def build():
        prog = ConicProgram()
        x = prog.add_variable("x", (3,))
        prog.add_cone_constraint("soc", 2.0, x - np.array([1.0, 0.5, -0.25]))
        prog.set_objective(np.array([1.0, -2.0, 0.5]) @ x)
        return prog

    a = solve(build())
    b = solve(build())
    assert a.status == b.status == "optimal"
    assert a.objective == b.objective  # bitwise stable


def test_real_embedding_identities():
    rng = np.random.default_rng(1)
    for _ in range(25):
        m = int(rng.integers(1, 6))
        ga = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
        gb = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
        a = 0.5 * (ga + ga.conj().T)
        b = gb @ gb.conj().T  # PSD
        ea, eb = hermitian_real_embedding(a), hermitian_real_embedding(b)
        assert np.allclose(ea, ea.T)
        got = 0.5 * np.trace(ea @ eb)
        want = np.trace(a @ b).real
        assert got == pytest.approx(want, rel=1e-10, abs=1e-10)
        assert np.linalg.eigvalsh(eb)[0] >= -1e-10 * max(np.abs(b).max(), 1.0)
        # eigenvalues appear doubled
        assert np.allclose(
            np.linalg.eigvalsh(ea), np.repeat(np.sort(np.linalg.eigvalsh(a)), 2),
            atol=1e-9,
        )


def test_dump_lists_variables_and_kinds():
    prog = ConicProgram("demo")
    prog.add_variable("alpha")
    W = prog.add_variable("W", (2, 2), hermitian=True)
    prog.add_cone_constraint("psd", W)
    prog.set_objective(cp.real(cp.trace(W)))
    text = dump(prog)
    assert "alpha" in text and "W" in text and "psd" in text and "maximize" in text
