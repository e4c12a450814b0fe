"""
Conic program representation, real embeddings and the solve interface
"""

import numpy as np
import pytest

from starswipt.core.exceptions import DimensionError
from starswipt.services.conic import (
    Affine,
    Cone,
    ConicProgram,
    SolveStatus,
    add_quad_over_lin,
    embed_complex,
    solve,
    unembed_complex,
)
from starswipt.services.scenario import complex_gaussian


# =============================================================================
# Embeddings
# =============================================================================


def test_embed_zero_vector():
    assert np.array_equal(embed_complex(np.zeros(3, dtype=complex)), np.zeros(6))


def test_embed_identity_matrix():
    assert np.array_equal(embed_complex(np.eye(3, dtype=complex)), np.eye(6))


def test_embedding_doubles_eigenvalues(rng):
    X = complex_gaussian(rng, (3, 3))
    A = X @ X.conj().T
    w = np.linalg.eigvalsh(A)
    w_embedded = np.linalg.eigvalsh(embed_complex(A))
    assert np.allclose(np.sort(np.repeat(w, 2)), w_embedded, atol=1e-10)


def test_unembed_inverts_embed(rng):
    z = complex_gaussian(rng, 4)
    assert np.allclose(unembed_complex(embed_complex(z)), z)
    X = complex_gaussian(rng, (3, 3))
    A = X + X.conj().T
    assert np.allclose(unembed_complex(embed_complex(A)), A)


def test_unembed_rejects_odd_length():
    with pytest.raises(DimensionError):
        unembed_complex(np.zeros(3))


# =============================================================================
# Program building
# =============================================================================


def test_constraints_need_labels():
    program = ConicProgram()
    x = program.add_scalar("x")
    with pytest.raises(ValueError):
        program.add_geq(x, 1.0, " ")


def test_unregistered_variables_are_rejected():
    program = ConicProgram()
    stray = Affine({"y": np.eye(1)}, 0.0)
    with pytest.raises(ValueError):
        program.add_geq(stray, 0.0, "stray")


def test_duplicate_variables_are_rejected():
    program = ConicProgram()
    program.add_scalar("x")
    with pytest.raises(ValueError):
        program.add_vector("x", 2)


def test_affine_arithmetic_evaluates():
    program = ConicProgram()
    x = program.add_vector("x", 2)
    expr = 2.0 * x - np.array([1.0, 1.0]) + x[0]
    raw = {"x": np.array([3.0, 5.0])}
    assert np.allclose(expr.value(raw), [2 * 3 - 1 + 3, 2 * 5 - 1 + 3])
    assert expr.sum().value(raw)[0] == pytest.approx(8.0 + 12.0)


def test_complex_matmul_evaluates(rng):
    program = ConicProgram()
    u = program.add_complex("u", 2)
    M = complex_gaussian(rng, (3, 2))
    z = complex_gaussian(rng, 2)
    raw = {"u": embed_complex(z)}
    assert np.allclose((M @ u).value(raw), M @ z)
    assert u.vdot(M[0]).value(raw)[0] == pytest.approx(np.vdot(M[0], z))


def test_quad_over_lin_residual():
    program = ConicProgram()
    x = program.add_scalar("x")
    rho = program.add_scalar("rho")
    add_quad_over_lin(program, x, 1.0, rho, "sinr")
    assert program.residuals({"x": np.zeros(1), "rho": np.zeros(1)})["sinr"] == 0.0
    assert program.residuals({"x": np.ones(1), "rho": np.full(1, 0.5)})["sinr"] > 0.0


def test_count_by_cone_and_prefix():
    program = ConicProgram()
    x = program.add_vector("x", 2, nonneg=True)
    program.add_soc(1.0, x, "ball")
    program.add_geq(x[0], 0.1, "floor[1]")
    program.add_geq(x[1], 0.1, "floor[2]")
    assert program.count() == 4
    assert program.count(Cone.NONNEG) == 3
    assert program.count(prefix="floor[") == 2


def test_dump_lists_every_label(tmp_path):
    program = ConicProgram("demo")
    x = program.add_scalar("x", nonneg=True)
    program.add_leq(x, 2.0, "cap")
    path = program.dump(tmp_path / "nested" / "demo.txt")
    text = path.read_text()
    assert "x >= 0" in text and "cap" in text
    assert text.startswith("# demo")


# =============================================================================
# Solving
# =============================================================================


def test_linear_program():
    program = ConicProgram()
    x = program.add_scalar("x")
    program.add_geq(x, 1.0, "floor")
    program.minimize(x)
    solution = solve(program)
    assert solution.ok
    assert solution.values["x"][0] == pytest.approx(1.0, abs=1e-6)
    assert solution.max_residual <= 1e-6


def test_quad_over_lin_binds():
    program = ConicProgram()
    x = program.add_scalar("x")
    rho = program.add_scalar("rho")
    program.add_equal(x, 1.0, "fix x")
    add_quad_over_lin(program, x, 1.0, rho, "sinr")
    program.minimize(rho)
    solution = solve(program)
    assert solution.ok
    assert solution.objective == pytest.approx(1.0, abs=1e-6)


def test_symmetric_sdp():
    program = ConicProgram()
    V = program.add_symmetric("V", 2)
    program.add_equal(V.diag(), np.full(2, 0.5), "diagonal")
    program.maximize(V.trace())
    solution = solve(program)
    assert solution.ok
    assert solution.objective == pytest.approx(1.0, abs=1e-6)


def test_hermitian_sdp_finds_top_eigenvalue(rng):
    X = complex_gaussian(rng, (3, 3))
    C = 0.5 * (X + X.conj().T)
    program = ConicProgram()
    V = program.add_hermitian("V", 3)
    program.add_equal(V.trace(), 1.0, "unit trace")
    program.maximize(V.trace_with(C))
    solution = solve(program)
    assert solution.ok
    assert solution.objective == pytest.approx(np.linalg.eigvalsh(C)[-1], abs=1e-5)
    V_opt = solution.values["V"]
    assert np.allclose(V_opt, V_opt.conj().T)


def test_infeasible_program_is_reported():
    program = ConicProgram()
    x = program.add_scalar("x")
    program.add_geq(x, 2.0, "floor")
    program.add_leq(x, 1.0, "cap")
    program.minimize(x)
    solution = solve(program)
    assert solution.status == SolveStatus.INFEASIBLE
    assert not solution.ok


def test_solves_are_repeatable():
    def build():
        program = ConicProgram()
        x = program.add_vector("x", 3)
        program.add_soc(1.0, x, "ball")
        program.maximize(x.dot([1.0, 2.0, 3.0]))
        return program

    first, second = solve(build()), solve(build())
    assert first.objective == pytest.approx(np.sqrt(14.0), abs=1e-6)
    assert first.objective == pytest.approx(second.objective, abs=1e-8)
