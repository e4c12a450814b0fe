"""
Conic program representation and solve interface

Programs are built over real scalar variables. Affine expressions are kept as
dense coefficient blocks per variable, so a program can be inspected, dumped
and re-evaluated at any point independently of the backend. The backend is
cvxpy; the solver order comes from settings.
"""

import enum
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

import cvxpy as cp
import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from starswipt.core.config import settings
from starswipt.core.exceptions import DimensionError

logger = logging.getLogger(__name__)

Number = Union[int, float, np.floating, np.integer]


class Affine:
    """Real vector-valued affine expression: sum_v C_v x_v + c"""

    __array_ufunc__ = None

    def __init__(self, terms: Mapping[str, np.ndarray], const: Union[np.ndarray, Number]):
        self.const = np.atleast_1d(np.asarray(const, dtype=float)).copy()
        self.terms: Dict[str, np.ndarray] = {}
        for name, coeff in terms.items():
            coeff = np.asarray(coeff, dtype=float)
            if coeff.ndim != 2 or coeff.shape[0] != self.const.shape[0]:
                raise DimensionError(
                    f"coefficient block of '{name}' has shape {coeff.shape}, expected ({self.size}, n)"
                )
            self.terms[name] = coeff

    @property
    def size(self) -> int:
        return self.const.shape[0]

    @property
    def variables(self) -> set:
        return set(self.terms)

    @classmethod
    def constant(cls, value: Union[np.ndarray, Number]) -> "Affine":
        return cls({}, value)

    def _broadcast(self, size: int) -> "Affine":
        if self.size == size:
            return self
        if self.size != 1:
            raise DimensionError(f"cannot broadcast an expression of size {self.size} to {size}")
        return Affine({n: np.repeat(c, size, axis=0) for n, c in self.terms.items()}, np.repeat(self.const, size))

    def __add__(self, other) -> "Affine":
        other = as_affine(other)
        size = max(self.size, other.size)
        left, right = self._broadcast(size), other._broadcast(size)
        terms = dict(left.terms)
        for name, coeff in right.terms.items():
            terms[name] = terms[name] + coeff if name in terms else coeff
        return Affine(terms, left.const + right.const)

    __radd__ = __add__

    def __neg__(self) -> "Affine":
        return Affine({n: -c for n, c in self.terms.items()}, -self.const)

    def __sub__(self, other) -> "Affine":
        return self + (-as_affine(other))

    def __rsub__(self, other) -> "Affine":
        return as_affine(other) + (-self)

    def __mul__(self, scale) -> "Affine":
        if isinstance(scale, (Affine, ComplexAffine)):
            raise TypeError("affine expressions can only be scaled by numbers")
        scale = np.asarray(scale, dtype=float)
        if scale.ndim == 0:
            factor = float(scale)
            return Affine({n: c * factor for n, c in self.terms.items()}, self.const * factor)
        if scale.shape != (self.size,):
            raise DimensionError(f"elementwise scale of shape {scale.shape} on size {self.size}")
        return Affine({n: c * scale[:, None] for n, c in self.terms.items()}, self.const * scale)

    __rmul__ = __mul__

    def __truediv__(self, scale: Number) -> "Affine":
        return self * (1.0 / float(scale))

    def __rmatmul__(self, matrix) -> "Affine":
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim == 1:
            matrix = matrix[None, :]
        if matrix.shape[1] != self.size:
            raise DimensionError(f"matrix with {matrix.shape[1]} columns applied to size {self.size}")
        return Affine({n: matrix @ c for n, c in self.terms.items()}, matrix @ self.const)

    def __getitem__(self, index) -> "Affine":
        rows = np.atleast_1d(np.arange(self.size)[index])
        return Affine({n: c[rows] for n, c in self.terms.items()}, self.const[rows])

    def __len__(self) -> int:
        return self.size

    def sum(self) -> "Affine":
        return np.ones(self.size) @ self

    def dot(self, weights: Sequence[float]) -> "Affine":
        return np.asarray(weights, dtype=float) @ self

    def value(self, raw: Mapping[str, np.ndarray]) -> np.ndarray:
        out = self.const.copy()
        for name, coeff in self.terms.items():
            out += coeff @ np.asarray(raw[name], dtype=float)
        return out

    @staticmethod
    def stack(parts: Iterable[Union["Affine", Number]]) -> "Affine":
        parts = [as_affine(p) for p in parts]
        widths: Dict[str, int] = {}
        for part in parts:
            for name, coeff in part.terms.items():
                widths[name] = coeff.shape[1]
        terms = {
            name: np.vstack([p.terms.get(name, np.zeros((p.size, width))) for p in parts])
            for name, width in widths.items()
        }
        return Affine(terms, np.concatenate([p.const for p in parts]))

    def __repr__(self) -> str:
        return f"Affine(size={self.size}, variables={sorted(self.terms)})"


def as_affine(value) -> Affine:
    if isinstance(value, Affine):
        return value
    if isinstance(value, ComplexAffine):
        raise TypeError("complex expression used where a real one is required")
    return Affine.constant(value)


class ComplexAffine:
    """Complex affine expression held as a pair of real ones"""

    __array_ufunc__ = None

    def __init__(self, re: Affine, im: Affine):
        if re.size != im.size:
            raise DimensionError("real and imaginary parts differ in size")
        self.re = re
        self.im = im

    @property
    def size(self) -> int:
        return self.re.size

    @classmethod
    def constant(cls, value) -> "ComplexAffine":
        value = np.atleast_1d(np.asarray(value, dtype=complex))
        return cls(Affine.constant(value.real), Affine.constant(value.imag))

    def __add__(self, other) -> "ComplexAffine":
        other = other if isinstance(other, ComplexAffine) else ComplexAffine.constant(other)
        return ComplexAffine(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __neg__(self) -> "ComplexAffine":
        return ComplexAffine(-self.re, -self.im)

    def __sub__(self, other) -> "ComplexAffine":
        other = other if isinstance(other, ComplexAffine) else ComplexAffine.constant(other)
        return self + (-other)

    def __mul__(self, scale) -> "ComplexAffine":
        z = complex(scale)
        return ComplexAffine(z.real * self.re - z.imag * self.im, z.imag * self.re + z.real * self.im)

    __rmul__ = __mul__

    def __rmatmul__(self, matrix) -> "ComplexAffine":
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.ndim == 1:
            matrix = matrix[None, :]
        real, imag = matrix.real, matrix.imag
        return ComplexAffine(real @ self.re - imag @ self.im, imag @ self.re + real @ self.im)

    def __getitem__(self, index) -> "ComplexAffine":
        return ComplexAffine(self.re[index], self.im[index])

    def vdot(self, h: np.ndarray) -> "ComplexAffine":
        """h^H u"""
        return np.asarray(h, dtype=complex).conj()[None, :] @ self

    def real_inner(self, c: np.ndarray) -> Affine:
        """Re{c^H u}"""
        c = np.asarray(c, dtype=complex)
        return c.real @ self.re + c.imag @ self.im

    def real_stack(self) -> Affine:
        return Affine.stack([self.re, self.im])

    def value(self, raw: Mapping[str, np.ndarray]) -> np.ndarray:
        return self.re.value(raw) + 1j * self.im.value(raw)

    @staticmethod
    def stack(parts: Iterable["ComplexAffine"]) -> "ComplexAffine":
        parts = list(parts)
        return ComplexAffine(Affine.stack([p.re for p in parts]), Affine.stack([p.im for p in parts]))


class VariableKind(str, enum.Enum):
    SCALAR = "scalar"
    VECTOR = "vector"
    COMPLEX = "complex"
    SYMMETRIC = "symmetric"
    HERMITIAN = "hermitian"


@dataclass
class Variable:
    name: str
    kind: VariableKind
    size: int
    order: int = 0
    basis: Optional[np.ndarray] = None

    def decode(self, raw: np.ndarray) -> np.ndarray:
        raw = np.asarray(raw, dtype=float)
        if self.kind == VariableKind.SCALAR:
            return raw[:1].copy()
        if self.kind == VariableKind.COMPLEX:
            return unembed_complex(raw)
        if self.kind in (VariableKind.SYMMETRIC, VariableKind.HERMITIAN):
            matrix = np.einsum("k,kab->ab", raw, self.basis)
            return matrix.real.copy() if self.kind == VariableKind.SYMMETRIC else matrix
        return raw.copy()


def _matrix_basis(order: int, hermitian: bool) -> np.ndarray:
    """Real coordinates of a symmetric (or Hermitian) matrix: upper triangle, then skew part"""
    mats = []
    for a in range(order):
        for b in range(a, order):
            m = np.zeros((order, order), dtype=complex)
            m[a, b] = m[b, a] = 1.0
            mats.append(m)
    if hermitian:
        for a in range(order):
            for b in range(a + 1, order):
                m = np.zeros((order, order), dtype=complex)
                m[a, b] = 1j
                m[b, a] = -1j
                mats.append(m)
    return np.array(mats)


class MatrixVariable:
    """A symmetric or Hermitian matrix variable and the linear maps programs need"""

    def __init__(self, spec: Variable):
        self.spec = spec

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def order(self) -> int:
        return self.spec.order

    def _functional(self, coeffs: np.ndarray) -> Affine:
        return Affine({self.name: np.real(coeffs)[None, :]}, 0.0)

    def trace_with(self, H: np.ndarray) -> Affine:
        """Re Tr(V H)"""
        return self._functional(np.einsum("kab,ba->k", self.spec.basis, np.asarray(H, dtype=complex)))

    def trace(self) -> Affine:
        return self.trace_with(np.eye(self.order))

    def quad(self, e: np.ndarray) -> Affine:
        """Re e^H V e"""
        e = np.asarray(e, dtype=complex)
        return self._functional(np.einsum("a,kab,b->k", e.conj(), self.spec.basis, e))

    def diag(self) -> Affine:
        idx = np.arange(self.order)
        return Affine({self.name: self.spec.basis[:, idx, idx].real.T}, np.zeros(self.order))

    def embedding(self) -> Affine:
        """Row-major real embedding (n x n, or 2n x 2n when Hermitian)"""
        if self.spec.kind == VariableKind.SYMMETRIC:
            blocks = [m.real.ravel() for m in self.spec.basis]
        else:
            blocks = [embed_complex(m).ravel() for m in self.spec.basis]
        coeffs = np.array(blocks).T
        return Affine({self.name: coeffs}, np.zeros(coeffs.shape[0]))

    @property
    def embedded_order(self) -> int:
        return self.order if self.spec.kind == VariableKind.SYMMETRIC else 2 * self.order


def embed_complex(value):
    """Complex vector -> (Re; Im); Hermitian matrix -> [[Re, -Im], [Im, Re]]"""
    if isinstance(value, ComplexAffine):
        return value.real_stack()
    if isinstance(value, MatrixVariable):
        return value.embedding()
    z = np.asarray(value, dtype=complex)
    if z.ndim == 1:
        return np.concatenate([z.real, z.imag])
    if z.ndim == 2 and z.shape[0] == z.shape[1]:
        return np.block([[z.real, -z.imag], [z.imag, z.real]])
    raise DimensionError(f"cannot embed an array of shape {z.shape}")


def unembed_complex(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] % 2:
            raise DimensionError("embedded vector must have even length")
        n = x.shape[0] // 2
        return x[:n] + 1j * x[n:]
    n = x.shape[0] // 2
    return x[:n, :n] + 1j * x[n:, :n]


class Cone(str, enum.Enum):
    ZERO = "zero"
    NONNEG = "nonneg"
    SOC = "soc"
    RSOC = "rsoc"
    PSD = "psd"


@dataclass
class Constraint:
    """expr in cone; SOC is (t, x), RSOC is (y, z, x) with ||x||^2 <= y z"""

    cone: Cone
    expr: Affine
    label: str
    order: int = 0

    def residual(self, raw: Mapping[str, np.ndarray]) -> float:
        """Violation relative to the magnitude of the expression"""
        v = self.expr.value(raw)
        scale = max(1.0, float(np.max(np.abs(v))))
        if self.cone == Cone.ZERO:
            r = float(np.max(np.abs(v)))
        elif self.cone == Cone.NONNEG:
            r = max(0.0, -float(np.min(v)))
        elif self.cone == Cone.SOC:
            r = max(0.0, float(np.linalg.norm(v[1:])) - float(v[0]))
        elif self.cone == Cone.RSOC:
            y, z, x = v[0], v[1], v[2:]
            r = max(0.0, float(np.hypot(2.0 * np.linalg.norm(x), y - z)) - float(y + z))
        else:
            m = v.reshape(self.order, self.order)
            r = max(0.0, -float(np.linalg.eigvalsh(0.5 * (m + m.T))[0]))
        return r / scale

    def describe(self) -> str:
        variables = ",".join(sorted(self.expr.variables)) or "-"
        return f"{self.label}\t{self.cone.value}\tdim={self.expr.size}\tvars={variables}"


class ConicProgram:
    """Variables, labelled cone constraints and a linear objective"""

    def __init__(self, name: str = "program"):
        self.name = name
        self.variables: Dict[str, Variable] = {}
        self.constraints: List[Constraint] = []
        self.objective: Affine = Affine.constant(0.0)
        self.sense = "max"

    # Variable registry

    def _register(self, name: str, kind: VariableKind, size: int, order: int = 0,
                  basis: Optional[np.ndarray] = None) -> Variable:
        if name in self.variables:
            raise ValueError(f"variable '{name}' registered twice in {self.name}")
        if size < 1:
            raise DimensionError(f"variable '{name}' must have positive size")
        spec = Variable(name=name, kind=kind, size=size, order=order, basis=basis)
        self.variables[name] = spec
        return spec

    @staticmethod
    def _identity(spec: Variable) -> Affine:
        return Affine({spec.name: np.eye(spec.size)}, np.zeros(spec.size))

    def add_scalar(self, name: str, nonneg: bool = False) -> Affine:
        x = self._identity(self._register(name, VariableKind.SCALAR, 1))
        if nonneg:
            self.add(Cone.NONNEG, x, f"{name} >= 0")
        return x

    def add_vector(self, name: str, size: int, nonneg: bool = False) -> Affine:
        x = self._identity(self._register(name, VariableKind.VECTOR, size))
        if nonneg:
            self.add(Cone.NONNEG, x, f"{name} >= 0")
        return x

    def add_complex(self, name: str, n: int) -> ComplexAffine:
        x = self._identity(self._register(name, VariableKind.COMPLEX, 2 * n, order=n))
        return ComplexAffine(x[:n], x[n:])

    def add_symmetric(self, name: str, order: int, psd: bool = True) -> MatrixVariable:
        basis = _matrix_basis(order, hermitian=False)
        var = MatrixVariable(self._register(name, VariableKind.SYMMETRIC, basis.shape[0], order, basis))
        if psd:
            self.add_psd(var.embedding(), var.embedded_order, f"{name} PSD")
        return var

    def add_hermitian(self, name: str, order: int, psd: bool = True) -> MatrixVariable:
        basis = _matrix_basis(order, hermitian=True)
        var = MatrixVariable(self._register(name, VariableKind.HERMITIAN, basis.shape[0], order, basis))
        if psd:
            self.add_psd(var.embedding(), var.embedded_order, f"{name} PSD")
        return var

    # Constraints

    def add(self, cone: Cone, expr: Affine, label: str, order: int = 0) -> Constraint:
        if not label or not label.strip():
            raise ValueError("every constraint needs a source label")
        unknown = expr.variables - set(self.variables)
        if unknown:
            raise ValueError(f"constraint '{label}' references unregistered variables {sorted(unknown)}")
        constraint = Constraint(cone=cone, expr=expr, label=label, order=order)
        self.constraints.append(constraint)
        return constraint

    def add_equal(self, lhs, rhs, label: str) -> Constraint:
        return self.add(Cone.ZERO, as_affine(lhs) - rhs, label)

    def add_geq(self, lhs, rhs, label: str) -> Constraint:
        return self.add(Cone.NONNEG, as_affine(lhs) - rhs, label)

    def add_leq(self, lhs, rhs, label: str) -> Constraint:
        return self.add(Cone.NONNEG, as_affine(rhs) - lhs, label)

    def add_soc(self, t, x, label: str) -> Constraint:
        """||x|| <= t"""
        return self.add(Cone.SOC, Affine.stack([as_affine(t), as_affine(x)]), label)

    def add_rotated(self, y, z, x, label: str) -> Constraint:
        """||x||^2 <= y z, y >= 0, z >= 0"""
        return self.add(Cone.RSOC, Affine.stack([as_affine(y), as_affine(z), as_affine(x)]), label)

    def add_square_le(self, x, rhs, label: str) -> Constraint:
        """||x||^2 <= rhs"""
        return self.add_rotated(rhs, 1.0, x, label)

    def add_psd(self, matrix: Affine, order: int, label: str) -> Constraint:
        if matrix.size != order * order:
            raise DimensionError(f"PSD block '{label}' of size {matrix.size} is not {order}x{order}")
        return self.add(Cone.PSD, matrix, label, order=order)

    # Objective

    def maximize(self, expr) -> None:
        self.objective, self.sense = as_affine(expr).sum(), "max"

    def minimize(self, expr) -> None:
        self.objective, self.sense = as_affine(expr).sum(), "min"

    # Inspection

    def count(self, cone: Optional[Cone] = None, prefix: str = "") -> int:
        return sum(
            1 for c in self.constraints
            if (cone is None or c.cone == cone) and c.label.startswith(prefix)
        )

    def residuals(self, raw: Mapping[str, np.ndarray]) -> Dict[str, float]:
        out: Dict[str, float] = {}
        for constraint in self.constraints:
            r = constraint.residual(raw)
            out[constraint.label] = max(out.get(constraint.label, 0.0), r)
        return out

    def describe(self) -> str:
        lines = [f"# {self.name}: {self.sense} over {sum(v.size for v in self.variables.values())} reals"]
        lines += [f"# var {v.name} {v.kind.value} size={v.size}" for v in self.variables.values()]
        lines += [c.describe() for c in self.constraints]
        return "\n".join(lines) + "\n"

    def dump(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.describe())
        return path


def add_quad_over_lin(program: ConicProgram, x, d, rho, label: str) -> Constraint:
    """x^2 <= rho * d as a rotated cone (rho, d >= 0 implied)"""
    return program.add_rotated(rho, d, x, label)


class SolveStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITERATIONS = "max-iterations"
    NUMERICAL_FAILURE = "numerical-failure"


class ConicSolution(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    status: SolveStatus
    values: Dict[str, np.ndarray] = Field(default_factory=dict)
    raw: Dict[str, np.ndarray] = Field(default_factory=dict)
    objective: float = float("nan")
    iterations: int = 0
    residuals: Dict[str, float] = Field(default_factory=dict)
    solver: str = ""
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == SolveStatus.OPTIMAL

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    def value_of(self, expr: Union[Affine, ComplexAffine]) -> np.ndarray:
        return expr.value(self.raw)


_STATUS_MAP = {
    cp.OPTIMAL: SolveStatus.OPTIMAL,
    cp.OPTIMAL_INACCURATE: SolveStatus.OPTIMAL,
    cp.INFEASIBLE: SolveStatus.INFEASIBLE,
    cp.INFEASIBLE_INACCURATE: SolveStatus.INFEASIBLE,
    cp.USER_LIMIT: SolveStatus.MAX_ITERATIONS,
}


def _solver_options(solver: str, tol: float) -> dict:
    if solver == "CLARABEL":
        return {"tol_gap_abs": tol, "tol_gap_rel": tol, "tol_feas": tol, "max_iter": settings.max_solver_iterations}
    if solver == "SCS":
        return {"eps_abs": tol, "eps_rel": tol, "max_iters": settings.max_solver_iterations}
    return {}


def _lower(expr: Affine, variables: Mapping[str, cp.Variable]):
    out = cp.Constant(expr.const)
    for name, coeff in expr.terms.items():
        out = out + coeff @ variables[name]
    return out


def _solve_with(program: ConicProgram, solver: str, tol: float) -> ConicSolution:
    try:
        variables = {name: cp.Variable(spec.size, name=name) for name, spec in program.variables.items()}
        constraints = []
        for con in program.constraints:
            e = _lower(con.expr, variables)
            if con.cone == Cone.ZERO:
                constraints.append(e == 0)
            elif con.cone == Cone.NONNEG:
                constraints.append(e >= 0)
            elif con.cone == Cone.SOC:
                constraints.append(cp.SOC(e[0], e[1:]))
            elif con.cone == Cone.RSOC:
                # ||x||^2 <= y z  <=>  ||(2x, y - z)|| <= y + z
                constraints.append(cp.SOC(e[0] + e[1], cp.hstack([2.0 * e[2:], e[0:1] - e[1:2]])))
            else:
                block = cp.Variable((con.order, con.order), PSD=True)
                constraints.append(cp.reshape(e, (con.order, con.order), order="C") == block)
        objective = cp.sum(_lower(program.objective, variables))
        goal = cp.Maximize(objective) if program.sense == "max" else cp.Minimize(objective)
        problem = cp.Problem(goal, constraints)
        problem.solve(solver=solver, **_solver_options(solver, tol))
    except (cp.SolverError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return ConicSolution(status=SolveStatus.NUMERICAL_FAILURE, solver=solver, detail=str(exc))

    status = _STATUS_MAP.get(problem.status, SolveStatus.NUMERICAL_FAILURE)
    stats = problem.solver_stats
    iterations = int(stats.num_iters) if stats is not None and stats.num_iters is not None else 0
    if status != SolveStatus.OPTIMAL:
        return ConicSolution(status=status, solver=solver, iterations=iterations, detail=str(problem.status))

    raw = {name: var.value for name, var in variables.items()}
    if any(value is None or not np.all(np.isfinite(value)) for value in raw.values()):
        return ConicSolution(status=SolveStatus.NUMERICAL_FAILURE, solver=solver, iterations=iterations,
                             detail="solver returned no primal point")
    raw = {name: np.asarray(value, dtype=float) for name, value in raw.items()}
    residuals = program.residuals(raw)
    limit = max(tol, settings.residual_tolerance)
    worst = max(residuals.items(), key=lambda item: item[1], default=("", 0.0))
    if worst[1] > limit:
        return ConicSolution(
            status=SolveStatus.NUMERICAL_FAILURE, solver=solver, iterations=iterations, residuals=residuals,
            detail=f"constraint '{worst[0]}' violated by {worst[1]:.3g} (limit {limit:.1g})",
        )
    return ConicSolution(
        status=SolveStatus.OPTIMAL,
        values={name: spec.decode(raw[name]) for name, spec in program.variables.items()},
        raw=raw,
        objective=float(program.objective.value(raw)[0]),
        iterations=iterations,
        residuals=residuals,
        solver=solver,
    )


def solve(program: ConicProgram, tol: Optional[float] = None) -> ConicSolution:
    """Solve with the configured solver, falling back on breakdown"""
    tol = settings.solve_tolerance if tol is None else tol
    if settings.dump_programs:
        program.dump(Path(settings.dump_dir) / f"{program.name}.txt")

    order = [settings.solver] + [s for s in settings.fallback_solvers if s != settings.solver]
    solution = ConicSolution(status=SolveStatus.NUMERICAL_FAILURE, detail="no solver configured")
    for attempt, solver in enumerate(order):
        solution = _solve_with(program, solver, tol)
        logger.debug("%s: %s via %s (%d iterations)", program.name, solution.status.value, solver, solution.iterations)
        if solution.status in (SolveStatus.OPTIMAL, SolveStatus.INFEASIBLE):
            if attempt > 0:
                logger.warning("%s solved by fallback solver %s", program.name, solver)
            return solution
    return solution
