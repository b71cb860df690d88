"""Canonical objects of a Lagrangian system and the pointwise linear solves.

The Lagrangian 2-form is assembled from analytic second derivatives of L
(nested duals), never by differencing the 1-form numerically: the kernel
ranks computed from it drive the whole constraint pipeline and must be
noise-free. Degenerate solves return minimal-norm representatives and
surface the gauge directions as an explicit kernel basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chart import ChartSpec
from .errors import (
    DimensionMismatchError,
    InconsistentSolveError,
    NotAutonomousError,
    ToleranceExceededError,
    UnknownIdentifierError,
)
from .expr import Expression, eval_with_gradient, hessian_block
from .geometry import (
    RANK_RTOL,
    TensorAtPoint,
    matrix_rank,
    null_space,
    two_form_at,
    vertical_endomorphism,
)

SOLVE_TOL = 1e-9


@dataclass(frozen=True)
class LagrangianSystem:
    """A chart together with a Lagrangian expression over it."""

    chart: ChartSpec
    lagrangian: Expression
    autonomous: bool = True

    def __post_init__(self):
        if self.autonomous == self.chart.has_time:
            raise NotAutonomousError(
                "autonomous flag must match the chart (time-dependent systems "
                "live on jet charts)"
            )
        unknown = self.lagrangian.names - set(self.chart.coords)
        if unknown:
            raise UnknownIdentifierError(sorted(unknown)[0])


@dataclass
class LinearSolveReport:
    """Outcome of a (possibly degenerate) pointwise linear problem."""

    solution: np.ndarray | None
    residual: float
    kernel_dim: int
    kernel: np.ndarray
    tolerance: float

    @property
    def consistent(self):
        return self.solution is not None


# --- derivative bundles of L ---------------------------------------------


def velocity_gradient(sys: LagrangianSystem, point) -> np.ndarray:
    """dL/dv^j (the fiber derivative, i.e. the momenta)."""
    _, grad = eval_with_gradient(sys.lagrangian, sys.chart.bindings(point))
    return grad[sys.chart.velocity_indices()]


def base_gradient(sys: LagrangianSystem, point) -> np.ndarray:
    _, grad = eval_with_gradient(sys.lagrangian, sys.chart.bindings(point))
    return grad[sys.chart.base_indices()]


def velocity_hessian(sys: LagrangianSystem, point) -> np.ndarray:
    names = sys.chart.velocity_names
    return hessian_block(sys.lagrangian, sys.chart.bindings(point), names, names)


def mixed_hessian(sys: LagrangianSystem, point) -> np.ndarray:
    """M[j, k] = d^2 L / dv^j dq^k."""
    return hessian_block(
        sys.lagrangian,
        sys.chart.bindings(point),
        sys.chart.velocity_names,
        sys.chart.base_names,
    )


def velocity_time_hessian(sys: LagrangianSystem, point) -> np.ndarray:
    return hessian_block(
        sys.lagrangian, sys.chart.bindings(point), sys.chart.velocity_names, ("t",)
    )[:, 0]


# --- canonical objects ----------------------------------------------------


def poincare_cartan(sys: LagrangianSystem, point) -> TensorAtPoint:
    """The momentum 1-form: p_j dq^j, plus the (L - p v) dt leg on jets."""
    chart = sys.chart
    arr = chart.as_array(point)
    value, grad = eval_with_gradient(sys.lagrangian, chart.bindings(arr))
    momenta = grad[chart.velocity_indices()]
    out = np.zeros(chart.dim)
    out[chart.base_indices()] = momenta
    if not sys.autonomous:
        velocities = arr[chart.velocity_indices()]
        out[chart.time_index] = value - float(momenta @ velocities)
    return TensorAtPoint("covector", out, chart.bindings(arr))


def omega_matrix(sys: LagrangianSystem, point) -> np.ndarray:
    """Components of -d(theta_L) from exact second derivatives of L."""
    chart = sys.chart
    arr = chart.as_array(point)
    n = chart.n_base
    hess_vv = velocity_hessian(sys, arr)
    hess_vq = mixed_hessian(sys, arr)
    omega = np.zeros((chart.dim, chart.dim))
    base = slice(0, n)
    vel = slice(n, 2 * n)
    omega[base, base] = hess_vq - hess_vq.T
    omega[base, vel] = hess_vv
    omega[vel, base] = -hess_vv
    if not sys.autonomous:
        velocities = arr[chart.velocity_indices()]
        _, grad = eval_with_gradient(sys.lagrangian, chart.bindings(arr))
        base_grad = grad[chart.base_indices()]
        t = chart.time_index
        col_base = velocities @ hess_vq - base_grad + velocity_time_hessian(sys, arr)
        col_vel = hess_vv @ velocities
        omega[base, t] = col_base
        omega[t, base] = -col_base
        omega[vel, t] = col_vel
        omega[t, vel] = -col_vel
    return omega


def lagrangian_two_form(sys: LagrangianSystem, point) -> TensorAtPoint:
    return two_form_at(omega_matrix(sys, point), sys.chart.bindings(point))


def lagrangian_energy(sys: LagrangianSystem, point) -> float:
    """Dilation of L minus L; only meaningful without explicit time."""
    if not sys.autonomous:
        raise NotAutonomousError("energy is defined for autonomous systems only")
    chart = sys.chart
    arr = chart.as_array(point)
    value, grad = eval_with_gradient(sys.lagrangian, chart.bindings(arr))
    velocities = arr[chart.velocity_indices()]
    return float(grad[chart.velocity_indices()] @ velocities - value)


def energy_differential(sys: LagrangianSystem, point) -> np.ndarray:
    """dE_L in chart components, from exact derivative blocks."""
    if not sys.autonomous:
        raise NotAutonomousError("energy is defined for autonomous systems only")
    chart = sys.chart
    arr = chart.as_array(point)
    _, grad = eval_with_gradient(sys.lagrangian, chart.bindings(arr))
    velocities = arr[chart.velocity_indices()]
    hess_vv = velocity_hessian(sys, arr)
    hess_vq = mixed_hessian(sys, arr)
    out = np.zeros(chart.dim)
    out[chart.base_indices()] = velocities @ hess_vq - grad[chart.base_indices()]
    out[chart.velocity_indices()] = hess_vv @ velocities
    return out


def hessian_rank(sys: LagrangianSystem, point, rtol=RANK_RTOL):
    w = velocity_hessian(sys, point)
    return w, matrix_rank(w, rtol)


# --- Helmholtz conditions -------------------------------------------------


def _omega_partials(omega_field, arr, h):
    """Central-difference + Richardson partials of the 2-form components."""
    dim = arr.size
    partials = np.empty((dim, dim, dim))
    for a in range(dim):
        step = np.zeros(dim)
        step[a] = 1.0

        def shifted(t, step=step):
            return np.asarray(omega_field(arr + t * step), dtype=float)

        coarse = (shifted(h) - shifted(-h)) / (2.0 * h)
        fine = (shifted(h / 2.0) - shifted(-h / 2.0)) / h
        partials[a] = (4.0 * fine - coarse) / 3.0
    return partials


def helmholtz_check(
    omega_field,
    chart: ChartSpec,
    sample_points,
    closure_tol=1e-6,
    symmetry_tol=1e-7,
    h=1e-4,
    raise_on_failure=True,
):
    """Closedness plus the vertical-endomorphism symmetry condition.

    d(omega) is evaluated on all coordinate triples with finite
    differences; the symmetry condition omega(SX, Y) = omega(SY, X) is
    exact matrix algebra (S^T omega must be symmetric).
    """
    worst_closure = 0.0
    worst_triple = None
    worst_symmetry = 0.0
    worst_pair = None
    for p in sample_points:
        arr = chart.as_array(p)
        dim = chart.dim
        partials = _omega_partials(omega_field, arr, h)
        for a in range(dim):
            for b in range(a + 1, dim):
                for c in range(b + 1, dim):
                    residual = abs(
                        partials[a, b, c] - partials[b, a, c] + partials[c, a, b]
                    )
                    if residual > worst_closure:
                        worst_closure = residual
                        worst_triple = (chart.coords[a], chart.coords[b], chart.coords[c])
        s = vertical_endomorphism(chart, arr).components
        omega = np.asarray(omega_field(arr), dtype=float)
        sym = s.T @ omega
        gap = np.abs(sym - sym.T)
        residual = float(np.max(gap))
        if residual > worst_symmetry:
            worst_symmetry = residual
            i, j = np.unravel_index(np.argmax(gap), gap.shape)
            worst_pair = (chart.coords[i], chart.coords[j])
    report = {
        "closure_residual": worst_closure,
        "closure_worst_triple": worst_triple,
        "symmetry_residual": worst_symmetry,
        "symmetry_worst_pair": worst_pair,
        "samples": len(list(sample_points)),
        "passed": worst_closure <= closure_tol and worst_symmetry <= symmetry_tol,
    }
    if raise_on_failure and not report["passed"]:
        which, res = ("closure", worst_closure)
        if worst_symmetry > symmetry_tol:
            which, res = ("symmetry", worst_symmetry)
        raise ToleranceExceededError(f"helmholtz {which}", res, detail=report)
    return report


# --- pointwise linear problems --------------------------------------------


def _least_squares(matrix, rhs, tol):
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    rhs = np.asarray(rhs, dtype=float)
    solution, _, _, _ = np.linalg.lstsq(matrix, rhs, rcond=None)
    residual = float(np.linalg.norm(matrix @ solution - rhs))
    kernel = null_space(matrix)
    return solution, residual, kernel


def hamiltonian_field(omega, d_h, tol=SOLVE_TOL) -> LinearSolveReport:
    """Solve i_X omega = dH in components.

    With omega degenerate the minimal-norm representative is returned and
    the gauge ambiguity is reported as the kernel basis; an unreachable dH
    raises with the inconsistency residual (the pointwise membership test
    of the constraint algorithm).
    """
    omega = np.asarray(omega, dtype=float)
    d_h = np.asarray(d_h, dtype=float)
    if omega.shape != (d_h.size, d_h.size):
        raise DimensionMismatchError(
            f"omega shape {omega.shape} does not match covector size {d_h.size}"
        )
    solution, residual, kernel = _least_squares(-omega, d_h, tol)
    scale = max(1.0, float(np.linalg.norm(d_h)))
    report = LinearSolveReport(solution, residual, kernel.shape[1], kernel, tol)
    if residual > tol * scale:
        report.solution = None
        raise InconsistentSolveError(residual, report)
    return report


def reeb_evolution_field(omega, tau, tol=SOLVE_TOL) -> LinearSolveReport:
    """Solve i_X omega = 0, tau(X) = 1 as one stacked system.

    The kernel of the stacked matrix is the characteristic (gauge)
    distribution ker omega intersected with ker tau.
    """
    omega = np.asarray(omega, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if omega.shape != (tau.size, tau.size):
        raise DimensionMismatchError(
            f"omega shape {omega.shape} does not match covector size {tau.size}"
        )
    stacked = np.vstack([-omega, tau[np.newaxis, :]])
    rhs = np.zeros(tau.size + 1)
    rhs[-1] = 1.0
    solution, residual, kernel = _least_squares(stacked, rhs, tol)
    report = LinearSolveReport(solution, residual, kernel.shape[1], kernel, tol)
    if residual > tol:
        report.solution = None
        raise InconsistentSolveError(residual, report)
    return report


def sode_residual(vector, chart: ChartSpec, point) -> float:
    """Distance of a vector from second-order form.

    Autonomous: |S(X) - Delta|. Jet: |dt(X) - 1| + |S(X)| (the vertical
    endomorphism already carries the -v dt leg).
    """
    components = vector.components if isinstance(vector, TensorAtPoint) else vector
    components = np.asarray(components, dtype=float)
    arr = chart.as_array(point)
    s = vertical_endomorphism(chart, arr).components
    image = s @ components
    if chart.has_time:
        return float(
            abs(components[chart.time_index] - 1.0) + np.linalg.norm(image)
        )
    dilation = np.zeros(chart.dim)
    dilation[chart.velocity_indices()] = arr[chart.velocity_indices()]
    return float(np.linalg.norm(image - dilation))
