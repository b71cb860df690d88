"""Pointwise constraint-algorithm machinery.

Constraint submanifolds are represented as sample-survivor sets plus
tabulated constraint values: membership is decided per sample, never by
interpolation. Ranks assumed constant are checked across samples and
reported when they are not.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptySurfaceError,
    NotInKernelError,
    RankNotConstantError,
)
from .expr import eval_with_gradient, evaluate
from .forms import LagrangianSystem, mixed_hessian, omega_matrix, velocity_hessian
from .geometry import SubspaceBasis, image_projector, null_space

DEFAULT_TOL = 1e-8


def kernel_basis(omega, tau=None, rtol=1e-9) -> SubspaceBasis:
    """Orthonormal basis of ker omega (intersected with ker tau if given)."""
    omega = np.asarray(omega, dtype=float)
    matrix = omega
    if tau is not None:
        matrix = np.vstack([omega, np.asarray(tau, dtype=float)[np.newaxis, :]])
    basis = null_space(matrix, rtol)
    return SubspaceBasis(basis, rank=basis.shape[1])


@dataclass
class KernelReport:
    """Kernel snapshot plus the complete-lift verdict and its evidence."""

    basis: SubspaceBasis
    is_complete_lift: bool
    evidence: dict = field(default_factory=dict)


def _stacked_kernel(sys: LagrangianSystem, arr, rtol):
    omega = omega_matrix(sys, arr)
    if sys.autonomous:
        return null_space(omega, rtol)
    tau = np.zeros(sys.chart.dim)
    tau[sys.chart.time_index] = 1.0
    return null_space(np.vstack([omega, tau[np.newaxis, :]]), rtol)


def _span_projector(columns):
    if columns.size == 0 or columns.shape[1] == 0:
        return np.zeros((columns.shape[0], columns.shape[0]))
    return image_projector(columns)


def _subspace_gap(a, b):
    """Operator-norm distance between span projectors."""
    return float(np.linalg.norm(_span_projector(a) - _span_projector(b), 2))


def detect_complete_lift(sys: LagrangianSystem, sample_points, tol=1e-6) -> KernelReport:
    """Decide whether ker omega_L is the lift of a base distribution.

    At every sample the kernel must have even dimension 2r, meet the
    velocity directions in exactly r dimensions whose span (read back on
    the base) matches the base projection of the whole kernel, project to
    a velocity-independent base distribution, contain the zero-velocity
    pattern (Y, 0) at v = 0, and induce an involutive base distribution
    (finite-difference brackets of projector-smoothed generators).
    """
    chart = sys.chart
    samples = [chart.as_array(p) for p in sample_points]
    if not samples:
        raise EmptySurfaceError("no sample points supplied")
    n = chart.n_base
    base_idx = chart.base_indices()
    vel_idx = chart.velocity_indices()

    kernels = [_stacked_kernel(sys, arr, 1e-9) for arr in samples]
    dims = [k.shape[1] for k in kernels]
    if len(set(dims)) != 1:
        raise RankNotConstantError("kernel dimension", dims)
    dim_k = dims[0]
    evidence = {"kernel_dim": dim_k, "checks": {}}
    reasons = []

    if dim_k % 2 != 0:
        reasons.append("kernel dimension is odd")
        r = dim_k // 2
    else:
        r = dim_k // 2
    evidence["rank"] = r
    if dim_k == 0:
        evidence["base_distribution"] = np.zeros((n, 0))
        evidence["checks"]["vacuous"] = True
        return KernelReport(SubspaceBasis(kernels[0]), True, evidence)

    worst_span_gap = 0.0
    base_spans = []
    for arr, kernel in zip(samples, kernels):
        vertical_rows = kernel[base_idx, :]
        vertical_part = kernel @ null_space(vertical_rows)
        if vertical_part.shape[1] != r:
            reasons.append(
                f"vertical intersection has dimension {vertical_part.shape[1]}, expected {r}"
            )
            break
        lifted = vertical_part[vel_idx, :]
        base_span = kernel[base_idx, :]
        base_spans.append(base_span)
        worst_span_gap = max(worst_span_gap, _subspace_gap(lifted, base_span))
    evidence["checks"]["vertical_dimension"] = not reasons
    evidence["checks"]["span_gap"] = worst_span_gap
    if worst_span_gap > tol:
        reasons.append(f"vertical span differs from base projection (gap {worst_span_gap:.2e})")

    # (c) the induced base distribution must not depend on the velocities:
    # re-evaluate the kernel with the velocities of each sample perturbed.
    worst_velocity_dependence = 0.0
    if not reasons:
        for arr, base_span in zip(samples, base_spans):
            other = arr.copy()
            other[vel_idx] = 0.7 * other[vel_idx] + 0.3
            other_kernel = _stacked_kernel(sys, other, 1e-9)
            if other_kernel.shape[1] != dim_k:
                raise RankNotConstantError(
                    "kernel dimension", [dim_k, other_kernel.shape[1]]
                )
            worst_velocity_dependence = max(
                worst_velocity_dependence,
                _subspace_gap(other_kernel[base_idx, :], base_span),
            )
        evidence["checks"]["velocity_dependence"] = worst_velocity_dependence
        if worst_velocity_dependence > tol:
            reasons.append(
                f"base projection depends on velocities (gap {worst_velocity_dependence:.2e})"
            )

    # Zero-velocity pattern: at v = 0 a lifted distribution contributes the
    # pairs (Y, 0) and (0, Y); a kernel generator with base part Y but a
    # stray velocity leg at v = 0 is not a lift.
    worst_zero_pattern = 0.0
    if not reasons:
        for arr in samples:
            rest = arr.copy()
            rest[vel_idx] = 0.0
            kernel0 = _stacked_kernel(sys, rest, 1e-9)
            if kernel0.shape[1] != dim_k:
                raise RankNotConstantError("kernel dimension", [dim_k, kernel0.shape[1]])
            proj = _span_projector(kernel0)
            base_span0 = kernel0[base_idx, :]
            for k in range(base_span0.shape[1]):
                candidate = np.zeros(chart.dim)
                candidate[base_idx] = base_span0[:, k]
                norm = np.linalg.norm(candidate)
                if norm < 1e-13:
                    continue
                candidate /= norm
                worst_zero_pattern = max(
                    worst_zero_pattern,
                    float(np.linalg.norm(candidate - proj @ candidate)),
                )
        evidence["checks"]["zero_velocity_pattern"] = worst_zero_pattern
        if worst_zero_pattern > tol:
            reasons.append(
                f"kernel at zero velocity is not in lift form (residual {worst_zero_pattern:.2e})"
            )

    # Involutivity of the induced base distribution, via finite-difference
    # brackets of the projector-smoothed generator fields q -> P(q) y0.
    worst_involutivity = 0.0
    if not reasons:
        arr0 = samples[0]
        anchor = base_spans[0]
        anchor_q, _ = np.linalg.qr(anchor)
        anchor_q = anchor_q[:, :r]

        def distribution_projector(base_point):
            full = arr0.copy()
            full[base_idx] = base_point
            kernel_here = _stacked_kernel(sys, full, 1e-9)
            return _span_projector(kernel_here[base_idx, :])

        def generator(k):
            def fieldfn(base_point):
                return distribution_projector(base_point) @ anchor_q[:, k]

            return fieldfn

        h = 1e-3
        q0 = arr0[base_idx]
        proj0 = distribution_projector(q0)
        for i in range(r):
            for j in range(i + 1, r):
                f_i, f_j = generator(i), generator(j)
                u = f_i(q0)
                v = f_j(q0)

                def jac_apply(fieldfn, direction):
                    return (
                        np.asarray(fieldfn(q0 + h * direction))
                        - np.asarray(fieldfn(q0 - h * direction))
                    ) / (2.0 * h)

                bracket = jac_apply(f_j, u) - jac_apply(f_i, v)
                worst_involutivity = max(
                    worst_involutivity,
                    float(np.linalg.norm(bracket - proj0 @ bracket)),
                )
        evidence["checks"]["involutivity"] = worst_involutivity
        if worst_involutivity > tol:
            reasons.append(
                f"induced base distribution not involutive (residual {worst_involutivity:.2e})"
            )

    evidence["reasons"] = reasons
    evidence["base_distribution"] = base_spans[0] if base_spans else np.zeros((n, 0))
    return KernelReport(SubspaceBasis(kernels[0]), not reasons, evidence)


# --- Bergmann primary constraints ------------------------------------------


def primary_constraints(sys: LagrangianSystem, point) -> np.ndarray:
    """One constraint value per Hessian-kernel direction.

    Contracting the Euler-Lagrange expression with ker W removes the
    acceleration term, leaving Phi_a = Y_a^i (d2L/dv^i dq^j v^j - dL/dq^i).
    """
    chart = sys.chart
    arr = chart.as_array(point)
    hess_vv = velocity_hessian(sys, arr)
    kernel = null_space(hess_vv)
    if kernel.shape[1] == 0:
        return np.zeros(0)
    hess_vq = mixed_hessian(sys, arr)
    _, grad = eval_with_gradient(sys.lagrangian, chart.bindings(arr))
    velocities = arr[chart.velocity_indices()]
    euler_part = hess_vq @ velocities - grad[chart.base_indices()]
    return kernel.T @ euler_part


# --- pre-symplectic constraint algorithm ------------------------------------


@dataclass
class TabulatedConstraint:
    """A constraint known by its values at samples.

    The generating covector field and the per-sample anchor direction are
    kept so the constraint can be linearized around a sample; membership
    itself never interpolates.
    """

    values: dict
    anchors: dict
    covector_field: object

    def value_at(self, index):
        return self.values.get(index)

    def gradient_at(self, index, arr, h=1e-5):
        anchor = self.anchors[index]
        dim = arr.size
        grad = np.zeros(dim)
        for a in range(dim):
            step = np.zeros(dim)
            step[a] = h
            plus = float(np.asarray(self.covector_field(arr + step)) @ anchor)
            minus = float(np.asarray(self.covector_field(arr - step)) @ anchor)
            grad[a] = (plus - minus) / (2.0 * h)
        return grad


@dataclass
class ConstraintSet:
    """Declared expression constraints plus tabulated generations."""

    exprs: list = field(default_factory=list)
    tabulated: list = field(default_factory=list)
    generation: int = 0

    def is_on_surface(self, index, arr, tol):
        for phi in self.exprs:
            if abs(evaluate(phi, arr)) > tol:
                return False
        for tab in self.tabulated:
            value = tab.value_at(index)
            if value is None or abs(value) > tol:
                return False
        return True

    def jacobian(self, index, arr):
        rows = []
        for phi in self.exprs:
            _, grad = eval_with_gradient(phi, phi.chart.bindings(arr))
            rows.append(grad)
        for tab in self.tabulated:
            rows.append(tab.gradient_at(index, arr))
        if not rows:
            return np.zeros((0, arr.size))
        return np.vstack(rows)


def pca_step(omega_field, d_h_field, constraints: ConstraintSet, sample_points, tol=DEFAULT_TOL):
    """One constraint-algorithm iteration on the surviving samples.

    At each on-surface sample the tangent space of the current surface is
    the null space of the constraint Jacobian; its omega-orthogonal is
    evaluated against dH, and each orthogonal direction contributes one
    tabulated constraint (values per sample, no interpolation).
    """
    samples = [np.asarray(p, dtype=float) for p in sample_points]
    on_surface = [
        i for i, arr in enumerate(samples) if constraints.is_on_surface(i, arr, tol)
    ]
    if not on_surface:
        raise EmptySurfaceError("no sample satisfies the current constraints")

    orthogonals = {}
    dims = []
    for i in on_surface:
        arr = samples[i]
        jac = constraints.jacobian(i, arr)
        tangent = null_space(jac) if jac.shape[0] else np.eye(arr.size)
        omega = np.asarray(omega_field(arr), dtype=float)
        orthogonal = null_space(tangent.T @ omega)
        orthogonals[i] = orthogonal
        dims.append(orthogonal.shape[1])
    if len(set(dims)) != 1:
        raise RankNotConstantError("omega-orthogonal dimension", dims)
    width = dims[0]

    new_tabs = []
    for k in range(width):
        values = {}
        anchors = {}
        for i in on_surface:
            direction = orthogonals[i][:, k]
            values[i] = float(np.asarray(d_h_field(samples[i])) @ direction)
            anchors[i] = direction
        new_tabs.append(TabulatedConstraint(values, anchors, d_h_field))
    return ConstraintSet(
        exprs=list(constraints.exprs),
        tabulated=list(constraints.tabulated) + new_tabs,
        generation=constraints.generation + 1,
    )


@dataclass
class PcaResult:
    history: list  # survivor index sets, one per iteration (index 0 = start)
    stabilized: bool
    well_defined: bool
    constraints: ConstraintSet

    @property
    def survivors(self):
        return self.history[-1]


def run_pca(omega_field, d_h_field, sample_points, max_iter=10, tol=DEFAULT_TOL) -> PcaResult:
    """Iterate the constraint algorithm until the survivor set repeats.

    An empty survivor set means the dynamics are globally not well-defined;
    non-stabilization within max_iter is reported through the flag.
    """
    samples = [np.asarray(p, dtype=float) for p in sample_points]
    constraints = ConstraintSet()
    survivors = set(range(len(samples)))
    history = [set(survivors)]
    stabilized = False
    for _ in range(max_iter):
        try:
            constraints = pca_step(omega_field, d_h_field, constraints, samples, tol)
        except EmptySurfaceError:
            history.append(set())
            return PcaResult(history, True, False, constraints)
        new_survivors = {
            i
            for i in survivors
            if constraints.is_on_surface(i, samples[i], tol)
        }
        history.append(set(new_survivors))
        if new_survivors == survivors:
            stabilized = True
            break
        if not new_survivors:
            return PcaResult(history, True, False, constraints)
        survivors = new_survivors
    return PcaResult(history, stabilized, bool(history[-1]), constraints)


# --- second-order projection (defect flow limit) ----------------------------


def sode_projection(sys: LagrangianSystem, point, vector):
    """Project a dynamics vector onto second-order form.

    The defect S(Y) - Delta flows the velocities exponentially toward the
    base components a^i of Y; the limit point is (q0, a). The defect at the
    returned point vanishes identically, which is asserted.
    """
    chart = sys.chart
    arr = chart.as_array(point)
    components = np.asarray(
        vector.components if hasattr(vector, "components") else vector, dtype=float
    )
    out = arr.copy()
    out[chart.velocity_indices()] = components[chart.base_indices()]
    defect = components[chart.base_indices()] - out[chart.velocity_indices()]
    assert float(np.max(np.abs(defect))) <= 1e-12
    return out


# --- degenerate-metric consistency ------------------------------------------


def _grad_map(expression, arr):
    _, grad = eval_with_gradient(expression, expression.chart.bindings(arr))
    return grad


def metric_consistency_residuals(
    metric_table,
    potential_one_form,
    potential,
    kernel_field,
    chart,
    sample_points,
    kernel_tol=1e-9,
):
    """Residuals of the three obstruction contractions for a degenerate
    metric Lagrangian (kinetic + magnetic + electric data).

    kernel_field gives base vectors annihilated by the metric at each
    sample (a constant matrix of columns or a callable point -> matrix).
    """
    n = chart.n_base
    time_slot = chart.time_index

    def kernel_at(arr):
        k = kernel_field(arr) if callable(kernel_field) else kernel_field
        k = np.atleast_2d(np.asarray(k, dtype=float))
        if k.shape[0] != n:
            k = k.T
        return k

    worst = np.zeros(3)
    for p in sample_points:
        arr = chart.as_array(p)
        g_val = np.array(
            [[evaluate(metric_table[i][j], arr) for j in range(n)] for i in range(n)]
        )
        g_grad = np.array(
            [[_grad_map(metric_table[i][j], arr) for j in range(n)] for i in range(n)]
        )
        a_val_grad = [_grad_map(a_i, arr) for a_i in potential_one_form]
        v_grad = _grad_map(potential, arr)
        kernel = kernel_at(arr)
        for col in range(kernel.shape[1]):
            w = kernel[:, col]
            in_kernel = float(np.linalg.norm(g_val @ w))
            if in_kernel > kernel_tol:
                raise NotInKernelError(
                    f"supplied vector is not metric-degenerate (|g w| = {in_kernel:.3e})"
                )
            for j in range(n):
                for k in range(n):
                    c1 = sum(
                        w[i] * (g_grad[i][j][k] + g_grad[k][j][i] - g_grad[k][i][j])
                        for i in range(n)
                    )
                    worst[0] = max(worst[0], abs(c1))
            for j in range(n):
                c2 = sum(
                    w[i]
                    * (
                        a_val_grad[i][j]
                        - a_val_grad[j][i]
                        + (g_grad[i][j][time_slot] if time_slot is not None else 0.0)
                    )
                    for i in range(n)
                )
                worst[1] = max(worst[1], abs(c2))
            c3 = sum(
                w[i]
                * (
                    v_grad[i]
                    + (a_val_grad[i][time_slot] if time_slot is not None else 0.0)
                )
                for i in range(n)
            )
            worst[2] = max(worst[2], abs(c3))
    return {
        "condition_1": float(worst[0]),
        "condition_2": float(worst[1]),
        "condition_3": float(worst[2]),
    }
