"""Pointwise tensor algebra on tangent and jet charts.

Everything here is local: a tensor is a numpy array in the chart basis at
a sampled point, and a vector field is a closure point -> array. Exact
derivatives of expression data come from dual numbers; derivatives of
numerically-defined fields use central finite differences with one
Richardson extrapolation (configurable step).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chart import ChartSpec
from .errors import (
    DimensionMismatchError,
    PreconditionError,
    SingularPairingError,
    ToleranceExceededError,
)
from .expr import eval_with_gradient, evaluate

RANK_RTOL = 1e-9  # singular values below RANK_RTOL * sigma_max count as zero


@dataclass
class TensorAtPoint:
    """Components of a tensor in the chart basis at a base point."""

    kind: str  # "vector" | "covector" | "endomorphism" | "two_form"
    components: np.ndarray
    base_point: dict = field(default_factory=dict)

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=float)


def two_form_at(matrix, base_point=None) -> TensorAtPoint:
    """Skew-symmetrize and wrap a 2-form matrix; rejects gross asymmetry."""
    m = np.asarray(matrix, dtype=float)
    asym = float(np.max(np.abs(m + m.T))) if m.size else 0.0
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if asym > 1e-12 * scale:
        raise ToleranceExceededError("two-form skew-symmetry", asym)
    return TensorAtPoint("two_form", 0.5 * (m - m.T), base_point or {})


@dataclass
class SubspaceBasis:
    """Columns spanning a subspace at a common base point."""

    matrix: np.ndarray
    rank: int = None

    def __post_init__(self):
        self.matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if self.rank is None:
            self.rank = self.matrix.shape[1]
        if self.matrix.shape[1]:
            norms = np.linalg.norm(self.matrix, axis=0)
            if np.any(norms == 0.0):
                raise PreconditionError("basis columns nonzero", 0.0)
            normalized = self.matrix / norms
            smallest = np.linalg.svd(normalized, compute_uv=False)[-1]
            if smallest <= 1e-10:
                raise PreconditionError("basis columns independent", float(smallest))

    @property
    def dimension(self):
        return self.matrix.shape[1]

    def orthonormal(self) -> np.ndarray:
        if self.matrix.shape[1] == 0:
            return self.matrix
        q, _ = np.linalg.qr(self.matrix)
        return q[:, : self.matrix.shape[1]]


def matrix_rank(matrix, rtol=RANK_RTOL) -> int:
    m = np.asarray(matrix, dtype=float)
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def null_space(matrix, rtol=RANK_RTOL) -> np.ndarray:
    """Orthonormal kernel basis in deterministic (singular-vector) order."""
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    if m.shape[1] == 0:
        return np.zeros((0, 0))
    u, s, vh = np.linalg.svd(m)
    if s.size == 0 or s[0] == 0.0:
        return vh.T.copy()
    rank = int(np.sum(s > rtol * s[0]))
    return vh[rank:].T.copy()


def image_projector(matrix, rtol=RANK_RTOL) -> np.ndarray:
    m = np.asarray(matrix, dtype=float)
    u, s, _ = np.linalg.svd(m)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((m.shape[0], m.shape[0]))
    rank = int(np.sum(s > rtol * s[0]))
    basis = u[:, :rank]
    return basis @ basis.T


# --- lifts and canonical tensors ----------------------------------------


def vertical_lift(chart: ChartSpec, base_components, point) -> TensorAtPoint:
    """Lift of a base vector to the fiber: zero base legs, the vector on
    the velocity legs."""
    base_components = np.asarray(base_components, dtype=float)
    if base_components.shape != (chart.n_base,):
        raise DimensionMismatchError(
            f"expected {chart.n_base} base components, got {base_components.shape}"
        )
    arr = chart.as_array(point)
    out = np.zeros(chart.dim)
    out[chart.velocity_indices()] = base_components
    return TensorAtPoint("vector", out, chart.bindings(arr))


def complete_lift(chart: ChartSpec, base_field, point) -> TensorAtPoint:
    """Lift of a base vector field X^i(q) (time-dependent on jet charts):
    components (X^i, v^k dX^i/dq^k [+ dX^i/dt])."""
    if len(base_field) != chart.n_base:
        raise DimensionMismatchError(
            f"expected {chart.n_base} component expressions, got {len(base_field)}"
        )
    arr = chart.as_array(point)
    bindings = chart.bindings(arr)
    velocities = arr[chart.velocity_indices()]
    out = np.zeros(chart.dim)
    for i, component in enumerate(base_field):
        value, grad = eval_with_gradient(component, bindings)
        out[i] = value
        rate = float(grad[: chart.n_base] @ velocities)
        if chart.has_time:
            rate += float(grad[chart.time_index])
        out[chart.velocity_index_of(i)] = rate
    return TensorAtPoint("vector", out, bindings)


def vertical_endomorphism(chart: ChartSpec, point) -> TensorAtPoint:
    """Canonical (1,1)-tensor sending base directions to velocity
    directions; on jet charts each column picks up the -v^i dt leg."""
    arr = chart.as_array(point)
    n = chart.n_base
    s = np.zeros((chart.dim, chart.dim))
    for i in range(n):
        s[n + i, i] = 1.0
    if chart.has_time:
        s[n : 2 * n, chart.time_index] = -arr[chart.velocity_indices()]
    return TensorAtPoint("endomorphism", s, chart.bindings(arr))


def liouville_field(chart: ChartSpec, point) -> TensorAtPoint:
    """Generator of fiber dilations: v^j on the velocity legs."""
    if chart.has_time:
        raise DimensionMismatchError("the dilation field is defined on tangent charts")
    arr = chart.as_array(point)
    out = np.zeros(chart.dim)
    out[chart.velocity_indices()] = arr[chart.velocity_indices()]
    return TensorAtPoint("vector", out, chart.bindings(arr))


# --- finite differences for numerically-defined fields -------------------


def _richardson_derivative(f, h):
    """d/dt f(t) at t=0, central differences with one Richardson step."""

    def central(step):
        return (f(step) - f(-step)) / (2.0 * step)

    coarse = central(h)
    fine = central(h / 2.0)
    return (4.0 * fine - coarse) / 3.0


def directional_jacobian(field, point, direction, h=1e-4):
    """d/dt field(point + t * direction) at t=0."""
    point = np.asarray(point, dtype=float)
    direction = np.asarray(direction, dtype=float)
    return _richardson_derivative(lambda t: np.asarray(field(point + t * direction)), h)


def lie_bracket(field_u, field_v, point, h=1e-4):
    """[U, V] = DV.U - DU.V with finite-difference Jacobian actions."""
    u = np.asarray(field_u(point), dtype=float)
    v = np.asarray(field_v(point), dtype=float)
    dv_u = directional_jacobian(field_v, point, u, h)
    du_v = directional_jacobian(field_u, point, v, h)
    return dv_u - du_v


# --- tangent / jet structure axioms --------------------------------------


def _dilation_pullback(chart, s_field, point, t):
    """(flow_t)^* S for the dilation flow (q, v) -> (q, e^t v)."""
    arr = np.array(point, dtype=float)
    scale = np.ones(chart.dim)
    scale[chart.velocity_indices()] = np.exp(t)
    moved = arr * scale
    s_there = np.asarray(s_field(moved), dtype=float)
    return (s_there * scale[np.newaxis, :]) / scale[:, np.newaxis]


def _nijenhuis_residual(s_field, point, dim, h, skip_index=None):
    """Max component of [S,S]_FN on coordinate field pairs; derivative
    terms vanish identically for constant S.

    On jet charts the bracket is proportional to dt wedge S by
    construction, so pairs involving the time axis are excluded there
    (`skip_index`); only the semi-basic part must vanish.
    """
    s0 = np.asarray(s_field(point), dtype=float)
    worst = 0.0
    for a in range(dim):
        if a == skip_index:
            continue
        e_a = np.zeros(dim)
        e_a[a] = 1.0
        s_e_a = lambda p, a=a: np.asarray(s_field(p))[:, a]
        for b in range(a + 1, dim):
            if b == skip_index:
                continue
            e_b = np.zeros(dim)
            e_b[b] = 1.0
            s_e_b = lambda p, b=b: np.asarray(s_field(p))[:, b]
            term = lie_bracket(s_e_a, s_e_b, point, h)
            # [Se_a, e_b] = -d(Se_a)/d e_b since coordinate fields are constant
            term -= s0 @ (-directional_jacobian(s_e_a, point, e_b, h))
            term -= s0 @ (directional_jacobian(s_e_b, point, e_a, h))
            worst = max(worst, float(np.max(np.abs(term))))
    return worst


def verify_tangent_structure(
    chart: ChartSpec,
    sample_points,
    h=1e-4,
    tol=1e-8,
    s_field=None,
    raise_on_failure=True,
):
    """Check the tangent-structure axioms pointwise at every sample.

    Autonomous charts: rank S = n, S^2 = 0, the dilation field lies in
    Im S, the Lie derivative of S along the dilation flow equals -S, and
    the Nijenhuis bracket of S vanishes. Jet charts: S^2 = 0, rank S = n,
    dt annihilates Im S. A custom `s_field` may replace the canonical
    tensor (used by negative controls).
    """
    samples = [chart.as_array(p) for p in sample_points]
    if not samples:
        raise PreconditionError("at least one sample point", 0.0)
    if s_field is None:
        s_field = lambda p: vertical_endomorphism(chart, p).components

    report = {
        "samples": len(samples),
        "jet": chart.has_time,
        "rank_defect": 0,
        "s_squared_residual": 0.0,
        "nijenhuis_residual": 0.0,
    }
    if chart.has_time:
        report["dt_of_image_residual"] = 0.0
    else:
        report["dilation_in_image_residual"] = 0.0
        report["lie_derivative_residual"] = 0.0
        report["image_equals_kernel_residual"] = 0.0

    for arr in samples:
        s = np.asarray(s_field(arr), dtype=float)
        report["s_squared_residual"] = max(
            report["s_squared_residual"], float(np.max(np.abs(s @ s)))
        )
        report["rank_defect"] = max(
            report["rank_defect"], abs(matrix_rank(s) - chart.n_base)
        )
        report["nijenhuis_residual"] = max(
            report["nijenhuis_residual"], _nijenhuis_residual(s_field, arr, chart.dim, h)
        )
        if chart.has_time:
            report["dt_of_image_residual"] = max(
                report["dt_of_image_residual"],
                float(np.max(np.abs(s[chart.time_index, :]))),
            )
        else:
            delta = liouville_field(chart, arr).components
            proj = image_projector(s)
            report["dilation_in_image_residual"] = max(
                report["dilation_in_image_residual"],
                float(np.linalg.norm(delta - proj @ delta)),
            )
            kernel = null_space(s)
            ker_proj = kernel @ kernel.T
            report["image_equals_kernel_residual"] = max(
                report["image_equals_kernel_residual"],
                float(np.max(np.abs(proj - ker_proj))),
            )
            lie = _richardson_derivative(
                lambda t: _dilation_pullback(chart, s_field, arr, t), h
            )
            report["lie_derivative_residual"] = max(
                report["lie_derivative_residual"], float(np.max(np.abs(lie + s)))
            )

    checks = [(k, v) for k, v in report.items() if k.endswith("residual")]
    checks.append(("rank_defect", float(report["rank_defect"])))
    worst = max(checks, key=lambda kv: kv[1])
    report["passed"] = worst[1] <= tol
    if raise_on_failure and not report["passed"]:
        raise ToleranceExceededError(worst[0], worst[1], detail=report)
    return report


# --- the Lagrangian complement construction ------------------------------


def lagrangian_complement(omega, l_basis, w_basis, j_matrix, tol=1e-10) -> SubspaceBasis:
    """Deform a J-invariant complement W of an isotropic L into an
    isotropic, J-invariant complement.

    Each w gains the correction l_w = -1/2 phi^{-1}(i_w omega|_W) where
    phi(l) = (i_l omega)|_W pairs L with W. All claimed output properties
    are asserted before returning.
    """
    omega = np.asarray(omega, dtype=float)
    l_mat = l_basis.matrix if isinstance(l_basis, SubspaceBasis) else np.asarray(l_basis, float)
    w_mat = w_basis.matrix if isinstance(w_basis, SubspaceBasis) else np.asarray(w_basis, float)
    j = np.asarray(j_matrix, dtype=float)
    n = omega.shape[0]
    half = l_mat.shape[1]

    if l_mat.shape[1] + w_mat.shape[1] != n or 2 * half != n:
        raise PreconditionError("L isotropic of half the ambient dimension", float(n))
    sigma = np.linalg.svd(omega, compute_uv=False)
    if sigma[-1] <= tol * sigma[0]:
        raise PreconditionError("omega nondegenerate", float(sigma[-1]))
    iso = float(np.max(np.abs(l_mat.T @ omega @ l_mat)))
    if iso > tol:
        raise PreconditionError("L isotropic", iso)
    nil = float(np.max(np.abs(j @ j)))
    if nil > tol:
        raise PreconditionError("J nilpotent (J^2 = 0)", nil)
    compat = float(np.max(np.abs(j.T @ omega + omega @ j)))
    if compat > tol:
        raise PreconditionError("omega(Jx, y) = omega(Jy, x)", compat)
    for name, basis in (("J(L) inside L", l_mat), ("J(W) inside W", w_mat)):
        proj = basis @ np.linalg.pinv(basis)
        residual = float(np.max(np.abs(j @ basis - proj @ (j @ basis)))) if basis.size else 0.0
        if residual > tol:
            raise PreconditionError(name, residual)

    # phi[k, i] = omega(l_i, w_k); solve phi a_j = -1/2 omega(w_j, w_k).
    pairing = np.einsum("ai,ab,bk->ki", l_mat, omega, w_mat)
    sigma = np.linalg.svd(pairing, compute_uv=False)
    if sigma.size == 0 or sigma[-1] <= tol * max(1.0, sigma[0]):
        raise SingularPairingError(
            f"pairing between L and W is singular (smallest singular value "
            f"{0.0 if sigma.size == 0 else float(sigma[-1]):.3e})"
        )
    rhs = -0.5 * np.einsum("aj,ab,bk->kj", w_mat, omega, w_mat)
    coefficients = np.linalg.solve(pairing, rhs)
    deformed = w_mat + l_mat @ coefficients

    out_iso = float(np.max(np.abs(deformed.T @ omega @ deformed)))
    if out_iso > tol:
        raise ToleranceExceededError("deformed complement isotropic", out_iso)
    proj = deformed @ np.linalg.pinv(deformed)
    j_inv = float(np.max(np.abs(j @ deformed - proj @ (j @ deformed))))
    if j_inv > tol:
        raise ToleranceExceededError("deformed complement J-invariant", j_inv)
    if matrix_rank(np.hstack([l_mat, deformed])) != n:
        raise ToleranceExceededError("deformed complement complementary to L", 1.0)
    return SubspaceBasis(deformed)
