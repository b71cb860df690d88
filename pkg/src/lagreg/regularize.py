"""Coisotropic thickening of a degenerate Lagrangian system.

The thickened chart adjoins one dual fiber mu_A per degenerate fiber
coordinate. The regularized Lagrangian adds a product correction coupling
the mu-velocities to the fiber velocities; it vanishes identically on the
zero section, restores a nondegenerate velocity Hessian, and embeds the
original system coisotropically. All of this is verified numerically by
the check operations below.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chart import ChartSpec, ThickenedChart, thicken
from .constraints import detect_complete_lift
from .errors import (
    DegenerateAtSampleError,
    DimensionMismatchError,
    HypothesisViolatedError,
    NotCoisotropicError,
    ShapeMismatchError,
    ToleranceExceededError,
)
from .expr import (
    Expression,
    expression_from_node,
    node_mul,
    node_num,
    node_sub,
    node_sum,
    node_var,
    parse,
)
from .forms import (
    LagrangianSystem,
    omega_matrix,
    poincare_cartan,
    reeb_evolution_field,
    velocity_hessian,
)
from .geometry import null_space


# --- input data -------------------------------------------------------------


@dataclass(frozen=True)
class AlmostProductSpec:
    """Coefficients of the projector onto the fiber distribution.

    `coefficients[A][a]` multiplies dx^a in the A-th projector leg; the
    optional `time_leg[A]` is the dt coefficient used on jet charts.
    """

    coefficients: tuple
    time_leg: tuple = None

    @classmethod
    def zero(cls, chart: ChartSpec) -> "AlmostProductSpec":
        r, l = len(chart.fibers), len(chart.leaves)
        zero = parse("0", chart)
        rows = tuple(tuple(zero for _ in range(l)) for _ in range(r))
        time_leg = tuple(zero for _ in range(r)) if chart.has_time else None
        return cls(rows, time_leg)

    def validate(self, chart: ChartSpec):
        r, l = len(chart.fibers), len(chart.leaves)
        if len(self.coefficients) != r or any(len(row) != l for row in self.coefficients):
            raise ShapeMismatchError(
                f"projector table must be {r} fibers x {l} leaves"
            )
        if chart.has_time:
            if self.time_leg is not None and len(self.time_leg) != r:
                raise ShapeMismatchError(f"time leg must have {r} entries")
        elif self.time_leg is not None:
            raise ShapeMismatchError("time leg only applies to jet charts")


@dataclass(frozen=True)
class ConnectionSpec:
    """Splitting of the thickened bundle into vertical and horizontal parts.

    Only the zero and linear modes are offered; a linear connection keeps
    the induced coefficients Gamma = gamma * mu vanishing on the zero
    section structurally, which is what makes the restriction exact.

    gamma_leaf[a][A][B], gamma_fiber[C][A][B] and (jet) gamma_time[A][B]
    multiply mu_B inside the respective horizontal legs.
    """

    mode: str = "zero"
    gamma_leaf: tuple = None
    gamma_fiber: tuple = None
    gamma_time: tuple = None

    @classmethod
    def zero(cls) -> "ConnectionSpec":
        return cls(mode="zero")

    def validate(self, chart: ChartSpec):
        if self.mode not in ("zero", "linear"):
            raise ShapeMismatchError(f"unknown connection mode {self.mode!r}")
        if self.mode == "zero":
            return
        r, l = len(chart.fibers), len(chart.leaves)

        def check(table, shape, label):
            if table is None:
                return
            want_outer, want_mid = shape
            if len(table) != want_outer or any(
                len(mid) != want_mid or any(len(inner) != r for inner in mid)
                for mid in table
            ):
                raise ShapeMismatchError(f"{label} table has the wrong shape")

        check(self.gamma_leaf, (l, r), "gamma_leaf")
        check(self.gamma_fiber, (r, r), "gamma_fiber")
        if self.gamma_time is not None:
            if not chart.has_time:
                raise ShapeMismatchError("gamma_time only applies to jet charts")
            if len(self.gamma_time) != r or any(len(row) != r for row in self.gamma_time):
                raise ShapeMismatchError("gamma_time table has the wrong shape")


@dataclass(frozen=True)
class RegularizedSystem:
    """The thickened system plus everything needed to restrict back."""

    system: LagrangianSystem
    thickening: ThickenedChart
    original: LagrangianSystem
    correction: Expression
    projector: AlmostProductSpec
    connection: ConnectionSpec


# --- the coordinate isomorphism ----------------------------------------------


def tulczyjew_map(point, n_leaves, n_fibers, has_time=False) -> np.ndarray:
    """Reorder thickened tangent coordinates (x, f, mu, xd, fd, mud [, t])
    into leafwise-cotangent coordinates (x, xd, f, fd, mu_f, mu_fd [, t]),
    where the momentum dual to f is the mu-velocity and the momentum dual
    to fd is mu itself."""
    arr = np.asarray(point, dtype=float)
    l, r = n_leaves, n_fibers
    expected = 2 * (l + 2 * r) + (1 if has_time else 0)
    if arr.shape != (expected,):
        raise DimensionMismatchError(
            f"expected coordinate array of length {expected}, got {arr.shape}"
        )
    x = arr[0:l]
    f = arr[l : l + r]
    mu = arr[l + r : l + 2 * r]
    xd = arr[l + 2 * r : 2 * l + 2 * r]
    fd = arr[2 * l + 2 * r : 2 * l + 3 * r]
    mud = arr[2 * l + 3 * r : 2 * l + 4 * r]
    pieces = [x, xd, f, fd, mud, mu]
    if has_time:
        pieces.append(arr[-1:])
    return np.concatenate(pieces)


def tulczyjew_inverse(point, n_leaves, n_fibers, has_time=False) -> np.ndarray:
    arr = np.asarray(point, dtype=float)
    l, r = n_leaves, n_fibers
    expected = 2 * (l + 2 * r) + (1 if has_time else 0)
    if arr.shape != (expected,):
        raise DimensionMismatchError(
            f"expected coordinate array of length {expected}, got {arr.shape}"
        )
    x = arr[0:l]
    xd = arr[l : 2 * l]
    f = arr[2 * l : 2 * l + r]
    fd = arr[2 * l + r : 2 * l + 2 * r]
    mu_f = arr[2 * l + 2 * r : 2 * l + 3 * r]
    mu_fd = arr[2 * l + 3 * r : 2 * l + 4 * r]
    pieces = [x, f, mu_fd, xd, fd, mu_f]
    if has_time:
        pieces.append(arr[-1:])
    return np.concatenate(pieces)


def leaf_involution(point, n_leaves, n_fibers) -> np.ndarray:
    """The restricted canonical involution: swap the fiber velocity with
    the first-leg fiber component, (x, xd, f, fd, vf, vfd) -> (x, f, vf,
    xd, fd, vfd) read in the iterated-tangent ordering."""
    arr = np.asarray(point, dtype=float)
    l, r = n_leaves, n_fibers
    if arr.shape != (2 * l + 4 * r,):
        raise DimensionMismatchError(
            f"expected coordinate array of length {2 * l + 4 * r}, got {arr.shape}"
        )
    x = arr[0:l]
    xd = arr[l : 2 * l]
    f = arr[2 * l : 2 * l + r]
    fd = arr[2 * l + r : 2 * l + 2 * r]
    vf = arr[2 * l + 2 * r : 2 * l + 3 * r]
    vfd = arr[2 * l + 3 * r :]
    return np.concatenate([x, f, vf, xd, fd, vfd])


def tulczyjew_pairing_gap(eta, xi, n_leaves, n_fibers, has_time=False) -> float:
    """|<alpha(eta), xi> - <eta, delta(xi)>'| for a tangent eta of the
    leafwise cotangent and an element xi of the lifted-foliation tangent.

    Both pairings contract only the fiber legs: the left side pairs the
    transported momenta (mu_f, mu_fd) with xi's (vf, vfd); the right side
    pairs (mud, mu) with the swapped legs of xi.
    """
    l, r = n_leaves, n_fibers
    alpha = tulczyjew_map(eta, l, r, has_time)
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (2 * l + 4 * r,):
        raise DimensionMismatchError(
            f"expected xi of length {2 * l + 4 * r}, got {xi.shape}"
        )
    mu_f = alpha[2 * l + 2 * r : 2 * l + 3 * r]
    mu_fd = alpha[2 * l + 3 * r : 2 * l + 4 * r]
    vf = xi[2 * l + 2 * r : 2 * l + 3 * r]
    vfd = xi[2 * l + 3 * r :]
    left = float(mu_f @ vf + mu_fd @ vfd)

    eta = np.asarray(eta, dtype=float)
    mu = eta[l + r : l + 2 * r]
    mud = eta[2 * l + 3 * r : 2 * l + 4 * r]
    swapped = leaf_involution(xi, l, r)
    s_fd = swapped[l + r : l + 2 * r]  # fiber-velocity slot of the swap
    s_vfd = swapped[2 * l + 3 * r :]
    right = float(mud @ s_fd + mu @ s_vfd)
    return abs(left - right)


# --- the correction function --------------------------------------------------


def _linear_in_mu(row, thick_chart):
    """Sum_B row[B] * mu_B as an AST node (row holds Expressions)."""
    if row is None:
        return node_num(0.0)
    terms = []
    for b, mu_name in enumerate(thick_chart.mus):
        terms.append(node_mul(row[b].root, node_var(mu_name)))
    return node_sum(terms)


def thickening_correction(
    projector: AlmostProductSpec, connection: ConnectionSpec, thickening: ThickenedChart
) -> Expression:
    """Assemble the product correction symbolically on the thickened chart.

    Per fiber index A the first leg is the mu-velocity minus the
    connection contributions, the second is the fiber velocity minus the
    projected leaf velocities (minus the time leg on jets); the correction
    is the sum over A of their products.
    """
    original = thickening.original
    thick = thickening.chart
    projector.validate(original)
    connection.validate(original)
    r = len(original.fibers)
    l = len(original.leaves)
    leaf_dots = [node_var(name + "dot") for name in original.leaves]
    fiber_dots = [node_var(name + "dot") for name in original.fibers]

    terms = []
    for a_idx in range(r):
        first = node_var(f"mudot_{a_idx + 1}")
        if connection.mode == "linear":
            if original.has_time and connection.gamma_time is not None:
                first = node_sub(first, _linear_in_mu(connection.gamma_time[a_idx], thick))
            if connection.gamma_leaf is not None:
                for a in range(l):
                    first = node_sub(
                        first,
                        node_mul(
                            leaf_dots[a],
                            _linear_in_mu(connection.gamma_leaf[a][a_idx], thick),
                        ),
                    )
            if connection.gamma_fiber is not None:
                for c in range(r):
                    first = node_sub(
                        first,
                        node_mul(
                            fiber_dots[c],
                            _linear_in_mu(connection.gamma_fiber[c][a_idx], thick),
                        ),
                    )
        second = node_var(original.fibers[a_idx] + "dot")
        if original.has_time and projector.time_leg is not None:
            second = node_sub(second, projector.time_leg[a_idx].root)
        for a in range(l):
            second = node_sub(
                second, node_mul(leaf_dots[a], projector.coefficients[a_idx][a].root)
            )
        terms.append(node_mul(first, second))
    return expression_from_node(node_sum(terms), thick)


def regularized_lagrangian(
    sys: LagrangianSystem,
    projector: AlmostProductSpec = None,
    connection: ConnectionSpec = None,
    sample_points=None,
    assume_lift=False,
) -> RegularizedSystem:
    """Extend L by the thickening correction.

    The complete-lift hypothesis is verified on `sample_points` unless the
    caller declares the fiber split themselves (`assume_lift`). Regular
    systems come back unchanged (rank zero thickening).
    """
    if not assume_lift:
        if sample_points is None:
            raise HypothesisViolatedError(
                "provide sample points for the complete-lift check or pass assume_lift=True"
            )
        report = detect_complete_lift(sys, sample_points)
        if not report.is_complete_lift:
            raise HypothesisViolatedError(
                "kernel is not the lift of a base distribution: "
                + "; ".join(report.evidence.get("reasons", []))
            )
        detected = report.evidence.get("rank", 0)
        if detected != len(sys.chart.fibers):
            raise HypothesisViolatedError(
                f"kernel has rank {detected} but the chart declares "
                f"{len(sys.chart.fibers)} fiber coordinate(s)"
            )
        base_distribution = report.evidence.get("base_distribution")
        if base_distribution is not None and base_distribution.size:
            leaf_rows = base_distribution[: len(sys.chart.leaves), :]
            misalignment = float(np.max(np.abs(leaf_rows))) if leaf_rows.size else 0.0
            if misalignment > 1e-6:
                raise HypothesisViolatedError(
                    "declared fiber coordinates are not adapted to the kernel "
                    f"(leaf-direction residual {misalignment:.2e})"
                )
    thickening = thicken(sys.chart)
    if projector is None:
        projector = AlmostProductSpec.zero(sys.chart)
    if connection is None:
        connection = ConnectionSpec.zero()
    if len(sys.chart.fibers) == 0:
        extended = Expression(sys.lagrangian.root, thickening.chart, sys.lagrangian.names)
        return RegularizedSystem(
            LagrangianSystem(thickening.chart, extended, sys.autonomous),
            thickening,
            sys,
            parse("0", thickening.chart),
            projector,
            connection,
        )
    correction = thickening_correction(projector, connection, thickening)
    combined = node_sum([sys.lagrangian.root, correction.root])
    extended = expression_from_node(combined, thickening.chart)
    return RegularizedSystem(
        LagrangianSystem(thickening.chart, extended, sys.autonomous),
        thickening,
        sys,
        correction,
        projector,
        connection,
    )


# --- verification on the zero section ----------------------------------------


def restriction_check(reg: RegularizedSystem, sample_points, value_tol=1e-12, form_tol=1e-9):
    """The extension restricts exactly: values agree on the zero section and
    the momentum 1-form matches along the original coordinates."""
    from .expr import evaluate

    thick = reg.thickening
    worst_value = 0.0
    worst_form = 0.0
    for p in sample_points:
        original_arr = reg.original.chart.as_array(p)
        lifted = thick.embed_point(original_arr)
        value_gap = abs(
            evaluate(reg.system.lagrangian, lifted)
            - evaluate(reg.original.lagrangian, original_arr)
        )
        worst_value = max(worst_value, value_gap)
        theta_thick = poincare_cartan(reg.system, lifted).components
        theta_orig = poincare_cartan(reg.original, original_arr).components
        form_gap = float(
            np.max(np.abs(theta_thick[list(thick.embed_indices)] - theta_orig))
        )
        worst_form = max(worst_form, form_gap)
    report = {
        "value_residual": worst_value,
        "form_residual": worst_form,
        "samples": len(list(sample_points)),
        "passed": worst_value <= value_tol and worst_form <= form_tol,
    }
    if not report["passed"]:
        which, res = ("restriction value", worst_value)
        if worst_form > form_tol:
            which, res = ("restriction 1-form", worst_form)
        raise ToleranceExceededError(which, res, detail=report)
    return report


def _shell_offsets(thickening, radius):
    r = thickening.rank
    if r == 0:
        return np.zeros(0), np.zeros(0)
    pattern = np.array([1.0 if k % 2 == 0 else -1.0 for k in range(r)])
    return radius * pattern / np.sqrt(2 * r), radius * pattern[::-1] / np.sqrt(2 * r)


def verify_regularity(
    reg: RegularizedSystem, sample_points, tol=1e-9, shell_radii=(), raise_on_failure=True
):
    """Nondegeneracy of the extended form on the zero section.

    Autonomous: the 2-form has full rank at every lifted sample. Jet: the
    stacked (2-form, dt) matrix has trivial kernel and the Reeb problem is
    solvable with unit time component. Optional mu-shells probe how far
    off the zero section regularity persists; the largest fully regular
    shell radius is reported.
    """
    thick = reg.thickening
    sys = reg.system
    dim = sys.chart.dim
    tau = None
    if not sys.autonomous:
        tau = np.zeros(dim)
        tau[sys.chart.time_index] = 1.0

    def regular_at(arr):
        omega = omega_matrix(sys, arr)
        if sys.autonomous:
            sigma = np.linalg.svd(omega, compute_uv=False)
            return float(sigma[-1]), sigma[-1] > tol
        stacked = np.vstack([omega, tau[np.newaxis, :]])
        sigma = np.linalg.svd(stacked, compute_uv=False)
        if sigma[-1] <= tol:
            return float(sigma[-1]), False
        reeb = reeb_evolution_field(omega, tau)
        ok = reeb.kernel_dim == 0 and abs(reeb.solution[sys.chart.time_index] - 1.0) <= 1e-9
        return float(sigma[-1]), ok

    smallest = np.inf
    lifted_points = [thick.embed_point(reg.original.chart.as_array(p)) for p in sample_points]
    for arr in lifted_points:
        sigma_min, ok = regular_at(arr)
        smallest = min(smallest, sigma_min)
        if not ok:
            if raise_on_failure:
                raise DegenerateAtSampleError(sys.chart.bindings(arr), sigma_min)
            return {
                "smallest_singular_value": sigma_min,
                "passed": False,
                "largest_regular_shell": 0.0,
                "samples": len(lifted_points),
            }

    largest_shell = 0.0
    for radius in sorted(shell_radii):
        mu_off, mudot_off = _shell_offsets(thick, radius)
        all_ok = True
        for p in sample_points:
            arr = thick.embed_point(reg.original.chart.as_array(p), mu=mu_off, mudot=mudot_off)
            _, ok = regular_at(arr)
            if not ok:
                all_ok = False
                break
        if not all_ok:
            break
        largest_shell = radius
    return {
        "smallest_singular_value": float(smallest),
        "passed": True,
        "largest_regular_shell": largest_shell,
        "samples": len(lifted_points),
    }


def coisotropy_check(reg: RegularizedSystem, sample_points, tol=1e-9):
    """The embedded tangent space must contain its own omega-orthogonal,
    whose dimension equals twice the number of fibers.

    On jet charts the orthogonal is taken inside ker dt, which removes the
    Reeb direction (tangent to the embedding anyway) from the count.
    """
    thick = reg.thickening
    sys = reg.system
    embed = list(thick.embed_indices)
    expected_dim = 2 * thick.rank
    worst = 0.0
    for p in sample_points:
        arr = thick.embed_point(reg.original.chart.as_array(p))
        omega = omega_matrix(sys, arr)
        rows = omega[embed, :]
        if not sys.autonomous:
            tau = np.zeros(sys.chart.dim)
            tau[sys.chart.time_index] = 1.0
            rows = np.vstack([rows, tau[np.newaxis, :]])
        orthogonal = null_space(rows)
        if orthogonal.shape[1] != expected_dim:
            raise NotCoisotropicError(0.0, orthogonal.shape[1])
        outside = np.delete(np.arange(sys.chart.dim), embed)
        if outside.size and orthogonal.size:
            residual = float(np.max(np.abs(orthogonal[outside, :])))
        else:
            residual = 0.0
        worst = max(worst, residual)
        if residual > tol:
            raise NotCoisotropicError(residual, orthogonal.shape[1])
    return {
        "containment_residual": worst,
        "orthogonal_dimension": expected_dim,
        "samples": len(list(sample_points)),
        "passed": True,
    }


# --- the non-Lagrangian thickened form (negative control) ---------------------


def hamiltonian_thickening_form(reg: RegularizedSystem):
    """The thickened 2-form inherited from the Hamiltonian-side embedding
    (simplest projector legs): base form plus d(mud) ^ df + d(mu) ^ d(fd).

    It is closed but pairs the mu-legs with the wrong velocities, so the
    vertical-endomorphism symmetry check fails with opposite unit entries.
    """
    thick = reg.thickening
    sys = reg.original
    chart = thick.chart
    embed = list(thick.embed_indices)

    fiber_positions = [chart.index[name] for name in thick.original.fibers]
    fiberdot_positions = [chart.index[name + "dot"] for name in thick.original.fibers]

    def field(point):
        arr = chart.as_array(point)
        base = omega_matrix(sys, arr[embed])
        out = np.zeros((chart.dim, chart.dim))
        out[np.ix_(embed, embed)] = base
        for a in range(thick.rank):
            mu = thick.mu_positions[a]
            mud = thick.mudot_positions[a]
            f = fiber_positions[a]
            fd = fiberdot_positions[a]
            out[mud, f] += 1.0
            out[f, mud] -= 1.0
            out[mu, fd] += 1.0
            out[fd, mu] -= 1.0
        return out

    return field
