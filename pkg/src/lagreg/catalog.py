"""Built-in scenarios wiring worked examples to the pipeline.

Each scenario fixes a chart, a Lagrangian (possibly assembled from metric
data), regularization defaults, the properties the pipeline is expected
to reproduce, and a closed-form reference flow where one exists. The
catalog doubles as the fixture set of the regression suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chart import ChartSpec
from .errors import UnknownScenarioError
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
from .forms import LagrangianSystem

SCENARIO_NAMES = (
    "cyclic_free_particle",
    "affine_lagrangian",
    "degenerate_metric_particle",
    "degenerate_metric_timedep",
    "harmonic_oscillator",
)


@dataclass(frozen=True)
class MetricData:
    """Kinetic/magnetic/electric coefficient tables plus the degenerate
    directions of the metric (columns over the base coordinates)."""

    g: tuple  # n x n Expressions
    a: tuple  # n Expressions
    v: Expression
    kernel: np.ndarray


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    system: LagrangianSystem
    metric: MetricData = None
    expected: dict = field(default_factory=dict)
    reference_factory: object = None  # initial original-chart array -> (t -> state)
    default_initial: dict = field(default_factory=dict)
    sample_box: tuple = (-1.0, 1.0)


def lagrangian_from_metric(chart: ChartSpec, g_rows, a_row, v_expr) -> Expression:
    """0.5 g_ij v^i v^j + A_i v^i - V assembled symbolically."""
    n = chart.n_base
    vels = [node_var(name) for name in chart.velocity_names]
    terms = []
    for i in range(n):
        for j in range(n):
            terms.append(
                node_mul(
                    node_num(0.5),
                    node_mul(g_rows[i][j].root, node_mul(vels[i], vels[j])),
                )
            )
    for i in range(n):
        terms.append(node_mul(a_row[i].root, vels[i]))
    body = node_sub(node_sum(terms), v_expr.root)
    return expression_from_node(body, chart)


def sample_points(chart: ChartSpec, count, rng, box=(-1.0, 1.0)) -> list:
    lo, hi = box
    return [rng.uniform(lo, hi, size=chart.dim) for _ in range(count)]


def zero_velocity_grid(chart: ChartSpec, n_per_axis=21, box=(-1.0, 1.0)) -> list:
    """Grid over the base coordinates with all velocities zero."""
    axes = [np.linspace(box[0], box[1], n_per_axis) for _ in range(chart.n_base)]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = []
    for idx in np.ndindex(*[n_per_axis] * chart.n_base):
        arr = np.zeros(chart.dim)
        for k in range(chart.n_base):
            arr[k] = mesh[k][idx]
        points.append(arr)
    return points


# --- reference flows ----------------------------------------------------------


def _free_reference(chart):
    def factory(initial):
        initial = chart.as_array(initial)
        base0 = initial[chart.base_indices()].copy()
        vel0 = initial[chart.velocity_indices()].copy()

        def state(t):
            out = initial.copy()
            out[chart.base_indices()] = base0 + t * vel0
            return out

        return state

    return factory


def _harmonic_reference(chart):
    def factory(initial):
        initial = chart.as_array(initial)
        q0 = initial[0]
        v0 = initial[1]

        def state(t):
            return np.array([q0 * math.cos(t) + v0 * math.sin(t),
                             -q0 * math.sin(t) + v0 * math.cos(t)])

        return state

    return factory


def _metric_particle_reference(chart, potential):
    """x-leg dynamics for g = dx^2 with V = V(x); the fiber leg is a free
    gauge direction that the zero connection leaves inertial."""

    def factory(initial):
        initial = chart.as_array(initial)
        x0, f0, xd0, fd0 = initial

        if potential == "half_x2":

            def state(t):
                return np.array(
                    [
                        x0 * math.cos(t) + xd0 * math.sin(t),
                        f0 + fd0 * t,
                        -x0 * math.sin(t) + xd0 * math.cos(t),
                        fd0,
                    ]
                )

        else:

            def state(t):
                return np.array([x0 + xd0 * t, f0 + fd0 * t, xd0, fd0])

        return state

    return factory


def _timedep_reference(chart):
    """Closed form for xddot = -sin(t) from t0 = 0."""

    def factory(initial):
        initial = chart.as_array(initial)
        x0, f0, xd0, fd0 = initial[0], initial[1], initial[2], initial[3]

        def state(t):
            return np.array(
                [
                    x0 + xd0 * t + math.sin(t) - t,
                    f0 + fd0 * t,
                    xd0 + math.cos(t) - 1.0,
                    fd0,
                    t,
                ]
            )

        return state

    return factory


# --- scenario constructors -----------------------------------------------------


def _cyclic_free_particle():
    chart = ChartSpec(leaves=("x",), fibers=("f",))
    system = LagrangianSystem(chart, parse("0.5*xdot^2", chart))
    return Scenario(
        name="cyclic_free_particle",
        description="free particle with one cyclic coordinate; kernel rank 2",
        system=system,
        expected={
            "kernel_rank": 2,
            "complete_lift": True,
            "consistent": True,
            "hessian_rank": 1,
            "regular": False,
        },
        reference_factory=_free_reference(chart),
        default_initial={"x": 0.0, "f": 0.0, "xdot": 1.0, "fdot": 0.0},
    )


def _affine_lagrangian(alpha="zero", potential="quadratic"):
    chart = ChartSpec(leaves=("x",), fibers=("f",))
    potentials = {"quadratic": "0.5*(x^2 + f^2)", "linear": "x", "zero": "0"}
    if potential not in potentials:
        raise UnknownScenarioError(f"affine_lagrangian potential {potential}", potentials)
    v_src = potentials[potential]
    if alpha == "zero":
        source = f"-({v_src})"
        expected = {
            "kernel_rank": 4,
            "complete_lift": True,
            "consistent": potential == "zero",
            "hessian_rank": 0,
            "regular": False,
        }
    elif alpha == "f_dx":
        source = f"f*xdot - ({v_src})"
        expected = {
            "kernel_rank": 2,
            "complete_lift": False,
            "consistent": True,
            "hessian_rank": 0,
            "regular": False,
        }
    else:
        raise UnknownScenarioError(f"affine_lagrangian alpha {alpha}", ("zero", "f_dx"))
    system = LagrangianSystem(chart, parse(source, chart))
    return Scenario(
        name="affine_lagrangian",
        description="velocity-affine Lagrangian; exercises the constraint algorithm",
        system=system,
        expected=expected,
        default_initial={"x": 0.0, "f": 0.0, "xdot": 0.0, "fdot": 0.0},
    )


def _degenerate_metric_particle(a_form="zero", potential="half_x2"):
    chart = ChartSpec(leaves=("x",), fibers=("f",))
    g_rows = tuple(
        tuple(parse(src, chart) for src in row) for row in (("1", "0"), ("0", "0"))
    )
    a_sources = {"zero": ("0", "0"), "x_df": ("0", "x")}
    if a_form not in a_sources:
        raise UnknownScenarioError(f"degenerate_metric_particle A {a_form}", a_sources)
    potentials = {"zero": "0", "half_x2": "0.5*x^2", "half_f2": "0.5*f^2"}
    if potential not in potentials:
        raise UnknownScenarioError(
            f"degenerate_metric_particle potential {potential}", potentials
        )
    a_row = tuple(parse(src, chart) for src in a_sources[a_form])
    v_expr = parse(potentials[potential], chart)
    metric = MetricData(g=g_rows, a=a_row, v=v_expr, kernel=np.array([[0.0], [1.0]]))
    lagrangian = lagrangian_from_metric(chart, g_rows, a_row, v_expr)
    consistent = a_form == "zero" and potential in ("zero", "half_x2")
    system = LagrangianSystem(chart, lagrangian)
    return Scenario(
        name="degenerate_metric_particle",
        description="kinetic term of the degenerate metric dx^2, optional A and V",
        system=system,
        metric=metric,
        expected={
            "kernel_rank": 2,
            "complete_lift": True,
            "consistent": consistent,
            "hessian_rank": 1,
            "regular": False,
            "failing_condition": None if consistent else (2 if a_form == "x_df" else 3),
        },
        reference_factory=_metric_particle_reference(chart, potential)
        if consistent
        else None,
        default_initial={"x": 1.0, "f": 0.0, "xdot": 0.0, "fdot": 0.5},
    )


def _degenerate_metric_timedep():
    chart = ChartSpec(leaves=("x",), fibers=("f",), has_time=True)
    g_rows = tuple(
        tuple(parse(src, chart) for src in row) for row in (("1", "0"), ("0", "0"))
    )
    a_row = (parse("0", chart), parse("0", chart))
    v_expr = parse("x*sin(t)", chart)
    metric = MetricData(g=g_rows, a=a_row, v=v_expr, kernel=np.array([[0.0], [1.0]]))
    system = LagrangianSystem(
        chart, lagrangian_from_metric(chart, g_rows, a_row, v_expr), autonomous=False
    )
    return Scenario(
        name="degenerate_metric_timedep",
        description="time-dependent potential over the degenerate metric dx^2",
        system=system,
        metric=metric,
        expected={
            "kernel_rank": 2,
            "complete_lift": True,
            "consistent": True,
            "hessian_rank": 1,
            "regular": False,
            "failing_condition": None,
        },
        reference_factory=_timedep_reference(chart),
        default_initial={
            "x": 0.0,
            "f": 0.0,
            "xdot": 1.0,
            "fdot": 0.25,
            "t": 0.0,
        },
    )


def _harmonic_oscillator():
    chart = ChartSpec(leaves=("q",))
    system = LagrangianSystem(chart, parse("0.5*(qdot^2 - q^2)", chart))
    return Scenario(
        name="harmonic_oscillator",
        description="regular control scenario",
        system=system,
        expected={
            "kernel_rank": 0,
            "complete_lift": True,
            "consistent": True,
            "hessian_rank": 1,
            "regular": True,
        },
        reference_factory=_harmonic_reference(chart),
        default_initial={"q": 1.0, "qdot": 0.0},
    )


_BUILDERS = {
    "cyclic_free_particle": _cyclic_free_particle,
    "affine_lagrangian": _affine_lagrangian,
    "degenerate_metric_particle": _degenerate_metric_particle,
    "degenerate_metric_timedep": _degenerate_metric_timedep,
    "harmonic_oscillator": _harmonic_oscillator,
}


def load_scenario(name, **variant) -> Scenario:
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise UnknownScenarioError(name, SCENARIO_NAMES) from None
    return builder(**variant)


def scenario_descriptions():
    return {name: _BUILDERS[name]().description for name in SCENARIO_NAMES}
