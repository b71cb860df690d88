"""Euler-Lagrange integration for regular (possibly regularized) systems.

Accelerations come from a direct linear solve of the velocity Hessian at
every stage; the step is rejected when that matrix is numerically
singular. Fixed-step classical RK4 and an adaptive Dormand-Prince 5(4)
pair are provided. Time on jet charts is integrated as a coordinate with
unit rate, matching the Reeb normalization.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .chart import ChartSpec, ThickenedChart
from .errors import (
    ChartMismatchError,
    SingularHessianError,
    StepUnderflowError,
)
from .expr import evaluate, eval_with_gradient
from .forms import (
    LagrangianSystem,
    lagrangian_energy,
    mixed_hessian,
    sode_residual,
    velocity_hessian,
    velocity_time_hessian,
)

COND_LIMIT = 1e12


@dataclass
class TrajectoryRecord:
    """Times, states and per-step diagnostics of one integration run."""

    times: np.ndarray
    states: np.ndarray
    chart: ChartSpec
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.size and self.states.shape[1] != self.chart.dim:
            raise ChartMismatchError(
                f"states have width {self.states.shape[1]}, chart dimension is {self.chart.dim}"
            )
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise ChartMismatchError("times must be strictly increasing")

    def __len__(self):
        return self.times.size


def _acceleration(sys: LagrangianSystem, state, time_for_error):
    chart = sys.chart
    hess = velocity_hessian(sys, state)
    sigma = np.linalg.svd(hess, compute_uv=False)
    if sigma.size and (sigma[-1] == 0.0 or sigma[0] / sigma[-1] > COND_LIMIT):
        raise SingularHessianError(time_for_error, float(sigma[-1]))
    _, grad = eval_with_gradient(sys.lagrangian, chart.bindings(state))
    rhs = grad[chart.base_indices()] - state[chart.velocity_indices()] @ mixed_hessian(sys, state).T
    if not sys.autonomous:
        rhs = rhs - velocity_time_hessian(sys, state)
    return np.linalg.solve(hess, rhs)


def _state_derivative(sys: LagrangianSystem, state, time_for_error):
    chart = sys.chart
    out = np.zeros(chart.dim)
    out[chart.base_indices()] = state[chart.velocity_indices()]
    out[chart.velocity_indices()] = _acceleration(sys, state, time_for_error)
    if chart.has_time:
        out[chart.time_index] = 1.0
    return out


# Dormand-Prince 5(4) tableau; the first row of weights propagates the
# 5th-order solution, the second provides the embedded 4th-order estimate.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


def _rk4_step(deriv, t, y, h):
    k1 = deriv(t, y)
    k2 = deriv(t + h / 2, y + h / 2 * k1)
    k3 = deriv(t + h / 2, y + h / 2 * k2)
    k4 = deriv(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _dp_step(deriv, t, y, h):
    k = []
    for i in range(7):
        yi = y.copy()
        for j, a in enumerate(_DP_A[i]):
            yi = yi + h * a * k[j]
        k.append(deriv(t + _DP_C[i] * h, yi))
    k = np.array(k)
    y5 = y + h * (_DP_B5 @ k)
    y4 = y + h * (_DP_B4 @ k)
    return y5, y5 - y4


def integrate(
    sys: LagrangianSystem,
    initial_state,
    t_span,
    method="rk45",
    step=1e-3,
    rtol=1e-9,
    atol=1e-12,
) -> TrajectoryRecord:
    """Integrate the Euler-Lagrange flow over t_span.

    rk4 marches with the fixed `step`; rk45 adapts the step from the
    embedded error estimate against rtol/atol. A zero-length span returns
    an empty record.
    """
    chart = sys.chart
    y = chart.as_array(initial_state)
    t0, t_end = float(t_span[0]), float(t_span[1])
    if chart.has_time:
        y[chart.time_index] = t0
    if t_end == t0:
        return TrajectoryRecord(np.zeros(0), np.zeros((0, chart.dim)), chart)

    def deriv(t, state):
        return _state_derivative(sys, state, t)

    times = [t0]
    states = [y.copy()]
    t = t0
    if method == "rk4":
        n_steps = max(1, int(round((t_end - t0) / step)))
        h = (t_end - t0) / n_steps
        for _ in range(n_steps):
            y = _rk4_step(deriv, t, y, h)
            t += h
            times.append(t)
            states.append(y.copy())
    elif method == "rk45":
        h = min(step, t_end - t0)
        while t < t_end:
            h = min(h, t_end - t)
            if h < 16 * np.finfo(float).eps * max(1.0, abs(t)):
                raise StepUnderflowError(f"step size underflow at t={t:.6g}")
            y_new, err = _dp_step(deriv, t, y, h)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
            if err_norm <= 1.0:
                t += h
                y = y_new
                times.append(t)
                states.append(y.copy())
            factor = 0.9 * (err_norm + 1e-300) ** -0.2
            h *= min(5.0, max(0.2, factor))
    else:
        raise ChartMismatchError(f"unknown method {method!r}")

    record = TrajectoryRecord(np.array(times), np.array(states), chart)
    _attach_basic_diagnostics(sys, record)
    return record


def _attach_basic_diagnostics(sys, record):
    if not len(record):
        return
    if sys.autonomous:
        record.diagnostics["energy"] = np.array(
            [lagrangian_energy(sys, s) for s in record.states]
        )
    residuals = []
    for t, s in zip(record.times, record.states):
        residuals.append(sode_residual(_state_derivative(sys, s, t), sys.chart, s))
    record.diagnostics["sode_residual"] = np.array(residuals)


def monitor_invariants(sys: LagrangianSystem, record: TrajectoryRecord, constraints=()):
    """Energy drift, second-order residuals, user constraint values."""
    report = {"steps": len(record)}
    if not len(record):
        report.update({"energy_drift": 0.0, "max_sode_residual": 0.0})
        return report
    if sys.autonomous:
        energy = record.diagnostics.get("energy")
        if energy is None:
            energy = np.array([lagrangian_energy(sys, s) for s in record.states])
            record.diagnostics["energy"] = energy
        report["energy_drift"] = float(np.max(np.abs(energy - energy[0])))
    sode = record.diagnostics.get("sode_residual")
    if sode is None:
        sode = np.array(
            [
                sode_residual(_state_derivative(sys, s, t), sys.chart, s)
                for t, s in zip(record.times, record.states)
            ]
        )
        record.diagnostics["sode_residual"] = sode
    report["max_sode_residual"] = float(np.max(sode))
    for phi in constraints:
        values = np.array([evaluate(phi, s) for s in record.states])
        record.diagnostics[f"constraint:{phi.to_source()}"] = values
        report.setdefault("constraints", {})[phi.to_source()] = float(
            np.max(np.abs(values))
        )
    return report


def compare_projection(record: TrajectoryRecord, thickening: ThickenedChart, reference):
    """Deviation of a thickened-run from the constrained reference.

    Reports the largest off-section norm |(mu, mudot)| along the run and
    the largest gap between the original-chart components and `reference`
    (a callable t -> original state, or a record on matching times).
    """
    if record.chart is not thickening.chart and record.chart != thickening.chart:
        raise ChartMismatchError("record does not live on the thickened chart")
    if not len(record):
        return {"max_off_section": 0.0, "max_reference_deviation": 0.0, "steps": 0}
    off = np.array([thickening.off_section_norm(s) for s in record.states])
    record.diagnostics["off_section_norm"] = off

    restricted = np.array([thickening.restrict_point(s) for s in record.states])
    if callable(reference):
        target = np.array(
            [thickening.original.as_array(reference(t)) for t in record.times]
        )
    else:
        if len(reference) != len(record) or not np.allclose(
            reference.times, record.times, atol=1e-12
        ):
            raise ChartMismatchError("reference record must share the time grid")
        target = reference.states
    deviation = float(np.max(np.abs(restricted - target))) if len(record) else 0.0
    return {
        "max_off_section": float(np.max(off)),
        "max_reference_deviation": deviation,
        "steps": len(record),
    }


def write_trajectory_csv(record: TrajectoryRecord, path):
    """RFC-4180 CSV: header of coordinate names plus diagnostics, one row
    per accepted step."""
    keys = sorted(record.diagnostics)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["time", *record.chart.coords, *keys])
        for i in range(len(record)):
            row = [repr(float(record.times[i]))]
            row.extend(repr(float(v)) for v in record.states[i])
            row.extend(repr(float(record.diagnostics[k][i])) for k in keys)
            writer.writerow(row)
