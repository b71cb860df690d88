"""JSON run configuration: charts, Lagrangians, regularization data,
sampling and integration settings.

A config either names a catalog scenario (optionally with variant
options) or declares a chart plus a Lagrangian source string / metric
tables. Every numeric choice that influences sampling is derived from the
seed, so identical configs produce identical reports byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .catalog import (
    MetricData,
    Scenario,
    lagrangian_from_metric,
    load_scenario,
)
from .chart import ChartSpec
from .errors import ConfigError, LagregError, UnknownScenarioError
from .expr import parse
from .forms import LagrangianSystem
from .regularize import AlmostProductSpec, ConnectionSpec


@dataclass
class SamplingSpec:
    count: int = 20
    box: tuple = (-1.0, 1.0)
    seed: int = 0


@dataclass
class IntegrationSpec:
    method: str = "rk45"
    step: float = 1e-3
    span: tuple = (0.0, 10.0)
    rtol: float = 1e-9
    atol: float = 1e-12
    initial_state: dict = None


@dataclass
class RunConfig:
    scenario: Scenario = None
    system: LagrangianSystem = None
    metric: MetricData = None
    projector: AlmostProductSpec = None
    connection: ConnectionSpec = None
    sampling: SamplingSpec = field(default_factory=SamplingSpec)
    integration: IntegrationSpec = field(default_factory=IntegrationSpec)
    force: bool = False

    @property
    def rng(self):
        return np.random.default_rng(self.sampling.seed)

    def initial_state(self):
        if self.integration.initial_state is not None:
            return self.integration.initial_state
        if self.scenario is not None and self.scenario.default_initial:
            return self.scenario.default_initial
        raise ConfigError("integration.initial_state", "no initial state available")


def _parse_chart(raw) -> ChartSpec:
    if not isinstance(raw, dict):
        raise ConfigError("chart", "must be an object")
    try:
        return ChartSpec(
            leaves=tuple(raw.get("leaves", ())),
            fibers=tuple(raw.get("fibers", ())),
            has_time=bool(raw.get("time", False)),
        )
    except LagregError as err:
        raise ConfigError("chart", str(err)) from None


def _parse_exprs(rows, chart, context):
    try:
        if isinstance(rows, str):
            return parse(rows, chart)
        return tuple(_parse_exprs(row, chart, context) for row in rows)
    except (SyntaxError, LagregError) as err:
        raise ConfigError(context, str(err)) from None


def _parse_metric(raw, chart) -> MetricData:
    n = chart.n_base
    g = raw.get("g")
    if g is None or len(g) != n or any(len(row) != n for row in g):
        raise ConfigError("metric.g", f"expected an {n}x{n} table of expressions")
    a = raw.get("A", ["0"] * n)
    if len(a) != n:
        raise ConfigError("metric.A", f"expected {n} expressions")
    kernel = raw.get("kernel")
    if kernel is None:
        raise ConfigError("metric.kernel", "kernel column vectors are required")
    return MetricData(
        g=_parse_exprs([[str(e) for e in row] for row in g], chart, "metric.g"),
        a=_parse_exprs([str(e) for e in a], chart, "metric.A"),
        v=_parse_exprs(str(raw.get("V", "0")), chart, "metric.V"),
        kernel=np.asarray(kernel, dtype=float),
    )


def _parse_regularization(raw, chart):
    if raw is None:
        return None, None
    projector = None
    if "projector" in raw:
        rows = raw["projector"]
        r, l = len(chart.fibers), len(chart.leaves)
        if len(rows) != r or any(len(row) != l for row in rows):
            raise ConfigError("regularization.projector", f"expected {r}x{l} table")
        coefficients = _parse_exprs(
            [[str(e) for e in row] for row in rows], chart, "regularization.projector"
        )
        time_leg = None
        if chart.has_time:
            leg = raw.get("time_leg", ["0"] * r)
            if len(leg) != r:
                raise ConfigError("regularization.time_leg", f"expected {r} expressions")
            time_leg = _parse_exprs([str(e) for e in leg], chart, "regularization.time_leg")
        projector = AlmostProductSpec(coefficients, time_leg)
    connection = None
    conn_raw = raw.get("connection")
    if conn_raw is not None:
        mode = conn_raw.get("mode", "zero")
        if mode == "zero":
            connection = ConnectionSpec.zero()
        elif mode == "linear":
            def table(key):
                if key not in conn_raw:
                    return None
                return _parse_exprs(conn_raw[key], chart, f"regularization.connection.{key}")

            connection = ConnectionSpec(
                mode="linear",
                gamma_leaf=table("gamma_leaf"),
                gamma_fiber=table("gamma_fiber"),
                gamma_time=table("gamma_time"),
            )
        else:
            raise ConfigError("regularization.connection.mode", f"unknown mode {mode!r}")
    return projector, connection


def load_config(source, seed=None, force=False) -> RunConfig:
    """Build a RunConfig from a JSON file path, a JSON string, or a dict."""
    if isinstance(source, dict):
        raw = source
    else:
        text = source
        try:
            if not str(source).lstrip().startswith("{"):
                with open(source, "r", encoding="utf-8") as handle:
                    text = handle.read()
            raw = json.loads(text)
        except OSError as err:
            raise ConfigError("config", f"cannot read {source}: {err}") from None
        except json.JSONDecodeError as err:
            raise ConfigError("config", f"invalid JSON: {err}") from None

    cfg = RunConfig(force=force)
    scenario = None
    if "scenario" in raw:
        variant = raw.get("variant", {})
        if not isinstance(variant, dict):
            raise ConfigError("variant", "must be an object")
        try:
            scenario = load_scenario(raw["scenario"], **variant)
        except UnknownScenarioError as err:
            raise ConfigError("scenario", str(err)) from None
        except TypeError as err:
            raise ConfigError("variant", str(err)) from None
        cfg.scenario = scenario
        cfg.system = scenario.system
        cfg.metric = scenario.metric
    if "chart" in raw:
        chart = _parse_chart(raw["chart"])
        if "metric" in raw:
            cfg.metric = _parse_metric(raw["metric"], chart)
            lagrangian = lagrangian_from_metric(
                chart, cfg.metric.g, cfg.metric.a, cfg.metric.v
            )
        elif "lagrangian" in raw:
            lagrangian = _parse_exprs(str(raw["lagrangian"]), chart, "lagrangian")
        else:
            raise ConfigError("lagrangian", "a chart needs a lagrangian or a metric")
        try:
            cfg.system = LagrangianSystem(chart, lagrangian, autonomous=not chart.has_time)
        except LagregError as err:
            raise ConfigError("lagrangian", str(err)) from None
    if cfg.system is None:
        raise ConfigError("config", "provide a scenario or a chart declaration")

    cfg.projector, cfg.connection = _parse_regularization(
        raw.get("regularization"), cfg.system.chart
    )

    sampling = raw.get("sampling", {})
    cfg.sampling = SamplingSpec(
        count=int(sampling.get("count", 20)),
        box=tuple(sampling.get("box", (-1.0, 1.0))),
        seed=int(sampling.get("seed", 0)),
    )
    if cfg.sampling.count < 1:
        raise ConfigError("sampling.count", "must be positive")
    if seed is not None:
        cfg.sampling.seed = int(seed)

    integration = raw.get("integration", {})
    cfg.integration = IntegrationSpec(
        method=str(integration.get("method", "rk45")),
        step=float(integration.get("step", 1e-3)),
        span=tuple(integration.get("span", (0.0, 10.0))),
        rtol=float(integration.get("rtol", 1e-9)),
        atol=float(integration.get("atol", 1e-12)),
        initial_state=integration.get("initial_state"),
    )
    if cfg.integration.method not in ("rk4", "rk45"):
        raise ConfigError("integration.method", f"unknown method {cfg.integration.method!r}")
    if scenario is not None and cfg.sampling.box == (-1.0, 1.0):
        cfg.sampling = SamplingSpec(
            count=cfg.sampling.count, box=scenario.sample_box, seed=cfg.sampling.seed
        )
    return cfg
