"""Command-line entry point.

Subcommands: analyze, regularize, simulate, list-scenarios. Reports are
JSON on stdout (and written under --out when given); trajectories export
as CSV. Numeric output uses the shortest round-trip decimal
representation, and every sampled quantity derives from the seed, so a
repeated run is byte-identical.

Exit codes: 0 success, 2 config error, 3 hypothesis or verification
failure, 4 integration failure.
"""

from __future__ import annotations

import json
import os
import sys as _sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from .catalog import sample_points, scenario_descriptions
from .config import RunConfig, load_config
from .constraints import (
    detect_complete_lift,
    kernel_basis,
    metric_consistency_residuals,
    primary_constraints,
)
from .dynamics import (
    compare_projection,
    integrate,
    monitor_invariants,
    write_trajectory_csv,
)
from .errors import (
    ConfigError,
    HypothesisViolatedError,
    InconsistentSolveError,
    LagregError,
    RankNotConstantError,
    SingularHessianError,
    StepUnderflowError,
    ToleranceExceededError,
)
from .forms import (
    energy_differential,
    helmholtz_check,
    omega_matrix,
    reeb_evolution_field,
    velocity_hessian,
)
from .geometry import matrix_rank
from .regularize import (
    coisotropy_check,
    regularized_lagrangian,
    restriction_check,
    verify_regularity,
)

CONSISTENCY_TOL = 1e-8

EXIT_CONFIG = 2
EXIT_VERIFICATION = 3
EXIT_INTEGRATION = 4


def worker_count() -> int:
    env = os.environ.get("LAGREG_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _pmap(fn, items):
    items = list(items)
    workers = min(worker_count(), max(1, len(items)))
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def render_report(report) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"


# --- analyze -------------------------------------------------------------------


def analyze_report(cfg: RunConfig) -> dict:
    system = cfg.system
    chart = system.chart
    points = sample_points(chart, cfg.sampling.count, cfg.rng, cfg.sampling.box)
    tau = None
    if not system.autonomous:
        tau = np.zeros(chart.dim)
        tau[chart.time_index] = 1.0

    def per_sample(arr):
        omega = omega_matrix(system, arr)
        kernel = kernel_basis(omega, tau)
        hessian = velocity_hessian(system, arr)
        entry = {
            "kernel_rank": kernel.dimension,
            "hessian_rank": matrix_rank(hessian),
        }
        if system.autonomous:
            entry["primary_constraints"] = [
                float(v) for v in primary_constraints(system, arr)
            ]
            if kernel.dimension:
                d_e = energy_differential(system, arr)
                entry["kernel_energy_pairing"] = float(
                    np.max(np.abs(kernel.matrix.T @ d_e))
                )
            else:
                entry["kernel_energy_pairing"] = 0.0
        else:
            try:
                reeb = reeb_evolution_field(omega, tau)
                entry["reeb_residual"] = float(reeb.residual)
            except InconsistentSolveError as err:
                entry["reeb_residual"] = float(err.residual)
        return entry

    samples = _pmap(per_sample, points)
    kernel_ranks = sorted({s["kernel_rank"] for s in samples})
    hessian_ranks = sorted({s["hessian_rank"] for s in samples})

    report = {
        "scenario": cfg.scenario.name if cfg.scenario else None,
        "seed": cfg.sampling.seed,
        "samples": len(points),
        "kernel_rank": kernel_ranks[0] if len(kernel_ranks) == 1 else kernel_ranks,
        "hessian_rank": hessian_ranks[0] if len(hessian_ranks) == 1 else hessian_ranks,
        "regular": hessian_ranks == [chart.n_base],
        "per_sample": samples,
    }

    try:
        lift = detect_complete_lift(system, points)
        report["complete_lift"] = bool(lift.is_complete_lift)
        report["complete_lift_evidence"] = {
            "rank": lift.evidence.get("rank"),
            "reasons": lift.evidence.get("reasons", []),
            "checks": lift.evidence.get("checks", {}),
        }
    except RankNotConstantError as err:
        report["complete_lift"] = False
        report["complete_lift_evidence"] = {"reasons": [str(err)]}

    if cfg.metric is not None:
        residuals = metric_consistency_residuals(
            cfg.metric.g,
            cfg.metric.a,
            cfg.metric.v,
            cfg.metric.kernel,
            chart,
            points,
        )
        report["consistency_residuals"] = residuals
        failing = [
            k + 1
            for k, key in enumerate(("condition_1", "condition_2", "condition_3"))
            if residuals[key] > CONSISTENCY_TOL
        ]
        report["consistent"] = not failing
        report["failing_condition"] = failing[0] if failing else None
    elif system.autonomous:
        worst = max(s["kernel_energy_pairing"] for s in samples)
        report["consistent"] = worst <= CONSISTENCY_TOL
        report["consistency_residuals"] = {"kernel_energy_pairing": worst}
    else:
        worst = max(s["reeb_residual"] for s in samples)
        report["consistent"] = worst <= CONSISTENCY_TOL
        report["consistency_residuals"] = {"reeb_residual": worst}
    return report


# --- regularize ----------------------------------------------------------------


def regularize_report(cfg: RunConfig) -> tuple:
    """Build the extension and run every verification; returns (report,
    exit_code)."""
    system = cfg.system
    points = sample_points(system.chart, cfg.sampling.count, cfg.rng, cfg.sampling.box)
    report = {
        "scenario": cfg.scenario.name if cfg.scenario else None,
        "seed": cfg.sampling.seed,
        "forced": cfg.force,
    }
    try:
        reg = regularized_lagrangian(
            system,
            cfg.projector,
            cfg.connection,
            sample_points=points,
            assume_lift=cfg.force,
        )
    except HypothesisViolatedError as err:
        report["error"] = str(err)
        return report, EXIT_VERIFICATION

    report["rank"] = reg.thickening.rank
    report["regularized_lagrangian"] = reg.system.lagrangian.to_source()
    report["chart"] = reg.system.chart.to_dict()

    failures = []
    if cfg.force:
        try:
            lift = detect_complete_lift(system, points)
            hypothesis_ok = (
                lift.is_complete_lift
                and lift.evidence.get("rank") == len(system.chart.fibers)
            )
        except RankNotConstantError:
            hypothesis_ok = False
        report["hypothesis_satisfied"] = hypothesis_ok
        if not hypothesis_ok:
            failures.append("hypothesis")

    try:
        report["restriction"] = restriction_check(reg, points)
    except ToleranceExceededError as err:
        report["restriction"] = dict(err.detail or {}, passed=False)
        failures.append("restriction")

    zero_section = sample_points(
        system.chart, max(cfg.sampling.count, 50), cfg.rng, cfg.sampling.box
    )
    try:
        report["regularity"] = verify_regularity(
            reg, zero_section, shell_radii=(0.25, 0.5, 1.0)
        )
    except LagregError as err:
        report["regularity"] = {"passed": False, "error": str(err)}
        failures.append("regularity")

    try:
        report["coisotropy"] = coisotropy_check(reg, zero_section)
    except LagregError as err:
        report["coisotropy"] = {"passed": False, "error": str(err)}
        failures.append("coisotropy")

    thick_chart = reg.system.chart
    helmholtz_points = [
        reg.thickening.embed_point(system.chart.as_array(p)) for p in points[:10]
    ]
    try:
        report["helmholtz"] = helmholtz_check(
            lambda p: omega_matrix(reg.system, p), thick_chart, helmholtz_points
        )
    except ToleranceExceededError as err:
        report["helmholtz"] = dict(err.detail or {}, passed=False)
        failures.append("helmholtz")

    report["failures"] = failures
    return report, EXIT_VERIFICATION if failures else 0


# --- simulate ------------------------------------------------------------------


def simulate_outputs(cfg: RunConfig, out_dir=None) -> tuple:
    """Integrate the (regularized if needed) system; returns (summary,
    record, csv_path)."""
    system = cfg.system
    initial = cfg.initial_state()
    reference = None
    if cfg.scenario is not None and cfg.scenario.reference_factory is not None:
        reference = cfg.scenario.reference_factory(
            system.chart.as_array(initial)
        )

    regular = (
        matrix_rank(velocity_hessian(system, system.chart.as_array(initial)))
        == system.chart.n_base
    )
    thickening = None
    if regular:
        run_system = system
        run_initial = system.chart.as_array(initial)
    else:
        points = sample_points(
            system.chart, cfg.sampling.count, cfg.rng, cfg.sampling.box
        )
        reg = regularized_lagrangian(
            system,
            cfg.projector,
            cfg.connection,
            sample_points=points,
            assume_lift=cfg.force,
        )
        run_system = reg.system
        thickening = reg.thickening
        run_initial = thickening.embed_point(system.chart.as_array(initial))

    record = integrate(
        run_system,
        run_initial,
        cfg.integration.span,
        method=cfg.integration.method,
        step=cfg.integration.step,
        rtol=cfg.integration.rtol,
        atol=cfg.integration.atol,
    )
    summary = {
        "scenario": cfg.scenario.name if cfg.scenario else None,
        "seed": cfg.sampling.seed,
        "method": cfg.integration.method,
        "span": list(cfg.integration.span),
        "steps": len(record),
        "final_state": (
            {
                name: float(v)
                for name, v in zip(run_system.chart.coords, record.states[-1])
            }
            if len(record)
            else {}
        ),
    }
    invariants = monitor_invariants(run_system, record)
    summary["energy_drift"] = invariants.get("energy_drift", 0.0)
    summary["max_sode_residual"] = invariants.get("max_sode_residual", 0.0)

    if thickening is not None:
        if reference is not None:
            projection = compare_projection(record, thickening, reference)
            summary["max_mu_norm"] = projection["max_off_section"]
            summary["max_reference_deviation"] = projection["max_reference_deviation"]
        else:
            off = (
                max(thickening.off_section_norm(s) for s in record.states)
                if len(record)
                else 0.0
            )
            summary["max_mu_norm"] = float(off)
    elif reference is not None and len(record):
        target = np.array([system.chart.as_array(reference(t)) for t in record.times])
        summary["max_reference_deviation"] = float(
            np.max(np.abs(record.states - target))
        )
    else:
        summary["max_mu_norm"] = 0.0

    csv_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "trajectory.csv"
        write_trajectory_csv(record, csv_path)
    return summary, record, csv_path


# --- click wiring ---------------------------------------------------------------


def _config_from_options(config, scenario, seed, force):
    if config is None and scenario is None:
        raise ConfigError("config", "pass --config PATH or --scenario NAME")
    if config is not None:
        return load_config(config, seed=seed, force=force)
    return load_config({"scenario": scenario}, seed=seed, force=force)


def _emit(report, out, filename):
    text = render_report(report)
    click.echo(text, nl=False)
    if out is not None:
        out_path = Path(out)
        out_path.mkdir(parents=True, exist_ok=True)
        (out_path / filename).write_text(text, encoding="utf-8")


@click.group()
def main():
    """Diagnostics and regularization of singular Lagrangian systems."""


@main.command("list-scenarios")
def list_scenarios():
    """Print the built-in scenario names."""
    for name, description in scenario_descriptions().items():
        click.echo(f"{name}: {description}")


def _common_options(fn):
    fn = click.option("--config", type=click.Path(), default=None, help="JSON config path")(fn)
    fn = click.option("--scenario", default=None, help="built-in scenario name")(fn)
    fn = click.option("--seed", type=int, default=None, help="sampling seed override")(fn)
    fn = click.option("--out", type=click.Path(), default=None, help="output directory")(fn)
    fn = click.option("--force", is_flag=True, help="skip the hypothesis gate")(fn)
    return fn


@main.command()
@_common_options
def analyze(config, scenario, seed, out, force):
    """Kernel ranks, complete-lift verdict, constraints, consistency."""
    try:
        cfg = _config_from_options(config, scenario, seed, force)
        report = analyze_report(cfg)
    except ConfigError as err:
        click.echo(f"error: {err}", err=True)
        raise SystemExit(EXIT_CONFIG)
    except LagregError as err:
        click.echo(f"error: {err}", err=True)
        raise SystemExit(EXIT_VERIFICATION)
    _emit(report, out, "analyze.json")


@main.command()
@_common_options
def regularize(config, scenario, seed, out, force):
    """Build the extended Lagrangian and verify it."""
    try:
        cfg = _config_from_options(config, scenario, seed, force)
    except ConfigError as err:
        click.echo(f"error: {err}", err=True)
        raise SystemExit(EXIT_CONFIG)
    report, code = regularize_report(cfg)
    _emit(report, out, "regularize.json")
    if code:
        raise SystemExit(code)


@main.command()
@_common_options
def simulate(config, scenario, seed, out, force):
    """Integrate the (regularized) dynamics; CSV trajectory plus summary."""
    try:
        cfg = _config_from_options(config, scenario, seed, force)
    except ConfigError as err:
        click.echo(f"error: {err}", err=True)
        raise SystemExit(EXIT_CONFIG)
    try:
        summary, _, csv_path = simulate_outputs(cfg, out)
    except HypothesisViolatedError as err:
        click.echo(f"error: {err}", err=True)
        raise SystemExit(EXIT_VERIFICATION)
    except (SingularHessianError, StepUnderflowError) as err:
        click.echo(f"error: {err}", err=True)
        raise SystemExit(EXIT_INTEGRATION)
    if csv_path is not None:
        summary["trajectory_csv"] = str(csv_path)
    _emit(summary, out, "simulate.json")


if __name__ == "__main__":
    main()
