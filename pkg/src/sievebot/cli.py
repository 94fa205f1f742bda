"""Headless entry points: run protocols fast-forward, reproduce the recovery
experiments, calibrate parameters, serve the control API, export records.

All subcommands are deterministic under a fixed ``--seed``. Machine-readable
output (JSON, CSV) goes to stdout or files; human-readable progress goes to
stderr. Exit codes: 0 success, 2 configuration/flag errors, 3 run faulted.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from .engine import EngineError, Executor, new_world, prepare_sample, validate_script
from .particles import DomainError
from .profiles import ProfileError, load_profile
from .protocol import ConfigError, build_protocol, load_config
from .service import run_report_csv
from .sim.calibrate import CalibrationError, CalibrationTargets, calibrate
from .sim.process import (
    ExtinctionPlan,
    ProcessParams,
    load_process_params,
    run_replicates,
)

_CONFIG_ERRORS = (ConfigError, ProfileError, DomainError, CalibrationError, EngineError, FileNotFoundError)


def _fail(message: str, code: int = 2) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _resolve_params(params: str | None, soil: str, method: str) -> ProcessParams:
    if params is None:
        return load_process_params(f"{Path(soil).stem}_{method}")
    path = Path(params)
    if path.exists():
        doc = json.loads(path.read_text())
        key = f"{Path(soil).stem}_{method}"
        if key in doc:  # a file holding several calibrated sets
            return ProcessParams.from_dict(doc[key])
        return ProcessParams.from_dict(doc)
    return load_process_params(params)


@click.group()
def main() -> None:
    """Digital twin of the robotic cyst/egg extraction workstation."""


@main.command("run")
@click.option("--protocol", type=click.Choice(["cyst", "egg", "full"]), default="full", show_default=True)
@click.option("--profile", default=None, help="Sample profile name or JSON path.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--speed", type=float, default=0.0, show_default=True, help="Realtime multiplier; 0 = fast-forward.")
@click.option("--params", default=None, help="Process params key or JSON path.")
@click.option("--config", "config_path", default=None, help="Engine config JSON path.")
@click.option("--trace", "trace_path", default=None, help="Write the device trace to this file.")
def cmd_run(protocol, profile, seed, speed, params, config_path, trace_path) -> None:
    """Execute extraction protocols against the simulated instrument."""
    try:
        config = load_config(config_path)
        input_type = "cyst" if protocol == "egg" else "soil"
        profile_name = profile or ("cyst_sample" if protocol == "egg" else "muscatine")
        sample_profile = load_profile(profile_name)
        soil_key = Path(profile_name).stem
        try:
            process_params = _resolve_params(params, soil_key, "robotic")
        except DomainError:
            process_params = ProcessParams()
        world = new_world(config, sample_profile, seed, input_type, process_params)
        scripts = {
            "cyst": ["cyst_extraction"],
            "egg": ["egg_extraction"],
            "full": ["cyst_extraction", "egg_extraction"],
        }[protocol]
        if input_type == "soil":
            prepare_sample(world, charge_time=True)
    except _CONFIG_ERRORS as err:
        _fail(str(err))

    records = []
    for ordinal, name in enumerate(scripts, start=1):
        script = build_protocol(name, config)
        world.phase = 2 if name == "egg_extraction" else 1
        violations = validate_script(script, config=config, machine=world.machine)
        if violations:
            _fail(f"{name} failed validation: {violations[0]}")
        executor = Executor(world, speed=speed)
        record = executor.execute(script, run_id=f"cli-{name}-{seed}", validate=False)
        records.append(record)
        if record.status != "completed":
            break

    if trace_path:
        Path(trace_path).write_text("\n".join(world.bus.trace) + "\n")
    output = {
        "runs": [r.to_dict() for r in records],
        "session": {
            "protocol": protocol,
            "seed": seed,
            "total_simulated_ms": world.bus.clock.now_ms,
            "water_liters": round(world.bus.flow.water_liters, 6),
        },
    }
    click.echo(json.dumps(output, sort_keys=True, indent=2))
    if any(r.status == "faulted" for r in records):
        sys.exit(3)
    if any(r.status != "completed" for r in records):
        sys.exit(1)


@main.command("extinction")
@click.option("--soil", default="muscatine", show_default=True, help="muscatine | nevada | profile JSON path")
@click.option("--method", type=click.Choice(["robotic", "manual"]), default="robotic", show_default=True)
@click.option("--samples", type=int, default=6, show_default=True)
@click.option("--iterations", type=int, default=4, show_default=True)
@click.option("--replicates", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--params", default=None, help="Process params key or JSON path.")
@click.option("--out", "out_dir", default=None, help="Directory for detail/summary CSVs.")
def cmd_extinction(soil, method, samples, iterations, replicates, seed, workers, params, out_dir) -> None:
    """Reproduce the recovery-to-extinction experiments."""
    try:
        if samples < 1 or iterations < 1 or replicates < 1:
            raise DomainError("samples, iterations, and replicates must be >= 1")
        process_params = _resolve_params(params, soil, method)
        plan = ExtinctionPlan(
            soil=soil, method=method, samples_n=samples, iterations=iterations,
            seed=seed, params=process_params,
        )
        reports = run_replicates(plan, replicates, workers=workers)
    except _CONFIG_ERRORS as err:
        _fail(str(err))

    iter1_means = np.array([r.iteration_mean[0] for r in reports])
    cum2 = np.array([r.cum_pct[:, min(1, iterations - 1)].mean() for r in reports])
    summary = {
        "soil": Path(soil).stem,
        "method": method,
        "samples": samples,
        "iterations": iterations,
        "replicates": replicates,
        "seed": seed,
        "iter1_mean_pct": round(float(iter1_means.mean()), 3),
        "iter1_sd_pct": round(float(np.mean([r.iteration_sd[0] for r in reports])), 3),
        "cum2_mean_pct": round(float(cum2.mean()), 3),
        "cum2_ge_94_replicate_frac": round(float((cum2 >= 94.0).mean()), 4),
        "per_iteration_mean_pct": [round(float(np.mean([r.iteration_mean[k] for r in reports])), 3) for k in range(iterations)],
    }
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        detail_path = out / f"extinction_{summary['soil']}_{method}_detail.csv"
        with detail_path.open("w", newline="") as fh:
            writer = csv.DictWriter(
                fh,
                fieldnames=["profile", "soil", "replicate", "sample", "iteration", "eggs", "pct", "cum_pct"],
                lineterminator="\n",
            )
            writer.writeheader()
            for report in reports:
                writer.writerows(report.detail_rows())
        summary_path = out / f"extinction_{summary['soil']}_{method}_summary.csv"
        with summary_path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["profile", "soil", "iteration", "mean_pct", "sd_pct", "mean_cum_pct", "replicates"])
            for k in range(iterations):
                means = np.array([r.iteration_mean[k] for r in reports])
                sds = np.array([r.iteration_sd[k] for r in reports])
                cums = np.array([r.cum_pct[:, k].mean() for r in reports])
                writer.writerow(
                    [method, summary["soil"], k + 1, round(float(means.mean()), 4),
                     round(float(sds.mean()), 4), round(float(cums.mean()), 4), replicates]
                )
        summary["detail_csv"] = str(detail_path)
        summary["summary_csv"] = str(summary_path)
    click.echo(json.dumps(summary, sort_keys=True, indent=2))
    click.echo(
        f"iteration-1 recovery: {summary['iter1_mean_pct']:.1f} +/- {summary['iter1_sd_pct']:.1f} % "
        f"({summary['soil']}/{method}, {replicates} replicates)",
        err=True,
    )


@main.command("calibrate")
@click.option("--targets", "targets_path", required=True, help="JSON file with calibration targets.")
@click.option("--out", "out_path", default=None, help="Write the fitted params JSON here.")
@click.option("--seed", type=int, default=2024, show_default=True)
@click.option("--search-replicates", type=int, default=24, show_default=True)
@click.option("--final-replicates", type=int, default=64, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
def cmd_calibrate(targets_path, out_path, seed, search_replicates, final_replicates, workers) -> None:
    """Fit process parameters to recovery targets.

    The targets file holds one entry or several:
    {"soil": ..., "method": ..., "iter1_mean_pct": ..., "cum2_min_pct": ...}
    or {"profiles": [entry, ...]}.
    """
    try:
        doc = json.loads(Path(targets_path).read_text())
        entries = doc["profiles"] if "profiles" in doc else [doc]
        fitted: dict[str, dict] = {}
        results = {}
        for entry in entries:
            soil, method = entry["soil"], entry["method"]
            targets = CalibrationTargets(
                iter1_mean_pct=float(entry["iter1_mean_pct"]),
                cum2_min_pct=float(entry.get("cum2_min_pct", 94.0)),
            )
            base = ProcessParams.from_dict(entry.get("base", {"resuspension_gamma": 2.0}))
            result = calibrate(
                soil, method, targets, base=base, seed=seed,
                search_replicates=search_replicates, final_replicates=final_replicates,
                workers=workers,
            )
            key = f"{Path(soil).stem}_{method}"
            fitted[key] = result.params.to_dict()
            results[key] = result.to_dict()
    except (KeyError, json.JSONDecodeError) as err:
        _fail(f"bad targets file: {err}")
    except _CONFIG_ERRORS as err:
        _fail(str(err))
    if out_path:
        Path(out_path).write_text(json.dumps(fitted, indent=2, sort_keys=True) + "\n")
    click.echo(json.dumps(results, sort_keys=True, indent=2))


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--data-dir", default="./sievebot-data", show_default=True)
@click.option("--config", "config_path", default=None)
@click.option("--ui-dir", default=None, help="Directory with the built operator panel.")
def cmd_serve(host, port, data_dir, config_path, ui_dir) -> None:
    """Serve the control API (and the operator panel, if built)."""
    import uvicorn

    from .service import create_app

    try:
        config = load_config(config_path)
        default_ui = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        app = create_app(data_dir, config, ui_dir or (default_ui if default_ui.exists() else None))
    except _CONFIG_ERRORS as err:
        _fail(str(err))
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command("export")
@click.option("--store", "store_dir", required=True, help="Service data directory.")
@click.option("--run-id", required=True)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
def cmd_export(store_dir, run_id, fmt) -> None:
    """Export a stored run record (byte-stable for a given record)."""
    from .service import NotFound, RunStore

    try:
        store = RunStore(Path(store_dir) / "runs.jsonl")
        record = store.get(run_id)
    except NotFound as err:
        _fail(str(err))
    except OSError as err:
        _fail(str(err))
    if fmt == "json":
        click.echo(json.dumps(record, sort_keys=True, indent=2))
    else:
        sys.stdout.write(run_report_csv(record))


if __name__ == "__main__":
    main()
