"""Command-line front end.

Subcommands: ``coverage``, ``search-min``, ``contour``, ``scaling``,
``geometry``.  Every command writes a deterministic report (JSON, or CSV
for the grid exports) plus a run manifest ``<out stem>.manifest.json``
that records the resolved configuration, seed, tool version and wall-clock
duration.  Reports from Monte Carlo commands are bit-identical across
re-runs with the same seed and configuration, regardless of worker count.

Option precedence: command-line flags beat the optional JSON config file
(``--config``), which beats the built-in defaults (the published design,
alpha = beta = 0.05, epsilon = 0.02, grid step 0.096).  The seed falls
back to the ``PRETEST_COVERAGE_SEED`` environment variable.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from importlib.metadata import version as _dist_version
from pathlib import Path

import click

from .asymptotic import (
    QuadratureSpec,
    asymptotic_coverage,
    asymptotic_grid_min,
    no_pretest_coverage,
)
from .boundary import contour_grid, scan_geometry, scaling_study
from .errors import InputDomainError, PretestCoverageError, QuadratureError
from .finite_sample import enumerate_coverage, mc_coverage, min_coverage_search
from .model import AnalysisConfig, CellProbs, SearchStage, StudyDesign

SEED_ENV_VAR = "PRETEST_COVERAGE_SEED"

_DEFAULTS = {
    "design": "1092,467,449,488",
    "p": "0.692,0.596,0.02,0.02",
    "alpha": 0.05,
    "beta": 0.05,
    "epsilon": 0.02,
    "grid_step": 0.096,
    "method": None,  # per-command
    "mode": "two_stage",
    "reps": 1_000_000,
    "budget": 10_000_000,
    "schedule": "10000:10,200000:1,1000000:1",
    "grid_steps": 32,
    "delta_steps": 80,
    "scale": 1,
    "scales": "1,2,4,8,16",
    "p1": 0.5,
    "p1p": 0.5,
    "seed": 0,
}


class NumericalFailure(click.ClickException):
    exit_code = 3


def _tool_version() -> str:
    try:
        return _dist_version("pretest-coverage")
    except Exception:
        return "unknown"


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise click.UsageError(f"config file {path} must contain a JSON object")
    return data


def _resolve(key: str, flag_value, file_config: dict):
    """flags > config file > built-in defaults."""
    if flag_value is not None:
        return flag_value
    if key in file_config:
        return file_config[key]
    return _DEFAULTS[key]


def _resolve_seed(flag_value, file_config: dict) -> int:
    if flag_value is not None:
        return int(flag_value)
    if "seed" in file_config:
        return int(file_config["seed"])
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise click.UsageError(
                f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None
    return _DEFAULTS["seed"]


def _parse_design(text: str) -> StudyDesign:
    parts = str(text).split(",")
    if len(parts) != 4:
        raise click.UsageError(f"--design needs 4 comma-separated counts, got {text!r}")
    try:
        return StudyDesign(*(int(part) for part in parts))
    except (ValueError, InputDomainError) as exc:
        raise click.UsageError(f"invalid --design {text!r}: {exc}") from None


def _parse_probs(text: str) -> CellProbs:
    parts = str(text).split(",")
    if len(parts) != 4:
        raise click.UsageError(f"--p needs 4 comma-separated probabilities, got {text!r}")
    try:
        return CellProbs(*(float(part) for part in parts))
    except (ValueError, InputDomainError) as exc:
        raise click.UsageError(f"invalid --p {text!r}: {exc}") from None


def _parse_schedule(text: str) -> tuple[SearchStage, ...]:
    stages = []
    try:
        for part in str(text).split(","):
            reps, keep = part.split(":")
            stages.append(SearchStage(int(reps), int(keep)))
    except (ValueError, InputDomainError) as exc:
        raise click.UsageError(
            f"invalid --schedule {text!r} (expected 'reps:keep,...'): {exc}") from None
    return tuple(stages)


def _parse_scales(text: str) -> tuple[int, ...]:
    try:
        scales = tuple(int(part) for part in str(text).split(","))
    except ValueError:
        raise click.UsageError(f"invalid --scales {text!r}") from None
    if not scales or any(s < 1 for s in scales):
        raise click.UsageError(f"--scales must be positive integers, got {text!r}")
    return scales


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(out: Path, command: str, config: dict, seed: int | None,
                    payload: dict, started: float) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "tool_version": _tool_version(),
        "duration_seconds": time.time() - started,
        "payload": payload,
    }
    _write_json(out.with_suffix(".manifest.json"), manifest)


def _probs_list(p: CellProbs) -> list[float]:
    return list(p.as_tuple())


def _run_guarded(fn):
    try:
        return fn()
    except QuadratureError as exc:
        raise NumericalFailure(str(exc)) from exc
    except InputDomainError as exc:
        raise click.UsageError(str(exc)) from exc
    except PretestCoverageError as exc:
        raise click.UsageError(str(exc)) from exc


@click.group()
@click.version_option(_tool_version(), prog_name="pretest-coverage")
def main() -> None:
    """Coverage analysis of two-stage (pretest) odds-ratio intervals."""


@main.command("coverage")
@click.option("--method", type=click.Choice(["mc", "enumerate", "asymptotic"]),
              default="asymptotic", show_default=True)
@click.option("--design", default=None, help="n1,n1p,n2,n2p")
@click.option("--p", "p_text", default=None, help="p1,p1p,p2,p2p")
@click.option("--alpha", type=float, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--mode", type=click.Choice(["two_stage", "no_pretest"]), default=None)
@click.option("--reps", type=int, default=None, help="Monte Carlo repetitions")
@click.option("--budget", type=int, default=None, help="enumeration outcome budget")
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(path_type=Path), default=Path("coverage.json"),
              show_default=True)
def cmd_coverage(method, design, p_text, alpha, beta, mode, reps, budget, seed,
                 config_path, out):
    """Simultaneous coverage probability at one parameter point."""
    started = time.time()
    file_config = _load_config_file(config_path)
    design = _parse_design(_resolve("design", design, file_config))
    p = _parse_probs(_resolve("p", p_text, file_config))
    alpha = float(_resolve("alpha", alpha, file_config))
    beta = float(_resolve("beta", beta, file_config))
    mode = _resolve("mode", mode, file_config)
    reps = int(_resolve("reps", reps, file_config))
    budget = int(_resolve("budget", budget, file_config))
    seed_value = _resolve_seed(seed, file_config)

    payload: dict = {
        "command": "coverage",
        "method": method,
        "mode": mode,
        "inputs": {
            "design": list(design.as_tuple()),
            "p": _probs_list(p),
            "alpha": alpha,
            "beta": beta,
        },
    }
    if method == "mc":
        config = AnalysisConfig(alpha=alpha, beta=beta, seed=seed_value)
        est = _run_guarded(lambda: mc_coverage(design, p, config, mode=mode,
                                               reps=reps, seed=seed_value))
        payload.update(coverage=est.coverage, std_err=est.std_err,
                       reps=est.reps, seed=est.seed)
    elif method == "enumerate":
        config = AnalysisConfig(alpha=alpha, beta=beta, seed=seed_value)
        value = _run_guarded(lambda: enumerate_coverage(design, p, config,
                                                        mode=mode, budget=budget))
        payload.update(coverage=value, budget=budget)
    else:
        quad = QuadratureSpec()
        if mode == "no_pretest":
            value = _run_guarded(lambda: no_pretest_coverage(design, p, alpha))
        else:
            value = _run_guarded(
                lambda: asymptotic_coverage(design, p, alpha, beta, quad))
        payload.update(coverage=value, quad=vars(quad))

    _write_json(out, payload)
    resolved = {"design": list(design.as_tuple()), "p": _probs_list(p),
                "alpha": alpha, "beta": beta, "mode": mode, "method": method,
                "reps": reps, "budget": budget}
    _write_manifest(out, "coverage", resolved, seed_value, payload, started)
    click.echo(f"coverage = {payload['coverage']:.6f} ({method}, {mode})")
    click.echo(f"report written to {out}")


@main.command("search-min")
@click.option("--method", type=click.Choice(["mc", "asymptotic"]),
              default="asymptotic", show_default=True)
@click.option("--mode", type=click.Choice(["two_stage", "no_pretest"]), default=None)
@click.option("--design", default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--epsilon", type=float, default=None)
@click.option("--grid-step", type=float, default=None, help="grid step h")
@click.option("--reps", type=int, default=None,
              help="override the first-stage rep count of the MC schedule")
@click.option("--schedule", default=None, help="MC schedule 'reps:keep,...'")
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None, help="worker processes")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(path_type=Path),
              default=Path("search_min.json"), show_default=True)
def cmd_search_min(method, mode, design, alpha, beta, epsilon, grid_step, reps,
                   schedule, seed, workers, config_path, out):
    """Minimum simultaneous coverage over the parameter grid."""
    started = time.time()
    file_config = _load_config_file(config_path)
    design = _parse_design(_resolve("design", design, file_config))
    alpha = float(_resolve("alpha", alpha, file_config))
    beta = float(_resolve("beta", beta, file_config))
    epsilon = float(_resolve("epsilon", epsilon, file_config))
    h = float(_resolve("grid_step", grid_step, file_config))
    mode = _resolve("mode", mode, file_config)
    seed_value = _resolve_seed(seed, file_config)
    workers = int(workers) if workers is not None else (os.cpu_count() or 1)

    payload: dict = {
        "command": "search-min",
        "method": method,
        "mode": mode,
        "inputs": {"design": list(design.as_tuple()), "alpha": alpha,
                   "beta": beta, "epsilon": epsilon, "h": h},
    }
    if method == "mc":
        stages = _parse_schedule(_resolve("schedule", schedule, file_config))
        if reps is not None:
            stages = (SearchStage(int(reps), stages[0].keep),) + stages[1:]
        config = AnalysisConfig(alpha=alpha, beta=beta, epsilon=epsilon, h=h,
                                mc_schedule=stages, seed=seed_value)
        result = _run_guarded(lambda: min_coverage_search(design, config,
                                                          mode=mode, workers=workers))
        payload.update(
            seed=seed_value,
            schedule=[{"reps": s.reps, "keep": s.keep} for s in stages],
            min_coverage=result.min_coverage,
            argmin=_probs_list(result.argmin),
            stages=[
                {
                    "stage": trace.stage,
                    "reps": trace.reps,
                    "n_candidates": trace.n_candidates,
                    "kept": [{"p": _probs_list(point), "coverage": value}
                             for point, value in trace.kept],
                }
                for trace in result.stage_trace
            ],
        )
    else:
        if mode == "no_pretest":
            payload.update(
                min_coverage=1.0 - alpha,
                argmins=[],
                note=("large-sample coverage without the pretest is the constant "
                      "1 - alpha; every grid point attains the minimum"),
            )
        else:
            quad = QuadratureSpec()
            result = _run_guarded(lambda: asymptotic_grid_min(
                design, alpha, beta, epsilon=epsilon, h=h, quad=quad,
                workers=workers))
            payload.update(
                min_coverage=result.min_coverage,
                argmins=[_probs_list(point) for point in result.argmins],
                tie_tol=result.tie_tol,
                failures=[{"p": _probs_list(point), "error": msg}
                          for point, msg in result.failures],
                quad=vars(quad),
            )

    _write_json(out, payload)
    resolved = {"design": list(design.as_tuple()), "alpha": alpha, "beta": beta,
                "epsilon": epsilon, "h": h, "mode": mode, "method": method,
                "workers": workers}
    _write_manifest(out, "search-min", resolved, seed_value, payload, started)
    click.echo(f"min coverage = {payload['min_coverage']:.6f} ({method}, {mode})")
    click.echo(f"report written to {out}")


@main.command("contour")
@click.option("--design", default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--epsilon", type=float, default=None)
@click.option("--grid-steps", type=int, default=None,
              help="intervals per axis of the (p1, p1') grid")
@click.option("--delta-steps", type=int, default=None,
              help="intervals of the delta sweep")
@click.option("--scale", type=int, default=None,
              help="multiply all sample sizes by this factor")
@click.option("--workers", type=int, default=None)
@click.option("--plot/--no-plot", "render_plot", default=True, show_default=True,
              help="also render a contour figure next to the CSV")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(path_type=Path), default=Path("contour.csv"),
              show_default=True)
def cmd_contour(design, alpha, beta, epsilon, grid_steps, delta_steps, scale,
                workers, render_plot, config_path, out):
    """Partially-minimized coverage over the interior (p1, p1') rectangle (CSV)."""
    started = time.time()
    file_config = _load_config_file(config_path)
    design = _parse_design(_resolve("design", design, file_config))
    alpha = float(_resolve("alpha", alpha, file_config))
    beta = float(_resolve("beta", beta, file_config))
    epsilon = float(_resolve("epsilon", epsilon, file_config))
    grid_steps = int(_resolve("grid_steps", grid_steps, file_config))
    delta_steps = int(_resolve("delta_steps", delta_steps, file_config))
    scale = int(_resolve("scale", scale, file_config))
    workers = int(workers) if workers is not None else (os.cpu_count() or 1)
    scaled = _run_guarded(lambda: design.scaled(scale))

    grid = _run_guarded(lambda: contour_grid(
        scaled, epsilon, alpha, beta, grid_steps=grid_steps,
        delta_steps=delta_steps, workers=workers))

    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p1", "p1p", "min_coverage", "argmin_delta"])
        for p1, p1p, value, delta in grid.rows():
            writer.writerow([f"{p1:.6f}", f"{p1p:.6f}", f"{value:.6f}", f"{delta:.6f}"])

    payload = {
        "csv": str(out),
        "rows": int(grid.values.size),
        "min_coverage": float(grid.values.min()),
        "max_coverage": float(grid.values.max()),
    }
    if render_plot:
        from .plots import save_contour_figure

        figure = save_contour_figure(grid, out.with_suffix(".png"), nominal=1.0 - alpha)
        payload["figure"] = str(figure)
    resolved = {"design": list(design.as_tuple()), "alpha": alpha, "beta": beta,
                "epsilon": epsilon, "grid_steps": grid_steps,
                "delta_steps": delta_steps, "scale": scale, "workers": workers}
    _write_manifest(out, "contour", resolved, None, payload, started)
    click.echo(f"coverage range [{payload['min_coverage']:.6f}, "
               f"{payload['max_coverage']:.6f}] over {payload['rows']} cells")
    click.echo(f"grid written to {out}")


@main.command("scaling")
@click.option("--design", default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--epsilon", type=float, default=None)
@click.option("--p1", type=float, default=None)
@click.option("--p1p", type=float, default=None)
@click.option("--scales", default=None, help="comma-separated sample-size multiples")
@click.option("--delta-steps", type=int, default=None)
@click.option("--plot/--no-plot", "render_plot", default=True, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(path_type=Path), default=Path("scaling.csv"),
              show_default=True)
def cmd_scaling(design, alpha, beta, epsilon, p1, p1p, scales, delta_steps,
                render_plot, config_path, out):
    """Partially-minimized coverage at (p1, p1') for scaled designs (CSV)."""
    started = time.time()
    file_config = _load_config_file(config_path)
    design = _parse_design(_resolve("design", design, file_config))
    alpha = float(_resolve("alpha", alpha, file_config))
    beta = float(_resolve("beta", beta, file_config))
    epsilon = float(_resolve("epsilon", epsilon, file_config))
    p1 = float(_resolve("p1", p1, file_config))
    p1p = float(_resolve("p1p", p1p, file_config))
    scale_values = _parse_scales(_resolve("scales", scales, file_config))
    delta_steps = int(_resolve("delta_steps", delta_steps, file_config))

    points = _run_guarded(lambda: scaling_study(
        design, scale_values, p1, p1p, epsilon, alpha, beta,
        delta_steps=delta_steps))

    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scale", "min_coverage", "argmin_delta"])
        for point in points:
            if point.coverage is None:
                writer.writerow([point.scale, "", ""])
            else:
                writer.writerow([point.scale, f"{point.coverage:.6f}",
                                 f"{point.argmin_delta:.6f}"])

    payload = {
        "csv": str(out),
        "points": [
            {"scale": pt.scale, "min_coverage": pt.coverage,
             "argmin_delta": pt.argmin_delta, "note": pt.note}
            for pt in points
        ],
    }
    if render_plot:
        from .plots import save_scaling_figure

        figure = save_scaling_figure(points, out.with_suffix(".png"), nominal=1.0 - alpha)
        payload["figure"] = str(figure)
    resolved = {"design": list(design.as_tuple()), "alpha": alpha, "beta": beta,
                "epsilon": epsilon, "p1": p1, "p1p": p1p,
                "scales": list(scale_values), "delta_steps": delta_steps}
    _write_manifest(out, "scaling", resolved, None, payload, started)
    for point in points:
        if point.coverage is None:
            click.echo(f"N={point.scale}: skipped ({point.note})")
        else:
            click.echo(f"N={point.scale}: min coverage {point.coverage:.6f}")
    click.echo(f"study written to {out}")


@main.command("geometry")
@click.option("--design", default=None)
@click.option("--epsilon", type=float, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(path_type=Path), default=Path("geometry.json"),
              show_default=True)
def cmd_geometry(design, epsilon, config_path, out):
    """Perturbation geometry (Delta, r, Delta') of a design."""
    started = time.time()
    file_config = _load_config_file(config_path)
    design = _parse_design(_resolve("design", design, file_config))
    epsilon = float(_resolve("epsilon", epsilon, file_config))
    geom = _run_guarded(lambda: scan_geometry(design, epsilon))
    payload = {
        "command": "geometry",
        "inputs": {"design": list(design.as_tuple()), "epsilon": epsilon},
        "delta_cap": geom.delta_cap,
        "r": geom.r,
        "delta_cap_prime": geom.delta_cap_prime,
        "p1_range": [geom.p1_range.lo, geom.p1_range.hi],
        "p1p_range": [geom.p1p_range.lo, geom.p1p_range.hi],
    }
    _write_json(out, payload)
    _write_manifest(out, "geometry",
                    {"design": list(design.as_tuple()), "epsilon": epsilon},
                    None, payload, started)
    click.echo(f"Delta = {geom.delta_cap:.6f}, r = {geom.r:.6f}, "
               f"Delta' = {geom.delta_cap_prime:.6f}")
    click.echo(f"report written to {out}")


if __name__ == "__main__":
    main()
