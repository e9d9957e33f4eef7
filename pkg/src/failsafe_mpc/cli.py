"""Command-line front end: single runs, the six-run suite, and validation.

Artifacts per run (under ``<output>/<name>/``):

* ``trace.csv``     -- one row per control step per vehicle, fixed schema
* ``metrics.json``  -- the scalar metrics report
* ``plot_*.csv``    -- per-signal time series (t, lead, faulty, trail) for
  v_x, a_x, delta, d_y, and r, plus ``plot_errors.csv`` against the
  baseline where one applies

plus a ``summary.csv`` table across runs at the output root.  The suite
selector runs the six canonical experiments: brake-in-lane and
brake-out-of-lane without failure, and the two fault cases (steering
effectiveness f1 = 0.5, rear cornering stiffness f2 = 0.5) each with and
without controller reconfiguration, all on the brake-in-lane strategy with
the no-failure brake-in-lane run as error baseline.

Exit codes: 0 success, 1 configuration/validation problem, 2 simulation
abort (non-finite state).  The default output root comes from the
``FAILSAFE_MPC_OUTPUT`` environment variable, falling back to ``runs``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any

from .config import (
    config_from_dict,
    load_config_dict,
    validate_config,
)
from .dynamics import (
    FaultVector,
    IDX_A_X,
    IDX_D_Y,
    IDX_R,
    IDX_V_X,
)
from .scenario import (
    MetricsReport,
    ScenarioConfig,
    SimTrace,
    VEHICLE_NAMES,
    compute_metrics,
    run_scenario,
)
from .tdm import Strategy

OUTPUT_ENV_VAR = "FAILSAFE_MPC_OUTPUT"
EXPORT_FORMATS = ("csv", "json")

TRACE_COLUMNS = (
    "t",
    "vehicle",
    "a_x",
    "v_x",
    "v_y",
    "d_y",
    "r",
    "theta",
    "d_x",
    "a_x_c",
    "delta",
    "z_v_x",
    "z_d_y",
    "z_theta",
    "e_tg_target",
    "e_tg_lv",
    "fsm_mode",
    "solver_status",
    "solver_iterations",
    "kkt_residual",
    "slack",
)

_PLOT_SIGNALS = (
    ("v_x", IDX_V_X),
    ("a_x", IDX_A_X),
    ("d_y", IDX_D_Y),
    ("r", IDX_R),
)

# name, strategy, plant fault, controller reconfigured, compare to baseline
_SUITE = (
    ("bil_nominal", Strategy.BRAKE_IN_LANE, FaultVector(), False, False),
    ("bol_nominal", Strategy.BRAKE_OUT_OF_LANE, FaultVector(), False, False),
    ("bil_f1_noreconf", Strategy.BRAKE_IN_LANE, FaultVector(f1=0.5), False, True),
    ("bil_f2_noreconf", Strategy.BRAKE_IN_LANE, FaultVector(f2=0.5), False, True),
    ("bil_f1_reconf", Strategy.BRAKE_IN_LANE, FaultVector(f1=0.5), True, True),
    ("bil_f2_reconf", Strategy.BRAKE_IN_LANE, FaultVector(f2=0.5), True, True),
)
SUITE_BASELINE = _SUITE[0][0]


@dataclass(frozen=True)
class RunManifest:
    """What to run and where to put the artifacts."""

    config_path: str | None
    output_dir: str
    selector: str  # "single" | "suite"
    export_formats: tuple[str, ...] = EXPORT_FORMATS

    def __post_init__(self) -> None:
        if self.selector not in ("single", "suite"):
            raise ValueError(f"unknown selector {self.selector!r}")
        bad = set(self.export_formats) - set(EXPORT_FORMATS)
        if bad:
            raise ValueError(f"unknown export format(s) {sorted(bad)}")


def suite_configs(base: ScenarioConfig) -> dict[str, ScenarioConfig]:
    """The six canonical experiments derived from one base config."""
    return {
        name: replace(base, strategy=strategy, fault=fault, fault_known=known)
        for name, strategy, fault, known, _ in _SUITE
    }


def _fmt(value: float) -> str:
    return f"{float(value):.17g}"


def write_trace_csv(trace: SimTrace, path: Path) -> None:
    """Fixed-schema trace export, one row per step per vehicle.

    Reference, FSM, and solver columns describe the faulty vehicle's
    channel and repeat on every vehicle row of a sample; float columns use
    repr-exact formatting so identical runs serialize to identical bytes.
    """
    lines = [",".join(TRACE_COLUMNS)]
    for k in range(trace.n_samples):
        shared = (
            _fmt(trace.refs[k, 0]),
            _fmt(trace.refs[k, 1]),
            _fmt(trace.refs[k, 2]),
        )
        tail = (
            trace.fsm_mode[k],
            trace.solver_status[k],
            str(int(trace.solver_iterations[k])),
            _fmt(trace.kkt_residual[k]),
            _fmt(trace.slack[k]),
        )
        t_str = _fmt(trace.t[k])
        for i, name in enumerate(VEHICLE_NAMES):
            row = (
                t_str,
                name,
                *(_fmt(x) for x in trace.states[k, i]),
                _fmt(trace.controls[k, i, 0]),
                _fmt(trace.controls[k, i, 1]),
                *shared,
                _fmt(trace.e_tg_target[k, i]),
                _fmt(trace.e_tg_lv[k, i]),
                *tail,
            )
            lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_plot_data(trace: SimTrace, outdir: Path) -> None:
    """Per-signal time series shaped for direct plotting."""
    header = "t," + ",".join(VEHICLE_NAMES)
    for name, idx in _PLOT_SIGNALS:
        lines = [header]
        for k in range(trace.n_samples):
            lines.append(
                ",".join(
                    [_fmt(trace.t[k])]
                    + [_fmt(trace.states[k, i, idx]) for i in range(3)]
                )
            )
        (outdir / f"plot_{name}.csv").write_text(
            "\n".join(lines) + "\n", encoding="utf-8"
        )
    lines = [header]
    for k in range(trace.n_samples):
        lines.append(
            ",".join(
                [_fmt(trace.t[k])]
                + [_fmt(trace.controls[k, i, 1]) for i in range(3)]
            )
        )
    (outdir / "plot_delta.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_error_plot_data(trace: SimTrace, baseline: SimTrace, outdir: Path) -> None:
    from .scenario import error_metrics

    errors = error_metrics(trace, baseline)
    lines = ["t,delta,d_y,r"]
    for k in range(trace.n_samples):
        lines.append(
            ",".join(
                (
                    _fmt(trace.t[k]),
                    _fmt(errors.delta[k]),
                    _fmt(errors.d_y[k]),
                    _fmt(errors.r[k]),
                )
            )
        )
    (outdir / "plot_errors.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_metrics_json(report: MetricsReport, path: Path) -> None:
    path.write_text(
        json.dumps(asdict(report), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def write_run_artifacts(
    name: str,
    trace: SimTrace,
    baseline: SimTrace | None,
    output_dir: Path,
    formats: tuple[str, ...] = EXPORT_FORMATS,
) -> MetricsReport:
    rundir = output_dir / name
    rundir.mkdir(parents=True, exist_ok=True)
    report = compute_metrics(trace, baseline)
    if "csv" in formats:
        write_trace_csv(trace, rundir / "trace.csv")
        write_plot_data(trace, rundir)
        if baseline is not None:
            write_error_plot_data(trace, baseline, rundir)
    if "json" in formats:
        write_metrics_json(report, rundir / "metrics.json")
    return report


def _summary_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return _fmt(value)
    return str(value)


def write_summary(rows: list[dict[str, Any]], path: Path) -> None:
    columns = (
        "run",
        "strategy",
        "f1",
        "f2",
        "reconfigured",
        "stop_time",
        "stop_distance",
        "tv_gap_closing_time",
        "e_tg_at_t_b",
        "max_d_y_error",
        "max_r_error",
        "max_delta",
    )
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_summary_cell(row[c]) for c in columns))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _summary_row(name: str, cfg: ScenarioConfig, report: MetricsReport) -> dict:
    row = {
        "run": name,
        "strategy": cfg.strategy.value,
        "f1": cfg.fault.f1,
        "f2": cfg.fault.f2,
        "reconfigured": cfg.fault_known,
    }
    row.update(asdict(report))
    return row


def _print_report(name: str, report: MetricsReport, aborted: bool) -> None:
    def show(value: float | None, unit: str) -> str:
        return "-" if value is None else f"{value:.3f} {unit}"

    note = "  [ABORTED: non-finite state]" if aborted else ""
    print(
        f"{name}: stop_time={show(report.stop_time, 's')}"
        f"  stop_distance={show(report.stop_distance, 'm')}"
        f"  gap_closing={show(report.tv_gap_closing_time, 's')}"
        f"  e_tg_at_t_b={show(report.e_tg_at_t_b, 's')}{note}"
    )


def _run_item(item: tuple[str, ScenarioConfig]) -> tuple[str, SimTrace]:
    name, cfg = item
    return name, run_scenario(cfg)


def run_many(
    configs: dict[str, ScenarioConfig], jobs: int | None = None
) -> dict[str, SimTrace]:
    """Run each named scenario, in parallel when jobs (default: CPU count,
    capped at the number of runs) exceeds one.  Runs are independent and
    deterministic, so scheduling cannot change any result."""
    items = list(configs.items())
    if jobs is None:
        jobs = min(len(items), os.cpu_count() or 1)
    if jobs <= 1 or len(items) <= 1:
        return dict(map(_run_item, items))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return dict(pool.map(_run_item, items))


def run_suite(
    base: ScenarioConfig,
    output_dir: Path,
    jobs: int | None = None,
    formats: tuple[str, ...] = EXPORT_FORMATS,
) -> int:
    """Run the six-experiment suite and write all artifacts; 0 or 2."""
    output_dir.mkdir(parents=True, exist_ok=True)
    configs = suite_configs(base)
    traces = run_many(configs, jobs)
    baseline = traces[SUITE_BASELINE]
    rows = []
    aborted = False
    for name, _, _, _, compare in _SUITE:
        trace = traces[name]
        report = write_run_artifacts(
            name, trace, baseline if compare else None, output_dir, formats
        )
        rows.append(_summary_row(name, trace.config, report))
        _print_report(name, report, trace.aborted)
        aborted = aborted or trace.aborted
    if "csv" in formats:
        write_summary(rows, output_dir / "summary.csv")
    return 2 if aborted else 0


def _apply_overrides(data: dict[str, Any], overrides: dict[str, Any]) -> None:
    for key, value in overrides.items():
        if isinstance(value, dict):
            _apply_overrides(data.setdefault(key, {}), value)
        else:
            data[key] = value


def run(
    manifest: RunManifest,
    overrides: dict[str, Any] | None = None,
    run_name: str = "run",
    jobs: int | None = None,
) -> int:
    """Execute the manifest; returns the process exit code."""
    try:
        data = (
            load_config_dict(manifest.config_path) if manifest.config_path else {}
        )
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if overrides:
        _apply_overrides(data, overrides)
    diagnostics = validate_config(data)
    if diagnostics:
        for line in diagnostics:
            print(line, file=sys.stderr)
        print(f"{len(diagnostics)} configuration problem(s)", file=sys.stderr)
        return 1
    cfg = config_from_dict(data)
    output_dir = Path(manifest.output_dir)
    if manifest.selector == "suite":
        return run_suite(cfg, output_dir, jobs, manifest.export_formats)
    output_dir.mkdir(parents=True, exist_ok=True)
    trace = run_scenario(cfg)
    report = write_run_artifacts(
        run_name, trace, None, output_dir, manifest.export_formats
    )
    write_summary(
        [_summary_row(run_name, cfg, report)], output_dir / "summary.csv"
    )
    _print_report(run_name, report, trace.aborted)
    return 2 if trace.aborted else 0


def validate(path: str) -> int:
    """Print every configuration problem with its field path; 0 iff clean."""
    try:
        data = load_config_dict(path)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    diagnostics = validate_config(data)
    for line in diagnostics:
        print(line, file=sys.stderr)
    if diagnostics:
        print(f"{len(diagnostics)} configuration problem(s)", file=sys.stderr)
        return 1
    print(f"{path}: configuration OK")
    return 0


def _default_output() -> str:
    return os.environ.get(OUTPUT_ENV_VAR, "runs")


_STRATEGY_FLAGS = {
    "bil": Strategy.BRAKE_IN_LANE.value,
    "bol": Strategy.BRAKE_OUT_OF_LANE.value,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="failsafe-mpc",
        description="Fail-safe stop-on-shoulder simulations: single runs, "
        "the six-experiment suite, and config validation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML scenario config (default: built-in)")
    common.add_argument(
        "--output",
        default=None,
        help=f"output root (default: ${OUTPUT_ENV_VAR} or ./runs)",
    )
    common.add_argument(
        "--jobs",
        type=int,
        default=None,
        help="parallel scenario processes (default: CPU count)",
    )

    p_run = sub.add_parser("run", parents=[common], help="run one scenario")
    p_run.add_argument("--name", default="run", help="run directory name")
    p_run.add_argument(
        "--strategy",
        choices=sorted(_STRATEGY_FLAGS),
        help="override the stop strategy (bil: brake in lane, bol: brake "
        "out of lane)",
    )
    p_run.add_argument(
        "--fault-f1", type=float, help="override the steering fault factor"
    )
    p_run.add_argument(
        "--fault-f2",
        type=float,
        help="override the rear cornering stiffness fault factor",
    )
    p_run.add_argument(
        "--reconfigure",
        action="store_true",
        help="give the controller the injected fault values",
    )

    sub.add_parser(
        "suite", parents=[common], help="run the six-experiment suite"
    )

    p_val = sub.add_parser("validate", help="check a config file")
    p_val.add_argument("config_file")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "validate":
        return validate(args.config_file)

    manifest = RunManifest(
        config_path=args.config,
        output_dir=args.output if args.output is not None else _default_output(),
        selector="suite" if args.command == "suite" else "single",
    )
    overrides: dict[str, Any] = {}
    run_name = "run"
    if args.command == "run":
        run_name = args.name
        if args.strategy:
            overrides["strategy"] = _STRATEGY_FLAGS[args.strategy]
        if args.fault_f1 is not None:
            overrides.setdefault("fault", {})["f1"] = args.fault_f1
        if args.fault_f2 is not None:
            overrides.setdefault("fault", {})["f2"] = args.fault_f2
        if args.reconfigure:
            overrides["fault_known"] = True
    try:
        return run(manifest, overrides, run_name=run_name, jobs=args.jobs)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
