"""
Command-line entrypoint for the joint-limit control simulator.

Verbs:
    run <config>        simulate one experiment (or a randomised batch when the
                        config has a `batch` section); writes trace CSV, report,
                        summary row and plots
    compare <config>    paired runs of the config's `compare_laws`; breaking-force
                        bisection when the config applies a force ramp
    selftest            structural invariant suite, printed as a pass/fail matrix
    plot <trace.csv>    re-render the figures of a saved trace

Exit codes:
    0  clean run / all checks passed
    1  config error, infeasible state or reference, failed selftest
    2  joint-limit violation (batch: any run failing its checks)
    3  numerical divergence

`<config>` is a path to a JSON file or the name of a shipped preset
(exp1_setpoint, exp2_sinusoid, exp3_force, fuzz_invariance).

Usage:
    python joint_limit_control/main.py run exp1_setpoint --law proposed
    python joint_limit_control/main.py compare exp3_force --workers 2
    python joint_limit_control/main.py plot out/exp1_setpoint/exp1_setpoint_classical.csv
"""

import argparse
import logging
import math
import os
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd
from dotenv import load_dotenv

# Support both direct script execution and module import
if __name__ == "__main__" and __package__ is None:
    parent_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    sys.path.insert(0, parent_dir)
    __package__ = "joint_limit_control"

from joint_limit_control.analysis import RunReport, report
from joint_limit_control.exceptions import ConfigError, OutOfFeasibleSpace
from joint_limit_control.plotting import plot_comparison, plot_trace_file
from joint_limit_control.schemas import ExperimentConfig, load_experiment_config, resolve_config_path
from joint_limit_control.selftest import DEFAULT_SAMPLES, run_selftest
from joint_limit_control.simulation import (
    BreakingForce,
    breaking_force_ratio,
    force_ramp_experiment,
    fuzz_configs,
    run,
    run_batch,
)
from joint_limit_control.trace import write_trace_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VIOLATION = 2
EXIT_DIVERGENCE = 3

LAWS = ["classical", "proposed", "setpoint", "substituted", "none"]
DEFAULT_PRESETS_DIR = Path(__file__).resolve().parent / "presets"


def _banner(title: str) -> None:
    print("\n" + "=" * 80)
    print(title)
    print("=" * 80)


def _out_dir(args: argparse.Namespace, config: ExperimentConfig) -> Path:
    base = args.out_dir or config.output.out_dir or os.getenv("JLC_OUT_DIR", "out")
    return Path(base) / config.name


def _load(args: argparse.Namespace) -> ExperimentConfig:
    presets = os.getenv("JLC_PRESETS_DIR") or DEFAULT_PRESETS_DIR
    return load_experiment_config(resolve_config_path(args.config, presets))


def _write_report(rep: RunReport, out_dir: Path, stem: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{stem}_report.txt").write_text(rep.to_text() + "\n", encoding="utf-8")
    pd.DataFrame([rep.to_row()]).to_csv(out_dir / f"{stem}_summary.csv", index=False)


def _exit_code(rep: RunReport) -> int:
    if rep.diverged:
        return EXIT_DIVERGENCE
    if rep.violation:
        return EXIT_VIOLATION
    return EXIT_OK


# ============================================================================
# Commands
# ============================================================================

def cmd_run(args: argparse.Namespace) -> int:
    config = _load(args)
    if config.batch is not None:
        return _run_batch(args, config)

    law = args.law or config.controller.law
    sim_config = config.to_sim_config(law=law, dt=args.dt)
    out_dir = _out_dir(args, config)
    stem = f"{config.name}_{law}"

    _banner(f"🤖 {config.name}: {law} law")
    print(f"Description:        {config.description or '-'}")
    print(f"Duration:           {sim_config.duration} s  (dt = {sim_config.dt} s, {sim_config.integrator})")
    print(f"Output:             {out_dir}")
    print("=" * 80)

    trace = run(sim_config)
    rep = report(trace, sim_config.limits)

    if config.output.write_trace:
        trace_path = write_trace_csv(trace, out_dir / f"{stem}.csv")
        if config.output.plots and not args.no_plots:
            plot_trace_file(trace_path, out_dir)
    _write_report(rep, out_dir, stem)

    _banner("📋 REPORT")
    print(rep.to_text())
    code = _exit_code(rep)
    print("\n" + "=" * 80)
    if code == EXIT_OK:
        print("✅ Run completed within the joint limits")
    elif code == EXIT_VIOLATION:
        print(f"⚠️  Joint limits violated ({rep.violation_episodes} episode(s))")
    else:
        print("❌ Run diverged")
    print("=" * 80 + "\n")
    return code


def _run_batch(args: argparse.Namespace, config: ExperimentConfig) -> int:
    seed = config.seed if args.seed is None else args.seed
    workers = args.workers or int(os.getenv("JLC_WORKERS", "1"))
    base = config.to_sim_config(law=args.law or config.controller.law, dt=args.dt)
    configs = fuzz_configs(base, config.batch.count, seed, config.batch.ranges())
    out_dir = _out_dir(args, config)

    _banner(f"🎲 {config.name}: {len(configs)} randomised runs (seed {seed}, {workers} worker(s))")
    results = run_batch(configs, workers=workers)

    out_dir.mkdir(parents=True, exist_ok=True)
    summary_path = out_dir / f"{config.name}_batch.csv"
    pd.DataFrame([r.to_row() for r in results]).to_csv(summary_path, index=False)

    reports = [r.report for r in results if r.report is not None]
    errors = [r for r in results if r.report is None]
    violations = sum(r.violation for r in reports)
    not_converged = sum(not r.converged for r in reports)
    monotonicity = sum(r.monotonicity_violations > 0 or r.analytic_v_dot_max > 0 for r in reports)
    diverged = sum(r.diverged for r in reports)

    print(f"Limit violations:           {violations}/{len(results)}")
    print(f"Not converged (1e-3):       {not_converged}/{len(results)}")
    print(f"V monotonicity failures:    {monotonicity}/{len(results)}")
    print(f"Diverged:                   {diverged}/{len(results)}")
    print(f"Errors:                     {len(errors)}/{len(results)}")
    for r in errors:
        print(f"   ❌ {r.name}: {r.error}")
    print(f"Summary:                    {summary_path}")

    print("\n" + "=" * 80)
    if diverged:
        print("❌ Batch has diverged runs")
        print("=" * 80 + "\n")
        return EXIT_DIVERGENCE
    if violations or not_converged or monotonicity or errors:
        print("⚠️  Batch failed its checks")
        print("=" * 80 + "\n")
        return EXIT_VIOLATION
    print("✅ All runs stayed inside the limits, converged and kept V non-increasing")
    print("=" * 80 + "\n")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    config = _load(args)
    laws: List[str] = list(config.compare_laws)
    out_dir = _out_dir(args, config)
    workers = args.workers or int(os.getenv("JLC_WORKERS", "1"))

    _banner(f"⚖️  {config.name}: comparing {', '.join(laws)}")

    rows = []
    trace_paths = {}
    code = EXIT_OK
    for i, law in enumerate(laws):
        label = law if laws.index(law) == i else f"{law}#{i + 1}"
        sim_config = config.to_sim_config(law=law, dt=args.dt)
        trace = run(sim_config)
        rep = report(trace, sim_config.limits)
        if rep.diverged:
            code = EXIT_DIVERGENCE
        if config.output.write_trace:
            trace_paths[label] = write_trace_csv(trace, out_dir / f"{config.name}_{label}.csv")
        _write_report(rep, out_dir, f"{config.name}_{label}")
        rows.append({
            "law": label,
            "violation": rep.violation,
            "violation_episodes": rep.violation_episodes,
            **{f"min_margin_{j + 1}_deg": math.degrees(m) for j, m in enumerate(rep.min_margin)},
            "final_q_err": rep.final_q_err,
            "final_xi_err": rep.final_xi_err,
            "max_abs_tau": rep.max_abs_tau,
        })

    if config.force.kind == "ramp" and config.force.magnitude_rate > 0:
        base = config.to_sim_config(law=laws[0], dt=args.dt)
        forces: List[BreakingForce] = force_ramp_experiment(
            base,
            laws=laws,
            tolerance=config.force.tolerance,
            settle_time=config.force.settle_time,
            workers=workers,
        )
        for row, bf in zip(rows, forces):
            row["breaking_force"] = bf.describe()
        ratio = breaking_force_ratio(forces[-1], forces[0])
        lower_bound = not forces[-1].broke
        zero_baseline = forces[0].force == 0.0
    else:
        ratio = None
        lower_bound = zero_baseline = False

    table = pd.DataFrame(rows)
    out_dir.mkdir(parents=True, exist_ok=True)
    table.to_csv(out_dir / f"{config.name}_comparison.csv", index=False)
    if trace_paths and config.output.plots and not args.no_plots:
        plot_comparison(trace_paths, out_dir / f"{config.name}_comparison.png", config.name)

    _banner("📋 COMPARISON")
    print(table.to_string(index=False))
    if ratio is not None:
        if zero_baseline:
            reason = "broke at 0 N (limit reached before the ramp acted)" if forces[0].broke else "held to a 0 N cap"
            value = "unbounded" if math.isinf(ratio) else "undefined"
            print(f"\n⚠️  {laws[0]} baseline {reason}")
            print(f"Breaking-force ratio {laws[-1]}/{laws[0]}: {value}")
        else:
            prefix = ">= " if lower_bound else ""
            print(f"\nBreaking-force ratio {laws[-1]}/{laws[0]}: {prefix}{ratio:.2f}")
    print("\n" + "=" * 80 + "\n")
    return code


def cmd_selftest(args: argparse.Namespace) -> int:
    _banner("🔬 Invariant self-test")
    if args.samples < 1:
        raise ConfigError("--samples must be at least 1")
    result = run_selftest(samples=args.samples, seed=args.seed or 0)
    print(result.to_table())
    print("\n" + "=" * 80)
    if result.passed:
        print("✅ All invariants hold")
        print("=" * 80 + "\n")
        return EXIT_OK
    print(f"❌ Failed: {', '.join(result.failed)}")
    print("=" * 80 + "\n")
    return EXIT_CONFIG


def cmd_plot(args: argparse.Namespace) -> int:
    try:
        paths = plot_trace_file(args.trace, args.out_dir)
    except (OSError, ValueError) as e:
        print(f"❌ Cannot plot {args.trace}: {e}")
        return EXIT_CONFIG
    for path in paths:
        print(f"🖼️  {path}")
    return EXIT_OK


# ============================================================================
# Argument parsing
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Joint-limit-safe passivity control - desk-scale two-link simulator"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("config", help="Config JSON path or preset name (e.g. 'exp1_setpoint')")
        p.add_argument("--dt", type=float, help="Override the integration step [s]")
        p.add_argument("--seed", type=int, help="Override the batch seed")
        p.add_argument("--out-dir", help="Artifact directory (default: JLC_OUT_DIR or 'out')")
        p.add_argument("--workers", type=int, help="Parallel processes for batches and bisection (default: JLC_WORKERS)")
        p.add_argument("--no-plots", action="store_true", help="Skip PNG figures")

    p_run = sub.add_parser("run", help="Simulate one experiment or a randomised batch")
    experiment_flags(p_run)
    p_run.add_argument("--law", choices=LAWS, help="Override the control law")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="Paired runs of the config's compare_laws")
    experiment_flags(p_cmp)
    p_cmp.set_defaults(func=cmd_compare, law=None)

    p_self = sub.add_parser("selftest", help="Run the invariant suite")
    p_self.add_argument("--seed", type=int, help="Sampling seed (default 0)")
    p_self.add_argument("--samples", type=int, default=DEFAULT_SAMPLES, help=f"Random samples per check (default {DEFAULT_SAMPLES})")
    p_self.set_defaults(func=cmd_selftest)

    p_plot = sub.add_parser("plot", help="Render figures from a saved trace CSV")
    p_plot.add_argument("trace", help="Trace CSV written by 'run' or 'compare'")
    p_plot.add_argument("--out-dir", help="Where to write the PNGs (default: next to the trace)")
    p_plot.set_defaults(func=cmd_plot)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main execution entrypoint."""
    load_dotenv()
    logging.basicConfig(
        level=os.getenv("JLC_LOG_LEVEL", "INFO").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"❌ Configuration error: {e}")
        return EXIT_CONFIG
    except OutOfFeasibleSpace as e:
        print(f"❌ Infeasible state or reference: {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
