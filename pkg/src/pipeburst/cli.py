"""Command-line entry point.

Every subcommand takes a scenario (preset name, scenario file or run
manifest) and the common flags ``--seed``, ``--steps`` and ``--out``.
Exit status is 0 on success, 1 when ``validate`` finds a failing check and
2 for usage, input or numerical errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .ekf import FilterError
from .hydraulics import HydraulicsError
from .moc import MocError
from .runner import (
    add_measurement_noise,
    asymptotic_mean,
    compare_leaks,
    estimate,
    read_measurements,
    read_timeseries,
    simulate,
    simulate_measurements,
    write_estimates,
    write_measurements,
    write_run,
)
from .scenario import PRESETS, ScenarioError, load_scenario

DETECTION_THRESHOLD = 0.15 * 0.0063  # m3/s; leak estimates above this are reported as leaks


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(2, f"\n{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="random seed (burst draws for simulate, noise otherwise)")
    common.add_argument("--steps", type=int, help="number of time steps (overrides the scenario)")
    common.add_argument("--out", type=Path, help="output directory")

    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("scenario", help=f"preset ({', '.join(PRESETS)}), scenario file or manifest")

    p = _Parser(prog="pipeburst", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[scen, common], help="truth run with burst model")
    s.add_argument("--mode", choices=["deterministic", "probabilistic", "none"], help="burst model")

    m = sub.add_parser("measure", parents=[scen, common], help="noisy end-head measurements")
    m.add_argument("--truth", type=Path, help="truth time series (default: simulate the scenario)")
    m.add_argument("--variance", type=float, help="noise variance (default: scenario value)")

    e = sub.add_parser("estimate", parents=[scen, common], help="EKF over a measurement file")
    e.add_argument("--measurements", type=Path, help="measurement file (default: simulate and measure)")
    e.add_argument("--threshold", type=float, default=DETECTION_THRESHOLD, help="leak report threshold, m3/s")

    c = sub.add_parser("compare", parents=[common], help="truth vs estimate leak summary")
    c.add_argument("truth", type=Path)
    c.add_argument("estimate", type=Path)
    c.add_argument("--fraction", type=float, default=0.25, help="final fraction of the run averaged")

    v = sub.add_parser("validate", parents=[common], help="run the acceptance checks on the presets")
    v.add_argument("--skip-ekf", action="store_true", help="skip the EKF estimation check")
    return p


def _config(args):
    cfg = load_scenario(args.scenario)
    mode = getattr(args, "mode", None)
    burst_seed = args.seed if args.command == "simulate" else None
    noise_seed = args.seed if args.command != "simulate" else None
    return cfg.with_overrides(mode=mode, seed=burst_seed, steps=args.steps, noise_seed=noise_seed,
                              output_dir=args.out)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    run = simulate(cfg)
    paths = write_run(run, cfg.output_dir)
    if run.events:
        for e in run.events:
            how = "forced" if e.forced else f"stress {e.stress / 1e6:.3f} MPa"
            print(f"burst node {e.node + 1} at step {e.step} (t={e.time:.3f} s, {how})")
    else:
        print("no burst events")
    peak = run.head.max(axis=0)
    print("peak head per node: " + ", ".join(f"H{i + 1}={h:.2f}" for i, h in enumerate(peak)))
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return 0


def cmd_measure(args) -> int:
    cfg = _config(args)
    variance = cfg.noise_variance if args.variance is None else args.variance
    if args.truth is not None:
        ts = read_timeseries(args.truth)
        times, z_clean = ts.times, ts.head[:, [0, -1]]
    else:
        run = simulate(cfg)
        times, z_clean = run.times, run.head[:, [0, -1]]
    z = add_measurement_noise(z_clean, variance, cfg.noise_seed)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "measurements.csv"
    write_measurements(times, z, path)
    eps = z - z_clean
    print(f"{len(z)} samples, noise variance {variance:g} (sample {np.var(eps):.4g}), seed {cfg.noise_seed}")
    print(f"wrote {path}")
    return 0


def cmd_estimate(args) -> int:
    cfg = _config(args)
    if args.measurements is not None:
        _, z = read_measurements(args.measurements)
        if args.steps is not None:
            z = z[: args.steps + 1]
    else:
        z = simulate_measurements(simulate(cfg), cfg.noise_variance, cfg.noise_seed)
    run = estimate(cfg, z)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "estimates.csv"
    write_estimates(run, path)
    asym = asymptotic_mean(run.leak)
    for j, q in enumerate(asym, start=2):
        flag = "LEAK" if q > args.threshold else "ok"
        print(f"node {j}: asymptotic leak estimate {q:.6f} m3/s [{flag}]")
    print(f"wrote {path}")
    return 0


def cmd_compare(args) -> int:
    truth = read_timeseries(args.truth)
    est = read_timeseries(args.estimate)
    m = min(len(truth.times), len(est.times))
    summary = compare_leaks(truth.leak[:m], est.leak[:m], args.fraction)
    print("node  truth       estimate    abs_error")
    for j, (t, e, d) in enumerate(zip(summary["truth"], summary["estimate"], summary["abs_error"]), start=2):
        print(f"{j:>4}  {t:.6f}    {e:.6f}    {d:.6f}")
    print(f"max abs error {np.max(summary['abs_error']):.6f} m3/s")
    return 0


def cmd_validate(args) -> int:
    from .validation import run_all

    results = run_all(include_ekf=not args.skip_ekf)
    for r in results:
        print(r.line())
    failed = [r.id for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed" + (f"; failed: {', '.join(failed)}" if failed else ""))
    return 1 if failed else 0


COMMANDS = {
    "simulate": cmd_simulate,
    "measure": cmd_measure,
    "estimate": cmd_estimate,
    "compare": cmd_compare,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ScenarioError, HydraulicsError, MocError, FilterError, ValueError, OSError) as exc:
        print(f"pipeburst {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
