"""Command line entry point: ``gadmm-lab run|compare|recipe``.

Exit codes: 0 success, 2 configuration error, 3 divergence, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness
from .errors import ComparisonError, ConfigError, DivergenceError, InvalidArgumentError

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4

# flag dest -> config key; values are passed through as text so that the
# config parser does all type checking in one place
FLAG_KEYS = {
    "workers": "problem.workers", "dim": "problem.dim", "samples": "problem.samples",
    "noise_std": "problem.noise_std", "condition": "problem.condition",
    "heterogeneity": "problem.heterogeneity", "loss": "problem.loss", "mu": "problem.mu",
    "data_seed": "problem.data_seed",
    "topology": "topology.kind", "edges": "topology.edges", "shuffle_period": "topology.shuffle_period",
    "rho": "solver.rho", "rounds": "solver.rounds", "target_error": "solver.target_error",
    "error_kind": "solver.error_kind", "step_size": "solver.step_size", "local_steps": "solver.local_steps",
    "bits": "compression.bits", "censor_omega": "compression.censor_omega",
    "censor_zeta": "compression.censor_zeta", "censor_norm": "compression.censor_norm",
    "channel": "channel.mode", "snr_db": "channel.snr_db", "bandwidth_hz": "channel.bandwidth_hz",
    "slot_sec": "channel.slot_sec", "noise_psd": "channel.noise_psd", "noise_var": "channel.noise_var",
    "power_budget": "channel.power_budget", "blocklength": "channel.blocklength",
    "pkt_error": "channel.pkt_error", "rate_model": "channel.rate_model",
    "bandwidth_multiplier": "channel.bandwidth_multiplier",
    "seed": "experiment.seed", "trials": "experiment.trials", "summary_target": "experiment.summary_target",
}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config file (flags override its keys)")
    p.add_argument("--variant", action="append", help="solver variant; repeat for several")
    p.add_argument("--out", help="trace CSV path (single run) or output directory")
    p.add_argument("--csv", nargs="+", help="load shards from CSV files instead of synthesizing data")
    p.add_argument("--worker-column", action="store_true", help="first CSV column is the worker id")
    p.add_argument("--static-channel", action="store_true", help="keep the first fading draw for all rounds")
    p.add_argument("--no-fading", action="store_true", help="unit channel gains")
    p.add_argument("--gnuplot", action="store_true", help="also write plot.gp")
    p.add_argument("--dump-topology", help="write the initial topology edge list to this path")
    g = p.add_argument_group("problem")
    for flag in ("workers", "dim", "samples", "data-seed"):
        g.add_argument(f"--{flag}", type=int)
    for flag in ("noise-std", "condition", "heterogeneity", "mu"):
        g.add_argument(f"--{flag}", type=float)
    g.add_argument("--loss", choices=("least-squares", "ridge", "logistic"))
    g = p.add_argument_group("topology")
    g.add_argument("--topology", choices=("chain", "random-bipartite"))
    g.add_argument("--edges", type=int)
    g.add_argument("--shuffle-period", type=int)
    g = p.add_argument_group("solver")
    g.add_argument("--rho", type=float)
    g.add_argument("--rounds", type=int)
    g.add_argument("--target-error", type=float)
    g.add_argument("--error-kind", choices=("relative", "absolute"))
    g.add_argument("--step-size", type=float)
    g.add_argument("--local-steps", type=int)
    g = p.add_argument_group("compression")
    g.add_argument("--bits", type=int)
    g.add_argument("--censor-omega", type=float)
    g.add_argument("--censor-zeta", type=float)
    g.add_argument("--censor-norm", choices=("inf", "l2"))
    g = p.add_argument_group("channel")
    g.add_argument("--channel", choices=("digital", "analog"))
    for flag in ("snr-db", "bandwidth-hz", "slot-sec", "noise-psd", "noise-var", "power-budget", "pkt-error"):
        g.add_argument(f"--{flag}", type=float)
    g.add_argument("--blocklength", type=int)
    g.add_argument("--rate-model", choices=("shannon", "finite-blocklength"))
    g.add_argument("--bandwidth-multiplier", type=int)
    g = p.add_argument_group("experiment")
    g.add_argument("--seed", type=int)
    g.add_argument("--trials", type=int)
    g.add_argument("--summary-target", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gadmm-lab", description="Communication-efficient ADMM simulator.")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_flags(sub.add_parser("run", help="run one or more variants"))
    cmp = sub.add_parser("compare", help="ratio table of summary CSVs against the first row")
    cmp.add_argument("summaries", nargs="+", help="summary.csv files")
    cmp.add_argument("--out", help="write the table here instead of stdout")
    rec = sub.add_parser("recipe", help="run a pinned benchmark recipe")
    rec.add_argument("name", choices=harness.RECIPES)
    rec.add_argument("--seed", type=int)
    rec.add_argument("--out", help="output directory (default: the recipe name)")
    rec.add_argument("--gnuplot", action="store_true")
    rec.add_argument("--print-config", action="store_true", help="print the recipe config and exit")
    return parser


def _overrides(args) -> dict:
    out = {key: str(getattr(args, dest)) for dest, key in FLAG_KEYS.items() if getattr(args, dest) is not None}
    if args.variant:
        out["solver.variants"] = ", ".join(args.variant)
    if args.csv:
        out["problem.source"] = "csv"
        out["problem.csv_paths"] = ", ".join(args.csv)
    if args.worker_column:
        out["problem.csv_worker_column"] = "true"
    if args.static_channel:
        out["channel.time_varying"] = "false"
    if args.no_fading:
        out["channel.fading"] = "false"
    if args.gnuplot:
        out["experiment.gnuplot"] = "true"
    return out


def _print_summary(rows) -> None:
    sys.stdout.write(harness.summary_csv_text(rows))


def cmd_run(args) -> int:
    text = Path(args.config).read_text() if args.config else ""
    config = harness.loads_config(text, _overrides(args))
    out = args.out or config.experiment.out
    single = len(config.solver.variants) == 1 and config.experiment.trials == 1
    if args.dump_topology:
        problem = harness.build_problem(config)
        topo = harness.build_graph(config, problem.num_workers, config.experiment.seed)
        Path(args.dump_topology).write_text(topo.edge_list_text())
    if single and out.endswith(".csv"):
        result = harness.run_experiment(config, write=False)
        (trace,) = result.traces.values()
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        trace.write_csv(out)
    else:
        result = harness.run_experiment(config, out_dir=out)
    _print_summary(result.summary)
    return EXIT_OK


def cmd_compare(args) -> int:
    rows = []
    for path in args.summaries:
        rows.extend(harness.read_summary(path))
    text = harness.comparison_csv_text(harness.compare_variants(rows))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_recipe(args) -> int:
    config = harness.recipe(args.name, seed=args.seed, out=args.out or args.name)
    if args.gnuplot:
        from dataclasses import replace
        config = replace(config, experiment=replace(config.experiment, gnuplot=True))
    if args.print_config:
        sys.stdout.write(harness.dumps_config(config))
        return EXIT_OK
    result = harness.run_experiment(config)
    _print_summary(result.summary)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    handler = {"run": cmd_run, "compare": cmd_compare, "recipe": cmd_recipe}[args.command]
    try:
        return handler(args)
    except DivergenceError as exc:
        print(f"gadmm-lab: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, ComparisonError, InvalidArgumentError) as exc:
        print(f"gadmm-lab: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"gadmm-lab: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
