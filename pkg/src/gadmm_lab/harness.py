"""Experiment configuration, batch execution and named recipes.

Config files are INI-style, one section per module::

    [problem]
    workers = 50
    dim = 6
    ...
    [solver]
    variants = gadmm, q-gadmm
    rho = 1.0

Every key is optional (defaults below); unknown sections or keys are
rejected. Floats are written with ``repr`` so a written config reads back
to an identical value.
"""
from __future__ import annotations

import configparser
import csv
import io
import math
import os
import re
import types
import typing
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .channel import LinkBudget
from .compression import CensorSchedule
from .engine import FADMM_VARIANTS, VARIANTS, ObjectiveError, SolverConfig, run
from .errors import ComparisonError, ConfigError, GadmmLabError
from .problem import LOSS_KINDS, ProblemInstance, load_csv_shards, make_synthetic
from .topology import Topology, build_chain, random_bipartite
from .trace import MetricsTrace

THREADS_ENV = "GADMM_LAB_THREADS"
_SCALED_DFADMM = re.compile(r"^d-fadmm-x(\d+)$")


@dataclass(frozen=True)
class ProblemSpec:
    source: str = "synthetic"
    workers: int = 10
    dim: int = 6
    samples: int = 20
    noise_std: float = 0.1
    condition: float = 100.0
    heterogeneity: float = 0.5
    model_scale: float = 1.0
    loss: str = "least-squares"
    mu: float = 0.0
    data_seed: int | None = None  # None follows the experiment seed
    csv_paths: tuple[str, ...] = ()
    csv_worker_column: bool = False


@dataclass(frozen=True)
class TopologySpec:
    kind: str = "chain"
    edges: int | None = None  # random-bipartite only; None means 2 (N - 1)
    shuffle_period: int = 10
    seed: int | None = None


@dataclass(frozen=True)
class SolverSpec:
    variants: tuple[str, ...] = ("gadmm",)
    rho: float = 1.0
    rounds: int = 2000
    target_error: float = math.inf
    error_kind: str = "relative"
    step_size: float | None = None
    local_steps: int = 1


@dataclass(frozen=True)
class CompressionSpec:
    bits: int = 2
    censor_omega: float = 1.0
    censor_zeta: float = 0.9
    censor_norm: str = "inf"


@dataclass(frozen=True)
class ChannelSpec:
    mode: str = "digital"
    snr_db: float = 10.0
    bandwidth_hz: float = 1e7
    slot_sec: float = 1e-3
    noise_psd: float = 1e-9
    noise_var: float = 0.0
    power_budget: float | None = None
    blocklength: int = 1000
    pkt_error: float = 1e-3
    rate_model: str = "shannon"
    bandwidth_multiplier: int = 1
    time_varying: bool = True
    fading: bool = True
    per_subcarrier: bool = False


@dataclass(frozen=True)
class ExperimentSpec:
    name: str = "experiment"
    seed: int = 0
    trials: int = 1
    out: str = "results"
    summary_target: float = 1e-3
    gnuplot: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    topology: TopologySpec = field(default_factory=TopologySpec)
    solver: SolverSpec = field(default_factory=SolverSpec)
    compression: CompressionSpec = field(default_factory=CompressionSpec)
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)

    def validate(self) -> "ExperimentConfig":
        p, t, s, c, ch, e = (self.problem, self.topology, self.solver, self.compression,
                             self.channel, self.experiment)
        checks = [
            ("problem.source", p.source in ("synthetic", "csv")),
            ("problem.workers", p.workers >= 1),
            ("problem.dim", p.dim >= 1),
            ("problem.samples", p.samples >= 1),
            ("problem.noise_std", p.noise_std >= 0),
            ("problem.condition", p.condition >= 1),
            ("problem.loss", p.loss in LOSS_KINDS),
            ("problem.mu", p.mu >= 0 and not (p.loss == "least-squares" and p.mu != 0)),
            ("problem.csv_paths", p.source != "csv" or len(p.csv_paths) > 0),
            ("topology.kind", t.kind in ("chain", "random-bipartite")),
            ("topology.shuffle_period", t.shuffle_period >= 1),
            ("solver.variants", len(s.variants) > 0 and all(_base_variant(v) in VARIANTS or v == "fadmm"
                                                            for v in s.variants)),
            ("solver.rho", s.rho > 0),
            ("solver.rounds", s.rounds >= 0),
            ("solver.target_error", s.target_error >= 0),
            ("solver.error_kind", s.error_kind in ("relative", "absolute")),
            ("solver.step_size", s.step_size is None or s.step_size > 0),
            ("solver.local_steps", s.local_steps >= 1),
            ("compression.bits", c.bits >= 1),
            ("compression.censor_omega", c.censor_omega >= 1),
            ("compression.censor_zeta", 0 < c.censor_zeta < 1),
            ("compression.censor_norm", c.censor_norm in ("inf", "l2")),
            ("channel.mode", ch.mode in ("digital", "analog")),
            ("channel.bandwidth_hz", ch.bandwidth_hz > 0),
            ("channel.slot_sec", ch.slot_sec > 0),
            ("channel.noise_psd", ch.noise_psd > 0),
            ("channel.noise_var", ch.noise_var >= 0),
            ("channel.power_budget", ch.power_budget is None or ch.power_budget > 0),
            ("channel.blocklength", ch.blocklength >= 1),
            ("channel.pkt_error", 0 < ch.pkt_error < 1),
            ("channel.rate_model", ch.rate_model in ("shannon", "finite-blocklength")),
            ("channel.bandwidth_multiplier", ch.bandwidth_multiplier >= 1),
            ("experiment.trials", e.trials >= 1),
            ("experiment.summary_target", e.summary_target >= 0),
        ]
        bad = [k for k, ok in checks if not ok]
        if bad:
            raise ConfigError("invalid configuration values", bad)
        return self


# ---------------------------------------------------------------- (de)serialization

def _hints(cls):
    return typing.get_type_hints(cls)


def _to_text(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return str(value)


def _from_text(text: str, hint):
    text = text.strip()
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin in (typing.Union, types.UnionType) and type(None) in args:
        if text.lower() == "none":
            return None
        hint = next(a for a in args if a is not type(None))
        origin = typing.get_origin(hint)
    if origin is tuple:
        return tuple(p.strip() for p in text.split(",") if p.strip())
    if hint is bool:
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if hint is int:
        return int(text)
    if hint is float:
        return float(text)
    return text


def dumps_config(config: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    for sec in fields(config):
        spec = getattr(config, sec.name)
        parser[sec.name] = {f.name: _to_text(getattr(spec, f.name)) for f in fields(spec)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def loads_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse config text; ``overrides`` maps ``section.key`` to text values and wins over the file."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    raw = {s: dict(parser[s]) for s in parser.sections()}
    for dotted, value in (overrides or {}).items():
        sec, _, key = dotted.partition(".")
        raw.setdefault(sec, {})[key] = value
    sections = {f.name: f for f in fields(ExperimentConfig)}
    unknown = [s for s in raw if s not in sections]
    parts, bad = {}, []
    for name, f in sections.items():
        spec_cls = _hints(ExperimentConfig)[name]
        hints = _hints(spec_cls)
        given = raw.get(name, {})
        unknown += [f"{name}.{k}" for k in given if k not in hints]
        values = {}
        for key, txt in given.items():
            if key not in hints:
                continue
            try:
                values[key] = _from_text(txt, hints[key])
            except ValueError:
                bad.append(f"{name}.{key}")
        parts[name] = spec_cls(**values)
    if unknown:
        raise ConfigError("unknown config keys", unknown)
    if bad:
        raise ConfigError("unparseable config values", bad)
    return ExperimentConfig(**parts).validate()


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    return loads_config(Path(path).read_text(), overrides)


# ---------------------------------------------------------------- building blocks

def _base_variant(label: str) -> str:
    return "d-fadmm" if _SCALED_DFADMM.match(label) else label


def resolve_variant(label: str, channel: ChannelSpec) -> str:
    if label == "fadmm":
        return "a-fadmm" if channel.mode == "analog" else "d-fadmm"
    return label


def resolved_labels(config: ExperimentConfig) -> list[str]:
    return list(dict.fromkeys(resolve_variant(v, config.channel) for v in config.solver.variants))


def build_problem(config: ExperimentConfig) -> ProblemInstance:
    p = config.problem
    if p.source == "csv":
        paths = list(p.csv_paths)
        return load_csv_shards(paths if len(paths) > 1 else paths[0], worker_column=p.csv_worker_column,
                               loss_kind=p.loss, mu=p.mu)
    seed = config.experiment.seed if p.data_seed is None else p.data_seed
    return make_synthetic(p.workers, p.dim, p.samples, noise_std=p.noise_std, condition=p.condition,
                          heterogeneity=p.heterogeneity, model_scale=p.model_scale, loss_kind=p.loss,
                          mu=p.mu, seed=seed)


def build_graph(config: ExperimentConfig, num_workers: int, seed: int) -> Topology:
    t = config.topology
    if t.kind == "chain":
        return build_chain(num_workers)
    rng = np.random.default_rng([seed if t.seed is None else t.seed, 17])
    return random_bipartite(num_workers, rng, num_edges=t.edges)


def solver_config(config: ExperimentConfig, label: str) -> SolverConfig:
    s, c, ch = config.solver, config.compression, config.channel
    label = resolve_variant(label, ch)
    multiplier = ch.bandwidth_multiplier
    m = _SCALED_DFADMM.match(label)
    if m:
        label, multiplier = "d-fadmm", int(m.group(1))
    link = LinkBudget.from_db(ch.snr_db, bandwidth_hz=ch.bandwidth_hz, blocklength=ch.blocklength,
                              target_error=ch.pkt_error, noise_psd=ch.noise_psd, slot_sec=ch.slot_sec,
                              rate_model=ch.rate_model)
    censor = CensorSchedule(c.censor_omega, c.censor_zeta, c.censor_norm)
    return SolverConfig(
        variant=label, rho=s.rho, max_rounds=s.rounds, target_error=s.target_error,
        error_kind=s.error_kind, bits=c.bits, censor=censor, shuffle_period=config.topology.shuffle_period,
        step_size=s.step_size, local_steps=s.local_steps, link=link, noise_variance=ch.noise_var,
        time_varying=ch.time_varying, power_budget=ch.power_budget, bandwidth_multiplier=multiplier,
        fading=ch.fading, per_subcarrier_fading=ch.per_subcarrier)


def trace_name(label: str, trial: int) -> str:
    return f"{label}_trial{trial}.csv"


# ---------------------------------------------------------------- execution

SUMMARY_COLUMNS = ("variant", "problem_hash", "trials", "reached", "rounds_to_target", "cum_bits",
                   "cum_joules", "msgs_sent", "msgs_censored", "uplink_slots")


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    traces: dict  # (variant label, trial) -> MetricsTrace
    summary: list[dict]
    files: list[Path]
    problem_hash: str


def _max_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer", [THREADS_ENV]) from None
    return cap


def run_trials(config: ExperimentConfig, problem: ProblemInstance | None = None) -> dict:
    """Run every (variant, trial) pair; returns ``{(label, trial): trace}``."""
    config.validate()
    problem = problem or build_problem(config)
    objective = ObjectiveError(problem, config.solver.error_kind)
    labels = resolved_labels(config)
    jobs = [(label, t) for label in labels for t in range(config.experiment.trials)]

    def one(job):
        label, t = job
        seed = config.experiment.seed + t
        sc = solver_config(config, label)
        topo = None if sc.variant in FADMM_VARIANTS or sc.variant in ("ps-admm", "fedavg-gd", "quantized-gd") \
            else build_graph(config, problem.num_workers, seed)
        trace = run(problem, topo, sc, seed=seed, objective=objective)
        trace.variant = label
        return job, trace

    threads = min(_max_threads(), len(jobs))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            done = list(pool.map(one, jobs))
    else:
        done = [one(j) for j in jobs]
    return dict(done)


def summarize(traces: dict, target: float) -> list[dict]:
    """Per-variant medians over trials of the counters at the first row reaching ``target``."""
    labels = list(dict.fromkeys(label for label, _ in traces))
    rows = []
    for label in labels:
        group = [tr for (lab, _), tr in sorted(traces.items()) if lab == label]
        hashes = {tr.problem_hash for tr in group}
        if len(hashes) != 1:
            raise ComparisonError(f"{label}: trials ran on different problems")
        reached = [tr.first_reaching(target) is not None for tr in group]

        def med(name):
            vals = []
            for tr in group:
                if name not in tr.columns:
                    return math.nan
                vals.append(tr.value_at_target(name, target))
            return float(np.median(vals))

        rows.append({
            "variant": label, "problem_hash": hashes.pop(), "trials": len(group),
            "reached": float(np.mean(reached)), "rounds_to_target": med("round"),
            "cum_bits": med("cum_bits"), "cum_joules": med("cum_joules"), "msgs_sent": med("msgs_sent"),
            "msgs_censored": med("msgs_censored"), "uplink_slots": med("uplink_slots"),
        })
    return rows


def summary_csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in rows:
        w.writerow([r[c] if isinstance(r[c], str) else (str(r[c]) if isinstance(r[c], int) else repr(float(r[c])))
                    for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def read_summary(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        missing = [c for c in SUMMARY_COLUMNS if c not in r]
        if missing:
            raise ComparisonError(f"{path}: not a summary file (missing {', '.join(missing)})")
        out.append({c: (r[c] if c in ("variant", "problem_hash") else
                        int(r[c]) if c == "trials" else float(r[c])) for c in SUMMARY_COLUMNS})
    return out


def gnuplot_script(labels, trial: int = 0) -> str:
    plots = []
    for xcol, xname in ((1, "round"), (3, "cumulative bits"), (4, "cumulative joules")):
        series = ", ".join(f"'{trace_name(lab, trial)}' using {xcol}:2 with lines title '{lab}'" for lab in labels)
        plots.append(f"set xlabel '{xname}'\nset output 'obj_error_vs_{xname.split()[-1]}.png'\nplot {series}\n")
    head = ("set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n"
            "set logscale y\nset ylabel 'objective error'\nset terminal pngcairo size 800,600\n")
    return head + "\n".join(plots)


def run_experiment(config: ExperimentConfig, out_dir=None, write: bool = True) -> ExperimentResult:
    """Run all trials, write one trace CSV per (variant, trial) plus ``summary.csv``."""
    config.validate()
    problem = build_problem(config)
    traces = run_trials(config, problem)
    summary = summarize(traces, config.experiment.summary_target)
    files = []
    if write:
        out = Path(out_dir if out_dir is not None else config.experiment.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            for (label, t), tr in sorted(traces.items()):
                files.append(tr.write_csv(out / trace_name(label, t)))
            p = out / "summary.csv"
            p.write_text(summary_csv_text(summary))
            files.append(p)
            if config.experiment.gnuplot:
                g = out / "plot.gp"
                g.write_text(gnuplot_script(resolved_labels(config)))
                files.append(g)
        except OSError as exc:
            raise OSError(f"cannot write results to {out}: {exc}") from exc
    return ExperimentResult(config, traces, summary, files, problem.fingerprint)


def compare_variants(summaries: list[dict]) -> list[dict]:
    """Ratios of rounds, messages, bits and joules against the first summary row."""
    if len(summaries) < 2:
        raise ComparisonError("need at least two summaries to compare")
    hashes = {s["problem_hash"] for s in summaries}
    if len(hashes) != 1:
        raise ComparisonError(f"summaries come from different problems: {sorted(hashes)}")
    base = summaries[0]

    def ratio(a, b):
        if a == b:
            return 1.0
        if b == 0:
            return 1.0 if a == 0 else math.inf
        return a / b

    return [{
        "variant": s["variant"],
        "rounds_ratio": ratio(s["rounds_to_target"], base["rounds_to_target"]),
        "msgs_ratio": ratio(s["msgs_sent"], base["msgs_sent"]),
        "bits_ratio": ratio(s["cum_bits"], base["cum_bits"]),
        "joules_ratio": ratio(s["cum_joules"], base["cum_joules"]),
    } for s in summaries]


def comparison_csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ("variant", "rounds_ratio", "msgs_ratio", "bits_ratio", "joules_ratio")
    w.writerow(cols)
    for r in rows:
        w.writerow([r["variant"]] + [repr(float(r[c])) for c in cols[1:]])
    return buf.getvalue()


# ---------------------------------------------------------------- recipes

# Shared stand-in for the d=6 linear-regression task: ill-conditioned
# features, non-IID shards, sigma = 0.1, theta0 = 0, rho = 1.
_REGRESSION = ProblemSpec(workers=50, dim=6, samples=20, noise_std=0.1, condition=100.0,
                          heterogeneity=0.5, data_seed=1)


def recipe(name: str, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    """Pinned configuration for one of the named benchmark recipes."""
    if name == "fig4":
        cfg = ExperimentConfig(
            problem=_REGRESSION,
            solver=SolverSpec(variants=("gadmm", "q-gadmm", "quantized-gd"), rounds=400),
            compression=CompressionSpec(bits=2),
            experiment=ExperimentSpec(name="fig4", seed=7, summary_target=1e-2))
    elif name == "fig5":
        cfg = ExperimentConfig(
            problem=replace(_REGRESSION, workers=20, data_seed=None),
            topology=TopologySpec(kind="chain", shuffle_period=10),
            solver=SolverSpec(variants=("gadmm", "d-gadmm", "ps-admm"), rounds=3000, target_error=1e-6),
            experiment=ExperimentSpec(name="fig5", seed=0, summary_target=1e-4))
    elif name == "fig6":
        cfg = ExperimentConfig(
            problem=_REGRESSION,
            topology=TopologySpec(kind="random-bipartite", seed=5),
            solver=SolverSpec(variants=("ggadmm", "c-ggadmm", "c-qggadmm"), rounds=400),
            compression=CompressionSpec(bits=2, censor_omega=1.0, censor_zeta=0.9),
            experiment=ExperimentSpec(name="fig6", seed=7, summary_target=1e-3))
    elif name == "fig7a":
        cfg = ExperimentConfig(
            problem=_REGRESSION,
            solver=SolverSpec(variants=("a-fadmm", "d-fadmm", "d-fadmm-x10"), rounds=400, target_error=1e-6),
            channel=ChannelSpec(mode="analog", noise_var=1e-2),
            experiment=ExperimentSpec(name="fig7a", seed=7, summary_target=1e-4))
    else:
        raise ConfigError(f"unknown recipe {name!r}", [name])
    exp = cfg.experiment
    if seed is not None:
        exp = replace(exp, seed=seed)
    if out is not None:
        exp = replace(exp, out=out)
    return replace(cfg, experiment=exp).validate()


RECIPES = ("fig4", "fig5", "fig6", "fig7a")
