import math
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gadmm_lab import harness
from gadmm_lab.errors import ComparisonError, ConfigError
from gadmm_lab.harness import (ChannelSpec, CompressionSpec, ExperimentConfig, ExperimentSpec, ProblemSpec,
                               SolverSpec, TopologySpec, compare_variants, dumps_config, loads_config, recipe,
                               run_experiment)

names = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789_-./", min_size=1, max_size=12)
pos = st.floats(min_value=1e-6, max_value=1e6, allow_nan=False)
unit = st.floats(min_value=1e-4, max_value=0.9999)

configs = st.builds(
    ExperimentConfig,
    problem=st.builds(ProblemSpec, workers=st.integers(1, 200), dim=st.integers(1, 50),
                      samples=st.integers(1, 100), noise_std=st.floats(0, 10), condition=st.floats(1, 1e4),
                      heterogeneity=st.floats(0, 5), loss=st.sampled_from(["least-squares", "logistic"]),
                      data_seed=st.one_of(st.none(), st.integers(0, 2 ** 31))),
    topology=st.builds(TopologySpec, kind=st.sampled_from(["chain", "random-bipartite"]),
                       edges=st.one_of(st.none(), st.integers(1, 500)), shuffle_period=st.integers(1, 100),
                       seed=st.one_of(st.none(), st.integers(0, 1000))),
    solver=st.builds(SolverSpec, variants=st.lists(st.sampled_from(["gadmm", "q-gadmm", "d-gadmm", "ps-admm",
                                                                    "a-fadmm", "d-fadmm-x10", "fadmm"]),
                                                   min_size=1, max_size=4).map(tuple),
                     rho=pos, rounds=st.integers(0, 10_000),
                     target_error=st.one_of(st.just(math.inf), st.floats(0, 1)),
                     step_size=st.one_of(st.none(), pos), local_steps=st.integers(1, 5)),
    compression=st.builds(CompressionSpec, bits=st.integers(1, 16), censor_omega=st.floats(1, 100),
                          censor_zeta=unit, censor_norm=st.sampled_from(["inf", "l2"])),
    channel=st.builds(ChannelSpec, mode=st.sampled_from(["digital", "analog"]), snr_db=st.floats(-20, 40),
                      bandwidth_hz=pos, slot_sec=pos, noise_var=st.floats(0, 1),
                      power_budget=st.one_of(st.none(), pos), blocklength=st.integers(1, 10 ** 6),
                      pkt_error=unit, time_varying=st.booleans(), fading=st.booleans()),
    experiment=st.builds(ExperimentSpec, name=names, seed=st.integers(0, 2 ** 31), trials=st.integers(1, 20),
                         out=names, summary_target=st.floats(0, 1), gnuplot=st.booleans()),
)


@settings(max_examples=100, deadline=None)
@given(configs)
def test_config_round_trip(config):
    assert loads_config(dumps_config(config)) == config


def test_unknown_keys_are_listed():
    text = dumps_config(ExperimentConfig()) + "\n[extra]\nfoo = 1\n"
    text = text.replace("[solver]\n", "[solver]\nlearning_rate = 3\n")
    with pytest.raises(ConfigError) as info:
        loads_config(text)
    assert "extra" in str(info.value) and "solver.learning_rate" in str(info.value)


def test_invalid_values_are_listed():
    with pytest.raises(ConfigError) as info:
        loads_config("[solver]\nrho = -1\n[compression]\ncensor_zeta = 2\n")
    assert "solver.rho" in str(info.value) and "compression.censor_zeta" in str(info.value)
    with pytest.raises(ConfigError, match="problem.workers"):
        loads_config("[problem]\nworkers = many\n")


def test_overrides_win_over_file():
    cfg = loads_config("[solver]\nrho = 2.0\n", {"solver.rho": "3.5"})
    assert cfg.solver.rho == 3.5


def small_config(tmp_path, **solver):
    return ExperimentConfig(
        problem=ProblemSpec(workers=6, dim=3, condition=10.0),
        solver=SolverSpec(**{"variants": ("gadmm", "q-gadmm"), "rounds": 40, **solver}),
        experiment=ExperimentSpec(seed=4, trials=2, out=str(tmp_path), summary_target=1e-2, gnuplot=True))


def test_rerun_is_byte_identical(tmp_path):
    a = run_experiment(small_config(tmp_path / "a"))
    b = run_experiment(small_config(tmp_path / "b"))
    assert [f.name for f in a.files] == [f.name for f in b.files]
    for fa, fb in zip(a.files, b.files):
        assert fa.read_bytes() == fb.read_bytes()
    assert {f.name for f in a.files} >= {"gadmm_trial0.csv", "q-gadmm_trial1.csv", "summary.csv", "plot.gp"}


def test_thread_cap_does_not_change_results(tmp_path, monkeypatch):
    monkeypatch.setenv(harness.THREADS_ENV, "1")
    one = run_experiment(small_config(tmp_path / "one"))
    monkeypatch.setenv(harness.THREADS_ENV, "4")
    four = run_experiment(small_config(tmp_path / "four"))
    for fa, fb in zip(one.files, four.files):
        assert fa.read_bytes() == fb.read_bytes()
    monkeypatch.setenv(harness.THREADS_ENV, "lots")
    with pytest.raises(ConfigError):
        run_experiment(small_config(tmp_path / "bad"))


def test_variants_share_initial_error(tmp_path):
    res = run_experiment(small_config(tmp_path), write=False)
    initial = {round(tr.initial_error, 15) for tr in res.traces.values()}
    assert len(initial) == 1


def test_trace_files_carry_problem_hash(tmp_path):
    res = run_experiment(small_config(tmp_path))
    for f in res.files:
        if f.name.endswith("_trial0.csv"):
            assert f"problem={res.problem_hash}" in f.read_text().splitlines()[0]


def test_summary_round_trip(tmp_path):
    res = run_experiment(small_config(tmp_path))
    rows = harness.read_summary(tmp_path / "summary.csv")
    assert [r["variant"] for r in rows] == ["gadmm", "q-gadmm"]
    assert rows[0]["cum_bits"] == res.summary[0]["cum_bits"]
    assert rows[0]["trials"] == 2


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        run_experiment(small_config(blocker / "sub"))


def test_compare_identical_is_unity():
    row = {"variant": "gadmm", "problem_hash": "h", "rounds_to_target": 10.0, "msgs_sent": 50.0,
           "cum_bits": 1e4, "cum_joules": 1e-3}
    out = compare_variants([row, dict(row)])
    assert all(out[1][k] == 1.0 for k in ("rounds_ratio", "msgs_ratio", "bits_ratio", "joules_ratio"))


def test_compare_refuses_mixed_problems():
    a = {"variant": "x", "problem_hash": "h1", "rounds_to_target": 1.0, "msgs_sent": 1.0, "cum_bits": 1.0,
         "cum_joules": 1.0}
    with pytest.raises(ComparisonError):
        compare_variants([a, dict(a, problem_hash="h2")])
    with pytest.raises(ComparisonError):
        compare_variants([a])


def test_fig4_quantized_energy_below_full_precision():
    res = run_experiment(recipe("fig4"), write=False)
    by = {r["variant"]: r for r in res.summary}
    assert by["q-gadmm"]["cum_joules"] < by["gadmm"]["cum_joules"]


def test_fig6_censoring_halves_bits():
    res = run_experiment(recipe("fig6"), write=False)
    ratios = {r["variant"]: r for r in compare_variants(res.summary)}
    assert ratios["c-ggadmm"]["bits_ratio"] < 0.7


def test_recipes_pin_shared_parameters():
    for name in harness.RECIPES:
        cfg = recipe(name)
        assert cfg.problem.noise_std == 0.1 and cfg.solver.rho == 1.0
        assert loads_config(dumps_config(cfg)) == cfg
    with pytest.raises(ConfigError):
        recipe("fig99")
    assert recipe("fig5", seed=3).experiment.seed == 3


def test_fadmm_alias_follows_channel_mode():
    assert harness.solver_config(ExperimentConfig(), "fadmm").variant == "d-fadmm"
    analog = replace(ExperimentConfig(), channel=ChannelSpec(mode="analog"))
    assert harness.solver_config(analog, "fadmm").variant == "a-fadmm"
    assert harness.solver_config(analog, "d-fadmm-x10").bandwidth_multiplier == 10


def test_csv_source(tmp_path):
    for n in range(3):
        (tmp_path / f"w{n}.csv").write_text("".join(f"{n + i},{i % 3},{2 * i + 1}\n" for i in range(5)))
    cfg = ExperimentConfig(
        problem=ProblemSpec(source="csv", csv_paths=tuple(str(tmp_path / f"w{n}.csv") for n in range(3))),
        solver=SolverSpec(variants=("ps-admm",), rounds=20))
    res = run_experiment(cfg, write=False)
    assert len(next(iter(res.traces.values()))) == 20
