from dataclasses import replace

import pytest

from bandagg.core import InterfaceEvent, PolicyRule, QualClass
from bandagg.harness import CSV_COLUMNS, ConfigError, ExperimentConfig, parse_config, run_experiment
from bandagg.harness.cli import main
from bandagg.harness.experiments import EXPERIMENTS, csv_text, read_csv, sim_options
from bandagg.scheduling import SchedulerKind

K = SchedulerKind

MINIMAL = """
[topology]
l1_bandwidth = 6
if1_bandwidth = 2
if2_bandwidth = 1
if2_loss = 0

[workload]
beta_small = 13
beta_large = 1
"""


def test_minimal_config_matches_defaults():
    assert parse_config(MINIMAL) == ExperimentConfig()
    assert parse_config("") == ExperimentConfig()


def test_unknown_key_names_key_and_line():
    with pytest.raises(ConfigError) as e:
        parse_config("[topology]\n\nbadnwidth = 3\n")
    assert e.value.line == 3 and "badnwidth" in str(e.value)


@pytest.mark.parametrize("text, line", [
    ("[nosuch]\n", 1),
    ("x = 1\n", 1),
    ("[topology]\nif2_bandwidth\n", 2),
    ("[topology]\nif2_bandwidth = fast\n", 2),
    ("[experiment]\nschedulers = Bogus\n", 2),
    ("[events]\nexplode = 1 1\n", 2),
    ("[events]\nfail = 1\n", 2),
    ("[sweep]\nvar = mtu\n", 2),
    ("[classify]\nfoo = sometimes\n", 2),
    ("[topology\n", 1),
])
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    assert e.value.line == line


def test_full_config():
    cfg = parse_config("""
# comment
[experiment]
name = trial
schedulers = OnlyOne, PoWeightedRoundRobin
runs = 3        ; inline comment
seed = 42
duration = 20
[sweep]
var = if2_loss
values = 0, 5, 10
[policy]
skype = 0
class:bandwidth = 1
[classify]
mygame* = realtime
[events]
fail = 10 1
restore = 15 1
""")
    assert cfg.name == "trial" and cfg.runs == 3 and cfg.seed == 42 and cfg.duration == 20
    assert cfg.schedulers == (K.ONLY_ONE, K.PO_WEIGHTED_ROUND_ROBIN)
    assert cfg.sweep_var == "if2_loss" and cfg.sweep_values == (0, 5, 10)
    assert cfg.policy == (PolicyRule("skype", 0), PolicyRule("class:bandwidth", 1))
    assert cfg.class_rules == (("mygame*", QualClass.REALTIME),)
    assert cfg.events == (InterfaceEvent(10, 1, False), InterfaceEvent(15, 1, True))
    assert [c.if2_loss for _, c in cfg.points()] == [0, 5, 10]
    opts = sim_options(cfg)
    assert opts.classifier.rules[0] == ("mygame*", QualClass.REALTIME)


def test_topology_units():
    topo = parse_config("[topology]\nif2_bandwidth = 0.5\nif2_loss = 4\nprop_delay_ms = 5\n").topology()
    assert topo.interfaces[1].bandwidth_bps == 0.5e6 and topo.interfaces[1].loss_ratio == 0.04
    assert topo.interfaces[0].prop_delay == 0.005 and topo.server_link.bandwidth_bps == 6e6


def test_range_checks():
    cfg = parse_config("[topology]\nif2_bandwidth = 3\n")
    with pytest.raises(ConfigError, match="force-range"):
        cfg.validate()
    cfg.validate(force_range=True)
    with pytest.raises(ConfigError):
        parse_config("[sweep]\nvar = beta_large\nvalues = 1, 9\n").validate()


def test_validation_errors():
    with pytest.raises(ConfigError):
        replace(ExperimentConfig(), runs=0).validate()
    with pytest.raises(ConfigError):
        parse_config("[events]\nfail = 1 4\n").validate()
    with pytest.raises(ConfigError):
        parse_config("[policy]\nskype = 3\n").validate()


def small(name="tiny", **kw):
    base = dict(name=name, runs=2, duration=5, sweep_var="if2_bandwidth", sweep_values=(0.5, 1.0),
                schedulers=(K.ONLY_ONE, K.CO_MAX_THROUGHPUT, K.PO_ROUND_ROBIN))
    base.update(kw)
    return replace(ExperimentConfig(), **base)


def test_csv_schema_and_optimal_rows():
    rows = run_experiment(small())
    text = csv_text(rows)
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    parsed = read_csv(text)
    assert len(parsed) == 2 * 4
    opt = [r for r in parsed if r["scheduler"] == "Optimal"]
    assert [float(r["mean_throughput_bps"]) for r in opt] == [2.5e6, 3e6]
    assert all(r["runs"] == "2" and r["seed_base"] == "0" and r["sweep_var"] == "if2_bandwidth" for r in parsed)


def test_reproducible_and_parallel_safe():
    cfg = small(seed=7)
    a = csv_text(run_experiment(cfg))
    assert a == csv_text(run_experiment(cfg))
    assert a == csv_text(run_experiment(cfg, jobs=2))
    assert a != csv_text(run_experiment(replace(cfg, seed=8)))


def test_optimal_row_ignores_workload():
    a = run_experiment(small(runs=1, beta_large=0.0))
    b = run_experiment(small(runs=1, beta_large=5.0))
    pick = lambda rows: [r["mean_throughput_bps"] for r in rows if r["scheduler"] == "Optimal"]  # noqa: E731
    assert pick(a) == pick(b)


def test_builtin_experiments():
    assert set(EXPERIMENTS) == {"bandwidth-sweep", "loss-sweep", "workload-sweep", "granularity"}
    bw = EXPERIMENTS["bandwidth-sweep"].config
    assert bw.sweep_values == (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0) and len(bw.schedulers) == 6
    assert EXPERIMENTS["loss-sweep"].config.sweep_values == tuple(float(i) for i in range(11))
    g = EXPERIMENTS["granularity"].config
    assert g.long_lived and g.beta_large == 0.25 and g.if1_bandwidth == 2.0
    for e in EXPERIMENTS.values():
        e.config.validate(e.force_range)


def test_cli_list(capsys):
    assert main(["list"]) == 0
    assert "loss-sweep" in capsys.readouterr().out


def test_cli_run_writes_csv(tmp_path):
    out = tmp_path / "g.csv"
    args = ["run", "granularity", "--runs", "1", "--duration", "3", "--scheduler", "OnlyOne", "--out", str(out), "--quiet"]
    assert main(args) == 0
    rows = read_csv(out.read_text())
    assert [r["scheduler"] for r in rows] == ["OnlyOne", "Optimal", "OnlyOne", "Optimal"]


def test_cli_errors(tmp_path, capsys):
    assert main(["run", "nosuch"]) == 2
    assert main(["run", "loss-sweep", "--scheduler", "Fastest"]) == 2
    assert main(["run", "loss-sweep", "--out", str(tmp_path / "missing" / "x.csv")]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("[topology]\nbadnwidth = 2\n")
    assert main(["simulate", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_cli_simulate(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("[experiment]\nschedulers = CoMaxThroughput\nruns = 1\nduration = 3\n")
    assert main(["simulate", str(cfg), "--quiet"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == ",".join(CSV_COLUMNS) and out[1].startswith("custom,CoMaxThroughput,,,")
