import json

import pytest
from hypothesis import given, strategies as st

from iqmr import cli
from iqmr.config import ConfigError, SimConfig, dumps, load_config, loads
from iqmr.metrics import HEADER, EpisodeMetrics, convergence_episode, read_csv, write_csv

from conftest import DESK


def test_empty_file_gives_defaults(tmp_path):
    f = tmp_path / "empty.toml"
    f.write_text("")
    cfg = load_config(f)
    assert cfg == SimConfig()
    assert cfg.sim.num_uavs == 50 and cfg.sim.episodes == 8000
    assert cfg.energy.initial_j == 207792.0 and cfg.radio_range_m == 250.0


def test_range_error_names_key(tmp_path):
    f = tmp_path / "bad.toml"
    f.write_text("[rl]\nepsilon = 1.5\n")
    with pytest.raises(ConfigError) as exc:
        load_config(f)
    assert exc.value.key == "rl.epsilon"
    assert str(f) in str(exc.value)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as exc:
        loads("[rl]\nepsilonn = 0.2\n")
    assert exc.value.key == "rl.epsilonn"
    with pytest.raises(ConfigError):
        loads("[nosuch]\nx = 1\n")


def test_parse_error_reported():
    with pytest.raises(ConfigError):
        loads("[rl\n", location="x.toml")


def test_initial_energy_round_trip():
    cfg = loads("[energy]\ninitial_j = 207792\n")
    assert cfg.energy.initial_j == 207792.0
    back = loads(dumps(cfg))
    assert back.energy.initial_j == 207792.0
    assert dumps(back) == dumps(cfg)


def test_plain_q_baseline_overrides():
    cfg = loads('[sim]\nbaseline = "plain-q"\n')
    assert (cfg.rl.lambda_, cfg.rl.beta_mode, cfg.rl.beta_fixed) == (0.0, "fixed", 0.5)
    assert (cfg.rl.gamma_mode, cfg.rl.gamma_fixed) == ("fixed", 0.9)


@given(eps=st.floats(0, 1), alpha=st.floats(0.01, 0.99), m=st.integers(1, 200), seed=st.integers(0, 2**31),
       zeta=st.floats(1.5, 5), beta_mode=st.sampled_from(["exp-decay", "paper-literal", "fixed"]),
       baseline=st.sampled_from(["iqmr", "plain-q"]))
def test_resolved_round_trip(eps, alpha, m, seed, zeta, beta_mode, baseline):
    cfg = SimConfig()
    for k, v in (("rl.epsilon", eps), ("mobility.alpha", alpha), ("sim.num_uavs", m), ("sim.seed", seed),
                 ("channel.zeta", zeta), ("rl.beta_mode", beta_mode), ("sim.baseline", baseline)):
        cfg = cfg.replace(k, v)
    text = dumps(loads(dumps(cfg)))
    again = loads(text)
    assert dumps(again) == text
    assert again.noise_floor == cfg.noise_floor


def test_metrics_header_golden(tmp_path):
    assert ",".join(HEADER) == "episode,cum_reward,residual_energy_j,delivered,dropped,fragmented,mean_q"
    rows = [EpisodeMetrics(0, 0.1, 5.0, 1, 0, 2, 0.3)]
    write_csv(tmp_path / "m.csv", rows)
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == ",".join(HEADER)
    assert read_csv(tmp_path / "m.csv") == rows


def _write_run(d, rewards, delivered=None, injected=None):
    d.mkdir(parents=True, exist_ok=True)
    rows = [EpisodeMetrics(i, r, 1000.0, 0 if delivered is None else delivered, i + 1, 0, 0.0)
            for i, r in enumerate(rewards)]
    write_csv(d / "metrics.csv", rows)
    if injected is not None:
        (d / "summary.json").write_text(json.dumps({"injected": injected}))


def test_report_constant_reward(tmp_path, capsys):
    _write_run(tmp_path / "r", [3.0] * 400)
    assert cli.main(["report", str(tmp_path / "r")]) == 0
    out = capsys.readouterr().out
    assert "convergence episode: 0" in out


def test_report_all_failure(tmp_path, capsys):
    _write_run(tmp_path / "r", [0.0] * 50, delivered=0, injected=50)
    assert cli.main(["report", str(tmp_path / "r")]) == 0
    assert "throughput: 0.00%" in capsys.readouterr().out
    lines = (tmp_path / "r" / "report.csv").read_text().splitlines()
    assert lines[0] == "episode,metric,value" and len(lines) == 1 + 50 * 6


def test_report_step_fixture(oracles, tmp_path, capsys):
    o = oracles["report_step"]
    assert convergence_episode(o["rewards"]) == o["expected"]
    _write_run(tmp_path / "r", o["rewards"])
    cli.main(["report", str(tmp_path / "r")])
    assert f"convergence episode: {o['expected']}" in capsys.readouterr().out


def test_report_missing_and_corrupt(tmp_path):
    assert cli.main(["report", str(tmp_path / "none")]) == 2
    (tmp_path / "bad").mkdir()
    (tmp_path / "bad" / "metrics.csv").write_text("a,b\n1,2\n")
    assert cli.main(["report", str(tmp_path / "bad")]) == 2


def test_simulate_outputs(tmp_path):
    out = tmp_path / "run"
    assert cli.main(["simulate", "--config", str(DESK), "--episodes", "30", "--seed", "4",
                     "--baseline", "plain-q", "--out", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert 0.0 <= s["throughput"] <= 1.0
    assert s["throughput"] == s["delivered"] / s["injected"]
    resolved = load_config(out / "config.resolved")
    assert resolved.sim.seed == 4 and resolved.rl.lambda_ == 0.0
    assert len(read_csv(out / "metrics.csv")) == 30


def test_simulate_config_error_exit(tmp_path):
    f = tmp_path / "bad.toml"
    f.write_text("[rl]\nepsilon = 1.5\n")
    assert cli.main(["simulate", "--config", str(f), "--out", str(tmp_path / "o")]) == 1


def test_sweep_rejects_bad_key_before_running(tmp_path):
    assert cli.main(["sweep", "--config", str(DESK), "--param", "rl.nope", "--values", "1",
                     "--out", str(tmp_path / "s")]) == 1
    assert not (tmp_path / "s").exists()


def test_sweep_empty_values_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main(["sweep", "--param", "rl.epsilon", "--values"])
    assert exc.value.code == 2


def test_epsilon_sweep_rows(tmp_path):
    assert cli.main(["sweep", "--config", str(DESK), "--episodes", "5", "--param", "rl.epsilon",
                     "--values", "0.1", "0.5", "0.9", "--out", str(tmp_path / "s")]) == 0
    lines = (tmp_path / "s" / "sweep.csv").read_text().splitlines()
    assert len(lines) == 4
    assert [ln.split(",")[1] for ln in lines[1:]] == ["0.1", "0.5", "0.9"]
    assert (tmp_path / "s" / "rl.epsilon=0.5" / "seed=1" / "metrics.csv").exists()
