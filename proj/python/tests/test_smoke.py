import json
import os
import subprocess

import pytest

import qes


def quadratic_config(**overrides):
    cfg = {
        "task": "quadratic",
        "task_params": {"dimension": 8},
        "mode": "stateless_replay",
        "bits": 6,
        "scale": 0.05,
        "zero_point": 32,
        "alpha": 0.5,
        "gamma": 0.9,
        "sigma": 1.0,
        "population": 8,
        "window": 10,
        "generations": 15,
        "master_seed": 3,
    }
    cfg.update(overrides)
    return cfg


def test_gate_apply_at_edges():
    lat = qes.QuantLattice([15, 7, 0], bits=4)
    applied, mask = qes.gate_apply(lat, [1, -3, -1])
    assert applied == [0, -3, 0]
    assert mask == [True, False, True]


def test_error_feedback_step():
    lat = qes.QuantLattice([7], bits=4)
    cfg = qes.OptimizerConfig()
    cfg.alpha, cfg.gamma = 1.0, 0.9
    applied, e = qes.step_full_residual(lat, [0.0], [0.3], cfg)
    assert applied == [0] and e[0] == pytest.approx(0.3)
    applied, e = qes.step_full_residual(lat, e, [0.3], cfg)
    assert applied == [1] and e[0] == pytest.approx(-0.43)
    assert lat.weights == [8]


def test_gradient_matches_manual_sum():
    seeds = [qes.derive_member_seed(1, 0, i) for i in range(6)]
    fitness = qes.normalize_rewards([0.1, 0.5, -0.2, 0.3, 0.9, 0.0])
    d, sigma = 10, 0.8
    g = qes.estimate_gradient(seeds, fitness, sigma, d)
    deltas = [qes.realize_perturbation(s, sigma, d) for s in seeds]
    manual = [sum(f * delta[j] for f, delta in zip(fitness, deltas)) / (len(seeds) * sigma) for j in range(d)]
    assert g == pytest.approx(manual, rel=1e-12, abs=1e-15)


def test_history_size_is_independent_of_dimension():
    h = qes.HistoryWindow(3)
    for t in range(5):
        h.push(t, [t, t + 1], [0.5, -0.5])
    assert len(h) == 3
    assert len(h.serialize()) == 16 + 3 * (12 + 16 * 2)


def test_run_is_deterministic_and_improves():
    a = qes.run(quadratic_config())
    b = qes.run(quadratic_config())
    assert a["final_weights"] == b["final_weights"]
    assert len(a["reports"]) == 15
    assert a["final_reward"] >= a["initial_reward"]


def test_bad_config_raises():
    with pytest.raises(qes.ConfigError):
        qes.run(quadratic_config(mode="sideways"))


def test_cli_run(tmp_path):
    cli = os.environ.get("QES_CLI")
    if not cli:
        pytest.skip("QES_CLI not set")
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(quadratic_config(out_dir=str(tmp_path / "out"))))
    subprocess.run([cli, "run", "--config", str(cfg_path)], check=True, capture_output=True)
    header = (tmp_path / "out" / "trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("generation,mean_reward,best_reward")
