import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddlqg import io
from ddlqg.cli import main
from ddlqg.experiments import (
    ExperimentConfig,
    config_from_dict,
    derive_seed,
    run_experiment,
    scenario_config,
)
from ddlqg.lqg import ClosedLoopTrace
from ddlqg.lti_sim import NoiseSpec


# -- CSV / JSON -------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=12))
def test_csv_roundtrip_full_precision(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("csv") / "v.csv"
    io.write_csv(path, ["a"], [[v] for v in values])
    header, data = io.read_csv(path)
    assert header == ["a"]
    assert np.array_equal(data[:, 0], np.array(values))


def test_csv_line_endings_and_digits(tmp_path):
    path = tmp_path / "x.csv"
    io.write_csv(path, ["t", "v"], [[0, 1 / 3]])
    raw = path.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    assert raw.decode().splitlines()[1] == "0,0.33333333333333331"


def test_empty_trace_header_only(tmp_path):
    tr = ClosedLoopTrace(np.zeros((2, 1)), np.zeros((2, 1)), np.zeros((1, 0)), np.zeros((1, 0)),
                         np.zeros(0))
    path = tmp_path / "trace.csv"
    io.write_trace_csv(tr, path)
    assert path.read_text() == "t,x1,x2,xhat1,xhat2,u1,errnorm\n"


def test_trace_line_count(tmp_path, reactor, reactor_data):
    from ddlqg.lqg import design_noise_free, simulate_closed_loop

    g = design_noise_free(reactor_data, np.eye(4), np.eye(2), 0.02 * np.eye(4), 0.02 * np.eye(2))
    tr = simulate_closed_loop(reactor, g.controller(reactor_data), np.ones(4), NoiseSpec.zero(), 100)
    path = tmp_path / "trace.csv"
    io.write_trace_csv(tr, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 101
    header, data = io.read_csv(path)
    assert header[-1] == "errnorm"
    assert np.array_equal(data[:, 1:5].T, tr.x[:, :100])
    assert np.array_equal(data[:, -1], tr.err_norm[:100])


def test_trajectory_csv(tmp_path, reactor_data):
    path = tmp_path / "traj.csv"
    io.write_trajectory_csv(reactor_data, path)
    header, data = io.read_csv(path)
    assert header == ["t", "x1", "x2", "x3", "x4", "u1", "u2", "y1", "y2"]
    assert np.array_equal(data[:, 1:5].T, reactor_data.X0)
    assert np.array_equal(data[:, 5:7].T, reactor_data.U0)


def test_json_handles_numpy(tmp_path):
    path = tmp_path / "a.json"
    io.write_json({"m": np.eye(2), "f": np.float64(1.5), "n": np.nan, "b": np.bool_(True),
                   "i": np.int64(3)}, path)
    d = io.read_json(path)
    assert d == {"b": True, "f": 1.5, "i": 3, "m": [[1.0, 0.0], [0.0, 1.0]], "n": None}


# -- configuration ----------------------------------------------------------

def test_custom_config_defaults():
    cfg = config_from_dict({"A": [[0.5]], "B": [[1]], "C": [[1]], "T": 8, "seeds": [1, 2]})
    assert cfg.scenario == "Custom" and cfg.design == "noise-free"
    assert cfg.seeds == (1, 2) and cfg.T == 8
    noisy = config_from_dict({"A": [[0.5]], "B": [[1]], "C": [[1]],
                              "noise": {"kind": "uniform", "wbar": 0.1, "vbar": 0.1}})
    assert noisy.design == "robust"


def test_config_validation():
    with pytest.raises(ValueError):
        config_from_dict({"scenario": "Custom"})
    with pytest.raises(ValueError):
        scenario_config("BatchReactorNoiseFree", seeds=())
    with pytest.raises(ValueError):
        scenario_config("BatchReactorNoiseFree", Wu=np.zeros((2, 2)))
    with pytest.raises(ValueError):
        scenario_config("BatchReactorNoiseFree", Wx=-np.eye(4))
    with pytest.raises(ValueError):
        scenario_config("BatchReactorNoisy", alpha1=0.0)
    with pytest.raises(ValueError):
        scenario_config("Unknown")
    with pytest.raises(ValueError):
        scenario_config("BatchReactorNoisy", rank_Ew=5)


def test_overrides():
    cfg = scenario_config("BatchReactorNoisy").with_overrides(seed=7, T=20, alpha1=0.5,
                                                              alpha2=0.3, noise_bar=0.01)
    assert cfg.seeds == (7,) and cfg.T == 20 and (cfg.alpha1, cfg.alpha2) == (0.5, 0.3)
    assert cfg.offline_noise.wbar == 0.01 and cfg.online_noise.vbar == 0.01
    nf = scenario_config("BatchReactorNoiseFree").with_overrides(noise_bar=0.05)
    assert nf.offline_noise.kind == "zero" and nf.online_noise.wbar == 0.05


def test_derived_seeds_are_distinct():
    vals = {derive_seed(s, k) for s in range(5) for k in range(3)}
    assert len(vals) == 15
    assert derive_seed(3, 1) == derive_seed(3, 1)


# -- experiments ------------------------------------------------------------

def _nf_config(tmp_path, **kw):
    return scenario_config("BatchReactorNoiseFree", seeds=(0, 1), output_dir=str(tmp_path), **kw)


def test_noise_free_experiment(tmp_path):
    rep = run_experiment(_nf_config(tmp_path))
    s = rep.summary
    assert s["n_ok"] == 2 and not s["errors"]
    assert s["K_err"]["max"] <= 1e-3 and s["L_err"]["max"] <= 1e-3
    for name in ("gains.json", "summary.json", "trace_0.csv", "trace_1.csv"):
        assert (tmp_path / name).exists()
    gains = io.read_json(tmp_path / "gains.json")
    assert set(gains["per_seed"]) == {"0", "1"}


def test_summary_recomputable_from_files(tmp_path):
    run_experiment(_nf_config(tmp_path))
    summary = io.read_json(tmp_path / "summary.json")
    ebars = []
    for rec in summary["per_seed"]:
        _, data = io.read_csv(tmp_path / f"trace_{rec['seed']}.csv")
        ebar = float(np.mean(data[:summary["horizon"], -1]))
        assert ebar == pytest.approx(rec["ebar"], rel=1e-12)
        assert np.max(np.linalg.norm(data[:, 1:5], axis=1)) == pytest.approx(rec["max_state_norm"])
        ebars.append(ebar)
    assert summary["ebar"]["mean"] == pytest.approx(np.mean(ebars), rel=1e-12)
    assert summary["ebar"]["std"] == pytest.approx(np.std(ebars), rel=1e-12)
    for key in ("rho_xi0", "K_err", "L_err"):
        vals = [r[key] for r in summary["per_seed"]]
        assert summary[key]["max"] == pytest.approx(max(vals))


def _csv_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))}


def test_byte_identical_reproduction(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    run_experiment(_nf_config(a))
    run_experiment(_nf_config(b))
    run_experiment(_nf_config(c, workers=2))
    assert _csv_bytes(a) == _csv_bytes(b) == _csv_bytes(c)
    assert (a / "gains.json").read_bytes() == (c / "gains.json").read_bytes()


def test_stage_error_is_named(tmp_path):
    cfg = scenario_config("BatchReactorNoiseFree", T=3, output_dir=str(tmp_path))
    s = run_experiment(cfg).summary
    assert s["n_ok"] == 0
    assert s["errors"][0]["stage"] == "design"
    assert (tmp_path / "summary.json").exists()


# -- command line -----------------------------------------------------------

@pytest.mark.parametrize("cmd", ["collect", "solve-lqr", "solve-kalman", "simulate", "reproduce"])
def test_cli_noise_free_subcommands(tmp_path, cmd, capsys):
    assert main([cmd, "--scenario", "BatchReactorNoiseFree", "--seed", "3",
                 "--output-dir", str(tmp_path)]) == 0
    assert "wrote results" in capsys.readouterr().out


def test_cli_solve_robust(tmp_path):
    assert main(["solve-robust", "--scenario", "BatchReactorNoisy", "--seed", "1",
                 "--output-dir", str(tmp_path)]) == 0
    rec = io.read_json(tmp_path / "gains.json")["per_seed"]["1"]
    assert rec["composite"]["rho_xi0"] < 1
    assert rec["bound_product"] >= rec["psi_lambda_max"]


def test_cli_collect_writes_trajectory(tmp_path):
    assert main(["collect", "--seed", "2", "--T", "20", "--output-dir", str(tmp_path)]) == 0
    header, data = io.read_csv(tmp_path / "trajectory_2.csv")
    assert data.shape == (20, len(header))


def test_cli_config_file(tmp_path):
    cfg = {"A": [[0.5]], "B": [[1.0]], "C": [[1.0]], "T": 8, "seeds": [0], "horizon": 100,
           "output_dir": str(tmp_path / "out")}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["simulate", "--config", str(path)]) == 0
    s = io.read_json(tmp_path / "out" / "summary.json")
    assert s["scenario"] == "Custom" and s["n_ok"] == 1


def test_cli_failure_exit_codes(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["simulate", "--T", "3", "--output-dir", str(tmp_path)]) == 1
    assert "stage design failed" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["bogus"])
