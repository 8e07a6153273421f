"""Round-trip and validation behavior of the experiment file formats."""

import dataclasses
import json

import numpy as np
import pytest

from oracles import random_params

from ssm_sgmcmc.io import (
    ExperimentConfig,
    read_error_curve_csv,
    read_latent_csv,
    read_metrics_csv,
    read_obs_csv,
    read_params_json,
    read_trace,
    split_by_fraction,
    write_error_curve_csv,
    write_latent_csv,
    write_metrics_csv,
    write_obs_csv,
    write_params_json,
    write_trace,
)
from ssm_sgmcmc.models import make_synthetic_star, simulate
from ssm_sgmcmc.params import constrained_labels
from ssm_sgmcmc.samplers import SamplerConfig, Trace, run_chain


def test_obs_csv_round_trip_exact(tmp_path, rng):
    obs = rng.standard_normal((40, 3)) * np.array([1e-14, 1.0, 1e12])
    path = tmp_path / "obs.csv"
    write_obs_csv(path, obs)
    back = read_obs_csv(path)
    assert back.shape == (40, 3)
    assert np.array_equal(back, obs)
    header = path.read_text().splitlines()[0]
    assert header == "t,y0,y1,y2"


def test_obs_csv_one_dimensional(tmp_path):
    path = tmp_path / "obs.csv"
    write_obs_csv(path, np.array([1.5, -2.5]))
    assert np.array_equal(read_obs_csv(path), [[1.5], [-2.5]])


def test_obs_csv_validation(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("time,y0\n0,1.0\n")
    with pytest.raises(ValueError, match="header"):
        read_obs_csv(bad)
    bad.write_text("t,y0\n1,1.0\n")
    with pytest.raises(ValueError, match="row index"):
        read_obs_csv(bad)
    bad.write_text("t,y0\n")
    with pytest.raises(ValueError, match="no observations"):
        read_obs_csv(bad)


def test_latent_csv_all_shapes(tmp_path, rng):
    z = rng.integers(0, 3, size=25)
    x = rng.standard_normal((25, 2))

    p = tmp_path / "z.csv"
    write_latent_csv(p, z, "arhmm")
    rz, rx = read_latent_csv(p)
    assert np.array_equal(rz, z) and rx is None

    p = tmp_path / "x.csv"
    write_latent_csv(p, x, "lgssm")
    rz, rx = read_latent_csv(p)
    assert rz is None and np.array_equal(rx, x)

    p = tmp_path / "zx.csv"
    write_latent_csv(p, (z, x), "slds")
    rz, rx = read_latent_csv(p)
    assert np.array_equal(rz, z) and np.array_equal(rx, x)
    assert p.read_text().splitlines()[0] == "t,z,x0,x1"


def test_params_json_round_trip(tmp_path, rng):
    for family in ("hmm", "arhmm", "lgssm", "slds"):
        params = random_params(family, rng)
        path = tmp_path / f"{family}.json"
        write_params_json(path, params)
        back = read_params_json(path)
        assert back.family == family
        for name, arr in params.blocks().items():
            assert np.array_equal(getattr(back, name), arr)


def _small_trace():
    params = make_synthetic_star("arhmm")
    _, obs = simulate(params, 30, seed=6)
    cfg = SamplerConfig(kind="sgrld", h=1e-5, n_steps=6, S=4, B=1, thin=2,
                        seed=9)
    return run_chain(obs, cfg, params)


def test_trace_round_trip(tmp_path):
    trace = _small_trace()
    path = tmp_path / "trace.csv"
    write_trace(path, trace)
    back = read_trace(path)
    assert len(back.samples) == len(trace.samples)
    for a, b in zip(back.samples, trace.samples):
        for name, arr in b.blocks().items():
            assert np.array_equal(getattr(a, name), arr)
    assert back.wall_seconds == trace.wall_seconds
    assert dataclasses.asdict(back.config) == dataclasses.asdict(trace.config)
    assert back.grad_norms == pytest.approx(trace.grad_norms)
    assert back.buffer_sizes == trace.buffer_sizes
    assert back.error is None


def test_trace_columns_and_determinism(tmp_path):
    trace = _small_trace()
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_trace(a, trace)
    write_trace(b, trace)
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.json").read_bytes() == \
        (tmp_path / "b.json").read_bytes()
    import csv as csv_mod
    with open(a, newline="") as fh:
        header = next(csv_mod.reader(fh))
    labels = constrained_labels(trace.samples[0])
    assert header == ["step", "wall_seconds"] + labels
    assert header[2] == "phi[0,0]"


def test_trace_error_field_round_trip(tmp_path):
    params = make_synthetic_star("arhmm")
    trace = Trace(samples=[params], wall_seconds=[0.0], grad_norms=[],
                  buffer_sizes=[], config=SamplerConfig(n_steps=0),
                  error="step 3: boom")
    path = tmp_path / "t.csv"
    write_trace(path, trace)
    assert read_trace(path).error == "step 3: boom"


def test_metrics_csv_round_trip(tmp_path):
    rows = [
        {"metric": "heldout", "block": "", "value": -12.5,
         "meta": {"step": 0, "wall_seconds": 0.0}},
        {"metric": "mse", "block": "Pi", "value": 1e-3,
         "meta": {"step": 10, "note": "a,b\"c"}},
    ]
    path = tmp_path / "metrics.csv"
    write_metrics_csv(path, rows)
    back = read_metrics_csv(path)
    assert back == rows
    with open(path) as fh:
        assert fh.readline().strip() == "metric,block,value,meta_json"
    bad = tmp_path / "bad.csv"
    bad.write_text("metric,block,value\n")
    with pytest.raises(ValueError):
        read_metrics_csv(bad)


def test_error_curve_csv_round_trip(tmp_path):
    rows = [{"S": 4, "B": 0, "mean_err": 26.5, "sd_err": 3.25,
             "n_trials": 150},
            {"S": 16, "B": 8, "mean_err": 1e-11, "sd_err": 0.0,
             "n_trials": 36}]
    path = tmp_path / "curve.csv"
    write_error_curve_csv(path, rows)
    assert read_error_curve_csv(path) == rows
    bad = tmp_path / "bad.csv"
    bad.write_text("S,B,mean\n")
    with pytest.raises(ValueError):
        read_error_curve_csv(bad)


def test_experiment_config_loading(tmp_path):
    doc = {"family": "arhmm",
           "data": {"synthetic": "arhmm", "T": 500, "seed": 4},
           "split": {"test_T": 200},
           "sampler": {"kind": "sgld", "h": 1e-5, "n_steps": 12},
           "metrics": ["heldout"],
           "outdir": str(tmp_path)}
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(doc))
    cfg = ExperimentConfig.from_json(path)
    assert cfg.family == "arhmm" and cfg.data["T"] == 500
    sc = cfg.sampler_config()
    assert sc.kind == "sgld" and sc.h == 1e-5 and sc.n_steps == 12
    # explicit overrides beat the file; None leaves it alone
    sc = cfg.sampler_config(n_steps=0, h=None)
    assert sc.n_steps == 0 and sc.h == 1e-5

    path.write_text(json.dumps({**doc, "mystery": 1}))
    with pytest.raises(ValueError, match="mystery"):
        ExperimentConfig.from_json(path)
    with pytest.raises(ValueError, match="train_frac"):
        ExperimentConfig(split={"train_frac": 1.5})


def test_split_by_fraction():
    obs = np.arange(100, dtype=float)[:, None]
    train, test = split_by_fraction(obs, 0.9)
    assert len(train) == 90 and len(test) == 10
    assert np.array_equal(np.vstack([train, test]), obs)
    with pytest.raises(ValueError):
        split_by_fraction(obs, 1.0)
    with pytest.raises(ValueError):
        split_by_fraction(obs[:2], 0.001)
