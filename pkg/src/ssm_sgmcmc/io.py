"""Experiment file formats and configuration.

Formats, one owner each: observation CSV (``t,y0,...,y{m-1}``), latent
CSV, parameter JSON (nested arrays plus a ``family`` tag), trace CSV
(``step,wall_seconds`` then one column per parameter entry) with a JSON
sidecar of config and final state, metric CSV
(``metric,block,value,meta_json``), and error-curve CSV
(``S,B,mean_err,sd_err,n_trials``).

Floats are serialized with ``repr`` so every value survives a round trip
bit-for-bit; each writer is a deterministic function of its inputs.
Re-running a pipeline with the same seed therefore reproduces artifacts
byte-identically (wall-clock recording, which is off by default, is the
one exception).
"""

import csv
import dataclasses
import json
import os

import numpy as np

from ssm_sgmcmc.params import (
    constrained_labels,
    constrained_values,
    param_class,
    params_from_constrained,
)
from ssm_sgmcmc.samplers import SamplerConfig, Trace


def _fmt(x):
    return repr(float(x))


# ---------------------------------------------------------------------------
# observations and latents


def write_obs_csv(path, obs):
    obs = np.asarray(obs, dtype=float)
    if obs.ndim == 1:
        obs = obs[:, None]
    m = obs.shape[1]
    lines = ["t," + ",".join(f"y{j}" for j in range(m))]
    for t, row in enumerate(obs):
        lines.append(str(t) + "," + ",".join(_fmt(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_obs_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        m = len(header) - 1
        if header[0] != "t" or header[1:] != [f"y{j}" for j in range(m)]:
            raise ValueError(f"{path}: malformed observation header {header}")
        rows = []
        for i, row in enumerate(reader):
            if int(row[0]) != i:
                raise ValueError(f"{path}: row index {row[0]} at line {i}")
            rows.append([float(v) for v in row[1:]])
    if not rows:
        raise ValueError(f"{path}: no observations")
    return np.asarray(rows)


def write_latent_csv(path, latents, family):
    """Latent CSV: ``t,z`` for discrete chains, ``t,x0,...`` for the
    linear-Gaussian model, both for the switching model."""
    if family == "slds":
        z, x = latents
    elif family == "lgssm":
        z, x = None, latents
    else:
        z, x = latents, None
    cols = ["t"]
    if z is not None:
        z = np.asarray(z)
        cols.append("z")
    if x is not None:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        cols += [f"x{j}" for j in range(x.shape[1])]
    T = len(z) if z is not None else len(x)
    lines = [",".join(cols)]
    for t in range(T):
        row = [str(t)]
        if z is not None:
            row.append(str(int(z[t])))
        if x is not None:
            row += [_fmt(v) for v in x[t]]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_latent_csv(path):
    """Returns ``(z, x)``; either element is None when absent."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        has_z = len(header) > 1 and header[1] == "z"
        n_x = len(header) - 1 - int(has_z)
        zs, xs = [], []
        for row in reader:
            if has_z:
                zs.append(int(row[1]))
            if n_x:
                xs.append([float(v) for v in row[1 + int(has_z):]])
    z = np.asarray(zs, dtype=int) if has_z else None
    x = np.asarray(xs) if n_x else None
    return z, x


# ---------------------------------------------------------------------------
# parameters


def params_to_doc(params):
    doc = {"family": params.family}
    for name, arr in params.blocks().items():
        doc[name] = np.asarray(arr).tolist()
    return doc


def params_from_doc(doc):
    doc = dict(doc)
    family = doc.pop("family")
    cls = param_class(family)
    return cls(**{k: np.asarray(v, dtype=float) for k, v in doc.items()})


def write_params_json(path, params):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(params_to_doc(params), sort_keys=True, indent=2))
        fh.write("\n")


def read_params_json(path):
    with open(path, encoding="utf-8") as fh:
        return params_from_doc(json.load(fh))


# ---------------------------------------------------------------------------
# traces


def _sidecar_path(csv_path):
    return os.path.splitext(csv_path)[0] + ".json"


def write_trace(path, trace):
    """Persist a chain: ``<path>`` CSV + same-stem ``.json`` sidecar."""
    init = trace.samples[0]
    labels = constrained_labels(init)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "wall_seconds"] + labels)
        for i, p in enumerate(trace.samples):
            w.writerow([str(i * trace.config.thin),
                        _fmt(trace.wall_seconds[i])]
                       + [_fmt(v) for v in constrained_values(p)])
    sidecar = {
        "config": dataclasses.asdict(trace.config),
        "error": trace.error,
        "grad_norms": [float(g) for g in trace.grad_norms],
        "buffer_sizes": [int(b) for b in trace.buffer_sizes],
        "final_params": params_to_doc(trace.samples[-1]),
    }
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(sidecar, sort_keys=True, indent=2))
        fh.write("\n")


def read_trace(path):
    """Rebuild a :class:`~ssm_sgmcmc.samplers.Trace` from disk."""
    with open(_sidecar_path(path), encoding="utf-8") as fh:
        sidecar = json.load(fh)
    config = SamplerConfig(**sidecar["config"])
    like = params_from_doc(sidecar["final_params"])
    samples, wall = [], []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expect = ["step", "wall_seconds"] + constrained_labels(like)
        if header != expect:
            raise ValueError(f"{path}: trace columns do not match sidecar")
        for i, row in enumerate(reader):
            if int(row[0]) != i * config.thin:
                raise ValueError(f"{path}: unexpected step column {row[0]}")
            wall.append(float(row[1]))
            samples.append(params_from_constrained(
                like.family, np.array([float(v) for v in row[2:]]), like))
    return Trace(samples=samples, wall_seconds=wall,
                 grad_norms=sidecar["grad_norms"],
                 buffer_sizes=sidecar["buffer_sizes"],
                 config=config, error=sidecar["error"])


# ---------------------------------------------------------------------------
# metric and error-curve tables


def write_metrics_csv(path, rows):
    """Rows are dicts with keys metric, block, value, meta (a dict)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "block", "value", "meta_json"])
        for r in rows:
            w.writerow([r["metric"], r["block"], _fmt(r["value"]),
                        json.dumps(r.get("meta", {}), sort_keys=True,
                                   separators=(",", ":"))])


def read_metrics_csv(path):
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        if next(reader) != ["metric", "block", "value", "meta_json"]:
            raise ValueError(f"{path}: malformed metric header")
        for row in reader:
            out.append({"metric": row[0], "block": row[1],
                        "value": float(row[2]), "meta": json.loads(row[3])})
    return out


def write_error_curve_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["S", "B", "mean_err", "sd_err", "n_trials"])
        for r in rows:
            w.writerow([str(int(r["S"])), str(int(r["B"])),
                        _fmt(r["mean_err"]), _fmt(r["sd_err"]),
                        str(int(r["n_trials"]))])


def read_error_curve_csv(path):
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        if next(reader) != ["S", "B", "mean_err", "sd_err", "n_trials"]:
            raise ValueError(f"{path}: malformed error-curve header")
        for row in reader:
            out.append({"S": int(row[0]), "B": int(row[1]),
                        "mean_err": float(row[2]), "sd_err": float(row[3]),
                        "n_trials": int(row[4])})
    return out


# ---------------------------------------------------------------------------
# experiment configuration


@dataclasses.dataclass
class ExperimentConfig:
    """One experiment = one JSON document; CLI flags override fields.

    ``data`` declares the source: ``{"synthetic": tag, "T": n, "seed": s}``
    or ``{"csv": path}``.  ``split`` holds ``{"test_T": n}`` for synthetic
    data (separate test sequence) or ``{"train_frac": f}`` for CSV data
    (leading fraction trains, remainder tests).  ``sampler`` carries
    :class:`~ssm_sgmcmc.samplers.SamplerConfig` fields, ``init`` the
    starting point (``{"params": path}`` or ``{"preset": tag}``, plus
    ``"perturb"``), ``evaluation`` metric knobs (``k``, ``star``, ...).
    """

    family: str = None
    data: dict = dataclasses.field(default_factory=dict)
    split: dict = dataclasses.field(default_factory=dict)
    sampler: dict = dataclasses.field(default_factory=dict)
    init: dict = dataclasses.field(default_factory=dict)
    metrics: list = dataclasses.field(default_factory=list)
    evaluation: dict = dataclasses.field(default_factory=dict)
    outdir: str = "."

    def __post_init__(self):
        frac = self.split.get("train_frac")
        if frac is not None and not 0.0 < frac < 1.0:
            raise ValueError("train_frac must lie in (0, 1)")

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        known = {f.name for f in dataclasses.fields(cls)}
        bad = set(doc) - known
        if bad:
            raise ValueError(f"{path}: unknown config keys {sorted(bad)}")
        return cls(**doc)

    def sampler_config(self, **overrides):
        merged = dict(self.sampler)
        merged.update({k: v for k, v in overrides.items() if v is not None})
        return SamplerConfig(**merged)


def split_by_fraction(obs, train_frac):
    """Leading-fraction train/test split of one sequence."""
    if not 0.0 < train_frac < 1.0:
        raise ValueError("train_frac must lie in (0, 1)")
    T = len(obs)
    n_train = int(np.floor(train_frac * T))
    if n_train < 1 or n_train >= T:
        raise ValueError(f"split of {T} rows at {train_frac} leaves an "
                         "empty side")
    return obs[:n_train], obs[n_train:]
