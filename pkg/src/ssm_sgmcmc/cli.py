"""Command-line experiment harness.

Five subcommands cover the experiment lifecycle: ``generate`` synthetic
data, ``fit`` chains, ``eval`` metrics over a trace, ``grad-error``
estimator error curves, and ``buffer`` adaptive buffer selection.  Every
command is a deterministic function of (config, input files, seed); CLI
flags override config-file fields, and ``SSM_SGMCMC_SEED`` supplies the
seed when no flag does.
"""

import concurrent.futures
import json
import os

import click
import numpy as np

from ssm_sgmcmc.buffer import (
    adaptive_buffer,
    dobrushin_bound,
    empirical_grad_error_curve,
    extrapolate_buffer,
    lgssm_lipschitz,
)
from ssm_sgmcmc.estimators import (
    buffered_gradient,
    full_gradient,
    sample_subsequence,
)
from ssm_sgmcmc.evaluation import (
    aligned_block_mse,
    constrained_blocks,
    heldout_loglik,
    ksd_imq,
    predictive_k_step,
    slds_em_lower_bound,
)
from ssm_sgmcmc.io import (
    ExperimentConfig,
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
from ssm_sgmcmc.params import constrain, coord_mask, flatten, unconstrain
from ssm_sgmcmc.samplers import KINDS, run_chain

# KSD scores switch from the exact gradient to a long buffered subsequence
# once sequences get large enough that a full message pass per sample is
# wasteful.
_KSD_FULL_GRAD_MAX_T = 20000
_KSD_SUBSEQ = (10000, 100)


def _load_config(path):
    return ExperimentConfig.from_json(path) if path else ExperimentConfig()


def _resolve_seed(explicit, config_seed):
    if explicit is not None:
        return int(explicit)
    env = os.environ.get("SSM_SGMCMC_SEED")
    if env is not None:
        return int(env)
    if config_seed is not None:
        return int(config_seed)
    raise click.UsageError(
        "a seed is required: pass --seed or set SSM_SGMCMC_SEED")


def _initial_params(spec, cfg):
    """Starting point: a params JSON path or ``star:<tag>``."""
    if spec is None:
        if "params" in cfg.init:
            spec = cfg.init["params"]
        elif "preset" in cfg.init:
            spec = "star:" + cfg.init["preset"]
    if spec is None:
        raise click.UsageError(
            "no starting parameters: pass --init <params.json> or "
            "--init star:<tag> (or set init in the config)")
    if spec.startswith("star:"):
        return make_synthetic_star(spec[len("star:"):])
    if not os.path.exists(spec):
        raise click.UsageError(f"init file not found: {spec}")
    return read_params_json(spec)


def _perturb_params(params, scale, seed):
    """Gaussian noise on the free unconstrained coordinates."""
    masks = coord_mask(params)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 104729]))
    u = unconstrain(params)
    for k in u:
        u[k] = u[k] + scale * rng.standard_normal(u[k].shape) * masks[k]
    return constrain(params.family, u)


def _train_obs(data_path, cfg):
    """Training sequence: explicit CSV verbatim, config CSV split by
    ``train_frac`` (default 0.9), or a previously generated ``obs.csv``."""
    if data_path is not None:
        return read_obs_csv(data_path)
    if "csv" in cfg.data:
        obs = read_obs_csv(cfg.data["csv"])
        frac = cfg.split.get("train_frac", 0.9)
        return split_by_fraction(obs, frac)[0]
    candidate = os.path.join(cfg.outdir, "obs.csv")
    if os.path.exists(candidate):
        return read_obs_csv(candidate)
    raise click.UsageError("no training data: pass --data or configure a "
                           "data source, or run generate first")


def _test_obs(test_path, cfg):
    if test_path is not None:
        return read_obs_csv(test_path)
    if "csv" in cfg.data:
        obs = read_obs_csv(cfg.data["csv"])
        frac = cfg.split.get("train_frac", 0.9)
        return split_by_fraction(obs, frac)[1]
    candidate = os.path.join(cfg.outdir, "test_obs.csv")
    if os.path.exists(candidate):
        return read_obs_csv(candidate)
    raise click.UsageError("no test data: pass --test-data or configure a "
                           "data source, or run generate first")


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def main():
    """Stochastic-gradient MCMC for state space models."""


# ---------------------------------------------------------------------------
# generate


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="experiment JSON; flags override it")
@click.option("--preset", default=None,
              help="synthetic parameter set: arhmm, lgssm, slds, hmm8")
@click.option("-T", "--length", type=int, default=None,
              help="training sequence length")
@click.option("--test-length", type=int, default=None,
              help="test sequence length (default 10000)")
@click.option("--seed", type=int, default=None)
@click.option("--outdir", type=click.Path(), default=None)
def generate(config_path, preset, length, test_length, seed, outdir):
    """Write synthetic train/test sequences plus the generating params."""
    cfg = _load_config(config_path)
    tag = preset or cfg.data.get("synthetic")
    if tag is None:
        raise click.UsageError("--preset (or config data.synthetic) "
                               "is required")
    seed = _resolve_seed(seed, cfg.data.get("seed"))
    T = length or cfg.data.get("T") or 10000
    test_T = test_length or cfg.split.get("test_T") or 10000
    outdir = outdir or cfg.outdir
    os.makedirs(outdir, exist_ok=True)

    params = make_synthetic_star(tag)
    g_train, g_test = [np.random.default_rng(s)
                       for s in np.random.SeedSequence(seed).spawn(2)]
    latents, obs = simulate(params, T, g_train)
    test_latents, test_obs = simulate(params, test_T, g_test)

    write_params_json(os.path.join(outdir, "params_star.json"), params)
    write_obs_csv(os.path.join(outdir, "obs.csv"), obs)
    write_latent_csv(os.path.join(outdir, "latents.csv"), latents,
                     params.family)
    write_obs_csv(os.path.join(outdir, "test_obs.csv"), test_obs)
    write_latent_csv(os.path.join(outdir, "test_latents.csv"), test_latents,
                     params.family)
    click.echo(f"wrote {outdir}/obs.csv ({T} steps) and "
               f"{outdir}/test_obs.csv ({test_T} steps), "
               f"family {params.family}")


# ---------------------------------------------------------------------------
# fit


def _fit_one(obs, sampler_cfg, init, record_wall, wall_limit, path):
    trace = run_chain(obs, sampler_cfg, init, record_wall=record_wall,
                      wall_limit=wall_limit)
    write_trace(path, trace)
    return path, len(trace.samples), trace.error


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None)
@click.option("--data", "data_path", type=click.Path(exists=True),
              default=None, help="training observation CSV, used verbatim")
@click.option("--init", "init_spec", default=None,
              help="params JSON path or star:<tag>")
@click.option("--perturb", type=float, default=None,
              help="noise scale on the starting free coordinates")
@click.option("--kind", type=click.Choice(KINDS), default=None)
@click.option("--steps", type=int, default=None)
@click.option("--step-size", type=float, default=None)
@click.option("-S", "--subseq", type=int, default=None)
@click.option("-B", "--buffer", "buffer_", type=int, default=None)
@click.option("--scheme", type=click.Choice(["uniform", "partition"]),
              default=None)
@click.option("--thin", type=int, default=None)
@click.option("--estimator", default=None,
              help="slds gradient flavour: xz, z-marginal, x-marginal")
@click.option("--chains", type=int, default=1, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True,
              help="worker processes for multi-chain runs")
@click.option("--seed", type=int, default=None,
              help="chain i runs with seed+i")
@click.option("--wall-limit", type=float, default=None,
              help="stop each chain after this many seconds")
@click.option("--wall-clock/--no-wall-clock", "wall_clock", default=False,
              show_default=True,
              help="record real timestamps (breaks byte-reproducibility)")
@click.option("--outdir", type=click.Path(), default=None)
def fit(config_path, data_path, init_spec, perturb, kind, steps, step_size,
        subseq, buffer_, scheme, thin, estimator, chains, jobs, seed,
        wall_limit, wall_clock, outdir):
    """Run Langevin chains and persist their traces."""
    cfg = _load_config(config_path)
    seed = _resolve_seed(seed, cfg.sampler.get("seed"))
    outdir = outdir or cfg.outdir
    os.makedirs(outdir, exist_ok=True)
    obs = _train_obs(data_path, cfg)
    init = _initial_params(init_spec, cfg)
    if perturb is None:
        perturb = cfg.init.get("perturb", 0.0)
    if perturb:
        init = _perturb_params(init, perturb, seed)
    if chains < 1:
        raise click.UsageError("--chains must be >= 1")

    jobs_args = []
    for i in range(chains):
        sc = cfg.sampler_config(kind=kind, n_steps=steps, h=step_size,
                                S=subseq, B=buffer_, scheme=scheme,
                                thin=thin, estimator=estimator,
                                seed=seed + i)
        name = "trace.csv" if chains == 1 else f"trace_chain{i}.csv"
        jobs_args.append((obs, sc, init, wall_clock, wall_limit,
                          os.path.join(outdir, name)))

    if jobs > 1 and chains > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_fit_one, *zip(*jobs_args)))
    else:
        results = [_fit_one(*a) for a in jobs_args]

    if chains > 1:
        manifest = {"chains": [os.path.basename(r[0]) for r in results]}
        with open(os.path.join(outdir, "manifest.json"), "w",
                  encoding="utf-8") as fh:
            fh.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    for path, n, err in results:
        note = f" (stopped: {err})" if err else ""
        click.echo(f"wrote {path}: {n} samples{note}")


# ---------------------------------------------------------------------------
# eval


def _running_mean_mse(samples, star):
    truth = constrained_blocks(star)
    acc = {k: np.zeros_like(v) for k, v in truth.items()}
    per_step = []
    for i, p in enumerate(samples):
        blocks = constrained_blocks(p)
        for k in acc:
            acc[k] += blocks[k]
        est = {k: acc[k] / (i + 1) for k in acc}
        per_step.append(aligned_block_mse(est, truth)[0])
    return per_step


def _ksd_grad_fn(train_obs, seed):
    T = len(train_obs)
    if T <= _KSD_FULL_GRAD_MAX_T:
        return (lambda p: full_gradient(p, train_obs)), {"score": "full"}
    S, B = _KSD_SUBSEQ
    sub = sample_subsequence(T, S, B, "uniform", seed)
    return (lambda p: buffered_gradient(p, train_obs, sub)), \
        {"score": "buffered", "S": S, "B": B}


@main.command("eval")
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None)
@click.option("--trace", "trace_path", type=click.Path(exists=True),
              required=True)
@click.option("--test-data", "test_path", type=click.Path(exists=True),
              default=None)
@click.option("--data", "data_path", type=click.Path(exists=True),
              default=None, help="training CSV (scores for ksd)")
@click.option("--star", "star_path", type=click.Path(exists=True),
              default=None, help="reference params JSON for mse")
@click.option("--metric", "metric_flags", multiple=True,
              help="heldout, mse, predictive, ksd, em_bound (repeatable)")
@click.option("-k", "--horizon", type=int, default=None,
              help="predictive horizon")
@click.option("--seed", type=int, default=None,
              help="Monte Carlo seed for em_bound (default 0)")
@click.option("--out", "out_path", type=click.Path(), default=None)
def eval_cmd(config_path, trace_path, test_path, data_path, star_path,
             metric_flags, horizon, seed, out_path):
    """Evaluate metrics at every trace checkpoint; append to a metric CSV."""
    cfg = _load_config(config_path)
    trace = read_trace(trace_path)
    if not trace.samples:
        raise click.ClickException(f"{trace_path}: trace is empty")
    metrics = list(metric_flags) or cfg.metrics or ["heldout"]
    seed = 0 if seed is None else seed
    family = trace.samples[0].family
    steps = [i * trace.config.thin for i in range(len(trace.samples))]

    def meta(i, **extra):
        d = {"step": steps[i], "wall_seconds": trace.wall_seconds[i]}
        d.update(extra)
        return d

    rows = []
    for metric in metrics:
        if metric in ("heldout", "em_bound", "predictive"):
            test_obs = _test_obs(test_path, cfg)
        if metric == "heldout" and family == "slds":
            metric = "em_bound"
        if metric == "heldout":
            for i, p in enumerate(trace.samples):
                rows.append({"metric": "heldout", "block": "",
                             "value": heldout_loglik(p, test_obs),
                             "meta": meta(i)})
        elif metric == "em_bound":
            if family != "slds":
                raise click.UsageError("em_bound applies to slds traces")
            n_mc = cfg.evaluation.get("n_mc", 20)
            burn = cfg.evaluation.get("burn_in", 5)
            for i, p in enumerate(trace.samples):
                rng = np.random.default_rng(
                    np.random.SeedSequence([seed, i]))
                rows.append({"metric": "em_bound", "block": "",
                             "value": slds_em_lower_bound(
                                 p, test_obs, n_mc=n_mc, burn_in=burn,
                                 seed=rng),
                             "meta": meta(i, n_mc=n_mc)})
        elif metric == "mse":
            spec = star_path or cfg.evaluation.get("star")
            if spec is None:
                raise click.UsageError("mse needs --star <params.json>")
            star = read_params_json(spec)
            for i, mse in enumerate(_running_mean_mse(trace.samples, star)):
                for block in mse:
                    rows.append({"metric": "mse", "block": block,
                                 "value": mse[block], "meta": meta(i)})
        elif metric == "predictive":
            k = horizon or cfg.evaluation.get("k", 1)
            for i, p in enumerate(trace.samples):
                rows.append({"metric": "predictive", "block": "",
                             "value": predictive_k_step(p, test_obs, k),
                             "meta": meta(i, k=k)})
        elif metric == "ksd":
            if len(trace.samples) < 2:
                raise click.ClickException("ksd needs at least two samples")
            train = _train_obs(data_path, cfg)
            grad_fn, note = _ksd_grad_fn(train, seed)
            note["n_samples"] = len(trace.samples)
            for block, val in ksd_imq(trace.samples, grad_fn).items():
                rows.append({"metric": "ksd", "block": block, "value": val,
                             "meta": note})
        else:
            raise click.UsageError(f"unknown metric {metric!r}")

    out_path = out_path or os.path.join(
        os.path.dirname(trace_path) or ".", "metrics.csv")
    write_metrics_csv(out_path, rows)
    click.echo(f"wrote {out_path}: {len(rows)} rows "
               f"({', '.join(metrics)})")


# ---------------------------------------------------------------------------
# grad-error


def _int_grid(text, fallback):
    if text is None:
        return list(fallback)
    return [int(v) for v in text.split(",") if v != ""]


@main.command("grad-error")
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None)
@click.option("--data", "data_path", type=click.Path(exists=True),
              default=None)
@click.option("--params", "params_spec", default=None,
              help="params JSON path or star:<tag>")
@click.option("--s-grid", default=None, help="comma-separated, e.g. 4,16,64")
@click.option("--b-grid", default=None, help="comma-separated, e.g. 0,2,4,8")
@click.option("--n-trials", type=int, default=None,
              help="random starts per cell; 0 = exhaustive")
@click.option("--scheme", type=click.Choice(["uniform", "partition"]),
              default="uniform", show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
def grad_error(config_path, data_path, params_spec, s_grid, b_grid, n_trials,
               scheme, seed, out_path):
    """Measure estimator error against the full gradient over (S, B)."""
    cfg = _load_config(config_path)
    obs = _train_obs(data_path, cfg)
    params = _initial_params(params_spec, cfg)
    ev = cfg.evaluation
    S_list = _int_grid(s_grid, ev.get("s_grid", [len(obs) // 10 or 1]))
    B_list = _int_grid(b_grid, ev.get("b_grid", [0, 1, 2, 4, 8]))
    if n_trials is None:
        n_trials = ev.get("n_trials")
    if n_trials == 0:
        n_trials = None
    seed = 0 if seed is None else seed
    rows = empirical_grad_error_curve(params, obs, S_list, B_list,
                                      n_trials=n_trials, seed=seed,
                                      scheme=scheme)
    out_path = out_path or os.path.join(cfg.outdir, "error_curve.csv")
    write_error_curve_csv(out_path, rows)
    click.echo(f"wrote {out_path}: {len(rows)} cells")
    for r in rows:
        click.echo(f"  S={r['S']:<6d} B={r['B']:<4d} "
                   f"mean_err={r['mean_err']:.6g}")


# ---------------------------------------------------------------------------
# buffer


@main.command("buffer")
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None)
@click.option("--data", "data_path", type=click.Path(exists=True),
              default=None)
@click.option("--params", "params_spec", default=None,
              help="params JSON path or star:<tag>")
@click.option("-S", "--subseq", type=int, default=None, required=False)
@click.option("--epsilon", type=float, default=None,
              help="absolute gradient-error tolerance")
@click.option("--rel-eps", type=float, default=None,
              help="tolerance relative to the full gradient norm")
@click.option("--b-star", type=int, default=100, show_default=True)
@click.option("--n-sub", type=int, default=1000, show_default=True)
@click.option("--scheme", type=click.Choice(["uniform", "partition"]),
              default="uniform", show_default=True)
@click.option("--target-eps", type=float, default=None,
              help="extrapolate the pilot B to this tolerance")
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
def buffer_cmd(config_path, data_path, params_spec, subseq, epsilon, rel_eps,
               b_star, n_sub, scheme, target_eps, seed, out_path):
    """Pick the smallest buffer meeting a gradient-error tolerance."""
    cfg = _load_config(config_path)
    obs = _train_obs(data_path, cfg)
    params = _initial_params(params_spec, cfg)
    S = subseq or cfg.sampler.get("S")
    if S is None:
        raise click.UsageError("-S/--subseq is required")
    seed = 0 if seed is None else seed
    if epsilon is None:
        if rel_eps is None:
            raise click.UsageError("pass --epsilon or --rel-eps")
        g = flatten(full_gradient(params, obs), coord_mask(params))
        epsilon = rel_eps * float(np.linalg.norm(g))

    B, hit_cap = adaptive_buffer(params, obs, S, epsilon, B_star=b_star,
                                 N_S=n_sub, seed=seed, scheme=scheme)
    if params.family == "lgssm":
        decay = lgssm_lipschitz(params)
    else:
        decay = dobrushin_bound(params.Pi)
    report = {"B": B, "hit_cap": hit_cap, "epsilon": epsilon, "S": S,
              "rho": decay.L, "rho_source": decay.source,
              "no_contraction": decay.no_contraction, "extrapolated": None}

    click.echo(f"selected B = {B} (epsilon = {epsilon:.6g}, S = {S})")
    if hit_cap:
        click.echo(f"  warning: search capped at B* = {b_star}; "
                   "the tolerance may be unattainable")
    click.echo(f"  contraction rate rho = {decay.L:.6g} "
               f"({decay.source}"
               + (", no contraction certificate)" if decay.no_contraction
                  else ")"))
    if target_eps is not None:
        if decay.no_contraction or not 0.0 < decay.L < 1.0:
            click.echo("  cannot extrapolate without a contraction rate "
                       "in (0, 1)")
        else:
            B_ex = extrapolate_buffer(B, epsilon, target_eps, decay.L)
            report["extrapolated"] = {"epsilon": target_eps, "B": B_ex}
            click.echo(f"  extrapolated B for epsilon = {target_eps:.6g}: "
                       f"{B_ex}")
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
        click.echo(f"wrote {out_path}")


if __name__ == "__main__":
    main()
