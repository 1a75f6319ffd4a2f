"""Desk-scale experiment drivers.

Each ``run_*`` function is a pure function of its config (including the
seed): it trains what it needs, writes CSV tables and a JSON report into
``cfg["out"]`` and returns the report dict.  Every random draw comes from a
stream derived from ``(seed, cell id)`` so cells do not share state.
"""
from __future__ import annotations

import copy
import json
import logging
import math
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import data as ds
from . import metrics as mt
from .distprop import Method, moment_match_relu, parse_method, push_activation, pnn_sdp_combine, propagate, propagate_marginal
from .distributions import MarginalCauchy, MarginalGaussian
from .errors import NonFiniteLoss
from .network import forward, init_params, init_pnn
from .numerics import derive_rng, derive_seed, sample
from .training import AdamConfig, LossSpec, accuracy, train

log = logging.getLogger(__name__)

VERSION = f"stabprop-{__version__}"

# --- config handling ---------------------------------------------------------

COMMON = {"seed": 0, "out": "results"}

TV_DEFAULTS = {
    "dataset": "iris",
    "standardize": False,
    "hidden": [100, 100, 100, 100],
    "init": "fan_in_uniform",
    "n_nets": 10,
    "epochs": 5000,
    "lr": 1e-3,
    "batch_size": 0,
    "n_inputs": 10,
    "sigmas": [0.1, 1.0, 10.0, 100.0, 1000.0],
    "methods": ["sdp_full", "mc_100", "sdp_marginal_gaussian", "marginal_moment_match"],
    "oracle_samples": 1_000_000,
    "bins": 10,
    "chunk": 100_000,
}
TV_SMOKE = {"n_nets": 2, "epochs": 50, "n_inputs": 2, "sigmas": [0.1, 1.0], "oracle_samples": 10_000}

W1_DEFAULTS = {
    "dataset": "iris",
    "standardize": False,
    "hidden": [100, 100, 100, 100],
    "init": "fan_in_uniform",
    "n_nets": 10,
    "epochs": 5000,
    "lr": 1e-3,
    "batch_size": 0,
    "n_inputs": 10,
    "sigmas": [0.01, 0.1, 1.0],
    "methods": ["sdp_full", "sdp_marginal_gaussian", "marginal_moment_match"],
    "samples": 30_000,
    "projections": 64,
    "relu_sigma": 0.1,
    "relu_mus": [-0.5, 0.5, 41],
    "relu_samples": 100_000,
}
W1_SMOKE = {"n_nets": 2, "epochs": 50, "n_inputs": 2, "samples": 2000, "projections": 8, "relu_samples": 10_000}

INTERVAL_DEFAULTS = {
    "dataset": "synthetic",
    "n_samples": 1000,
    "csv": None,
    "target": -1,
    "split": [0.6, 0.2, 0.2],
    "hidden": [64],
    "epochs": 5000,
    "batch_size": 0,
    "lrs": [1e-2, 1e-3, 1e-4],
    "weight_decays": [0.0, 1e-3, 1e-2, 1e-1, 1.0],
    "input_variances": [1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0],
    "n_seeds": 20,
    "methods": ["sdp", "sdp_pnn", "pnn"],
    "level": 0.95,
    "window": [0.925, 0.975],
    "propagation": "full",
}
INTERVAL_SMOKE = {
    "n_samples": 200,
    "epochs": 100,
    "lrs": [1e-2],
    "weight_decays": [0.0],
    "input_variances": [1e-2],
    "n_seeds": 1,
}

SELECTIVE_DEFAULTS = {
    "train_images": None,
    "train_labels": None,
    "test_images": None,
    "test_labels": None,
    "ood_images": None,
    "ood_labels": None,
    "n_train": 2000,
    "n_test": 2000,
    "n_ood": 2000,
    "hidden": [256, 256],
    "epochs": 30,
    "lr": 1e-3,
    "batch_size": 128,
    "weight_decay": 0.0,
    "train_sigma": 0.1,
    "score_sigma": 0.1,
    "score_gamma": 0.1,
    "n_seeds": 3,
}
SELECTIVE_SMOKE = {"n_train": 300, "n_test": 100, "n_ood": 100, "hidden": [64], "epochs": 3, "n_seeds": 1}

TWOMOONS_DEFAULTS = {
    "n_samples": 1000,
    "noise": 0.1,
    "hidden": [64, 64],
    "epochs": 500,
    "lr": 1e-2,
    "batch_size": 0,
    "input_sigma": 0.1,
    "box": [-2.0, 3.0, -1.5, 2.0],
    "resolution": 51,
}
TWOMOONS_SMOKE = {"n_samples": 200, "epochs": 50, "resolution": 11}

PROPAGATE_DEFAULTS = {
    "network": None,
    "loc": None,
    "scale": 0.1,
    "family": "gaussian",
    "method": "sdp_full",
    "cauchy_correlated": False,
}
PROPAGATE_SMOKE = {}

TRAIN_DEFAULTS = {
    "dataset": "iris",
    "target": -1,
    "split": [0.6, 0.2, 0.2],
    "n_samples": 1000,
    "noise": 0.1,
    "model": "mlp",
    "hidden": [100],
    "init": "kaiming_uniform",
    "loss": "softmax_ce",
    "input_scale": 0.0,
    "lr": 1e-3,
    "epochs": 1000,
    "batch_size": 128,
    "weight_decay": 0.0,
}
TRAIN_SMOKE = {"epochs": 20, "n_samples": 200}

DEFAULTS = {
    "propagate": (PROPAGATE_DEFAULTS, PROPAGATE_SMOKE),
    "train": (TRAIN_DEFAULTS, TRAIN_SMOKE),
    "tv": (TV_DEFAULTS, TV_SMOKE),
    "w1": (W1_DEFAULTS, W1_SMOKE),
    "interval": (INTERVAL_DEFAULTS, INTERVAL_SMOKE),
    "selective": (SELECTIVE_DEFAULTS, SELECTIVE_SMOKE),
    "two_moons": (TWOMOONS_DEFAULTS, TWOMOONS_SMOKE),
}


def load_config_file(path) -> dict:
    """Read a YAML (or JSON, which is valid YAML) mapping."""
    if path is None:
        return {}
    with open(path) as fh:
        d = yaml.safe_load(fh)
    if d is None:
        return {}
    if not isinstance(d, dict):
        raise ValueError(f"{path}: config must be a mapping")
    return d


def make_config(kind: str, overrides: dict | None = None, smoke: bool = False) -> dict:
    """Defaults for ``kind``, then smoke scaling, then ``overrides``.

    Unknown keys raise ValueError so typos do not silently fall back to
    defaults.
    """
    base, small = DEFAULTS[kind]
    cfg = copy.deepcopy({**COMMON, **base})
    if smoke:
        cfg.update(copy.deepcopy(small))
    for k, v in (overrides or {}).items():
        if k not in cfg:
            raise ValueError(f"unknown {kind} config key {k!r}")
        cfg[k] = v
    cfg["seed"] = int(cfg["seed"])
    for key in ("sigmas", "input_variances"):
        if key in cfg and any(float(s) < 0 for s in cfg[key]):
            raise ValueError(f"{key} must be >= 0")
    for key in ("input_sigma", "train_sigma", "score_sigma", "score_gamma", "relu_sigma"):
        if key in cfg and float(cfg[key]) < 0:
            raise ValueError(f"{key} must be >= 0")
    return cfg


# --- output ------------------------------------------------------------------


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in r) + "\n")


def write_report(path, report: dict) -> None:
    """JSON report; the config echo leaves out the output directory so that
    reruns into different directories stay byte-identical."""
    if "config" in report:
        report = {**report, "config": {k: v for k, v in report["config"].items() if k != "out"}}
    Path(path).write_text(json.dumps(_plain(report), indent=2, sort_keys=True, allow_nan=False) + "\n")


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- shared pieces -------------------------------------------------------------


def _classification_data(cfg):
    if cfg["dataset"] == "iris":
        x, y = ds.iris()
    else:
        header, m = ds.read_csv_matrix(cfg["dataset"])
        x, y = m[:, :-1], m[:, -1].astype(int)
    if cfg["standardize"]:
        x = (x - x.mean(axis=0)) / np.maximum(x.std(axis=0), ds.STD_FLOOR)
    return x, y


def _train_classifiers(cfg, tag):
    """Train ``n_nets`` softmax classifiers; each keeps ``n_inputs`` held-out points."""
    x, y = _classification_data(cfg)
    n_classes = int(y.max()) + 1
    out = []
    for i in range(cfg["n_nets"]):
        rng = derive_rng(cfg["seed"], tag, "net", i)
        perm = rng.permutation(len(x))
        held, rest = perm[: cfg["n_inputs"]], perm[cfg["n_inputs"] :]
        net = init_params([x.shape[1], *cfg["hidden"], n_classes], rng, init=cfg["init"])
        opt = AdamConfig(lr=cfg["lr"], epochs=cfg["epochs"], batch_size=cfg["batch_size"])
        net, _ = train(net, x[rest], y[rest], LossSpec("softmax_ce"), opt, rng)
        log.info("%s net %d: train accuracy %.3f", tag, i, accuracy(net, x[rest], y[rest]))
        out.append((net, x[held]))
    return out


def _forward_samples(net, dist, n, rng, chunk):
    xs = sample(dist, n, rng)
    return np.concatenate([forward(net, xs[s : s + chunk]) for s in range(0, n, chunk)], axis=0)


def _method_samples(net, dist, method, n, cell, cfg):
    """Samples of a method's output distribution for one (net, input, sigma) cell."""
    seed = cfg["seed"]
    if method == "oracle":
        # identical stream to the oracle: self-comparison
        return _forward_samples(net, dist, n, derive_rng(seed, *cell, "oracle"), cfg.get("chunk", 100_000))
    m = parse_method(method)
    out = propagate(net, dist, m, rng=derive_rng(seed, *cell, "mc", str(method)))
    return sample(out, n, derive_rng(seed, *cell, "draw", str(method)))


def _summary(values):
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


# --- total variation (Iris) ------------------------------------------------------


def run_tv_experiment(cfg) -> dict:
    """Mean and std of ``1 - TV`` against a sampling oracle per (sigma, method)."""
    out = _out_dir(cfg)
    nets = _train_classifiers(cfg, "tv")
    n = int(cfg["oracle_samples"])
    scores = {(s, m): [] for s in cfg["sigmas"] for m in cfg["methods"]}
    for i, (net, inputs) in enumerate(nets):
        for j, x0 in enumerate(inputs):
            for s in cfg["sigmas"]:
                dist = MarginalGaussian(x0, np.full(x0.shape, float(s)))
                cell = ("tv", i, j, repr(float(s)))
                oracle = _forward_samples(net, dist, n, derive_rng(cfg["seed"], *cell, "oracle"), cfg["chunk"])
                for m in cfg["methods"]:
                    got = _method_samples(net, dist, m, n, cell, cfg)
                    scores[(s, m)].append(1.0 - mt.tv_binned(oracle, got, cfg["bins"]))
    rows = []
    for (s, m), v in scores.items():
        mean, std = _summary(v)
        rows.append([float(s), m, mean, std, len(v)])
    header = ["sigma", "method", "mean_one_minus_tv", "std_one_minus_tv", "n"]
    write_table(out / "tv.csv", header, rows)
    report = {
        "experiment": "tv",
        "version": VERSION,
        "config": cfg,
        "results": [dict(zip(header, r)) for r in rows],
    }
    write_report(out / "tv.json", report)
    return report


# --- Wasserstein ---------------------------------------------------------------


def relu_w1_curve(mus, sigma, n, rng):
    """Exact 1-D W1 of SDP and of moment matching against sampled ReLU(N(mu, sigma^2)).

    All three sample sets are monotone images of one standard-normal draw,
    so the sorted coupling pairs them by draw and the Monte-Carlo noise
    largely cancels between the two methods.
    """
    z = rng.standard_normal(n)
    rows = []
    for mu in mus:
        truth = np.maximum(mu + sigma * z, 0.0)
        sdp = push_activation(MarginalGaussian([mu], [sigma]), "relu")
        mm = moment_match_relu(MarginalGaussian([mu], [sigma]))
        w_sdp = mt.wasserstein1_1d(truth, sdp.loc[0] + sdp.scale[0] * z)
        w_mm = mt.wasserstein1_1d(truth, mm.loc[0] + mm.scale[0] * z)
        rows.append([float(mu), float(sigma), w_sdp, w_mm])
    return rows


def run_w1_experiment(cfg) -> dict:
    out = _out_dir(cfg)
    nets = _train_classifiers(cfg, "w1")
    n = int(cfg["samples"])
    cfg_s = {**cfg, "chunk": 100_000}
    scores = {(s, m): [] for s in cfg["sigmas"] for m in cfg["methods"]}
    for i, (net, inputs) in enumerate(nets):
        for j, x0 in enumerate(inputs):
            for s in cfg["sigmas"]:
                dist = MarginalGaussian(x0, np.full(x0.shape, float(s)))
                cell = ("w1", i, j, repr(float(s)))
                oracle = _forward_samples(net, dist, n, derive_rng(cfg["seed"], *cell, "oracle"), 100_000)
                for m in cfg["methods"]:
                    got = _method_samples(net, dist, m, n, cell, cfg_s)
                    prng = derive_rng(cfg["seed"], *cell, "proj", m)
                    scores[(s, m)].append(mt.sliced_w1(oracle, got, cfg["projections"], prng))
    rows = []
    for (s, m), v in scores.items():
        mean, std = _summary(v)
        rows.append([float(s), m, mean, std, len(v)])
    header = ["sigma", "method", "mean_w1", "std_w1", "n"]
    write_table(out / "w1.csv", header, rows)
    lo, hi, k = cfg["relu_mus"]
    mus = np.linspace(float(lo), float(hi), int(k))
    curve = relu_w1_curve(mus, float(cfg["relu_sigma"]), int(cfg["relu_samples"]), derive_rng(cfg["seed"], "relu-w1"))
    curve_header = ["mu", "sigma", "w1_sdp", "w1_moment_match"]
    write_table(out / "w1_relu.csv", curve_header, curve)
    report = {
        "experiment": "w1",
        "version": VERSION,
        "config": cfg,
        "results": [dict(zip(header, r)) for r in rows],
        "relu_curve": [dict(zip(curve_header, r)) for r in curve],
    }
    write_report(out / "w1.json", report)
    return report


# --- prediction intervals ----------------------------------------------------------


def _regression_splits(cfg):
    rng = derive_rng(cfg["seed"], "interval", "data")
    if cfg["csv"]:
        name = Path(cfg["csv"]).stem
        splits = ds.load_csv(cfg["csv"], cfg["target"], derive_seed(cfg["seed"], "split"), cfg["split"])
        return name, splits
    x, y = ds.heteroscedastic(int(cfg["n_samples"]), rng)
    return "synthetic", ds.standardize_split(x, y, rng, cfg["split"], regression=True)


def predict_interval_moments(model, method, x, sigma, propagation="full"):
    """Predictive mean and standard deviation of a 1-D regression model."""
    var_in = sigma**2
    if method == "pnn":
        mu, var = model.predict(x)
        return mu[:, 0], np.sqrt(var[:, 0])
    if method == "sdp_pnn":
        if propagation == "full":
            out = pnn_sdp_combine(model, x, var_in * np.eye(x.shape[1]))
            return out.mean[:, 0], np.sqrt(out.cov[:, 0, 0])
        mu, var_p = model.predict(x)
        _, var_s = propagate_marginal(model.mean_network(), x, np.full(x.shape, var_in), "gaussian")
        return mu[:, 0], np.sqrt(var_p[:, 0] + var_s[:, 0])
    if method == "sdp":
        if propagation == "full":
            out = propagate(model, MarginalGaussian(x, np.full(x.shape, sigma)), Method.SDP_FULL)
            return out.mean[:, 0], np.sqrt(out.cov[:, 0, 0])
        mu, var = propagate_marginal(model, x, np.full(x.shape, var_in), "gaussian")
        return mu[:, 0], np.sqrt(var[:, 0])
    raise ValueError(f"unknown interval method {method!r}")


def fixed_width_mpiw(mu, y, picp, y_range=1.0) -> float:
    """Width of the narrowest constant interval around ``mu`` covering a ``picp`` fraction."""
    r = np.sort(np.abs(np.asarray(y) - np.asarray(mu)))
    k = max(int(math.ceil(picp * len(r))) - 1, 0)
    return float(2.0 * r[k] / y_range)


def run_interval_experiment(cfg) -> dict:
    """Grid-train SDP, SDP+PNN and PNN regressors and select by validation PICP."""
    out = _out_dir(cfg)
    name, (tr, va, te) = _regression_splits(cfg)
    lo, hi = cfg["window"]
    level = float(cfg["level"])
    rows = []
    candidates_out = []
    for method in cfg["methods"]:
        kind = {"sdp": "sdp_nll", "sdp_pnn": "sdp_pnn_nll", "pnn": "pnn_nll"}[method]
        variances = [0.0] if method == "pnn" else cfg["input_variances"]
        cands = []
        for lr in cfg["lrs"]:
            for wd in cfg["weight_decays"]:
                for v in variances:
                    sigma = math.sqrt(float(v))
                    for s in range(int(cfg["n_seeds"])):
                        rng = derive_rng(cfg["seed"], "interval", method, repr(lr), repr(wd), repr(v), s)
                        d_in = tr.x.shape[1]
                        if method == "sdp":
                            model = init_params([d_in, *cfg["hidden"], 1], rng)
                        else:
                            model = init_pnn([d_in, *cfg["hidden"]], 1, rng)
                        opt = AdamConfig(lr=lr, epochs=cfg["epochs"], batch_size=cfg["batch_size"], weight_decay=wd)
                        try:
                            model, _ = train(model, tr.x, tr.y[:, None], LossSpec(kind, sigma), opt, rng)
                        except NonFiniteLoss as exc:
                            log.warning("skipping diverged run: %s", exc)
                            continue
                        mu_v, sd_v = predict_interval_moments(model, method, va.x, sigma, cfg["propagation"])
                        if not (np.all(np.isfinite(mu_v)) and np.all(np.isfinite(sd_v))):
                            continue
                        vp, vw = mt.picp_mpiw(mu_v, sd_v, va.y, level, va.y_range)
                        cands.append(dict(lr=lr, weight_decay=wd, input_sigma=sigma, seed=s, val_picp=vp, val_mpiw=vw, model=model))
        passing = [c for c in cands if lo <= c["val_picp"] <= hi]
        for c in cands:
            candidates_out.append([name, method, c["lr"], c["weight_decay"], c["input_sigma"], c["seed"], c["val_picp"], c["val_mpiw"], int(c in passing)])
        if passing:
            best = min(passing, key=lambda c: (c["val_mpiw"], c["seed"]))
            mu_t, sd_t = predict_interval_moments(best["model"], method, te.x, best["input_sigma"], cfg["propagation"])
            tp, tw = mt.picp_mpiw(mu_t, sd_t, te.y, level, te.y_range)
            base = fixed_width_mpiw(mu_t, te.y, tp, te.y_range)
            rows.append([name, method, 1, best["lr"], best["weight_decay"], best["input_sigma"], best["seed"],
                         best["val_picp"], best["val_mpiw"], tp, tw, base, len(cands), len(passing)])
        else:
            nan = float("nan")
            rows.append([name, method, 0, nan, nan, nan, -1, nan, nan, nan, nan, nan, len(cands), 0])
    header = ["dataset", "method", "selected", "lr", "weight_decay", "input_sigma", "seed", "val_picp", "val_mpiw",
              "test_picp", "test_mpiw", "fixed_width_mpiw", "n_candidates", "n_passing"]
    write_table(out / "interval.csv", header, rows)
    cand_header = ["dataset", "method", "lr", "weight_decay", "input_sigma", "seed", "val_picp", "val_mpiw", "passes"]
    write_table(out / "interval_candidates.csv", cand_header, candidates_out)
    report = {
        "experiment": "interval",
        "version": VERSION,
        "config": cfg,
        "results": [dict(zip(header, r)) for r in rows],
    }
    write_report(out / "interval.json", report)
    return report


# --- selective prediction ------------------------------------------------------------


def _selective_data(cfg, out):
    """Load IDX files from the config or render glyph stand-ins into ``out/data``."""
    keys = ("train", "test", "ood")
    if all(cfg[f"{k}_images"] and cfg[f"{k}_labels"] for k in keys):
        paths = {k: (cfg[f"{k}_images"], cfg[f"{k}_labels"]) for k in keys}
    else:
        rng = derive_rng(cfg["seed"], "selective", "glyphs")
        data_dir = out / "data"
        data_dir.mkdir(exist_ok=True)
        paths = {}
        for k, kind, n in (("train", "digits", cfg["n_train"]), ("test", "digits", cfg["n_test"]), ("ood", "letters", cfg["n_ood"])):
            imgs, labs = ds.glyph_dataset(int(n), kind, rng)
            p = (data_dir / f"{k}-images.idx", data_dir / f"{k}-labels.idx")
            ds.write_idx(p[0], p[1], imgs, labs)
            paths[k] = p
    limits = {"train": cfg["n_train"], "test": cfg["n_test"], "ood": cfg["n_ood"]}
    return {k: ds.load_idx(*paths[k], limit=int(limits[k])) for k in keys}


def selective_scores(ce_net, pd_net, x, cfg):
    """Certainty scores and predicted classes per rule on inputs ``x``."""
    out = {}
    logits = forward(ce_net, x)
    pred_ce = np.argmax(logits, axis=-1)
    sig = np.full(x.shape, float(cfg["score_sigma"]))
    gam = np.full(x.shape, float(cfg["score_gamma"]))
    out["ce/none/softmax_entropy"] = (mt.uncertainty_scores(MarginalGaussian(logits, np.zeros_like(logits)), "softmax_entropy"), pred_ce)
    g = propagate(ce_net, MarginalGaussian(x, sig), Method.SDP_FULL)
    out["ce/sdp/pd_gauss"] = (mt.uncertainty_scores(g, "pairwise_gauss_entropy"), pred_ce)
    c = propagate(ce_net, MarginalCauchy(x, gam), Method.SDP_MARGINAL_CAUCHY, cauchy_correlated=True)
    out["ce/sdp/pd_cauchy"] = (mt.uncertainty_scores(c, "pairwise_cauchy_entropy"), pred_ce)
    g = propagate(pd_net, MarginalGaussian(x, sig), Method.SDP_FULL)
    pred_pd = np.argmax(g.mean, axis=-1)
    out["pd_gauss/sdp/softmax_entropy"] = (mt.uncertainty_scores(g, "softmax_entropy"), pred_pd)
    out["pd_gauss/sdp/pd_gauss"] = (mt.uncertainty_scores(g, "pairwise_gauss_entropy"), pred_pd)
    c = propagate(pd_net, MarginalCauchy(x, gam), Method.SDP_MARGINAL_CAUCHY, cauchy_correlated=True)
    out["pd_gauss/sdp/pd_cauchy"] = (mt.uncertainty_scores(c, "pairwise_cauchy_entropy"), pred_pd)
    return out


def run_selective_prediction(cfg) -> dict:
    """Risk-coverage curves on an in-distribution plus OOD test mix.

    OOD samples always count as errors.  The ``oracle`` rule ranks exactly
    the correct in-distribution predictions first.
    """
    out = _out_dir(cfg)
    d = _selective_data(cfg, out)
    x_test = np.concatenate([d["test"].x, d["ood"].x])
    y_test = np.concatenate([d["test"].y, np.full(len(d["ood"]), -1)])
    n_classes = int(d["train"].y.max()) + 1
    per_rule = {}
    curve_rows = []
    for s in range(int(cfg["n_seeds"])):
        opt = AdamConfig(lr=cfg["lr"], epochs=cfg["epochs"], batch_size=cfg["batch_size"], weight_decay=cfg["weight_decay"])
        sizes = [d["train"].x.shape[1], *cfg["hidden"], n_classes]
        rng = derive_rng(cfg["seed"], "selective", "ce", s)
        ce_net, _ = train(init_params(sizes, rng), d["train"].x, d["train"].y, LossSpec("softmax_ce"), opt, rng)
        rng = derive_rng(cfg["seed"], "selective", "pd", s)
        pd_net, _ = train(init_params(sizes, rng), d["train"].x, d["train"].y,
                          LossSpec("pairwise_gaussian", float(cfg["train_sigma"])), opt, rng)
        rules = selective_scores(ce_net, pd_net, x_test, cfg)
        correct_ce = rules["ce/none/softmax_entropy"][1] == y_test
        rules["oracle"] = (correct_ce.astype(float), rules["ce/none/softmax_entropy"][1])
        for name, (score, pred) in rules.items():
            correct = pred == y_test
            curve = mt.risk_coverage(score, correct)
            per_rule.setdefault(name, []).append((curve.auc, float(correct[: len(d["test"])].mean())))
            for cov, risk, srisk in zip(curve.coverage, curve.risk, curve.selective_risk):
                curve_rows.append([s, name, cov, risk, srisk])
    rows = []
    for name, v in per_rule.items():
        aucs = [a for a, _ in v]
        mean, std = _summary(aucs)
        rows.append([name, mean, std, float(np.mean([acc for _, acc in v])), len(v)])
    header = ["rule", "mean_rcauc", "std_rcauc", "in_distribution_accuracy", "n_seeds"]
    write_table(out / "selective.csv", header, rows)
    write_table(out / "selective_curves.csv", ["seed", "rule", "coverage", "risk", "selective_risk"], curve_rows)
    report = {
        "experiment": "selective",
        "version": VERSION,
        "config": cfg,
        "n_in_distribution": len(d["test"]),
        "n_ood": len(d["ood"]),
        "results": [dict(zip(header, r)) for r in rows],
        "per_seed_rcauc": {k: [a for a, _ in v] for k, v in per_rule.items()},
    }
    write_report(out / "selective.json", report)
    return report


# --- two moons ---------------------------------------------------------------------


def moons_grid(box, resolution):
    x0, x1, y0, y1 = (float(v) for v in box)
    gx, gy = np.meshgrid(np.linspace(x0, x1, resolution), np.linspace(y0, y1, resolution))
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def predictive_scale(net, pts, sigma):
    """Std of the logit difference under SDP with isotropic input noise ``sigma``."""
    out = propagate(net, MarginalGaussian(pts, np.full(pts.shape, sigma)), Method.SDP_FULL)
    c = out.cov
    return np.sqrt(np.maximum(c[:, 0, 0] + c[:, 1, 1] - 2.0 * c[:, 0, 1], 0.0))


def run_twomoons_map(cfg) -> dict:
    out = _out_dir(cfg)
    x, y = ds.two_moons(int(cfg["n_samples"]), float(cfg["noise"]), derive_seed(cfg["seed"], "moons", "data"))
    rng = derive_rng(cfg["seed"], "moons", "net")
    net = init_params([2, *cfg["hidden"], 2], rng)
    opt = AdamConfig(lr=cfg["lr"], epochs=cfg["epochs"], batch_size=cfg["batch_size"])
    net, hist = train(net, x, y, LossSpec("pairwise_gaussian", float(cfg["input_sigma"])), opt, rng)
    pts = moons_grid(cfg["box"], int(cfg["resolution"]))
    u = predictive_scale(net, pts, float(cfg["input_sigma"]))
    write_table(out / "two_moons_grid.csv", ["x", "y", "uncertainty"], np.column_stack([pts, u]))
    write_table(out / "two_moons_data.csv", ["x", "y", "label"], [[a, b, int(c)] for (a, b), c in zip(x, y)])
    centroids = np.stack([x[y == k].mean(axis=0) for k in (0, 1)])
    report = {
        "experiment": "two_moons",
        "version": VERSION,
        "config": cfg,
        "train_accuracy": accuracy(net, x, y),
        "final_loss": hist.train_loss[-1] if hist.train_loss else None,
        "centroid_uncertainty": predictive_scale(net, centroids, float(cfg["input_sigma"])),
        "corner_uncertainty": predictive_scale(net, moons_grid(cfg["box"], 2), float(cfg["input_sigma"])),
    }
    write_report(out / "two_moons.json", report)
    return report


# --- single propagation and plain training ----------------------------------------------


def run_propagate(cfg) -> dict:
    """Propagate one or more inputs through a saved network."""
    from .network import load

    if not cfg["network"] or cfg["loc"] is None:
        raise ValueError("propagate needs 'network' and 'loc'")
    out = _out_dir(cfg)
    net = load(cfg["network"])
    if not hasattr(net, "layers"):
        net = net.mean_network()
    loc = np.atleast_2d(np.asarray(cfg["loc"], dtype=float))
    scale = np.broadcast_to(np.asarray(cfg["scale"], dtype=float), loc.shape)
    family = cfg["family"]
    if family not in ("gaussian", "cauchy"):
        raise ValueError(f"unknown family {family!r}")
    dist = (MarginalGaussian if family == "gaussian" else MarginalCauchy)(loc, scale)
    method = parse_method(cfg["method"])
    res = propagate(net, dist, method, rng=derive_rng(cfg["seed"], "propagate"), cauchy_correlated=cfg["cauchy_correlated"])
    rows = []
    for i in range(len(loc)):
        for k in range(res.dim):
            rows.append([i, k, res.loc[i, k], res.scale[i, k]])
    write_table(out / "propagate.csv", ["input", "component", "loc", "scale"], rows)
    report = {
        "experiment": "propagate",
        "version": VERSION,
        "config": cfg,
        "loc": res.loc,
        "scale": res.scale,
        "cov": getattr(res, "cov", None),
    }
    write_report(out / "propagate.json", report)
    return report


def _train_data(cfg, rng):
    name = cfg["dataset"]
    classification = cfg["loss"] in ("softmax_ce", "pairwise_gaussian", "pairwise_cauchy")
    if name == "iris":
        x, y = ds.iris()
    elif name == "two_moons":
        x, y = ds.two_moons(int(cfg["n_samples"]), float(cfg["noise"]), derive_seed(cfg["seed"], "train", "moons"))
    elif name == "synthetic":
        x, y = ds.heteroscedastic(int(cfg["n_samples"]), rng)
    else:
        seed = derive_seed(cfg["seed"], "train", "split")
        return ds.load_csv(name, cfg["target"], seed, cfg["split"], regression=not classification)
    return ds.standardize_split(x, y, rng, cfg["split"], regression=not classification)


def run_train(cfg) -> dict:
    """Train one MLP or PNN and save it as network JSON plus a loss history."""
    from .network import save

    out = _out_dir(cfg)
    rng = derive_rng(cfg["seed"], "train")
    tr, va, te = _train_data(cfg, rng)
    spec = LossSpec(cfg["loss"], float(cfg["input_scale"]))
    classification = spec.kind in ("softmax_ce", "pairwise_gaussian", "pairwise_cauchy")
    d_in = tr.x.shape[1]
    d_out = int(tr.y.max()) + 1 if classification else 1
    if cfg["model"] == "pnn":
        model = init_pnn([d_in, *cfg["hidden"]], d_out, rng, init=cfg["init"])
    elif cfg["model"] == "mlp":
        model = init_params([d_in, *cfg["hidden"], d_out], rng, init=cfg["init"])
    else:
        raise ValueError(f"unknown model {cfg['model']!r}")
    ty = tr.y if classification else tr.y[:, None]
    val = (va.x, va.y if classification else va.y[:, None]) if len(va) else None
    opt = AdamConfig(lr=cfg["lr"], epochs=cfg["epochs"], batch_size=cfg["batch_size"], weight_decay=cfg["weight_decay"])
    model, hist = train(model, tr.x, ty, spec, opt, rng, val=val)
    save(model, out / "model.json")
    rows = [[e, l, hist.val_loss[e] if hist.val_loss else float("nan")] for e, l in enumerate(hist.train_loss)]
    write_table(out / "history.csv", ["epoch", "train_loss", "val_loss"], rows)
    report = {"experiment": "train", "version": VERSION, "config": cfg, "final_train_loss": hist.train_loss[-1] if rows else None}
    if classification and len(te):
        report["test_accuracy"] = accuracy(model, te.x, te.y)
    write_report(out / "train.json", report)
    return report


RUNNERS = {
    "propagate": run_propagate,
    "train": run_train,
    "tv": run_tv_experiment,
    "w1": run_w1_experiment,
    "interval": run_interval_experiment,
    "selective": run_selective_prediction,
    "two_moons": run_twomoons_map,
}
