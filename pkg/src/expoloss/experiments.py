"""Experiment configs and runners behind the CLI and the scripts/ directory.

Every runner takes a dataclass config and returns a JSON-ready result
document that echoes the config. Timing fields are all named
``wall_clock*`` so :func:`strip_wall_clock` can drop them before comparing
documents.
"""
from __future__ import annotations

import dataclasses
import json
import math
import os
import time
import typing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (BoundQuery, TwoGaussians, constant, deviation_mc_check,
                     lipschitz_small_uniform, loss_lipschitz_confidence,
                     risk_lipschitz_confidence)
from .data import (Dataset, gen_blobs, gen_gaussians, gen_outlier_gaussians, inject_symmetric_noise,
                   load_csv, load_idx, train_test_split)
from .losses import Base, LossSpec, hinge_kink, loss_at_zero, loss_batch, loss_lipschitz
from .optim import TrainConfig, TrainingDiverged, train
from .reference import reference_block
from .transform import TransformParams


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- configs

@dataclass
class DataConfig:
    name: str = "gaussians"  # gaussians | outlier-gaussians | blobs | mnist | csv
    path: str | None = None
    n_train: int = 1000
    n_test: int = 2000
    d: int = 2
    separation: float = 4.0
    n_classes: int = 3
    outlier_frac: float = 0.1
    outlier_scale: float = 5.0
    normalize: bool = False
    seed: int = 0


@dataclass
class TrainSettings:
    optimizer: str = "sgd"
    lr: float = 0.1
    batch_size: int = 32
    epochs: int = 20
    warmup_fraction: float = 0.1
    hidden: list[int] = field(default_factory=list)
    bias: bool = True
    projection_radius: float | None = None


@dataclass
class TrainCmdConfig:
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainSettings = field(default_factory=TrainSettings)
    loss: str = "logistic"
    e: float = 1.0
    c: float = 0.005
    noise_rate: float = 0.0
    seeds: int = 1
    seed: int = 0


@dataclass
class NoiseBenchConfig:
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainSettings = field(default_factory=TrainSettings)
    loss: str = "logistic"
    e: list[float] = field(default_factory=lambda: [1.0, 0.75, 0.6])
    c: float = 0.005
    noise_rate: list[float] = field(default_factory=lambda: [0.0, 0.2, 0.4, 0.6])
    seeds: int = 5
    seed: int = 0
    reference: str | None = None


@dataclass
class TransformPlotConfig:
    e: list[float] = field(default_factory=lambda: [1.0, 0.75, 0.6])
    c: float = 0.005
    lo: float = -3.0
    hi: float = 3.0
    steps: int = 601


@dataclass
class GradcheckConfig:
    loss: str = "logistic"
    e: list[float] = field(default_factory=lambda: [1.0])
    c: float = 0.005
    samples: int = 200
    n_classes: int = 4
    score_range: float = 5.0
    h: float = 1e-5
    tol: float = 1e-6
    seed: int = 0


@dataclass
class DeviationCheckConfig:
    loss: str = "logistic"
    e: float = 1.0
    c: float = 0.005
    d: int = 2
    separation: float = 1.0
    std: float = 0.3
    w1: list[float] = field(default_factory=lambda: [2.0, 1.0])
    direction: list[float] = field(default_factory=lambda: [1.0, -1.0])
    N: int = 200
    epsilon: float = 0.1
    rho: float = 0.05
    trials: int = 2000
    n_reference: int = 10**7
    seed: int = 0


def build_config(cls, doc: dict | None):
    """Instantiate a (nested) config dataclass from a plain dict."""
    doc = dict(doc or {})
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for name, value in doc.items():
        hint = hints[name]
        if dataclasses.is_dataclass(hint):
            if not isinstance(value, dict):
                raise ConfigError(f"{cls.__name__}.{name} must be an object")
            value = build_config(hint, value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from None


def merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = v
    return out


def loss_spec(name: str, e: float, c: float) -> LossSpec:
    try:
        return LossSpec(Base(name), TransformParams(e=e, c=c))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------- data

_MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte", "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte", "test_labels": "t10k-labels-idx1-ubyte",
}


def find_mnist(directory) -> dict | None:
    """Locate the four MNIST IDX files (optionally gzipped) in ``directory``."""
    if not directory:
        return None
    root = Path(directory)
    found = {}
    for key, stem in _MNIST_FILES.items():
        for cand in (stem, stem + ".gz", stem.replace("-idx", ".idx"), stem.replace("-idx", ".idx") + ".gz"):
            if (root / cand).is_file():
                found[key] = root / cand
                break
        else:
            return None
    return found


def _sample_rows(ds: Dataset, n: int, seed) -> Dataset:
    if n >= ds.n:
        return ds
    return ds.subset(np.sort(np.random.default_rng(seed).choice(ds.n, size=n, replace=False)))


def load_data(cfg: DataConfig) -> tuple[Dataset, Dataset]:
    s = cfg.seed
    half_tr, half_te = max(1, cfg.n_train // 2), max(1, cfg.n_test // 2)
    if cfg.name == "gaussians":
        tr = gen_gaussians(half_tr, cfg.d, cfg.separation, 2 * s)
        te = gen_gaussians(half_te, cfg.d, cfg.separation, 2 * s + 1)
    elif cfg.name == "outlier-gaussians":
        tr = gen_outlier_gaussians(half_tr, cfg.d, cfg.separation, cfg.outlier_frac, cfg.outlier_scale, 2 * s)
        te = gen_gaussians(half_te, cfg.d, cfg.separation, 2 * s + 1)
    elif cfg.name == "blobs":
        k = cfg.n_classes
        tr = gen_blobs(max(1, cfg.n_train // k), cfg.d, k, cfg.separation, 2 * s)
        te = gen_blobs(max(1, cfg.n_test // k), cfg.d, k, cfg.separation, 2 * s + 1)
    elif cfg.name == "mnist":
        files = find_mnist(cfg.path)
        if files is None:
            raise ConfigError(f"MNIST IDX files not found in {cfg.path!r}")
        tr = load_idx(files["train_images"], files["train_labels"], n_classes=10)
        te = load_idx(files["test_images"], files["test_labels"], n_classes=10)
        tr = _sample_rows(tr, cfg.n_train, [s, 0])
        te = _sample_rows(te, cfg.n_test, [s, 1])
    elif cfg.name == "csv":
        if not cfg.path:
            raise ConfigError("csv dataset needs a path")
        tr, te = train_test_split(load_csv(cfg.path), cfg.n_test, s)
    else:
        raise ConfigError(f"unknown dataset {cfg.name!r}")
    if cfg.normalize:
        # one shared scale so train and test live in the same feature space
        scale = max(1.0, float(np.linalg.norm(tr.features, axis=1).max()),
                    float(np.linalg.norm(te.features, axis=1).max()))
        tr = dataclasses.replace(tr, features=tr.features / scale, scale=1.0 / scale, norm_state="unit-ball")
        te = dataclasses.replace(te, features=te.features / scale, scale=1.0 / scale, norm_state="unit-ball")
    return tr, te


def provenance(ds: Dataset) -> dict:
    p = {k: v for k, v in ds.provenance.items() if k != "outlier_indices"}
    if "outlier_indices" in ds.provenance:
        p["n_outliers"] = len(ds.provenance["outlier_indices"])
    p.update(n=ds.n, d=ds.d, n_classes=ds.n_classes, norm_state=ds.norm_state, scale=ds.scale)
    return p


def train_config(settings: TrainSettings, spec: LossSpec, seed: int) -> TrainConfig:
    try:
        return TrainConfig(loss=spec, optimizer=settings.optimizer, lr=settings.lr,
                           batch_size=settings.batch_size, total_epochs=settings.epochs,
                           warmup_fraction=settings.warmup_fraction, seed=seed,
                           projection_radius=settings.projection_radius,
                           hidden=tuple(settings.hidden), bias=settings.bias)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------- documents

def document(command: str, config, **body) -> dict:
    doc = {"tool": "expoloss", "version": __version__, "command": command,
           "config": asdict(config) if dataclasses.is_dataclass(config) else config}
    doc.update(body)
    return doc


def strip_wall_clock(obj):
    if isinstance(obj, dict):
        return {k: strip_wall_clock(v) for k, v in obj.items() if not k.startswith("wall_clock")}
    if isinstance(obj, list):
        return [strip_wall_clock(v) for v in obj]
    return obj


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, allow_nan=True) + "\n"


def mean_std(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    return float(np.mean(v)), float(np.std(v))


# ---------------------------------------------------------------- training

def _run_one(args):
    settings, spec, train_ds, test_ds, noise_rate, seed = args
    t0 = time.perf_counter()
    noisy = inject_symmetric_noise(train_ds, noise_rate, seed=seed) if noise_rate > 0 else train_ds
    try:
        res = train(train_config(settings, spec, seed), noisy, test_ds)
    except TrainingDiverged as exc:
        raise TrainingDiverged(f"cell e={spec.transform.e}, noise_rate={noise_rate}, seed={seed}: {exc}") from None
    realized = float(np.mean(noisy.labels != train_ds.labels))
    return {
        "seed": seed,
        "final_test_acc": res.final_test_acc,
        "final_train_acc": res.final_train_acc,
        "realized_noise": realized,
        "trace": [m.as_dict() for m in res.epochs],
        "wall_clock_s": time.perf_counter() - t0,
    }, res.model


def _map_cells(jobs):
    threads = int(os.environ.get("RL_THREADS", "1") or 1)
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def run_train(cfg: TrainCmdConfig, on_epoch=None):
    """Train ``cfg.seeds`` models; returns (document, last trained model)."""
    t0 = time.perf_counter()
    train_ds, test_ds = load_data(cfg.data)
    spec = loss_spec(cfg.loss, cfg.e, cfg.c)
    runs = []
    model = None
    for k in range(cfg.seeds):
        seed = cfg.seed + k
        noisy = inject_symmetric_noise(train_ds, cfg.noise_rate, seed=seed) if cfg.noise_rate > 0 else train_ds
        res = train(train_config(cfg.train, spec, seed), noisy, test_ds, on_epoch=on_epoch)
        model = res.model
        runs.append({"seed": seed, "final_test_acc": res.final_test_acc,
                     "final_train_acc": res.final_train_acc,
                     "trace": [m.as_dict() for m in res.epochs]})
    m, s = mean_std([r["final_test_acc"] for r in runs])
    doc = document("train", cfg,
                   provenance={"train": provenance(train_ds), "test": provenance(test_ds)},
                   runs=runs, aggregate={"mean_test_acc": m, "std_test_acc": s},
                   wall_clock_s=time.perf_counter() - t0)
    return doc, model


def aggregate_cells(cells: list[dict]) -> dict:
    grid = {}
    for cell in cells:
        grid.setdefault(f"{cell['noise_rate']:.2f}", {})[f"{cell['e']:.2f}"] = cell["mean_test_acc"]
    return grid


def run_noise_bench(cfg: NoiseBenchConfig) -> dict:
    """Cross product of (e, noise rate, seed); noise touches training labels only."""
    t0 = time.perf_counter()
    if cfg.seeds < 1:
        raise ConfigError("seeds must be >= 1")
    train_ds, test_ds = load_data(cfg.data)
    jobs, keys = [], []
    for rate in cfg.noise_rate:
        if not (0.0 <= rate < 1.0):
            raise ConfigError(f"noise rate {rate} outside [0, 1)")
        for e in cfg.e:
            spec = loss_spec(cfg.loss, e, cfg.c)
            for k in range(cfg.seeds):
                jobs.append((cfg.train, spec, train_ds, test_ds, rate, cfg.seed + k))
                keys.append((rate, e))
    outputs = _map_cells(jobs)
    cells = []
    for rate in cfg.noise_rate:
        for e in cfg.e:
            runs = [out for (key, (out, _)) in zip(keys, outputs) if key == (rate, e)]
            m, s = mean_std([r["final_test_acc"] for r in runs])
            cells.append({"noise_rate": rate, "e": e, "runs": runs,
                          "mean_test_acc": m, "std_test_acc": s})
    body = {"provenance": {"train": provenance(train_ds), "test": provenance(test_ds)},
            "cells": cells, "grid": aggregate_cells(cells)}
    if cfg.reference:
        body["reference"] = reference_block(cfg.reference)
    body["wall_clock_s"] = time.perf_counter() - t0
    return document("noise-bench", cfg, **body)


def reaggregate(doc: dict) -> dict:
    """Recompute cell means/stds and the grid from per-seed entries."""
    cells = []
    for cell in doc["cells"]:
        m, s = mean_std([r["final_test_acc"] for r in cell["runs"]])
        cells.append(dict(cell, mean_test_acc=m, std_test_acc=s))
    return {"cells": [{k: c[k] for k in ("noise_rate", "e", "mean_test_acc", "std_test_acc")} for c in cells],
            "grid": aggregate_cells(cells)}


# ---------------------------------------------------------------- outliers

@dataclass
class OutlierTrendConfig:
    data: DataConfig = field(default_factory=lambda: DataConfig(
        name="outlier-gaussians", n_train=400, n_test=4000, d=2, separation=4.0,
        outlier_frac=0.1, outlier_scale=5.0))
    train: TrainSettings = field(default_factory=lambda: TrainSettings(
        optimizer="sgd", lr=0.1, batch_size=20, epochs=50, bias=True))
    e: list[float] = field(default_factory=lambda: [1.0, 0.6])
    c: float = 0.005
    seeds: int = 20
    seed: int = 0


def direction_angle(w: np.ndarray, d: int) -> float:
    """Angle (degrees) between the feature part of ``w`` and e1."""
    v = np.asarray(w[:d], dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        return 90.0
    return float(np.degrees(np.arccos(np.clip(v[0] / n, -1.0, 1.0))))


def run_outlier_trend(cfg: OutlierTrendConfig) -> dict:
    """Linear logistic models on planted-outlier data, one dataset per seed.

    Every e sees the same training set, initial weights and batch order for a
    given seed, so the comparison across e is paired.
    """
    t0 = time.perf_counter()
    per_e = {e: {"test_acc": [], "angle_deg": []} for e in cfg.e}
    for k in range(cfg.seeds):
        dcfg = dataclasses.replace(cfg.data, seed=cfg.seed + k)
        train_ds, test_ds = load_data(dcfg)
        for e in cfg.e:
            res = train(train_config(cfg.train, loss_spec("logistic", e, cfg.c), cfg.seed + k),
                        train_ds, test_ds)
            per_e[e]["test_acc"].append(res.final_test_acc)
            per_e[e]["angle_deg"].append(direction_angle(res.model.w, train_ds.d))
    summary = []
    for e, vals in per_e.items():
        ma, sa = mean_std(vals["test_acc"])
        mg, sg = mean_std(vals["angle_deg"])
        summary.append({"e": e, "mean_test_acc": ma, "std_test_acc": sa,
                        "mean_angle_deg": mg, "std_angle_deg": sg, **vals})
    return document("outlier-trend", cfg, results=summary, wall_clock_s=time.perf_counter() - t0)


# ---------------------------------------------------------------- checks

def transform_plot_rows(cfg: TransformPlotConfig):
    """Header and rows of (score, loss columns) for y = +1."""
    if cfg.steps < 2:
        raise ConfigError("steps must be >= 2")
    grid = np.linspace(cfg.lo, cfg.hi, cfg.steps)
    header = ["yhat"]
    cols = [grid]
    for base in ("logistic", "hinge"):
        for e in cfg.e:
            values, _ = loss_batch(loss_spec(base, e, cfg.c), grid, np.ones(grid.size, dtype=int))
            header.append(f"{base}_e{e:g}")
            cols.append(values)
    return header, np.column_stack(cols)


def _kinks(spec: LossSpec) -> list[float]:
    p = spec.transform
    pts = [] if p.is_identity else [-p.c, p.c]
    if spec.base is Base.HINGE and p.e > 0:
        pts += [hinge_kink(1, p), hinge_kink(-1, p)]
    return pts


def _away_from(x: np.ndarray, pts, gap: float) -> bool:
    return all(np.all(np.abs(x - k) > gap) for k in pts)


def gradcheck_points(spec: LossSpec, samples: int, seed: int, score_range: float = 5.0,
                     n_classes: int = 4, gap: float = 1e-3):
    """Random (scores, label) draws kept ``gap`` away from every kink."""
    rng = np.random.default_rng(seed)
    kinks = _kinks(spec)
    out = []
    while len(out) < samples:
        if spec.binary:
            s = rng.uniform(-score_range, score_range, size=1)
            y = int(rng.choice([-1, 1]))
        else:
            s = rng.uniform(-score_range, score_range, size=n_classes)
            y = int(rng.integers(n_classes))
        if _away_from(s, kinks, gap):
            out.append((s, y))
    return out


def gradient_rel_error(spec: LossSpec, s: np.ndarray, y: int, h: float = 1e-5) -> float:
    """``||analytic - central difference|| / max(norms)`` for one sample."""
    lab = np.array([y])
    if spec.binary:
        f = lambda v: loss_batch(spec, v, lab)[0][0]
        analytic = loss_batch(spec, s, lab)[1]
    else:
        f = lambda v: loss_batch(spec, v[None, :], lab)[0][0]
        analytic = loss_batch(spec, s[None, :], lab)[1][0]
    fd = np.empty_like(s)
    for i in range(s.size):
        step = np.zeros_like(s)
        step[i] = h
        fd[i] = (f(s + step) - f(s - step)) / (2.0 * h)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(fd))
    return 0.0 if scale == 0.0 else float(np.linalg.norm(analytic - fd) / scale)


def run_gradcheck(cfg: GradcheckConfig) -> dict:
    checks = []
    for e in cfg.e:
        spec = loss_spec(cfg.loss, e, cfg.c)
        errs = [gradient_rel_error(spec, s, y, cfg.h)
                for s, y in gradcheck_points(spec, cfg.samples, cfg.seed, cfg.score_range, cfg.n_classes)]
        worst = max(errs)
        checks.append({"loss": cfg.loss, "e": e, "c": cfg.c, "samples": cfg.samples,
                       "max_rel_err": worst, "passed": worst <= cfg.tol})
    failures = [c for c in checks if not c["passed"]]
    return document("gradcheck", cfg, checks=checks, failures=failures, passed=not failures)


def _lipschitz_fn(spec_doc, M):
    """Build ``L_R_of`` from a number, an [[eps, L], ...] table, or an estimator spec."""
    if isinstance(spec_doc, (int, float)):
        return constant(float(spec_doc)), "constant"
    if isinstance(spec_doc, list):
        table = sorted((float(a), float(b)) for a, b in spec_doc)
        xs = np.array([a for a, _ in table])
        ys = np.maximum.accumulate(np.array([b for _, b in table]))

        def fn(eps):
            i = int(np.searchsorted(xs, eps, side="left"))
            return float(ys[min(i, len(ys) - 1)])
        fn.description = f"step table {table}"
        return fn, "table"
    if isinstance(spec_doc, dict) and spec_doc.get("estimator") == "uniform":
        spec = loss_spec(spec_doc.get("loss", "logistic"), spec_doc.get("e", 1.0), spec_doc.get("c", 0.005))
        value = lipschitz_small_uniform(spec, M)
        fn = constant(value)
        fn.description = f"uniform-margin estimate {value!r} for {spec.base.value} e={spec.transform.e} c={spec.transform.c}"
        return fn, "uniform-margin"
    raise ConfigError(f"cannot interpret L_R specification {spec_doc!r}")


def _check_expectations(expect: dict, reports: dict) -> list[dict]:
    tol = float(expect.get("tol", 1e-9))
    fails = []
    for key, want in expect.items():
        if key == "tol":
            continue
        which, _, attr = key.partition(".")
        if which not in reports or not attr:
            fails.append({"key": key, "error": "unknown expectation key"})
            continue
        got = reports[which].get(attr)
        if got is None or not math.isclose(got, want, rel_tol=tol, abs_tol=tol):
            fails.append({"key": key, "expected": want, "got": got, "tol": tol})
    return fails


def run_bounds(query_doc) -> dict:
    """Evaluate both confidence calculators for one query or a list of them.

    A query is a JSON object with N, d, M, epsilon, C_l (optional, derived
    from ``loss``), L_l (optional, derived from loss/e/c), ``L_R`` and an
    optional ``expect`` block such as ``{"risk_lipschitz.confidence": 1.0}``.
    """
    queries = query_doc if isinstance(query_doc, list) else [query_doc]
    results, failures = [], []
    for i, q in enumerate(queries):
        q = dict(q)
        expect = q.pop("expect", {})
        try:
            spec = loss_spec(q.get("loss", "logistic"), q.get("e", 1.0), q.get("c", 0.005))
            L_l = float(q["L_l"]) if "L_l" in q else loss_lipschitz(spec)
            C_l = float(q["C_l"]) if "C_l" in q else loss_at_zero(spec.base, int(q.get("n_classes", 2)))
            fn, source = _lipschitz_fn(q.get("L_R", 1.0), float(q["M"]))
            bq = BoundQuery(int(q["N"]), int(q["d"]), float(q["M"]), float(q["epsilon"]), L_l, C_l, fn, source)
        except KeyError as exc:
            raise ConfigError(f"query {i}: missing field {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"query {i}: {exc}") from None
        reports = {"risk_lipschitz": risk_lipschitz_confidence(bq).to_dict(),
                   "loss_lipschitz": loss_lipschitz_confidence(bq).to_dict()}
        fails = _check_expectations(expect, reports)
        failures += [dict(f, query=i) for f in fails]
        results.append({"input": q, "expect": expect, **reports,
                        "risk_lipschitz_better": reports["risk_lipschitz"]["confidence"]
                        > reports["loss_lipschitz"]["confidence"]})
    return document("bounds", query_doc, results=results, failures=failures, passed=not failures)


def run_deviation_check(cfg: DeviationCheckConfig) -> dict:
    spec = loss_spec(cfg.loss, cfg.e, cfg.c)
    if not spec.binary:
        raise ConfigError("lemma2-mc supports the binary losses only")
    try:
        dist = TwoGaussians(cfg.d, cfg.separation, cfg.std)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    w1 = np.asarray(cfg.w1, dtype=float)
    u = np.asarray(cfg.direction, dtype=float)
    if w1.shape != (cfg.d,) or u.shape != (cfg.d,) or not np.linalg.norm(u) > 0:
        raise ConfigError("w1 and direction must be non-degenerate vectors of length d")
    w2 = w1 + cfg.epsilon * u / np.linalg.norm(u)
    t0 = time.perf_counter()
    rep = deviation_mc_check(spec, dist, w1, w2, cfg.N, cfg.rho, cfg.trials, cfg.seed,
                          epsilon=cfg.epsilon, n_reference=cfg.n_reference)
    failures = [] if rep.passed else [{"check": "frequency <= bound + slack", **rep.to_dict()}]
    return document("lemma2-mc", cfg, report=rep.to_dict(), w2=w2.tolist(),
                    failures=failures, passed=rep.passed, wall_clock_s=time.perf_counter() - t0)
