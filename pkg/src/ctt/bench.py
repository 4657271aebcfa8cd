"""Experiment harness: datasets, training runs, sweeps, CSV artifacts.

History CSV schema (one row per iteration):
    iteration, wall_time, train_loss, val_rel_error,
    kappa_1..kappa_L, gram_rank_1..gram_rank_L, residual_1..residual_L,
    flagged
Aggregated trace CSV schema (condition_trace):
    iteration, layer, kappa_median, kappa_q1, kappa_q3,
    rank_median, rank_q1, rank_q3
Sketch sweep per-size CSV schema:
    iteration, val_median, val_q1, val_q3

Reruns with the same config and seed reproduce every CSV byte for byte
except the wall_time column.  Wall time covers the optimizer loop only,
never dataset generation or serialization.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import get_basis
from .model import CTTModel, Lift, model_save, relative_l2_error
from .train import TrainConfig, adam_run, init_layers, msa_run, ngd_run

# per sketch size: (step size alpha, Tikhonov lambda)
SKETCH_TABLE = {20: (0.85, 1e-11), 30: (0.8, 1e-12), 40: (0.7, 1e-12), "full": (0.7, 1e-12)}

PROBLEMS = ("recovery",)


@dataclass
class ExperimentConfig:
    problem: str = "recovery"
    d: int = 4
    n_train: int = 2048
    n_val: int = 512
    train: TrainConfig = field(default_factory=TrainConfig)
    basis: str = "affine"
    width: int | None = None  # None: the input dimension
    n_layers: int = 2
    out_dir: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.n_train <= 0 or self.n_val <= 0:
            raise ValueError("sample counts must be positive")


def recovery_target(X: np.ndarray) -> np.ndarray:
    """u*(x) = prod_{i=1}^{m} (x_i y - x_{m+i})^2 with m = floor(d/2) and
    y = 1 for even d, y = x_d otherwise."""
    d = X.shape[1]
    if d < 2:
        raise ValueError("need d >= 2")
    m = d // 2
    y = 1.0 if d % 2 == 0 else X[:, d - 1]
    out = np.ones(X.shape[0])
    for i in range(m):
        out = out * (X[:, i] * y - X[:, m + i]) ** 2
    return out


def gen_recovery_dataset(d: int, n_train: int, n_val: int, seed: int):
    """Uniform samples on [0,1]^d with exact target values.

    Train and validation draws come from disjoint seed streams, so the
    validation set never overlaps the training set.
    """
    Xt = np.random.default_rng([seed, 0]).uniform(0.0, 1.0, (n_train, d))
    Xv = np.random.default_rng([seed, 1]).uniform(0.0, 1.0, (n_val, d))
    return (Xt, recovery_target(Xt)), (Xv, recovery_target(Xv))


def build_recovery_model(cfg: ExperimentConfig) -> CTTModel:
    basis = get_basis(cfg.basis)
    p = cfg.width if cfg.width is not None else cfg.d
    layers = init_layers(p, cfg.n_layers, basis, c=2.0, seed=cfg.seed)
    lift = Lift.identity(cfg.d) if p == cfg.d else Lift.zero_pad(cfg.d, p)
    return CTTModel(lift, layers, np.eye(p)[:1])


_RUNNERS = {"msa": msa_run, "ngd": ngd_run, "adam": adam_run}


def run_experiment(cfg: ExperimentConfig):
    """Train on the configured problem; emit history CSV, model, summary.

    Returns (model, history, summary).  When cfg.out_dir is set the
    artifacts land there as history.csv, model.ctm, summary.json.
    """
    train, val = gen_recovery_dataset(cfg.d, cfg.n_train, cfg.n_val, cfg.seed)
    model = build_recovery_model(cfg)
    runner = _RUNNERS[cfg.train.algorithm]
    model, history = runner(model, train, cfg.train, val=val)
    summary = {
        "problem": cfg.problem,
        "d": cfg.d,
        "algorithm": cfg.train.algorithm,
        "seed": cfg.seed,
        "iterations": len(history),
        "final_val_rel_error": history[-1]["val_rel_error"] if history else None,
        "final_train_loss": history[-1]["train_loss"] if history else None,
        "wall_time": history[-1]["wall_time"] if history else 0.0,
    }
    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_history_csv(out / "history.csv", history, model.n_layers)
        model_save(model, out / "model.ctm")
        (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return model, history, summary


# ---------------------------------------------------------------------------
# CSV plumbing


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def history_header(n_layers: int) -> list[str]:
    cols = ["iteration", "wall_time", "train_loss", "val_rel_error"]
    cols += [f"kappa_{k + 1}" for k in range(n_layers)]
    cols += [f"gram_rank_{k + 1}" for k in range(n_layers)]
    cols += [f"residual_{k + 1}" for k in range(n_layers)]
    cols.append("flagged")
    return cols


def write_history_csv(path, history: list, n_layers: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(history_header(n_layers))
        for row in history:
            cells = [
                _fmt(row["iteration"]),
                _fmt(row["wall_time"]),
                _fmt(row["train_loss"]),
                _fmt(row["val_rel_error"]),
            ]
            for key in ("kappas", "gram_ranks", "residuals"):
                vals = list(row.get(key) or [])
                vals += [None] * (n_layers - len(vals))
                cells += [_fmt(v) for v in vals]
            cells.append(_fmt(row.get("flagged", False)))
            w.writerow(cells)


def read_history_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [dict(r) for r in csv.DictReader(fh)]


# ---------------------------------------------------------------------------
# sweeps


def rank_sweep(
    d: int = 4,
    ranks=range(1, 10),
    repeats: int = 25,
    n_train: int = 2048,
    n_val: int = 512,
    sweeps: int = 30,
):
    """Direct TT regression of the recovery target at uniform ranks.

    Quadratic basis per input coordinate; returns one row per rank with the
    mean relative error over the repeats and the parameter count (audited
    against sum_i r_{i-1} n_i r_i of the fitted cores).
    """
    from .als import tt_predict, tt_regression
    from .basis import quadratic

    basis = quadratic()
    rows = []
    for r in ranks:
        errs = []
        n_params = None
        for seed in range(repeats):
            (Xt, Yt), (Xv, Yv) = gen_recovery_dataset(d, n_train, n_val, seed)
            Ft = basis.values(Xt.ravel()).reshape(Xt.shape + (basis.size,))
            Fv = basis.values(Xv.ravel()).reshape(Xv.shape + (basis.size,))
            tt, _ = tt_regression(Ft, Yt, r, np.random.default_rng([seed, 3]), sweeps=sweeps)
            errs.append(relative_l2_error(tt_predict(tt, Fv), Yv))
            counted = sum(
                c.shape[0] * c.shape[1] * c.shape[2] for c in tt.cores
            )
            assert counted == tt.n_params()
            n_params = counted
        rows.append({"rank": int(r), "mean_error": float(np.mean(errs)), "n_params": n_params})
    return rows


def sketch_sweep(
    d: int = 4,
    sizes=(20, 30, 40, "full"),
    repeats: int = 25,
    max_iters: int = 400,
    n_train: int = 2048,
    n_val: int = 512,
    out_dir=None,
):
    """NGD with tensor-structured sketching at several sketch sizes.

    Each size runs `repeats` seeds with the size's (alpha, lambda) setting;
    returns summary rows {size, median_final_error, reached} where reached
    flags a median final error below 1e-2.  With out_dir set, writes one
    per-size CSV of per-iteration median/quartile validation errors.
    """
    summaries = []
    curves = {}
    for s in sizes:
        alpha, lam = SKETCH_TABLE[s]
        errs = np.empty((repeats, max_iters))
        for seed in range(repeats):
            cfg = ExperimentConfig(
                d=d, n_train=n_train, n_val=n_val, seed=seed,
                train=TrainConfig(
                    algorithm="ngd", alpha=alpha, lam=lam, sketch=s,
                    max_iters=max_iters, seed=seed,
                ),
            )
            _, history, _ = run_experiment(cfg)
            errs[seed] = [h["val_rel_error"] for h in history]
        med = np.median(errs, axis=0)
        q1 = np.quantile(errs, 0.25, axis=0)
        q3 = np.quantile(errs, 0.75, axis=0)
        curves[s] = (med, q1, q3)
        summaries.append(
            {
                "size": s,
                "median_final_error": float(med[-1]),
                "reached": bool(med[-1] < 1e-2),
            }
        )
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            with open(out / f"sketch_{s}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["iteration", "val_median", "val_q1", "val_q3"])
                for it in range(max_iters):
                    w.writerow([it, repr(float(med[it])), repr(float(q1[it])), repr(float(q3[it]))])
    if out_dir is not None:
        with open(Path(out_dir) / "sketch_summary.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["size", "median_final_error", "reached"])
            for row in summaries:
                w.writerow([row["size"], repr(row["median_final_error"]), row["reached"]])
    return summaries, curves


def condition_trace(
    d: int = 4,
    repeats: int = 25,
    max_iters: int = 120,
    n_train: int = 2048,
    n_val: int = 512,
    train_cfg: TrainConfig | None = None,
    out_dir=None,
):
    """Per-iteration, per-layer Gram condition numbers and numerical ranks
    on the dense NGD path, aggregated over seeds as median and quartiles.

    Returns a list of rows (see the trace CSV schema at the top).
    """
    base = train_cfg or TrainConfig(algorithm="ngd", alpha=0.7, lam=1e-12)
    L = None
    kappas = None
    granks = None
    for seed in range(repeats):
        cfg = ExperimentConfig(
            d=d, n_train=n_train, n_val=n_val, seed=seed,
            train=TrainConfig(
                algorithm="ngd", alpha=base.alpha, lam=base.lam, sketch="full",
                max_iters=max_iters, seed=seed, batch_size=base.batch_size,
            ),
        )
        _, history, _ = run_experiment(cfg)
        if L is None:
            L = len(history[0]["kappas"])
            kappas = np.empty((repeats, max_iters, L))
            granks = np.empty((repeats, max_iters, L))
        for it, h in enumerate(history):
            kappas[seed, it] = h["kappas"]
            granks[seed, it] = h["gram_ranks"]
    rows = []
    for it in range(max_iters):
        for k in range(L):
            rows.append(
                {
                    "iteration": it,
                    "layer": k + 1,
                    "kappa_median": float(np.median(kappas[:, it, k])),
                    "kappa_q1": float(np.quantile(kappas[:, it, k], 0.25)),
                    "kappa_q3": float(np.quantile(kappas[:, it, k], 0.75)),
                    "rank_median": float(np.median(granks[:, it, k])),
                    "rank_q1": float(np.quantile(granks[:, it, k], 0.25)),
                    "rank_q3": float(np.quantile(granks[:, it, k], 0.75)),
                }
            )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "condition_trace.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            cols = list(rows[0].keys())
            w.writerow(cols)
            for row in rows:
                w.writerow([_fmt(row[c]) for c in cols])
    return rows
