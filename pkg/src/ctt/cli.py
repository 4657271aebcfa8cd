"""Command-line front end.

Subcommands: gen-data, train, rank-sweep, sketch-sweep, condition-trace,
encode (encoder demos), compress.  Options can come from flags or from a
JSON config file (--config); explicit flags win.  All CSV outputs are
UTF-8, comma-separated, with a header row.  Exit code 0 on success, 1 on
configuration errors, 2 on optimizer hard failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .bench import (
    ExperimentConfig,
    condition_trace,
    gen_recovery_dataset,
    rank_sweep,
    run_experiment,
    sketch_sweep,
)
from .compress import compress
from .encode import (
    build_gaussian_flow,
    encode_affine,
    encode_sparse_poly,
    encode_univariate_poly,
    SparsePolynomial,
)
from .model import CTTModel, Lift, model_load, model_save
from .tt import tt_interior_ranks
from .train import TrainConfig


class _Parser(argparse.ArgumentParser):
    """Parser that reports usage problems as ValueError instead of exiting."""

    def error(self, message):
        raise ValueError(message)


def _require(args, *names: str) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise ValueError(f"missing required options: {', '.join(missing)}")


def _write_xy_csv(path, X: np.ndarray, y: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(X.shape[1])] + ["y"])
        for row, val in zip(X, y):
            w.writerow([repr(float(v)) for v in row] + [repr(float(val))])


def cmd_gen_data(args) -> int:
    _require(args, "out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (Xt, Yt), (Xv, Yv) = gen_recovery_dataset(args.d, args.n_train, args.n_val, args.seed)
    _write_xy_csv(out / "train.csv", Xt, Yt)
    _write_xy_csv(out / "val.csv", Xv, Yv)
    print(f"wrote {out / 'train.csv'} ({len(Yt)} rows), {out / 'val.csv'} ({len(Yv)} rows)")
    return 0


def _train_config(args) -> TrainConfig:
    sketch = args.sketch
    if sketch != "full":
        sketch = int(sketch)
    return TrainConfig(
        algorithm=args.algorithm,
        alpha=args.alpha,
        lam=args.lam,
        R=args.R,
        gamma=args.gamma,
        sketch=sketch,
        max_iters=args.iters,
        seed=args.seed,
        msa_mode=args.msa_mode,
        msa_als=args.msa_als,
        line_search=args.line_search,
        freeze_sketch=args.freeze_sketch,
        batch_size=args.batch_size,
    )


def cmd_train(args) -> int:
    cfg = ExperimentConfig(
        problem=args.problem,
        d=args.d,
        n_train=args.n_train,
        n_val=args.n_val,
        train=_train_config(args),
        basis=args.basis,
        n_layers=args.layers,
        out_dir=args.out,
        seed=args.seed,
    )
    _, _, summary = run_experiment(cfg)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_rank_sweep(args) -> int:
    _require(args, "out")
    rows = rank_sweep(d=args.d, repeats=args.repeats)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "rank_sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "mean_error", "n_params"])
        for r in rows:
            w.writerow([r["rank"], repr(r["mean_error"]), r["n_params"]])
    print(f"wrote {out / 'rank_sweep.csv'}")
    return 0


def cmd_sketch_sweep(args) -> int:
    _require(args, "out")
    sizes = [s if s == "full" else int(s) for s in args.sizes.split(",")]
    summaries, _ = sketch_sweep(
        d=args.d, sizes=sizes, repeats=args.repeats, max_iters=args.iters,
        out_dir=args.out,
    )
    print(json.dumps(summaries, indent=2))
    return 0


def cmd_condition_trace(args) -> int:
    _require(args, "out")
    condition_trace(
        d=args.d, repeats=args.repeats, max_iters=args.iters, out_dir=args.out
    )
    print(f"wrote {Path(args.out) / 'condition_trace.csv'}")
    return 0


def _encode_demo(args):
    rng = np.random.default_rng(args.seed)
    if args.kind == "affine":
        A = rng.normal(size=(args.d, args.d))
        b = rng.normal(size=args.d)
        layer = encode_affine(A, b)
        model = CTTModel(Lift.identity(args.d), [layer], np.eye(args.d))
        ref = lambda X: X @ A.T + b
        X = rng.uniform(-1, 1, (500, args.d))
    elif args.kind == "horner":
        coeffs = rng.normal(size=args.degree + 1)
        model = encode_univariate_poly(coeffs)
        ref = lambda X: np.polyval(coeffs[::-1], X[:, 0])[:, None]
        X = rng.uniform(-1, 1, (500, 1))
    elif args.kind == "sparse":
        idx = rng.integers(0, 3, size=(3, args.d))
        P = SparsePolynomial(idx, rng.normal(size=3))
        model = encode_sparse_poly(P)
        ref = lambda X: P.evaluate(X)[:, None]
        X = rng.uniform(-1, 1, (500, args.d))
    elif args.kind == "gaussian":
        M = rng.normal(size=(args.d, args.d))
        Gamma = M @ M.T / args.d
        model = build_gaussian_flow(Gamma, N=64)
        ref = lambda X: np.exp(-0.5 * np.einsum("bi,ij,bj->b", X, Gamma, X))[:, None]
        X = rng.uniform(-1, 1, (500, args.d))
    else:
        raise ValueError(f"unknown encode demo {args.kind!r}")
    out = model.forward(X)
    target = ref(X)
    if target.ndim == 1:
        target = target[:, None]
    err = float(np.abs(out - target).max())
    ranks = [
        list(tt_interior_ranks(layer.tt)) if layer.is_tt else None
        for layer in model.layers
    ]
    return model, {"kind": args.kind, "max_abs_error": err, "layers": model.n_layers,
                   "interior_ranks": ranks}


def cmd_encode(args) -> int:
    model, report = _encode_demo(args)
    if args.out:
        model_save(model, args.out)
        report["model"] = args.out
    print(json.dumps(report, indent=2))
    return 0


def cmd_compress(args) -> int:
    _require(args, "model", "eps", "out")
    model = model_load(args.model)
    rng = np.random.default_rng(args.seed)
    X = rng.uniform(args.low, args.high, (args.samples, model.d_in))
    compressed, report = compress(model, args.eps, X)
    model_save(compressed, args.out)
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=2))
    print(json.dumps({k: report[k] for k in ("eps", "relative_error")}, indent=2))
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with option defaults")
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ctt", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write recovery train/val CSVs")
    _add_common(p)
    p.add_argument("--n-train", type=int, default=2048)
    p.add_argument("--n-val", type=int, default=512)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="run one training experiment")
    _add_common(p)
    p.add_argument("--problem", default="recovery")
    p.add_argument("--algorithm", choices=("msa", "ngd", "adam"), default="ngd")
    p.add_argument("--alpha", type=float, default=0.7)
    p.add_argument("--lam", type=float, default=1e-12)
    p.add_argument("--R", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=4.0)
    p.add_argument("--sketch", default="full")
    p.add_argument("--iters", type=int, default=300)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--basis", default="affine")
    p.add_argument("--n-train", type=int, default=2048)
    p.add_argument("--n-val", type=int, default=512)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--msa-mode", choices=("natural", "frobenius"), default="natural")
    p.add_argument("--msa-als", action="store_true")
    p.add_argument("--line-search", action="store_true")
    p.add_argument("--freeze-sketch", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rank-sweep", help="TT regression error vs uniform rank")
    _add_common(p)
    p.add_argument("--repeats", type=int, default=25)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_rank_sweep)

    p = sub.add_parser("sketch-sweep", help="NGD accuracy vs sketch size")
    _add_common(p)
    p.add_argument("--sizes", default="20,30,40,full")
    p.add_argument("--repeats", type=int, default=25)
    p.add_argument("--iters", type=int, default=400)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sketch_sweep)

    p = sub.add_parser("condition-trace", help="Gram condition/rank trace")
    _add_common(p)
    p.add_argument("--repeats", type=int, default=25)
    p.add_argument("--iters", type=int, default=120)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_condition_trace)

    p = sub.add_parser("encode", help="exact encoder demos")
    _add_common(p)
    p.add_argument("--kind", choices=("affine", "horner", "sparse", "gaussian"),
                   default="affine")
    p.add_argument("--degree", type=int, default=5)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("compress", help="round a model within an error budget")
    _add_common(p)
    p.add_argument("--model", default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--low", type=float, default=0.0)
    p.add_argument("--high", type=float, default=1.0)
    p.add_argument("--out", default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_compress)

    ap.commands = dict(sub.choices)
    return ap


def _apply_config(ap, args, argv):
    """Merge JSON config values as subcommand defaults, then re-parse.

    Keys use argparse dest names (dashes become underscores).  Values given
    explicitly on the command line still win.
    """
    overrides = json.loads(Path(args.config).read_text())
    if not isinstance(overrides, dict):
        raise ValueError("config file must contain a JSON object")
    subp = ap.commands[args.command]
    valid = {a.dest for a in subp._actions}
    unknown = sorted(set(overrides) - valid)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    subp.set_defaults(**overrides)
    return ap.parse_args(argv)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args, remaining = ap.parse_known_args(argv)
        if getattr(args, "config", None):
            args = _apply_config(ap, args, argv)
        elif remaining:
            ap.error(f"unrecognized arguments: {' '.join(remaining)}")
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except RuntimeError as e:
        print(f"optimizer failure: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
