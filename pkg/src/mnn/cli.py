"""Command-line entry point: ``mnn {gen,train,eval,verify-hmatrix,params}``.

Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
numerical failures.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from .config import load_run_config
from .datagen.dataset import DEFAULTS, Dataset, gen_dataset
from .errors import ConfigError, NumericalError
from .hierarchy import DyadicPartition
from .hmatrix import compress, kernel_matrix
from .model import MnnConfig, build_mnn, build_plain_cnn, param_breakdown, plain_cnn_param_count
from .persist import load_model, save_model
from .training import TrainConfig, relative_error, predict, train

log = logging.getLogger("mnn")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2
SUMMARY_COLUMNS = ["r", "K", "Nparams", "train", "val"]

# (r, K) pairs of the default parameter sweep at N=320, L=6, m=5, CNN flavor
DEFAULT_SWEEP = [(2, 7), (4, 7), (6, 7), (8, 7), (8, 1), (8, 3), (8, 5)]
# (layers, channels, window, layer_count) of the plain CNN baselines
DEFAULT_PLAIN = [(15, 10, 13, "hidden"), (13, 10, 25, "total")]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _emit(rows, header, out):
    if out:
        _write_csv(out, header, rows)
    w = csv.writer(sys.stdout)
    w.writerow(header)
    w.writerows(rows)


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


# gen -------------------------------------------------------------------------

def cmd_gen(args) -> int:
    params = {}
    for item in args.param or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        params[key] = _parse_value(value)
    named = {"ng": "n_g", "sigma": "sigma", "spacing": "multiplier", "kernel": "kernel", "rank": "r"}
    for flag, key in named.items():
        value = getattr(args, flag)
        if value is None:
            continue
        if key not in DEFAULTS[args.kind]:
            raise ConfigError(f"--{flag} does not apply to {args.kind} datasets")
        params[key] = value
    out = Path(args.out or f"data/{args.kind}_{args.split}")
    existed = out.exists()
    try:
        ds = gen_dataset(args.kind, args.count, args.seed, params, args.split, workers=args.threads)
        ds.save(out)
    except BaseException:
        if not existed and out.exists():
            shutil.rmtree(out, ignore_errors=True)
        raise
    msg = f"wrote {len(ds)} {args.kind} samples to {out} (retries: {ds.meta['retries']})"
    if args.kind == "ks" and len(ds):
        msg += f", mean gap {ds.meta['mean_gap']:.6g}"
    print(msg)
    return EXIT_OK


# train -----------------------------------------------------------------------

def _load_pair(path):
    ds = Dataset.load(path)
    if len(ds) == 0:
        raise ConfigError(f"dataset {path} is empty")
    return ds.inputs, ds.outputs


def _build(run, seed):
    if run.is_plain:
        m = run.model
        return build_plain_cnn(m["layers"], m["channels"], m["window"], m["N"], seed=seed,
                               layer_count=m.get("layer_count", "total"))
    return build_mnn(run.mnn_config(), seed)


def _rk(run):
    if run.is_plain:
        return run.model["channels"], run.model["layers"]
    return run.model["r"], run.model.get("K", 1)


def cmd_train(args) -> int:
    run = load_run_config(args.config)
    if args.seeds:
        run.seeds = args.seeds
    if args.epochs is not None:
        run.train.epochs = args.epochs
    train_set = _load_pair(run.train_data)
    val_set = _load_pair(run.val_data)
    r, K = _rk(run)
    results = []
    for seed in run.seeds:
        cfg = TrainConfig(**{**run.train.__dict__, "seed": seed})
        model = _build(run, seed)
        hist = train(model, train_set, val_set, cfg,
                     log=lambda e, h: log.info("seed %d epoch %d loss %.3e train %.3e val %.3e",
                                               seed, e, h.train_loss[-1], h.train_err[-1], h.val_err[-1]))
        sub = run.output if len(run.seeds) == 1 else run.output / f"seed_{seed}"
        save_model(model, sub / "model", seed=seed, extra={"precision": cfg.precision})
        hist.to_csv(sub / "history.csv")
        terr = hist.train_err[-1] if len(hist) else float("nan")
        verr = hist.val_err[-1] if len(hist) else float("nan")
        results.append((seed, model.param_count(), terr, verr))
    rows = [[r, K, n, repr(t), repr(v)] for _, n, t, v in results]
    if len(results) > 1:
        best = min(results, key=lambda x: x[3])
        rows.append([r, K, best[1], repr(best[2]), repr(best[3])])
        _write_csv(run.output / "runs.csv", ["seed"] + SUMMARY_COLUMNS,
                   [[s, r, K, n, repr(t), repr(v)] for s, n, t, v in results])
    _write_csv(run.output / "summary.csv", SUMMARY_COLUMNS, rows)
    _emit(rows, SUMMARY_COLUMNS, None)
    return EXIT_OK


# eval ------------------------------------------------------------------------

def cmd_eval(args) -> int:
    model, spec = load_model(args.model)
    X, Y = _load_pair(args.data)
    dtype = model.dtype
    pred = predict(model, X.astype(dtype))
    errs = relative_error(Y.astype(dtype), pred)
    rows = [[i, repr(float(e))] for i, e in enumerate(errs)]
    if args.out:
        _write_csv(args.out, ["index", "rel_err"], rows)
    print(f"samples,{len(errs)}")
    print(f"mean_rel_err,{float(np.mean(errs))!r}")
    return EXIT_OK


# verify-hmatrix --------------------------------------------------------------

VERIFY_COLUMNS = ["kernel", "dim", "N", "L", "m", "r", "compression_error", "error_bound", "apply_error",
                  "apply_limit"]


def verify_rows(kernel, N, L, m, ranks, dim=1, vectors=100, seed=0):
    """Compression and apply errors of the rank sweep.

    ``apply_error`` is the worst ``||H v - A v|| / ||v||`` over random ``v``
    and ``apply_limit`` is the SVD-tail bound plus 1e-12 it must stay under.
    """
    p = DyadicPartition(N, L, m, dim)
    A = kernel_matrix(kernel, N, dim)
    V = np.random.default_rng(seed).standard_normal((vectors, p.size))
    exact = V @ A.T
    rows = []
    for r in ranks:
        f = compress(A, p, r)
        comp = float(np.linalg.norm(f.to_dense() - A))
        app = float(np.max(np.linalg.norm(f.apply(V) - exact, axis=1) / np.linalg.norm(V, axis=1)))
        rows.append([kernel, dim, N, L, m, r, repr(comp), repr(f.error_bound), repr(app),
                     repr(f.error_bound + 1e-12)])
    return rows


def cmd_verify(args) -> int:
    rows = verify_rows(args.kernel, args.N, args.L, args.m, args.r, args.dim, args.vectors, args.seed)
    _emit(rows, VERIFY_COLUMNS, args.out)
    return EXIT_OK


# params ----------------------------------------------------------------------

PARAM_COLUMNS = ["model", "dim", "N", "L", "m", "r", "K", "flavor", "window", "Nparams", "weights", "biases",
                 "weight_formula", "weight_bound"]


def param_rows(N, L, m, pairs, flavor="cnn", dim=1, plain=()):
    rows = []
    for r, K in pairs:
        b = param_breakdown(MnnConfig(N, L, m, r, K, dim=dim, flavor=flavor))
        rows.append(["mnn", dim, N, L, m, r, K, flavor, "", b["total"], b["weights"], b["biases"],
                     b["formula"], f"{b['bound']:.6g}"])
    for layers, channels, window, count in plain:
        n = plain_cnn_param_count(layers, channels, window, layer_count=count)
        rows.append([f"plain_cnn_{count}", 1, N, "", "", channels, layers, "cnn", window, n, "", "", "", ""])
    return rows


def _plain_spec(text):
    parts = text.split(",")
    if len(parts) not in (3, 4):
        raise argparse.ArgumentTypeError("expected layers,channels,window[,total|hidden]")
    count = parts[3] if len(parts) == 4 else "total"
    if count not in ("total", "hidden"):
        raise argparse.ArgumentTypeError("layer count must be 'total' or 'hidden'")
    return int(parts[0]), int(parts[1]), int(parts[2]), count


def cmd_params(args) -> int:
    if args.r or args.K:
        pairs = [(r, K) for K in (args.K or [7]) for r in (args.r or [8])]
        plain = args.plain or []
    else:
        pairs = DEFAULT_SWEEP
        plain = args.plain or DEFAULT_PLAIN
    rows = param_rows(args.N, args.L, args.m, pairs, args.flavor, args.dim, plain)
    _emit(rows, PARAM_COLUMNS, args.out)
    return EXIT_OK


# entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mnn", description="Multiscale neural networks on hierarchical-matrix structure.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a dataset")
    g.add_argument("kind", choices=["nlse", "ks", "linear"])
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--split", choices=["train", "val", "test"], default="train")
    g.add_argument("--out", help="output directory (default data/<kind>_<split>)")
    g.add_argument("--ng", type=int, help="number of wells (ks)")
    g.add_argument("--sigma", type=float, help="well width (ks)")
    g.add_argument("--spacing", type=float, help="minimum center distance in units of sigma (ks)")
    g.add_argument("--kernel", help="kernel name (linear)")
    g.add_argument("--rank", type=int, help="H-matrix rank of the target operator (linear)")
    g.add_argument("--param", action="append", metavar="KEY=VALUE", help="any other generator parameter")
    g.add_argument("--threads", type=int, default=1, help="worker processes (output does not depend on it)")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a model from a JSON run config")
    t.add_argument("config")
    t.add_argument("--seeds", type=int, nargs="+", help="one run per seed; summary gains a best-of row")
    t.add_argument("--epochs", type=int, help="override the configured epoch count")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="per-sample relative errors of a saved model")
    e.add_argument("--model", required=True, help="directory written by train")
    e.add_argument("--data", required=True, help="dataset directory")
    e.add_argument("--out", help="CSV of per-sample errors")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify-hmatrix", help="compression and apply errors against dense matvecs")
    v.add_argument("--kernel", default="expcos", choices=["ones", "expcos", "gaussian"])
    v.add_argument("--N", type=int, default=64)
    v.add_argument("--L", type=int, default=4)
    v.add_argument("--m", type=int, default=4)
    v.add_argument("--dim", type=int, choices=[1, 2], default=1)
    v.add_argument("--r", type=int, nargs="+", default=[1, 2, 4])
    v.add_argument("--vectors", type=int, default=100)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    p = sub.add_parser("params", help="exact parameter counts")
    p.add_argument("--N", type=int, default=320)
    p.add_argument("--L", type=int, default=6)
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--dim", type=int, choices=[1, 2], default=1)
    p.add_argument("--flavor", choices=["lc", "cnn"], default="cnn")
    p.add_argument("--r", type=int, nargs="+")
    p.add_argument("--K", type=int, nargs="+")
    p.add_argument("--plain", type=_plain_spec, action="append", metavar="LAYERS,CHANNELS,WINDOW[,COUNT]")
    p.add_argument("--out")
    p.set_defaults(func=cmd_params)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"mnn: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"mnn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
