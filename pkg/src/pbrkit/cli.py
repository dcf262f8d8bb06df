"""Command-line front end.

Human-readable tables go to stdout; machine-readable output is written only
with ``--out``. Exit status: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__, dataio, harness, kernels, stats, svm
from .distances import Measure, evaluate, pairwise
from .histcore import HistError

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
MEASURES = [m.value for m in Measure]


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        # let ranges such as "-2:16:2" or "-2,0" be option values, not flags
        self._negative_number_matcher = re.compile(r"^-\d[\d.,:-]*$")

    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _dump_json(doc, path):
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _fmt(v: float) -> str:
    return "inf" if math.isinf(v) else f"{v:.6f}"


# ---------------------------------------------------------------------------
# vector / column readers


def _read_vectors(spec: str) -> np.ndarray:
    """Inline ``1,2,3`` or a file: a dataset CSV or one vector per line."""
    path = Path(spec)
    if not path.exists():
        if any(ch.isdigit() for ch in spec) and "/" not in spec:
            try:
                return np.atleast_2d([float(t) for t in spec.replace(",", " ").split()])
            except ValueError:
                pass
        raise DataError(f"no such file: {spec}")
    text = path.read_text(encoding="utf-8")
    if text.lstrip().startswith("label"):
        return dataio.load_csv(path).X
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(t) for t in line.replace(",", " ").split()])
        except ValueError:
            raise DataError(f"{spec}: line {lineno}: not numeric") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise DataError(f"{spec}: expected equal-length numeric rows")
    return np.asarray(rows)


def _read_columns(path: str, cols):
    with open(path, newline="", encoding="utf-8") as fh:
        records = [r for r in csv.reader(fh) if r and any(f.strip() for f in r)]
    if not records:
        raise DataError(f"{path}: empty file")
    try:
        [float(f) for f in records[0] if f.strip()]
        header = None
    except ValueError:
        header, records = records[0], records[1:]

    def index(c):
        if header is not None and c in header:
            return header.index(c)
        try:
            return int(c)
        except ValueError:
            raise UsageError(f"unknown column {c!r}") from None

    ia, ib = (index(c) for c in cols) if cols else (0, 1)
    out = ([], [])
    for lineno, rec in enumerate(records, start=2 if header else 1):
        for k, i in enumerate((ia, ib)):
            if i < len(rec) and rec[i].strip():
                try:
                    out[k].append(float(rec[i]))
                except ValueError:
                    raise DataError(f"{path}: line {lineno}: not numeric") from None
    return np.asarray(out[0]), np.asarray(out[1])


def _parse_range(text: str) -> tuple:
    """``a:b:step`` (inclusive) or a comma list of integers."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) == 2:
                parts.append(1)
            lo, hi, step = parts
            if step <= 0:
                raise ValueError
            return tuple(range(lo, hi + 1, step))
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise UsageError(f"bad integer range {text!r}; use a:b:step or a,b,c") from None


def _kernel_spec(args) -> kernels.KernelSpec:
    if args.kernel == "linear":
        if args.gamma is not None or args.degree is not None:
            raise UsageError("--gamma/--degree are not used by the linear kernel")
        return kernels.KernelSpec.linear()
    if args.kernel == "poly":
        if args.gamma is not None:
            raise UsageError("--gamma is not used by the polynomial kernel")
        return kernels.KernelSpec.polynomial(args.degree or 1)
    if args.degree is not None:
        raise UsageError("--degree only applies to --kernel poly")
    return kernels.KernelSpec.d_rbf(args.measure, 1.0 if args.gamma is None else args.gamma)


# ---------------------------------------------------------------------------
# subcommands


def cmd_dist(args):
    A = _read_vectors(args.a)
    B = _read_vectors(args.b)
    if A.shape[1] != B.shape[1]:
        raise DataError(f"dimension mismatch: {A.shape[1]} != {B.shape[1]}")
    if A.shape[0] == 1 and B.shape[0] == 1:
        values = np.array([[evaluate(args.measure, A[0], B[0], normalized=not args.raw)]])
    else:
        values = pairwise(args.measure, A, B, normalized=not args.raw)
    if values.size == 1:
        print(f"{args.measure}: {_fmt(values[0, 0])}")
    else:
        for row in values:
            print(" ".join(_fmt(v) for v in row))
    if args.out:
        _dump_json({"measure": args.measure, "normalized": not args.raw,
                    "values": [[None if math.isinf(v) else v for v in row] for row in values.tolist()]},
                   args.out)


def cmd_gram(args):
    spec = _kernel_spec(args)
    rows = dataio.load(args.data)
    cols = dataio.load(args.cols) if args.cols else None
    g = kernels.gram(spec, rows, cols, threads=args.threads)
    print(f"gram {g.shape[0]}x{g.shape[1]} kernel={spec.tag}")
    pd = None
    if args.check_pd:
        if cols is not None:
            raise UsageError("--check-pd needs a square (self) Gram matrix")
        pd = kernels.check_pd(g)
        print(f"positive definite: {pd.is_pd}  min eigenvalue: {pd.min_eigenvalue:.6g}")
    if args.out:
        if args.out.endswith(".json"):
            doc = {"kernel": spec.to_dict(), "rows": g.shape[0], "cols": g.shape[1],
                   "values": g.values.tolist()}
            if pd is not None:
                doc["pd"] = {"is_pd": pd.is_pd, "min_eigenvalue": pd.min_eigenvalue}
            _dump_json(doc, args.out)
        else:
            Path(args.out).write_bytes(g.to_bytes())


def cmd_svm_train(args):
    spec = _kernel_spec(args)
    data = dataio.load(args.data).normalized_copy()
    K = kernels.gram(spec, data).values
    model = svm.train_ovr(K, data.labels, args.C, tol=args.tol, threads=args.threads)
    pred = svm.predict_ovr(model, K)
    acc = harness.macro_accuracy(pred, data.labels)
    print(f"classes={len(model.classes)} C={args.C:g} kernel={spec.tag}")
    print(f"training macro accuracy: {acc:.2f}%  support vectors: {svm.count_svs(model)}")
    if args.out:
        _dump_json(svm.ovr_to_dict(model, spec.to_dict(), data.class_names), args.out)


def cmd_svm_predict(args):
    try:
        doc = json.loads(Path(args.model).read_text(encoding="utf-8"))
        model = svm.ovr_from_dict(doc)
        spec = kernels.KernelSpec.from_dict(doc["kernel"])
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model {args.model}: {exc}") from None
    train = dataio.load(args.train).normalized_copy()
    test = dataio.load(args.data).normalized_copy()
    if len(train) != doc["n_train"]:
        raise DataError(f"model was trained on {doc['n_train']} rows, {args.train} has {len(train)}")
    rows = kernels.gram(spec, test, train).values
    pred = svm.predict_ovr(model, rows)
    names = {m["class"]: m["name"] for m in doc["models"]}
    pred_names = [names[int(p)] for p in pred]
    truth = [test.class_names[int(v)] for v in test.labels]
    acc = harness.macro_accuracy(np.asarray(pred_names), np.asarray(truth))
    print(f"predicted {len(pred)} rows; macro accuracy against file labels: {acc:.2f}%")
    if args.out:
        _dump_json({"predictions": pred_names, "macro_accuracy": acc}, args.out)


def _print_test(name, res):
    print(f"{name}: statistic={res.statistic:.6g} p={res.p_value:.6g} n_effective={res.n_effective}")


def cmd_ks(args):
    x, y = _read_columns(args.file, args.cols)
    res = stats.ks_two_sample(x, y)
    _print_test("ks", res)
    if args.out:
        _dump_json({"test": "ks", **res._asdict()}, args.out)


def cmd_wilcoxon(args):
    x, y = _read_columns(args.file, args.cols)
    if x.size != y.size:
        raise DataError("paired columns must have equal length")
    res = stats.wilcoxon_signed_rank(x, y)
    _print_test("wilcoxon", res)
    if args.out:
        _dump_json({"test": "wilcoxon", **res._asdict()}, args.out)


def cmd_audit(args):
    data = dataio.load(args.data)
    alphas = args.alpha or list(stats.DEFAULT_ALPHAS)
    rep = stats.audit_feature_distributions(data.X, num_pairs=args.pairs, alphas=alphas,
                                            test=args.test, seed=args.seed, threads=args.threads)
    print(f"{rep.test} audit: {rep.num_pairs} pairs ({rep.pairs_distinct} distinct), "
          f"median p={rep.median_p:.3g}, errors={rep.num_errors}")
    print(f"{'alpha':>8}  {'% significant':>14}")
    for a in rep.alpha_levels:
        print(f"{a:>8g}  {rep.percent_significant[a]:>14.2f}")
    if args.out:
        if args.out.endswith(".csv"):
            Path(args.out).write_text(rep.to_csv(), encoding="utf-8")
        else:
            _dump_json(rep.to_dict(), args.out)


def cmd_bench(args):
    data = dataio.load(args.data)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in MEASURES + ["linear", "poly"]:
            raise UsageError(f"unknown method {m!r}")
    if args.baseline not in methods:
        raise UsageError(f"baseline {args.baseline!r} is not among --methods")
    grid = harness.GridSpec(_parse_range(args.log2_c), _parse_range(args.log2_gamma),
                            _parse_range(args.degrees))
    report = harness.run_benchmark(data, methods, args.train_per_class, args.repeats, grid,
                                   seed=args.seed, folds=args.folds, threads=args.threads,
                                   tol=args.tol)
    sig = harness.compare_methods(report, args.baseline) if len(methods) > 1 else None
    print(f"{'method':<10} {'mean':>8} {'std':>7} {'SVs':>8}  sig")
    for line in harness.summary_csv(report, sig).splitlines()[1:]:
        name, mean, std, sv, flags = line.split(",")
        print(f"{name:<10} {float(mean):>8.2f} {float(std):>7.2f} {float(sv):>8.1f}  {flags}")
    for out in args.out or []:
        if out.endswith(".csv"):
            Path(out).write_text(harness.summary_csv(report, sig), encoding="utf-8")
        else:
            Path(out).write_text(harness.report_json(report, sig), encoding="utf-8")


def cmd_toy(args):
    d, e, f = dataio.toy_fixture()
    rows = [(m.value, evaluate(m, d, e), evaluate(m, d, f)) for m in Measure]
    print(f"{'measure':<10} {'D(d,e)':>10} {'D(d,f)':>10}  closer to (d)")
    for name, de, df in rows:
        print(f"{name:<10} {de:>10.6f} {df:>10.6f}  {'(e)' if de < df else '(f)'}")
    if args.out:
        _dump_json({"histograms": {k: v.values.tolist() for k, v in zip("def", (d, e, f))},
                    "distances": {name: {"d_e": de, "d_f": df} for name, de, df in rows}},
                   args.out)


def cmd_synth(args):
    data = dataio.synth_dirichlet(args.classes, args.dims, args.per_class, args.concentration,
                                  args.separation, seed=args.seed)
    print(f"{len(data)} vectors, {args.classes} classes, {args.dims} dims")
    if args.out:
        if args.out.endswith((".bin", ".pbrf")):
            dataio.save_binary(data, args.out)
        else:
            dataio.save_csv(data, args.out)


# ---------------------------------------------------------------------------


def build_parser() -> Parser:
    p = Parser(prog="pbrkit", description="Poisson-Binomial Radius distance toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def kernel_flags(sp):
        sp.add_argument("--kernel", choices=["rbf", "linear", "poly"], default="rbf")
        sp.add_argument("--measure", choices=MEASURES, default="pbr")
        sp.add_argument("--gamma", type=float, help="RBF scale (default 1)")
        sp.add_argument("--degree", type=int, choices=[1, 2, 3, 4, 5], help="polynomial degree")

    sp = sub.add_parser("dist", help="distance between two vectors or files")
    sp.add_argument("a", help="inline vector '1,2,3' or a file")
    sp.add_argument("b")
    sp.add_argument("--measure", choices=MEASURES, default="pbr")
    sp.add_argument("--raw", action="store_true", help="skip L1 normalization")
    sp.add_argument("--out", help="JSON output file")
    sp.set_defaults(func=cmd_dist)

    sp = sub.add_parser("gram", help="build and serialize a Gram matrix")
    sp.add_argument("data")
    sp.add_argument("--cols", help="second dataset for a rectangular Gram")
    kernel_flags(sp)
    sp.add_argument("--check-pd", action="store_true")
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--out", help=".json or binary PBRG file")
    sp.set_defaults(func=cmd_gram)

    sp = sub.add_parser("svm-train", help="train a one-vs-rest SVM")
    sp.add_argument("data")
    kernel_flags(sp)
    sp.add_argument("--C", type=float, default=1.0)
    sp.add_argument("--tol", type=float, default=1e-3)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--out", help="model JSON")
    sp.set_defaults(func=cmd_svm_train)

    sp = sub.add_parser("svm-predict", help="predict with a trained model")
    sp.add_argument("model")
    sp.add_argument("data", help="rows to classify")
    sp.add_argument("--train", required=True, help="the training file the model was fit on")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_svm_predict)

    for name, fn in (("ks", cmd_ks), ("wilcoxon", cmd_wilcoxon)):
        sp = sub.add_parser(name, help=f"{name} test on two columns of a CSV file")
        sp.add_argument("file")
        sp.add_argument("--cols", nargs=2, metavar=("A", "B"), help="column names or indices")
        sp.add_argument("--out")
        sp.set_defaults(func=fn)

    sp = sub.add_parser("audit", help="feature-element distribution audit")
    sp.add_argument("data")
    sp.add_argument("--test", choices=["ks", "wilcoxon"], default="ks")
    sp.add_argument("--pairs", type=int, default=stats.DEFAULT_NUM_PAIRS)
    sp.add_argument("--alpha", type=float, action="append")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--out", help=".json or .csv")
    sp.set_defaults(func=cmd_audit)

    sp = sub.add_parser("bench", help="repeated subsampling benchmark")
    sp.add_argument("data")
    sp.add_argument("--methods", default="pbr,bd,jd,chi2,hellinger,l1brd,linear,poly")
    sp.add_argument("--baseline", default="pbr")
    sp.add_argument("--train-per-class", type=int, required=True)
    sp.add_argument("--repeats", type=int, default=100)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--folds", type=int, default=harness.DEFAULT_FOLDS)
    sp.add_argument("--log2-c", default="-2:16:2")
    sp.add_argument("--log2-gamma", default="-4:8:2")
    sp.add_argument("--degrees", default="1:5")
    sp.add_argument("--tol", type=float, default=1e-3)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--out", action="append", help=".json report or .csv summary (repeatable)")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("toy", help="distance table for the toy histograms")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_toy)

    sp = sub.add_parser("synth", help="generate a synthetic Dirichlet dataset")
    sp.add_argument("--classes", type=int, default=3)
    sp.add_argument("--dims", type=int, default=64)
    sp.add_argument("--per-class", type=int, default=60)
    sp.add_argument("--concentration", type=float, default=200.0)
    sp.add_argument("--separation", type=float, default=1.0)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", help=".csv or .bin")
    sp.set_defaults(func=cmd_synth)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be at least 1")
        args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (DataError, HistError, dataio.ParseError, ValueError, OSError) as exc:
        print(f"pbrkit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main():
    sys.exit(run())
