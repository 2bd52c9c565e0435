"""Command line entry point ``haartest``.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 IO error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import statistics as S
from .errors import HaarTestError, NumericalError
from .harness import ExperimentConfig, emit_report, estimate_power, run_sweep
from .kernels import KernelParams
from .linalg import read_sample, write_sample
from .nulldist import ad_ksample, tz_null_quantiles
from .rng import RngStream
from .samplers import KINDS, SamplerSpec, draw_sample

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_sample(args) -> int:
    spec = SamplerSpec(
        args.sampler, args.dim, steps=args.steps, m1=args.m1, m2=args.m2,
        seed=args.seed, fold_det=args.fold_det,
    )
    G = draw_sample(spec, args.N, RngStream(args.seed))
    if args.out is None or args.out == "-":
        buf = io.StringIO()
        write_sample(buf, G)
        sys.stdout.write(buf.getvalue())
    else:
        write_sample(args.out, G)
    return EXIT_OK


def _statistic(args, G) -> S.StatisticResult:
    name = args.statistic
    if name == "rayleigh":
        return S.rayleigh(G, pvalue=args.pvalue)
    if name == "gine":
        return S.gine(G)
    if name == "expfam":
        return S.expfam_statistic(G, args.allow_det_minus, args.strict_degenerate)
    if name == "trace":
        if args.k is None:
            raise UsageError("--k is required for the trace statistic")
        return S.trace_power(G, args.k)
    if args.z is None:
        raise UsageError(f"--z is required for {name}")
    if name == "tz":
        params = KernelParams(z=args.z, strict=args.strict_degenerate)
        method = "null_mixture_mc" if args.pvalue else "none"
        return S.t_z(G, params, args.allow_det_minus, pvalue=method, seed=args.seed)
    if args.q is None:
        raise UsageError("--q is required for uzq")
    return S.u_zq(G, KernelParams(z=args.z, q=args.q, strict=args.strict_degenerate))


def _load_sample(path: str) -> np.ndarray:
    try:
        return read_sample(path)
    except HaarTestError:
        raise
    except ValueError as exc:
        raise OSError(f"malformed sample file: {exc}") from exc


def cmd_stat(args) -> int:
    res = _statistic(args, _load_sample(args.file))
    d = res.to_dict()
    if args.format == "csv":
        _emit(_rows_to_csv(["statistic", "value", "N", "n", "pvalue", "pvalue_method"],
                           [[d["statistic"], repr(d["value"]), d["N"], d["n"],
                             "" if d["pvalue"] is None else repr(d["pvalue"]), d["pvalue_method"]]]), args.out)
    else:
        _emit(json.dumps(d, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.config is None:
        raise UsageError("sweep needs --config")
    config = ExperimentConfig.load(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.threads is not None:
        changes["threads"] = args.threads
    if args.out is not None:
        changes["out_dir"] = args.out
    config = replace(config, **changes) if changes else config
    report = run_sweep(config)
    formats = (args.format,) if args.format else ("csv", "json")
    for p in emit_report(report, config.out_dir, formats):
        print(p)
    return EXIT_OK


def _parse_probs(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --probs list: {text!r}") from exc


def cmd_null_quantiles(args) -> int:
    probs = _parse_probs(args.probs)
    est = tz_null_quantiles(args.n, args.z, probs, args.draws, seed=args.seed or 0)
    if args.format == "json":
        text = json.dumps([{"prob": e.prob, "quantile": e.quantile, "mc_stderr": e.stderr} for e in est]) + "\n"
    else:
        text = _rows_to_csv(["prob", "quantile", "mc_stderr"],
                            [[repr(e.prob), repr(e.quantile), repr(e.stderr)] for e in est])
    _emit(text, args.out)
    return EXIT_OK


def _read_values(path: str) -> np.ndarray:
    v = np.loadtxt(path, dtype=float, ndmin=1)
    if v.ndim != 1:
        raise UsageError(f"{path}: expected one value per line")
    return v


def cmd_power(args) -> int:
    alt, null = _read_values(args.alternative), _read_values(args.null)
    power = estimate_power(alt, null, args.alpha)
    ad = ad_ksample([alt, null])
    d = {"alpha": args.alpha, "power": power, "ad_statistic": ad.statistic, "ad_pvalue": ad.pvalue,
         "n_alternative": int(alt.size), "n_null": int(null.size)}
    if args.format == "csv":
        _emit(_rows_to_csv(list(d), [[d[k] for k in d]]), args.out)
    else:
        _emit(json.dumps(d, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_expfam_calib(args) -> int:
    sel = S.selberg_derivatives(args.n)
    d = {"n": args.n, "A": sel.value, "gradient": sel.gradient.tolist(), "hessian": sel.hessian.tolist()}
    if args.N is not None:
        d["covariance"] = (sel.hessian / args.N).tolist()
    if args.format == "csv":
        rows = [["A", "", "", repr(sel.value)]]
        rows += [["gradient", i, "", repr(v)] for i, v in enumerate(sel.gradient)]
        rows += [["hessian", i, j, repr(sel.hessian[i, j])] for i in range(3) for j in range(3)]
        _emit(_rows_to_csv(["quantity", "i", "j", "value"], rows), args.out)
    else:
        _emit(json.dumps(d, indent=1) + "\n", args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, fmt_default: str | None) -> None:
    p.add_argument("--config", help="experiment config (JSON)")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--threads", type=int, help="worker thread budget")
    p.add_argument("--out", help="output file or directory (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=fmt_default)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="haartest", description="Tests of Haar uniformity for random rotations.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="draw a matrix sample")
    _common(p, None)
    p.add_argument("--sampler", choices=KINDS, default="haar")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--steps", type=int, default=0)
    p.add_argument("--m1", type=int, default=0)
    p.add_argument("--m2", type=int, default=0)
    p.add_argument("--fold-det", action="store_true", help="map odd-dimensional g to det(g) g")
    p.set_defaults(func=cmd_sample, seed=0)

    p = sub.add_parser("stat", help="evaluate one statistic on a sample file")
    _common(p, "json")
    p.add_argument("file")
    p.add_argument("--statistic", required=True, choices=("rayleigh", "gine", "expfam", "tz", "uzq", "trace"))
    p.add_argument("--z", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--strict-degenerate", action="store_true")
    p.add_argument("--allow-det-minus", action="store_true")
    p.add_argument("--pvalue", action="store_true", help="attach an asymptotic p-value where one exists")
    p.set_defaults(func=cmd_stat)

    p = sub.add_parser("sweep", help="run an experiment config")
    _common(p, None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("null-quantiles", help="quantiles of the limiting T_z null law")
    _common(p, "csv")
    p.add_argument("--n", type=int, required=True, help="rank")
    p.add_argument("--z", type=float, required=True)
    p.add_argument("--probs", default="0.5,0.9,0.95,0.99")
    p.add_argument("--draws", type=int, default=100_000)
    p.set_defaults(func=cmd_null_quantiles)

    p = sub.add_parser("power", help="compare two files of statistic values")
    _common(p, "json")
    p.add_argument("alternative")
    p.add_argument("null")
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("expfam-calib", help="Selberg normalizer with gradient and Hessian")
    _common(p, "json")
    p.add_argument("--n", type=int, required=True, help="rank")
    p.add_argument("--N", type=int, help="also print the Hessian divided by N")
    p.set_defaults(func=cmd_expfam_calib)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"haartest: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"haartest: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"haartest: io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (HaarTestError, ValueError) as exc:
        print(f"haartest: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
