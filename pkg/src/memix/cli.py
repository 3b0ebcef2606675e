"""``memix`` command line.

Every report is one line of JSON on stdout. Exit codes: 0 success,
2 malformed input, 3 mathematical domain error, 4 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bgrisk as bgr
from . import calib
from . import matcore as mc
from . import mmeam as mm
from . import modelio
from . import oracle as oc
from . import risk as rk
from .errors import (
    ConvergenceError,
    DataValidationError,
    DimensionError,
    DomainError,
    IllConditionedError,
    MemixError,
    ModelFileError,
    ParseError,
)

EXIT_OK, EXIT_INPUT, EXIT_DOMAIN, EXIT_NUMERIC = 0, 2, 3, 4


class CLIInputError(Exception):
    """Bad flag values detected after argparse."""


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CLIInputError(f"expected comma-separated numbers, got {text!r}") from None


def _scalar(text: str) -> float:
    v = _floats(text)
    if len(v) != 1:
        raise CLIInputError(f"expected a single number, got {text!r}")
    return v[0]


def _coord(text, M: int) -> int:
    try:
        j = int(text)
    except ValueError:
        raise CLIInputError(f"coordinate must be an integer, got {text!r}") from None
    if not 1 <= j <= M:
        raise CLIInputError(f"coordinate {j} out of range 1..{M}")
    return j - 1


def _vec(text: str, M: int) -> np.ndarray:
    v = _floats(text)
    if len(v) == 1:
        v = v * M
    if len(v) != M:
        raise CLIInputError(f"expected 1 or {M} values, got {len(v)}")
    return np.array(v)


def _ctx(args):
    return mc.DEFAULT_CONTEXT if args.tol is None else mc.DEFAULT_CONTEXT.with_(root_tol=args.tol)


def _num(x):
    if isinstance(x, np.ndarray):
        return [_num(v) for v in x]
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    return float(x)


def _emit(report: dict):
    sys.stdout.write(modelio.dumps(report) + "\n")


# ------------------------------------------------------------------ commands

def cmd_eval(args):
    m = modelio.read_model(args.model)
    pts = [np.array(_floats(a)) for a in (args.at or [])]
    if not pts:
        raise CLIInputError("give at least one --at point")
    for x in pts:
        if x.size != m.M:
            raise CLIInputError(f"point {list(x)} has {x.size} coordinates, model has {m.M}")
    pdf = [float(mm.joint_density(m, x)) for x in pts]
    sf = [float(mm.joint_survival(m, x)) for x in pts]
    rep = {"at": [_num(x) for x in pts], "pdf": pdf, "sf": sf}
    if len(pts) == 1:
        rep = {"at": rep["at"][0], "pdf": pdf[0], "sf": sf[0]}
    if m.M == 1:
        rep["cdf"] = [1.0 - s for s in sf] if len(pts) > 1 else 1.0 - sf[0]
    _emit(rep)


def _target(m, args):
    """Law addressed by ``--coord`` (1-based) or the aggregate ``S`` by default."""
    if args.coord is not None:
        j = _coord(args.coord, m.M)
        return mm.marginal(m, j), f"X{j + 1}"
    return rk.aggregate(m), "S"


def cmd_risk(args):
    m = modelio.read_model(args.model)
    ctx = _ctx(args)
    q = args.quantity
    rep = {"quantity": q}
    if q in ("var", "tvar"):
        d, name = _target(m, args)
        theta = _scalar(args.theta)
        rep.update(target=name, theta=theta)
        rep["value"] = rk.quantile(d, theta, ctx) if q == "var" else rk.tail_expectation(d, theta, ctx)
        if q == "tvar":
            rep["var"] = rk.quantile(d, theta, ctx)
    elif q in ("mtce", "mtcov"):
        theta = _vec(args.theta, m.M)
        rep["theta"] = _num(theta)
        rep["levels"] = _num(rk._levels(m, theta))
        rep["value"] = _num(rk.mtce(m, theta, ctx) if q == "mtce" else rk.mtcov(m, theta, ctx))
    elif q == "covar":
        th = _floats(args.theta)
        if len(th) != 2:
            raise CLIInputError("covar needs --theta theta1,theta2")
        c = _floats(args.coords) if args.coords else [1, 2]
        j1, j2 = _coord(int(c[0]), m.M), _coord(int(c[1]), m.M)
        rep.update(mode=args.mode, theta=th, coords=[j1 + 1, j2 + 1])
        rep["value"] = rk.covar(m, args.mode, th[0], th[1], j1, j2, ctx)
    elif q == "stoploss":
        d, name = _target(m, args)
        rep.update(target=name, deductible=float(args.deductible), order=int(args.order))
        rep["value"] = rk.stop_loss(d, float(args.deductible), int(args.order))
    elif q == "aggregate":
        S = rk.aggregate(m)
        rep.update(mean=S.moment(1), variance=S.moment(2) - S.moment(1) ** 2,
                   components=len(S.components), order=sum(f.p for f in S.components))
        if args.at:
            xs = np.array(_floats(args.at))
            ev = S.evaluate(xs)
            rep.update(at=_num(xs), pdf=_num(ev.pdf), cdf=_num(ev.cdf), sf=_num(ev.sf))
    _emit(rep)


def _alloc_report(a: rk.Allocation):
    return {"rule": a.rule, "theta": a.theta, "beta": a.beta, "var": float(a.var),
            "allocations": _num(a.allocations), "total": a.total, "sum": float(np.sum(a.allocations))}


def cmd_allocate(args):
    m = modelio.read_model(args.model)
    a = rk.allocate(m, args.rule, _scalar(args.theta), args.beta, _ctx(args))
    _emit(_alloc_report(a))


def cmd_bg(args):
    m = modelio.read_model(args.model)
    try:
        bg = bgr.parse_background(args.bg)
    except DomainError as exc:
        raise CLIInputError(str(exc)) from None
    ctx = _ctx(args)
    rep = {"quantity": args.quantity, "bg": args.bg}
    if args.quantity in ("var", "tvar"):
        agg = bgr.bg_aggregate(m, bg, args.method)
        theta = _scalar(args.theta)
        rep["theta"] = theta
        rep["value"] = agg.quantile(theta, ctx) if args.quantity == "var" else agg.tvar(theta, ctx)
    elif args.quantity == "cdf":
        xs = _floats(args.at or "")
        if not xs:
            raise CLIInputError("cdf needs --at")
        if args.coord is not None:
            j = _coord(args.coord, m.M)
            vals = [bgr.bg_marginal_cdf(m, bg, j, x, args.method) for x in xs]
            rep["target"] = f"X{j + 1}"
        else:
            agg = bgr.bg_aggregate(m, bg, args.method)
            vals = [agg.cdf(x) for x in xs]
            rep["target"] = "S"
        rep.update(at=xs, value=vals)
    elif args.quantity == "allocate":
        a = bgr.bg_allocate(m, bg, args.rule, _scalar(args.theta), args.beta, args.method, ctx)
        rep.update(_alloc_report(a))
    _emit(rep)


def _parse_rules(text: str):
    out = []
    for item in text.split(","):
        kind, _, val = item.partition(":")
        out.append((kind.strip(),) if not val else (kind.strip(), float(val)))
    return tuple(out)


def cmd_reinsure(args):
    m = modelio.read_model(args.model)
    g = _parse_rules(args.rules) if args.rules else ()
    spec = rk.ReinsuranceSpec(args.treaty, int(args.k), g)
    _emit({"treaty": args.treaty, "k": int(args.k), "premium": rk.reinsurance_premium(m, spec)})


def cmd_calibrate(args):
    data = calib.ingest_csv(args.data)
    margs = [modelio.read_marginal(p.strip()) for p in args.marginals.split(",")]
    model = calib.calibrate(data, margs, int(args.order))
    if args.out:
        modelio.write_model(model, args.out)
        _emit({"out": args.out, "N": data.N, "M": data.M, "order": int(args.order), "nnz": model.nnz})
    else:
        modelio.write_model(model, sys.stdout)


def cmd_simulate(args):
    m = modelio.read_model(args.model)
    cfg = oc.SimConfig(int(args.samples), int(args.seed), int(args.threads))
    X = oc.simulate(m, cfg)
    head = f"# seed={cfg.seed} samples={cfg.sample_count}\n" + ",".join(str(l) for l in m.labels) + "\n"
    body = "\n".join(",".join(repr(float(v)) for v in row) for row in X)
    text = head + body + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        _emit({"out": args.out, "seed": cfg.seed, "samples": cfg.sample_count, "mean": _num(X.mean(axis=0))})
    else:
        sys.stdout.write(text)


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="memix", description="Multivariate matrix-exponential risk models.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=None, help="root-finding tolerance on the CDF")
    model = argparse.ArgumentParser(add_help=False, parents=[common])
    model.add_argument("-m", "--model", required=True, help="JSON model file")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("eval", parents=[model], help="joint density and survival at points")
    s.add_argument("--at", action="append", help="comma-separated point; repeatable")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("risk", parents=[model], help="risk measures")
    s.add_argument("quantity", choices=["var", "tvar", "mtce", "mtcov", "covar", "stoploss", "aggregate"])
    s.add_argument("--theta", default="0.95")
    s.add_argument("--coord", help="1-based coordinate (default: aggregate S)")
    s.add_argument("--mode", default="gt", choices=["eq", "gt", "sum_given_x1"])
    s.add_argument("--coords", help="conditioning,target coordinates for covar (1-based)")
    s.add_argument("-d", "--deductible", type=float, default=0.0)
    s.add_argument("-r", "--order", type=int, default=1)
    s.add_argument("--at", help="comma-separated evaluation points for aggregate")
    s.set_defaults(func=cmd_risk)

    s = sub.add_parser("allocate", parents=[model], help="capital allocation")
    s.add_argument("--rule", default="covariance", choices=list(rk.RULES))
    s.add_argument("--theta", default="0.95")
    s.add_argument("--beta", type=float, default=0.0)
    s.set_defaults(func=cmd_allocate)

    s = sub.add_parser("bg", parents=[model], help="background-risk scaled quantities")
    s.add_argument("quantity", choices=["var", "tvar", "cdf", "allocate"])
    s.add_argument("--bg", required=True, help="degenerate:b | gamma:shape,rate | discrete:r1/q1,r2/q2")
    s.add_argument("--theta", default="0.95")
    s.add_argument("--beta", type=float, default=0.0)
    s.add_argument("--rule", default="covariance", choices=list(rk.RULES))
    s.add_argument("--coord")
    s.add_argument("--at")
    s.add_argument("--method", default="auto", choices=["auto", "eigen", "contour"])
    s.set_defaults(func=cmd_bg)

    s = sub.add_parser("reinsure", parents=[model], help="reinsurance premiums on order statistics")
    s.add_argument("--treaty", required=True, choices=["lcr", "ecomor", "per_os"])
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--rules", help="per order statistic, smallest first: none,full,proportional:a,excess:z")
    s.set_defaults(func=cmd_reinsure)

    s = sub.add_parser("calibrate", parents=[common], help="fit an MMEam from data and marginals")
    s.add_argument("--data", required=True)
    s.add_argument("--marginals", required=True, help="comma-separated marginal files, one per column")
    s.add_argument("--order", type=int, default=4, help="Bernstein order A")
    s.add_argument("--out")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("simulate", parents=[model], help="Monte Carlo samples as CSV")
    s.add_argument("--samples", type=int, default=10000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)
    return p


def _fail(code, exc):
    sys.stderr.write(f"memix: error: {exc}\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # argparse exits with status 2 on bad flags
    try:
        args.func(args)
    except (ModelFileError, ParseError, DataValidationError, DimensionError, CLIInputError, OSError) as exc:
        return _fail(EXIT_INPUT, exc)
    except (ConvergenceError, IllConditionedError) as exc:
        return _fail(EXIT_NUMERIC, exc)
    except MemixError as exc:
        return _fail(EXIT_DOMAIN, exc)
    except ValueError as exc:
        # flag values that parse but make no sense, e.g. theta outside (0, 1)
        return _fail(EXIT_DOMAIN, exc)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
