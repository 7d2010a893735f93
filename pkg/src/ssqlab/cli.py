"""Command-line interface.

Subcommands mirror the estimator surface; every run prints a JSON result
document (or writes CSV for sweeps and path dumps).  Exit codes: 0 success,
1 validation/configuration error, 2 statistical-suite failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

import numpy as np

from . import estimators
from .engine import StopCondition, simulate, write_path_csv
from .errors import SsqError
from .harness import ExperimentConfig, format_report, run_sweep, selftest
from .model import (
    GENERAL,
    HOMOGENEOUS,
    ModelSpec,
    ScaledModel,
    StateVector,
    WbmParams,
    validate,
)
from .rngstreams import stream

DEFAULT_MODEL = ModelSpec(lam=(10.0, 10.0), mu=(20.0, 20.0))


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (model/experiment knobs)")
    p.add_argument("--seed", type=int, default=12345)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="output path prefix")
    p.add_argument("--csv", help="append a flat result row to this CSV file")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--r", type=float, default=10.0)
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--kappa0", type=float, default=0.25)
    p.add_argument("--mode", choices=[HOMOGENEOUS, GENERAL], default=HOMOGENEOUS)


def _load_model(args) -> ModelSpec:
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
        if "model" in doc:
            return ModelSpec.from_json(json.dumps(doc["model"]))
        return ModelSpec.from_json(json.dumps(doc))
    return DEFAULT_MODEL


def _emit(doc: dict, out: Optional[str], csv_path: Optional[str] = None) -> None:
    text = json.dumps(doc, indent=2, default=float)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if csv_path:
        estimators.append_result_csv(doc, csv_path)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ssqlab",
                                 description="SSQ heavy-traffic simulation lab")
    sub = ap.add_subparsers(dest="command", required=True)

    for name in ("validate", "simulate", "estimate-q", "sweep", "rbm-gof",
                 "tube-exit", "dyadic", "reweight", "wbm-sim", "selftest"):
        p = sub.add_parser(name)
        _add_common(p)
        if name == "simulate":
            p.add_argument("--horizon", type=float, default=1.0)
            p.add_argument("--init", type=int, nargs="*", default=None)
        if name == "sweep":
            p.add_argument("--family", choices=["a", "b", "c", "d"], required=True)
        if name == "rbm-gof":
            p.add_argument("--t-probe", type=float, default=5.0)
        if name == "tube-exit":
            p.add_argument("--horizon", type=float, default=None)
            p.add_argument("--gamma1", type=float, default=1.0)
            p.add_argument("--gamma2", type=float, default=2.0)
        if name == "dyadic":
            p.add_argument("--r-list", type=float, nargs="+", default=[5.0, 10.0, 20.0])
        if name == "wbm-sim":
            p.add_argument("--b", type=float, default=0.0)
            p.add_argument("--sigma", type=float, default=1.0)
            p.add_argument("--q", type=float, nargs="+", default=[0.5, 0.5])
            p.add_argument("--horizon", type=float, default=10.0)
            p.add_argument("--dt", type=float, default=1e-3)
        if name == "selftest":
            p.add_argument("--scale", type=float, default=0.2)
            p.add_argument("--only", nargs="*", default=None)
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (SsqError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    cmd = args.command

    if cmd == "validate":
        spec = _load_model(args)
        report = validate(spec)
        _emit({"ok": report.ok, "residual": report.residual,
               "issues": [list(i) for i in report.issues]}, args.out)
        return 0 if report.ok else 1

    if cmd == "simulate":
        spec = _load_model(args)
        model = ScaledModel(spec, args.r, args.mode)
        init = (StateVector(np.array(args.init)) if args.init
                else StateVector.zero(model.n))
        rec = simulate(model, init, StopCondition.time_horizon(args.horizon),
                       stream(args.seed, 0), record_events=True)
        if args.out:
            write_path_csv(rec, args.out)
        _emit({"estimator": "simulate",
               "params": {"r": args.r, "horizon": args.horizon},
               "values": {"t_end": rec.t_end, "n_events": len(rec.events),
                          "Q_final": rec.Q_final.Q.tolist(),
                          "stop_reason": rec.stop_reason},
               "ci": [], "seed": args.seed, "n": 1}, None)
        return 0

    if cmd == "estimate-q":
        spec = _load_model(args)
        est = estimators.estimate_q(spec, args.mode, args.r, args.eps, args.kappa0,
                                    args.n, args.seed, workers=args.workers)
        _emit(est.result_doc(args.seed), args.out, args.csv)
        return 0

    if cmd == "sweep":
        config = ExperimentConfig(
            experiment=f"sweep-fig2{args.family}", family=args.family,
            mode=args.mode, r=args.r, eps=args.eps, kappa0=args.kappa0,
            n=args.n, base_seed=args.seed, workers=args.workers, out=args.out)
        _, csv_text = run_sweep(config)
        if not args.out:
            print(csv_text, end="")
        return 0

    if cmd == "rbm-gof":
        spec = _load_model(args)
        res = estimators.rbm_gof(spec, args.mode, args.r, args.t_probe, args.n,
                                 args.seed, workers=args.workers)
        _emit(res.result_doc(args.seed), args.out, args.csv)
        return 0 if res.passed else 2

    if cmd == "tube-exit":
        spec = _load_model(args)
        res = estimators.tube_exit_freq(spec, args.mode, args.r, args.horizon,
                                        args.kappa0, args.n, args.seed,
                                        gamma1=args.gamma1, gamma2=args.gamma2,
                                        workers=args.workers)
        _emit(res.result_doc(args.seed), args.out, args.csv)
        return 0

    if cmd == "dyadic":
        spec = _load_model(args)
        rows = estimators.dyadic_cauchy(spec, args.eps, args.kappa0, args.r_list,
                                        args.n, args.seed, workers=args.workers)
        _emit({"estimator": "dyadic_cauchy",
               "params": {"eps": args.eps, "kappa0": args.kappa0,
                          "r_list": list(args.r_list)},
               "values": [{"r": row.r, "r_next": row.r_next,
                           "diff": row.diff.tolist(),
                           "ci": row.ci_half_width.tolist()} for row in rows],
               "ci": [], "seed": args.seed, "n": args.n}, args.out)
        return 0

    if cmd == "reweight":
        spec = _load_model(args)
        res = estimators.reweighted_q(spec, args.r, args.eps, args.kappa0,
                                      args.n, args.seed, workers=args.workers)
        _emit(res.result_doc(args.seed), args.out, args.csv)
        return 0

    if cmd == "wbm-sim":
        params = WbmParams(b=args.b, sigma=args.sigma, q=tuple(args.q))
        from .diffusion import wbm_path

        path = wbm_path(params, np.zeros(len(args.q)), args.horizon, args.dt,
                        stream(args.seed, 0))
        if args.out:
            path.to_csv(args.out)
            return 0
        _emit({"estimator": "wbm_sim",
               "params": {"b": args.b, "sigma": args.sigma, "q": list(args.q)},
               "values": {"final": path.values[-1].tolist(),
                          "n_points": len(path.values)},
               "ci": [], "seed": args.seed, "n": 1}, None)
        return 0

    if cmd == "selftest":
        results = selftest(args.seed, scale=args.scale, workers=args.workers,
                           only=args.only)
        print(format_report(results))
        if args.out:
            with open(args.out, "w") as fh:
                json.dump([{"cid": r.cid, "title": r.title, "passed": r.passed,
                            "details": r.details, "seconds": r.seconds}
                           for r in results], fh, indent=2, default=float)
        return 0 if all(r.passed for r in results) else 2

    raise ValueError(f"unknown command {cmd!r}")


if __name__ == "__main__":
    sys.exit(main())
