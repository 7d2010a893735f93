"""Configuration-driven experiment runner: built-in parameter sweeps,
config parsing, and the reduced-size selftest."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .engine import StopCondition, simulate
from .errors import InfeasiblePoint
from .estimators import QEstimate, estimate_q
from .model import (
    HOMOGENEOUS,
    ModelSpec,
    ScaledModel,
    StateVector,
    TieBreakRule,
    validate,
)
from .rngstreams import stream

SWEEP_FAMILIES: dict[str, tuple[float, ...]] = {
    # 9 evenly spaced interior points per family; the symmetric anchor is on
    # each grid (lambda1=10, mu1=20, lambda1=10, p1=0.5 respectively)
    "a": tuple(float(v) for v in range(2, 20, 2)),
    "b": tuple(float(v) for v in range(12, 30, 2)),
    "c": tuple(float(v) for v in range(2, 20, 2)),
    "d": tuple(round(0.1 * k, 10) for k in range(1, 10)),
}

SWEEP_PARAM_NAMES = {"a": "lambda1", "b": "mu1", "c": "lambda1", "d": "p1"}

CSV_HEADER = "sweep_param,value,q1_hat,ci_half,none_frac,n,r,eps,kappa0,seed"


def resolve_family(family: str, value: float) -> ModelSpec:
    """Materialize the spec of one sweep point; rejects infeasible values."""
    v = float(value)
    if family == "a":
        if not 0.0 < v < 20.0:
            raise InfeasiblePoint(f"family a needs 0 < lambda1 < 20, got {v}")
        return ModelSpec(lam=(v, 20.0 - v), mu=(20.0, 20.0))
    if family == "b":
        if v <= 10.0:
            raise InfeasiblePoint(f"family b needs mu1 > 10, got {v}")
        mu2 = 1.0 / (1.0 / 10.0 - 1.0 / v)
        return ModelSpec(lam=(10.0, 10.0), mu=(v, mu2))
    if family == "c":
        if v <= 0.0:
            raise InfeasiblePoint(f"family c needs lambda1 > 0, got {v}")
        return ModelSpec(lam=(v, 10.0), mu=(2.0 * v, 20.0))
    if family == "d":
        if not 0.0 <= v <= 1.0:
            raise InfeasiblePoint(f"family d needs 0 <= p1 <= 1, got {v}")
        table = {frozenset({0, 1}): (v, 1.0 - v)}
        return ModelSpec(lam=(10.0, 10.0), mu=(20.0, 20.0),
                         tie_break=TieBreakRule(table))
    raise ValueError(f"unknown sweep family {family!r}")


@dataclass(frozen=True)
class SweepPoint:
    """One resolved sweep value with its estimate (or skip reason)."""

    param: str
    value: float
    spec: Optional[ModelSpec]
    estimate: Optional[QEstimate]
    warning: Optional[str] = None


@dataclass
class ExperimentConfig:
    """Knobs of one experiment run."""

    experiment: str
    model: Optional[ModelSpec] = None
    mode: str = HOMOGENEOUS
    family: Optional[str] = None
    grid: Optional[tuple[float, ...]] = None
    r: float = 10.0
    eps: float = 1.0
    kappa0: float = 0.25
    n: int = 1000
    base_seed: int = 12345
    horizon: Optional[float] = None
    t_probe: float = 5.0
    r_list: tuple[float, ...] = (5.0, 10.0, 20.0)
    workers: int = 1
    out: Optional[str] = None

    _FIELDS = ("experiment", "model", "mode", "family", "grid", "r", "eps",
               "kappa0", "n", "base_seed", "horizon", "t_probe", "r_list",
               "workers", "out")

    def __post_init__(self):
        for knob in ("r", "eps", "kappa0", "n"):
            if getattr(self, knob) is not None and getattr(self, knob) <= 0:
                raise ValueError(f"config knob {knob} must be positive")
        if self.experiment.startswith("sweep-fig2") and self.family is None:
            self.family = self.experiment[-1]

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        doc = json.loads(text)
        unknown = set(doc) - set(cls._FIELDS)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        if "model" in doc and doc["model"] is not None:
            doc["model"] = ModelSpec.from_json(json.dumps(doc["model"]))
        if "grid" in doc and doc["grid"] is not None:
            doc["grid"] = tuple(float(v) for v in doc["grid"])
        if "r_list" in doc:
            doc["r_list"] = tuple(float(v) for v in doc["r_list"])
        return cls(**doc)


def run_sweep(config: ExperimentConfig) -> tuple[list[SweepPoint], str]:
    """Estimate ball frequencies along one built-in sweep family.

    Returns the resolved points and the CSV table; infeasible grid values
    become warning rows.  Randomness is keyed by
    ``(base_seed, point_index, replication_index)``.
    """
    family = config.family
    if family not in SWEEP_FAMILIES:
        raise ValueError(f"family must be one of {sorted(SWEEP_FAMILIES)}, got {family!r}")
    grid = config.grid if config.grid else SWEEP_FAMILIES[family]
    param = SWEEP_PARAM_NAMES[family]
    points: list[SweepPoint] = []
    lines = [CSV_HEADER]
    for idx, value in enumerate(grid):
        try:
            spec = resolve_family(family, value)
            report = validate(spec)
            if not report.ok:
                raise InfeasiblePoint("; ".join(msg for _, msg in report.issues))
            est = estimate_q(spec, config.mode, config.r, config.eps, config.kappa0,
                             config.n, config.base_seed, workers=config.workers,
                             key_prefix=(idx,))
        except InfeasiblePoint as exc:
            points.append(SweepPoint(param, float(value), None, None, str(exc)))
            lines.append(f"{param},{value:.10g},nan,nan,nan,0,"
                         f"{config.r:.10g},{config.eps:.10g},{config.kappa0:.10g},"
                         f"{config.base_seed}")
            continue
        points.append(SweepPoint(param, float(value), spec, est))
        lines.append(
            f"{param},{value:.10g},{est.q_hat[0]:.10g},{est.ci_half_width[0]:.10g},"
            f"{est.none_frac:.10g},{est.n},{config.r:.10g},{config.eps:.10g},"
            f"{config.kappa0:.10g},{config.base_seed}")
    csv_text = "\n".join(lines) + "\n"
    if config.out:
        with open(config.out, "w") as fh:
            fh.write(csv_text)
    return points, csv_text


def run_martingale(spec: ModelSpec, m: float, init: StateVector, n: int,
                   base_seed: int) -> dict:
    """Mean of the total workload stopped at {0, m} vs its initial value."""
    model = ScaledModel(spec, 1.0, HOMOGENEOUS)
    start = init.radial(model)
    finals = np.empty(n)
    for k in range(n):
        rec = simulate(model, init, StopCondition.radial_exits(m), stream(base_seed, k))
        finals[k] = rec.Q_final.radial(model)
    se = float(finals.std(ddof=1) / math.sqrt(n))
    return {
        "estimator": "martingale",
        "params": {"m": m, "start": start},
        "values": {"mean": float(finals.mean()), "gap": abs(float(finals.mean()) - start),
                   "se": se, "pass": bool(abs(float(finals.mean()) - start) <= 3 * se)},
        "ci": [3 * se],
        "seed": base_seed,
        "n": n,
    }


def selftest(seed: int, *, scale: float = 0.2, workers: int = 1,
             only: Optional[list[str]] = None) -> list:
    """Run every acceptance criterion at reduced size; returns the results."""
    from .acceptance import run_all

    return run_all(seed=seed, scale=scale, workers=workers, only=only)


def format_report(results: Sequence) -> str:
    lines = []
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        lines.append(f"{res.cid:>4}  {status}  {res.seconds:8.2f}s  {res.title}")
    n_fail = sum(not r.passed for r in results)
    lines.append(f"{len(results) - n_fail}/{len(results)} criteria passed")
    return "\n".join(lines)
