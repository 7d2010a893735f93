"""Acceptance suite: every release criterion as a callable check.

Each criterion returns a :class:`CriterionResult` with the measured values,
its pass/fail verdict at the stated tolerance, and wall time.  The pytest
suite runs them at full replication counts; the CLI selftest runs the same
code at reduced counts.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .diffusion import GridPath, rbm_path, skorohod, wbm_path
from .diffusion.paths import excursion_axes
from .engine import StopCondition, simulate
from .estimators import (
    chi_square_gof,
    dyadic_cauchy,
    estimate_q,
    queue_workload_transform,
    rbm_gof,
    reweighted_q,
    star_absorption,
    star_absorption_solve,
    star_chain_mc,
    tube_exit_freq,
)
from .model import (
    GENERAL,
    HOMOGENEOUS,
    ModelSpec,
    ScaledModel,
    StateVector,
    WbmParams,
    generator_apply,
    lyapunov_F,
)
from .rngstreams import stream

DEFAULT_SEED = 1729

SYMMETRIC = ModelSpec(lam=(10.0, 10.0), mu=(20.0, 20.0))
ASYM_C5 = ModelSpec(lam=(5.0, 10.0), mu=(10.0, 20.0))  # family (c) at lambda_1 = 5


@dataclass
class CriterionResult:
    cid: str
    title: str
    passed: bool
    details: dict
    seconds: float


def _scaled(n: int, scale: float, floor: int = 100) -> int:
    return max(floor, int(round(n * scale)))


def criterion_1(seed: int = DEFAULT_SEED, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    """Symmetric model forces equal ball frequencies."""
    t0 = time.perf_counter()
    n = _scaled(5000, scale)
    est = estimate_q(SYMMETRIC, HOMOGENEOUS, r=10.0, eps=1.0, kappa0=0.25,
                     n=n, base_seed=seed, workers=workers)
    band = 3.0 * math.sqrt(0.25 / n)
    passed = abs(est.q_hat[0] - 0.5) <= band
    return CriterionResult(
        "A1", "symmetric angular law", passed,
        {"q1_hat": float(est.q_hat[0]), "band": band, "none_frac": est.none_frac, "n": n},
        time.perf_counter() - t0)


def criterion_2(seed: int = DEFAULT_SEED, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    """Radial marginal matches the absolute-normal law; fit improves with r."""
    t0 = time.perf_counter()
    n = _scaled(2000, scale)
    main = rbm_gof(SYMMETRIC, HOMOGENEOUS, r=10.0, t_probe=5.0, n=n,
                   base_seed=seed, workers=workers)
    n_trend = _scaled(1000, scale)
    wins = 0
    stats_pairs = []
    for k in range(10):
        lo = rbm_gof(SYMMETRIC, HOMOGENEOUS, r=5.0, t_probe=5.0, n=n_trend,
                     base_seed=seed + 1000 + k, workers=workers)
        hi = rbm_gof(SYMMETRIC, HOMOGENEOUS, r=20.0, t_probe=5.0, n=n_trend,
                     base_seed=seed + 1000 + k, workers=workers)
        stats_pairs.append((lo.statistic, hi.statistic))
        wins += hi.statistic <= lo.statistic
    passed = main.passed and wins >= 7
    return CriterionResult(
        "A2", "radial marginal KS and r-trend", passed,
        {"ks": main.statistic, "threshold": main.threshold, "wins": wins,
         "pairs": stats_pairs, "n": n},
        time.perf_counter() - t0)


def _random_offaxis_state(rng: np.random.Generator, n: int) -> np.ndarray:
    while True:
        q = rng.integers(0, 40, size=n)
        if np.count_nonzero(q) >= 2:
            return q.astype(np.int64)


def criterion_3(seed: int = DEFAULT_SEED, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    """Generator drift of the off-axis energy is at most -0.4 r, exactly."""
    t0 = time.perf_counter()
    rng = stream(seed, 3)
    n_states = _scaled(200, scale, floor=50)
    worst = math.inf
    ok = True
    for r in (10.0, 100.0):
        model = ScaledModel(SYMMETRIC, r, HOMOGENEOUS)
        for _ in range(n_states):
            q = _random_offaxis_state(rng, 2)
            x = q * model.steps
            val = generator_apply(lyapunov_F, x, model)
            worst = min(worst, -val / r)
            if not val <= -0.4 * r * (1.0 - 1e-6):
                ok = False
    return CriterionResult(
        "A3", "generator drift bound", ok,
        {"min_negative_margin_over_r": worst, "states_per_r": n_states},
        time.perf_counter() - t0)


def criterion_4(seed: int = DEFAULT_SEED, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    """Total workload stopped at {0, m} keeps its initial mean."""
    t0 = time.perf_counter()
    n = _scaled(2000, scale)
    m = 40.0  # = 4 r at the reference scale r = 10
    model = ScaledModel(SYMMETRIC, 1.0, HOMOGENEOUS)
    init = StateVector(np.array([150, 100]))
    r0 = init.radial(model)
    finals = np.empty(n)
    for k in range(n):
        rec = simulate(model, init, StopCondition.radial_exits(m), stream(seed, 4, k))
        finals[k] = rec.Q_final.radial(model)
    se = finals.std(ddof=1) / math.sqrt(n)
    gap = abs(finals.mean() - r0)
    return CriterionResult(
        "A4", "stopped workload martingale", gap <= 3.0 * se,
        {"mean": float(finals.mean()), "start": r0, "gap": gap, "se": se, "n": n},
        time.perf_counter() - t0)


def criterion_5(seed: int = DEFAULT_SEED, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    """Ball frequencies ignore second-order rate perturbations."""
    t0 = time.perf_counter()
    n = _scaled(5000, scale)
    spec_gen = ModelSpec(lam=SYMMETRIC.lam, mu=SYMMETRIC.mu,
                         lam_hat=(5.0, -5.0), mu_hat=(0.0, 0.0))
    hom = estimate_q(spec_gen, HOMOGENEOUS, 10.0, 1.0, 0.25, n, seed + 50,
                     workers=workers)
    gen = estimate_q(spec_gen, GENERAL, 10.0, 1.0, 0.25, n, seed + 51,
                     workers=workers)
    rew = reweighted_q(spec_gen, 10.0, 1.0, 0.25, n, seed + 52, workers=workers)

    def close(a, sa, b, sb):
        return bool(np.all(np.abs(a - b) <= 3.0 * np.sqrt(sa ** 2 + sb ** 2)))

    checks = {
        "hom_vs_gen": close(hom.q_hat, hom.se(), gen.q_hat, gen.se()),
        "rew_vs_gen": close(rew.q_hat, rew.se(), gen.q_hat, gen.se()),
        "rew_vs_hom": close(rew.q_hat, rew.se(), hom.q_hat, hom.se()),
    }
    return CriterionResult(
        "A5", "second-order independence", all(checks.values()),
        {"q_hom": list(map(float, hom.q_hat)), "q_gen": list(map(float, gen.q_hat)),
         "q_rew": list(map(float, rew.q_hat)), "mean_weight": rew.mean_weight,
         **checks, "n": n},
        time.perf_counter() - t0)


def criterion_6(seed: int = DEFAULT_SEED, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    """Dyadic differences of ball frequencies shrink with the scale."""
    t0 = time.perf_counter()
    n = _scaled(3000, scale)
    rows = dyadic_cauchy(ASYM_C5, eps=1.0, kappa0=0.25, r_list=(5.0, 10.0, 20.0),
                         n=n, base_seed=seed + 60, workers=workers)
    d1, d2 = rows[0], rows[1]
    joint = math.sqrt(d1.ci_half_width[0] ** 2 + d2.ci_half_width[0] ** 2)
    passed = d2.diff[0] <= d1.diff[0] + joint
    return CriterionResult(
        "A6", "dyadic stability of q1", passed,
        {"diff_5_10": float(d1.diff[0]), "diff_10_20": float(d2.diff[0]),
         "joint_ci": joint, "n": n},
        time.perf_counter() - t0)


def criterion_7(seed: int = DEFAULT_SEED, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    """Reflection-map identities hold to 1e-12 on random grid paths."""
    t0 = time.perf_counter()
    rng = stream(seed, 7)
    worst = 0.0
    ok = True
    for _ in range(1000):
        m = int(rng.integers(2, 200))
        scale_v = 10.0 ** rng.integers(-2, 3)
        vals = rng.normal(0.0, scale_v, size=m)
        if rng.random() < 0.2:
            vals = np.abs(vals)
            vals[0] = 0.0
        g1p, g2p = skorohod(GridPath(0.0, 0.5, np.cumsum(vals)))
        g1, g2, phi = g1p.values, g2p.values, np.cumsum(vals)
        err = max(
            float(-g1.min(initial=0.0)),
            float(-np.diff(g2).min(initial=0.0)),
            float(np.abs(g1 - phi - g2).max()),
            float(abs(np.sum(g1[1:] * np.diff(g2)))),
        )
        worst = max(worst, err / max(1.0, scale_v))
        if worst > 1e-12:
            ok = False
    return CriterionResult(
        "A7", "reflection map exactness", ok,
        {"worst_relative_error": worst},
        time.perf_counter() - t0)


def criterion_8(seed: int = DEFAULT_SEED, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    """Excursion axes follow q; radial law matches the reflected sampler."""
    t0 = time.perf_counter()
    params = WbmParams(b=0.0, sigma=1.0, q=(0.3, 0.7))
    rng = stream(seed, 8)
    axes: list[int] = []
    guard = 0
    while len(axes) < 500 and guard < 40:
        path = wbm_path(params, np.zeros(2), horizon=400.0, dt=1e-3, rng=rng)
        axes.extend(excursion_axes(path).tolist())
        guard += 1
    counts = np.bincount(np.asarray(axes, dtype=int), minlength=2)
    chi = chi_square_gof(counts, np.asarray(params.q))

    n_marg = _scaled(800, scale)
    rng_a = stream(seed, 81)
    rng_b = stream(seed, 82)
    wbm_fin = np.array([
        wbm_path(params, np.zeros(2), 1.0, 1e-3, rng_a).values[-1].sum()
        for _ in range(n_marg)
    ])
    rbm_fin = np.array([
        rbm_path(params.b, params.sigma, 0.0, 1.0, 1e-3, rng_b).values[-1]
        for _ in range(n_marg)
    ])
    ks = stats.ks_2samp(wbm_fin, rbm_fin)
    ks_thresh = 1.6276 * math.sqrt(2.0 / n_marg)  # two-sample, level 0.01
    passed = chi.passed and len(axes) >= 500 and ks.statistic <= ks_thresh
    return CriterionResult(
        "A8", "axis-process sampler", passed,
        {"n_excursions": len(axes), "counts": counts.tolist(),
         "chi2": chi.statistic, "chi2_threshold": chi.threshold,
         "ks2": float(ks.statistic), "ks2_threshold": ks_thresh},
        time.perf_counter() - t0)


def criterion_9(seed: int = DEFAULT_SEED, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    """Star-chain closed form vs linear solve (1e-12) and Monte Carlo (3 SE)."""
    t0 = time.perf_counter()
    rng = stream(seed, 9)
    n_mc = _scaled(100_000, scale, floor=10_000)
    worst_lin = 0.0
    worst_mc = 0.0
    ok = True
    for _ in range(20):
        ncls = int(rng.integers(2, 5))
        p0F = rng.dirichlet(np.ones(ncls))
        pF0 = rng.uniform(0.05, 0.9, size=ncls)
        pFG = 1.0 - pF0
        closed = star_absorption(p0F, pF0, pFG)
        solved = star_absorption_solve(p0F, pF0, pFG)
        worst_lin = max(worst_lin, float(np.abs(closed - solved).max()))
        if worst_lin > 1e-12:
            ok = False
        freq = star_chain_mc(p0F, pF0, pFG, n_mc, rng)
        se = np.sqrt(closed * (1.0 - closed) / n_mc)
        ratio = float(np.max(np.abs(freq - closed) / np.maximum(se, 1e-12)))
        worst_mc = max(worst_mc, ratio)
        if ratio > 3.0:
            ok = False
    return CriterionResult(
        "A9", "star-chain oracle", ok,
        {"worst_linear_gap": worst_lin, "worst_mc_z": worst_mc, "n_mc": n_mc},
        time.perf_counter() - t0)


def criterion_10(seed: int = DEFAULT_SEED, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    """Off-axis displacement probability does not grow with the scale."""
    t0 = time.perf_counter()
    n = _scaled(1000, scale)
    freqs = []
    for idx, r in enumerate((5.0, 10.0, 20.0)):
        res = tube_exit_freq(SYMMETRIC, HOMOGENEOUS, r, horizon=2.0, kappa0=0.25,
                             n=n, base_seed=seed + 100 + idx, width=0.3,
                             workers=workers)
        freqs.append(res)
    ok = True
    for lo, hi in zip(freqs, freqs[1:]):
        joint = math.sqrt(lo.ci_half_width ** 2 + hi.ci_half_width ** 2)
        if hi.freq > lo.freq + joint:
            ok = False
    return CriterionResult(
        "A10", "axis collapse in r", ok,
        {"freqs": [f.freq for f in freqs], "cis": [f.ci_half_width for f in freqs],
         "n": n},
        time.perf_counter() - t0)


def criterion_11(seed: int = DEFAULT_SEED, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    """Queue/workload reconstruction is exact along homogeneous paths."""
    t0 = time.perf_counter()
    n_paths = _scaled(100, scale, floor=20)
    specs = [SYMMETRIC, ASYM_C5]
    scales = (3.0, 7.0, 10.0, 20.0)
    worst = 0.0
    states = 0
    for k in range(n_paths):
        model = ScaledModel(specs[k % 2], scales[k % 4], HOMOGENEOUS)
        rng = stream(seed, 11, k)
        init = StateVector(rng.integers(0, 30, size=model.n))
        rec = simulate(model, init, StopCondition.event_budget(2000), rng,
                       record_events=True)
        q = rec.Q_init.copy()
        worst = max(worst, queue_workload_transform(StateVector(q), model))
        for cls, kind in zip(rec.events.cls, rec.events.kind):
            q[cls] += 1 if kind == 0 else -1
            worst = max(worst, queue_workload_transform(StateVector(q), model))
            states += 1
    return CriterionResult(
        "A11", "queue/workload transform exactness", worst == 0.0,
        {"worst": worst, "states_checked": states, "paths": n_paths},
        time.perf_counter() - t0)


def _sweep_monotone(points: list[tuple[float, float, float]]) -> tuple[bool, float, float]:
    """Isotonic-fit residual check; returns (ok, residual, pooled 3 SE)."""
    from sklearn.isotonic import IsotonicRegression

    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    ses = np.array([p[2] for p in points])
    best = math.inf
    for increasing in (True, False):
        fit = IsotonicRegression(increasing=increasing).fit_transform(xs, ys)
        best = min(best, float(np.max(np.abs(fit - ys))))
    pooled = 3.0 * math.sqrt(float(np.mean(ses ** 2)))
    return best <= pooled, best, pooled


def criterion_12(seed: int = DEFAULT_SEED, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    """Sweep families trace monotone curves and hit the symmetric anchors."""
    from .harness import SWEEP_FAMILIES, resolve_family

    t0 = time.perf_counter()
    n = _scaled(1200, scale)
    anchors = {"a": 10.0, "b": 20.0, "c": 10.0, "d": 0.5}
    detail = {}
    ok = True
    for fam_idx, fam in enumerate(sorted(SWEEP_FAMILIES)):
        grid = SWEEP_FAMILIES[fam]
        points = []
        anchor_ok = None
        for p_idx, value in enumerate(grid):
            spec = resolve_family(fam, value)
            est = estimate_q(spec, HOMOGENEOUS, 10.0, 1.0, 0.25, n,
                             seed + 120 + fam_idx, workers=workers,
                             key_prefix=(p_idx,))
            points.append((value, float(est.q_hat[0]), float(est.se()[0])))
            if value == anchors[fam]:
                anchor_ok = bool(abs(est.q_hat[0] - 0.5) <= est.ci_half_width[0])
        mono_ok, resid, pooled = _sweep_monotone(points)
        detail[fam] = {"points": points, "monotone": mono_ok, "residual": resid,
                       "pooled_3se": pooled, "anchor_ok": anchor_ok}
        if not mono_ok or anchor_ok is not True:
            ok = False
    return CriterionResult(
        "A12", "sweep monotonicity and anchors", ok,
        {**detail, "n": n},
        time.perf_counter() - t0)


CRITERIA: dict[str, Callable[..., CriterionResult]] = {
    "A1": criterion_1, "A2": criterion_2, "A3": criterion_3, "A4": criterion_4,
    "A5": criterion_5, "A6": criterion_6, "A7": criterion_7, "A8": criterion_8,
    "A9": criterion_9, "A10": criterion_10, "A11": criterion_11, "A12": criterion_12,
}


def run_all(seed: int = DEFAULT_SEED, scale: float = 1.0, workers: int = 1,
            only: Optional[list[str]] = None) -> list[CriterionResult]:
    results = []
    for cid, fn in CRITERIA.items():
        if only and cid not in only:
            continue
        results.append(fn(seed=seed, scale=scale, workers=workers))
    return results
