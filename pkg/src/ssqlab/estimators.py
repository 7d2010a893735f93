"""Monte Carlo estimators and goodness-of-fit checks connecting the exact
chain to its diffusion limit: ball-entry frequencies and their dyadic
stability, tube-exit frequencies, radial marginal tests, path-law
reweighting, the queue/workload transform, and the star-chain oracle.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .engine import (
    PathRecord,
    StopCondition,
    _simulate_raw,
    ball_radius,
    check_balls_disjoint,
    classify_ball,
    simulate,
)
from .errors import DegenerateChain, RateMismatch
from .model import (
    GENERAL,
    HOMOGENEOUS,
    ModelSpec,
    ScaledModel,
    StateVector,
    canonical_perm,
    diffusion_coefficients,
    lyapunov_F,
    permute_spec,
)
from .rngstreams import stream

Z95 = 1.959963984540054  # two-sided 95% normal quantile


def binomial_halfwidth(k: int, n: int, z: float = Z95) -> float:
    """95% half-width for a binomial proportion.

    Normal approximation, switching to the Wilson interval when either
    count is below 30.
    """
    if n <= 0:
        raise ValueError("need n > 0")
    p = k / n
    if k < 30 or n - k < 30:
        denom = 1.0 + z * z / n
        return z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom
    return z * math.sqrt(p * (1.0 - p) / n)


RESULT_CSV_COLUMNS = ("estimator", "seed", "n", "params", "values", "ci")


def append_result_csv(doc: dict, dest: str) -> None:
    """Append a result document as one flat CSV row.

    Structured fields are packed as JSON strings; a header row is written
    when the file is created.
    """
    row = [
        doc.get("estimator"),
        doc.get("seed"),
        doc.get("n"),
        json.dumps(doc.get("params", {}), sort_keys=True, default=float),
        json.dumps(doc.get("values", {}), sort_keys=True, default=float),
        json.dumps(doc.get("ci", []), default=float),
    ]
    fresh = not os.path.exists(dest)
    with open(dest, "a", newline="") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(RESULT_CSV_COLUMNS)
        writer.writerow(row)


def _parallel(n: int, workers: int, task: Callable[[int, int], None]) -> None:
    """Run ``task(lo, hi)`` over a partition of ``range(n)``.

    Output placement is indexed by replication, so results are identical
    for any worker count.
    """
    if workers <= 1:
        task(0, n)
        return
    block = (n + workers - 1) // workers
    spans = [(lo, min(lo + block, n)) for lo in range(0, n, block)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(lambda span: task(*span), spans))


@dataclass(frozen=True)
class QEstimate:
    """Ball-entry frequencies with confidence intervals."""

    q_hat: np.ndarray
    none_frac: float
    ci_half_width: np.ndarray
    n: int
    r: float
    eps: float
    kappa0: float
    counts: np.ndarray
    none_count: int

    def se(self) -> np.ndarray:
        return np.sqrt(self.q_hat * (1.0 - self.q_hat) / self.n)

    def result_doc(self, seed: Optional[int] = None) -> dict:
        return {
            "estimator": "estimate_q",
            "params": {"r": self.r, "eps": self.eps, "kappa0": self.kappa0},
            "values": {"q_hat": list(map(float, self.q_hat)), "none_frac": self.none_frac},
            "ci": list(map(float, self.ci_half_width)),
            "seed": seed,
            "n": self.n,
        }


@dataclass(frozen=True)
class GofResult:
    """One goodness-of-fit outcome at level 0.01."""

    statistic: float
    n: int
    threshold: float
    passed: bool

    def result_doc(self, seed: Optional[int] = None) -> dict:
        return {
            "estimator": "gof",
            "params": {},
            "values": {"statistic": self.statistic, "threshold": self.threshold,
                       "pass": self.passed},
            "ci": [],
            "seed": seed,
            "n": self.n,
        }


def _collect_marks(model: ScaledModel, eps: float, kappa0: float, n: int,
                   base_seed: int, key_prefix: tuple[int, ...], workers: int,
                   rate_model: Optional[ScaledModel] = None,
                   weights_out: Optional[np.ndarray] = None) -> np.ndarray:
    """Marks (or -1) of ``n`` independent first-entrance runs from empty.

    When ``rate_model`` is given, paths are simulated under its intensities
    while the policy/stopping geometry stays with ``model``; per-path
    likelihood ratios are then written to ``weights_out``.
    """
    u = ball_radius(model, kappa0)
    check_balls_disjoint(eps, u)
    rates = rate_model if rate_model is not None else model
    marks = np.full(n, -1, dtype=np.int64)
    zero = StateVector.zero(model.n)
    stop = StopCondition.radial_reaches(eps)

    def task(lo: int, hi: int) -> None:
        for k in range(lo, hi):
            rng = stream(base_seed, *key_prefix, k)
            rec = _simulate_raw(rates, model, zero, stop, rng)
            x = rec.Q_final.x_scaled(model)
            m = classify_ball(x, eps, u)
            marks[k] = -1 if m is None else m
            if weights_out is not None:
                weights_out[k] = likelihood_weight(rec, rates, model)

    _parallel(n, workers, task)
    return marks


def estimate_q(spec: ModelSpec, mode: str, r: float, eps: float, kappa0: float,
               n: int, base_seed: int, *, workers: int = 1,
               key_prefix: tuple[int, ...] = ()) -> QEstimate:
    """Estimate the angular distribution by first-entrance frequencies.

    Runs ``n`` independent replications from the empty system, each on the
    stream ``(base_seed, *key_prefix, replication)``.  Classes are simulated
    in canonical order so relabeling the spec relabels the estimate exactly.
    """
    if n < 100:
        raise ValueError(f"need n >= 100 replications, got {n}")
    perm = canonical_perm(spec)
    model = ScaledModel(permute_spec(spec, perm), r, mode)
    marks = _collect_marks(model, eps, kappa0, n, base_seed, key_prefix, workers)

    slot_counts = np.bincount(marks[marks >= 0], minlength=model.n)
    counts = np.zeros(spec.n, dtype=np.int64)
    counts[list(perm)] = slot_counts
    none_count = int(n - counts.sum())
    q_hat = counts / n
    ci = np.array([binomial_halfwidth(int(k), n) for k in counts])
    return QEstimate(
        q_hat=q_hat,
        none_frac=1.0 - math.fsum(q_hat),
        ci_half_width=ci,
        n=n, r=float(r), eps=float(eps), kappa0=float(kappa0),
        counts=counts, none_count=none_count,
    )


@dataclass(frozen=True)
class DyadicRow:
    """Successive difference of ball frequencies between scales r and 2r."""

    r: float
    r_next: float
    diff: np.ndarray
    ci_half_width: np.ndarray
    lo: QEstimate
    hi: QEstimate


def dyadic_cauchy(spec: ModelSpec, eps: float, kappa0: float,
                  r_list: Sequence[float], n: int, base_seed: int,
                  *, workers: int = 1) -> list[DyadicRow]:
    """Per-class differences ``|q_hat(r) - q_hat(2r)|`` along a dyadic grid.

    Homogeneous scaling throughout; each scale gets its own stream family.
    """
    r_list = [float(r) for r in r_list]
    for a, b in zip(r_list, r_list[1:]):
        if abs(b - 2.0 * a) > 1e-9 * a:
            raise ValueError(f"scales must be dyadic, got consecutive pair ({a}, {b})")
    ests = [
        estimate_q(spec, HOMOGENEOUS, r, eps, kappa0, n, base_seed,
                   workers=workers, key_prefix=(idx,))
        for idx, r in enumerate(r_list)
    ]
    rows = []
    for lo, hi in zip(ests, ests[1:]):
        rows.append(DyadicRow(
            r=lo.r, r_next=hi.r,
            diff=np.abs(lo.q_hat - hi.q_hat),
            ci_half_width=np.sqrt(lo.ci_half_width ** 2 + hi.ci_half_width ** 2),
            lo=lo, hi=hi,
        ))
    return rows


@dataclass(frozen=True)
class FreqResult:
    """An exit/exceedance frequency with its confidence half-width."""

    freq: float
    ci_half_width: float
    n: int
    params: dict

    def result_doc(self, seed: Optional[int] = None) -> dict:
        return {
            "estimator": "tube_exit_freq",
            "params": self.params,
            "values": {"freq": self.freq},
            "ci": [self.ci_half_width],
            "seed": seed,
            "n": self.n,
        }


def tube_exit_freq(spec: ModelSpec, mode: str, r: float, horizon: Optional[float],
                   kappa0: float, n: int, base_seed: int, *,
                   gamma1: float = 1.0, gamma2: float = 2.0, c0: float = 1.0,
                   init: Optional[StateVector] = None, width: Optional[float] = None,
                   workers: int = 1) -> FreqResult:
    """Frequency of the scaled workload leaving the axis tube.

    Counts paths with ``sup_{t<=T} dist(X, axes) > gamma2 * r**-kappa0``
    among paths started with Lyapunov value at most ``gamma1 * r**-kappa0``.
    ``horizon=None`` uses ``c0 * log r``; ``width`` overrides the default
    exit threshold.
    """
    if not 0.0 < gamma1 < gamma2:
        raise ValueError(f"need 0 < gamma1 < gamma2, got {gamma1}, {gamma2}")
    model = ScaledModel(spec, r, mode)
    if horizon is None:
        horizon = c0 * math.log(r)
    if width is None:
        width = gamma2 * r ** (-kappa0)
    if init is None:
        init = StateVector.zero(model.n)
    start_f = lyapunov_F(init.x_scaled(model))
    if start_f > gamma1 * r ** (-kappa0) * (1.0 + 1e-12):
        raise ValueError(
            f"initial state has F={start_f:.4g} above gamma1*r^-kappa0="
            f"{gamma1 * r ** (-kappa0):.4g}")
    exceeded = np.zeros(n, dtype=bool)
    stop = StopCondition.time_horizon(horizon)

    def task(lo: int, hi: int) -> None:
        for k in range(lo, hi):
            rng = stream(base_seed, k)
            rec = _simulate_raw(model, model, init, stop, rng,
                                dist2_max=width * width, watch_dist=True)
            exceeded[k] = rec.stop_reason == "dist"

    _parallel(n, workers, task)
    hits = int(exceeded.sum())
    return FreqResult(
        freq=hits / n,
        ci_half_width=binomial_halfwidth(hits, n),
        n=n,
        params={"r": float(r), "horizon": horizon, "kappa0": kappa0,
                "gamma1": gamma1, "gamma2": gamma2, "width": width},
    )


def likelihood_weight(path: PathRecord, from_model: ScaledModel,
                      to_model: ScaledModel) -> float:
    """Path-law likelihood ratio of ``to_model`` against ``from_model``.

    The chain's jump-law ratio: a factor ``lam_to/lam_from`` per arrival,
    ``mu_to/mu_from`` per departure, and the exponential compensator over
    elapsed time and per-class service effort.  Means to one over paths
    simulated under ``from_model``.
    """
    if from_model.n != to_model.n:
        raise RateMismatch("models must share the class count")
    if from_model.spec.tie_break != to_model.spec.tie_break:
        raise RateMismatch("models must share the tie-break rule")
    log_w = 0.0
    for i in range(from_model.n):
        lf, lt = from_model.lam_r[i], to_model.lam_r[i]
        mf, mt = from_model.mu_r[i], to_model.mu_r[i]
        log_w += path.A_counts[i] * math.log(lt / lf)
        log_w += path.D_counts[i] * math.log(mt / mf)
        log_w -= (lt - lf) * path.t_end
        log_w -= (mt - mf) * path.T_effort[i]
    return math.exp(log_w)


@dataclass(frozen=True)
class ReweightedQEstimate:
    """Importance-reweighted ball frequencies with standard errors."""

    q_hat: np.ndarray
    se_: np.ndarray
    none_hat: float
    mean_weight: float
    n: int

    def se(self) -> np.ndarray:
        return self.se_

    def result_doc(self, seed: Optional[int] = None) -> dict:
        return {
            "estimator": "reweighted_q",
            "params": {},
            "values": {"q_hat": list(map(float, self.q_hat)),
                       "none_hat": self.none_hat,
                       "mean_weight": self.mean_weight},
            "ci": list(map(float, Z95 * self.se_)),
            "seed": seed,
            "n": self.n,
        }


def reweighted_q(spec: ModelSpec, r: float, eps: float, kappa0: float,
                 n: int, base_seed: int, *, from_mode: str = HOMOGENEOUS,
                 to_mode: str = GENERAL, workers: int = 1,
                 key_prefix: tuple[int, ...] = ()) -> ReweightedQEstimate:
    """Estimate ``to_mode`` ball frequencies from ``from_mode`` paths.

    Paths are simulated under the from-rates while the policy and the
    stopping geometry are those of the target model, so weighting by the
    likelihood ratio is exactly unbiased for the target frequencies.
    """
    if n < 100:
        raise ValueError(f"need n >= 100 replications, got {n}")
    perm = canonical_perm(spec)
    spec_c = permute_spec(spec, perm)
    geom = ScaledModel(spec_c, r, to_mode)
    rates = ScaledModel(spec_c, r, from_mode)
    weights = np.empty(n)
    marks = _collect_marks(geom, eps, kappa0, n, base_seed, key_prefix, workers,
                           rate_model=rates, weights_out=weights)

    q_hat = np.zeros(spec.n)
    se = np.zeros(spec.n)
    for slot in range(spec.n):
        contrib = weights * (marks == slot)
        q_hat[perm[slot]] = contrib.mean()
        se[perm[slot]] = contrib.std(ddof=1) / math.sqrt(n)
    none_contrib = weights * (marks < 0)
    return ReweightedQEstimate(
        q_hat=q_hat, se_=se, none_hat=float(none_contrib.mean()),
        mean_weight=float(weights.mean()), n=n,
    )


def rbm_gof(spec: ModelSpec, mode: str, r: float, t_probe: float, n: int,
            base_seed: int, *, workers: int = 1) -> GofResult:
    """KS test of the radial marginal at ``t_probe`` against the RBM law.

    ``n`` replications start from empty; the reference CDF uses the drift
    and variance computed from the model's rate perturbations (the
    absolute-normal CDF when the drift vanishes).
    """
    if n <= 0:
        raise ValueError(f"need n > 0 replications, got {n}")
    b, sigma2 = diffusion_coefficients(spec)
    if mode == HOMOGENEOUS:
        b = 0.0
    sigma = math.sqrt(sigma2)
    model = ScaledModel(spec, r, mode)
    zero = StateVector.zero(model.n)
    stop = StopCondition.time_horizon(t_probe)
    radials = np.empty(n)

    def task(lo: int, hi: int) -> None:
        for k in range(lo, hi):
            rng = stream(base_seed, k)
            rec = simulate(model, zero, stop, rng)
            radials[k] = rec.Q_final.radial(model)

    _parallel(n, workers, task)

    from .diffusion.kernels import rbm_cdf_from_zero

    res = stats.kstest(radials, lambda y: rbm_cdf_from_zero(b, sigma, t_probe, y))
    threshold = float(stats.kstwo.ppf(0.99, n))
    return GofResult(statistic=float(res.statistic), n=n, threshold=threshold,
                     passed=bool(res.statistic <= threshold))


def chi_square_gof(counts: Sequence[int], probs: Sequence[float]) -> GofResult:
    """Pearson chi-square against fixed cell probabilities, level 0.01."""
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    n = int(counts.sum())
    expected = probs * n
    statistic = float(np.sum((counts - expected) ** 2 / expected))
    threshold = float(stats.chi2.ppf(0.99, len(counts) - 1))
    return GofResult(statistic=statistic, n=n, threshold=threshold,
                     passed=bool(statistic <= threshold))


def queue_workload_transform(state: StateVector, model: ScaledModel) -> float:
    """Largest discrepancy between scaled queue lengths and their workload
    reconstruction, ``max_i |mu_r_i / r^2 - mu_i| * Xhat_i``.

    Exactly zero in homogeneous mode because the rate factor reuses the
    expression that built the scaled rates.
    """
    r2 = model.r * model.r
    x_hat = state.x_scaled(model)
    worst = 0.0
    for i in range(model.n):
        factor = abs(model.mu_r[i] - model.spec.mu[i] * r2) / r2
        worst = max(worst, factor * float(x_hat[i]))
    return worst


def _check_star_args(p0F, pF0, pFG):
    p0F = np.asarray(p0F, dtype=float)
    pF0 = np.asarray(pF0, dtype=float)
    pFG = np.asarray(pFG, dtype=float)
    if not (len(p0F) == len(pF0) == len(pFG)):
        raise ValueError("argument lengths differ")
    if np.any(p0F < 0) or abs(math.fsum(p0F) - 1.0) > 1e-12:
        raise ValueError(f"p0F must be a probability vector, got {p0F}")
    if np.any(pF0 < 0) or np.any(pFG < 0) or np.any(np.abs(pF0 + pFG - 1.0) > 1e-12):
        raise ValueError("each pF0_i + pFG_i must equal 1 with both nonnegative")
    return p0F, pF0, pFG


def star_absorption(p0F, pF0, pFG) -> np.ndarray:
    """Absorption probabilities of the star-shaped chain, closed form.

    A hub communicates with ``N`` middle states; middle state ``i`` returns
    to the hub w.p. ``pF0_i`` or gets absorbed w.p. ``pFG_i``.  From the hub,
    absorption at leaf ``i`` has probability
    ``p0F_i * pFG_i / (1 - sum_j p0F_j * pF0_j)``.
    """
    p0F, pF0, pFG = _check_star_args(p0F, pF0, pFG)
    denom = 1.0 - float(np.dot(p0F, pF0))
    if denom <= 1e-14:
        raise DegenerateChain("no absorption possible: sum p0F_i * pF0_i = 1")
    return p0F * pFG / denom


def star_absorption_solve(p0F, pF0, pFG) -> np.ndarray:
    """Brute-force absorption probabilities by a linear solve.

    Builds the full ``2N + 1``-state chain (hub, middles, absorbing leaves)
    and solves the first-step equations on the transient block; ground truth
    for the closed form.
    """
    p0F, pF0, pFG = _check_star_args(p0F, pF0, pFG)
    n = len(p0F)
    # transient states: 0 = hub, 1..n = middles
    t_mat = np.zeros((n + 1, n + 1))
    t_mat[0, 1:] = p0F
    t_mat[1:, 0] = pF0
    direct = np.zeros((n + 1, n))
    direct[1:, :] = np.diag(pFG)
    sol = np.linalg.solve(np.eye(n + 1) - t_mat, direct)
    return sol[0]


def star_chain_mc(p0F, pF0, pFG, n: int, rng: np.random.Generator) -> np.ndarray:
    """Monte Carlo absorption frequencies over ``n`` chain runs."""
    p0F, pF0, pFG = _check_star_args(p0F, pF0, pFG)
    ncls = len(p0F)
    active = np.arange(n)
    result = np.full(n, -1, dtype=np.int64)
    guard = 0
    while len(active):
        mids = rng.choice(ncls, size=len(active), p=p0F)
        absorbed = rng.random(len(active)) < pFG[mids]
        result[active[absorbed]] = mids[absorbed]
        active = active[~absorbed]
        guard += 1
        if guard > 10_000:
            raise DegenerateChain("absorption did not occur within 10000 rounds")
    return np.bincount(result, minlength=ncls) / n
