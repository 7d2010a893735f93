"""Exact event-driven simulation of the SSQ chain.

Paths are simulated transition by transition (no time discretization).
Departures are generated directly at the thinned rates ``p_i * mu_r_i`` of
the tied shortest set; cumulative service effort is still integrated between
events so path laws can be reweighted between parameter sets.
"""

from __future__ import annotations

import gzip as _gzip
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .errors import AmbiguousBall
from .model import ScaledModel, StateVector

DEFAULT_EVENT_BUDGET = 100_000_000
_RECORD_CHUNK = 1_000_000

_REASON_NAMES = {
    K.HIT_TIME: "time",
    K.HIT_RADIAL_HI: "radial_hi",
    K.HIT_RADIAL_ZERO: "radial_zero",
    K.HIT_DIST: "dist",
    K.CHUNK_FULL: "budget",
}


@dataclass(frozen=True)
class StopCondition:
    """Exactly one termination rule for a simulation run."""

    kind: str
    value: Optional[float] = None

    @classmethod
    def time_horizon(cls, t: float) -> "StopCondition":
        return cls("time_horizon", float(t))

    @classmethod
    def radial_reaches(cls, eps: float) -> "StopCondition":
        return cls("radial_reaches", float(eps))

    @classmethod
    def radial_hits_zero(cls) -> "StopCondition":
        return cls("radial_hits_zero")

    @classmethod
    def event_budget(cls, max_events: int) -> "StopCondition":
        return cls("event_budget", int(max_events))

    @classmethod
    def radial_exits(cls, hi: float) -> "StopCondition":
        """First time the radial part hits 0 or reaches ``hi``, whichever
        comes first.  Convenience for stopped-workload experiments."""
        return cls("radial_exits", float(hi))


@dataclass
class EventLog:
    """Columnar event trace: times, class indices, kinds (0=arrival, 1=departure)."""

    t: np.ndarray
    cls: np.ndarray
    kind: np.ndarray

    def __len__(self) -> int:
        return len(self.t)


@dataclass
class PathRecord:
    """One simulated trajectory with its bookkeeping counters."""

    Q_init: np.ndarray
    Q_final: StateVector
    A_counts: np.ndarray
    D_counts: np.ndarray
    T_effort: np.ndarray
    t_end: float
    stop_reason: str
    budget_exhausted: bool
    events: Optional[EventLog] = None

    def balance_ok(self) -> bool:
        """Exact per-class balance: final = initial + arrivals - departures."""
        return bool(np.array_equal(self.Q_final.Q, self.Q_init + self.A_counts - self.D_counts))


@dataclass(frozen=True)
class ExcursionMark:
    """One excursion: radial hits zero at ``zeta``, reaches the threshold at
    ``tau``, and is classified into the ball around axis ``mark`` (or none)."""

    zeta: float
    tau: float
    mark: Optional[int]


def transition_rates(state: StateVector, model: ScaledModel) -> tuple[np.ndarray, np.ndarray]:
    """Arrival and departure intensities out of ``state``.

    Departures carry rate ``p_i * mu_r_i`` for the tied shortest set and
    zero elsewhere.
    """
    from .model import shortest_set

    kset = shortest_set(state, model)
    mask = 0
    for i in kset:
        mask |= 1 << i
    return model.lam_r.copy(), model.pk_table[mask] * model.mu_r


def step(state: StateVector, model: ScaledModel, rng: np.random.Generator):
    """Draw one transition: ``(dt, (class_index, kind))``.

    ``kind`` is ``"arrival"`` or ``"departure"``.  Rate sums and the draw
    order match the compiled path kernel term for term, so the two consume
    a random stream identically.
    """
    arr, svc = transition_rates(state, model)
    tot = 0.0
    for v in arr:
        tot += v
    for v in svc:
        tot += v
    dt = rng.exponential(1.0 / tot)
    u = rng.random() * tot
    acc = 0.0
    chosen = None
    last = None
    for j, rate in enumerate(np.concatenate([arr, svc])):
        if rate > 0.0:
            last = j
        acc += rate
        if u < acc:
            chosen = j
            break
    if chosen is None:
        chosen = last
    n = model.n
    if chosen < n:
        return dt, (chosen, "arrival")
    return dt, (chosen - n, "departure")


def _stop_params(stop: StopCondition, event_budget: int):
    mask = 0
    t_max = math.inf
    hi = math.inf
    budget = event_budget
    if stop.kind == "time_horizon":
        mask = K.STOP_TIME
        t_max = stop.value
    elif stop.kind == "radial_reaches":
        mask = K.STOP_RADIAL_HI
        hi = stop.value
    elif stop.kind == "radial_hits_zero":
        mask = K.STOP_RADIAL_ZERO
    elif stop.kind == "radial_exits":
        mask = K.STOP_RADIAL_HI | K.STOP_RADIAL_ZERO
        hi = stop.value
    elif stop.kind == "event_budget":
        budget = min(budget, int(stop.value))
    else:
        raise ValueError(f"unknown stop condition {stop.kind!r}")
    return mask, t_max, hi, budget


def _simulate_raw(rate_model: ScaledModel, geom_model: ScaledModel, init: StateVector,
                  stop: StopCondition, rng: np.random.Generator, *,
                  record_events: bool = False,
                  event_budget: int = DEFAULT_EVENT_BUDGET,
                  dist2_max: float = math.inf,
                  watch_dist: bool = False) -> PathRecord:
    """Simulate with intensities from ``rate_model`` and policy/stopping
    geometry from ``geom_model`` (identical for ordinary runs)."""
    if rate_model.n != geom_model.n:
        raise ValueError("rate and geometry models must share the class count")
    n = geom_model.n
    Q = init.Q.astype(np.int64).copy()
    if len(Q) != n:
        raise ValueError(f"initial state has {len(Q)} classes, model has {n}")
    A = np.zeros(n, dtype=np.int64)
    D = np.zeros(n, dtype=np.int64)
    T_eff = np.zeros(n)
    mask, t_max, hi, budget = _stop_params(stop, event_budget)
    if watch_dist:
        mask |= K.STOP_DIST

    t = 0.0
    done = 0
    chunks_t, chunks_c, chunks_k = [], [], []
    empty_f = np.empty(0)
    empty_c = np.empty(0, dtype=np.int16)
    empty_k = np.empty(0, dtype=np.int8)
    while True:
        room = budget - done
        if record_events:
            cap = min(room, _RECORD_CHUNK)
            ev_t = np.empty(cap)
            ev_c = np.empty(cap, dtype=np.int16)
            ev_k = np.empty(cap, dtype=np.int8)
        else:
            cap = room
            ev_t, ev_c, ev_k = empty_f, empty_c, empty_k
        t, nev, reason = K.run_chain(
            Q, A, D, T_eff, t,
            rate_model.lam_r, rate_model.mu_r, geom_model.mu_r, geom_model.steps,
            geom_model.pk_table,
            mask, t_max, hi, dist2_max,
            cap, ev_t, ev_c, ev_k, record_events, rng)
        done += nev
        if record_events and nev:
            chunks_t.append(ev_t[:nev])
            chunks_c.append(ev_c[:nev])
            chunks_k.append(ev_k[:nev])
        if reason != K.CHUNK_FULL or done >= budget:
            break

    exhausted = reason == K.CHUNK_FULL
    events = None
    if record_events:
        events = EventLog(
            t=np.concatenate(chunks_t) if chunks_t else np.empty(0),
            cls=np.concatenate(chunks_c) if chunks_c else np.empty(0, dtype=np.int16),
            kind=np.concatenate(chunks_k) if chunks_k else np.empty(0, dtype=np.int8),
        )
    return PathRecord(
        Q_init=init.Q.copy(),
        Q_final=StateVector(Q),
        A_counts=A,
        D_counts=D,
        T_effort=T_eff,
        t_end=t,
        stop_reason=_REASON_NAMES[reason],
        budget_exhausted=exhausted,
        events=events,
    )


def simulate(model: ScaledModel, init: StateVector, stop: StopCondition,
             rng: np.random.Generator, *, record_events: bool = False,
             event_budget: int = DEFAULT_EVENT_BUDGET) -> PathRecord:
    """Run one event-exact trajectory until the stop condition.

    If the event budget trips first the partial record is returned with
    ``budget_exhausted`` set.
    """
    return _simulate_raw(model, model, init, stop, rng,
                         record_events=record_events, event_budget=event_budget)


def ball_radius(model: ScaledModel, kappa0: float) -> float:
    """Classification-ball radius ``r**-kappa0``."""
    if not 0.0 < kappa0 < 0.5:
        raise ValueError(f"kappa0 must be in (0, 1/2), got {kappa0}")
    return model.r ** (-kappa0)


def check_balls_disjoint(eps: float, u: float) -> None:
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if 2.0 * u >= math.sqrt(2.0) * eps:
        raise AmbiguousBall(
            f"balls of radius {u:.4g} around the {eps:.4g}-axis points overlap; "
            "increase r or eps")


def classify_ball(x_scaled: np.ndarray, eps: float, u: float) -> Optional[int]:
    """Index of the axis ball containing ``x_scaled``, or None."""
    i = int(np.argmax(x_scaled))
    d2 = float(np.sum(x_scaled * x_scaled)) - 2.0 * eps * float(x_scaled[i]) + eps * eps
    return i if d2 <= u * u else None


def first_entrance(model: ScaledModel, eps: float, kappa0: float,
                   rng: np.random.Generator, *,
                   event_budget: int = DEFAULT_EVENT_BUDGET):
    """From the empty system, run until the radial part reaches ``eps``.

    Returns ``(tau, terminal_state, mark)`` where ``mark`` is the axis whose
    ball of radius ``r**-kappa0`` contains the terminal workload, or None.
    """
    u = ball_radius(model, kappa0)
    check_balls_disjoint(eps, u)
    rec = simulate(model, StateVector.zero(model.n), StopCondition.radial_reaches(eps),
                   rng, event_budget=event_budget)
    x = rec.Q_final.x_scaled(model)
    return rec.t_end, rec.Q_final, classify_ball(x, eps, u)


def excursions(path: PathRecord, model: ScaledModel, eps: float, kappa0: float,
               *, chunk: int = 1_000_000) -> list[ExcursionMark]:
    """Extract ``(zeta_m, tau_m, mark_m)`` triples from a recorded path.

    ``zeta_m`` are successive times the radial part hits zero, ``tau_m`` the
    first subsequent times it reaches ``eps``; marks use the same ball rule
    as :func:`first_entrance`.  Excursions whose ``tau`` was not observed are
    not reported.
    """
    if path.events is None:
        raise ValueError("path was simulated without event recording")
    u = ball_radius(model, kappa0)
    check_balls_disjoint(eps, u)
    ev = path.events
    n = model.n
    steps = model.steps
    q = path.Q_init.astype(np.int64).copy()

    out: list[ExcursionMark] = []
    if int(q.sum()) == 0:
        phase, zeta = 1, 0.0
    else:
        phase, zeta = 0, math.nan

    total = len(ev)
    start = 0
    while start < total:
        stop_idx = min(start + chunk, total)
        cls = ev.cls[start:stop_idx].astype(np.int64)
        kind = ev.kind[start:stop_idx]
        tt = ev.t[start:stop_idx]
        delta = np.where(kind == 0, 1, -1).astype(np.int64)
        qsum = int(q.sum()) + np.cumsum(delta)
        # per-class cumulative queue lengths within the chunk
        qmat = np.zeros((len(cls), n), dtype=np.int64)
        qmat[np.arange(len(cls)), cls] = delta
        qmat = q[None, :] + np.cumsum(qmat, axis=0)
        radial = qmat @ steps

        zeros = np.flatnonzero(qsum == 0)
        crossings = np.flatnonzero(radial >= eps)
        pos = 0
        while True:
            if phase == 0:
                k = np.searchsorted(zeros, pos)
                if k >= len(zeros):
                    break
                j = zeros[k]
                zeta = tt[j]
                phase = 1
                pos = j + 1
            else:
                k = np.searchsorted(crossings, pos)
                if k >= len(crossings):
                    break
                j = crossings[k]
                x = qmat[j] * steps
                out.append(ExcursionMark(zeta=float(zeta), tau=float(tt[j]),
                                         mark=classify_ball(x, eps, u)))
                phase = 0
                pos = j + 1
        q = qmat[-1].copy()
        start = stop_idx
    return out


def write_path_csv(path: PathRecord, dest: str, *, compress: Optional[bool] = None) -> None:
    """Dump an event log as ``t,class,kind,Q1..QN`` rows.

    Class indices are 1-based in the file.  ``compress=None`` gzips when the
    filename ends in ``.gz``.
    """
    if path.events is None:
        raise ValueError("path was simulated without event recording")
    if compress is None:
        compress = dest.endswith(".gz")
    opener = _gzip.open if compress else open
    n = len(path.Q_init)
    with opener(dest, "wt") as fh:
        fh.write("t,class,kind," + ",".join(f"Q{i + 1}" for i in range(n)) + "\n")
        q = path.Q_init.astype(np.int64).copy()
        ev = path.events
        for t, c, k in zip(ev.t, ev.cls, ev.kind):
            q[c] += 1 if k == 0 else -1
            kind = "arrival" if k == 0 else "departure"
            fh.write(f"{t:.12g},{c + 1},{kind}," + ",".join(str(int(v)) for v in q) + "\n")
