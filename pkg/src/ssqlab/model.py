"""Model parameterization and policy geometry for the critically loaded
serve-the-shortest-queue (SSQ) single-server system.

A model is described by first-order rates ``lam, mu`` (criticality
``sum(lam/mu) == 1``), second-order perturbations ``lam_hat, mu_hat``, and a
tie-break rule that splits service effort among the shortest nonempty queues.
At scale ``r`` the concrete rates are ``lam*r**2`` (homogeneous) or
``lam*r**2 + lam_hat*r`` (general), and the scaled nominal workload lives on
the lattice ``(r/mu_r_1)Z+ x ... x (r/mu_r_N)Z+``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import BadRate, BadTieBreak, LatticeMismatch, NonCritical

CRITICALITY_TOL = 1e-12
TIEBREAK_TOL = 1e-12
LATTICE_RTOL = 1e-9

HOMOGENEOUS = "homogeneous"
GENERAL = "general"

# Tie-break tables are materialized over all 2**N - 1 subsets.
MAX_CLASSES = 16


@dataclass(frozen=True)
class TieBreakRule:
    """Effort-splitting probabilities for sets of tied shortest queues.

    ``table`` maps a nonempty subset of classes (0-based indices) to a
    full-length probability vector supported on that subset.  Subsets not
    listed default to the uniform distribution on the subset, which also
    covers all singletons.
    """

    table: Mapping[frozenset[int], tuple[float, ...]] = field(default_factory=dict)

    def vector(self, subset: frozenset[int], n: int) -> tuple[float, ...]:
        """Full-length effort vector for the tied set ``subset``."""
        if not subset:
            return (0.0,) * n
        stored = self.table.get(subset)
        if stored is not None:
            return stored
        w = 1.0 / len(subset)
        return tuple(w if i in subset else 0.0 for i in range(n))

    def issues(self, n: int) -> list[str]:
        out = []
        for subset, p in self.table.items():
            if not subset or not all(0 <= i < n for i in subset):
                out.append(f"tie-break subset {sorted(subset)} out of range for n={n}")
                continue
            if len(p) != n:
                out.append(f"tie-break vector for {sorted(subset)} has length {len(p)} != {n}")
                continue
            if any(v < 0 for v in p):
                out.append(f"tie-break vector for {sorted(subset)} has negative entries")
            if any(p[i] != 0.0 for i in range(n) if i not in subset):
                out.append(f"tie-break vector for {sorted(subset)} supported off the subset")
            if abs(math.fsum(p) - 1.0) > TIEBREAK_TOL:
                out.append(f"tie-break vector for {sorted(subset)} sums to {math.fsum(p)!r}")
        return out


def _as_tuple(x: Iterable[float]) -> tuple[float, ...]:
    return tuple(float(v) for v in x)


@dataclass(frozen=True)
class ModelSpec:
    """First/second-order rates and tie-break rule of one SSQ model."""

    lam: tuple[float, ...]
    mu: tuple[float, ...]
    lam_hat: tuple[float, ...] = ()
    mu_hat: tuple[float, ...] = ()
    tie_break: TieBreakRule = field(default_factory=TieBreakRule)

    def __post_init__(self):
        object.__setattr__(self, "lam", _as_tuple(self.lam))
        object.__setattr__(self, "mu", _as_tuple(self.mu))
        lh = _as_tuple(self.lam_hat) if self.lam_hat else (0.0,) * len(self.lam)
        mh = _as_tuple(self.mu_hat) if self.mu_hat else (0.0,) * len(self.lam)
        object.__setattr__(self, "lam_hat", lh)
        object.__setattr__(self, "mu_hat", mh)

    @property
    def n(self) -> int:
        return len(self.lam)

    def criticality_residual(self) -> float:
        return math.fsum(l / m for l, m in zip(self.lam, self.mu)) - 1.0

    def to_json(self) -> str:
        doc = {
            "n": self.n,
            "lambda": list(self.lam),
            "mu": list(self.mu),
            "lambda_hat": list(self.lam_hat),
            "mu_hat": list(self.mu_hat),
            "tie_break": [
                {"subset": [i + 1 for i in sorted(k)], "p": [p[i] for i in sorted(k)]}
                for k, p in sorted(self.tie_break.table.items(), key=lambda kv: sorted(kv[0]))
            ],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        doc = json.loads(text)
        allowed = {"n", "lambda", "mu", "lambda_hat", "mu_hat", "tie_break"}
        unknown = set(doc) - allowed
        if unknown:
            raise ValueError(f"unknown model fields: {sorted(unknown)}")
        for req in ("n", "lambda", "mu"):
            if req not in doc:
                raise ValueError(f"missing model field {req!r}")
        n = int(doc["n"])
        table = {}
        for entry in doc.get("tie_break", []):
            extra = set(entry) - {"subset", "p"}
            if extra:
                raise ValueError(f"unknown tie_break fields: {sorted(extra)}")
            subset = [int(i) - 1 for i in entry["subset"]]
            p_sub = [float(v) for v in entry["p"]]
            if len(p_sub) != len(subset):
                raise BadTieBreak(f"tie_break entry {entry['subset']}: p has wrong length")
            full = [0.0] * n
            for i, v in zip(subset, p_sub):
                if not 0 <= i < n:
                    raise BadTieBreak(f"tie_break subset index {i + 1} out of range")
                full[i] = v
            table[frozenset(subset)] = tuple(full)
        spec = cls(
            lam=doc["lambda"],
            mu=doc["mu"],
            lam_hat=doc.get("lambda_hat", ()),
            mu_hat=doc.get("mu_hat", ()),
            tie_break=TieBreakRule(table),
        )
        if spec.n != n:
            raise ValueError(f"field n={n} inconsistent with lambda of length {spec.n}")
        return spec


@dataclass(frozen=True)
class ValidationReport:
    residual: float
    issues: tuple[tuple[str, str], ...]  # (error kind, message)

    @property
    def ok(self) -> bool:
        return not self.issues


_ERROR_KINDS = {"NonCritical": NonCritical, "BadRate": BadRate, "BadTieBreak": BadTieBreak}


def validate(spec: ModelSpec) -> ValidationReport:
    """Check rates, criticality and tie-break vectors; never raises."""
    issues: list[tuple[str, str]] = []
    if spec.n < 2:
        issues.append(("BadRate", f"need at least 2 classes, got {spec.n}"))
    if not (len(spec.lam) == len(spec.mu) == len(spec.lam_hat) == len(spec.mu_hat)):
        issues.append(("BadRate", "rate vectors have inconsistent lengths"))
    if any(v <= 0 for v in spec.lam):
        issues.append(("BadRate", f"arrival rates must be positive: {spec.lam}"))
    if any(v <= 0 for v in spec.mu):
        issues.append(("BadRate", f"service rates must be positive: {spec.mu}"))
    residual = spec.criticality_residual() if not issues else float("nan")
    if not issues and abs(residual) > CRITICALITY_TOL:
        issues.append(("NonCritical", f"traffic intensity residual {residual:.3e}"))
    for msg in spec.tie_break.issues(spec.n):
        issues.append(("BadTieBreak", msg))
    return ValidationReport(residual=residual, issues=tuple(issues))


def require_valid(spec: ModelSpec) -> None:
    """Raise the first validation error, if any."""
    report = validate(spec)
    for kind, msg in report.issues:
        raise _ERROR_KINDS[kind](msg)


def diffusion_coefficients(spec: ModelSpec) -> tuple[float, float]:
    """Drift and variance ``(b, sigma2)`` of the limiting radial motion."""
    require_valid(spec)
    b = math.fsum(
        (lh - (l / m) * mh) / m
        for l, m, lh, mh in zip(spec.lam, spec.mu, spec.lam_hat, spec.mu_hat)
    )
    sigma2 = 2.0 * math.fsum(l / (m * m) for l, m in zip(spec.lam, spec.mu))
    return b, sigma2


def tiebreak_table(spec: ModelSpec) -> np.ndarray:
    """Materialize effort vectors for every subset, indexed by bitmask.

    Row ``mask`` holds the effort vector for the tied set whose members are
    the set bits of ``mask``; row 0 is all zeros (idle server).
    """
    n = spec.n
    if n > MAX_CLASSES:
        raise BadRate(f"at most {MAX_CLASSES} classes supported, got {n}")
    table = np.zeros((1 << n, n))
    for mask in range(1, 1 << n):
        subset = frozenset(i for i in range(n) if mask >> i & 1)
        table[mask] = spec.tie_break.vector(subset, n)
    table.setflags(write=False)
    return table


class ScaledModel:
    """Concrete rates at one scale ``r`` plus the workload lattice geometry.

    Immutable after construction; arrays are read-only and instances can be
    shared freely across worker threads.
    """

    def __init__(self, spec: ModelSpec, r: float, mode: str = HOMOGENEOUS):
        require_valid(spec)
        if r < 1:
            raise BadRate(f"scale parameter must be >= 1, got {r}")
        if mode not in (HOMOGENEOUS, GENERAL):
            raise ValueError(f"mode must be {HOMOGENEOUS!r} or {GENERAL!r}")
        r = float(r)
        r2 = r * r
        if mode == HOMOGENEOUS:
            lam_r = np.array([l * r2 for l in spec.lam])
            mu_r = np.array([m * r2 for m in spec.mu])
        else:
            lam_r = np.array([l * r2 + lh * r for l, lh in zip(spec.lam, spec.lam_hat)])
            mu_r = np.array([m * r2 + mh * r for m, mh in zip(spec.mu, spec.mu_hat)])
        if np.any(lam_r <= 0) or np.any(mu_r <= 0):
            raise BadRate(f"scaled rates must stay positive at r={r} (mode={mode})")
        self.spec = spec
        self.r = r
        self.mode = mode
        self.lam_r = lam_r
        self.mu_r = mu_r
        self.steps = r / mu_r  # lattice spacing of the scaled workload, per class
        self.pk_table = tiebreak_table(spec)
        for a in (self.lam_r, self.mu_r, self.steps):
            a.setflags(write=False)

    @property
    def n(self) -> int:
        return self.spec.n

    def __repr__(self):
        return f"ScaledModel(r={self.r}, mode={self.mode!r}, lam_r={self.lam_r}, mu_r={self.mu_r})"


@dataclass(frozen=True)
class StateVector:
    """Queue lengths plus derived workload views at a given scale."""

    Q: np.ndarray

    def __post_init__(self):
        q = np.array(self.Q, dtype=np.int64)  # owned copy; never freezes caller data
        if q.ndim != 1 or np.any(q < 0):
            raise ValueError(f"queue lengths must be a 1-d nonnegative vector: {self.Q}")
        q.setflags(write=False)
        object.__setattr__(self, "Q", q)

    @classmethod
    def zero(cls, n: int) -> "StateVector":
        return cls(np.zeros(n, dtype=np.int64))

    def x_nominal(self, model: ScaledModel) -> np.ndarray:
        """Nominal workload ``Q_i / mu_r_i`` (time units)."""
        return self.Q / model.mu_r

    def x_scaled(self, model: ScaledModel) -> np.ndarray:
        """Scaled nominal workload ``r * Q_i / mu_r_i`` (the lattice point)."""
        return self.Q * model.steps

    def radial(self, model: ScaledModel) -> float:
        """Total scaled nominal workload."""
        return float(np.sum(self.Q * model.steps))


def shortest_set(state: StateVector, model: ScaledModel) -> frozenset[int]:
    """Indices of nonempty queues with minimal nominal workload.

    Comparisons use cross-multiplication ``Q_i * mu_r_j`` vs ``Q_j * mu_r_i``
    so that ties existing on the lattice are detected exactly.  Returns the
    empty set for the empty system.
    """
    q = state.Q
    mu_r = model.mu_r
    best = -1
    members = []
    for i in range(len(q)):
        if q[i] == 0:
            continue
        if best < 0:
            best = i
            members = [i]
            continue
        lhs = q[i] * mu_r[best]
        rhs = q[best] * mu_r[i]
        if lhs < rhs:
            best = i
            members = [i]
        elif lhs == rhs:
            members.append(i)
    return frozenset(members)


def lyapunov_F(x: Sequence[float]) -> float:
    """Total workload minus the largest component; zero exactly on the axes.

    Summing the non-maximal components directly keeps the zero set exact
    even when components differ by many orders of magnitude.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ValueError(f"lyapunov_F requires a nonnegative vector, got {x}")
    imax = int(np.argmax(arr))
    return float(np.sum(np.delete(arr, imax)))


def dist_to_axes(x: Sequence[float]) -> float:
    """Euclidean distance from ``x >= 0`` to the union of coordinate axes.

    Equals ``sqrt(|x|^2 - (max_i x_i)^2)``, evaluated as the norm of the
    non-maximal components so tiny entries are neither absorbed nor lost to
    underflow.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ValueError(f"dist_to_axes requires a nonnegative vector, got {x}")
    imax = int(np.argmax(arr))
    return math.hypot(*np.delete(arr, imax))


def snap_to_lattice(x: Sequence[float], model: ScaledModel) -> np.ndarray:
    """Recover integer queue lengths from a scaled-workload lattice point."""
    arr = np.asarray(x, dtype=float)
    k = np.rint(arr / model.steps)
    err = np.abs(arr - k * model.steps)
    tol = LATTICE_RTOL * np.maximum(1.0, np.abs(arr))
    if np.any(err > tol) or np.any(k < 0):
        raise LatticeMismatch(f"state {arr} is off the lattice with spacings {model.steps}")
    return k.astype(np.int64)


def generator_apply(f: Callable[[np.ndarray], float], x: Sequence[float], model: ScaledModel) -> float:
    """Apply the scaled-workload generator to ``f`` at lattice point ``x``.

    Evaluates ``sum_i lam_r_i (f(x + s_i e_i) - f(x))
    + sum_{i in K(x)} p_i mu_r_i (f(x - s_i e_i) - f(x))`` with ``s_i`` the
    lattice spacing; neighbor states are built from the integer lattice
    coordinates so no rounding accumulates.
    """
    q = snap_to_lattice(x, model)
    base = q * model.steps
    fx = float(f(base))
    kset = shortest_set(StateVector(q), model)
    mask = 0
    for i in kset:
        mask |= 1 << i
    p = model.pk_table[mask]
    total = 0.0
    for i in range(model.n):
        up = base.copy()
        up[i] = (q[i] + 1) * model.steps[i]
        total += model.lam_r[i] * (float(f(up)) - fx)
        if p[i] > 0.0:
            down = base.copy()
            down[i] = (q[i] - 1) * model.steps[i]
            total += p[i] * model.mu_r[i] * (float(f(down)) - fx)
    return total


def permute_spec(spec: ModelSpec, perm: Sequence[int]) -> ModelSpec:
    """Relabel classes so new class ``j`` is old class ``perm[j]``."""
    perm = tuple(int(i) for i in perm)
    if sorted(perm) != list(range(spec.n)):
        raise ValueError(f"{perm} is not a permutation of range({spec.n})")
    inv = [0] * spec.n
    for j, i in enumerate(perm):
        inv[i] = j
    table = {
        frozenset(inv[i] for i in subset): tuple(p[perm[j]] for j in range(spec.n))
        for subset, p in spec.tie_break.table.items()
    }
    pick = lambda v: tuple(v[i] for i in perm)
    return ModelSpec(lam=pick(spec.lam), mu=pick(spec.mu),
                     lam_hat=pick(spec.lam_hat), mu_hat=pick(spec.mu_hat),
                     tie_break=TieBreakRule(table))


def canonical_perm(spec: ModelSpec) -> tuple[int, ...]:
    """Label-invariant class ordering (sorted by rate signature).

    Simulating in this order makes mark frequencies exactly equivariant
    under relabeling whenever classes have distinct signatures; the
    signature includes the all-tied effort share to cover asymmetric
    tie-breaking between otherwise identical classes.
    """
    full = spec.tie_break.vector(frozenset(range(spec.n)), spec.n)
    keys = [
        (spec.lam[i], spec.mu[i], spec.lam_hat[i], spec.mu_hat[i], full[i], i)
        for i in range(spec.n)
    ]
    return tuple(i for *_, i in sorted(keys))


@dataclass(frozen=True)
class WbmParams:
    """Drift, scale and angular distribution of the limiting axis process."""

    b: float
    sigma: float
    q: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "q", _as_tuple(self.q))
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if any(v < 0 for v in self.q) or abs(math.fsum(self.q) - 1.0) > 1e-12:
            raise ValueError(f"q must be a probability vector, got {self.q}")

    @property
    def n(self) -> int:
        return len(self.q)
