"""Discrete replicator maps on the simplex and orbit iteration.

The stable kind multiplies x_k by 1 + f_k - <x, F>. The two zero-sum kinds
(m = 3) use the skew-symmetric payoff matrices returned by
:func:`payoff_matrix`.

All steps are evaluated in a form that uses sum(x) = 1 to avoid the
subtraction ``1 - f_k`` when f_k is close to 1: every factor is written as a
sum of nonnegative terms built from ``F`` and the complement ``1 - F``
supplied by the fitness tree. On the simplex these agree with the textbook
expressions; near the vertices they keep full relative accuracy in each
coordinate, which matters once coordinates drop below the working epsilon.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .arith import DOUBLE, Arithmetic, format_number, log10_abs, to_float
from .errors import DimensionError, DomainError, InvariantViolation, ParameterError, UnsupportedOperation
from .fitness.maps import FitnessMap, _stack_last, from_dict
from .io import atomic_write_json, atomic_write_text, csv_text
from .simplex import SimplexPoint, sample_simplex

KINDS = ("stable", "zero_sum_v1", "zero_sum_v2")
ZERO_SUM = ("zero_sum_v1", "zero_sum_v2")
RANGE_SAMPLES = 1000
_RANGE_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class ReplicatorSystem:
    """A fitness map together with the kind of replicator map it drives."""

    fitness: FitnessMap
    kind: str = "stable"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.fitness.m < 2:
            raise DimensionError("replicator systems need m >= 2")
        if self.kind in ZERO_SUM and self.fitness.m != 3:
            raise DimensionError(f"{self.kind} is defined for m = 3 only, got m = {self.fitness.m}")
        rng = np.random.default_rng(0)
        pts = np.vstack([sample_simplex(rng, self.m, RANGE_SAMPLES), np.full((1, self.m), 1.0 / self.m)])
        vals = self.fitness._eval(pts, DOUBLE)
        if not (np.all(vals > 0) and np.all(vals <= 1 + _RANGE_SLACK)):
            raise DomainError(
                f"fitness range [{vals.min():.6g}, {vals.max():.6g}] is not inside (0, 1]; normalize the map first"
            )

    @property
    def m(self) -> int:
        return self.fitness.m

    @property
    def zero_sum(self) -> bool:
        return self.kind in ZERO_SUM

    def default_precision(self) -> int:
        return 256 if self.zero_sum else 53

    def to_dict(self) -> dict:
        return {"kind": self.kind, "fitness": self.fitness.to_dict()}

    def __eq__(self, other):
        return isinstance(other, ReplicatorSystem) and self.kind == other.kind and self.fitness == other.fitness

    def __hash__(self):
        return hash((self.kind, self.fitness))

    @classmethod
    def from_dict(cls, doc: dict) -> "ReplicatorSystem":
        return cls(from_dict(doc["fitness"]), doc.get("kind", "stable"))


# -- raw (unnormalized) steps on arrays of shape (..., m) --------------------


def raw_step(system: ReplicatorSystem, x, ar: Arithmetic):
    """One map application before renormalization; x may carry batch axes."""
    F = system.fitness._eval(x, ar)
    C = system.fitness.complement(x, ar)
    if system.kind == "stable":
        # 1 + f_k - <x, F> = f_k + sum_i x_i (1 - f_i) on the simplex
        return x * (F + (x * C).sum(axis=-1, keepdims=True))
    return x * zero_sum_factors_from(system.kind, x, F, C)


def zero_sum_factors_from(kind, x, F, C):
    """The three multipliers x_k' / x_k of a zero-sum step."""
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    f1, f2, f3 = F[..., 0], F[..., 1], F[..., 2]
    c1, c2, c3 = C[..., 0], C[..., 1], C[..., 2]
    if kind == "zero_sum_v1":
        # 1 + x2 f1 - x3 f3 = x1 + x2 (1 + f1) + x3 (1 - f3), and cyclically
        g1 = x1 + x2 + x2 * f1 + x3 * c3
        g2 = x2 + x3 + x3 * f2 + x1 * c1
        g3 = x3 + x1 + x1 * f3 + x2 * c2
    else:
        # 1 + x3 f1 - x2 f2 = x1 + x3 (1 + f1) + x2 (1 - f2), and cyclically
        g1 = x1 + x3 + x3 * f1 + x2 * c2
        g2 = x2 + x1 + x1 * f2 + x3 * c3
        g3 = x3 + x2 + x2 * f3 + x1 * c1
    return _stack_last([g1, g2, g3], x)


def zero_sum_factors(system: ReplicatorSystem, x, ar: Arithmetic):
    if not system.zero_sum:
        raise UnsupportedOperation("zero-sum factors need a zero-sum system")
    return zero_sum_factors_from(system.kind, x, system.fitness._eval(x, ar), system.fitness.complement(x, ar))


@dataclass(frozen=True)
class StepResult:
    point: SimplexPoint
    drift: float
    clamped: tuple = ()


def _finish(raw, ar: Arithmetic, step=None):
    """Clamp tiny negatives, renormalize; returns (x, drift, clamped indices)."""
    tol = ar.tol
    clamped = []
    for k in range(raw.shape[-1]):
        v = raw[k]
        if v < 0:
            if v < -tol:
                raise InvariantViolation(f"coordinate {k + 1} became {float(v):.3e} (< -{tol:.3e})", step)
            raw[k] = v * 0
            clamped.append(k + 1)
    total = raw.sum()
    return raw / total, abs(float(total - 1)), tuple(clamped)


def step(system: ReplicatorSystem, x: SimplexPoint) -> StepResult:
    if x.m != system.m:
        raise DimensionError(f"point has m={x.m}, system has m={system.m}")
    ar = x.arith
    with ar.context():
        raw = np.array(raw_step(system, x.coords, ar), dtype=x.coords.dtype)
        out, drift, clamped = _finish(raw, ar)
    return StepResult(SimplexPoint(out, ar.bits), drift, clamped)


def step_stable(system: ReplicatorSystem, x: SimplexPoint) -> SimplexPoint:
    if system.kind != "stable":
        raise UnsupportedOperation(f"step_stable needs a stable system, got {system.kind}")
    return step(system, x).point


def step_zero_sum(system: ReplicatorSystem, x: SimplexPoint) -> SimplexPoint:
    if not system.zero_sum:
        raise UnsupportedOperation(f"step_zero_sum needs a zero-sum system, got {system.kind}")
    return step(system, x).point


def payoff_matrix(system: ReplicatorSystem, x: SimplexPoint) -> np.ndarray:
    """Skew-symmetric 3x3 payoff matrix A(x) with step x_k (1 + (A x)_k)."""
    if not system.zero_sum:
        raise UnsupportedOperation("payoff matrices exist for zero-sum systems only")
    ar = x.arith
    with ar.context():
        f1, f2, f3 = system.fitness._eval(x.coords, ar)
        z = f1 * 0
        if system.kind == "zero_sum_v1":
            rows = [[z, f1, -f3], [-f1, z, f2], [f3, -f2, z]]
        else:
            rows = [[z, -f2, f1], [f2, z, -f3], [-f1, f3, z]]
    return np.array(rows, dtype=x.coords.dtype)


# -- orbits ------------------------------------------------------------------


def region_label(x) -> int:
    """Index 1..6 of the ordering region of a 3-vector; ties go to the lowest index."""
    a, b, c = x[0], x[1], x[2]
    if a >= b >= c:
        return 1
    if a >= c >= b:
        return 2
    if c >= a >= b:
        return 3
    if c >= b >= a:
        return 4
    if b >= c >= a:
        return 5
    return 6


@dataclass(eq=False)
class Orbit:
    """An iterated orbit with per-step diagnostics.

    ``states`` holds full-precision points at ``stored_steps``; ``trace``
    holds every state rounded to double, ``drift[n]`` the pre-renormalization
    drift of the step from state n to n + 1, and ``labels[n]`` (m = 3) the
    ordering region of state n at working precision.
    """

    system: ReplicatorSystem
    precision_bits: int
    steps: int
    thinning: int
    stored_steps: list
    states: list
    trace: np.ndarray
    drift: np.ndarray
    log10_min: np.ndarray
    labels: np.ndarray | None = None
    clamps: list = field(default_factory=list)
    drift_flags: list = field(default_factory=list)
    xi_increases: list = field(default_factory=list)
    wall_time: float = 0.0
    seed: int | None = None

    @property
    def m(self) -> int:
        return self.system.m

    @property
    def flagged(self) -> bool:
        return bool(self.drift_flags)

    @property
    def final(self) -> SimplexPoint:
        return self.states[-1]

    def csv_rows(self):
        for n, x in zip(self.stored_steps, self.states):
            if n == 0:
                continue
            yield [str(n)] + [format_number(v, self.precision_bits) for v in x.coords] + [repr(float(self.drift[n - 1]))]

    def csv(self) -> str:
        header = ["n"] + [f"x{k + 1}" for k in range(self.m)] + ["drift"]
        return csv_text(header, self.csv_rows())

    def metadata(self) -> dict:
        return {
            "system": self.system.to_dict(),
            "precision_bits": self.precision_bits,
            "steps": self.steps,
            "thinning": self.thinning,
            "seed": self.seed,
            "initial": [format_number(v, self.precision_bits) for v in self.states[0].coords],
            "max_drift": float(self.drift.max()) if self.drift.size else 0.0,
            "drift_flags": self.drift_flags[:100],
            "clamps": self.clamps[:100],
            "min_log10_coordinate": float(np.min(self.log10_min)),
            "wall_time_s": self.wall_time,
        }

    def write(self, directory, stem: str = "orbit", extra: dict | None = None):
        """Orbit CSV plus a JSON sidecar; both written atomically."""
        meta = self.metadata()
        if extra:
            meta.update(extra)
        csv_path = atomic_write_text(f"{directory}/{stem}.csv", self.csv())
        json_path = atomic_write_json(f"{directory}/{stem}.json", meta)
        return csv_path, json_path


def iterate(
    system: ReplicatorSystem,
    x0: SimplexPoint,
    n: int,
    precision_bits: int | None = None,
    thinning: int = 1,
) -> Orbit:
    """Iterate the map n times; deterministic in its arguments."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    if thinning < 1:
        raise ParameterError("thinning must be >= 1")
    if x0.m != system.m:
        raise DimensionError(f"initial point has m={x0.m}, system has m={system.m}")
    bits = precision_bits or system.default_precision()
    ar = Arithmetic(bits)
    tol = ar.tol
    m = system.m
    track_regions = m == 3
    track_xi = system.zero_sum
    start = time.perf_counter()

    trace = np.empty((n + 1, m))
    drift = np.empty(n)
    log10_min = np.empty(n + 1)
    labels = np.empty(n + 1, dtype=np.int8) if track_regions else None
    stored_steps, states = [], []
    clamps, drift_flags, xi_up = [], [], []

    with ar.context():
        x = ar.array(list(x0.coords))
        one = ar.scalar(1)
        xi_prev = x[0] * x[1] * x[2] if track_xi else None
        for k in range(n + 1):
            trace[k] = [float(v) for v in x]
            low = min(x)
            log10_min[k] = log10_abs(low) if ar.extended else (math.log10(low) if low > 0 else -math.inf)
            if track_regions:
                labels[k] = region_label(x)
            if k % thinning == 0 or k == n:
                stored_steps.append(k)
                states.append(SimplexPoint(x.copy(), bits))
            if k == n:
                break
            raw = raw_step(system, x, ar)
            for j in range(m):
                if raw[j] < 0:
                    if raw[j] < -tol:
                        raise InvariantViolation(
                            f"coordinate {j + 1} became {float(raw[j]):.3e} (< -{tol:.3e})", k + 1
                        )
                    clamps.append([k + 1, j + 1, float(raw[j])])
                    raw[j] = raw[j] * 0
            total = raw.sum()
            d = abs(float(total - one))
            drift[k] = d
            if d > tol:
                drift_flags.append(k + 1)
            x = raw / total
            if track_xi:
                xi = x[0] * x[1] * x[2]
                if xi > xi_prev * (1 + tol):
                    xi_up.append(k + 1)
                xi_prev = xi

    return Orbit(
        system=system,
        precision_bits=bits,
        steps=n,
        thinning=thinning,
        stored_steps=stored_steps,
        states=states,
        trace=trace,
        drift=drift,
        log10_min=log10_min,
        labels=labels,
        clamps=clamps,
        drift_flags=drift_flags,
        xi_increases=xi_up,
        wall_time=time.perf_counter() - start,
    )


def iterate_batch(system: ReplicatorSystem, x: np.ndarray, n: int) -> np.ndarray:
    """Advance a batch of double-precision points (rows) n steps; returns the final batch."""
    x = np.array(x, dtype=np.float64)
    for _ in range(n):
        x = batch_step(system, x)
    return x


def batch_step(system: ReplicatorSystem, x: np.ndarray) -> np.ndarray:
    """One renormalized double-precision step for every row of x."""
    raw = raw_step(system, x, DOUBLE)
    if np.any(raw < -DOUBLE.tol):
        bad = np.argwhere(raw < -DOUBLE.tol)[0]
        raise InvariantViolation(f"row {bad[0]} coordinate {bad[1] + 1} became {raw[tuple(bad)]:.3e}")
    raw = np.maximum(raw, 0.0)
    return raw / raw.sum(axis=-1, keepdims=True)


__all__ = [
    "KINDS",
    "ReplicatorSystem",
    "StepResult",
    "Orbit",
    "raw_step",
    "step",
    "step_stable",
    "step_zero_sum",
    "payoff_matrix",
    "zero_sum_factors",
    "region_label",
    "iterate",
    "iterate_batch",
    "batch_step",
    "to_float",
]
