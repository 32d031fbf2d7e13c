"""Diagnostics for zero-sum orbits on the 2-simplex.

Covers the product Lyapunov function xi = x1 x2 x3 and its one-step
factor zeta, the six ordering regions G1..G6 and their unions U1..U3,
trapping/escaping run lengths and their gap statistics, and repeated time
averages with an oscillation-based divergence verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .arith import format_number, to_float
from .errors import DimensionError, InsufficientDataError, PreconditionError, UnsupportedOperation
from .io import atomic_write_text, csv_text
from .replicator import Orbit, ReplicatorSystem, raw_step, region_label, step, zero_sum_factors
from .simplex import SimplexPoint, sample_simplex

DELTA0 = 0.05
THETA = 0.1
THETA_CONV = 1e-6
MIN_EPOCHS = 3
MIN_AVERAGE_LENGTH = 1000
# a trailing-window oscillation counts as non-shrinking above this share of the preceding window's
NON_SHRINK_RATIO = 0.5
CENTER = np.full(3, 1.0 / 3.0)


def _require_m3(x):
    if len(x) != 3:
        raise DimensionError(f"needs m = 3, got m = {len(x)}")


def xi(x: SimplexPoint):
    """x1 x2 x3 at the point's precision."""
    _require_m3(x.coords)
    with x.arith.context():
        c = x.coords
        return c[0] * c[1] * c[2]


def zeta(system: ReplicatorSystem, x: SimplexPoint):
    """Product of the three zero-sum step multipliers, so that xi(R x) = xi(x) zeta(x)."""
    if not system.zero_sum:
        raise UnsupportedOperation("zeta is defined for zero-sum systems only")
    ar = x.arith
    with ar.context():
        g = zero_sum_factors(system, x.coords, ar)
        return g[0] * g[1] * g[2]


def region_of(x, tie_tol: float = 0.0) -> int:
    """Ordering region 1..6; comparisons within tie_tol count as ties and go to the lowest index."""
    c = x.coords if isinstance(x, SimplexPoint) else x
    _require_m3(c)
    if tie_tol == 0:
        return region_label(c)
    a, b, d = (float(v) for v in c)

    def ge(u, v):
        return u >= v - tie_tol

    tests = [
        ge(a, b) and ge(b, d),
        ge(a, d) and ge(d, b),
        ge(d, a) and ge(a, b),
        ge(d, b) and ge(b, a),
        ge(b, d) and ge(d, a),
        ge(b, a) and ge(a, d),
    ]
    return tests.index(True) + 1


@dataclass(frozen=True)
class RegionPartition:
    """U0 is the open l1-ball of radius u0_radius around the center; Ui = (G_{2i-1} u G_{2i}) minus U0."""

    u0_radius: float = DELTA0

    def __post_init__(self):
        if not self.u0_radius > 0:
            raise ValueError("u0_radius must be positive")

    def label(self, x, tie_tol: float = 0.0) -> int:
        c = x.coords if isinstance(x, SimplexPoint) else x
        if np.abs(to_float(np.asarray(c)) - CENTER).sum() < self.u0_radius:
            return 0
        return (region_of(c, tie_tol) + 1) // 2

    def labels(self, orbit: Orbit) -> np.ndarray:
        """U-labels 0..3 of every state of an orbit."""
        g = orbit_regions(orbit)
        u = ((g + 1) // 2).astype(np.int8)
        u[np.abs(orbit.trace - CENTER).sum(axis=1) < self.u0_radius] = 0
        return u


def u_membership(x, partition: RegionPartition = RegionPartition()) -> int:
    """0 for U0, otherwise i for Ui."""
    return partition.label(x)


def orbit_regions(orbit: Orbit) -> np.ndarray:
    if orbit.m != 3:
        raise DimensionError(f"needs m = 3, got m = {orbit.m}")
    if orbit.labels is not None:
        return orbit.labels.astype(np.int8)
    return np.array([region_label(row) for row in orbit.trace], dtype=np.int8)


def transient_end(orbit: Orbit, partition: RegionPartition) -> int | None:
    """First step outside U0 with some coordinate below u0_radius, or None."""
    u = partition.labels(orbit)
    near = (orbit.trace.min(axis=1) < partition.u0_radius) & (u != 0)
    hits = np.nonzero(near)[0]
    return int(hits[0]) if hits.size else None


# -- run lengths ---------------------------------------------------------------


def run_lengths(indicator) -> list:
    """(trapping, escaping) block pairs of a 0/1 sequence, starting at its first 1.

    A trailing block that the sequence cuts off is still reported; a missing
    final escape block is reported as None.
    """
    ind = np.asarray(indicator, dtype=bool)
    ones = np.nonzero(ind)[0]
    if ones.size == 0:
        return []
    ind = ind[ones[0]:]
    change = np.nonzero(np.diff(ind.astype(np.int8)))[0] + 1
    edges = np.concatenate([[0], change, [ind.size]])
    blocks = np.diff(edges).tolist()
    pairs = []
    for i in range(0, len(blocks), 2):
        pairs.append((blocks[i], blocks[i + 1] if i + 1 < len(blocks) else None))
    return pairs


def _blocks(labels):
    change = np.nonzero(np.diff(labels))[0] + 1
    starts = np.concatenate([[0], change])
    lengths = np.diff(np.concatenate([starts, [labels.size]]))
    return labels[starts], lengths


@dataclass
class TrappingRecord:
    """Trapping/escaping blocks of one region Ui.

    ``runs`` are the (p, q) pairs of its indicator sequence (q is None for a
    cut-off final block); ``epochs`` are complete (p, q, r) triples where q
    and r are the sojourns in the next two regions of the cycle.
    """

    region: int
    start: int
    length: int
    runs: list
    epochs: list = field(default_factory=list)
    lambda_hat: float | None = None
    mu_hat: float | None = None
    degenerate: bool = False
    reason: str = ""

    @property
    def complete_epochs(self) -> int:
        return len(self.epochs)

    def ratios(self):
        """Per-epoch (lambda_n, mu_n) for n >= 1 (1-based; undefined for the first epoch)."""
        # a block cut off by the end of the orbit is not an observed length:
        # p_n counts once q_n has started, q_n once p_{n+1} has started
        out = []
        total = 0
        for n, (p, q) in enumerate(self.runs):
            if q is None:
                break
            closed = n + 1 < len(self.runs)
            if n >= 1:
                out.append((p / total, q / (total + p) if closed else None))
            total += p + q
        return out

    def csv(self) -> str:
        rows = []
        ratios = self.ratios()
        for n, (p, q, r) in enumerate(self.epochs):
            lam, mu = ratios[n - 1] if n >= 1 and n - 1 < len(ratios) else (None, None)
            rows.append([str(n + 1), str(p), str(q), str(r), _fmt(lam), _fmt(mu)])
        return csv_text(["epoch", "p", "q", "r", "lambda_hat", "mu_hat"], rows)

    def to_dict(self) -> dict:
        return {
            "region": self.region,
            "start": self.start,
            "length": self.length,
            "runs": [list(r) for r in self.runs],
            "epochs": [list(e) for e in self.epochs],
            "complete_epochs": self.complete_epochs,
            "lambda_hat": self.lambda_hat,
            "mu_hat": self.mu_hat,
            "degenerate": self.degenerate,
            "reason": self.reason,
        }


def _fmt(v):
    return "" if v is None else repr(float(v))


def _finish_record(rec: TrappingRecord) -> TrappingRecord:
    ratios = rec.ratios()
    lams = [lam for lam, _ in ratios]
    mus = [mu for _, mu in ratios if mu is not None]
    rec.lambda_hat = min(lams) if lams else None
    rec.mu_hat = min(mus) if mus else None
    return rec


def records_from_epochs(epochs) -> dict:
    """Records for U1, U2, U3 from a table of cycle epochs (p_n, q_n, r_n).

    Region 2 sees the rotated triples (q_n, r_n, p_{n+1}) and region 3 sees
    (r_n, p_{n+1}, q_{n+1}).
    """
    flat = [v for e in epochs for v in e]
    records = {}
    for i in range(3):
        seq = flat[i:]
        trip = [tuple(seq[j : j + 3]) for j in range(0, len(seq) - 2, 3)]
        runs = [(p, q + r) for p, q, r in trip]
        rest = seq[3 * len(trip) :]
        if rest:
            runs.append((rest[0], sum(rest[1:]) if len(rest) > 1 else None))
        records[i + 1] = _finish_record(
            TrappingRecord(region=i + 1, start=0, length=sum(seq), runs=runs, epochs=trip)
        )
    return records


def epoch_table(orbit: Orbit, partition: RegionPartition = RegionPartition()) -> dict:
    """Sojourn blocks after the transient, without any sufficiency requirement."""
    u = partition.labels(orbit)
    t0 = transient_end(orbit, partition)
    info = {"transient_end": t0, "start": None, "blocks": [], "u0_reentries": 0}
    if t0 is None:
        return info
    entries = np.nonzero((u[t0 + 1 :] == 1) & (u[t0:-1] != 1))[0]
    if entries.size == 0:
        return info
    start = int(t0 + 1 + entries[0])
    info["start"] = start
    vals, lengths = _blocks(u[start:])
    info["blocks"] = list(zip(vals.tolist(), lengths.tolist()))
    info["u0_reentries"] = int(np.sum(vals == 0))
    return info


def cycle_after(i: int, kind: str) -> list:
    """The two U-regions visited after Ui, in order, along the zero-sum cycle."""
    if kind == "zero_sum_v2":
        return [(i + 1) % 3 + 1, i % 3 + 1]
    return [i % 3 + 1, (i + 1) % 3 + 1]


def trapping_runs(orbit: Orbit, partition: RegionPartition = RegionPartition()) -> dict:
    """TrappingRecord for U1, U2, U3 of an m = 3 orbit.

    The analysis starts at the first entry into U1 after the transient. An
    orbit that never changes region yields degenerate records; one with
    transitions but fewer than three complete epochs raises
    InsufficientDataError.
    """
    info = epoch_table(orbit, partition)
    u = partition.labels(orbit)
    if info["start"] is None:
        t0 = info["transient_end"]
        t0 = 0 if t0 is None else t0
        tail = u[t0:]
        if np.all(tail == tail[0]):
            records = {}
            for i in (1, 2, 3):
                runs = [(int(tail.size), None)] if tail[0] == i else []
                records[i] = TrappingRecord(
                    region=i,
                    start=t0,
                    length=int(tail.size),
                    runs=runs,
                    degenerate=True,
                    reason="orbit never changes region after the transient",
                )
            return records
        raise InsufficientDataError("no entry into U1 after the transient")
    start = info["start"]
    records = {}
    n = u.size
    for i in (1, 2, 3):
        ind = u[start:] == i
        first = np.nonzero(ind)[0]
        if first.size == 0:
            raise InsufficientDataError(f"orbit never enters U{i} after the transient")
        s = start + int(first[0])
        runs = run_lengths(u[s:] == i)
        rec = TrappingRecord(region=i, start=s, length=n - s, runs=runs)
        # complete epochs: own sojourn followed by the next two, closed by re-entry
        vals, lengths = _blocks(u[s:])
        epochs = []
        j = 0
        nxt = cycle_after(i, orbit.system.kind)
        while j + 3 < len(vals):
            if vals[j] == i and vals[j + 1] == nxt[0] and vals[j + 2] == nxt[1] and vals[j + 3] == i:
                epochs.append((int(lengths[j]), int(lengths[j + 1]), int(lengths[j + 2])))
                j += 3
            else:
                # out-of-cycle block (U0 re-entry or a skipped region): close the epoch bookkeeping here
                k = j + 1
                while k < len(vals) and vals[k] != i:
                    k += 1
                j = k
        rec.epochs = epochs
        records[i] = _finish_record(rec)
    short = [i for i, r in records.items() if r.complete_epochs < MIN_EPOCHS]
    if short:
        counts = {i: records[i].complete_epochs for i in (1, 2, 3)}
        raise InsufficientDataError(
            f"fewer than {MIN_EPOCHS} complete epochs in U{short} (observed {counts})"
        )
    return records


@dataclass
class GapCertificate:
    passed: bool
    c_hat: float | None
    per_region: dict
    reason: str = ""

    def to_dict(self) -> dict:
        return {"passed": self.passed, "c_hat": self.c_hat, "per_region": self.per_region, "reason": self.reason}


def c_hat_of(records: dict) -> float | None:
    """min over regions and epochs n >= 1 of p_{n+1} / sum_{k<=n} (p_k + q_k + r_k)."""
    best = None
    for rec in records.values():
        total = 0
        for n, (p, q, r) in enumerate(rec.epochs):
            if n >= 1:
                v = p / total
                best = v if best is None else min(best, v)
            total += p + q + r
    return best


def gap_certificate(records: dict) -> GapCertificate:
    per = {}
    reasons = []
    for i, rec in sorted(records.items()):
        per[i] = {
            "lambda_hat": rec.lambda_hat,
            "mu_hat": rec.mu_hat,
            "complete_epochs": rec.complete_epochs,
            "degenerate": rec.degenerate,
        }
        if rec.degenerate:
            reasons.append(f"U{i}: degenerate ({rec.reason})")
        elif rec.complete_epochs < MIN_EPOCHS:
            reasons.append(f"U{i}: only {rec.complete_epochs} complete epochs")
        elif not (rec.lambda_hat and rec.lambda_hat > 0 and rec.mu_hat and rec.mu_hat > 0):
            reasons.append(f"U{i}: non-positive gap estimate")
    c = c_hat_of(records)
    if not reasons and not (c and c > 0):
        reasons.append("no positive growth constant")
    return GapCertificate(not reasons, c, per, "; ".join(reasons))


# -- itinerary -----------------------------------------------------------------


def successor(g: int, kind: str) -> int:
    """Next ordering region along the cycle of a zero-sum map."""
    return g % 6 + 1 if kind == "zero_sum_v1" else (g - 2) % 6 + 1


@dataclass
class ItineraryCertificate:
    passed: bool
    kind: str
    transient_end: int | None
    transitions: int
    violations: list
    u0_reentry_steps: list
    u0_radius: float

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "kind": self.kind,
            "transient_end": self.transient_end,
            "transitions": self.transitions,
            "violations": self.violations[:100],
            "violation_count": len(self.violations),
            "u0_reentry_steps": self.u0_reentry_steps[:100],
            "u0_reentry_flag": bool(self.u0_reentry_steps),
            "u0_radius": self.u0_radius,
        }


def itinerary_certificate(orbit: Orbit, partition: RegionPartition = RegionPartition()) -> ItineraryCertificate:
    """Every region change after the transient must go to the cyclic successor."""
    kind = orbit.system.kind
    if kind not in ("zero_sum_v1", "zero_sum_v2"):
        raise UnsupportedOperation("itinerary certificates need a zero-sum orbit")
    if orbit.trace.shape[0] < MIN_AVERAGE_LENGTH:
        raise PreconditionError(f"orbit needs at least {MIN_AVERAGE_LENGTH} states")
    g = orbit_regions(orbit)
    t0 = transient_end(orbit, partition)
    if t0 is None:
        return ItineraryCertificate(False, kind, None, 0, [{"step": None, "reason": "transient never ends"}], [], partition.u0_radius)
    a, b = g[t0:-1], g[t0 + 1 :]
    moved = a != b
    succ = np.array([0] + [successor(v, kind) for v in range(1, 7)], dtype=np.int8)
    bad = np.nonzero(moved & (b != succ[a]))[0]
    violations = [{"step": int(t0 + 1 + k), "from": int(a[k]), "to": int(b[k])} for k in bad]
    u0 = np.nonzero(np.abs(orbit.trace[t0:] - CENTER).sum(axis=1) < partition.u0_radius)[0]
    return ItineraryCertificate(
        passed=not violations,
        kind=kind,
        transient_end=t0,
        transitions=int(moved.sum()),
        violations=violations,
        u0_reentry_steps=[int(t0 + k) for k in u0],
        u0_radius=partition.u0_radius,
    )


# -- repeated averages -----------------------------------------------------------


class TimeAverageStack:
    """Repeated time averages A^(1..s_max) of a sequence of simplex points.

    A^(1)_n = (1/n) sum_{k<n} x_k and A^(s)_n = (1/n) sum_{k<=n} A^(s-1)_k.
    Values are kept for every n so that window statistics can be taken
    afterwards; ``push`` extends all levels by one term.
    """

    def __init__(self, s_max: int, m: int):
        if s_max < 1:
            raise ValueError("s_max must be >= 1")
        self.s_max = int(s_max)
        self.m = int(m)
        # sums are kept relative to each level's first term, so constant input averages exactly
        self._anchor = None
        self._sums = np.zeros((self.s_max, self.m))
        self._chunks = []
        self._pending = []
        self.n = 0

    def push(self, x) -> np.ndarray:
        """Append x_n; returns the new (s_max, m) block A^(s)_{n+1}."""
        self.n += 1
        level = np.asarray(x, dtype=np.float64)
        if self._anchor is None:
            self._anchor = np.tile(level, (self.s_max, 1))
        out = np.empty((self.s_max, self.m))
        for s in range(self.s_max):
            self._sums[s] += level - self._anchor[s]
            level = self._sums[s] / self.n + self._anchor[s]
            out[s] = level
        self._pending.append(out)
        return out

    def extend(self, xs: np.ndarray) -> None:
        """Append many points at once (vectorized cumulative sums)."""
        xs = np.asarray(xs, dtype=np.float64)
        if xs.size == 0:
            return
        self._flush()
        if self._anchor is None:
            self._anchor = np.tile(xs[0], (self.s_max, 1))
        k = np.arange(self.n + 1, self.n + xs.shape[0] + 1, dtype=np.float64)[:, None]
        block = np.empty((xs.shape[0], self.s_max, self.m))
        level = xs
        for s in range(self.s_max):
            csum = np.cumsum(level - self._anchor[s], axis=0) + self._sums[s]
            self._sums[s] = csum[-1]
            level = csum / k + self._anchor[s]
            block[:, s] = level
        self._chunks.append(block)
        self.n += xs.shape[0]

    def _flush(self):
        if self._pending:
            self._chunks.append(np.array(self._pending))
            self._pending = []

    @property
    def series(self) -> np.ndarray:
        """Array of shape (n, s_max, m); row n-1 holds A^(s)_n."""
        self._flush()
        if not self._chunks:
            return np.empty((0, self.s_max, self.m))
        if len(self._chunks) > 1:
            self._chunks = [np.concatenate(self._chunks)]
        return self._chunks[0]

    def level(self, s: int) -> np.ndarray:
        return self.series[:, s - 1]

    def csv(self, thinning: int = 1) -> str:
        series = self.series
        rows = []
        for n in range(1, self.n + 1):
            if n % thinning and n != self.n:
                continue
            for s in range(self.s_max):
                rows.append([str(n), str(s + 1)] + [repr(float(v)) for v in series[n - 1, s]])
        return csv_text(["n", "s"] + [f"a{k + 1}" for k in range(self.m)], rows)


def repeated_averages(orbit: Orbit, s_max: int = 3) -> TimeAverageStack:
    stack = TimeAverageStack(s_max, orbit.m)
    stack.extend(orbit.trace)
    return stack


@dataclass
class DivergenceReport:
    verdict: str
    n: int
    window: list
    osc: dict
    previous_osc: dict
    theta: float
    theta_conv: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _osc(series, lo, hi):
    w = series[lo - 1 : hi]
    return (w.max(axis=0) - w.min(axis=0)).tolist()


def divergence_report(
    stack: TimeAverageStack,
    window_fraction: float = 0.5,
    theta: float = THETA,
    theta_conv: float = THETA_CONV,
) -> DivergenceReport:
    """Oscillation of each averaging level over the trailing window [ceil((1-w)N), N].

    ``historic`` needs every coordinate of osc_1 at or above theta and, for
    each s, a trailing oscillation above theta_conv that keeps at least
    NON_SHRINK_RATIO of the oscillation over the preceding window of the same
    geometric proportion. ``convergent`` means every coordinate of osc_1 is
    at most theta_conv.
    """
    if not 0 < window_fraction < 1:
        raise ValueError("window_fraction must lie in (0, 1)")
    N = stack.n
    if N < MIN_AVERAGE_LENGTH:
        raise PreconditionError(f"need at least {MIN_AVERAGE_LENGTH} averages, got {N}")
    lo = max(1, math.ceil((1 - window_fraction) * N))
    prev_lo = max(1, math.ceil((1 - window_fraction) * lo))
    osc, prev = {}, {}
    for s in range(1, stack.s_max + 1):
        series = stack.level(s)
        osc[s] = _osc(series, lo, N)
        prev[s] = _osc(series, prev_lo, lo)
    if max(osc[1]) <= theta_conv:
        verdict = "convergent"
    elif min(osc[1]) >= theta and all(
        min(osc[s]) > theta_conv
        and all(a >= NON_SHRINK_RATIO * b for a, b in zip(osc[s], prev[s]))
        for s in osc
    ):
        verdict = "historic"
    else:
        verdict = "inconclusive"
    return DivergenceReport(verdict, N, [lo, N], osc, prev, theta, theta_conv)


# -- pointwise checks --------------------------------------------------------------


@dataclass
class DescentReport:
    samples: int
    precision_bits: int
    increases: int
    max_identity_error: float
    max_zeta_outside_u0: float
    worst_point: list

    @property
    def passed(self) -> bool:
        return self.increases == 0

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["passed"] = self.passed
        return out


def xi_descent_check(
    system: ReplicatorSystem,
    samples: int = 10_000,
    seed: int = 0,
    precision_bits: int = 53,
    partition: RegionPartition = RegionPartition(),
) -> DescentReport:
    """xi(R x) <= xi(x) and the factorization xi(R x) = xi(x) zeta(x) at random simplex points.

    Also reports the largest zeta outside U0 (the contraction factor rho).
    """
    if not system.zero_sum:
        raise UnsupportedOperation("xi descent applies to zero-sum systems")
    rng = np.random.default_rng(seed)
    pts = sample_simplex(rng, 3, samples)
    increases = 0
    worst_err = 0.0
    worst_pt = None
    rho = 0.0
    for row in pts:
        x = SimplexPoint.from_coords(row, precision_bits)
        ar = x.arith
        res = step(system, x)
        with ar.context():
            before = xi(x)
            after = xi(res.point)
            z = zeta(system, x)
            err = float(abs(after - before * z))
        if after > before:
            increases += 1
            worst_pt = row.tolist()
        worst_err = max(worst_err, err)
        if partition.label(row) != 0:
            rho = max(rho, float(z))
    return DescentReport(samples, precision_bits, increases, worst_err, rho, worst_pt or [])


def raw_drift(system: ReplicatorSystem, pts: np.ndarray, precision_bits: int = 53) -> np.ndarray:
    """|sum of the unnormalized step - 1| at each row of pts."""
    from .arith import Arithmetic

    ar = Arithmetic(precision_bits)
    out = np.empty(len(pts))
    with ar.context():
        for i, row in enumerate(pts):
            x = SimplexPoint.from_coords(row, precision_bits).coords
            out[i] = abs(float(raw_step(system, x, ar).sum() - 1))
    return out


def write_trapping_csvs(records: dict, directory) -> list:
    return [atomic_write_text(f"{directory}/trapping_U{i}.csv", rec.csv()) for i, rec in sorted(records.items())]


__all__ = [
    "DELTA0",
    "THETA",
    "THETA_CONV",
    "xi",
    "zeta",
    "region_of",
    "RegionPartition",
    "u_membership",
    "transient_end",
    "run_lengths",
    "TrappingRecord",
    "records_from_epochs",
    "epoch_table",
    "cycle_after",
    "trapping_runs",
    "GapCertificate",
    "gap_certificate",
    "c_hat_of",
    "successor",
    "ItineraryCertificate",
    "itinerary_certificate",
    "TimeAverageStack",
    "repeated_averages",
    "DivergenceReport",
    "divergence_report",
    "DescentReport",
    "xi_descent_check",
    "raw_drift",
    "write_trapping_csvs",
    "format_number",
]
