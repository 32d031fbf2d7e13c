"""Rest points, Nash tests, empirical stability probes and the folk-theorem certificate.

Everything here works on stable-kind systems in double precision, except
that the rest/Nash residuals honour the precision of the point passed in.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .arith import DOUBLE, to_float
from .errors import DomainError, ParameterError, PreconditionError, UnsupportedOperation
from .replicator import ReplicatorSystem, batch_step, step
from .simplex import Face, SimplexPoint, face_center, faces, max_ind, sample_simplex

MAX_CANDIDATE_M = 12
MAX_FOLK_M = 8
PROBE_RADIUS = 1e-3
PROBE_COUNT = 64
PROBE_HORIZON = 100_000
ESCAPE_FACTOR = 10.0
STAY_FACTOR = 3.0
CONVERGE_TOL = 1e-8
CONVERGE_RUN = 100
TIE_TOL = 1e-12
REST_TOL = 1e-10

STABLE = "stable_asymptotic"
UNSTABLE = "unstable"
UNDETERMINED = "undetermined"


def worker_count() -> int:
    """Upper bound on worker parallelism from REPLIDYN_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("REPLIDYN_THREADS", "1")))
    except ValueError:
        return 1


def _require_stable(system: ReplicatorSystem):
    if system.kind != "stable":
        raise UnsupportedOperation(f"needs a stable-kind system, got {system.kind}")


@dataclass(frozen=True)
class Residual:
    """A boolean verdict carrying the residual it was decided on."""

    ok: bool
    residual: float

    def __bool__(self):
        return self.ok


def rest_point_candidates(m: int, precision_bits: int = 53) -> list:
    """All 2^m - 1 face centers."""
    if not 2 <= m <= MAX_CANDIDATE_M:
        raise ParameterError(f"candidate enumeration needs 2 <= m <= {MAX_CANDIDATE_M}, got {m}")
    return [face_center(f, precision_bits) for f in faces(m)]


def rest_residual(system: ReplicatorSystem, x: SimplexPoint) -> float:
    """||R(x) - x||_1."""
    y = step(system, x).point
    ar = x.arith
    with ar.context():
        return float(np.abs(y.coords - x.coords).sum())


def is_rest(system: ReplicatorSystem, x: SimplexPoint, tol: float = REST_TOL) -> Residual:
    r = rest_residual(system, x)
    return Residual(r <= tol, r)


def nash_residual(system: ReplicatorSystem, x: SimplexPoint) -> float:
    """max_k f_k(x) - <x, F(x)>; nonpositive exactly at Nash equilibria."""
    ar = x.arith
    with ar.context():
        F = system.fitness._eval(x.coords, ar)
        return float(max(F) - (x.coords * F).sum())


def is_nash(system: ReplicatorSystem, x: SimplexPoint, tol: float = TIE_TOL) -> Residual:
    """Vertex test: <y, F(x)> is linear in y, so checking y = e_k suffices."""
    _require_stable(system)
    r = nash_residual(system, x)
    return Residual(r <= tol, r)


def is_strict_nash(system: ReplicatorSystem, x: SimplexPoint, tol: float = TIE_TOL) -> bool:
    _require_stable(system)
    xf = x.as_float()
    k = int(np.argmax(xf))
    if np.abs(xf - np.eye(x.m)[k]).sum() > tol:
        return False
    vertex = SimplexPoint.vertex(k + 1, x.m, x.precision_bits)
    F = to_float(system.fitness._eval(vertex.coords, vertex.arith))
    return bool(all(F[k] > F[i] + tol for i in range(x.m) if i != k))


def predict_limit(x0: SimplexPoint, tol: float = TIE_TOL) -> SimplexPoint:
    """Center of the face spanned by the maximal coordinates of x0 within its support."""
    return face_center(Face(max_ind(x0, x0.support_face(), tol), x0.m), x0.precision_bits)


def lyapunov_M(x: SimplexPoint, face: Face, k: int) -> float:
    """max_{i in face} x_i - x_k."""
    if k not in face.indices:
        raise ParameterError(f"index {k} is not in face {face.sorted()}")
    if not x.support() <= face.indices:
        raise DomainError(f"support {sorted(x.support())} is not inside face {face.sorted()}")
    xf = x.as_float()
    return float(max(xf[i - 1] for i in face.indices) - xf[k - 1])


# -- stability probes --------------------------------------------------------


@dataclass
class ProbeVerdict:
    point: list
    verdict: str
    probes: int
    converged: int
    escaped: int
    max_distance: float
    steps_run: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def probe_starts(x: np.ndarray, radius: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points of the l1-ball of the given radius around x, intersected with the simplex.

    Box rejection in the tangent plane: the first m - 1 offsets are uniform
    in [-radius, radius], the last one restores a zero sum.
    """
    m = x.size
    out = []
    while len(out) < count:
        d = rng.uniform(-radius, radius, size=(20_000, m - 1))
        d = np.hstack([d, -d.sum(axis=1, keepdims=True)])
        y = x + d
        ok = (np.abs(d).sum(axis=1) <= radius) & np.all(y >= 0, axis=1) & np.any(d != 0, axis=1)
        out.extend(y[ok][: count - len(out)])
    y = np.array(out)
    return y / y.sum(axis=1, keepdims=True)


def probe_many(
    system: ReplicatorSystem,
    points,
    radius: float = PROBE_RADIUS,
    probes: int = PROBE_COUNT,
    horizon: int = PROBE_HORIZON,
    seed: int = 0,
    tol: float = CONVERGE_TOL,
) -> list:
    """Stability verdicts for several rest points, iterated as one batch.

    A point is unstable as soon as one of its probes leaves the escape
    shell; stable_asymptotic if every probe stays within STAY_FACTOR * radius
    and converges; undetermined otherwise.
    """
    _require_stable(system)
    centers = [to_float(p.coords if isinstance(p, SimplexPoint) else np.asarray(p)) for p in points]
    starts, owner = [], []
    for idx, c in enumerate(centers):
        rng = np.random.default_rng([seed, idx])
        starts.append(probe_starts(c, radius, probes, rng))
        owner.extend([idx] * probes)
    X = np.vstack(starts)
    owner = np.array(owner)
    target = np.array(centers)[owner]
    alive = np.ones(len(X), dtype=bool)
    run = np.zeros(len(X), dtype=np.int64)
    max_dist = np.abs(X - target).sum(axis=1)
    converged = np.zeros(len(X), dtype=bool)
    escaped_pt = np.zeros(len(centers), dtype=bool)
    escaped_rows = np.zeros(len(X), dtype=bool)
    steps = np.zeros(len(centers), dtype=np.int64)
    for n in range(1, horizon + 1):
        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        X[idx] = batch_step(system, X[idx])
        steps[np.unique(owner[idx])] = n
        dist = np.abs(X[idx] - target[idx]).sum(axis=1)
        max_dist[idx] = np.maximum(max_dist[idx], dist)
        run[idx] = np.where(dist <= tol, run[idx] + 1, 0)
        out = dist > ESCAPE_FACTOR * radius
        if out.any():
            escaped_rows[idx[out]] = True
            escaped_pt[owner[idx[out]]] = True
        done = run[idx] >= CONVERGE_RUN
        converged[idx[done]] = True
        alive[idx[done]] = False
        # one escape settles the verdict for its point
        alive &= ~escaped_pt[owner]
    verdicts = []
    for i, c in enumerate(centers):
        rows = owner == i
        if escaped_pt[i]:
            verdict = UNSTABLE
        elif converged[rows].all() and max_dist[rows].max() <= STAY_FACTOR * radius:
            verdict = STABLE
        else:
            verdict = UNDETERMINED
        verdicts.append(
            ProbeVerdict(
                point=c.tolist(),
                verdict=verdict,
                probes=int(rows.sum()),
                converged=int(converged[rows].sum()),
                escaped=int(escaped_rows[rows].sum()),
                max_distance=float(max_dist[rows].max()),
                steps_run=int(steps[i]),
            )
        )
    return verdicts


def probe_stability(
    system: ReplicatorSystem,
    x: SimplexPoint,
    radius: float = PROBE_RADIUS,
    probes: int = PROBE_COUNT,
    horizon: int = PROBE_HORIZON,
    seed: int = 0,
    tol: float = CONVERGE_TOL,
) -> ProbeVerdict:
    if system.kind != "stable":
        return _probe_zero_sum(system, x, radius, probes, horizon, seed)
    if rest_residual(system, x) > REST_TOL:
        raise PreconditionError("probe_stability needs a rest point")
    return probe_many(system, [x], radius, probes, horizon, seed, tol)[0]


def _probe_zero_sum(system, x, radius, probes, horizon, seed):
    # zero-sum rest points are never asymptotically stable; only escape is detectable
    if rest_residual(system, x) > REST_TOL:
        raise PreconditionError("probe_stability needs a rest point")
    c = x.as_float()
    X = probe_starts(c, radius, probes, np.random.default_rng([seed, 0]))
    max_dist = np.abs(X - c).sum(axis=1)
    for n in range(1, horizon + 1):
        X = batch_step(system, X)
        max_dist = np.maximum(max_dist, np.abs(X - c).sum(axis=1))
        if np.any(max_dist > ESCAPE_FACTOR * radius):
            esc = int((max_dist > ESCAPE_FACTOR * radius).sum())
            return ProbeVerdict(c.tolist(), UNSTABLE, probes, 0, esc, float(max_dist.max()), n)
    return ProbeVerdict(c.tolist(), UNDETERMINED, probes, 0, 0, float(max_dist.max()), horizon)


# -- folk theorem certificate ------------------------------------------------


@dataclass
class EquilibriumReport:
    point: list
    face: list
    is_rest: bool
    rest_residual: float
    is_nash: bool
    nash_residual: float
    is_strict_nash: bool
    stability: str
    probe: dict

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class FolkCertificate:
    system: dict
    trials: int
    seed: int
    horizon: int
    tol: float
    equilibria: list = field(default_factory=list)
    clauses: dict = field(default_factory=dict)
    trial_results: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.clauses.values())

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "trials": self.trials,
            "seed": self.seed,
            "horizon": self.horizon,
            "tol": self.tol,
            "passed": self.passed,
            "clauses": self.clauses,
            "equilibria": [e.to_dict() for e in self.equilibria],
            "trial_results": self.trial_results,
        }


def classify_candidates(system, seed=0, radius=PROBE_RADIUS, probes=PROBE_COUNT, horizon=PROBE_HORIZON, tol=TIE_TOL):
    """EquilibriumReport for every face center."""
    _require_stable(system)
    centers = rest_point_candidates(system.m)
    rest = [is_rest(system, c) for c in centers]
    verdicts = probe_many(system, [c for c, r in zip(centers, rest) if r], radius, probes, horizon, seed)
    it = iter(verdicts)
    reports = []
    for c, r, f in zip(centers, rest, faces(system.m)):
        v = next(it) if r else None
        nash = is_nash(system, c, tol)
        reports.append(
            EquilibriumReport(
                point=c.as_float().tolist(),
                face=f.sorted(),
                is_rest=r.ok,
                rest_residual=r.residual,
                is_nash=nash.ok,
                nash_residual=nash.residual,
                is_strict_nash=is_strict_nash(system, c, tol),
                stability=v.verdict if v else UNDETERMINED,
                probe=v.to_dict() if v else {},
            )
        )
    return reports


def _max_set(X, tol):
    top = X.max(axis=1, keepdims=True)
    return X >= top - tol


def run_trials(system, starts: np.ndarray, horizon: int, tol: float, slack: float):
    """Iterate interior starts, checking convergence, Lyapunov monotonicity and MaxInd invariance."""
    X = np.array(starts, dtype=np.float64)
    n_trials, m = X.shape
    beta = _max_set(X, TIE_TOL)
    limit = beta / beta.sum(axis=1, keepdims=True)
    M_prev = X.max(axis=1, keepdims=True) - X
    alive = np.ones(n_trials, dtype=bool)
    run = np.zeros(n_trials, dtype=np.int64)
    conv_step = np.full(n_trials, -1)
    lyap_fail = np.full(n_trials, -1)
    lyap_worst = np.zeros(n_trials)
    maxind_fail = np.full(n_trials, -1)
    for n in range(1, horizon + 1):
        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        Y = batch_step(system, X[idx])
        X[idx] = Y
        M = Y.max(axis=1, keepdims=True) - Y
        drop = (M_prev[idx] - M).max(axis=1)
        lyap_worst[idx] = np.maximum(lyap_worst[idx], drop)
        bad = (drop > slack) & (lyap_fail[idx] < 0)
        lyap_fail[idx[bad]] = n
        M_prev[idx] = M
        changed = np.any(_max_set(Y, TIE_TOL) != beta[idx], axis=1) & (maxind_fail[idx] < 0)
        maxind_fail[idx[changed]] = n
        dist = np.abs(Y - limit[idx]).sum(axis=1)
        run[idx] = np.where(dist <= tol, run[idx] + 1, 0)
        done = run[idx] >= CONVERGE_RUN
        conv_step[idx[done]] = n
        alive[idx[done]] = False
    final_dist = np.abs(X - limit).sum(axis=1)
    return {
        "final": X,
        "limit": limit,
        "converged_step": conv_step,
        "final_distance": final_dist,
        "lyapunov_fail_step": lyap_fail,
        "lyapunov_max_drop": lyap_worst,
        "maxind_fail_step": maxind_fail,
    }


def certify_folk_theorem(
    system: ReplicatorSystem,
    trials: int = 100,
    seed: int = 0,
    horizon: int = PROBE_HORIZON,
    tol: float = CONVERGE_TOL,
    lyapunov_slack: float = TIE_TOL,
    probe_radius: float = PROBE_RADIUS,
    probes: int = PROBE_COUNT,
    probe_horizon: int | None = None,
) -> FolkCertificate:
    """Check the four clauses on face centers (i)-(iii) and random interior orbits (iv)."""
    _require_stable(system)
    if system.m > MAX_FOLK_M:
        raise ParameterError(f"certify_folk_theorem supports m <= {MAX_FOLK_M}, got {system.m}")
    cert = FolkCertificate(system.to_dict(), int(trials), int(seed), int(horizon), float(tol))
    reports = classify_candidates(system, seed, probe_radius, probes, probe_horizon or horizon)
    cert.equilibria = reports

    w1 = [r.point for r in reports if r.is_nash and r.rest_residual > tol]
    cert.clauses["i"] = {"statement": "Nash equilibria are rest points", "passed": not w1, "witnesses": w1}
    w2 = [r.point for r in reports if r.stability == STABLE and not r.is_nash]
    cert.clauses["ii"] = {"statement": "stable rest points are Nash", "passed": not w2, "witnesses": w2}
    w3 = [r.point for r in reports if r.is_strict_nash and r.stability != STABLE]
    cert.clauses["iii"] = {
        "statement": "strict Nash equilibria are asymptotically stable",
        "passed": not w3,
        "witnesses": w3,
    }

    rng = np.random.default_rng(seed)
    starts = sample_simplex(rng, system.m, trials)
    res = run_trials(system, starts, horizon, tol, lyapunov_slack)
    witnesses = []
    for t in range(trials):
        entry = {
            "x0": starts[t].tolist(),
            "predicted": res["limit"][t].tolist(),
            "final": res["final"][t].tolist(),
            "final_distance": float(res["final_distance"][t]),
            "converged_step": int(res["converged_step"][t]),
            "lyapunov_max_drop": float(res["lyapunov_max_drop"][t]),
            "lyapunov_fail_step": int(res["lyapunov_fail_step"][t]),
            "maxind_fail_step": int(res["maxind_fail_step"][t]),
        }
        cert.trial_results.append(entry)
        reasons = []
        if entry["converged_step"] < 0:
            reasons.append("no convergence to the predicted limit")
        if entry["lyapunov_fail_step"] >= 0:
            reasons.append("Lyapunov function decreased")
        if entry["maxind_fail_step"] >= 0:
            reasons.append("MaxInd changed")
        if reasons:
            witnesses.append({"trial": t, "reasons": reasons, **entry})
    cert.clauses["iv"] = {
        "statement": "interior orbits converge to the center of the MaxInd face",
        "passed": not witnesses,
        "witnesses": witnesses[:10],
        "failures": len(witnesses),
    }
    return cert
