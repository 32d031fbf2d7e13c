"""Randomized checks of the similar-order property, bounds and gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..arith import DOUBLE, Arithmetic, to_float
from ..simplex import sample_ball, sample_simplex
from .maps import BOUND_SAFETY, FitnessMap, GradientMap, _bound_points

SOP_TOL = 1e-12
MAX_WITNESSES = 20
# precision of the potential in finite-difference checks
FD_BITS = 128


@dataclass
class SopReport:
    map: dict
    samples: int
    seed: int
    tol: float
    violations: int = 0
    witnesses: list = field(default_factory=list)
    min_value: float = np.inf
    max_value: float = -np.inf
    range_exceeded: int = 0

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {
            "map": self.map,
            "samples": self.samples,
            "seed": self.seed,
            "tol": self.tol,
            "passed": self.passed,
            "violations": self.violations,
            "witnesses": self.witnesses,
            "min_value": self.min_value,
            "max_value": self.max_value,
            "range_exceeded": self.range_exceeded,
        }


def _signs(a, tol):
    # equality within tol relative to the larger magnitude of the pair
    d = a[:, :, None] - a[:, None, :]
    s = np.sign(d).astype(np.int8)
    mag = np.abs(a)
    scale = np.maximum(mag[:, :, None], mag[:, None, :])
    s[np.abs(d) <= tol * scale] = 0
    return s


def verify_sop(F: FitnessMap, samples: int, seed: int = 0, tol: float = SOP_TOL) -> SopReport:
    """Compare order patterns of x and F(x) at ``samples`` simplex points and ``samples`` ball points.

    Two components count as equal when they differ by at most ``tol`` times
    the larger of the two magnitudes.

    ``range_exceeded`` counts points with a component above 1, which only
    matters for normalized maps.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    report = SopReport(F.to_dict(), int(samples), int(seed), float(tol))
    for pts in (sample_simplex(rng, F.m, samples), sample_ball(rng, F.m, samples)):
        vals = F._eval(pts, DOUBLE)
        report.min_value = min(report.min_value, float(vals.min()))
        report.max_value = max(report.max_value, float(vals.max()))
        report.range_exceeded += int(np.any(vals > 1.0, axis=1).sum())
        bad = np.triu(_signs(pts, tol) != _signs(vals, tol), k=1)
        rows = np.nonzero(bad.any(axis=(1, 2)))[0]
        report.violations += int(rows.size)
        for r in rows[: max(0, MAX_WITNESSES - len(report.witnesses))]:
            i, j = (int(v) for v in np.argwhere(bad[r])[0])
            report.witnesses.append(
                {
                    "point": pts[r].tolist(),
                    "value": vals[r].tolist(),
                    "pair": [i + 1, j + 1],
                    "x_diff": float(pts[r, i] - pts[r, j]),
                    "f_diff": float(vals[r, i] - vals[r, j]),
                }
            )
    return report


def bound_estimate(F: FitnessMap, grid: int = 20) -> float:
    """Declared bound when analytic, else 1.1 times the max over a lattice (or random sample) of B_+^m."""
    if grid < 2:
        raise ValueError("grid must be >= 2")
    if F.bound_kind == "analytic":
        return F.declared_bound
    return float(np.max(F._eval(_bound_points(F.m, grid), DOUBLE))) * BOUND_SAFETY


@dataclass
class GradientReport:
    map: dict
    points: int
    max_rel_error: float
    rel_tol: float
    worst_point: list

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.rel_tol

    def to_dict(self) -> dict:
        return {
            "map": self.map,
            "points": self.points,
            "max_rel_error": self.max_rel_error,
            "rel_tol": self.rel_tol,
            "worst_point": self.worst_point,
            "passed": self.passed,
        }


def gradient_check(F: GradientMap, points: int = 100, seed: int = 0, rel_tol: float = 1e-6) -> GradientReport:
    """Five-point central differences of the potential against the evaluated field.

    Points are drawn from the interior of B_+^m; the step is relative to each
    coordinate so that fields singular at the boundary stay resolved. The
    potential is evaluated at FD_BITS so that rounding does not swamp small
    components; the field itself is evaluated in double. The error is
    relative per component.
    """
    rng = np.random.default_rng(seed)
    x = sample_ball(rng, F.m, points) * 0.98 + 0.01 / F.m
    grad = F._eval(x, DOUBLE)
    fd = np.empty_like(grad)
    ar = Arithmetic(FD_BITS)
    with ar.context():
        xe = ar.array(x)
        for k in range(F.m):
            h = xe[:, k] * 1e-3
            shifted = []
            for c in (2, 1, -1, -2):
                y = xe.copy()
                y[:, k] = y[:, k] + h * c
                shifted.append(F.potential(y, ar))
            fd[:, k] = to_float((-shifted[0] + 8 * shifted[1] - 8 * shifted[2] + shifted[3]) / (h * 12))
    rel = np.abs(fd - grad) / np.maximum(np.abs(grad), np.finfo(float).tiny)
    worst = int(np.argmax(rel.max(axis=1)))
    return GradientReport(F.to_dict(), int(points), float(rel.max()), float(rel_tol), x[worst].tolist())
