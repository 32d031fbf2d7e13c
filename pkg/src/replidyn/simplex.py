"""Points, faces, order patterns and majorization on the standard simplex.

External interfaces use 1-based coordinate indices; arrays are 0-based
internally.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .arith import DOUBLE, DOUBLE_BITS, Arithmetic, arith_for, to_float
from .errors import DimensionError, DomainError, ParameterError

RENORMALIZE_LIMIT = 1e-6


def _check_same_length(x, y):
    if len(x) != len(y):
        raise DimensionError(f"length mismatch: {len(x)} vs {len(y)}")


@dataclass(frozen=True, eq=False)
class SimplexPoint:
    """Immutable point of the standard simplex at a given precision.

    Use :meth:`from_coords` to build one from raw numbers; the constructor
    trusts its arguments.
    """

    coords: np.ndarray
    precision_bits: int = DOUBLE_BITS

    def __post_init__(self):
        self.coords.setflags(write=False)

    @classmethod
    def from_coords(cls, values, precision_bits: int = DOUBLE_BITS) -> "SimplexPoint":
        ar = Arithmetic(precision_bits)
        with ar.context():
            x = ar.array(values)
            if x.ndim != 1 or x.shape[0] < 2:
                raise DimensionError("a simplex point needs m >= 2 coordinates")
            if any(v < 0 for v in x):
                raise DomainError(f"negative coordinate in {to_float(x)}")
            total = x.sum()
            if abs(float(total) - 1.0) > RENORMALIZE_LIMIT:
                raise DomainError(f"coordinate sum {float(total)!r} is not within 1e-6 of 1")
            x = x / total
        return cls(x, ar.bits)

    @classmethod
    def vertex(cls, k: int, m: int, precision_bits: int = DOUBLE_BITS) -> "SimplexPoint":
        """The vertex e_k (1-based)."""
        if not 1 <= k <= m:
            raise ParameterError(f"vertex index {k} outside 1..{m}")
        values = [0] * m
        values[k - 1] = 1
        return cls.from_coords(values, precision_bits)

    @property
    def m(self) -> int:
        return self.coords.shape[0]

    @property
    def arith(self) -> Arithmetic:
        return Arithmetic(self.precision_bits)

    def as_float(self) -> np.ndarray:
        return to_float(self.coords)

    def support(self) -> frozenset:
        """supp(x) as 1-based indices."""
        return frozenset(i + 1 for i, v in enumerate(self.coords) if v > 0)

    def null(self) -> frozenset:
        return frozenset(i + 1 for i, v in enumerate(self.coords) if v == 0)

    def support_face(self) -> "Face":
        return Face(self.support(), self.m)

    def at_precision(self, bits: int) -> "SimplexPoint":
        return SimplexPoint.from_coords(list(self.coords), bits)

    def __eq__(self, other):
        if not isinstance(other, SimplexPoint):
            return NotImplemented
        return self.m == other.m and all(a == b for a, b in zip(self.coords, other.coords))

    def __hash__(self):
        return hash(tuple(float(v) for v in self.coords))

    def __repr__(self):
        return f"SimplexPoint({self.as_float().tolist()}, bits={self.precision_bits})"


@dataclass(frozen=True)
class Face:
    """A nonempty index set alpha of {1..m} (1-based)."""

    indices: frozenset
    m: int

    def __init__(self, indices, m: int):
        idx = frozenset(int(i) for i in indices)
        if not idx:
            raise ParameterError("a face needs a nonempty index set")
        if min(idx) < 1 or max(idx) > m:
            raise ParameterError(f"face indices {sorted(idx)} outside 1..{m}")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "m", int(m))

    @classmethod
    def full(cls, m: int) -> "Face":
        return cls(range(1, m + 1), m)

    def mask(self) -> np.ndarray:
        mask = np.zeros(self.m, dtype=bool)
        mask[[i - 1 for i in self.indices]] = True
        return mask

    def __len__(self):
        return len(self.indices)

    def sorted(self) -> list:
        return sorted(self.indices)


@dataclass(frozen=True)
class OrderPattern:
    """Pairwise sign matrix: ranks[i][j] = sign(x_i - x_j) in {-1, 0, 1}."""

    ranks: tuple

    @classmethod
    def of(cls, x, tol: float = 0.0) -> "OrderPattern":
        return cls(tuple(tuple(int(s) for s in row) for row in _sign_matrix(x, tol)))

    def restrict(self, face: Face) -> "OrderPattern":
        keep = [i - 1 for i in face.sorted()]
        return OrderPattern(tuple(tuple(self.ranks[i][j] for j in keep) for i in keep))


def _sign_matrix(x, tol: float) -> np.ndarray:
    x = np.asarray(x)
    diff = x[:, None] - x[None, :]
    if diff.dtype == object:
        out = np.zeros(diff.shape, dtype=np.int8)
        for idx, d in np.ndenumerate(diff):
            out[idx] = 0 if abs(d) <= tol else (1 if d > 0 else -1)
        return out
    sign = np.sign(diff).astype(np.int8)
    sign[np.abs(diff) <= tol] = 0
    return sign


def similar_order_equal(x, y, tol: float = 0.0) -> bool:
    """True iff x and y induce the same (<, =, >) pattern on every index pair."""
    _check_same_length(x, y)
    if len(x) < 2:
        raise DimensionError("need m >= 2")
    return bool(np.array_equal(_sign_matrix(x, tol), _sign_matrix(y, tol)))


def order_violations(x, y, tol: float = 0.0):
    """Index pairs (0-based, i < j) where the patterns of x and y differ."""
    sx, sy = _sign_matrix(x, tol), _sign_matrix(y, tol)
    i, j = np.nonzero(np.triu(sx != sy, k=1))
    return list(zip(i.tolist(), j.tolist()))


def face_center(face: Face, precision_bits: int = DOUBLE_BITS) -> SimplexPoint:
    ar = Arithmetic(precision_bits)
    with ar.context():
        share = ar.scalar(1) / len(face)
        x = ar.zeros(face.m)
        for i in face.indices:
            x[i - 1] = share
    return SimplexPoint(x, ar.bits)


def faces(m: int):
    """All 2^m - 1 faces, smallest first, lexicographic within a size."""
    for size in range(1, m + 1):
        for idx in combinations(range(1, m + 1), size):
            yield Face(idx, m)


def max_ind(x: SimplexPoint, face: Face, tol: float = 0.0) -> frozenset:
    """MaxInd_alpha(x): indices of alpha within tol of the largest coordinate on alpha."""
    if face.m != x.m:
        raise DimensionError(f"face in dimension {face.m}, point in {x.m}")
    if not x.support() <= face.indices:
        raise DomainError(f"support {sorted(x.support())} is not inside face {face.sorted()}")
    vals = {i: x.coords[i - 1] for i in face.indices}
    top = max(vals.values())
    return frozenset(i for i, v in vals.items() if top - v <= tol)


def majorizes(x, y, tol: float = 0.0) -> bool:
    """x majorizes y: descending partial sums of x dominate those of y, equal totals."""
    _check_same_length(x, y)
    xs = np.sort(to_float(np.asarray(x)))[::-1]
    ys = np.sort(to_float(np.asarray(y)))[::-1]
    if abs(xs.sum() - ys.sum()) > tol:
        return False
    px, py = np.cumsum(xs)[:-1], np.cumsum(ys)[:-1]
    return bool(np.all(px >= py - tol))


def l1_distance(x, y) -> float:
    return float(np.sum(np.abs(to_float(np.asarray(x)) - to_float(np.asarray(y)))))


def sample_simplex(rng: np.random.Generator, m: int, size: int) -> np.ndarray:
    """Uniform points of the simplex by normalized exponential spacings."""
    e = rng.exponential(size=(size, m))
    return e / e.sum(axis=1, keepdims=True)


def sample_ball(rng: np.random.Generator, m: int, size: int) -> np.ndarray:
    """Uniform points of B_+^m: a simplex of dimension m scaled by U^(1/m)."""
    pts = sample_simplex(rng, m, size)
    return pts * rng.random((size, 1)) ** (1.0 / m)


__all__ = [
    "SimplexPoint",
    "Face",
    "OrderPattern",
    "similar_order_equal",
    "order_violations",
    "face_center",
    "faces",
    "max_ind",
    "majorizes",
    "l1_distance",
    "sample_simplex",
    "sample_ball",
    "arith_for",
    "DOUBLE",
]
