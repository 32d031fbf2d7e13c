"""Scalar building blocks: increasing functions h: R+ -> R+ and positive scalar fields."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..arith import Arithmetic
from ..errors import ParameterError


class ScalarFunctionSpec:
    """A strictly increasing function of one nonnegative variable."""

    kind: str = ""
    #: strictly convex on R+
    convex: bool = True
    #: strictly log-convex (or at least log-convex) on R+
    log_convex: bool = False
    strictly_log_convex: bool = False

    def value(self, t, ar: Arithmetic):
        raise NotImplementedError

    def derivative(self, t, ar: Arithmetic):
        raise NotImplementedError

    def value_max(self, upper: float) -> float:
        """sup of the value on [0, upper] (the function is increasing)."""
        return float(self.value(np.array([float(upper)]), _D)[0])

    def derivative_max(self, upper: float) -> float:
        """sup of the derivative on [0, upper] (convex, so at the right end)."""
        return float(self.derivative(np.array([float(upper)]), _D)[0])

    def value_at_zero(self) -> float:
        return float(self.value(np.array([0.0]), _D)[0])

    def derivative_at_zero(self) -> float:
        return float(self.derivative(np.array([0.0]), _D)[0])

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(doc: dict) -> "ScalarFunctionSpec":
        kind = doc.get("kind")
        if kind == "power":
            return Power(doc["q"])
        if kind == "exponential":
            return Exponential(doc.get("scale", 1.0))
        if kind == "tabulated":
            return Tabulated(doc["knots"], doc["values"])
        raise ParameterError(f"unknown scalar function kind {kind!r}")


_D = Arithmetic(53)


@dataclass(frozen=True)
class Power(ScalarFunctionSpec):
    """t^q with q > 1."""

    q: float
    kind = "power"

    def __post_init__(self):
        if not self.q > 1:
            raise ParameterError(f"power spec needs q > 1, got {self.q}")

    def value(self, t, ar):
        return t**self.q

    def derivative(self, t, ar):
        return self.q * t ** (self.q - 1)

    def to_dict(self):
        return {"kind": "power", "q": self.q}


@dataclass(frozen=True)
class Exponential(ScalarFunctionSpec):
    """exp(scale * t) with scale > 0; log-linear, hence admissible where log-convexity is asked."""

    scale: float = 1.0
    kind = "exponential"
    log_convex = True

    def __post_init__(self):
        if not self.scale > 0:
            raise ParameterError(f"exponential spec needs scale > 0, got {self.scale}")

    def value(self, t, ar):
        return ar.exp(t * self.scale)

    def derivative(self, t, ar):
        return ar.exp(t * self.scale) * self.scale

    def to_dict(self):
        return {"kind": "exponential", "scale": self.scale}


class Tabulated(ScalarFunctionSpec):
    """Monotone convex function given by samples (knots[0] must be 0).

    The derivative is the piecewise-linear interpolant of the secant slopes
    placed at interval midpoints (extended linearly on both sides); the
    value is v_0 plus its integral. Strictly increasing secant slopes give a
    strictly increasing derivative, so the function is strictly convex.
    """

    kind = "tabulated"

    def __init__(self, knots, values):
        t = np.asarray(knots, dtype=np.float64)
        v = np.asarray(values, dtype=np.float64)
        if t.ndim != 1 or t.shape != v.shape or t.size < 3:
            raise ParameterError("tabulated spec needs >= 3 knots with matching values")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ParameterError("tabulated knots must start at 0 and strictly increase")
        slopes = np.diff(v) / np.diff(t)
        if np.any(np.diff(slopes) <= 0):
            raise ParameterError("tabulated values are not strictly convex")
        self.knots = tuple(t.tolist())
        self.values = tuple(v.tolist())
        self._c = (t[:-1] + t[1:]) / 2
        self._d = slopes
        # one line per segment between consecutive midpoints, extended at both ends
        self._seg_slope = np.diff(self._d) / np.diff(self._c)
        if self.derivative_at_zero() <= 0:
            raise ParameterError("tabulated function is not strictly increasing at 0")
        if v[0] < 0:
            raise ParameterError("tabulated function must be nonnegative")
        # integral of the derivative from 0 to each midpoint
        d0 = self._line(0, 0.0)
        cum = [d0 * self._c[0] + self._seg_slope[0] * self._c[0] ** 2 / 2]
        for i in range(len(self._c) - 1):
            h = self._c[i + 1] - self._c[i]
            cum.append(cum[-1] + self._d[i] * h + self._seg_slope[i] * h * h / 2)
        self._cum = np.array(cum)

    def _line(self, seg, t):
        return self._d[seg] + self._seg_slope[seg] * (t - self._c[seg])

    def _segment(self, t):
        tf = np.asarray([float(v) for v in np.ravel(t)]).reshape(np.shape(t))
        return np.clip(np.searchsorted(self._c, tf, side="right") - 1, -1, len(self._c) - 2)

    def derivative(self, t, ar):
        seg = self._segment(t)
        s = np.maximum(seg, 0)
        return self._d[s] + self._seg_slope[s] * (t - self._c[s])

    def value(self, t, ar):
        seg = self._segment(t)
        s = np.maximum(seg, 0)
        before = seg < 0
        base_t = np.where(before, 0.0, self._c[s])
        base_i = np.where(before, 0.0, self._cum[s])
        base_d = np.where(before, self._line(0, 0.0), self._d[s])
        h = t - base_t
        return self.values[0] + base_i + base_d * h + self._seg_slope[s] * h * h / 2

    def derivative_at_zero(self) -> float:
        return float(self._line(0, 0.0))

    def to_dict(self):
        return {"kind": "tabulated", "knots": list(self.knots), "values": list(self.values)}

    def __eq__(self, other):
        return isinstance(other, Tabulated) and (self.knots, self.values) == (other.knots, other.values)

    def __hash__(self):
        return hash((self.knots, self.values))

    def __repr__(self):
        return f"Tabulated(knots={list(self.knots)}, values={list(self.values)})"


# -- positive scalar fields phi, psi: B_+^m -> (0, inf) -----------------------


class ScalarField:
    kind: str = ""

    def evaluate(self, x, ar: Arithmetic):
        """Values with a trailing axis of length 1 so they broadcast against x."""
        raise NotImplementedError

    def bound(self) -> float:
        raise NotImplementedError

    def positive(self) -> bool:
        return True

    def is_constant(self) -> bool:
        return False

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(doc) -> "ScalarField":
        if isinstance(doc, (int, float)):
            return Constant(float(doc))
        kind = doc.get("kind")
        if kind == "constant":
            return Constant(doc["c"])
        if kind == "sum_power":
            return SumPower(doc["r"])
        raise ParameterError(f"unknown scalar field kind {kind!r}")


@dataclass(frozen=True)
class Constant(ScalarField):
    c: float
    kind = "constant"

    def __post_init__(self):
        if not (self.c >= 0 and math.isfinite(self.c)):
            raise ParameterError(f"constant field needs a finite value >= 0, got {self.c}")

    def evaluate(self, x, ar):
        return self.c

    def bound(self):
        return self.c

    def positive(self):
        return self.c > 0

    def is_constant(self):
        return True

    def to_dict(self):
        return {"kind": "constant", "c": self.c}


@dataclass(frozen=True)
class SumPower(ScalarField):
    """(1 + sum_i x_i)^r."""

    r: float
    kind = "sum_power"

    def evaluate(self, x, ar):
        return (x.sum(axis=-1, keepdims=True) + 1) ** self.r

    def bound(self):
        # sum x in [0, 1] on B_+^m
        return max(1.0, 2.0**self.r)

    def to_dict(self):
        return {"kind": "sum_power", "r": self.r}
