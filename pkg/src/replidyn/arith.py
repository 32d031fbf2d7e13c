"""Arithmetic modes: IEEE double (53 bits) or gmpy2 big floats.

Every vector quantity is a numpy array. In double mode it has dtype
float64; in extended mode it is an object array of ``gmpy2.mpfr`` values,
so the same numpy expressions serve both modes.
"""

from __future__ import annotations

import contextlib
import math

import gmpy2
import numpy as np

from .errors import ParameterError

DOUBLE_BITS = 53
MIN_EXTENDED_BITS = 64
MAX_EXTENDED_BITS = 4096


def check_precision(bits: int) -> int:
    bits = int(bits)
    if bits != DOUBLE_BITS and not (MIN_EXTENDED_BITS <= bits <= MAX_EXTENDED_BITS):
        raise ParameterError(
            f"precision_bits must be 53 or lie in [{MIN_EXTENDED_BITS}, {MAX_EXTENDED_BITS}], got {bits}"
        )
    return bits


class Arithmetic:
    """Elementwise numerics at a fixed mantissa width."""

    def __init__(self, bits: int = DOUBLE_BITS):
        self.bits = check_precision(bits)
        self.extended = self.bits != DOUBLE_BITS
        if self.extended:
            # widest exponent range gmpy2 offers: coordinates near a
            # heteroclinic cycle shrink far below any hardware exponent
            self._ctx = gmpy2.context(
                precision=self.bits,
                emin=gmpy2.get_emin_min(),
                emax=gmpy2.get_emax_max(),
            )
            self._exp = np.frompyfunc(gmpy2.exp, 1, 1)
            self._log = np.frompyfunc(gmpy2.log, 1, 1)
            self._gamma = np.frompyfunc(gmpy2.gamma, 1, 1)
            self._digamma = np.frompyfunc(gmpy2.digamma, 1, 1)
            self._finite = np.frompyfunc(gmpy2.is_finite, 1, 1)

    def __repr__(self):
        return f"Arithmetic(bits={self.bits})"

    def __eq__(self, other):
        return isinstance(other, Arithmetic) and other.bits == self.bits

    def __hash__(self):
        return hash(self.bits)

    @property
    def tol(self) -> float:
        """Monitor tolerance 2^(-bits/2)."""
        return 2.0 ** (-self.bits / 2)

    @property
    def unit_roundoff(self) -> float:
        return 2.0 ** (-self.bits)

    def context(self):
        if self.extended:
            return gmpy2.context(self._ctx)
        return contextlib.nullcontext()

    def scalar(self, value):
        if self.extended:
            with self.context():
                if isinstance(value, str):
                    return gmpy2.mpfr(value)
                return gmpy2.mpfr(value)
        return float(value)

    def array(self, values) -> np.ndarray:
        if self.extended:
            with self.context():
                flat = np.asarray(values, dtype=object)
                out = np.empty(flat.shape, dtype=object)
                for idx, v in np.ndenumerate(flat):
                    out[idx] = gmpy2.mpfr(v)
                return out
        return np.array(values, dtype=np.float64)

    def zeros(self, shape) -> np.ndarray:
        if self.extended:
            out = np.empty(shape, dtype=object)
            zero = gmpy2.mpfr(0)
            out.fill(zero)
            return out
        return np.zeros(shape)

    def exp(self, a):
        return self._exp(a) if self.extended else np.exp(a)

    def log(self, a):
        return self._log(a) if self.extended else np.log(a)

    def gamma(self, a):
        if self.extended:
            return self._gamma(a)
        from scipy.special import gamma

        return gamma(a)

    def digamma(self, a):
        if self.extended:
            return self._digamma(a)
        from .fitness.special import digamma

        return digamma(a)

    def isfinite(self, a) -> bool:
        if self.extended:
            return bool(np.all(self._finite(a).astype(bool)))
        return bool(np.all(np.isfinite(a)))


DOUBLE = Arithmetic(DOUBLE_BITS)


def arith_for(array: np.ndarray) -> Arithmetic:
    """Infer the arithmetic mode of an array produced by :class:`Arithmetic`."""
    if array.dtype == object:
        first = array.flat[0]
        if isinstance(first, type(gmpy2.mpfr(0))):
            return Arithmetic(first.precision)
    return DOUBLE


def to_float(array) -> np.ndarray:
    a = np.asarray(array)
    if a.dtype == object:
        return np.array([float(v) for v in a.flat], dtype=np.float64).reshape(a.shape)
    return a.astype(np.float64, copy=False)


def format_number(value, bits: int) -> str:
    """Shortest round-trip text in double mode; bits/3 significant digits otherwise."""
    if bits == DOUBLE_BITS or isinstance(value, float):
        return repr(float(value))
    digits = max(1, bits // 3)
    if value == 0:
        return "0"
    if not gmpy2.is_finite(value):
        return str(value)
    mant, exp, _ = value.digits(10, digits)
    sign = ""
    if mant.startswith("-"):
        sign, mant = "-", mant[1:]
    mant = mant.rstrip("0") or "0"
    exponent = exp - 1
    body = mant[0] + ("." + mant[1:] if len(mant) > 1 else "")
    return f"{sign}{body}e{exponent:+d}"


def log10_abs(value) -> float:
    """log10 |value| that survives exponents outside the double range."""
    if isinstance(value, float):
        return math.log10(abs(value)) if value else -math.inf
    if value == 0:
        return -math.inf
    # frexp is far cheaper than an mpfr log10 and exact to double rounding
    exp, mant = gmpy2.frexp(abs(value))
    return (exp + math.log2(float(mant))) * _LOG10_2


_LOG10_2 = math.log10(2.0)
