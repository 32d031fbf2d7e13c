"""Similar-order preserving fitness maps as serializable expression trees.

Leaves are catalog primitives (gradients of symmetric, increasing,
Schur-convex potentials); internal nodes are the closure combinators and
the normalization wrapper. Every node evaluates on arrays of shape
``(..., m)`` under an :class:`~replidyn.arith.Arithmetic` mode.
"""

from __future__ import annotations

import json
import math

import numpy as np

from ..arith import DOUBLE, Arithmetic, arith_for, to_float
from ..errors import DimensionError, DomainError, NumericError, ParameterError
from ..simplex import SimplexPoint, sample_ball
from .scalar import Constant, ScalarField, ScalarFunctionSpec

BOUND_SAFETY = 1.1
DEFAULT_BOUND_GRID = 20
_LATTICE_LIMIT = 100_000
_BALL_TOL = 1e-12
# positive zero of the digamma function
DIGAMMA_ROOT = 1.4616321449683623


class FitnessMap:
    """Base node. Subclasses set ``kind`` and implement ``_eval``."""

    kind = ""
    is_gradient = False

    def __init__(self, m: int, children=()):
        m = int(m)
        if m < 1:
            raise DimensionError(f"dimension must be positive, got {m}")
        for c in children:
            if c.m != m:
                raise DimensionError(f"{self.kind}: child {c.kind} has m={c.m}, expected {m}")
        self.m = m
        self.children = tuple(children)
        bound = self._analytic_bound()
        if bound is None:
            self.bound_kind = "sampled"
            self.declared_bound = _sampled_max(self, DEFAULT_BOUND_GRID) * BOUND_SAFETY
        else:
            self.bound_kind = "analytic"
            self.declared_bound = float(bound)
        if not (self.declared_bound > 0 and math.isfinite(self.declared_bound)):
            raise NumericError(f"{self.kind}: bound {self.declared_bound} is not a positive real")

    # -- structure ---------------------------------------------------------

    def _analytic_bound(self):
        """Upper bound on all components over B_+^m, or None to sample one."""
        return None

    @property
    def positive(self) -> bool:
        """All components strictly positive on R_+^m."""
        return False

    @property
    def nonnegative(self) -> bool:
        """All components >= 0 on B_+^m; inherited from the children unless overridden."""
        return all(c.nonnegative for c in self.children)

    def params(self) -> dict:
        return {}

    def child_names(self):
        return [f"{i}" for i in range(len(self.children))]

    # -- evaluation --------------------------------------------------------

    def _eval(self, x, ar: Arithmetic):
        raise NotImplementedError

    def _slack(self, x, ar: Arithmetic):
        """declared_bound - F(x) for x on the simplex; overridden where it can avoid cancellation."""
        return self.declared_bound - self._eval(x, ar)

    def complement(self, x, ar: Arithmetic):
        """1 - F(x) for x on the simplex."""
        return _bound_gap(ar, 1.0, [(1.0, self.declared_bound)]) + self._slack(x, ar)

    def evaluate(self, x, precision_bits: int | None = None, *, domain_check: bool = True) -> np.ndarray:
        """F(x) for x in B_+^m (a point, or a batch with rows as points).

        With ``domain_check=False`` any nonnegative point is accepted; the
        catalog primitives are defined on all of R_+^m.
        """
        arr, ar = _as_input(x, precision_bits)
        if arr.shape[-1] != self.m:
            raise DimensionError(f"map has m={self.m}, point has {arr.shape[-1]} coordinates")
        xf = to_float(arr)
        if np.any(xf < 0):
            raise DomainError("point has a negative coordinate")
        if domain_check and np.any(xf.sum(axis=-1) > 1 + _BALL_TOL):
            raise DomainError("point lies outside B_+^m")
        with ar.context():
            out = self._eval(arr, ar)
            if not ar.isfinite(out):
                raise NumericError("non-finite value", _locate_nonfinite(self, arr, ar))
        return out

    __call__ = evaluate

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        doc = {"kind": self.kind}
        doc.update(self.params())
        return doc

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def __repr__(self):
        return f"FitnessMap({self.to_json()})"

    def __eq__(self, other):
        return isinstance(other, FitnessMap) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(self.to_json(sort_keys=True))


class GradientMap(FitnessMap):
    """Gradient field of a symmetric potential; ``potential`` is exposed for derivative checks."""

    is_gradient = True

    def potential(self, x, ar: Arithmetic = DOUBLE):
        raise NotImplementedError


def _as_input(x, precision_bits):
    if isinstance(x, SimplexPoint):
        ar = Arithmetic(precision_bits or x.precision_bits)
        arr = x.coords if ar.bits == x.precision_bits else ar.array(list(x.coords))
        return arr, ar
    arr = np.asarray(x)
    if arr.dtype == object:
        ar = Arithmetic(precision_bits) if precision_bits else arith_for(arr)
        return arr, ar
    ar = Arithmetic(precision_bits or 53)
    return (ar.array(arr) if ar.extended else arr.astype(np.float64)), ar


def _locate_nonfinite(node, x, ar, path=()):
    path = path + (node.kind,)
    for name, child in zip(node.child_names(), node.children):
        try:
            inner = child._eval(_child_input(node, name, x, ar), ar)
        except Exception:
            continue
        if not ar.isfinite(inner):
            return _locate_nonfinite(child, _child_input(node, name, x, ar), ar, path + (name,))
    return path


def _child_input(node, name, x, ar):
    # composition nodes feed a transformed point to one child
    if isinstance(node, PreCompose):
        return node.h.value(x, ar)
    if isinstance(node, Compose) and name == "outer":
        return node.inner._eval(x, ar)
    if isinstance(node, CompositionGrad):
        return node.h.value(x, ar)
    return x


def _where(cond, a, b):
    return np.where(np.asarray(cond).astype(bool), a, b)


def _stack_last(cols, like):
    """np.stack(cols, axis=-1), with a fast path for a single point."""
    if like.ndim == 1:
        return np.array(cols, dtype=like.dtype)
    return np.stack(cols, axis=-1)


def _others_sum(x):
    """For each k, the sum of all coordinates except x_k (no subtraction)."""
    m = x.shape[-1]
    if m == 1:
        return x * 0
    cols = [x[..., k] for k in range(m)]
    out = []
    for k in range(m):
        rest = [c for j, c in enumerate(cols) if j != k]
        s = rest[0]
        for c in rest[1:]:
            s = s + c
        out.append(s)
    return _stack_last(out, x)


def _sampled_max(node, grid):
    pts = _bound_points(node.m, grid)
    vals = node._eval(pts, DOUBLE)
    top = float(np.max(vals))
    if not math.isfinite(top):
        raise NumericError(f"{node.kind}: non-finite values while sampling the bound")
    return max(top, np.finfo(float).tiny)


def _lattice(m, budget):
    """Nonnegative integer m-tuples with sum <= budget."""
    if m == 1:
        for v in range(budget + 1):
            yield (v,)
        return
    for v in range(budget + 1):
        for rest in _lattice(m - 1, budget - v):
            yield (v,) + rest


def _bound_points(m, grid):
    grid = int(grid)
    if math.comb(grid + m, m) <= _LATTICE_LIMIT:
        return np.array(list(_lattice(m, grid)), dtype=np.float64) / grid
    rng = np.random.default_rng(0)
    pts = sample_ball(rng, m, _LATTICE_LIMIT)
    return np.vstack([np.zeros(m), np.eye(m), pts])


# -- primitives ------------------------------------------------------------


class Identity(GradientMap):
    kind = "identity"

    def _analytic_bound(self):
        return 1.0

    def params(self):
        return {"m": self.m}

    def _eval(self, x, ar):
        return x

    def _slack(self, x, ar):
        # 1 - x_k equals the sum of the other coordinates on the simplex
        return _others_sum(x)

    def potential(self, x, ar=DOUBLE):
        return (x * x).sum(axis=-1) / 2


class Swap(FitnessMap):
    """x with coordinates i and j exchanged; NOT similar-order preserving (negative control)."""

    kind = "swap"

    def __init__(self, m, i=1, j=2):
        if not (1 <= i <= m and 1 <= j <= m and i != j):
            raise ParameterError(f"swap needs two distinct indices in 1..{m}")
        self.i, self.j = int(i), int(j)
        super().__init__(m)

    def _perm(self):
        p = list(range(self.m))
        p[self.i - 1], p[self.j - 1] = p[self.j - 1], p[self.i - 1]
        return p

    def _analytic_bound(self):
        return 1.0

    def params(self):
        return {"m": self.m, "i": self.i, "j": self.j}

    def _eval(self, x, ar):
        return x[..., self._perm()]

    def _slack(self, x, ar):
        return _others_sum(x)[..., self._perm()]


def _complete_homogeneous(x, degree):
    """[h_0(x), ..., h_degree(x)] over the last axis."""
    lead = x[..., 0]
    one = lead * 0 + 1
    h = [one] + [lead * 0 for _ in range(degree)]
    for v in range(x.shape[-1]):
        xv = x[..., v]
        for n in range(1, degree + 1):
            h[n] = h[n] + xv * h[n - 1]
    return h


def _elementary(y, degree):
    """[e_0(y), ..., e_degree(y)] over the last axis."""
    lead = y[..., 0]
    e = [lead * 0 + 1] + [lead * 0 for _ in range(degree)]
    for v in range(y.shape[-1]):
        yv = y[..., v]
        for n in range(degree, 0, -1):
            e[n] = e[n] + yv * e[n - 1]
    return e


class CompleteSymmetricGrad(GradientMap):
    """Gradient of the complete homogeneous symmetric polynomial h_k.

    Uses d h_k / d x_j = h_{k-1}(x_1, ..., x_m, x_j), i.e. one extra
    recurrence step with x_j appended, which is symmetric in the
    coordinates by construction.
    """

    kind = "grad_complete_symmetric"

    def __init__(self, k, m):
        if not 1 <= int(k) <= int(m):
            raise ParameterError(f"complete symmetric degree k={k} must lie in 1..{m}")
        self.k = int(k)
        super().__init__(m)

    def _analytic_bound(self):
        # the largest partial derivative over B_+^m is k, attained at a vertex
        return float(self.k)

    @property
    def positive(self):
        return self.k == 1

    def params(self):
        return {"k": self.k, "m": self.m}

    def _eval(self, x, ar):
        h = _complete_homogeneous(x, self.k - 1)
        g = x * 0 + 1
        for n in range(1, self.k):
            g = np.expand_dims(h[n], -1) + x * g
        return g

    def potential(self, x, ar=DOUBLE):
        return _complete_homogeneous(x, self.k)[self.k]


class GaugeGrad(GradientMap):
    """Gradient of the p-norm: (x_k / ||x||_p)^(p-1); zero at the origin."""

    kind = "grad_gauge"

    def __init__(self, p, m):
        if not float(p) > 1:
            raise ParameterError(f"gauge gradient needs p > 1, got {p}")
        self.p = float(p)
        super().__init__(m)

    def _analytic_bound(self):
        return 1.0

    def params(self):
        return {"p": self.p, "m": self.m}

    def _norm(self, x):
        return ((x**self.p).sum(axis=-1, keepdims=True)) ** (1.0 / self.p)

    def _eval(self, x, ar):
        norm = self._norm(x)
        nonzero = norm > 0
        safe = _where(nonzero, norm, 1.0)
        return _where(nonzero, (x / safe) ** (self.p - 1), x * 0)

    def potential(self, x, ar=DOUBLE):
        return self._norm(x)[..., 0]


class GammaProductGrad(GradientMap):
    """Gradient of prod_i Gamma(x_i + a): component k is prod_i Gamma(x_i + a) * psi(x_k + a)."""

    kind = "grad_gamma_product"

    def __init__(self, a, m):
        a = float(a)
        if not a >= 1:
            raise ParameterError(f"gamma product needs a >= 1, got {a}")
        self.a = a
        super().__init__(m)

    def _analytic_bound(self):
        # prod Gamma is convex, so its max over B_+^m is at 0 or a vertex, and Gamma(a+1) >= Gamma(a)
        from .special import digamma

        return math.gamma(self.a + 1) * math.gamma(self.a) ** (self.m - 1) * digamma(self.a + 1)

    @property
    def positive(self):
        # below the digamma root psi(x_k + a) < 0 near x_k = 0
        return self.a > DIGAMMA_ROOT

    @property
    def nonnegative(self):
        return self.positive

    def params(self):
        return {"a": self.a, "m": self.m}

    def _prod(self, x, ar):
        g = ar.gamma(x + self.a)
        return np.prod(g, axis=-1, keepdims=True)

    def _eval(self, x, ar):
        return self._prod(x, ar) * ar.digamma(x + self.a)

    def potential(self, x, ar=DOUBLE):
        return self._prod(x, ar)[..., 0]


class SeparableGrad(GradientMap):
    """Gradient of sum_k f(x_k): component k is f'(x_k)."""

    kind = "grad_separable"

    def __init__(self, f: ScalarFunctionSpec, m):
        if not f.convex:
            raise ParameterError("separable potential needs a strictly convex scalar function")
        self.f = f
        super().__init__(m)

    def _analytic_bound(self):
        return self.f.derivative_max(1.0)

    @property
    def positive(self):
        return self.f.derivative_at_zero() > 0

    def params(self):
        return {"f": self.f.to_dict(), "m": self.m}

    def _eval(self, x, ar):
        return self.f.derivative(x, ar)

    def potential(self, x, ar=DOUBLE):
        return self.f.value(x, ar).sum(axis=-1)


class SymmetricCompositeGrad(GradientMap):
    """Gradient of e_k(f(x_1), ..., f(x_m)).

    Component j is f'(x_j) e_{k-1}(f(x) without j), where the leave-one-out
    elementary polynomial is sum_i (-f(x_j))^i e_{k-1-i}(f(x)).
    """

    kind = "grad_symmetric_composite"

    def __init__(self, k, f: ScalarFunctionSpec, m):
        if not 1 <= int(k) <= int(m):
            raise ParameterError(f"symmetric composite degree k={k} must lie in 1..{m}")
        if not f.log_convex:
            raise ParameterError("symmetric composite needs a log-convex scalar function")
        if int(k) == int(m) > 1 and not f.strictly_log_convex:
            # f'/f is constant, so every component equals f'/f times prod f
            raise ParameterError("symmetric composite with k = m needs a strictly log-convex f")
        self.k = int(k)
        self.f = f
        super().__init__(m)

    def _analytic_bound(self):
        if self.k == 1:
            return self.f.derivative_max(1.0)
        return self.f.derivative_max(1.0) * math.comb(self.m - 1, self.k - 1) * self.f.value_max(1.0) ** (self.k - 1)

    @property
    def positive(self):
        return self.f.derivative_at_zero() > 0 and (self.k == 1 or self.f.value_at_zero() > 0)

    def params(self):
        return {"k": self.k, "f": self.f.to_dict(), "m": self.m}

    def _eval(self, x, ar):
        y = self.f.value(x, ar)
        e = _elementary(y, self.k - 1)
        acc = np.expand_dims(e[self.k - 1], -1) + y * 0
        power = y * 0 + 1
        for i in range(1, self.k):
            power = power * (-y)
            acc = acc + power * np.expand_dims(e[self.k - 1 - i], -1)
        return self.f.derivative(x, ar) * acc

    def potential(self, x, ar=DOUBLE):
        return _elementary(self.f.value(x, ar), self.k)[self.k]


class LogSumExpGrad(GradientMap):
    """Gradient of (1/s) log sum exp(s x_k) + (c/2)||x||^2: softmax(s x) + c x.

    The catalog's representative of a general convex symmetric increasing
    potential (strictly convex once c > 0).
    """

    kind = "grad_log_sum_exp"

    def __init__(self, s, m, c=0.0):
        if not float(s) > 0:
            raise ParameterError(f"log-sum-exp needs s > 0, got {s}")
        if not float(c) >= 0:
            raise ParameterError(f"log-sum-exp quadratic weight needs c >= 0, got {c}")
        self.s, self.c = float(s), float(c)
        super().__init__(m)

    def _analytic_bound(self):
        return 1.0 + self.c

    @property
    def positive(self):
        return True

    def params(self):
        return {"s": self.s, "c": self.c, "m": self.m}

    def _eval(self, x, ar):
        top = x.max(axis=-1, keepdims=True)
        w = ar.exp((x - top) * self.s)
        return w / w.sum(axis=-1, keepdims=True) + x * self.c

    def potential(self, x, ar=DOUBLE):
        top = x.max(axis=-1, keepdims=True)
        lse = top[..., 0] + ar.log(ar.exp((x - top) * self.s).sum(axis=-1)) / self.s
        return lse + (x * x).sum(axis=-1) * (self.c / 2)


class CompositionGrad(GradientMap):
    """Gradient of psi(h(x_1), ..., h(x_m)) for a catalog gradient psi and convex increasing h."""

    kind = "grad_composition"

    def __init__(self, inner: GradientMap, h: ScalarFunctionSpec):
        if not isinstance(inner, GradientMap):
            raise ParameterError("composition needs a gradient primitive as its inner potential")
        if not h.convex:
            raise ParameterError("composition needs a strictly convex h")
        self.inner = inner
        self.h = h
        super().__init__(inner.m, (inner,))

    @property
    def positive(self):
        return self.inner.positive and self.h.derivative_at_zero() > 0

    def params(self):
        return {"inner": self.inner.to_dict(), "h": self.h.to_dict()}

    def child_names(self):
        return ["inner"]

    def _eval(self, x, ar):
        return self.inner._eval(self.h.value(x, ar), ar) * self.h.derivative(x, ar)

    def potential(self, x, ar=DOUBLE):
        return self.inner.potential(self.h.value(x, ar), ar)


# -- combinators -----------------------------------------------------------


def _field(f) -> ScalarField:
    if isinstance(f, ScalarField):
        return f
    if isinstance(f, dict):
        return ScalarField.from_dict(f)
    return Constant(float(f))


def _bound_gap(ar: Arithmetic, bound, terms) -> object:
    """bound - sum(a * b) at working precision; ``bound`` is a double or a pair to multiply.

    Declared bounds are doubles, so they can differ from the exact algebraic
    bound by a rounding error; slack formulas add this gap back so that
    F + complement(F) = 1 holds to working precision.
    """
    with ar.context():
        total = ar.scalar(bound[0]) * ar.scalar(bound[1]) if isinstance(bound, tuple) else ar.scalar(bound)
        for a, b in terms:
            total = total - ar.scalar(a) * ar.scalar(b)
        return total


class AffineShift(FitnessMap):
    """phi(x) F(x) + psi(x) with phi > 0 and psi >= 0."""

    kind = "affine_shift"

    def __init__(self, F, phi=1.0, psi=0.0):
        self.phi, self.psi = _field(phi), _field(psi)
        if not self.phi.positive():
            raise ParameterError("affine_shift: phi must be strictly positive")
        super().__init__(F.m, (F,))

    def _analytic_bound(self):
        F = self.children[0]
        if F.bound_kind != "analytic":
            return None
        return self.phi.bound() * F.declared_bound + self.psi.bound()

    @property
    def positive(self):
        return self.children[0].positive or self.psi.positive()

    def params(self):
        return {"map": self.children[0].to_dict(), "phi": self.phi.to_dict(), "psi": self.psi.to_dict()}

    def child_names(self):
        return ["map"]

    def _eval(self, x, ar):
        return self.phi.evaluate(x, ar) * self.children[0]._eval(x, ar) + self.psi.evaluate(x, ar)

    def _slack(self, x, ar):
        if self.phi.is_constant() and self.psi.is_constant() and self.bound_kind == "analytic":
            F = self.children[0]
            gap = _bound_gap(ar, self.declared_bound, [(self.phi.c, F.declared_bound), (self.psi.c, 1.0)])
            return F._slack(x, ar) * self.phi.c + gap
        return super()._slack(x, ar)


class ConicCombination(FitnessMap):
    """phi(x) F(x) + psi(x) G(x) with phi, psi > 0."""

    kind = "conic_combination"

    def __init__(self, F, G, phi=1.0, psi=1.0):
        self.phi, self.psi = _field(phi), _field(psi)
        if not (self.phi.positive() and self.psi.positive()):
            raise ParameterError("conic_combination: phi and psi must be strictly positive")
        super().__init__(F.m, (F, G))

    def _analytic_bound(self):
        F, G = self.children
        if F.bound_kind != "analytic" or G.bound_kind != "analytic":
            return None
        return self.phi.bound() * F.declared_bound + self.psi.bound() * G.declared_bound

    @property
    def positive(self):
        return any(c.positive for c in self.children)

    def params(self):
        F, G = self.children
        return {"maps": [F.to_dict(), G.to_dict()], "phi": self.phi.to_dict(), "psi": self.psi.to_dict()}

    def child_names(self):
        return ["maps.0", "maps.1"]

    def _eval(self, x, ar):
        F, G = self.children
        return self.phi.evaluate(x, ar) * F._eval(x, ar) + self.psi.evaluate(x, ar) * G._eval(x, ar)

    def _slack(self, x, ar):
        F, G = self.children
        if self.phi.is_constant() and self.psi.is_constant() and self.bound_kind == "analytic":
            gap = _bound_gap(ar, self.declared_bound, [(self.phi.c, F.declared_bound), (self.psi.c, G.declared_bound)])
            return F._slack(x, ar) * self.phi.c + G._slack(x, ar) * self.psi.c + gap
        return super()._slack(x, ar)


class PostCompose(FitnessMap):
    """H o F = (h(f_1(x)), ..., h(f_m(x)))."""

    kind = "post_compose"

    def __init__(self, h: ScalarFunctionSpec, F):
        self.h = h
        super().__init__(F.m, (F,))

    def _analytic_bound(self):
        F = self.children[0]
        if F.bound_kind != "analytic":
            return None
        return self.h.value_max(F.declared_bound)

    @property
    def positive(self):
        return self.h.value_at_zero() > 0 or self.children[0].positive

    def params(self):
        return {"h": self.h.to_dict(), "map": self.children[0].to_dict()}

    def child_names(self):
        return ["map"]

    def _eval(self, x, ar):
        return self.h.value(self.children[0]._eval(x, ar), ar)


class PreCompose(FitnessMap):
    """F o H = F(h(x_1), ..., h(x_m))."""

    kind = "pre_compose"

    def __init__(self, F, h: ScalarFunctionSpec):
        self.h = h
        super().__init__(F.m, (F,))

    @property
    def positive(self):
        return self.children[0].positive

    def params(self):
        return {"map": self.children[0].to_dict(), "h": self.h.to_dict()}

    def child_names(self):
        return ["map"]

    def _eval(self, x, ar):
        return self.children[0]._eval(self.h.value(x, ar), ar)


class Compose(FitnessMap):
    """F o G."""

    kind = "compose"

    def __init__(self, F, G):
        super().__init__(F.m, (F, G))

    @property
    def outer(self):
        return self.children[0]

    @property
    def inner(self):
        return self.children[1]

    @property
    def positive(self):
        return self.outer.positive

    def params(self):
        return {"outer": self.outer.to_dict(), "inner": self.inner.to_dict()}

    def child_names(self):
        return ["outer", "inner"]

    def _eval(self, x, ar):
        return self.outer._eval(self.inner._eval(x, ar), ar)


class Hadamard(FitnessMap):
    """Componentwise product F * G of two nonnegative maps.

    With f_i > f_j >= 0 and g_i > g_j >= 0 one gets f_i g_i > f_j g_i >= f_j g_j,
    so nonnegative factors suffice for order preservation.
    """

    kind = "hadamard"

    def __init__(self, F, G):
        for c in (F, G):
            if not c.nonnegative:
                raise ParameterError(f"hadamard needs nonnegative factors; {c.kind} can take negative values")
        super().__init__(F.m, (F, G))

    def _analytic_bound(self):
        F, G = self.children
        if F.bound_kind != "analytic" or G.bound_kind != "analytic":
            return None
        return F.declared_bound * G.declared_bound

    @property
    def positive(self):
        return all(c.positive for c in self.children)

    def params(self):
        return {"maps": [c.to_dict() for c in self.children]}

    def child_names(self):
        return ["maps.0", "maps.1"]

    def _eval(self, x, ar):
        F, G = self.children
        return F._eval(x, ar) * G._eval(x, ar)

    def _slack(self, x, ar):
        F, G = self.children
        if self.bound_kind != "analytic":
            return super()._slack(x, ar)
        # M_F M_G - F G = M_F (M_G - G) + G (M_F - F)
        gap = _bound_gap(ar, self.declared_bound, [(F.declared_bound, G.declared_bound)])
        return G._slack(x, ar) * F.declared_bound + G._eval(x, ar) * F._slack(x, ar) + gap


class Normalize(FitnessMap):
    """(F + eps) / M1 with M1 = max(M + eps, 1), M the declared bound of F."""

    kind = "normalize"

    def __init__(self, F, epsilon):
        epsilon = float(epsilon)
        if not epsilon > 0:
            raise ParameterError(f"normalize: epsilon must be positive, got {epsilon}")
        if not math.isfinite(F.declared_bound):
            raise ParameterError("normalize: inner map has no finite bound")
        self.epsilon = epsilon
        self.inner_bound = F.declared_bound
        self.scale = max(self.inner_bound + epsilon, 1.0)
        super().__init__(F.m, (F,))
        self.bound_kind = F.bound_kind

    def _analytic_bound(self):
        return (self.inner_bound + self.epsilon) / self.scale

    @property
    def positive(self):
        return True

    def params(self):
        return {"map": self.children[0].to_dict(), "epsilon": self.epsilon}

    def child_names(self):
        return ["map"]

    def _eval(self, x, ar):
        return (self.children[0]._eval(x, ar) + self.epsilon) / self.scale

    def _slack(self, x, ar):
        gap = _bound_gap(ar, (self.declared_bound, self.scale), [(1.0, self.inner_bound), (1.0, self.epsilon)])
        return (self.children[0]._slack(x, ar) + gap) / self.scale

    def complement(self, x, ar):
        headroom = _bound_gap(ar, self.scale, [(1.0, self.inner_bound), (1.0, self.epsilon)])
        return (self.children[0]._slack(x, ar) + headroom) / self.scale


# -- public constructors ---------------------------------------------------


def identity(m: int) -> FitnessMap:
    return Identity(m)


def swap(m: int, i: int = 1, j: int = 2) -> FitnessMap:
    return Swap(m, i, j)


def grad_complete_symmetric(k: int, m: int) -> FitnessMap:
    return CompleteSymmetricGrad(k, m)


def grad_gauge(p: float, m: int) -> FitnessMap:
    return GaugeGrad(p, m)


def grad_gamma_product(a: float, m: int) -> FitnessMap:
    return GammaProductGrad(a, m)


def grad_separable(f: ScalarFunctionSpec, m: int) -> FitnessMap:
    return SeparableGrad(f, m)


def grad_symmetric_composite(k: int, f: ScalarFunctionSpec, m: int) -> FitnessMap:
    return SymmetricCompositeGrad(k, f, m)


def grad_log_sum_exp(s: float, m: int, c: float = 0.0) -> FitnessMap:
    return LogSumExpGrad(s, m, c)


def grad_composition(inner: GradientMap, h: ScalarFunctionSpec) -> FitnessMap:
    return CompositionGrad(inner, h)


def normalize(F: FitnessMap, epsilon: float) -> FitnessMap:
    return Normalize(F, epsilon)


COMBINATORS = ("affine_shift", "conic_combination", "post_compose", "pre_compose", "compose", "hadamard")


def combine(kind: str, *maps, phi=None, psi=None, h=None) -> FitnessMap:
    """Apply one of the six closure constructions.

    ``affine_shift(F; phi, psi)``, ``conic_combination(F, G; phi, psi)``,
    ``post_compose(F; h)``, ``pre_compose(F; h)``, ``compose(F, G)`` (F o G)
    and ``hadamard(F, G)``.
    """
    arity = {"affine_shift": 1, "conic_combination": 2, "post_compose": 1, "pre_compose": 1, "compose": 2, "hadamard": 2}
    if kind not in arity:
        raise ParameterError(f"unknown combinator {kind!r}")
    if len(maps) != arity[kind]:
        raise ParameterError(f"{kind} takes {arity[kind]} map(s), got {len(maps)}")
    if len({F.m for F in maps}) != 1:
        raise DimensionError(f"{kind}: dimension mismatch {[F.m for F in maps]}")
    if kind in ("post_compose", "pre_compose") and h is None:
        raise ParameterError(f"{kind} needs a scalar function h")
    if kind == "affine_shift":
        return AffineShift(maps[0], 1.0 if phi is None else phi, 0.0 if psi is None else psi)
    if kind == "conic_combination":
        return ConicCombination(maps[0], maps[1], 1.0 if phi is None else phi, 1.0 if psi is None else psi)
    if kind == "post_compose":
        return PostCompose(h, maps[0])
    if kind == "pre_compose":
        return PreCompose(maps[0], h)
    if kind == "compose":
        return Compose(maps[0], maps[1])
    return Hadamard(maps[0], maps[1])


def evaluate(F: FitnessMap, x, precision_bits: int | None = None, *, domain_check: bool = True) -> np.ndarray:
    return F.evaluate(x, precision_bits, domain_check=domain_check)


# -- JSON documents --------------------------------------------------------


def from_dict(doc: dict) -> FitnessMap:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ParameterError("a fitness map document is an object with a 'kind' field")
    kind = doc["kind"]
    spec = ScalarFunctionSpec.from_dict
    try:
        if kind == "identity":
            return Identity(doc["m"])
        if kind == "swap":
            return Swap(doc["m"], doc.get("i", 1), doc.get("j", 2))
        if kind == "grad_complete_symmetric":
            return CompleteSymmetricGrad(doc["k"], doc["m"])
        if kind == "grad_gauge":
            return GaugeGrad(doc["p"], doc["m"])
        if kind == "grad_gamma_product":
            return GammaProductGrad(doc["a"], doc["m"])
        if kind == "grad_separable":
            return SeparableGrad(spec(doc["f"]), doc["m"])
        if kind == "grad_symmetric_composite":
            return SymmetricCompositeGrad(doc["k"], spec(doc["f"]), doc["m"])
        if kind == "grad_log_sum_exp":
            return LogSumExpGrad(doc["s"], doc["m"], doc.get("c", 0.0))
        if kind == "grad_composition":
            return CompositionGrad(from_dict(doc["inner"]), spec(doc["h"]))
        if kind == "affine_shift":
            return AffineShift(from_dict(doc["map"]), doc.get("phi", 1.0), doc.get("psi", 0.0))
        if kind == "conic_combination":
            F, G = (from_dict(d) for d in doc["maps"])
            return ConicCombination(F, G, doc.get("phi", 1.0), doc.get("psi", 1.0))
        if kind == "post_compose":
            return PostCompose(spec(doc["h"]), from_dict(doc["map"]))
        if kind == "pre_compose":
            return PreCompose(from_dict(doc["map"]), spec(doc["h"]))
        if kind == "compose":
            return Compose(from_dict(doc["outer"]), from_dict(doc["inner"]))
        if kind == "hadamard":
            F, G = (from_dict(d) for d in doc["maps"])
            return Hadamard(F, G)
        if kind == "normalize":
            return Normalize(from_dict(doc["map"]), doc["epsilon"])
    except KeyError as exc:
        raise ParameterError(f"{kind}: missing field {exc.args[0]!r}") from None
    raise ParameterError(f"unknown fitness map kind {kind!r}")


def from_json(text: str) -> FitnessMap:
    return from_dict(json.loads(text))
