"""Registry of primitive families and combinators, with standard parameterizations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .maps import (
    COMBINATORS,
    FitnessMap,
    combine,
    grad_complete_symmetric,
    grad_composition,
    grad_gamma_product,
    grad_gauge,
    grad_log_sum_exp,
    grad_separable,
    grad_symmetric_composite,
    normalize,
)
from .scalar import Constant, Exponential, Power, SumPower
from .verify import gradient_check, verify_sop


@dataclass(frozen=True)
class Family:
    name: str
    kind: str
    params: dict
    summary: str

    def instances(self, m: int) -> list:
        return _INSTANCES[self.kind](m)


def _complete(m):
    # k = 1 gives a constant gradient, which is not order preserving
    ks = sorted({2, min(3, m)})
    return [grad_complete_symmetric(k, m) for k in ks]


def _composite(m):
    # with exp, k = m makes all components equal (exp is log-linear, not strictly log-convex)
    if m == 2:
        return [grad_symmetric_composite(1, Exponential(1.0), m), grad_symmetric_composite(1, Exponential(2.0), m)]
    return [grad_symmetric_composite(2, Exponential(1.0), m), grad_symmetric_composite(m - 1, Exponential(2.0), m)]


_INSTANCES = {
    "grad_complete_symmetric": _complete,
    "grad_gauge": lambda m: [grad_gauge(2.0, m), grad_gauge(3.0, m)],
    "grad_gamma_product": lambda m: [grad_gamma_product(2.0, m), grad_gamma_product(3.0, m)],
    "grad_separable": lambda m: [grad_separable(Power(2.0), m), grad_separable(Exponential(2.0), m)],
    "grad_symmetric_composite": _composite,
    "grad_log_sum_exp": lambda m: [grad_log_sum_exp(1.0, m), grad_log_sum_exp(5.0, m, 0.5)],
    "grad_composition": lambda m: [
        grad_composition(grad_gauge(2.0, m), Power(2.0)),
        grad_composition(grad_complete_symmetric(2, m), Exponential(1.0)),
    ],
}

FAMILIES = (
    Family("complete symmetric", "grad_complete_symmetric", {"k": "integer, 1 <= k <= m", "m": "integer"},
           "gradient of the complete homogeneous symmetric polynomial of degree k"),
    Family("symmetric gauge", "grad_gauge", {"p": "real > 1", "m": "integer"},
           "gradient of the p-norm, zero at the origin"),
    Family("gamma product", "grad_gamma_product", {"a": "real >= 1", "m": "integer"},
           "gradient of prod_i Gamma(x_i + a)"),
    Family("convex separable", "grad_separable", {"f": "scalar spec (strictly convex)", "m": "integer"},
           "gradient of sum_k f(x_k)"),
    Family("symmetric composite", "grad_symmetric_composite",
           {"k": "integer, 1 <= k <= m", "f": "scalar spec (log-convex)", "m": "integer"},
           "gradient of the elementary symmetric polynomial e_k(f(x_1), ..., f(x_m))"),
    Family("convex symmetric", "grad_log_sum_exp", {"s": "real > 0", "c": "real >= 0", "m": "integer"},
           "gradient of (1/s) log sum exp(s x_k) + (c/2)||x||^2"),
    Family("convex composition", "grad_composition", {"inner": "gradient primitive", "h": "scalar spec (strictly convex)"},
           "gradient of psi(h(x_1), ..., h(x_m)) for a catalog potential psi"),
)

COMBINATOR_SCHEMAS = {
    "affine_shift": {"map": "FitnessMap", "phi": "positive scalar field", "psi": "nonnegative scalar field"},
    "conic_combination": {"maps": "[FitnessMap, FitnessMap]", "phi": "positive scalar field", "psi": "positive scalar field"},
    "post_compose": {"h": "scalar spec", "map": "FitnessMap"},
    "pre_compose": {"map": "FitnessMap", "h": "scalar spec"},
    "compose": {"outer": "FitnessMap", "inner": "FitnessMap"},
    "hadamard": {"maps": "[FitnessMap, FitnessMap] (nonnegative)"},
}


def primitive_instances(m: int) -> list:
    return [F for fam in FAMILIES for F in fam.instances(m)]


def _random_field(rng):
    if rng.random() < 0.5:
        return Constant(float(rng.uniform(0.5, 2.0)))
    return SumPower(float(rng.uniform(-1.0, 2.0)))


def _random_scalar(rng):
    if rng.random() < 0.5:
        return Power(float(rng.uniform(1.2, 3.0)))
    return Exponential(float(rng.uniform(0.5, 2.0)))


def random_combination(kind: str, m: int, rng: np.random.Generator) -> FitnessMap:
    """The combinator ``kind`` applied to randomly chosen catalog primitives."""
    pool = primitive_instances(m)
    if kind == "hadamard":
        pool = [F for F in pool if F.nonnegative]
    a, b = (pool[i] for i in rng.choice(len(pool), size=2, replace=False))
    if kind == "affine_shift":
        return combine(kind, a, phi=_random_field(rng), psi=_random_field(rng))
    if kind == "conic_combination":
        return combine(kind, a, b, phi=_random_field(rng), psi=_random_field(rng))
    if kind in ("post_compose", "pre_compose"):
        return combine(kind, a, h=_random_scalar(rng))
    return combine(kind, a, b)


def closure_suite(dims=(2, 3, 5), samples: int = 10_000, seed: int = 1, extra=()) -> list:
    """verify_sop over every primitive instance, one random application of each
    combinator, and the normalized form of each; ``extra`` maps are checked too."""
    rng = np.random.default_rng(seed)
    results = []
    for m in dims:
        maps = primitive_instances(m)
        maps += [random_combination(kind, m, rng) for kind in COMBINATORS]
        maps += [normalize(F, 0.1) for F in maps[-len(COMBINATORS):]]
        for F in maps:
            results.append(verify_sop(F, samples, seed))
    for F in extra:
        results.append(verify_sop(F, samples, seed))
    return results


def gradient_suite(dims=(2, 3, 5), points: int = 100, seed: int = 1) -> list:
    return [gradient_check(F, points, seed) for m in dims for F in primitive_instances(m) if F.is_gradient]


def catalog_listing() -> dict:
    return {
        "primitives": [
            {"family": f.name, "kind": f.kind, "params": f.params, "summary": f.summary} for f in FAMILIES
        ],
        "combinators": [{"kind": k, "params": v} for k, v in COMBINATOR_SCHEMAS.items()],
        "wrappers": [{"kind": "normalize", "params": {"map": "FitnessMap", "epsilon": "real > 0"}}],
        "scalar_specs": ["power(q > 1)", "exponential(scale > 0)", "tabulated(knots, values)"],
        "scalar_fields": ["constant(c)", "sum_power(r): (1 + sum x)^r"],
    }
