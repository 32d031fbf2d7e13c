from __future__ import annotations

import itertools
import json
import math

import mpmath
import numpy as np
import pytest
import sympy as sp

from replidyn.errors import DimensionError, DomainError, NumericError, ParameterError
from replidyn.fitness import (
    COMBINATORS,
    Constant,
    Exponential,
    Power,
    SumPower,
    Tabulated,
    bound_estimate,
    combine,
    evaluate,
    from_dict,
    from_json,
    grad_complete_symmetric,
    grad_composition,
    grad_gamma_product,
    grad_gauge,
    grad_log_sum_exp,
    grad_separable,
    grad_symmetric_composite,
    gradient_check,
    identity,
    normalize,
    swap,
    verify_sop,
)
from replidyn.fitness.catalog import (
    COMBINATOR_SCHEMAS,
    FAMILIES,
    catalog_listing,
    primitive_instances,
    random_combination,
)
from replidyn.simplex import SimplexPoint

EULER = 0.5772156649015329
POINTS = [(0.5, 0.3, 0.2), (0.1, 0.6, 0.25), (0.2, 0.2, 0.2)]


# -- symbolic oracles: potentials written out independently, differentiated by sympy


def _symbols(m):
    return sp.symbols(f"x1:{m + 1}", nonnegative=True)


def sym_complete(k, m):
    xs = _symbols(m)
    phi = sum(
        sp.Mul(*[x**e for x, e in zip(xs, exps)])
        for exps in itertools.product(range(k + 1), repeat=m)
        if sum(exps) == k
    )
    return xs, phi


def sym_elementary(k, f, m):
    xs = _symbols(m)
    return xs, sum(sp.Mul(*[f(xs[i]) for i in idx]) for idx in itertools.combinations(range(m), k))


def sym_gradient(xs, phi, point):
    subs = dict(zip(xs, point))
    return np.array([float(sp.diff(phi, x).evalf(30, subs=subs)) for x in xs])


class TestPrimitiveExamples:
    def test_identity(self):
        assert evaluate(identity(3), [0.5, 0.3, 0.2]).tolist() == [0.5, 0.3, 0.2]

    def test_gauge_unit_norm(self):
        # (0.6, 0.8, 0) has l1 norm 1.4, outside B_+^3; the map itself is defined on R_+^m
        out = evaluate(grad_gauge(2.0, 3), [0.6, 0.8, 0.0], domain_check=False)
        assert np.allclose(out, [0.6, 0.8, 0.0], rtol=1e-15, atol=0)
        with pytest.raises(DomainError):
            evaluate(grad_gauge(2.0, 3), [0.6, 0.8, 0.0])
        # the gradient is 0-homogeneous, so the rescaled point inside B_+^3 agrees
        assert np.allclose(evaluate(grad_gauge(2.0, 3), [0.36, 0.48, 0.0]), [0.6, 0.8, 0.0], rtol=1e-15)

    def test_gauge_vertex_and_origin(self):
        assert evaluate(grad_gauge(2.0, 3), [1.0, 0, 0]).tolist() == [1.0, 0, 0]
        assert evaluate(grad_gauge(3.0, 3), [0.0, 0, 0]).tolist() == [0, 0, 0]

    def test_complete_symmetric_k2_m2(self):
        # phi = a^2 + ab + b^2, gradient (2a + b, a + 2b)
        assert np.allclose(evaluate(grad_complete_symmetric(2, 2), [0.3, 0.1]), [0.7, 0.5], rtol=1e-15)

    def test_complete_symmetric_k1_is_constant(self):
        assert evaluate(grad_complete_symmetric(1, 4), [0.1, 0.2, 0.3, 0.4]).tolist() == [1.0] * 4

    def test_gamma_at_origin(self):
        # Gamma(2)^m psi(2) = 1 - gamma
        assert np.allclose(evaluate(grad_gamma_product(2.0, 3), [0.0, 0, 0]), [1 - EULER] * 3, rtol=1e-14)

    def test_gamma_m1(self):
        # Gamma(3) psi(3) = 2 (3/2 - gamma)
        assert evaluate(grad_gamma_product(2.0, 1), [1.0])[0] == pytest.approx(2 * (1.5 - EULER), rel=1e-14)

    def test_separable_square(self):
        assert np.allclose(evaluate(grad_separable(Power(2.0), 3), [0.5, 0.3, 0.2]), [1.0, 0.6, 0.4], rtol=1e-15)

    def test_separable_exponential(self):
        out = evaluate(grad_separable(Exponential(1.0), 3), [0.5, 0.3, 0.2])
        assert np.allclose(out, np.exp([0.5, 0.3, 0.2]), rtol=1e-15)

    def test_composite_k2_at_origin(self):
        assert evaluate(grad_symmetric_composite(2, Exponential(1.0), 3), [0.0, 0, 0]).tolist() == [2.0, 2.0, 2.0]

    def test_composite_k1_collapses_to_separable(self):
        x = [0.5, 0.3, 0.2]
        a = evaluate(grad_symmetric_composite(1, Exponential(2.0), 3), x)
        b = evaluate(grad_separable(Exponential(2.0), 3), x)
        assert np.allclose(a, b, rtol=1e-15)

    def test_log_sum_exp(self):
        x = np.array([0.5, 0.3, 0.2])
        soft = np.exp(5 * x) / np.exp(5 * x).sum()
        assert np.allclose(evaluate(grad_log_sum_exp(5.0, 3, 0.5), x), soft + 0.5 * x, rtol=1e-14)


class TestSymbolicGradients:
    """Each gradient primitive against sympy differentiation of its potential."""

    @pytest.mark.parametrize("k,m", [(2, 2), (2, 3), (3, 3), (3, 4)])
    def test_complete_symmetric(self, k, m):
        xs, phi = sym_complete(k, m)
        F = grad_complete_symmetric(k, m)
        for p in POINTS:
            pt = (list(p) + [0.05] * m)[:m]
            assert np.allclose(evaluate(F, pt, domain_check=False), sym_gradient(xs, phi, pt), rtol=1e-13)

    @pytest.mark.parametrize("p", [2.0, 3.0, 1.5])
    def test_gauge(self, p):
        xs = _symbols(3)
        phi = sum(x**p for x in xs) ** (1 / p)
        for pt in POINTS:
            assert np.allclose(evaluate(grad_gauge(p, 3), pt), sym_gradient(xs, phi, pt), rtol=1e-13)

    @pytest.mark.parametrize("a", [2.0, 3.0])
    def test_gamma_product(self, a):
        xs = _symbols(3)
        phi = sp.Mul(*[sp.gamma(x + a) for x in xs])
        for pt in POINTS:
            assert np.allclose(evaluate(grad_gamma_product(a, 3), pt), sym_gradient(xs, phi, pt), rtol=1e-13)

    @pytest.mark.parametrize("spec,f", [(Power(2.0), lambda t: t**2), (Power(2.5), lambda t: t**2.5),
                                        (Exponential(2.0), lambda t: sp.exp(2 * t))])
    def test_separable(self, spec, f):
        xs = _symbols(3)
        phi = sum(f(x) for x in xs)
        for pt in POINTS:
            assert np.allclose(evaluate(grad_separable(spec, 3), pt), sym_gradient(xs, phi, pt), rtol=1e-13)

    @pytest.mark.parametrize("k,m,scale", [(2, 3, 1.0), (2, 4, 2.0), (3, 4, 1.0), (1, 2, 2.0)])
    def test_symmetric_composite(self, k, m, scale):
        xs, phi = sym_elementary(k, lambda t: sp.exp(scale * t), m)
        F = grad_symmetric_composite(k, Exponential(scale), m)
        for p in POINTS:
            pt = (list(p) + [0.05] * m)[:m]
            assert np.allclose(evaluate(F, pt, domain_check=False), sym_gradient(xs, phi, pt), rtol=1e-13)

    def test_log_sum_exp(self):
        xs = _symbols(3)
        phi = sp.log(sum(sp.exp(5 * x) for x in xs)) / 5 + sp.Rational(1, 4) * sum(x**2 for x in xs)
        for pt in POINTS:
            assert np.allclose(evaluate(grad_log_sum_exp(5.0, 3, 0.5), pt), sym_gradient(xs, phi, pt), rtol=1e-13)

    def test_composition(self):
        xs = _symbols(3)
        phi = sp.sqrt(sum(x**4 for x in xs))  # ||h(x)||_2 with h(t) = t^2
        F = grad_composition(grad_gauge(2.0, 3), Power(2.0))
        for pt in POINTS:
            assert np.allclose(evaluate(F, pt), sym_gradient(xs, phi, pt), rtol=1e-13)

    def test_gamma_extended_precision_against_mpmath(self):
        mpmath.mp.prec = 200
        x = [mpmath.mpf(1) / 2, mpmath.mpf(3) / 10, mpmath.mpf(1) / 5]
        prod = mpmath.fprod(mpmath.gamma(v + 2) for v in x)
        ref = [prod * mpmath.digamma(v + 2) for v in x]
        out = evaluate(grad_gamma_product(2.0, 3), SimplexPoint.from_coords(["0.5", "0.3", "0.2"], 200))
        for o, r in zip(out, ref):
            assert abs(mpmath.mpf(str(o)) - r) / abs(r) < mpmath.mpf(2) ** -180


class TestParameters:
    @pytest.mark.parametrize(
        "build",
        [
            lambda: grad_complete_symmetric(0, 3),
            lambda: grad_complete_symmetric(4, 3),
            lambda: grad_gauge(1.0, 3),
            lambda: grad_gamma_product(0.5, 3),
            lambda: grad_symmetric_composite(2, Power(2.0), 3),
            lambda: grad_symmetric_composite(3, Exponential(1.0), 3),
            lambda: grad_log_sum_exp(0.0, 3),
            lambda: normalize(identity(3), 0.0),
            lambda: normalize(identity(3), -0.1),
            lambda: Power(1.0),
            lambda: Exponential(0.0),
            lambda: Tabulated([0, 1, 2], [0, 1, 2]),
            lambda: combine("affine_shift", identity(3), phi=Constant(0.0)),
            lambda: combine("conic_combination", identity(3), identity(2)),
            lambda: combine("hadamard", identity(3), grad_gamma_product(1.2, 3)),
            lambda: combine("nonsense", identity(3)),
        ],
    )
    def test_rejected(self, build):
        with pytest.raises((ParameterError, DimensionError)):
            build()

    def test_gamma_below_digamma_root_is_not_positive(self):
        F = grad_gamma_product(1.0, 3)
        assert not F.positive
        assert evaluate(F, [0.0, 0, 0])[0] == pytest.approx(-EULER, rel=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            evaluate(identity(3), [0.5, 0.5])

    def test_outside_ball(self):
        with pytest.raises(DomainError):
            evaluate(identity(3), [0.5, 0.5, 0.5])
        with pytest.raises(DomainError):
            evaluate(identity(2), [-0.1, 0.5])

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_overflowing_bound_rejected(self):
        with pytest.raises(NumericError):
            combine("post_compose", grad_separable(Exponential(1.0), 2), h=Exponential(800.0))

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_nonfinite_reports_node_path(self):
        F = combine("post_compose", grad_separable(Exponential(1.0), 2), h=Exponential(1.0))
        with pytest.raises(NumericError) as err:
            evaluate(F, [800.0, 0.0], domain_check=False)
        assert err.value.path


class TestCombinators:
    def test_affine_neutral(self):
        F = grad_gauge(3.0, 3)
        G = combine("affine_shift", F, phi=Constant(1.0), psi=Constant(0.0))
        for pt in POINTS:
            assert np.array_equal(evaluate(G, pt), evaluate(F, pt))

    def test_conic_identity_sum(self):
        F = combine("conic_combination", identity(3), identity(3), phi=Constant(1.0), psi=Constant(1.0))
        assert np.allclose(evaluate(F, [0.5, 0.3, 0.2]), [1.0, 0.6, 0.4], rtol=1e-15)

    def test_hadamard_identity_square(self):
        F = combine("hadamard", identity(3), identity(3))
        assert np.allclose(evaluate(F, [0.5, 0.3, 0.2]), [0.25, 0.09, 0.04], rtol=1e-15)

    def test_post_and_pre_compose(self):
        x = np.array([0.5, 0.3, 0.2])
        post = combine("post_compose", grad_separable(Power(2.0), 3), h=Exponential(1.0))
        assert np.allclose(evaluate(post, x), np.exp(2 * x), rtol=1e-15)
        pre = combine("pre_compose", grad_separable(Power(2.0), 3), h=Power(2.0))
        assert np.allclose(evaluate(pre, x, domain_check=False), 2 * x**2, rtol=1e-15)

    def test_compose(self):
        x = np.array([0.5, 0.3, 0.2])
        F = combine("compose", grad_separable(Power(3.0), 3), identity(3))
        assert np.allclose(evaluate(F, x), 3 * x**2, rtol=1e-15)

    def test_sum_power_field(self):
        x = np.array([0.25, 0.25, 0.0])
        F = combine("affine_shift", identity(3), phi=SumPower(2.0), psi=Constant(0.1))
        assert np.allclose(evaluate(F, x), 2.25 * x + 0.1, rtol=1e-15)

    def test_bound_propagation(self):
        F = combine("conic_combination", identity(3), grad_separable(Power(2.0), 3), phi=Constant(2.0), psi=Constant(3.0))
        assert F.bound_kind == "analytic" and F.declared_bound == pytest.approx(2 * 1 + 3 * 2)
        H = combine("hadamard", identity(3), grad_separable(Power(2.0), 3))
        assert H.declared_bound == pytest.approx(2.0)


class TestNormalize:
    def test_formula(self):
        # identity bound 1, eps 0.5, scale 1.5
        out = evaluate(normalize(identity(3), 0.5), [1.0, 0.0, 0.0])
        assert np.allclose(out, [1.0, 1 / 3, 1 / 3], rtol=1e-15)

    def test_constant_like(self):
        # k = 1 complete symmetric gradient is constant 1 with bound 1
        out = evaluate(normalize(grad_complete_symmetric(1, 3), 0.3), [0.5, 0.3, 0.2])
        assert np.allclose(out, [(1 + 0.3) / 1.3] * 3, rtol=1e-15)

    @pytest.mark.parametrize("F", primitive_instances(3), ids=lambda F: F.kind)
    def test_range_and_pattern(self, F, rng):
        N = normalize(F, 0.1)
        pts = rng.dirichlet(np.ones(3), 2000)
        out = evaluate(N, pts)
        assert np.all(out > 0) and np.all(out <= 1 + 1e-12)
        raw = evaluate(F, pts)
        s_raw = np.sign(raw[:, :, None] - raw[:, None, :])
        s_out = np.sign(out[:, :, None] - out[:, None, :])
        assert np.array_equal(s_raw, s_out)

    @pytest.mark.parametrize("F", primitive_instances(3) + [combine("affine_shift", identity(3), phi=Constant(0.05), psi=Constant(0.25))],
                             ids=lambda F: F.kind)
    @pytest.mark.parametrize("bits", [128, 256])
    def test_complement_is_exact(self, F, bits):
        N = normalize(F, 0.1)
        x = SimplexPoint.from_coords([0.4, 0.35, 0.25], bits)
        with x.arith.context():
            total = N._eval(x.coords, x.arith) + N.complement(x.coords, x.arith)
        assert max(abs(float(v - 1)) for v in total) <= 2.0 ** (-bits + 6)


class TestBounds:
    def test_identity(self):
        assert bound_estimate(identity(4)) == 1.0

    def test_separable_square(self):
        assert bound_estimate(grad_separable(Power(2.0), 3)) == 2.0

    def test_gauge(self, rng):
        assert bound_estimate(grad_gauge(2.0, 3)) == 1.0
        pts = rng.dirichlet(np.ones(3), 500) * rng.random((500, 1))
        assert evaluate(grad_gauge(2.0, 3), pts).max() <= 1.0

    @pytest.mark.parametrize("m", [2, 3, 5])
    def test_declared_bounds_dominate_samples(self, m, rng):
        pts = rng.dirichlet(np.ones(m), 2000) * rng.random((2000, 1)) ** (1 / m)
        for F in primitive_instances(m):
            assert evaluate(F, pts).max() <= F.declared_bound * (1 + 1e-12), F.to_dict()

    def test_sampled_bound_has_safety_factor(self):
        F = combine("compose", grad_gauge(2.0, 3), grad_separable(Exponential(1.0), 3))
        assert F.bound_kind == "sampled"
        assert bound_estimate(F) == pytest.approx(F.declared_bound)


class TestSerialization:
    @pytest.mark.parametrize("m", [2, 3])
    def test_round_trip(self, m, rng):
        maps = primitive_instances(m) + [random_combination(k, m, rng) for k in COMBINATORS]
        maps.append(normalize(maps[-1], 0.2))
        maps.append(combine("post_compose", identity(m), h=Tabulated([0, 0.5, 1], [0, 0.5, 1.5])))
        x = rng.dirichlet(np.ones(m), 5)
        for F in maps:
            G = from_json(F.to_json())
            assert G == F and hash(G) == hash(F)
            assert np.array_equal(evaluate(G, x), evaluate(F, x))

    def test_document_shape(self):
        doc = normalize(grad_gauge(2.0, 3), 0.1).to_dict()
        assert doc == {"kind": "normalize", "epsilon": 0.1, "map": {"kind": "grad_gauge", "p": 2.0, "m": 3}}

    def test_bad_documents(self):
        for doc in [{}, {"kind": "grad_gauge", "m": 3}, {"kind": "unknown"}, [1, 2]]:
            with pytest.raises(ParameterError):
                from_dict(doc)
        with pytest.raises(json.JSONDecodeError):
            from_json("{")


class TestVerifySop:
    def test_identity_passes(self):
        assert verify_sop(identity(4), 500, 0).passed

    def test_gauge_seed_1(self):
        assert verify_sop(grad_gauge(2.0, 3), 10_000, 1).passed

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_swap_fails(self, seed):
        report = verify_sop(swap(3), 100, seed)
        assert not report.passed
        w = report.witnesses[0]
        assert w["pair"] and np.sign(w["x_diff"]) != np.sign(w["f_diff"])

    def test_report_records_range(self):
        report = verify_sop(grad_separable(Power(2.0), 3), 200, 0)
        assert report.range_exceeded > 0 and report.max_value <= 2.0

    def test_gradient_check_reports(self):
        r = gradient_check(grad_gauge(2.0, 3), 20, 0)
        assert r.passed and r.max_rel_error < 1e-8


class TestCatalog:
    def test_counts(self):
        listing = catalog_listing()
        assert len(FAMILIES) == len(listing["primitives"]) == 7
        assert len(COMBINATOR_SCHEMAS) == len(listing["combinators"]) == 6
        assert set(COMBINATOR_SCHEMAS) == set(COMBINATORS)

    @pytest.mark.parametrize("m", [2, 3, 5])
    def test_two_parameterizations(self, m):
        for fam in FAMILIES:
            inst = fam.instances(m)
            assert len(inst) >= 1 and all(F.m == m for F in inst)
            if not (fam.kind == "grad_complete_symmetric" and m == 2):
                assert len(set(inst)) == 2

    @pytest.mark.parametrize("m", [2, 3, 5])
    def test_symmetry_at_ties(self, m, rng):
        pts = rng.dirichlet(np.ones(m), 200)
        pts[:, 1] = pts[:, 0]
        pts /= pts.sum(axis=1, keepdims=True)
        for F in primitive_instances(m):
            out = evaluate(F, pts)
            assert np.allclose(out[:, 0], out[:, 1], rtol=1e-13, atol=0), F.to_dict()

    def test_center_components_equal(self):
        for m in (2, 3, 5):
            c = np.full(m, 1.0 / m)
            for F in primitive_instances(m):
                out = evaluate(F, c)
                assert np.allclose(out, out[0], rtol=1e-13), F.to_dict()


def test_math_constants_used_in_oracles():
    assert EULER == pytest.approx(float(mpmath.euler), rel=1e-16)
    assert math.isclose(2 * (1.5 - EULER), float(mpmath.gamma(3) * mpmath.digamma(3)), rel_tol=1e-15)
