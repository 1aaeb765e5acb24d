import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracbellman.errors import DomainError
from fracbellman.field import Exterior, Grid, field_from_function
from fracbellman.harness.benchmark import benchmark_exterior
from fracbellman.kernels import KernelSpec, OperatorFamily, adjoint_pair, make_kernel
from fracbellman.operators import (AssembledOperator, bellman, bellman_values,
                                   check_concavity_translation_homogeneity,
                                   check_integration_by_parts, convolve_field, delta_u,
                                   evaluate_linear, linear_values, pucci_extremal, pucci_values,
                                   rule_for, write_evaluation_csv)
from fracbellman.quadrature import QuadratureRule

# mu(sigma) = (2 - sigma) int (1 - cos y) / |y|^(1+sigma) dy, 1e7-node brute force
MU = {1.5: 1.6710850997634228, 1.99: 1.009291943019927, 1.999: 1.0009234075974194}

G1 = Grid(1, 2.0, 1 / 64)
G2 = Grid(2, 1.0, 1 / 8)


def cosine_field(grid, sigma=1.5):
    fn = lambda x, t: np.cos(x[:, 0])
    return field_from_function(grid, [0.0], fn, Exterior.bounded(fn, 1.0, static=True), sigma)


def linear_field(grid, a, sigma=1.5):
    a = np.asarray(a, dtype=float)
    fn = lambda x, t: x @ a
    return field_from_function(grid, [0.0], fn, Exterior.growth(fn, 1.0, float(np.abs(a).sum())), sigma)


def smooth_field(grid, seed, sigma=1.5):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=(3, grid.n))
    amp = rng.normal(size=3)
    def fn(x, t):
        return sum(a * np.exp(-np.sum((x - ci) ** 2, axis=1)) for a, ci in zip(amp, c * 0.5))
    return field_from_function(grid, [0.0], fn, Exterior.bounded(fn, float(np.abs(amp).sum()), static=True),
                               sigma)


class TestQuadrature:
    @pytest.mark.parametrize("n,sigma", [(1, 1.0), (1, 1.5), (1, 1.9), (2, 1.0), (2, 1.5), (2, 1.9)])
    def test_mass_and_sign(self, n, sigma):
        rule = QuadratureRule(n, sigma, 1 / 16, 1.0)
        assert np.all(rule.lattice_w >= 0) and np.all(rule.outer_w >= 0)
        assert rule.inner_coef >= 0
        assert rule.total_mass() == pytest.approx(rule.analytic_mass(), rel=1e-2)

    def test_symmetric_pairs(self):
        rule = QuadratureRule(2, 1.5, 1 / 8, 1.0)
        P, Q = rule.n_lattice_pairs, rule.n_outer_pairs
        assert np.array_equal(rule.lattice_offsets[:P], -rule.lattice_offsets[P:])
        assert np.allclose(rule.outer_y[:Q], -rule.outer_y[Q:])

    def test_rejects_bad_radii(self):
        with pytest.raises(DomainError):
            QuadratureRule(1, 1.5, 0.5, 0.25)


class TestDeltaU:
    def test_constant(self):
        u = field_from_function(G1, [0.0], lambda x, t: np.full(len(x), 3.0), Exterior.constant(3.0))
        for y in (0.1, 0.7, 1.5, 30.0):
            assert delta_u(u, 0.25, 0.0, y) == 0.0

    def test_linear(self):
        u = linear_field(G1, [2.0])
        assert delta_u(u, 0.0, 0.0, 0.5) == pytest.approx(0.0, abs=1e-12)
        assert delta_u(u, 0.0, 0.0, 1.5) == pytest.approx(3.0)
        assert delta_u(u, 0.0, 0.0, -4.0) == pytest.approx(-8.0)

    def test_quadratic(self):
        u = field_from_function(G1, [0.0], lambda x, t: x[:, 0] ** 2)
        assert delta_u(u, 0.0, 0.0, 0.5) == pytest.approx(0.25, abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-0.95, 0.95), st.floats(-3, 3))
    def test_gradient_cancels_in_pairs(self, y, slope):
        g = Grid(1, 2.0, 1 / 32)
        base = smooth_field(g, 0)
        tilted = base.with_values(base.values + slope * g.points()[:, 0][None],
                                  base.exterior.combine(Exterior.growth(lambda x, t: slope * x[:, 0], 1.0,
                                                                        abs(slope))))
        pair = lambda f: delta_u(f, 0.5, 0.0, y) + delta_u(f, 0.5, 0.0, -y)
        assert pair(tilted) == pytest.approx(pair(base), abs=1e-12)


class TestLinear:
    def test_constant_gives_zero(self):
        for g in (G1, G2):
            u = field_from_function(g, [0.0], lambda x, t: np.full(len(x), 2.0), Exterior.constant(2.0))
            k = make_kernel("smooth-odd(0.4)", g.n, 1.5, drift=[0.3] * g.n, Lam=2.0, beta=1.0)
            assert abs(evaluate_linear(k, u, np.zeros(g.n), 0.0).value) <= 1e-10

    @pytest.mark.parametrize("g,a,b", [(G1, [1.5], [0.7]), (G2, [1.0, -2.0], [0.3, 0.4])])
    def test_linear_data_sees_only_drift(self, g, a, b):
        k = make_kernel("anisotropic(0.5)", g.n, 1.5, drift=b, Lam=2.0, beta=1.0)
        ev = evaluate_linear(k, linear_field(g, a), np.zeros(g.n), 0.0)
        assert ev.value == pytest.approx(float(np.dot(a, b)), abs=1e-10)

    def test_cosine_matches_bruteforce_mu(self):
        k = make_kernel("const", 1, 1.5)
        ev = evaluate_linear(k, cosine_field(G1), 0.0, 0.0)
        assert ev.value == pytest.approx(-MU[1.5], rel=1e-2)
        assert ev.tail_error_bound >= 0
        assert set(ev.breakdown) >= {"inner", "middle", "outer", "drift"}

    def test_order_two_limit(self):
        vals = {}
        for s in (1.99, 1.999):
            k = make_kernel("const", 1, s)
            vals[s] = evaluate_linear(k, cosine_field(G1, s), 0.0, 0.0).value
            assert vals[s] == pytest.approx(-MU[s], rel=2e-2)
        assert abs(vals[1.99] / vals[1.999] - 1) < 2e-2

    def test_boundary_point_rejected(self):
        k = make_kernel("const", 1, 1.5)
        with pytest.raises(DomainError):
            evaluate_linear(k, cosine_field(G1), 2.0, 0.0)

    def test_assembled_matches_pointwise(self):
        k = make_kernel("smooth-odd(0.3)", 1, 1.5, drift=[-0.3], Lam=2.0, beta=1.0, scale=1.5)
        ext = benchmark_exterior()
        u = field_from_function(G1, [-0.5], ext, ext, 1.5)
        op = AssembledOperator(k, G1)
        gv = ext(op.stencil.points, -0.5)
        direct = linear_values(k, u, -0.5)["value"]
        assert np.allclose(op.apply(u.flat(-0.5), gv), direct, atol=1e-10 * np.abs(direct).max())

    def test_assembled_is_monotone(self):
        k = make_kernel("odd-bump(0.5)", 2, 1.5, drift=[0.5, -0.2], lam=0.5, Lam=1.5, beta=40)
        op = AssembledOperator(k, G2)
        A = op.A.copy()
        diag = A[np.arange(len(op.nodes)), op.nodes].copy()
        A[np.arange(len(op.nodes)), op.nodes] = 0
        assert np.all(A >= 0) and np.all(op.ext_w >= 0) and np.all(diag <= 0)
        rows = A.sum(axis=1) + np.bincount(op.ext_rows, op.ext_w, minlength=len(op.nodes)) + diag
        assert np.allclose(rows, 0, atol=1e-9 * np.abs(diag).max())

    def test_csv_dump(self, tmp_path):
        u = cosine_field(G1)
        parts = linear_values(make_kernel("const", 1, 1.5), u, 0.0, [10, 20])
        p = tmp_path / "ev.csv"
        write_evaluation_csv(p, u, 0.0, parts, [10, 20], 0.1)
        lines = p.read_text().splitlines()
        assert lines[0] == "x,t,value,inner,middle,outer,drift,tail_bound" and len(lines) == 3


class TestPucci:
    def test_zero(self):
        u = field_from_function(G1, [0.0], lambda x, t: np.zeros(len(x)), Exterior.zero())
        for s in ("plus", "minus"):
            assert pucci_extremal(s, 1, 2, 0.5, u, 0.0, 0.0).value == 0.0

    def test_cosine_values(self):
        u = cosine_field(G1)
        assert pucci_extremal("plus", 1, 2, 0, u, 0.0, 0.0).value == pytest.approx(-MU[1.5], rel=1e-2)
        assert pucci_extremal("minus", 1, 2, 0, u, 0.0, 0.0).value == pytest.approx(-2 * MU[1.5], rel=1e-2)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.1, 1), st.floats(1, 3), st.floats(0, 2))
    def test_duality_is_exact(self, seed, lam, ratio, beta):
        u = smooth_field(G1, seed)
        plus = pucci_values("plus", lam, lam * ratio, beta, -u, 0.0)["value"]
        minus = pucci_values("minus", lam, lam * ratio, beta, u, 0.0)["value"]
        assert np.array_equal(plus, -minus)

    def test_bad_sign(self):
        with pytest.raises(DomainError):
            pucci_values("up", 1, 2, 0, cosine_field(G1), 0.0)

    @pytest.mark.parametrize("g", [G1, G2])
    def test_ellipticity_sandwich(self, g):
        members = [make_kernel("const", g.n, 1.5, drift=[0.5] + [0.0] * (g.n - 1), Lam=2.0, beta=1.0),
                   make_kernel("anisotropic(0.8)", g.n, 1.5, Lam=2.0, beta=1.0, scale=1.1),
                   make_kernel("const", g.n, 1.5, Lam=2.0, beta=1.0, scale=2.0)]
        fam = OperatorFamily.finite(members)
        for seed in range(3):
            u, v = smooth_field(g, seed), smooth_field(g, seed + 100)
            d = u - v
            diff = bellman_values(fam, u, 0.0)[0] - bellman_values(fam, v, 0.0)[0]
            lo = pucci_values("minus", 1, 2, 1, d, 0.0)["value"]
            hi = pucci_values("plus", 1, 2, 1, d, 0.0)["value"]
            scale = max(1.0, np.abs(lo).max(), np.abs(hi).max())
            assert np.all(lo <= diff + 1e-8 * scale) and np.all(diff <= hi + 1e-8 * scale)


class TestBellman:
    def test_singleton(self):
        k = make_kernel("smooth-odd(0.2)", 1, 1.5, drift=[0.1], Lam=2.0, beta=1.0)
        u = cosine_field(G1)
        ev = bellman(OperatorFamily.finite([k]), u, 0.5, 0.0)
        assert ev.value == evaluate_linear(k, u, 0.5, 0.0).value and ev.breakdown["argmin"] == 0

    @pytest.mark.parametrize("a", [1.5, -1.5])
    def test_linear_minimum_over_drifts(self, a):
        fam = OperatorFamily.finite([make_kernel("const", 1, 1.5, beta=1.0),
                                     make_kernel("const", 1, 1.5, drift=[1.0], beta=1.0)])
        ev = bellman(fam, linear_field(G1, [a]), 0.0, 0.0)
        assert ev.value == pytest.approx(min(0.0, a), abs=1e-10)
        assert ev.breakdown["argmin"] == (1 if a < 0 else 0)

    def test_pucci_family_dispatch(self):
        fam = OperatorFamily.pucci(1, 1.5, 1.0, 2.0, 0.0)
        u = cosine_field(G1)
        assert bellman(fam, u, 0.0, 0.0).value == pucci_extremal("minus", 1, 2, 0, u, 0.0, 0.0).value

    def test_superadditive(self):
        fam = OperatorFamily.finite([make_kernel("smooth-odd(0.5)", 1, 1.5, drift=[0.2], Lam=2.0, beta=1.0),
                                     make_kernel("const", 1, 1.5, Lam=2.0, beta=1.0, scale=1.7)])
        u, v = smooth_field(G1, 1), smooth_field(G1, 2)
        nodes = np.linspace(10, G1.size - 11, 100).astype(int)
        lhs = bellman_values(fam, u + v, 0.0, nodes)[0]
        rhs = bellman_values(fam, u, 0.0, nodes)[0] + bellman_values(fam, v, 0.0, nodes)[0]
        assert np.all(lhs >= rhs - 1e-10 * max(1.0, np.abs(rhs).max()))


class TestAdjoint:
    def test_even_kernel_is_self_adjoint(self):
        k = make_kernel("anisotropic(0.5)", 2, 1.5, Lam=2.0)
        y = np.random.default_rng(0).normal(size=(20, 2))
        assert np.array_equal(adjoint_pair(k)(y), k(y)) and adjoint_pair(k).drift == (0.0, 0.0)

    def test_odd_bump_reflects(self):
        k = make_kernel("odd-bump(0.5)", 1, 1.5, drift=[1.0], lam=0.5, Lam=1.5, beta=40)
        adj = adjoint_pair(k)
        assert adj(np.array([[0.3], [-0.3]])).tolist() == [0.5, 1.5]
        assert adj.drift == (-1.0,)


class TestIdentities:
    def bump(self, centre, width=0.2, sigma=1.5):
        fn = lambda x, t: np.exp(-np.sum((x - centre) ** 2, axis=1) / width ** 2)
        return field_from_function(G1, [0.0], fn, Exterior.zero(), sigma)

    def test_self_adjoint_pair(self):
        v = self.bump(0.2)
        assert check_integration_by_parts(make_kernel("const", 1, 1.5), v, v) <= 1e-10

    def test_zero_field(self):
        v = self.bump(0.2)
        z = v * 0.0
        k = make_kernel("smooth-odd(0.5)", 1, 1.5, Lam=2.0)
        assert check_integration_by_parts(k, z, v) == 0.0

    def test_gaussian_pair_with_odd_kernel(self):
        v, w = self.bump(-0.3), self.bump(0.4)
        k = make_kernel("smooth-odd(0.5)", 1, 1.5, Lam=2.0)
        scale = math.sqrt(float(v.values[0] @ v.values[0]) * float(w.values[0] @ w.values[0])) * G1.h
        assert check_integration_by_parts(k, v, w) <= 1e-3 * scale

    def test_requires_compact_support(self):
        k = make_kernel("const", 1, 1.5)
        with pytest.raises(DomainError):
            check_integration_by_parts(k, cosine_field(G1), cosine_field(G1))

    @pytest.mark.parametrize("g", [G1, G2])
    def test_sandwiches(self, g):
        u = smooth_field(g, 4)
        eta = np.array([1, 2, 1], dtype=float) / 4 if g.n == 1 else np.outer([1, 2, 1], [1, 2, 1]) / 16.0
        rep = check_concavity_translation_homogeneity(1.0, 2.0, 0.5, u, eta, 2.0, [1.0] + [0.0] * (g.n - 1))
        assert rep.passed, rep
        assert rep.homogeneity == 0.0 and rep.duality == 0.0

    def test_alpha_zero(self):
        u = smooth_field(G1, 5)
        rep = check_concavity_translation_homogeneity(1.0, 2.0, 0.5, u, np.array([0.25, 0.5, 0.25]), 0.0, [0.5])
        assert rep.homogeneity == 0.0

    def test_bad_mollifier(self):
        with pytest.raises(DomainError):
            convolve_field(smooth_field(G1, 0), np.array([0.5, 0.6, -0.1]))
        with pytest.raises(DomainError):
            convolve_field(smooth_field(G1, 0), np.array([0.5, 0.5]))
