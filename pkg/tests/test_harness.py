import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracbellman.errors import DomainError, InsufficientResolution, PreconditionError
from fracbellman.field import Exterior, Grid, field_from_function
from fracbellman.harness.benchmark import benchmark_problem, solve_benchmark
from fracbellman.harness.checks import (OscillationParams, check_bound_L, check_comparability,
                                        frac_laplacian, frac_laplacian_holder, oscillation_decay,
                                        oscillation_lemma_check, point_estimate_check,
                                        subsolution_identity_check, time_regularity_check,
                                        truncated_constant_kernel)
from fracbellman.harness.cutoffs import phi, psi, smoothstep
from fracbellman.harness.pn import PNField, compute_PN, compute_wA
from fracbellman.operators import rule_for

MU_15 = 1.6710850997634228

G = Grid(1, 2.0, 1 / 64)
G2 = Grid(2, 1.5, 1 / 8)


def field(grid, fn, times=(0.0,), exterior=None, sigma=1.5):
    ext = exterior or Exterior.bounded(fn, 10.0, static=True)
    return field_from_function(grid, list(times), fn, ext, sigma)


def quadratic(grid, times=(0.0,)):
    return field(grid, lambda x, t: 0.5 * np.sum(x ** 2, axis=1) + 0.3 * x[:, 0], times)


def wavy(grid, times=(0.0,)):
    return field(grid, lambda x, t: np.sin(2 * x[:, 0] + t) * np.exp(-np.sum(x ** 2, axis=1)), times)


@pytest.fixture(scope="module")
def coarse_benchmark():
    return solve_benchmark(1.5, h=1 / 64)


class TestCutoffs:
    def test_smoothstep_ends(self):
        assert smoothstep(0.0) == 0.0 and smoothstep(1.0) == 1.0 and smoothstep(0.5) == 0.5

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_monotone(self, a, b):
        lo, hi = sorted([a, b])
        assert smoothstep(lo) <= smoothstep(hi)

    def test_phi_plateau_and_support(self):
        x = np.array([[0.0], [0.5], [0.75], [1.0], [1.5]])
        assert phi(x).tolist() == [1.0, 1.0, 0.5, 0.0, 0.0]

    def test_psi(self):
        x = np.array([[0.5, 0.0], [0.0, 0.8]])
        assert psi(x, 0.75, 0.5).tolist() == [1.0, 0.0]


class TestWA:
    def test_empty_set(self):
        u = wavy(G)
        assert compute_wA(u, lambda y: np.zeros(len(y), bool), 0.25, 0.0) == 0.0

    def test_base_point(self):
        u = wavy(G)
        assert compute_wA(u, lambda y: np.linalg.norm(y, axis=1) < 0.5, 0.0, 0.0) == 0.0

    def test_quadratic_is_position_independent(self):
        u = quadratic(G)
        for x in (0.25, -0.5, 0.75):
            assert abs(compute_wA(u, lambda y: np.linalg.norm(y, axis=1) < 1, x, 0.0)) <= 1e-10

    def test_set_outside_ball(self):
        with pytest.raises(DomainError):
            compute_wA(wavy(G), lambda y: np.ones(len(y), bool), 0.25, 0.0)

    def test_off_grid_point(self):
        with pytest.raises(DomainError):
            compute_wA(wavy(G), lambda y: np.linalg.norm(y, axis=1) < 1, 0.3, 0.0)


class TestPN:
    @pytest.mark.parametrize("grid", [G, G2])
    def test_quadratic_vanishes(self, grid):
        pn = compute_PN(quadratic(grid))
        assert np.all(pn.P == 0) and np.all(pn.N == 0)

    @pytest.mark.parametrize("grid", [G, G2])
    def test_invariants(self, grid):
        u = wavy(grid, times=(0.0, 0.1))
        pn = compute_PN(u)
        assert np.all(pn.P >= 0) and np.all(pn.N >= 0)
        assert np.all(pn.P[:, pn.base] == 0) and np.all(pn.N[:, pn.base] == 0)
        assert np.all(pn.P[:, pn.radius() >= 1] == 0)
        diff = np.abs(pn.P - pn.N)
        assert np.all(pn.P + pn.N >= diff)

    def test_difference_is_w_of_ball(self):
        u = wavy(G)
        pn = compute_PN(u)
        ball = lambda y: np.linalg.norm(y, axis=1) < 1
        for x in (-0.75, -0.25, 0.125, 0.5):
            i = G.node_index(x)
            assert pn.P[0, i] - pn.N[0, i] == pytest.approx(compute_wA(u, ball, x, 0.0), abs=1e-10)

    def test_locality(self):
        u = wavy(Grid(1, 3.0, 1 / 32))
        bumped = u.with_values(u.values + (np.abs(u.grid.points()[:, 0]) > 2.2).astype(float)[None])
        a, b = compute_PN(u), compute_PN(bumped)
        assert np.array_equal(a.P, b.P) and np.array_equal(a.N, b.N)

    def test_refined_quadrature(self, coarse_benchmark):
        # same field, half the cell size in the quadrature only
        u = coarse_benchmark
        t = -0.5
        coarse = compute_PN(u, times=[t])
        fine_rule = rule_for(Grid(1, 2.0, 1 / 128), 1.5)
        fine_grid = Grid(1, 2.0, 1 / 128)
        x = fine_grid.points()
        fine_u = field_from_function(fine_grid, [t], lambda p, s: u.sample(p, s), u.exterior, 1.5)
        fine = compute_PN(fine_u, rule=fine_rule)
        sel = (np.abs(G.points()[:, 0]) > 0.2) & (np.abs(G.points()[:, 0]) < 0.45)
        idx = [fine_grid.node_index(p) for p in G.points()[sel]]
        assert np.all(coarse.P[0, sel] + coarse.N[0, sel] > 0)
        ref = fine.P[0, idx] + fine.N[0, idx]
        assert np.allclose(coarse.P[0, sel] + coarse.N[0, sel], ref, rtol=0.1)


class TestFracLaplacian:
    def test_constant(self):
        u = field(G, lambda x, t: np.full(len(x), 2.0), exterior=Exterior.constant(2.0))
        assert abs(frac_laplacian(u, 0.0, 0.0)) <= 1e-10

    def test_antisymmetry(self):
        u = wavy(G)
        assert frac_laplacian(-u, 0.25, 0.0) == -frac_laplacian(u, 0.25, 0.0)

    def test_cosine_sign_and_value(self):
        u = field(G, lambda x, t: np.cos(x[:, 0]))
        assert frac_laplacian(u, 0.0, 0.0) == pytest.approx(MU_15, rel=1e-2)

    def test_holder_fit_needs_scales(self):
        with pytest.raises(InsufficientResolution):
            frac_laplacian_holder(wavy(Grid(1, 2.0, 0.25)), r_max=0.5)


class TestBoundL:
    def test_zero(self):
        u = field(G, lambda x, t: np.zeros(len(x)), exterior=Exterior.zero())
        rep = check_bound_L(u, 2.0, 1.0, normalize=False)
        assert rep.sup_L == 0.0 and rep.abs_integral == 0.0

    def test_linear_tail_sum(self):
        # |delta u| = |y| for |y| >= 1 only; (2-s) * 2 * int_1^Rt y^{-s} dy with the tail cut at Rt = 1e3
        g = Grid(1, 2.0, 1 / 32)
        u = field_from_function(g, [0.0], lambda x, t: x[:, 0],
                                Exterior.growth(lambda x, t: x[:, 0], 1.0, 1.0), 1.5)
        rep = check_bound_L(u, 2.0, 0.0, radius=0.5, normalize=False)
        assert rep.abs_integral == pytest.approx(2 * 0.5 * 2 * (1 - 1e3 ** -0.5), rel=1e-2)
        assert rep.sup_L == pytest.approx(2.0 * rep.abs_integral / 2, rel=1e-6)


class TestComparability:
    def test_zero_fields(self):
        pn = PNField.synthetic(G, [0.0], lambda x, t: np.zeros(len(x)))
        assert check_comparability(pn, 0.5, 1.0, 2.0).C == 0.0

    def test_equal_fields_equal_constants(self):
        P = np.abs(np.sin(3 * G.points()[:, 0]))[None]
        pn = PNField(G, np.array([0.0]), P, P.copy(), 1.5, G.node_index(0.0))
        assert check_comparability(pn, 0.5, 1.0, 1.0).C == 0.0

    def test_smallest_constant(self):
        r = np.abs(G.points()[:, 0])
        P = (r ** 0.5 * 0.3)[None]
        pn = PNField(G, np.array([0.0]), P, np.zeros_like(P), 1.5, G.node_index(0.0))
        assert check_comparability(pn, 0.5, 1.0, 2.0).C == pytest.approx(0.3)


class TestOscillationDecay:
    def test_zero_trivial_pass(self):
        pn = PNField.synthetic(G, [0.0], lambda x, t: np.zeros(len(x)))
        tr = oscillation_decay(pn)
        assert tr.passed and np.all(tr.M == 0)

    @pytest.mark.parametrize("alpha0", [0.2, 0.5])
    def test_synthetic_exponent(self, alpha0):
        g = Grid(1, 1.0, 1 / 512)
        pn = PNField.synthetic(g, [0.0], lambda x, t: np.abs(x[:, 0]) ** alpha0)
        tr = oscillation_decay(pn, OscillationParams(kappa=0.5, theta=0.0), check_params=False)
        assert tr.alpha == pytest.approx(alpha0, rel=0.05)
        assert np.allclose(tr.ratios, 0.5 ** alpha0, rtol=0.05)

    def test_too_coarse(self):
        pn = PNField.synthetic(Grid(1, 1.0, 0.5), [0.0], lambda x, t: np.abs(x[:, 0]))
        with pytest.raises(InsufficientResolution):
            oscillation_decay(pn)

    def test_parameter_constraints(self):
        OscillationParams(kappa=0.25, theta=0.05).validate(1.5)
        with pytest.raises(DomainError):
            OscillationParams(kappa=0.9, theta=0.05).validate(1.5)
        with pytest.raises(DomainError):
            OscillationParams(kappa=0.25, theta=0.05, alpha=1.49).validate(1.5)


class TestPointEstimate:
    def test_unit(self):
        u = field(G, lambda x, t: np.ones(len(x)), times=np.linspace(-1, 0, 9),
                  exterior=Exterior.constant(1.0))
        rep = point_estimate_check(u, levels=[0.5, 0.9])
        assert rep.C == pytest.approx(1.0, rel=1e-12) or rep.C <= 1.0
        assert np.all(rep.fractions == 1.0)

    def test_zero(self):
        u = field(G, lambda x, t: np.zeros(len(x)), times=np.linspace(-1, 0, 9), exterior=Exterior.zero())
        rep = point_estimate_check(u, levels=[0.5])
        assert np.all(rep.fractions == 0)

    def test_negative_rejected(self):
        u = field(G, lambda x, t: np.full(len(x), -1.0), times=np.linspace(-1, 0, 9),
                  exterior=Exterior.constant(-1.0))
        with pytest.raises(PreconditionError):
            point_estimate_check(u)


class TestOscillationLemma:
    def test_nonpositive(self):
        u = field(G, lambda x, t: -np.exp(-x[:, 0] ** 2), times=np.linspace(-1, 0, 9))
        rep = oscillation_lemma_check(u)
        assert rep.sup_positive == 0.0 and rep.C == 0.0

    def test_constant_guard(self):
        u = field(G, lambda x, t: np.ones(len(x)), times=np.linspace(-1, 0, 9),
                  exterior=Exterior.constant(1.0))
        rep = oscillation_lemma_check(u)
        assert rep.skipped and "guard" in rep.note


class TestTimeRegularity:
    def test_affine(self):
        u = field(G, lambda x, t: 2 * t + 0.5 * x[:, 0], times=np.linspace(-1, 0, 17))
        rep = time_regularity_check(u)
        assert rep.sup_ut == pytest.approx(2.0) and rep.holder_ut <= 1e-9

    def test_time_constant(self):
        u = field(G, lambda x, t: np.sin(x[:, 0]), times=np.linspace(-1, 0, 5))
        rep = time_regularity_check(u)
        assert rep.sup_ut == 0.0 and rep.holder_ut == 0.0


class TestSubsolution:
    def test_zero(self):
        u = field(G, lambda x, t: np.zeros(len(x)), times=np.linspace(-1, 0, 9), exterior=Exterior.zero())
        k = truncated_constant_kernel(1, 1.5)
        assert subsolution_identity_check(u, k, 1.0, 2.0, 1.0).margin <= 0.0

    def test_quadratic_finite(self):
        u = quadratic(G, times=np.linspace(-1, 0, 9))
        k = truncated_constant_kernel(1, 1.5)
        assert math.isfinite(subsolution_identity_check(u, k, 1.0, 2.0, 1.0).margin)

    def test_radii(self):
        with pytest.raises(DomainError):
            subsolution_identity_check(quadratic(G, (0, 1)), truncated_constant_kernel(1, 1.5), 1, 2, 1,
                                       r1=0.4, r2=0.5)


class TestCoarseBenchmark:
    def test_problem_setup(self):
        p = benchmark_problem(1.5)
        assert p.t0 == -1.5 and p.t1 == 0.0 and len(p.family.members) == 3

    @pytest.mark.filterwarnings("ignore:field norm")
    def test_checks_are_finite(self, coarse_benchmark):
        u = coarse_benchmark
        pn = compute_PN(u)
        assert math.isfinite(check_bound_L(u, 2.0, 1.0).sup_L)
        C = [check_comparability(pn, a, 1.0, 2.0).C for a in (0.1, 0.5, 0.9)]
        assert all(math.isfinite(c) for c in C)
        assert C == sorted(C)
        assert math.isfinite(time_regularity_check(u).C)
        k = truncated_constant_kernel(1, 1.5)
        assert math.isfinite(subsolution_identity_check(u, k, 1.0, 2.0, 1.0).margin)
