import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from lipsched.errors import TrivialTransportError
from lipsched.lipschitz import lambda_of_schedule, lambda_of_schedule_field, random_monotone_schedule
from lipsched.schedule import optimal_schedule, trivial_schedule
from lipsched.spectral import SpectralBounds, SpectralField, constant_field, trapezoid_weights
from lipsched.variational import (k_p, l2_distance, log_k_p, lp_objective, ode_residual,
                                  reduced_sup, solve_linf_numeric, solve_lp, sup_distance,
                                  z_p_time_side)

T = np.linspace(0.0, 1.0, 1001)


def bumpy_field(n=201):
    s, w = trapezoid_weights(0.0, 1.0, n)
    f = 1.5 * np.sin(3 * s) ** 2 + 0.2
    g = -0.6 * np.exp(-20 * (s - 0.7) ** 2) + 0.1 * s
    return SpectralField(s, f, g, w)


class TestKp:
    def test_constant_one(self):
        assert log_k_p(constant_field(1.0, 1.0), 0.0, 1) == pytest.approx(math.log(2), abs=1e-15)

    def test_constant_r(self):
        assert log_k_p(constant_field(1.0, 1.0), 1.0, 2) == pytest.approx(math.log(1 / 8), abs=1e-14)

    def test_alias(self):
        fld = bumpy_field()
        assert k_p(fld, 0.3, 3) == log_k_p(fld, 0.3, 3)

    def test_direct_sum_p1(self):
        fld = bumpy_field()
        direct = math.log(np.sum(fld.weights * (fld.f ** 2 + fld.g ** 2)))
        assert abs(log_k_p(fld, 0.0, 1) - direct) <= 1e-12

    @given(st.floats(0.0, 1.0), st.integers(1, 12))
    def test_direct_sum_any_x(self, x, p):
        fld = bumpy_field(41)
        a = fld.f / (1 + x * fld.f)
        b = fld.g / (1 + x * fld.g)
        direct = math.log(np.sum(fld.weights * (a ** (2 * p) + b ** (2 * p))))
        assert abs(log_k_p(fld, x, p) - direct) <= 1e-12 * max(1.0, abs(direct))

    def test_large_p_does_not_overflow(self):
        fld = constant_field(1e4, -0.999)
        v = log_k_p(fld, np.linspace(0, 1, 5), 512)
        assert np.all(np.isfinite(v))
        # at x = 0 the f term dominates: ln(2p ln f*) to leading order
        assert v[0] == pytest.approx(1024 * math.log(1e4), rel=1e-12)

    def test_zero_field(self):
        with pytest.raises(TrivialTransportError, match="trivial transport"):
            log_k_p(constant_field(0.0, 0.0), 0.5, 1)

    def test_bad_p(self):
        with pytest.raises(ValueError):
            log_k_p(bumpy_field(), 0.5, 0)


class TestLpObjective:
    def test_trivial_constant_field(self):
        assert lp_objective(constant_field(1.0, 1.0), trivial_schedule(), 1) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("sched", [trivial_schedule(), optimal_schedule((1.0, -0.5)),
                                       optimal_schedule((2.0, -0.5))])
    def test_large_p_approaches_sup(self, sched):
        fld = constant_field(1.0, -0.5)
        lam = lambda_of_schedule_field(fld, sched)
        assert abs(lp_objective(fld, sched, 128) / lam - 1.0) <= 0.02

    def test_large_p_gap_shrinks(self):
        # narrow peaks converge more slowly, but the gap still closes monotonically
        fld = bumpy_field()
        for sched in (trivial_schedule(), optimal_schedule((2.0, -0.5))):
            lam = lambda_of_schedule_field(fld, sched)
            gaps = [lam - lp_objective(fld, sched, p) for p in (8, 32, 128, 512)]
            assert all(g >= -1e-12 for g in gaps)
            assert all(b < a for a, b in zip(gaps, gaps[1:]))
            assert gaps[-1] / lam < 0.02

    def test_zero_field(self):
        with pytest.raises(TrivialTransportError, match="trivial transport"):
            lp_objective(constant_field(0.0, 0.0), trivial_schedule(), 2)


class TestSolveLp:
    @pytest.mark.parametrize("r", [0.1, 0.5, 2.0, 10.0])
    @pytest.mark.parametrize("p", [1, 8, 64])
    def test_constant_field_closed_form(self, r, p):
        sol = solve_lp(constant_field(r - 1, r - 1), p, 512)
        assert np.max(np.abs(sol.schedule(T) - (r ** T - 1) / (r - 1))) <= 1e-8
        assert sol.schedule(0.0) == 0.0 and sol.schedule(1.0) == 1.0

    def test_constant_field_p_invariant(self):
        # f == g: K_p^(1/2p) is a p-dependent constant times 1 / (1 + u c)
        fld = constant_field(2.0, 2.0, n=5)
        sols = [solve_lp(fld, p, 512).schedule for p in (1, 2, 4, 8, 16, 32, 64)]
        for s in sols[1:]:
            assert sup_distance(s, sols[0]) < 1e-8

    @pytest.mark.parametrize("p", [1, 3, 16])
    def test_residual_and_z_identity(self, p):
        fld = bumpy_field()
        sol = solve_lp(fld, p, 512)
        assert sol.z_p > 0 and sol.grid_size == 512
        assert sol.residual_sup <= 1e-6
        assert abs(z_p_time_side(fld, sol) - sol.z_p) <= 1e-6 * sol.z_p
        # residual at points the solver never saw
        t = np.linspace(0.013, 0.987, 301)
        assert ode_residual(fld, sol.schedule, p, sol.z_p, t) <= 1e-5

    def test_z_p_against_adaptive_quadrature(self):
        fld = bumpy_field()
        sol = solve_lp(fld, 2, 512)
        integral, _ = quad(lambda u: math.exp(log_k_p(fld, u, 2) / 4), 0, 1, epsabs=1e-13)
        assert sol.z_p == pytest.approx(1.0 / integral, rel=1e-10)

    @pytest.mark.parametrize("p", [1, 2, 4])
    def test_minimality(self, p):
        fld = bumpy_field(101)
        sol = solve_lp(fld, p, 1024)
        best = lp_objective(fld, sol.schedule, p)
        b = SpectralBounds(float(fld.f.max()), float(fld.g.min()))
        rng = np.random.default_rng(p)
        candidates = [trivial_schedule(), optimal_schedule(b)]
        candidates += [random_monotone_schedule(rng, optimal_schedule(b)) for _ in range(20)]
        for c in candidates:
            assert best <= lp_objective(fld, c, p) + 1e-8

    def test_p1_constant_field_minimal(self):
        fld = constant_field(1.0, 1.0)
        sol = solve_lp(fld, 1)
        best = lp_objective(fld, sol.schedule, 1)
        assert best <= lp_objective(fld, trivial_schedule(), 1)
        assert best <= lp_objective(fld, optimal_schedule((1.0, 1.0)), 1) + 1e-8

    def test_serialization(self):
        sol = solve_lp(bumpy_field(), 2, 64)
        d = sol.to_dict()
        assert d["kind"] == "tabulated" and d["p"] == 2
        assert {"z_p", "residual_sup", "t", "tau", "tau_dot"} <= set(d)

    def test_rejects_small_grid(self):
        with pytest.raises(ValueError):
            solve_lp(bumpy_field(), 2, 8)

    def test_gamma_convergence_bumpy(self):
        fld = bumpy_field()
        target = optimal_schedule(SpectralBounds(float(fld.f.max()), float(fld.g.min())))
        d = [l2_distance(solve_lp(fld, p, 1024).schedule, target) for p in (1, 2, 4, 8, 16, 32, 64)]
        for a, b in zip(d, d[1:]):
            assert b <= 1.1 * a
        assert d[-1] < 0.01


class TestLinfNumeric:
    @pytest.mark.parametrize("fg,tol", [((1.0, -0.5), 1e-6), ((0.5, -0.9), 1e-6),
                                        ((1.0, 1.0), 1e-8), ((-0.9, -0.9), 1e-8),
                                        ((9.0, 9.0), 1e-8)])
    def test_matches_closed_form(self, fg, tol):
        num = solve_linf_numeric(SpectralBounds(*fg))
        assert sup_distance(num, optimal_schedule(fg)) <= tol

    def test_sup_constant(self):
        b = SpectralBounds(30.0, -0.95)
        num = solve_linf_numeric(b)
        lam = lambda_of_schedule(b, num)
        assert lam == pytest.approx(lambda_of_schedule(b, optimal_schedule(b)), rel=1e-6)


class TestDistances:
    def test_trivial_zero(self):
        assert l2_distance(trivial_schedule(), trivial_schedule()) == 0.0

    def test_simple_f_against_quad(self):
        ref = math.sqrt(quad(lambda t: (2 ** t - 1 - t) ** 2, 0, 1, epsabs=1e-14)[0])
        d = l2_distance(trivial_schedule(), optimal_schedule((1.0, 1.0)))
        assert d > 0 and abs(d - ref) <= 1e-6

    def test_symmetric(self):
        a, b = optimal_schedule((3.0, -0.4)), optimal_schedule((0.2, -0.9))
        assert l2_distance(a, b) == l2_distance(b, a)


def test_reduced_sup_kink():
    # the two terms cross where f/(1+uf) = -g/(1+ug)
    f, g = 1.0, -0.5
    assert reduced_sup(f, g, 0.5) == pytest.approx(2 / 3)
    assert reduced_sup(f, g, 0.0) == 1.0
