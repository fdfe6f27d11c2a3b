import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from lipsched.errors import AdmissibilityError, DomainError, TrivialTransportError
from lipsched.lipschitz import lambda_optimal_closed
from lipsched.schedule import (ExponentialSchedule, PiecewiseSchedule, TabulatedSchedule,
                               TrivialTransportWarning, optimal_schedule, schedule_from_dict,
                               schedule_from_json, transition_time, trivial_schedule)
from lipsched.spectral import SpectralBounds
from lipsched.variational import reduced_sup

from conftest import transition_pairs

T = np.linspace(0.0, 1.0, 1001)


def piecewise_oracle(f, g, t):
    """Direct power-form evaluation of the two branches, independent of the
    log-space implementation."""
    t0 = math.log(0.5 * (1 - f / g)) / (math.log(0.25 * (2 - f / g - g / f)) - math.log(1 + g))
    z_inv = math.log(0.25 * (2 - f / g - g / f)) - math.log(1 + g)
    left = ((0.25 * (2 - f / g - g / f) / (1 + g)) ** t - 1) / f
    base = (1 + g) / (0.5 * (1 - g / f))
    right = 0.5 * (1 / g - 1 / f) * base ** t * (0.5 * (1 - f / g)) ** (1 - t) - 1 / g
    return np.where(t <= t0, left, right), t0, z_inv


class TestClosedForms:
    @pytest.mark.parametrize("r", [0.1, 0.5, 2.0, 10.0, 1.001])
    def test_gaussian(self, r):
        s = optimal_schedule(SpectralBounds(r - 1, r - 1))
        assert s.kind == ("simple_f" if r > 1 else "simple_g")
        assert np.max(np.abs(s(T) - (r ** T - 1) / (r - 1))) <= 1e-10

    def test_piecewise_reference_pair(self):
        s = optimal_schedule(SpectralBounds(1.0, -0.5))
        assert s.kind == "piecewise"
        assert s.t0 == pytest.approx(0.5, abs=1e-15) and s.tau0 == 0.5
        left, right = s.branch_values(0.5)
        assert left == pytest.approx(2.25 ** 0.5 - 1, abs=1e-14)
        assert right == pytest.approx(-1.5 * math.sqrt(2 / 3 * 1.5) + 2, abs=1e-14)
        assert s(1.0) == 1.0 and s(0.0) == 0.0
        dl, dr = s.branch_derivs(0.5)
        assert dl == pytest.approx(math.log(2.25) * 1.5, abs=1e-12)
        assert dr == pytest.approx(math.log(2.25) * 1.5, abs=1e-12)

    def test_piecewise_matches_power_oracle(self):
        rng = np.random.default_rng(3)
        for f, g in transition_pairs(rng, 25):
            ref, _, _ = piecewise_oracle(f, g, T)
            assert np.max(np.abs(optimal_schedule((f, g))(T) - ref)) <= 1e-10

    def test_simple_g_case(self):
        s = optimal_schedule(SpectralBounds(0.5, -0.9))
        assert s.kind == "simple_g"
        assert np.max(np.abs(s(T) - (0.1 ** T - 1) / -0.9)) <= 1e-14
        assert s(1.0) == 1.0

    def test_simple_f_derivative_and_inverse(self):
        s = optimal_schedule(SpectralBounds(1.0, 1.0))
        assert s.kind == "simple_f"
        assert s.deriv(0.0) == pytest.approx(math.log(2), abs=1e-15)
        assert s.inverse(1.0) == 1.0
        assert s.inverse(0.5) == pytest.approx(math.log2(1.5), abs=1e-15)

    def test_tie_uses_f_branch(self):
        # f* = -g* with no interior transition is impossible (t0 = 0); the
        # positive pair (f, f) is the other tie-free route to simple_f
        assert optimal_schedule((2.0, 0.5)).kind == "simple_f"
        assert optimal_schedule((-0.2, -0.5)).kind == "simple_g"

    def test_transition_at_zero_coincides_with_simple_form(self):
        tt = transition_time((0.5, -0.5))
        assert tt == (0.0, 0.0)
        s = optimal_schedule((0.5, -0.5))
        assert s.kind == "piecewise"
        assert np.max(np.abs(s(T) - (0.5 ** T - 1) / -0.5)) <= 1e-14
        assert lambda_optimal_closed((0.5, -0.5)) == pytest.approx(math.log(2), abs=1e-14)

    def test_trivial(self):
        s = trivial_schedule()
        assert s(0.0) == 0.0 and s(0.37) == 0.37
        assert np.all(s.deriv(T) == 1.0) and np.all(s.second_deriv(T) == 0.0)
        assert s.inverse(0.3) == 0.3


class TestTransitionTime:
    def test_reference_pair(self):
        t0, tau0 = transition_time(SpectralBounds(1.0, -0.5))
        assert t0 == pytest.approx(0.5, abs=1e-15) and tau0 == 0.5
        # both arguments of the max equal 2/3 at tau0
        assert 1 / (1 + 0.5) == pytest.approx(0.5 / (1 - 0.25))

    @pytest.mark.parametrize("r", [0.01, 0.5, 3.0])
    def test_gaussian_has_none(self, r):
        assert transition_time((r - 1, r - 1)) is None

    @pytest.mark.parametrize("fg", [(0.0, -0.5), (1.0, 0.0), (2.0, 0.5), (-0.1, -0.5)])
    def test_no_sign_change(self, fg):
        assert transition_time(fg) is None

    @pytest.mark.parametrize("m", [1e2, 1e4, 1e6])
    def test_symmetric_conditioning(self, m):
        t0, _ = transition_time((m - 1, 1 / m - 1))
        assert abs(t0 - 0.5) <= 1e-12

    def test_out_of_range(self):
        # f* well below -g*: t0 would be negative
        assert transition_time((0.5, -0.9)) is None


class TestErrors:
    @pytest.mark.parametrize("sched", [trivial_schedule(), optimal_schedule((1.0, -0.5)),
                                       optimal_schedule((1.0, 1.0))])
    @pytest.mark.parametrize("t", [-1e-9, 1.0 + 1e-9, np.nan])
    def test_domain(self, sched, t):
        with pytest.raises(DomainError):
            sched(t)
        with pytest.raises(DomainError):
            sched.deriv(t)
        with pytest.raises(DomainError):
            sched.inverse(t)

    def test_isometry_bounds(self):
        with pytest.raises(TrivialTransportError):
            optimal_schedule(SpectralBounds(0.0, 0.0))

    def test_isometry_tuple_falls_back(self):
        with pytest.warns(TrivialTransportWarning):
            s = optimal_schedule((0.0, 0.0))
        assert s.kind == "trivial"

    def test_tabulated_validation(self):
        with pytest.raises(AdmissibilityError):
            TabulatedSchedule([0.0, 0.5, 1.0], [0.0, 0.7, 0.6])
        with pytest.raises(AdmissibilityError):
            TabulatedSchedule([0.0, 0.5, 0.9], [0.0, 0.5, 1.0])
        with pytest.raises(AdmissibilityError):
            TabulatedSchedule([0.0, 0.5, 1.0], [0.1, 0.5, 1.0])

    def test_unknown_kind(self):
        with pytest.raises(AdmissibilityError):
            schedule_from_dict({"kind": "cosine"})


bounds_strategy = st.tuples(st.floats(-0.999, 1e3), st.floats(-0.999, 1e3)).map(
    lambda p: (max(p), min(p))).filter(lambda p: abs(p[0]) > 1e-8 or abs(p[1]) > 1e-8)


class TestProperties:
    @given(bounds_strategy)
    def test_boundary_and_monotone(self, fg):
        s = optimal_schedule(fg)
        assert abs(s(0.0)) <= 1e-12 and abs(s(1.0) - 1.0) <= 1e-12
        t = np.linspace(0, 1, 10_001)
        v = s(t)
        assert np.all(np.diff(v) >= 0.0)
        assert np.all((v >= 0.0) & (v <= 1.0))
        assert np.all(s.deriv(t) >= -1e-12)

    @given(bounds_strategy)
    def test_sup_constancy(self, fg):
        f, g = fg
        s = optimal_schedule(fg)
        t = np.linspace(0, 1, 4001)
        prod = s.deriv(t) * reduced_sup(f, g, s(t))
        lam = lambda_optimal_closed(fg)
        assert np.max(np.abs(prod / lam - 1.0)) <= 1e-8

    @given(bounds_strategy)
    def test_inverse_round_trip(self, fg):
        s = optimal_schedule(fg)
        tau = np.linspace(0, 1, 257)
        assert np.max(np.abs(s(s.inverse(tau)) - tau)) <= 1e-10

    @given(bounds_strategy.filter(lambda p: p[0] <= 200 and p[1] >= -0.99),
           st.floats(2e-6, 1 - 2e-6))
    def test_finite_differences(self, fg, t):
        s = optimal_schedule(fg)
        assume(not isinstance(s, PiecewiseSchedule) or abs(t - s.t0) > 3e-6)
        h = 1e-6
        assert abs((s(t + h) - s(t - h)) / (2 * h) - s.deriv(t)) <= 1e-6
        fd2 = (s.deriv(t + h) - s.deriv(t - h)) / (2 * h)
        assert abs(fd2 - s.second_deriv(t)) <= 1e-6 * max(1.0, abs(s.second_deriv(t)))

    def test_near_isometry(self):
        eps = 1e-6
        s = optimal_schedule(SpectralBounds(eps, eps))
        assert np.max(np.abs(s(np.linspace(0, 1, 10_001)) - np.linspace(0, 1, 10_001))) <= 1e-5
        s = optimal_schedule(SpectralBounds(eps, -eps))
        assert np.max(np.abs(s(np.linspace(0, 1, 10_001)) - np.linspace(0, 1, 10_001))) <= 1e-5

    def test_branch_continuity_random(self):
        rng = np.random.default_rng(11)
        for f, g in transition_pairs(rng, 50):
            s = optimal_schedule((f, g))
            l, r = s.branch_values(s.t0)
            dl, dr = s.branch_derivs(s.t0)
            assert abs(l - r) <= 1e-10
            assert abs(dl - dr) <= 1e-8 * max(1.0, abs(dl))
            assert abs(l - s.tau0) <= 1e-10

    def test_second_derivative_extremes_include_jump(self):
        s = optimal_schedule((1.0, -0.5))
        ext = s.second_deriv_extremes()
        # branch 1 has tau'' = c^2 (1 + tau f)/f > 0, branch 2 tau'' < 0 at t0
        assert max(ext) > 0 > min(ext)


class TestTabulated:
    def test_reproduces_linear(self):
        s = TabulatedSchedule([0.0, 0.25, 1.0], [0.0, 0.25, 1.0])
        assert np.allclose(s(T), T, atol=1e-15)
        assert np.allclose(s.deriv(T), 1.0)

    def test_monotone_with_given_slopes(self):
        # wildly overshooting slopes must be limited back to a monotone curve
        t = np.array([0.0, 0.3, 0.31, 1.0])
        tau = np.array([0.0, 0.5, 0.51, 1.0])
        s = TabulatedSchedule(t, tau, [40.0, 40.0, 40.0, 40.0])
        v = s(np.linspace(0, 1, 20_001))
        assert np.all(np.diff(v) >= 0)

    def test_inverse(self):
        src = optimal_schedule((3.0, -0.7))
        grid = np.linspace(0, 1, 513)
        s = TabulatedSchedule(grid, src(grid), src.deriv(grid))
        tau = np.linspace(0, 1, 101)
        assert np.max(np.abs(s(s.inverse(tau)) - tau)) <= 1e-10


@pytest.mark.parametrize("sched", [trivial_schedule(), optimal_schedule((1.0, -0.5)),
                                   optimal_schedule((1.0, 1.0)), optimal_schedule((0.5, -0.9)),
                                   TabulatedSchedule([0, 0.5, 1], [0, 0.2, 1]),
                                   TabulatedSchedule([0, 0.5, 1], [0, 0.2, 1], [0.1, 0.5, 3.0])])
def test_json_round_trip(sched):
    back = schedule_from_json(sched.to_json())
    assert back.kind == sched.kind
    assert np.max(np.abs(back(T) - sched(T))) < 1e-12
    assert np.max(np.abs(back.deriv(T) - sched.deriv(T))) < 1e-12
    json.loads(sched.to_json())


def test_piecewise_json_fields():
    d = optimal_schedule((1.0, -0.5)).to_dict()
    assert set(d) == {"kind", "f_star", "g_star", "t0", "tau0"}


def test_sample_columns():
    t, tau, d1, d2 = optimal_schedule((1.0, 1.0)).sample(5)
    assert t.tolist() == [0, 0.25, 0.5, 0.75, 1.0]
    assert np.allclose(tau, 2 ** t - 1) and np.allclose(d1, math.log(2) * 2 ** t)
    assert np.allclose(d2, math.log(2) ** 2 * 2 ** t)


def test_scalar_in_scalar_out():
    s = optimal_schedule((1.0, -0.5))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert isinstance(s(0.3), float) and isinstance(s.deriv(0.3), float)
    assert s(np.array([0.3])).shape == (1,)
