import math
import time

import numpy as np
import pytest

from kfptools import gfunc
from kfptools.errors import PropertyViolated, WidthOutOfRange


@pytest.fixture(scope="module")
def G():
    return gfunc.build_g()


class TestBuild:
    def test_width_range(self):
        with pytest.raises(WidthOutOfRange):
            gfunc.build_g(0.3)
        with pytest.raises(WidthOutOfRange):
            gfunc.build_g(0.0)

    def test_closed_form_anchor(self, G):
        # f(s) = -s for s <= 1/2, so G(t) = -ln(2t) there
        assert float(G.value(0.125)) == pytest.approx(math.log(4.0), abs=1e-12)
        assert float(G.value(0.25)) == pytest.approx(math.log(2.0), abs=1e-12)
        ts = np.array([1e-6, 1e-3, 0.2])
        assert np.allclose(G.value(ts), -np.log(2 * ts), atol=1e-12)

    def test_vanishes_beyond_one(self, G):
        assert np.all(G.value(np.array([1.0, 2.0, 10.0])) == 0.0)
        assert np.all(G.deriv(np.array([1.0, 2.0, 10.0])) == 0.0)

    def test_derivative_saturates_bound(self, G):
        # |G'(t)| = 1/t exactly on (0, 1/4]
        ts = np.array([1e-4, 0.01, 0.125, 0.25])
        assert np.allclose(G.deriv(ts), -1.0 / ts, rtol=1e-12)

    def test_signs(self, G):
        ts = np.logspace(-5, math.log10(4), 500)
        assert np.all(G.value(ts) >= 0.0)
        assert np.all(G.deriv(ts) <= 0.0)
        assert np.all(G.second_deriv(ts) >= 0.0)

    def test_smooth_join(self, G):
        # continuity of G and G' at the piecewise joins via one-sided differences
        for t0 in (G.t_lo, G.t_hi):
            h = 1e-7
            jump_v = abs(float(G.value(t0 + h) - G.value(t0 - h)))
            jump_d = abs(float(G.deriv(t0 + h) - G.deriv(t0 - h)))
            assert jump_v < 1e-6
            assert jump_d < 1e-4  # derivative join, scaled by |G'| ~ 3


class TestProperties:
    def test_all_pass_default_grid(self, G):
        rep = gfunc.verify_g_properties(G)
        assert rep.passed is True
        # offset form of (iii): ratio deviation is exactly ln2/(-ln t)
        t = rep.details["t_smallest"]
        assert rep.details["ratio_deviation"] == pytest.approx(
            math.log(2) / (-math.log(t)), rel=1e-6)

    def test_convexity_inequality_pointwise(self, G):
        ts = np.logspace(-6, math.log10(4), 4000)
        gap = G.second_deriv(ts) - G.deriv(ts) ** 2
        assert float(np.min(gap)) >= -1e-8

    def test_corrupted_g_detected(self, G):
        class Corrupted:
            t_lo, t_hi = G.t_lo, G.t_hi
            value = staticmethod(G.value)
            deriv = staticmethod(G.deriv)

            @staticmethod
            def second_deriv(t):
                out = G.second_deriv(np.asarray(t, float))
                patch = (np.asarray(t) > 0.01) & (np.asarray(t) < 0.02)
                out = np.where(patch, 0.0, out)
                return out

        with pytest.raises(PropertyViolated) as e:
            gfunc.verify_g_properties(Corrupted())
        assert e.value.index == 1
        assert 0.01 < e.value.witness < 0.02

    def test_ratio_convergence(self, G):
        # G(t)/(-ln t) -> 1; deviation ln2/(-ln t), e.g. ~5.0e-2 at 1e-6
        for t in (1e-4, 1e-6, 1e-8):
            ratio = float(G.value(t)) / (-math.log(t))
            assert abs(ratio - 1.0) == pytest.approx(math.log(2) / (-math.log(t)),
                                                     rel=1e-9)

    def test_composed_convexity(self, G):
        rng = np.random.default_rng(0)
        ts = np.linspace(1e-4, 3.0, 800)
        for _ in range(10):
            gamma = rng.uniform(0.1, 5.0)
            h = rng.uniform(1e-3, 0.25)
            assert gfunc.composed_convexity_gap(G, gamma, h, ts) >= -1e-8

    def test_runtime_under_one_second(self):
        t0 = time.perf_counter()
        G = gfunc.build_g()
        gfunc.verify_g_properties(G)
        assert time.perf_counter() - t0 < 1.0

    def test_table_dump(self, G, tmp_path):
        ts = np.logspace(-3, 0.5, 50)
        tab = G.table(ts)
        assert tab.shape == (50, 4)
        np.savetxt(tmp_path / "g.csv", tab, delimiter=",",
                   header="t,G,Gp,Gpp", comments="")
        back = np.loadtxt(tmp_path / "g.csv", delimiter=",", skiprows=1)
        assert np.allclose(back, tab)
