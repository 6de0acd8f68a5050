import math

import numpy as np
import pytest

from kfptools import fields, hypogroup as hg, potential as pot
from kfptools.errors import ExponentOutOfRange


def heat1d():
    return hg.validate_structure(np.zeros((1, 1)), (1,), lam=1.0)


def kolm():
    return hg.kolmogorov_structure()


def heat_potential_oracle(f, x, t, refine=8):
    """Dense trapezoid quadrature of the 1D heat potential of a grid field.

    Integrates the multilinear interpolant of f's samples against the exact
    heat kernel on a grid refined by `refine`, with no slice/matmul tricks:
    an independent oracle for the potential_apply path.
    """
    from scipy.interpolate import RegularGridInterpolator
    xg, tg = f.axis(0), f.axis(1)
    interp = RegularGridInterpolator((xg, tg), f.grid())
    xf = np.linspace(xg[0], xg[-1], (xg.size - 1) * refine + 1)
    tf = np.linspace(tg[0], tg[-1], (tg.size - 1) * refine + 1)
    XF, TF = np.meshgrid(xf, tf, indexing="ij")
    FV = interp(np.stack([XF.ravel(), TF.ravel()], -1)).reshape(XF.shape)
    svals = t - tf
    K = np.zeros_like(FV)
    pos = svals > 1e-12
    K[:, pos] = (4 * math.pi * svals[pos]) ** -0.5 * np.exp(
        -(x - xf)[:, None] ** 2 / (4 * svals[pos])[None, :])
    return float(np.trapezoid(np.trapezoid(K * FV, tf, axis=1), xf))


class TestPotentialApply:
    def test_zero_field(self):
        s = heat1d()
        f = fields.zero_field([(-2, 2), (0, 1)], (17, 17))
        g = pot.potential_apply(s, f)
        assert np.all(g.values == 0.0)

    def test_linearity(self):
        s = heat1d()
        f = fields.field_from_function([(-2, 2), (0, 1)], (17, 17),
                                       lambda P: np.exp(-4 * P[:, 0] ** 2) * P[:, 1])
        g1 = pot.potential_apply(s, f)
        g2 = pot.potential_apply(s, f.with_values(2 * f.values))
        assert np.allclose(g2.values, 2 * g1.values, rtol=1e-13)

    def test_positivity(self):
        # kernel nonnegative so the potential is; the near-field correction
        # is not sign-preserving, so allow a grid-level undershoot
        s = kolm()
        f = fields.field_from_function(
            [(-1, 1), (-1, 1), (0, 0.5)], (9, 9, 9),
            lambda P: np.exp(-8 * (P[:, 0] ** 2 + P[:, 1] ** 2)))
        g = pot.potential_apply(s, f)
        vmax = float(np.max(g.values))
        assert float(np.min(g.values)) >= -2e-3 * vmax
        f2 = f.refine(2)
        g2 = pot.potential_apply(s, f2)
        assert float(np.min(g2.values)) >= float(np.min(g.values)) - 1e-12

    def test_heat_indicator_vs_oracle(self):
        # indicator of [-0.25, 0.25] x [0.1, 0.3]; evaluate well above support
        s = heat1d()
        box = [(-3.0, 3.0), (0.0, 1.0)]
        shape = (61, 41)
        x0, x1, t0, t1 = -0.25, 0.25, 0.1, 0.3

        def ind(P):
            return ((P[:, 0] >= x0 - 1e-12) & (P[:, 0] <= x1 + 1e-12)
                    & (P[:, 1] >= t0 - 1e-12) & (P[:, 1] <= t1 + 1e-12)).astype(float)

        f = fields.field_from_function(box, shape, ind)
        g = pot.potential_apply(s, f)
        xg = g.axis(0)
        tg = g.axis(1)
        i = int(np.argmin(np.abs(xg - 0.5)))
        j = int(np.argmin(np.abs(tg - 0.8)))
        got = g.grid()[i, j]
        want = heat_potential_oracle(f, xg[i], tg[j])
        assert got == pytest.approx(want, rel=1e-3)

    def test_causality(self):
        # f supported strictly above t_k: output vanishes at and below t_k
        s = heat1d()
        box = [(-2, 2), (0, 1)]
        shape = (21, 21)
        tg = np.linspace(0, 1, 21)
        k = 10

        def f_late(P):
            return np.where(P[:, 1] > tg[k] + 1e-12,
                            np.exp(-4 * P[:, 0] ** 2), 0.0)

        f = fields.field_from_function(box, shape, f_late)
        g = pot.potential_apply(s, f)
        assert np.all(g.grid()[:, :k + 1] == 0.0)
        assert np.max(g.grid()[:, k + 2:]) > 0.0

    def test_refinement_stability(self):
        s = heat1d()
        box = [(-2.5, 2.5), (0.0, 0.5)]

        def bump(P):
            return np.exp(-6 * P[:, 0] ** 2 - 30 * (P[:, 1] - 0.2) ** 2)

        n1 = pot.potential_apply(s, fields.field_from_function(box, (17, 17), bump))
        n2 = pot.potential_apply(s, fields.field_from_function(box, (33, 33), bump))
        q = 6.0
        a, b = n1.lp_norm(q), n2.lp_norm(q)
        assert abs(a - b) / b < 0.05


class TestGradientPotential:
    def test_zero(self):
        s = heat1d()
        f = fields.zero_field([(-2, 2), (0, 1)], (17, 17))
        g = pot.potential_apply_grad(s, f)
        assert np.all(g.values == 0.0)

    def test_integration_by_parts(self):
        # Gamma1(D f) == Gamma1 applied to the analytic gradient of f
        s = heat1d()
        box = [(-2.5, 2.5), (0.0, 0.6)]
        shape = (61, 61)

        def bump(P):
            return np.exp(-4 * P[:, 0] ** 2 - 40 * (P[:, 1] - 0.25) ** 2)

        def dbump(P):
            return -8 * P[:, 0] * bump(P)

        f = fields.field_from_function(box, shape, bump)
        lhs = pot.potential_apply_grad(s, f, return_components=True)[0]
        rhs = pot.potential_apply(s, fields.field_from_function(box, shape, dbump))
        scale = float(np.max(np.abs(rhs.values)))
        assert np.max(np.abs(lhs.grid() - rhs.grid())) <= 1e-3 * scale

    def test_reflection_antisymmetry(self):
        # reflecting f in x negates the x-component pairing for B=0
        s = heat1d()
        box = [(-2.0, 2.0), (0.0, 0.5)]
        shape = (33, 17)

        def f_off(P):
            return np.exp(-6 * (P[:, 0] - 0.4) ** 2 - 30 * (P[:, 1] - 0.2) ** 2)

        def f_ref(P):
            Q = P.copy()
            Q[:, 0] = -Q[:, 0]
            return f_off(Q)

        g1 = pot.potential_apply_grad(s, fields.field_from_function(box, shape, f_off),
                                      return_components=True)[0]
        g2 = pot.potential_apply_grad(s, fields.field_from_function(box, shape, f_ref),
                                      return_components=True)[0]
        assert np.allclose(g1.grid(), -g2.grid()[::-1, :], atol=1e-10)


class TestLpLq:
    def test_exponent_arithmetic(self):
        assert pot.conjugate_exponent(4, 2.0, 2) == pytest.approx(6.0)
        assert pot.conjugate_exponent(4, 2.0, 1) == pytest.approx(3.0)
        with pytest.raises(ExponentOutOfRange):
            pot.conjugate_exponent(4, 4.0, 2)  # 1/q = 1/4 - 1/3 < 0

    def test_corpus_reproducible(self):
        box = [(-1, 1), (-1, 1), (0, 0.5)]
        c1 = pot.make_test_corpus(box, (9, 9, 9), seed=42)
        c2 = pot.make_test_corpus(box, (9, 9, 9), seed=42)
        assert len(c1) == 8
        for (n1, f1), (n2, f2) in zip(c1, c2):
            assert n1 == n2
            assert np.array_equal(f1.values, f2.values)

    def test_ratios_bounded_kolmogorov(self):
        s = kolm()
        rep = pot.verify_lp_lq(s, p=2.0, T=0.5, shape=(11, 11, 11))
        assert rep.details["q"] == pytest.approx(6.0)
        assert np.isfinite(rep.details["max_ratio"])
        assert rep.details["ratio_spread"] < 10.0

    def test_gradient_ratios_bounded(self):
        s = kolm()
        rep = pot.verify_lp_lq(s, p=2.0, T=0.5, shape=(11, 11, 11), gradient=True)
        assert rep.details["q"] == pytest.approx(3.0)
        assert np.isfinite(rep.details["max_ratio"])
        assert rep.details["ratio_spread"] < 10.0
