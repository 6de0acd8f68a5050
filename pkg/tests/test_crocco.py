import math

import numpy as np
import pytest

from kfptools import crocco as cr
from kfptools.errors import DegenerateW, NonMonotoneColumn, ShapeMismatch


def tanh_blf(nx=9, ny=81, nt=7, y_max=3.0, U_fn=None):
    x = np.linspace(0.2, 1.8, nx)
    y = np.linspace(0.0, y_max, ny)
    t = np.linspace(0.0, 1.0, nt)
    U = U_fn or (lambda X, T: 2.0 + 0.5 * np.exp(-T))
    return cr.BoundaryLayerField.from_functions(
        x, y, t, U, lambda X, Y, T: U(X, T) * np.tanh(Y))


class TestHypotheses:
    def test_tanh_passes_monotone(self):
        rep = cr.check_hypotheses(tanh_blf())
        checks = rep.details["checks"]
        assert checks["monotone_class"]["pass"]
        assert checks["U_positive"]["pass"]
        assert checks["u_positive_interior"]["pass"]

    def test_bernoulli_negative_control(self):
        # U independent of x with dU/dt < 0: d_x pi = -dU/dt > 0 fails
        rep = cr.check_hypotheses(tanh_blf())
        checks = rep.details["checks"]
        assert not checks["favourable_pressure"]["pass"]
        assert rep.passed is False
        assert len(rep.witnesses) >= 1

    def test_favourable_case_passes(self):
        # U growing in time: d_x pi = -dU/dt < 0
        rep = cr.check_hypotheses(tanh_blf(U_fn=lambda X, T: 2.0 + 0.5 * T))
        assert rep.details["checks"]["favourable_pressure"]["pass"]

    def test_flat_profile_fails_with_witness(self):
        x = np.linspace(0.2, 1.8, 7)
        y = np.linspace(0.0, 3.0, 61)
        t = np.linspace(0.0, 1.0, 5)

        def u_flat(X, Y, T):
            # slope collapses to zero beyond y = 1.5
            return 2.0 * np.minimum(Y, 1.5) / 1.5

        blf = cr.BoundaryLayerField.from_functions(
            x, y, t, lambda X, T: 2.0 + 0 * X, u_flat)
        rep = cr.check_hypotheses(blf)
        assert not rep.details["checks"]["monotone_class"]["pass"]
        wx, wy, wt = rep.witnesses[0]
        assert wy > 1.4


class TestForward:
    def test_tanh_profile_closed_form(self):
        # u = U tanh(y): eta = tanh(y), w = sech^2(y) = 1 - eta^2
        blf = tanh_blf(ny=161)
        cf = cr.crocco_forward(blf)
        expect = 1.0 - cf.eta[None, :, None] ** 2
        assert np.max(np.abs(cf.w - expect)) < 2e-3

    def test_exponential_profile_closed_form(self):
        # u = U (1 - e^-y): eta = 1 - e^-y, w = e^-y = 1 - eta
        x = np.linspace(0.2, 1.8, 7)
        y = np.linspace(0.0, 4.0, 161)
        t = np.linspace(0.0, 1.0, 5)
        blf = cr.BoundaryLayerField.from_functions(
            x, y, t, lambda X, T: 3.0 + 0 * X,
            lambda X, Y, T: 3.0 * (1.0 - np.exp(-Y)))
        cf = cr.crocco_forward(blf)
        expect = 1.0 - cf.eta[None, :, None]
        assert np.max(np.abs(cf.w - expect)) < 2e-3

    def test_constant_U_zero_A(self):
        blf = tanh_blf(U_fn=lambda X, T: 2.5 + 0 * X)
        cf = cr.crocco_forward(blf)
        assert np.max(np.abs(cf.A)) < 1e-12
        assert np.max(np.abs(cf.B)) < 1e-12

    def test_non_monotone_column(self):
        x = np.linspace(0.2, 1.8, 5)
        y = np.linspace(0.0, 3.0, 41)
        t = np.linspace(0.0, 1.0, 3)
        blf = cr.BoundaryLayerField.from_functions(
            x, y, t, lambda X, T: 2.0 + 0 * X,
            lambda X, Y, T: 2.0 * np.minimum(Y, 1.0))
        with pytest.raises(NonMonotoneColumn):
            cr.crocco_forward(blf)

    def test_eta_axis_never_clipped(self):
        blf = tanh_blf()
        with pytest.raises(ShapeMismatch):
            cr.crocco_forward(blf, eta_axis=np.linspace(0.0, 0.9999, 33))

    def test_roundtrip_recovers_w(self):
        # forward then analytic inverse: w(eta) back to sech^2(y)
        blf = tanh_blf(ny=161)
        cf = cr.crocco_forward(blf)
        y_from_eta = np.arctanh(cf.eta)
        expect = 1.0 / np.cosh(y_from_eta) ** 2
        assert np.max(np.abs(cf.w[3, :, 2] - expect)) < 2e-3


class TestResidual:
    def test_steady_shear_exact(self):
        # u = k y with constant U on a y-window: w is constant, residual 0
        x = np.linspace(0.2, 1.8, 7)
        y = np.linspace(0.5, 2.5, 41)
        t = np.linspace(0.0, 1.0, 5)
        blf = cr.BoundaryLayerField.from_functions(
            x, y, t, lambda X, T: 4.0 + 0 * X, lambda X, Y, T: 1.2 * Y)
        cf = cr.crocco_forward(blf)
        rep = cr.verify_crocco_residual(cf)
        assert rep.details["max_interior_residual"] < 1e-10

    def test_manufactured_convergence_order(self):
        errs = []
        for n in (17, 33, 65):
            xi = np.linspace(0.2, 1.8, n)
            eta = np.linspace(0.1, 0.8, n)
            tau = np.linspace(0.0, 1.0, n)
            cf, forcing = cr.manufactured_crocco_field(xi, eta, tau)
            rep = cr.verify_crocco_residual(cf, forcing=forcing)
            errs.append(rep.details["max_interior_residual"])
        orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert min(orders) >= 1.8

    def test_random_w_large_residual(self):
        rng = np.random.default_rng(1)
        xi = np.linspace(0.2, 1.8, 17)
        eta = np.linspace(0.1, 0.8, 17)
        tau = np.linspace(0.0, 1.0, 17)
        cf, forcing = cr.manufactured_crocco_field(xi, eta, tau)
        noisy = cr.CroccoField(xi=cf.xi, eta=cf.eta, tau=cf.tau,
                               w=cf.w + 0.2 * rng.uniform(0.5, 1.5, cf.w.shape),
                               A=cf.A, B=cf.B, U=cf.U)
        r_clean = cr.verify_crocco_residual(cf, forcing=forcing)
        r_noisy = cr.verify_crocco_residual(noisy, forcing=forcing)
        assert (r_noisy.details["max_interior_residual"]
                > 100 * r_clean.details["max_interior_residual"])

    def test_degenerate_w(self):
        xi = np.linspace(0.2, 1.8, 9)
        eta = np.linspace(0.1, 0.999999, 99)
        tau = np.linspace(0.0, 1.0, 9)
        cf, _ = cr.manufactured_crocco_field(xi, eta, tau)
        bad = cr.CroccoField(xi=cf.xi, eta=cf.eta, tau=cf.tau,
                             w=cf.w - np.min(cf.w) + 1e-12, A=cf.A, B=cf.B,
                             U=cf.U)
        with pytest.raises(DegenerateW):
            cr.verify_crocco_residual(bad)

    def test_tanh_term_diagnostics(self):
        blf = tanh_blf(nx=13, ny=121, nt=9, U_fn=lambda X, T: 2.5 + 0 * X)
        cf = cr.crocco_forward(blf)
        rep = cr.verify_crocco_residual(cf)
        terms = rep.details["term_maxima"]
        # U constant and steady profile: the transport terms must vanish
        assert terms["d_tau_winv"] < 1e-8
        assert terms["eta_U_d_xi_winv"] < 1e-7
        assert terms["A_d_eta_winv"] < 1e-12
        assert terms["minus_B_winv"] < 1e-12
        # the tanh profile is NOT a Prandtl solution: residual is O(1)
        assert rep.details["max_interior_residual"] > 0.1


class TestRescale:
    def test_constant_U_matches_plain_residual(self):
        # steady shear with constant U: residual of the rescaled equation is
        # the plain residual divided by sqrt(U), here both zero; use the
        # tanh profile for a nonzero cross-check
        blf = tanh_blf(nx=13, ny=121, nt=9, U_fn=lambda X, T: 2.5 + 0 * X)
        cf = cr.crocco_forward(blf)
        plain = cr.verify_crocco_residual(cf)
        out, rep = cr.rescale_sqrtU(cf)
        assert rep.details["U_constant"]
        ratio = rep.details["max_interior_residual"] / (
            plain.details["max_interior_residual"] / math.sqrt(2.5))
        assert ratio == pytest.approx(1.0, rel=1e-8)

    def test_exponent_is_six(self):
        blf = tanh_blf(nx=9, ny=81, nt=7, U_fn=lambda X, T: 2.5 + 0 * X)
        cf = cr.crocco_forward(blf)
        _, rep = cr.rescale_sqrtU(cf)
        assert rep.details["q"] == 6.0
        assert np.isfinite(rep.details["bprime_L6"])
        assert np.isfinite(rep.details["c_L6"])

    def test_nonconstant_U_reports(self):
        blf = tanh_blf(nx=9, ny=81, nt=9)
        cf = cr.crocco_forward(blf, keep_ut=True)
        out, rep = cr.rescale_sqrtU(cf)
        assert not rep.details["U_constant"]
        assert np.isfinite(rep.details["max_interior_residual"])
        assert rep.details["bprime_L6"] > 0

    def test_nonconstant_needs_ut(self):
        blf = tanh_blf(nx=9, ny=81, nt=9)
        cf = cr.crocco_forward(blf)
        with pytest.raises(ShapeMismatch):
            cr.rescale_sqrtU(cf)
