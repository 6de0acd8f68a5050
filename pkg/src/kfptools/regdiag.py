"""Numerical probes of the regularity chain on solved fields.

The probes are report-generating: the theory asserts existence of constants
(level-set thresholds, Poincare/Sobolev constants, oscillation contraction
factors), never their values, so each probe measures the empirical constant
and flags only structural failures (signs, nestedness, cutoff properties,
per-rung contraction).  Measures are weighted grid-cell counts; ties
(u exactly equal to the threshold) count as inside the level set.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import hypogroup as hg
from .errors import (C1TooSmall, InsufficientRungs, KernelQuadratureFailure,
                     ShapeMismatch)
from .fields import GridField
from .fundsol import Gamma1
from .gfunc import build_g
from .report import make_report


@dataclass(frozen=True)
class CutoffConfig:
    theta: float
    beta: float
    alpha_frac: float
    C1: float
    r: float

    def validate(self, Q):
        """Hard checks on the cutoff parameters; returns the value of the
        (alpha, beta) energy expression, which must be <= 4/5 for the
        level-set argument.  That pair does not enter the cutoff itself, so
        it is reported (see energy_constraint_ok) rather than raised."""
        if not 0.0 < self.theta < 0.5 ** Q:
            raise ShapeMismatch(f"theta={self.theta:g} outside (0, 1/2^Q)")
        if not 0.0 < self.beta < 1.0:
            raise ShapeMismatch("beta outside (0,1)")
        if not 0.0 < self.alpha_frac < 0.5:
            raise ShapeMismatch("alpha_frac outside (0, 1/2)")
        if self.C1 <= 1.0:
            raise ShapeMismatch("C1 must exceed 1")
        if self.r <= 0:
            raise ShapeMismatch("r must be positive")
        return (1.0 / (4 * self.beta ** (2 * Q))
                + 1.0 / (2 * self.beta ** (2 * Q) * (1 - self.alpha_frac)))

    def energy_constraint_ok(self, Q):
        return self.validate(Q) <= 0.8 + 1e-12


def _smoothstep(svals, lo, hi):
    """chi: 1 below lo, 0 above hi, cubic in between; returns (chi, chi')."""
    svals = np.asarray(svals, float)
    u = np.clip((svals - lo) / (hi - lo), 0.0, 1.0)
    chi = 1.0 - (3 * u ** 2 - 2 * u ** 3)
    dchi = -(6 * u * (1 - u)) / (hi - lo)
    dchi = np.where((svals <= lo) | (svals >= hi), 0.0, dchi)
    return chi, dchi


def cylinder_bounds(s, cfg, center=None):
    """The reference cylinder: -r^2 <= t < 0, x' in K_{r/theta},
    |x_j| <= r^alpha_j / theta beyond m0 (offsets from the center)."""
    r, th = cfg.r, cfg.theta
    c = np.zeros(s.N + 1) if center is None else center.as_array()
    bounds = [(c[i] - r / th, c[i] + r / th) for i in range(s.m0)]
    bounds += [(c[i] - r ** s.alpha[i] / th, c[i] + r ** s.alpha[i] / th)
               for i in range(s.m0, s.N)]
    bounds.append((c[-1] - r ** 2, c[-1]))
    return bounds


def in_cylinder(s, cfg, pts, center=None, closed_top=False):
    """Membership in the cylinder; closed_top includes the t=0 face (the
    support-containment remark concerns the closure there)."""
    r, th = cfg.r, cfg.theta
    c = np.zeros(s.N + 1) if center is None else center.as_array()
    u = np.atleast_2d(pts) - c
    ok = np.linalg.norm(u[:, :s.m0], axis=1) <= r / th
    for i in range(s.m0, s.N):
        ok &= np.abs(u[:, i]) <= r ** s.alpha[i] / th
    ok &= u[:, -1] >= -r ** 2
    ok &= (u[:, -1] <= 0) if closed_top else (u[:, -1] < 0)
    return ok


def min_C1(s, cfg):
    """Smallest admissible C1: sup over the cylinder of the drift pairing
    theta^2 |sum_{i, j>m0} 2 x_i b_ij x_j r^(Q-2 alpha_j)| / r^(Q-2).

    The expression is bilinear in x, so the sup over the box sits at a
    corner of the cylinder's bounding box.
    """
    r, th = cfg.r, cfg.theta
    his = np.array([r / th] * s.m0
                   + [r ** s.alpha[i] / th for i in range(s.m0, s.N)])
    best = 0.0
    for mask in range(2 ** s.N):
        x = np.array([his[i] if (mask >> i) & 1 else -his[i] for i in range(s.N)])
        v = x @ s.B                       # (x^T B)_j
        expr = 2 * th ** 2 * sum(v[j] * x[j] * r ** (s.Q - 2 * s.alpha[j])
                                 for j in range(s.m0, s.N))
        best = max(best, abs(expr))
    return best / r ** (s.Q - 2)


def cutoff_eval(s, cfg, pts, center=None):
    """phi, phi0, phi1 and the analytic Y phi0 at an (m, N+1) point array.

    phi0's argument depends only on the degenerate coordinates and t, so
    D_m0 phi0 = 0; Y phi0 comes from the chain rule through psi and is
    nonpositive on the cylinder whenever C1 is admissible.
    """
    r, th, Q = cfg.r, cfg.theta, s.Q
    c = np.zeros(s.N + 1) if center is None else center.as_array()
    u = np.atleast_2d(pts) - c
    x, t = u[:, :-1], u[:, -1]

    psi = -cfg.C1 * t * r ** (Q - 2)
    for i in range(s.m0, s.N):
        psi = psi + th ** 2 * x[:, i] ** 2 * r ** (Q - 2 * s.alpha[i])
    psi = np.maximum(psi, 0.0)
    arg0 = psi ** (1.0 / Q)
    lo, hi = th ** (1.0 / Q) * r, r
    phi0, dchi0 = _smoothstep(arg0, lo, hi)

    v = x @ s.B                          # drift velocities at the offsets
    Ypsi = cfg.C1 * r ** (Q - 2)
    for j in range(s.m0, s.N):
        Ypsi = Ypsi + 2 * th ** 2 * v[:, j] * x[:, j] * r ** (Q - 2 * s.alpha[j])
    with np.errstate(divide="ignore", invalid="ignore"):
        darg = np.where(psi > 0, (1.0 / Q) * psi ** (1.0 / Q - 1.0), 0.0)
    Yphi0 = dchi0 * darg * Ypsi

    xn = np.linalg.norm(x[:, :s.m0], axis=1)
    phi1, dchi1 = _smoothstep(th * xn, lo, hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        grad1 = np.where(xn[:, None] > 0,
                         dchi1[:, None] * th * x[:, :s.m0] / np.maximum(xn, 1e-300)[:, None],
                         0.0)
    return {"phi": phi0 * phi1, "phi0": phi0, "phi1": phi1,
            "Yphi0": Yphi0, "grad_phi1": grad1,
            "Yphi": phi1 * Yphi0 + phi0 * np.einsum("mj,mj->m", grad1,
                                                    v[:, :s.m0])}


def build_cutoff(s, cfg, resolution=33, center=None):
    """Sample phi over the cylinder and verify its three properties.

    Returns (phi GridField, Yphi0 GridField, report).  Raises C1TooSmall if
    the defining inequality for C1 fails at any sampled node.
    """
    cfg.validate(s.Q)
    need = min_C1(s, cfg)
    if cfg.C1 * cfg.r ** (s.Q - 2) < need * cfg.r ** (s.Q - 2) - 1e-14:
        raise C1TooSmall(f"C1={cfg.C1:g} below required {need:g}")

    bounds = cylinder_bounds(s, cfg, center)
    axes = [np.linspace(lo, hi, resolution) for lo, hi in bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    ev = cutoff_eval(s, cfg, pts, center)
    shape = (resolution,) * (s.N + 1)
    phi_f = GridField(tuple(bounds), shape, ev["phi"])
    yphi_f = GridField(tuple(bounds), shape, ev["Yphi0"])

    # (a) phi = 1 on the small past ball
    c = hg.point(np.zeros(s.N), 0.0) if center is None else center
    ball_pts = hg.ball_sampler(
        s, hg.AnisotropicBall(c, cfg.theta * cfg.r, past_only=True), 9)
    inner = ball_pts.points[ball_pts.mask]
    ev_in = cutoff_eval(s, cfg, inner, center)
    ones_ok = bool(np.all(ev_in["phi"] >= 1.0 - 1e-12))

    # (b) support containment in the cylinder for t <= 0
    big = [np.linspace(lo - 0.3 * (hi - lo), hi + 0.3 * (hi - lo), resolution)
           for lo, hi in bounds]
    mesh_b = np.meshgrid(*big, indexing="ij")
    pts_b = np.stack([m.ravel() for m in mesh_b], axis=-1)
    tsel = pts_b[:, -1] <= (c.t if center is not None else 0.0)
    outside = tsel & ~in_cylinder(s, cfg, pts_b, center, closed_top=True)
    ev_b = cutoff_eval(s, cfg, pts_b[outside], center)
    support_ok = bool(np.all(ev_b["phi"] <= 1e-15))

    # (c) Y phi0 <= 0 on the cylinder
    inside = in_cylinder(s, cfg, pts, center)
    y_max = float(np.max(ev["Yphi0"][inside])) if inside.any() else 0.0
    sign_ok = y_max <= 1e-10

    rep = make_report("cutoff_properties", lhs=y_max, rhs=0.0,
                      passed=bool(ones_ok and support_ok and sign_ok),
                      ones_on_small_ball=ones_ok, support_contained=support_ok,
                      Yphi0_max_on_cylinder=y_max, required_C1=need)
    return phi_f, yphi_f, rep


def level_transform(G, u, h, variant="scaled"):
    """The sub-solution transforms: 'scaled' w = G(u/h + h^(1/8)),
    'outer' v = G(u + h^(9/8))."""
    if variant == "scaled":
        return G.value(u / h + h ** 0.125)
    if variant == "outer":
        return G.value(u + h ** 1.125)
    raise ShapeMismatch(f"unknown variant {variant!r}")


def _field_of(sol):
    return sol.field if hasattr(sol, "field") else sol


def level_set_probe(s, sol, cfg, h_grid=None, center=None, q=None):
    """Per-slice measure of the level sets N_{t,h} inside K x S.

    Hypothesis gate: mes{u >= 1} over the past ball of radius r must be at
    least half the ball's (sampled) measure.  For each h the bound asks
    mes N_{t,h} >= mes(K_{beta r} x S_{beta r}) / 11 on every slice in the
    alpha-window; the report carries the largest passing h.
    """
    gf = _field_of(sol)
    r, beta, alpha_f = cfg.r, cfg.beta, cfg.alpha_frac
    c = hg.point(np.zeros(s.N), 0.0) if center is None else center
    if h_grid is None:
        h_grid = [0.25 * 2.0 ** (-k) for k in range(11)]

    pts = gf.points()
    vals = gf.grid().ravel()
    w = gf.weights().ravel()
    if float(np.min(vals)) < -1e-10:
        raise ShapeMismatch("level-set probe requires a nonnegative field")

    in_ball = hg.ball_mask(s, c, r, pts, past_only=True)
    mes_ball = float(np.sum(w[in_ball]))
    if mes_ball <= 0:
        return make_report("level_set", lhs=0, rhs=0, passed="hypothesis unmet",
                           reason="no grid support in the past ball")
    mes_super = float(np.sum(w[in_ball & (vals >= 1.0)]))
    if mes_super < 0.5 * mes_ball:
        return make_report("level_set", lhs=mes_super, rhs=mes_ball,
                           passed="hypothesis unmet",
                           hypothesis_fraction=mes_super / mes_ball)

    # K_{beta r} x S_{beta r} membership on the native slices
    off = pts - c.as_array()
    in_KS = np.linalg.norm(off[:, :s.m0], axis=1) <= beta * r
    for i in range(s.m0, s.N):
        in_KS &= np.abs(off[:, i]) <= (s.lam * beta * r) ** s.alpha[i]

    tvals = gf.axis(gf.ndim - 1)
    window = (tvals > c.t - alpha_f * r ** 2) & (tvals < c.t)
    slice_ids = np.where(window)[0]
    tcol = pts[:, -1]

    per_h = {}
    best_h = 0.0
    for h in h_grid:
        ratios = []
        for j in slice_ids:
            on_slice = np.abs(tcol - tvals[j]) < 1e-12
            sel = on_slice & in_KS
            denom = float(np.sum(w[sel]))
            if denom == 0:
                continue
            num = float(np.sum(w[sel & (vals >= h)]))
            ratios.append(num / denom)
        ok = bool(ratios) and all(rr >= 1.0 / 11.0 for rr in ratios)
        per_h[h] = {"min_ratio": min(ratios) if ratios else 0.0, "passes": ok}
        if ok:
            best_h = max(best_h, h)

    qq = q if q is not None else float(s.Q + 2)
    coupling_ok = (best_h <= 0 or
                   r ** (2 - (s.Q + 2) / qq) <= best_h ** 1.125 + 1e-12)
    return make_report("level_set", lhs=best_h, rhs=1.0 / 11.0,
                       passed="report-only",
                       empirical_h1=best_h, per_h=per_h,
                       n_slices=len(slice_ids),
                       hypothesis_fraction=mes_super / mes_ball,
                       coupling_condition_ok=bool(coupling_ok))


def _ball_quad_grid(s, center, radius, n):
    # bounding box of the past ball: cube bounds widened by the flow of the
    # center's spatial part over the ball's time window
    taus = np.linspace(-radius ** 2, 0.0, 9)
    flows = np.stack([hg.exp_drift(s, tau) @ center.x for tau in taus])
    lo_x = flows.min(axis=0) - radius ** s.alpha
    hi_x = flows.max(axis=0) + radius ** s.alpha
    bounds = [(lo_x[i], hi_x[i]) for i in range(s.N)]
    bounds.append((center.t - radius ** 2, center.t))
    axes = [np.linspace(lo, hi, n) for lo, hi in bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    ws = []
    for ax in axes:
        wv = np.full(ax.size, ax[1] - ax[0] if ax.size > 1 else 1.0)
        wv[0] *= 0.5
        wv[-1] *= 0.5
        ws.append(wv)
    w = ws[0]
    for wv in ws[1:]:
        w = np.multiply.outer(w, wv)
    mask = hg.ball_mask(s, center, radius, pts, past_only=True)
    return pts, w.ravel(), mask, tuple(len(a) for a in axes)


def poincare_probe(s, sol, coeff, cfg, h, G=None, center=None, q=None,
                   n_quad=13, n_small=9, n_z=8, refine_check=True):
    """Empirical constant in the weak Poincare inequality for
    w = G(u/h + h^(1/8)); I0 is built from kernel integrals against the
    cutoff as the representation formula prescribes."""
    gf = _field_of(sol)
    G = G or build_g()
    c = hg.point(np.zeros(s.N), 0.0) if center is None else center
    r, th = cfg.r, cfg.theta
    Q = s.Q
    qq = q if q is not None else float(Q + 2)
    ker = Gamma1(s)

    # quadrature grid over the big past ball
    pts_b, w_b, mask_b, shape_b = _ball_quad_grid(s, c, r / th, n_quad)
    u_b = np.maximum(gf.interp(pts_b), 0.0)
    w_big = level_transform(G, u_b, h)
    ev = cutoff_eval(s, cfg, pts_b, center)

    # |D_m0 w|^2 by central differences on the regular quadrature grid
    Wg = w_big.reshape(shape_b)
    grad2 = np.zeros(shape_b)
    for i in range(s.m0):
        dx = (pts_b.reshape(shape_b + (s.N + 1,))[..., i].max()
              - pts_b.reshape(shape_b + (s.N + 1,))[..., i].min()) / (shape_b[i] - 1)
        grad2 += (np.gradient(Wg, dx, axis=i, edge_order=2)) ** 2
    dirichlet = float(np.sum(w_b[mask_b] * grad2.ravel()[mask_b]))

    # I0 = max over the small ball of I1 + C2
    pts_s, w_s, mask_s, _ = _ball_quad_grid(s, c, th * r, n_small)
    z_pool = pts_s[mask_s]
    if z_pool.shape[0] == 0:
        raise KernelQuadratureFailure("no sample points in the small ball")
    zsel = z_pool[np.linspace(0, z_pool.shape[0] - 1, min(n_z, z_pool.shape[0])
                              ).astype(int)]

    def I1_C2(zarr, pts_q, w_q, mask_q):
        evq = cutoff_eval(s, cfg, pts_q, center)
        wq_vals = level_transform(G, np.maximum(gf.interp(pts_q), 0.0), h)
        out = np.zeros(zarr.shape[0])
        for kz, zrow in enumerate(zarr):
            z = hg.point(zrow[:-1], zrow[-1])
            acc = 0.0
            for tv in np.unique(pts_q[:, -1]):
                rows = (pts_q[:, -1] == tv) & mask_q
                if not rows.any():
                    continue
                dt = z.t - tv
                if dt <= 0:
                    continue
                V, Gr = ker.slice(zrow[None, :-1], dt, pts_q[rows, :-1],
                                  with_gradient=True)
                kvals = V[0]
                kgrad = Gr[:, 0, :]
                # I1: phi0's m0-gradient vanishes so only the Y phi term
                term_I1 = -kvals * wq_vals[rows] * evq["Yphi"][rows]
                # C2: <phi0 A0 D phi1, D Gamma1> w
                pair = np.einsum("im,mi->m", kgrad,
                                 evq["grad_phi1"][rows]) * evq["phi0"][rows]
                term_C2 = pair * wq_vals[rows]
                acc += float(np.sum(w_q[rows] * (term_I1 + term_C2)))
            out[kz] = acc
        return out

    I0_samples = I1_C2(zsel, pts_b, w_b, mask_b)
    if refine_check:
        pts_f, w_f, mask_f, _ = _ball_quad_grid(s, c, r / th,
                                                int(n_quad * 1.5) | 1)
        I0_fine = I1_C2(zsel[:2], pts_f, w_f, mask_f)
        base = np.abs(I0_samples[:2]) + 1e-9
        if np.any(np.abs(I0_fine - I0_samples[:2]) / base > 0.10):
            raise KernelQuadratureFailure(
                "I1+C2 integrals changed by more than 10% under refinement")
    I0 = float(np.max(I0_samples))

    # LHS over the small ball
    w_small = level_transform(G, np.maximum(gf.interp(pts_s), 0.0), h)
    lhs = float(np.sum(w_s[mask_s] * np.maximum(w_small[mask_s] - I0, 0.0) ** 2))

    # data terms
    u_inf = float(np.max(np.maximum(gf.interp(pts_b[mask_b]), 0.0)))
    cf = _field_of_coeff(coeff, "c", gf)
    ff = _field_of_coeff(coeff, "f", gf)
    c_q = float(np.sum(w_b[mask_b] * np.abs(cf.interp(pts_b[mask_b])) ** qq)
                ** (1.0 / qq))
    f_q = float(np.sum(w_b[mask_b] * np.abs(ff.interp(pts_b[mask_b])) ** qq)
                ** (1.0 / qq))
    big_r = r / th
    data = (h ** -2.25 * big_r ** (Q + 2) * big_r ** (8.0 / (Q + 2) - 4.0 / qq)
            * (c_q ** 2 * u_inf ** 2 + f_q ** 2))
    rhs = th ** 2 * r ** 2 * dirichlet + data
    emp_C = lhs / rhs if rhs > 0 else 0.0
    lam0_ratio = abs(I0) / max(math.log(h ** -0.125), 1e-12)
    return make_report("weak_poincare", lhs=lhs, rhs=rhs, passed="report-only",
                       empirical_constant=emp_C, I0=I0,
                       dirichlet_energy=dirichlet, data_term=data,
                       u_sup=u_inf, h=h,
                       lambda0_ratio=lam0_ratio)


def _field_of_coeff(coeff, name, gf):
    arr = getattr(coeff, name)
    return GridField(gf.box, gf.shape, np.asarray(arr, float).ravel())


def sobolev_probe(s, u_field, coeff, rho=0.5, r=1.0, q=None, p_list=(2, 3),
                  center=None, n=13):
    """Empirical constants in the weak Sobolev embedding with k = 1 + 2/Q,
    for u itself and for its integer powers."""
    from .errors import ExponentOutOfRange
    gf = _field_of(u_field)
    if not (0.5 <= rho < r <= 1.0):
        raise ShapeMismatch("paper range requires 1/2 <= rho < r <= 1")
    Q = s.Q
    # default q strictly between (Q+2)/2 and Q+2 so beta lands in (0,1)
    qq = q if q is not None else 0.75 * (Q + 2)
    if qq <= (Q + 2) / 2.0:
        raise ExponentOutOfRange(f"q={qq:g} <= (Q+2)/2")
    beta = (Q + 2) / qq - 1.0
    if not 0.0 < beta < 1.0:
        raise ExponentOutOfRange(f"beta={beta:g} outside (0,1)")
    k = 1.0 + 2.0 / Q
    c = hg.point(np.zeros(s.N), 0.0) if center is None else center

    pts_r, w_r, mask_r, shape_r = _ball_quad_grid(s, c, r, n)
    pts_p, w_p, mask_p, _ = _ball_quad_grid(s, c, rho, n)
    u_r = np.maximum(gf.interp(pts_r), 0.0)
    u_p = np.maximum(gf.interp(pts_p), 0.0)

    Ug = u_r.reshape(shape_r)
    grad2 = np.zeros(shape_r)
    box_r = pts_r.reshape(shape_r + (s.N + 1,))
    for i in range(s.m0):
        dx = (box_r[..., i].max() - box_r[..., i].min()) / (shape_r[i] - 1)
        grad2 += np.gradient(Ug, dx, axis=i, edge_order=2) ** 2

    ff = _field_of_coeff(coeff, "f", gf)
    f_r = ff.interp(pts_r[mask_r])
    exp_f = (2.0 * Q + 4.0) / (Q + 4.0)
    f_norm = float(np.sum(w_r[mask_r] * np.abs(f_r) ** exp_f) ** (1.0 / exp_f))
    f_norm_q = float(np.sum(w_r[mask_r] * np.abs(f_r) ** qq) ** (1.0 / qq))

    out = {}
    for p in (1,) + tuple(p_list):
        w_vals_p = u_p ** p
        w_vals_r = u_r ** p
        lhs = float(np.sum(w_p[mask_p] * w_vals_p[mask_p] ** (2 * k))
                    ** (1.0 / (2 * k)))
        l2 = float(np.sum(w_r[mask_r] * w_vals_r[mask_r] ** 2) ** 0.5)
        gr2 = np.zeros(shape_r)
        Wg = w_vals_r.reshape(shape_r)
        for i in range(s.m0):
            dx = (box_r[..., i].max() - box_r[..., i].min()) / (shape_r[i] - 1)
            gr2 += np.gradient(Wg, dx, axis=i, edge_order=2) ** 2
        d2 = float(np.sum(w_r[mask_r] * gr2.ravel()[mask_r]) ** 0.5)
        if p == 1:
            rhs = (l2 + d2) / (r - rho) + f_norm
            key = "first_order"
        else:
            rhs = ((p ** (1.0 / (1.0 - beta)) * l2 + d2) / (r - rho)
                   + r ** (p * (2 - (Q + 2) / qq) + 0.5 * Q) * f_norm_q ** p)
            key = f"power_p{p}"
        out[key] = {"lhs": lhs, "rhs": rhs,
                    "empirical_C": lhs / rhs if rhs > 0 else 0.0}
    return make_report("weak_sobolev", lhs=out["first_order"]["lhs"],
                       rhs=out["first_order"]["rhs"], passed="report-only",
                       two_k=2 * k, beta=beta, q=qq, variants=out)


def linf_probe(s, u_field, r=0.5, p_list=(1, 2), center=None, n=17,
               refine_factor=2):
    """Empirical constant sup_{B_{r/2}} u^p * r^(Q+2) / int_{B_r} u^p,
    with a stability flag under one uniform refinement of the sampling."""
    gf = _field_of(u_field)
    c = hg.point(np.zeros(s.N), 0.0) if center is None else center
    out = {}
    for p in p_list:
        vals = {}
        for tag, nn in (("coarse", n), ("fine", refine_factor * n - 1)):
            pts_r, w_r, mask_r, _ = _ball_quad_grid(s, c, r, nn)
            pts_h, _, mask_h, _ = _ball_quad_grid(s, c, r / 2, nn)
            u_r = np.maximum(gf.interp(pts_r), 0.0)
            u_h = np.maximum(gf.interp(pts_h), 0.0)
            sup = float(np.max(u_h[mask_h] ** p)) if mask_h.any() else 0.0
            integ = float(np.sum(w_r[mask_r] * u_r[mask_r] ** p))
            vals[tag] = sup * r ** (s.Q + 2) / integ if integ > 0 else math.inf
        stable = (math.isfinite(vals["fine"]) and vals["coarse"] > 0 and
                  abs(vals["fine"] - vals["coarse"]) <= 0.2 * vals["coarse"])
        out[f"p{p}"] = {"constant": vals["coarse"], "refined": vals["fine"],
                        "stable": bool(stable)}
    first = out[f"p{p_list[0]}"]
    return make_report("linf_bound", lhs=first["constant"], rhs=1.0,
                       passed="report-only", variants=out, r=r)


def holder_estimate(s, sol, center, radii, min_nodes=6):
    """Oscillation over nested past balls and the fitted Hoelder exponent.

    Needs at least 4 rungs; reports per-rung Osc, the contraction ratios,
    the log-log slope with a 2-sigma halfwidth, and a per-rung node count.
    """
    radii = sorted([float(r) for r in radii], reverse=True)
    if len(radii) < 4:
        raise InsufficientRungs(f"need >= 4 radii, got {len(radii)}")
    gf = _field_of(sol)
    pts = gf.points()
    vals = gf.grid().ravel()
    osc, counts = [], []
    for r in radii:
        m = hg.ball_mask(s, center, r, pts, past_only=True)
        counts.append(int(np.sum(m)))
        if counts[-1] < min_nodes:
            osc.append(float("nan"))
            continue
        osc.append(float(np.max(vals[m]) - np.min(vals[m])))
    osc_arr = np.asarray(osc)
    if np.all(osc_arr[np.isfinite(osc_arr)] <= 1e-14):
        return make_report("holder_exponent", lhs=0.0, rhs=0.0, passed="flat",
                           radii=radii, oscillations=osc, node_counts=counts)
    good = np.isfinite(osc_arr) & (osc_arr > 0)
    lr = np.log(np.asarray(radii)[good])
    lo = np.log(osc_arr[good])
    A = np.vstack([lr, np.ones_like(lr)]).T
    coef, res, *_ = np.linalg.lstsq(A, lo, rcond=None)
    slope = float(coef[0])
    dof = max(int(good.sum()) - 2, 1)
    sigma2 = float(res[0]) / dof if res.size else 0.0
    cov = sigma2 * np.linalg.inv(A.T @ A)
    ci = 2.0 * math.sqrt(max(cov[0, 0], 0.0))
    ratios = [osc[i + 1] / osc[i] if (np.isfinite(osc[i]) and osc[i] > 0
                                      and np.isfinite(osc[i + 1])) else float("nan")
              for i in range(len(osc) - 1)]
    contraction_ok = all((not np.isfinite(rr)) or rr <= 0.99 for rr in ratios)
    return make_report("holder_exponent", lhs=slope, rhs=0.0,
                       passed=bool(contraction_ok and slope > 0),
                       alpha_hat=slope, ci_halfwidth=ci,
                       radii=radii, oscillations=osc, ratios=ratios,
                       node_counts=counts)
