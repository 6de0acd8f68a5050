"""Potential operators against the model kernel on grid fields.

Gamma1(f)(z) = int Gamma1(z, zeta) f(zeta) dzeta and its gradient variant
Gamma1(D f)(z) = -int D^(zeta) Gamma1(z, zeta) f(zeta) dzeta are evaluated
on the field's own grid.  The time integral is composite trapezoid up to the
penultimate slice; the final time cell, where the kernel concentrates, is
handled by one level of local subdivision (4 sub-cells per axis) around each
evaluation node, with plain trapezoid for the far part of that cell.
"""

import math

import numpy as np

from . import hypogroup as hg
from .errors import ExponentOutOfRange
from .fields import GridField, field_from_function
from .fundsol import Gamma1
from .report import make_report

_SUBDIV = 4      # sub-cells per axis in the final time cell
_PATCH = 2       # coarse cells on each side refined around the evaluation node


def _spatial_weights(f):
    w = f.axis_weights(0)
    for i in range(1, f.ndim - 1):
        w = np.multiply.outer(w, f.axis_weights(i))
    return w.ravel()


def _refined_slice(f_slice, shape_x):
    """Multilinear refinement of a spatial slice by _SUBDIV per axis."""
    g = f_slice.reshape(shape_x)
    for ax in range(len(shape_x)):
        n = g.shape[ax]
        if n == 1:
            continue
        old = np.arange(n, dtype=float)
        new = np.linspace(0, n - 1, (n - 1) * _SUBDIV + 1)
        g = np.apply_along_axis(lambda col: np.interp(new, old, col), ax, g)
    return g


def _apply(s, f, ker, want_gradient):
    nx = f.shape[:-1]
    nt = f.shape[-1]
    M = int(np.prod(nx))
    N = s.N
    if f.ndim - 1 != N:
        raise ValueError(f"field has {f.ndim - 1} spatial axes, structure has {N}")
    dt = f.spacing(N)
    X = np.stack([m.ravel() for m in
                  np.meshgrid(*[f.axis(i) for i in range(N)], indexing="ij")], axis=-1)
    wx = _spatial_weights(f)
    F = f.grid().reshape(M, nt)
    FW = F * wx[:, None]

    n_out = s.m0 if want_gradient else 1
    out = np.zeros((n_out, M, nt))

    # composite trapezoid over [t_0, t_{i-1}] for every output slice i >= 2
    for k in range(1, nt):
        if want_gradient:
            _, Gk = ker.slice(X, k * dt, X, with_gradient=True)
            KF = np.einsum("gmk,kj->gmj", Gk, FW)
        else:
            KF = (ker.slice(X, k * dt, X) @ FW)[None]
        for i in range(max(k, 2), nt):
            j = i - k
            w = 0.5 * dt if (j == 0 or j == i - 1) else dt
            out[:, :, i] += w * KF[:, :, j]

    # final time cell [t_{i-1}, t_i]: subdivided midpoints in time; around
    # each node the coarse-patch contribution is swapped for a refined one
    # (far = full coarse - coarse over patch, so edge weights stay trapezoid)
    steps = np.array([f.spacing(i) for i in range(N)])
    coarse_idx = np.indices(nx).reshape(N, -1).T          # (M, N)

    def offset_set(per_axis, substep):
        offs = np.stack([m.ravel() for m in np.meshgrid(*per_axis, indexing="ij")],
                        axis=-1)
        delta = offs * (steps / substep)
        wv = []
        for a in range(N):
            wa = np.full(per_axis[a].size, steps[a] / substep)
            wa[0] *= 0.5
            wa[-1] *= 0.5
            wv.append(wa)
        w = wv[0]
        for wa in wv[1:]:
            w = np.multiply.outer(w, wa)
        return offs, delta, w.ravel()

    offs_r, delta_r, w_r = offset_set([np.arange(-_PATCH * _SUBDIV,
                                                 _PATCH * _SUBDIV + 1)] * N, _SUBDIV)
    offs_c, delta_c, w_c = offset_set([np.arange(-_PATCH, _PATCH + 1)] * N, 1)

    def gather(offsets, grid_shape, scale):
        pos = coarse_idx[:, None, :] * scale + offsets[None, :, :]
        valid = np.all((pos >= 0) & (pos < np.array(grid_shape)), axis=-1)
        pos = np.clip(pos, 0, np.array(grid_shape) - 1)
        flat = np.ravel_multi_index(tuple(np.moveaxis(pos, -1, 0)), grid_shape)
        return flat, valid

    ref_shape = tuple((n - 1) * _SUBDIV + 1 for n in nx)
    flat_r, valid_r = gather(offs_r, ref_shape, _SUBDIV)
    flat_c, valid_c = gather(offs_c, nx, 1)

    def local_kernel(E, cov, delta):
        A = X @ (np.eye(N) - E).T                         # (I - E) x per node
        Y = A[:, None, :] - (delta @ E.T)[None, :, :]     # x - E(x + delta)
        quad = np.einsum("mpi,ij,mpj->mp", Y, cov.Cinv, Y)
        scale = (4 * math.pi) ** (-N / 2) / math.sqrt(cov.detC)
        K = scale * np.exp(-0.25 * quad)
        gfac = 0.5 * np.einsum("mpj,ji->mpi", Y, cov.Cinv @ E)[:, :, :s.m0]
        return K, gfac

    for q in range(_SUBDIV):
        s_inc = (q + 0.5) * dt / _SUBDIV
        tau_frac = 1.0 - s_inc / dt          # interpolation weight toward slice i
        wq = dt / _SUBDIV
        cov, E = ker._cov(s_inc)
        damp = math.exp(-s_inc * ker.trB)
        K_r, gf_r = local_kernel(E, cov, delta_r)
        K_c, gf_c = local_kernel(E, cov, delta_c)
        if want_gradient:
            _, Gfull = ker.slice(X, s_inc, X, with_gradient=True)
        else:
            Kfull = ker.slice(X, s_inc, X)

        for i in range(1, nt):
            f_tau = (1.0 - tau_frac) * F[:, i - 1] + tau_frac * F[:, i]
            fv_c = np.where(valid_c, f_tau[flat_c], 0.0)
            fv_r = np.where(valid_r, _refined_slice(f_tau, nx).ravel()[flat_r], 0.0)
            if want_gradient:
                for g in range(s.m0):
                    far = Gfull[g] @ (f_tau * wx) \
                        - damp * np.sum(K_c * gf_c[:, :, g] * fv_c * w_c, axis=1)
                    near = damp * np.sum(K_r * gf_r[:, :, g] * fv_r * w_r, axis=1)
                    out[g, :, i] += wq * (far + near)
            else:
                far = Kfull @ (f_tau * wx) - damp * np.sum(K_c * fv_c * w_c, axis=1)
                near = damp * np.sum(K_r * fv_r * w_r, axis=1)
                out[0, :, i] += wq * (far + near)

    if want_gradient:
        return [f.with_values(-out[g].ravel()) for g in range(s.m0)]
    return f.with_values(out[0].ravel())


def potential_apply(s, f, ker=None):
    """Gamma1(f) sampled on f's own grid."""
    ker = ker or Gamma1(s)
    return _apply(s, f, ker, want_gradient=False)


def potential_apply_grad(s, f, ker=None, return_components=False):
    """Gamma1(D_m0 f): gradient-kernel potential; magnitude field by default."""
    ker = ker or Gamma1(s)
    comps = _apply(s, f, ker, want_gradient=True)
    if return_components:
        return comps
    mag = np.sqrt(sum(c.grid() ** 2 for c in comps))
    return f.with_values(mag.ravel())


def conjugate_exponent(Q, p, order):
    """q with 1/q = 1/p - order/(Q+2); order 2 for Gamma1(f), 1 for gradient."""
    inv_q = 1.0 / p - order / (Q + 2.0)
    if inv_q <= 0.0:
        raise ExponentOutOfRange(f"1/q = {inv_q:g} <= 0 for p={p}, Q={Q}")
    if inv_q >= 1.0:
        raise ExponentOutOfRange(f"q = {1/inv_q:g} < 1 for p={p}, Q={Q}")
    return 1.0 / inv_q


def make_test_corpus(box, shape, seed=42):
    """The fixed probe corpus: 3 Gaussian bumps, 3 grid-aligned indicators,
    2 windowed smoothed-noise fields.  Returns (name, GridField) pairs."""
    rng = np.random.default_rng(seed)
    box = tuple(tuple(b) for b in box)
    shape = tuple(int(n) for n in shape)
    ndim = len(shape)
    los = np.array([b[0] for b in box])
    his = np.array([b[1] for b in box])
    span = his - los
    out = []

    for b in range(3):
        c = los + span * rng.uniform(0.35, 0.65, ndim)
        w = span * rng.uniform(0.18, 0.35, ndim)

        def bump(P, c=c, w=w):
            return np.exp(-np.sum(((P - c) / w) ** 2, axis=1))

        out.append((f"gauss{b}", field_from_function(box, shape, bump)))

    axes = [np.linspace(lo, hi, n) for (lo, hi), n in zip(box, shape)]
    for b in range(3):
        idx_lo, idx_hi = [], []
        for a in range(ndim):
            n = shape[a]
            i0 = int(rng.integers(n // 5, 2 * n // 5))
            i1 = int(rng.integers(i0 + max(2, n // 3), min(n - 1, 4 * n // 5) + 1))
            idx_lo.append(axes[a][i0])
            idx_hi.append(axes[a][i1])
        lo_arr, hi_arr = np.array(idx_lo), np.array(idx_hi)

        def box_ind(P, lo_arr=lo_arr, hi_arr=hi_arr):
            return np.all((P >= lo_arr - 1e-12) & (P <= hi_arr + 1e-12), axis=1).astype(float)

        out.append((f"box{b}", field_from_function(box, shape, box_ind)))

    from scipy.ndimage import gaussian_filter
    from scipy.interpolate import RegularGridInterpolator
    for b in range(2):
        base_shape = tuple(max(9, n // 2 + 1) for n in shape)
        noise = rng.uniform(0.0, 1.0, base_shape)
        smooth = gaussian_filter(noise, sigma=1.5, mode="constant")
        base_axes = [np.linspace(lo, hi, n) for (lo, hi), n in zip(box, base_shape)]
        interp = RegularGridInterpolator(base_axes, smooth, bounds_error=False,
                                         fill_value=0.0)
        c = 0.5 * (los + his)

        def noisy(P, interp=interp, c=c):
            win = np.prod(np.cos(0.5 * np.pi * np.clip((P - c) / (0.5 * span), -1, 1))
                          ** 2, axis=1)
            return interp(P) * win

        out.append((f"noise{b}", field_from_function(box, shape, noisy)))
    return out


def verify_lp_lq(s, p=2.0, T=0.5, shape=None, seed=42, gradient=False, corpus=None):
    """Empirical L^p -> L^q boundedness of the potential over the corpus.

    Reports the per-field ratios ||Gamma1(f)||_q / ||f||_p and their max;
    acceptance is boundedness across the corpus, not a sharp constant.
    """
    order = 1 if gradient else 2
    q = conjugate_exponent(s.Q, p, order)
    if shape is None:
        shape = (13,) * (s.N + 1)
    box = [(-(1.2 * r), 1.2 * r) for r in (1.0,) * s.m0]
    box += [(-1.0, 1.0) for _ in range(s.N - s.m0)]
    box += [(0.0, T)]
    fields = corpus if corpus is not None else make_test_corpus(box, shape, seed)
    ker = Gamma1(s)
    ratios = {}
    decay_ok = True
    for name, f in fields:
        g = potential_apply_grad(s, f, ker) if gradient else potential_apply(s, f, ker)
        nf = f.lp_norm(p)
        ng = g.lp_norm(q)
        ratios[name] = ng / nf if nf > 0 else 0.0
        vmax = float(np.max(np.abs(f.values)))
        edge = np.abs(f.grid()[tuple(slice(None) if i == f.ndim - 1 else 0
                                     for i in range(f.ndim))]).max() if vmax else 0.0
        decay_ok &= bool(edge <= 1e-8 * vmax + 1e-300)
    vals = np.array(list(ratios.values()))
    pos = vals[vals > 0]
    spread = float(pos.max() / pos.min()) if pos.size else float("inf")
    return make_report("potential_lp_lq", lhs=float(vals.max()), rhs=1.0,
                       passed="report-only", p=p, q=q, gradient=gradient,
                       ratios=ratios, max_ratio=float(vals.max()),
                       ratio_spread=spread, boundary_decay_ok=decay_ok,
                       n_fields=len(fields))
