"""Lie-group calculus induced by the drift matrix B.

The drift matrix is block lower-Hessenberg: superdiagonal blocks B_1..B_d of
shapes m_{k-1} x m_k with full column rank, zeros strictly above them, and
unconstrained entries elsewhere.  That structure induces anisotropic
dilations with exponents alpha_i, a translation group
(x,t) o (xi,tau) = (xi + E(tau) x, t + tau) with E(tau) = exp(-tau B^T),
and a homogeneous norm solving

    sum_i x_i^2 / r^(2 alpha_i) + t^2 / r^4 = 1.

Everything here is a pure function over immutable values; safe to call from
many threads.
"""

from dataclasses import dataclass
import json
import math

import numpy as np
import scipy.linalg

from .errors import (EmptyRegion, NonPositiveScale, NormExceeded,
                     RankDeficientBlock, ShapeMismatch)

_RANK_RTOL = 1e-10          # smallest/largest singular value cutoff for H2
_ZERO_BLOCK_RTOL = 1e-12    # tolerance for the must-be-zero blocks


@dataclass(frozen=True)
class OperatorStructure:
    """Validated drift matrix with its derived scaling data.

    Attributes
    ----------
    N : total spatial dimension, m : block sizes (m0 >= m1 >= ... >= md),
    B : the N x N drift matrix, lam : bound with ||B|| <= lam,
    alpha : per-coordinate dilation exponents (1,..,1,3,..,3,...,2d+1),
    Q : m0 + 3 m1 + ... + (2d+1) md,
    B0 : B with every entry outside the superdiagonal blocks zeroed.
    """

    N: int
    m: tuple
    B: np.ndarray
    lam: float
    alpha: np.ndarray
    Q: int
    B0: np.ndarray

    @property
    def d(self):
        return len(self.m) - 1

    @property
    def m0(self):
        return self.m[0]

    def drift_velocity(self, x):
        """Velocity field of Y: component j is sum_i x_i b_ij, i.e. B^T x."""
        return np.asarray(x) @ self.B


@dataclass(frozen=True)
class GroupPoint:
    x: np.ndarray
    t: float

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, float))
        object.__setattr__(self, "t", float(self.t))
        if not (np.all(np.isfinite(self.x)) and math.isfinite(self.t)):
            raise ShapeMismatch("group point has non-finite entries")

    def as_array(self):
        return np.append(self.x, self.t)


def point(x, t):
    return GroupPoint(np.atleast_1d(np.asarray(x, float)), float(t))


def _block_slices(m):
    idx = np.cumsum((0,) + tuple(m))
    return [slice(idx[k], idx[k + 1]) for k in range(len(m))]


def validate_structure(B, m, lam=None):
    """Check the block form of B and return the populated structure.

    Raises ShapeMismatch / RankDeficientBlock / NormExceeded.
    """
    B = np.asarray(B, float)
    m = tuple(int(v) for v in m)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ShapeMismatch("B must be square")
    N = B.shape[0]
    if any(v <= 0 for v in m):
        raise ShapeMismatch("block sizes must be positive")
    if sum(m) != N:
        raise ShapeMismatch(f"block sizes {m} do not sum to N={N}")
    if any(m[k] < m[k + 1] for k in range(len(m) - 1)):
        raise ShapeMismatch(f"block sizes {m} must be non-increasing")

    d = len(m) - 1
    sl = _block_slices(m)
    scale = max(1.0, float(np.max(np.abs(B))))

    # zeros strictly above the superdiagonal blocks
    for i in range(d + 1):
        for j in range(i + 2, d + 1):
            if np.max(np.abs(B[sl[i], sl[j]])) > _ZERO_BLOCK_RTOL * scale:
                raise ShapeMismatch(f"block ({i},{j}) above the superdiagonal is not zero")

    # full column rank of each B_k
    B0 = np.zeros_like(B)
    for k in range(1, d + 1):
        blk = B[sl[k - 1], sl[k]]
        sv = np.linalg.svd(blk, compute_uv=False)
        if sv.size < m[k] or sv[m[k] - 1] <= _RANK_RTOL * max(sv[0], 1e-300):
            raise RankDeficientBlock(k)
        B0[sl[k - 1], sl[k]] = blk

    opnorm = np.linalg.norm(B, 2)
    if lam is None:
        lam = max(opnorm, 1.0)
    lam = float(lam)
    if lam <= 0:
        raise ShapeMismatch("lambda must be positive")
    if opnorm > lam * (1 + 1e-12):
        raise NormExceeded(f"||B||={opnorm:g} exceeds lambda={lam:g}")

    alpha = np.concatenate([np.full(m[k], 2 * k + 1.0) for k in range(d + 1)])
    Q = int(sum((2 * k + 1) * m[k] for k in range(d + 1)))
    return OperatorStructure(N=N, m=m, B=B, lam=lam, alpha=alpha, Q=Q, B0=B0)


def structure_from_json(doc):
    """Load {"N":…, "blocks":[m0,…,md], "B":[[…]], "lambda":…}."""
    if isinstance(doc, (str, bytes)):
        doc = json.loads(doc)
    B = np.asarray(doc["B"], float)
    m = tuple(doc["blocks"])
    s = validate_structure(B, m, doc.get("lambda"))
    if "N" in doc and int(doc["N"]) != s.N:
        raise ShapeMismatch(f"declared N={doc['N']} but B is {s.N}x{s.N}")
    return s


def kolmogorov_structure(lam=8.0):
    """The model structure: B=[[0,1],[0,0]], m=(1,1), Q=4."""
    return validate_structure([[0.0, 1.0], [0.0, 0.0]], (1, 1), lam)


def _nilpotency_index(M):
    """Smallest k with M^k = 0, or None if M is not (numerically) nilpotent."""
    n = M.shape[0]
    scale = max(1.0, float(np.max(np.abs(M))))
    P = np.eye(n)
    for k in range(1, n + 1):
        P = P @ M
        if np.max(np.abs(P)) <= 1e-300 * scale:
            return k
    return None


def exp_drift(s, tau, use_B0=False):
    """E(tau) = exp(-tau B^T); terminating series when B is nilpotent."""
    tau = float(tau)
    B = s.B0 if use_B0 else s.B
    M = -tau * B.T
    idx = _nilpotency_index(B.T)
    if idx is not None:
        E = np.eye(s.N)
        P = np.eye(s.N)
        for k in range(1, idx):
            P = P @ M / k
            E = E + P
        return E
    return scipy.linalg.expm(M)


def compose(s, a, b):
    """a o b = (xi + E(tau) x, t + tau) with a=(x,t), b=(xi,tau)."""
    E = exp_drift(s, b.t)
    return GroupPoint(b.x + E @ a.x, a.t + b.t)


def invert(s, a):
    """(x,t)^(-1) = (-E(-t) x, -t)."""
    E = exp_drift(s, -a.t)
    return GroupPoint(-(E @ a.x), -a.t)


def dilate(s, lam, a):
    """delta_lam: coordinatewise (lam^alpha_i x_i, lam^2 t)."""
    if lam <= 0:
        raise NonPositiveScale(f"scale {lam!r} must be positive")
    return GroupPoint(lam ** s.alpha * a.x, lam ** 2 * a.t)


def _norm_lhs(s, x2, t2, r):
    return float(np.sum(x2 / r ** (2 * s.alpha)) + t2 / r ** 4)


def hom_norm(s, a, tol=1e-12, max_iter=200):
    """Homogeneous norm: the unique r>0 with sum x_i^2/r^(2 a_i) + t^2/r^4 = 1.

    Bracketed bisection: at r0 = max_i(|x_i|^(1/alpha_i), |t|^(1/2)) the
    left side is >= 1, and at r0*sqrt(N+1) it is <= 1, so [r0, r0*sqrt(N+1)]
    always brackets the root of the strictly decreasing left side.
    """
    x2 = a.x ** 2
    t2 = a.t ** 2
    guesses = np.abs(a.x) ** (1.0 / s.alpha)
    r0 = max(float(np.max(guesses, initial=0.0)), abs(a.t) ** 0.5)
    if r0 == 0.0:
        return 0.0
    lo, hi = r0, r0 * math.sqrt(s.N + 1)
    # geometric growth guard; unreachable for exact arithmetic
    for _ in range(64):
        if _norm_lhs(s, x2, t2, hi) <= 1.0:
            break
        hi *= 2.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if _norm_lhs(s, x2, t2, mid) > 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, lo):
            break
    return 0.5 * (lo + hi)


def hom_norm_batch(s, X, T, tol=1e-12, max_iter=100):
    """Vectorized hom_norm for an (m, N) coordinate array and (m,) times."""
    X = np.atleast_2d(np.asarray(X, float))
    T = np.asarray(T, float).ravel()
    x2 = X ** 2
    t2 = T ** 2
    r0 = np.maximum(np.max(np.abs(X) ** (1.0 / s.alpha), axis=1), np.abs(T) ** 0.5)
    out = np.zeros_like(r0)
    live = r0 > 0
    if not live.any():
        return out
    lo = r0[live].copy()
    hi = lo * math.sqrt(s.N + 1)
    a2 = 2 * s.alpha
    xl, tl = x2[live], t2[live]

    def lhs(r):
        return np.sum(xl / r[:, None] ** a2, axis=1) + tl / r ** 4

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        too_big = lhs(mid) > 1.0
        lo = np.where(too_big, mid, lo)
        hi = np.where(too_big, hi, mid)
        if np.max(hi - lo) <= tol * max(1.0, float(np.max(lo))):
            break
    out[live] = 0.5 * (lo + hi)
    return out


def group_offsets(s, center, pts):
    """Vectorized z0^{-1} o z for an (m, N+1) point array; returns (X, T).

    Points sharing a time value share one E evaluation.
    """
    pts = np.atleast_2d(pts)
    zinv = invert(s, center)
    T = pts[:, -1] + zinv.t
    X = pts[:, :-1].copy()
    for tv in np.unique(pts[:, -1]):
        rows = pts[:, -1] == tv
        X[rows] += exp_drift(s, tv) @ zinv.x
    return X, T


def ball_mask(s, center, radius, pts, past_only=False):
    """Vectorized membership of an (m, N+1) point array in B_r(center)."""
    X, T = group_offsets(s, center, pts)
    ok = hom_norm_batch(s, X, T) <= radius
    if past_only:
        ok &= np.atleast_2d(pts)[:, -1] < center.t
    return ok


@dataclass(frozen=True)
class AnisotropicBall:
    """Gauge ball B_r(z0); past_only restricts to t < t0 (the '-' ball)."""

    center: GroupPoint
    radius: float
    past_only: bool = False

    def contains(self, s, z):
        u = compose(s, invert(s, self.center), z)
        if self.past_only and z.t >= self.center.t:
            return False
        return hom_norm(s, u) <= self.radius


def cube_bounds(s, r, center=None, past_only=False):
    """Axis bounds of the cube C_r: |x_i| <= r^alpha_i, |t| <= r^2."""
    c = np.zeros(s.N + 1) if center is None else center.as_array()
    bounds = [(c[i] - r ** s.alpha[i], c[i] + r ** s.alpha[i]) for i in range(s.N)]
    bounds.append((c[-1] - r ** 2, c[-1]) if past_only else (c[-1] - r ** 2, c[-1] + r ** 2))
    return bounds


def past_cube_bounds(s, r, center=None, lam=None):
    """Bounds of C_r^-: -r^2<=t<=0, |x'|<=r, |x_j|<=(lam*r)^alpha_j beyond m0.

    |x'| is the Euclidean norm over the first m0 coordinates, so the returned
    per-axis bounds are the bounding box; membership additionally requires
    the x' ball test (see in_past_cube).
    """
    lam = s.lam if lam is None else lam
    c = np.zeros(s.N + 1) if center is None else center.as_array()
    bounds = [(c[i] - r, c[i] + r) for i in range(s.m0)]
    bounds += [(c[i] - (lam * r) ** s.alpha[i], c[i] + (lam * r) ** s.alpha[i])
               for i in range(s.m0, s.N)]
    bounds.append((c[-1] - r ** 2, c[-1]))
    return bounds


def in_past_cube(s, pts, r, center=None, lam=None):
    """Vectorized membership in C_r^- for an (m, N+1) array of points."""
    lam = s.lam if lam is None else lam
    c = np.zeros(s.N + 1) if center is None else center.as_array()
    u = np.atleast_2d(pts) - c
    ok = np.linalg.norm(u[:, :s.m0], axis=1) <= r
    for i in range(s.m0, s.N):
        ok &= np.abs(u[:, i]) <= (lam * r) ** s.alpha[i]
    ok &= (u[:, -1] >= -r ** 2) & (u[:, -1] <= 0)
    return ok


@dataclass(frozen=True)
class BallSample:
    """Tensor-grid sample of an anisotropic region: nodes, indicator, weights."""

    points: np.ndarray   # (n_nodes, N+1)
    mask: np.ndarray     # bool, nodes inside the region
    weights: np.ndarray  # trapezoidal weights per node
    shape: tuple
    bounds: tuple

    @property
    def measure(self):
        return float(np.sum(self.weights[self.mask]))


def _tensor_sample(bounds, resolution):
    ndim = len(bounds)
    if np.isscalar(resolution):
        resolution = (int(resolution),) * ndim
    axes = [np.linspace(lo, hi, n) for (lo, hi), n in zip(bounds, resolution)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    ws = []
    for ax in axes:
        w = np.full(ax.size, (ax[-1] - ax[0]) / (ax.size - 1) if ax.size > 1 else 1.0)
        if ax.size > 1:
            w[0] *= 0.5
            w[-1] *= 0.5
        ws.append(w)
    w = ws[0]
    for wi in ws[1:]:
        w = np.multiply.outer(w, wi)
    return pts, w.ravel(), tuple(len(a) for a in axes)


def ball_sampler(s, ball, resolution):
    """Indicator samples + trapezoidal weights on a grid covering the ball.

    The grid spans the bounding box of B_r(z0); the weighted indicator sum
    converges to the Lebesgue measure of the ball as resolution grows.
    """
    z0, r = ball.center, ball.radius
    # bounding box: z = z0 o u with ||u|| <= r; x = u_x + E(u_t) x0
    taus = np.linspace(-r ** 2, 0.0 if ball.past_only else r ** 2, 9)
    flows = np.stack([exp_drift(s, tau) @ z0.x for tau in taus])
    lo_x = flows.min(axis=0) - r ** s.alpha
    hi_x = flows.max(axis=0) + r ** s.alpha
    bounds = [(lo_x[i], hi_x[i]) for i in range(s.N)]
    t0 = z0.t
    bounds.append((t0 - r ** 2, t0) if ball.past_only else (t0 - r ** 2, t0 + r ** 2))
    pts, w, shape = _tensor_sample(bounds, resolution)

    mask = ball_mask(s, z0, r, pts, past_only=ball.past_only)
    if not mask.any():
        raise EmptyRegion("no grid node inside the ball; refine the resolution")
    return BallSample(points=pts, mask=mask, weights=w, shape=shape,
                      bounds=tuple(bounds))


def cube_sampler(s, r, resolution, center=None, past_only=False):
    """Indicator sample of the cube C_r; measure is exactly 2^(N+1) r^(Q+2)
    for the two-sided cube (product of the interval lengths)."""
    bounds = cube_bounds(s, r, center, past_only)
    pts, w, shape = _tensor_sample(bounds, resolution)
    mask = np.ones(pts.shape[0], bool)
    if not mask.any():
        raise EmptyRegion("empty cube sample")
    return BallSample(points=pts, mask=mask, weights=w, shape=shape,
                      bounds=tuple(bounds))


def estimate_lambda_constant(s, n_sphere=2000, seed=0):
    """Empirical cube/ball sandwich constant: C_{r/L} <= B_r <= C_{L r}.

    L = max( sup_{cube boundary} ||z||, sup_{||z||=1} rho(z) ) where rho(z)
    is the smallest cube radius containing z.  Estimated over sampled points.
    """
    rng = np.random.default_rng(seed)
    # C_1 is the unit cube (1^alpha_i = 1); pin one coordinate to the boundary
    pts = rng.uniform(-1.0, 1.0, size=(n_sphere, s.N + 1))
    pin = rng.integers(0, s.N + 1, size=n_sphere)
    sign = rng.choice([-1.0, 1.0], size=n_sphere)
    pts[np.arange(n_sphere), pin] = sign
    sup_norm = 0.0
    for p in pts:
        z = GroupPoint(p[:s.N], p[-1])
        sup_norm = max(sup_norm, hom_norm(s, z))
    # points on the unit gauge sphere: dilate random points to norm 1
    raw = rng.standard_normal((n_sphere, s.N + 1))
    sup_rho = 0.0
    for p in raw:
        z = GroupPoint(p[:s.N], p[-1])
        nz = hom_norm(s, z)
        if nz == 0:
            continue
        zu = dilate(s, 1.0 / nz, z)
        rho = max(float(np.max(np.abs(zu.x) ** (1.0 / s.alpha))), abs(zu.t) ** 0.5)
        sup_rho = max(sup_rho, rho)
    return max(sup_norm, sup_rho)
