"""Geometric input-domain mappings and two negative-control mappings.

Each mapping turns physical coordinates x into network coordinates xi and
supplies exact Jacobians and Hessians so PDE residuals can be pushed back
to physical space.  Variants:

    identity     xi = x
    torus        per-axis wrap of the normalized coordinate onto the circle,
                 xi = atan2(sin 2pi x_hat, cos 2pi x_hat) / 2pi in (-1/2, 1/2]
    radial       log-radial compression xi = (x/r) log(1+alpha r)/log(1+alpha)
    local_stretch  Gaussian-gated tanh stretch around a center c:
                 xi = c + z + w(z) (tanh(beta z) - z),  w = exp(-gamma |z|^2)
    pwl          learnable monotone piecewise-linear map on [0,1] with K=16
                 uniform knots; increments come from a softmax, so they stay
                 positive and sum to one
    saturating   sigmoid(k (x_hat - c)) with k=50, c=0.5; its derivative
                 collapses away from c, a deliberately bad control

torus, pwl and saturating act on coordinates normalized to [0,1] per axis;
radial and local_stretch act on raw coordinates.  Parameters enter through
the autodiff ops, so mapping Jacobians/Hessians stay differentiable with
respect to alpha/beta/gamma/center/increments when those are trained.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import EvaluationError
from .jets import JetBatch, identity_seed

PWL_SEGMENTS = 16
SATURATING_STEEPNESS = 50.0
SATURATING_CENTER = 0.5
RADIAL_ORIGIN_EPS = 1e-8

_e = ad.expand_dims


def _as_points(x):
    pts = np.asarray(x, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :]
    if not np.isfinite(pts).all():
        raise EvaluationError("non-finite input point passed to a mapping")
    return pts


class Mapping:
    """Base: a named coordinate map with a flat parameter block."""

    name = "identity"
    max_order = 3

    def __init__(self, lo, hi, trainable=False):
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        self.dim = self.lo.shape[0]
        self.trainable = trainable
        self.param_init = np.zeros(0)
        self.param_names = []

    @property
    def n_params(self):
        return self.param_init.size

    def seed(self, points, params, order):
        """JetBatch of xi with respect to x at the given points."""
        raise NotImplementedError

    def degeneracy_penalty(self, params):
        """Sum of squared deviations from initialization (trainable maps only)."""
        if not self.trainable or self.n_params == 0:
            return ad.constant(0.0)
        return ad.sum_all(ad.square(ad.sub(params, self.param_init)))

    def _normalized(self, pts):
        span = self.hi - self.lo
        return (pts - self.lo) / span, span


class IdentityMapping(Mapping):
    name = "identity"

    def seed(self, points, params, order):
        return identity_seed(_as_points(points), order)


class TorusMapping(Mapping):
    """Periodic wrap with period = box width per axis.

    The wrap is computed through atan2 on the unit circle, which puts the
    seam at the half-period with range (-1/2, 1/2]; a floating-point modulo
    would place the branch differently at the seam.  The Jacobian is the
    constant 1/width per axis and all higher derivatives vanish.
    """

    name = "torus"

    def seed(self, points, params, order):
        pts = _as_points(points)
        xhat, span = self._normalized(pts)
        ang = 2.0 * np.pi * xhat
        val = np.arctan2(np.sin(ang), np.cos(ang)) / (2.0 * np.pi)
        n, d = pts.shape
        grad = hess = third = None
        if order >= 1:
            grad = np.broadcast_to(np.diag(1.0 / span), (n, d, d)).copy()
        if order >= 2:
            hess = np.zeros((n, d, d, d))
        if order >= 3:
            third = np.zeros((n, d, d, d, d))
        return JetBatch(val, grad, hess, third, dim=d)


class RadialMapping(Mapping):
    """Log-radial compression, r = |x| in 1d and ||x - center|| in 2d.

    Near the origin the x/r factor is a removable singularity; below
    RADIAL_ORIGIN_EPS the exact series limit xi = alpha x / log(1+alpha)
    is used (linear, so the Hessian limit is zero).
    """

    name = "radial"
    max_order = 3  # closed-form third derivative in 1d only

    def __init__(self, lo, hi, alpha=20.0, trainable=False):
        super().__init__(lo, hi, trainable)
        self.param_init = np.asarray([float(alpha)])
        self.param_names = ["alpha"]

    def seed(self, points, params, order):
        pts = _as_points(points)
        if self.dim == 1:
            return self._seed_1d(pts, params, order)
        if order >= 3:
            raise NotImplementedError("third-order jets for the radial mapping in 2d")
        return self._seed_nd(pts, params, order)

    def _seed_1d(self, pts, params, order):
        alpha = ad.index_axis(params, 0, 0)
        r = np.abs(pts)                      # (n,1)
        sgn = np.sign(pts)
        near = r < RADIAL_ORIGIN_EPS
        L = ad.log(ad.add(1.0, alpha))
        A = ad.add(1.0, ad.mul(alpha, r))    # 1 + alpha r
        lin = ad.div(ad.mul(alpha, pts), L)  # series branch, exact to O(r^2)
        val = ad.where_mask(near, lin, ad.mul(sgn, ad.div(ad.log(A), L)))
        grad = hess = third = None
        if order >= 1:
            g = ad.div(alpha, ad.mul(A, L))
            g0 = ad.div(alpha, L)
            grad = _e(ad.where_mask(near, g0, g), 1)
        if order >= 2:
            h = ad.neg(ad.div(ad.mul(ad.square(alpha), sgn), ad.mul(ad.square(A), L)))
            hess = _e(_e(ad.where_mask(near, np.zeros_like(r), h), 1), 1)
        if order >= 3:
            t = ad.div(ad.mul(2.0, ad.pow_const(alpha, 3)), ad.mul(ad.pow_const(A, 3), L))
            third = _e(_e(_e(ad.where_mask(near, np.zeros_like(r), t), 1), 1), 1)
        return JetBatch(val, grad, hess, third, dim=1)

    def _seed_nd(self, pts, params, order):
        alpha = ad.index_axis(params, 0, 0)
        n, d = pts.shape
        center = 0.5 * (self.lo + self.hi)
        z = pts - center                       # (n,d) constants
        r = np.linalg.norm(z, axis=1)          # (n,)
        near = r < RADIAL_ORIGIN_EPS
        rs = np.maximum(r, RADIAL_ORIGIN_EPS)  # keeps the untaken branch finite
        nvec = z / rs[:, None]
        eye = np.eye(d)

        L = ad.log(ad.add(1.0, alpha))
        A = ad.add(1.0, ad.mul(alpha, rs))
        g = ad.div(ad.log(A), L)               # profile g(r)
        b = ad.div(alpha, ad.mul(A, L))        # g'(r)
        a = ad.div(g, rs)                      # g(r)/r
        a0 = ad.div(alpha, L)                  # r -> 0 limit of both a and b

        val = ad.where_mask(
            near[:, None],
            ad.add(center, ad.mul(a0, z)),
            ad.add(center, ad.mul(_e(a, 1), z)),
        )
        grad = hess = None
        if order >= 1:
            # J[i,k] = a d_ik + (b - a) n_i n_k
            nn = nvec[:, :, None] * nvec[:, None, :]
            J = ad.add(ad.mul(_e(_e(a, 1), 1), eye),
                       ad.mul(_e(_e(ad.sub(b, a), 1), 1), nn))
            J0 = ad.mul(a0, np.broadcast_to(eye, (n, d, d)))
            grad = ad.where_mask(near[:, None, None], J0, J)
        if order >= 2:
            # H[i,j,k] = s (n_i d_jk + n_j d_ik + n_k d_ij) + (g'' - 3 s) n_i n_j n_k
            s = ad.div(ad.sub(b, a), rs)
            gpp = ad.neg(ad.div(ad.square(alpha), ad.mul(ad.square(A), L)))
            sym = (
                nvec[:, :, None, None] * eye[None, None, :, :]
                + nvec[:, None, :, None] * eye[:, None, :][None, :, :, :]
                + nvec[:, None, None, :] * eye[None, :, :, None]
            )
            nnn = nvec[:, :, None, None] * nvec[:, None, :, None] * nvec[:, None, None, :]
            se = _e(_e(_e(s, 1), 1), 1)
            H = ad.add(ad.mul(se, sym),
                       ad.mul(_e(_e(_e(ad.sub(gpp, ad.mul(3.0, s)), 1), 1), 1), nnn))
            hess = ad.where_mask(near[:, None, None, None], np.zeros((n, d, d, d)), H)
        return JetBatch(val, grad, hess, None, dim=d)


class LocalStretchMapping(Mapping):
    """Additive Gaussian-gated tanh window: xi = x + w(z) tanh(beta z).

    z = x - c; w = exp(-gamma |z|^2).  The Jacobian at the center is
    (1 + beta) I and the map degenerates to the identity once the gate
    dies off.  The gate decay is a separate parameter because the map is
    a coordinate change and must stay invertible: the off-center slope is
    bounded below by 1 - sqrt(2 gamma / e), so any gamma <= e/2 keeps it
    monotone for every stretch strength, whereas tying the decay to beta
    folds the domain onto itself for all interesting beta.

    Parameters: stretch strength beta, gate decay gamma (default 1), and
    the window center c (one entry per axis; default 0 on a line per the
    1-d closed form, the domain center in 2-d).
    """

    name = "local_stretch"
    max_order = 2
    GATE_DECAY = 1.0

    def __init__(self, lo, hi, beta=10.0, center=None, trainable=False):
        super().__init__(lo, hi, trainable)
        if center is None:
            center = np.zeros(self.dim) if self.dim == 1 else 0.5 * (self.lo + self.hi)
        self.param_init = np.concatenate([[float(beta), self.GATE_DECAY],
                                          np.asarray(center, dtype=np.float64)])
        self.param_names = ["beta", "gamma"] + [f"center_{i}" for i in range(self.dim)]

    def seed(self, points, params, order):
        if order >= 3:
            raise NotImplementedError("third-order jets for the local-stretch mapping")
        pts = _as_points(points)
        n, d = pts.shape
        beta = ad.index_axis(params, 0, 0)
        gamma = ad.index_axis(params, 0, 1)
        center = ad.reshape(ad.slice_vec(params, 2, 2 + d), (1, d))
        eye = np.eye(d)

        z = ad.sub(pts, center)                              # (n,d)
        r2 = ad.sum_axis(ad.square(z), 1)                    # (n,)
        w = ad.exp(ad.neg(ad.mul(gamma, r2)))                # (n,)
        T = ad.tanh(ad.mul(beta, z))                         # (n,d)
        val = ad.add(pts, ad.mul(_e(w, 1), T))

        grad = hess = None
        if order >= 1:
            Tp = ad.mul(beta, ad.sub(1.0, ad.square(T)))     # (n,d)
            wi = ad.mul(ad.mul(-2.0, ad.mul(gamma, z)), _e(w, 1))   # dw/dx_i, (n,d)
            diag_tp = ad.mul(_e(ad.mul(_e(w, 1), Tp), 1), eye)      # w T'_k d_ik
            grad = ad.add(ad.add(np.broadcast_to(eye, (n, d, d)).copy(), diag_tp),
                          ad.einsum2("bi,bk->bik", wi, T))
        if order >= 2:
            Tpp = ad.mul(-2.0, ad.mul(ad.square(beta), ad.mul(T, ad.sub(1.0, ad.square(T)))))
            wij = ad.mul(
                ad.add(ad.mul(ad.mul(-2.0, gamma), eye),
                       ad.mul(ad.mul(4.0, ad.square(gamma)), ad.einsum2("bi,bj->bij", z, z))),
                _e(_e(w, 1), 1),
            )
            qd = ad.mul(_e(Tp, 1), eye)                      # T'_k d_jk
            e3 = np.zeros((d, d, d))
            for k in range(d):
                e3[k, k, k] = 1.0
            hess = ad.add(
                ad.add(ad.einsum2("bij,bk->bijk", wij, T),
                       ad.einsum2("bi,bjk->bijk", wi, qd)),
                ad.add(ad.einsum2("bj,bik->bijk", wi, qd),
                       ad.einsum2("bk,ijk->bijk", ad.mul(_e(w, 1), Tpp), e3)),
            )
        return JetBatch(val, grad, hess, None, dim=d)


class PwlMapping(Mapping):
    """Monotone piecewise-linear reparameterization of [0,1] per axis.

    Each axis owns PWL_SEGMENTS free reals; a softmax turns them into the
    positive segment increments s_i with sum 1, fixing phi(0)=0 and
    phi(1)=1.  Slope on segment i is K s_i (with respect to the normalized
    coordinate).  Piecewise-linearity makes the Hessian zero everywhere;
    it is defined as zero at the knots as well.
    """

    name = "pwl"

    def __init__(self, lo, hi, trainable=True):
        super().__init__(lo, hi, trainable)
        K = PWL_SEGMENTS
        self.param_init = np.zeros(self.dim * K)   # uniform increments = identity map
        self.param_names = [f"logit_{ax}_{i}" for ax in range(self.dim) for i in range(K)]

    def seed(self, points, params, order):
        pts = _as_points(points)
        n, d = pts.shape
        K = PWL_SEGMENTS
        xhat, span = self._normalized(pts)
        idx = np.minimum(np.floor(K * xhat).astype(int), K - 1)     # (n,d)
        t = K * xhat - idx
        tri = np.tril(np.ones((K, K)), -1)                          # strict prefix sums

        vals, slopes = [], []
        for ax in range(d):
            logits = ad.slice_vec(params, ax * K, (ax + 1) * K)
            shift = np.max(ad.value_of(logits))                     # constant; softmax-invariant
            ex = ad.exp(ad.sub(logits, shift))
            s = ad.div(ex, ad.sum_all(ex))
            prefix = ad.dot_last(s, tri)                            # S_i = sum_{j<i} s_j
            si = ad.take_vec(s, idx[:, ax])
            vals.append(ad.reshape(ad.add(ad.take_vec(prefix, idx[:, ax]),
                                          ad.mul(si, t[:, ax])), (n, 1)))
            slopes.append(ad.reshape(ad.mul(si, K / span[ax]), (n, 1)))
        val = ad.concat_last(vals)
        grad = hess = third = None
        if order >= 1:
            eye = np.eye(d)
            grad = ad.mul(_e(ad.concat_last(slopes), 1), eye)
        if order >= 2:
            hess = np.zeros((n, d, d, d))
        if order >= 3:
            third = np.zeros((n, d, d, d, d))
        return JetBatch(val, grad, hess, third, dim=d)

    def increments(self, params):
        """Per-axis increment vectors implied by the current parameters."""
        p = ad.value_of(params)
        K = PWL_SEGMENTS
        out = []
        for ax in range(self.dim):
            logits = p[ax * K:(ax + 1) * K]
            ex = np.exp(logits - logits.max())
            out.append(ex / ex.sum())
        return out


class SaturatingMapping(Mapping):
    """Sigmoid squash of the normalized coordinate; a negative control.

    The derivative peaks at k/4 at the center and collapses exponentially
    away from it, starving the network of gradient signal over most of the
    domain.  k and the center are fixed constants, not parameters.
    """

    name = "saturating"

    def seed(self, points, params, order):
        pts = _as_points(points)
        n, d = pts.shape
        xhat, span = self._normalized(pts)
        k = SATURATING_STEEPNESS
        sig = 1.0 / (1.0 + np.exp(-k * (xhat - SATURATING_CENTER)))
        sp = sig * (1.0 - sig)
        eye = np.eye(d)
        grad = hess = third = None
        if order >= 1:
            grad = (k * sp / span)[:, None, :] * eye
        if order >= 2:
            d2 = k * k * sp * (1.0 - 2.0 * sig) / span**2
            hess = np.zeros((n, d, d, d))
            for ax in range(d):
                hess[:, ax, ax, ax] = d2[:, ax]
        if order >= 3:
            d3 = k**3 * sp * ((1.0 - 2.0 * sig) ** 2 - 2.0 * sp) / span**3
            third = np.zeros((n, d, d, d, d))
            for ax in range(d):
                third[:, ax, ax, ax, ax] = d3[:, ax]
        return JetBatch(sig, grad, hess, third, dim=d)


VARIANTS = {
    "identity": IdentityMapping,
    "torus": TorusMapping,
    "radial": RadialMapping,
    "local_stretch": LocalStretchMapping,
    "pwl": PwlMapping,
    "saturating": SaturatingMapping,
}


def make_mapping(variant, lo, hi, alpha=20.0, beta=10.0, trainable=False):
    if variant == "radial":
        return RadialMapping(lo, hi, alpha=alpha, trainable=trainable)
    if variant == "local_stretch":
        return LocalStretchMapping(lo, hi, beta=beta, trainable=trainable)
    if variant == "pwl":
        return PwlMapping(lo, hi, trainable=trainable)
    if variant in ("identity", "torus", "saturating"):
        return VARIANTS[variant](lo, hi, trainable=False)
    raise ValueError(f"unknown mapping variant: {variant}")


def map_point(mapping, x, params=None):
    """xi = phi(x); accepts a single point or an (n,d) batch."""
    single = np.asarray(x, dtype=np.float64).ndim == 1
    pts = _as_points(x)
    params = mapping.param_init if params is None else np.asarray(params, dtype=np.float64)
    out = ad.value_of(mapping.seed(pts, ad.constant(params), order=0).value)
    return out[0] if single else out


def mapping_jacobian(mapping, x, params=None):
    """J[i, j] = d phi_j / d x_i at one point (or per point for a batch)."""
    single = np.asarray(x, dtype=np.float64).ndim == 1
    pts = _as_points(x)
    params = mapping.param_init if params is None else np.asarray(params, dtype=np.float64)
    out = ad.value_of(mapping.seed(pts, ad.constant(params), order=1).grad)
    return out[0] if single else out


def mapping_hessian(mapping, x, params=None):
    """H[i, j, k] = d^2 phi_k / d x_i d x_j at one point (or per point)."""
    single = np.asarray(x, dtype=np.float64).ndim == 1
    pts = _as_points(x)
    params = mapping.param_init if params is None else np.asarray(params, dtype=np.float64)
    out = ad.value_of(mapping.seed(pts, ad.constant(params), order=2).hess)
    return out[0] if single else out
