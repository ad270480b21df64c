"""Second- and third-order jets and their propagation rules.

A jet bundles a field value with its derivatives with respect to the
*physical* input coordinates.  Batched jets are carried as arrays with the
unit (channel) axis last:

    value  (n, m)
    grad   (n, d, m)          grad[p, i, k]       = d u_k / d x_i
    hess   (n, d, d, m)       hess[p, i, j, k]    = d^2 u_k / d x_i d x_j
    third  (n, d, d, d, m)    third[p, i, j, l, k] (order-3 runs only)

The arrays are either plain ndarrays or autodiff Vars; the propagation
rules below are written against the `autodiff` ops so the same code serves
untraced evaluation and parameter-gradient recording.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import EvaluationError


@dataclass
class Jet:
    """Value, gradient and Hessian of one scalar output at one point."""

    value: float
    grad: np.ndarray
    hess: np.ndarray

    def check_symmetry(self, tol=1e-12):
        return float(np.max(np.abs(self.hess - self.hess.T))) <= tol


class JetBatch:
    """Batched jets up to a chosen derivative order (0..3)."""

    __slots__ = ("value", "grad", "hess", "third", "dim")

    def __init__(self, value, grad=None, hess=None, third=None, dim=None):
        self.value = value
        self.grad = grad
        self.hess = hess
        self.third = third
        if dim is None:
            dim = ad.value_of(grad).shape[1] if grad is not None else 0
        self.dim = dim

    @property
    def order(self):
        if self.third is not None:
            return 3
        if self.hess is not None:
            return 2
        if self.grad is not None:
            return 1
        return 0

    @property
    def width(self):
        return ad.value_of(self.value).shape[-1]

    def arrays(self):
        """Strip to plain ndarrays (forward values only)."""
        take = ad.value_of
        return JetBatch(
            take(self.value),
            None if self.grad is None else take(self.grad),
            None if self.hess is None else take(self.hess),
            None if self.third is None else take(self.third),
            dim=self.dim,
        )

    def jet(self, point_index, output_index):
        """Extract a single-point Jet (order >= 2 required)."""
        b = self.arrays()
        return Jet(
            float(b.value[point_index, output_index]),
            b.grad[point_index, :, output_index].copy(),
            b.hess[point_index, :, :, output_index].copy(),
        )


def _check_finite(x, where):
    v = ad.value_of(x)
    if not np.isfinite(v.sum()):
        raise EvaluationError(f"non-finite values produced by {where}")


def check_finite_jets(jb: JetBatch, where: str):
    for name in ("value", "grad", "hess", "third"):
        part = getattr(jb, name)
        if part is not None:
            _check_finite(part, where)


def _ed(x, k):
    """Insert k broadcast axes after the batch axis."""
    for _ in range(k):
        x = ad.expand_dims(x, 1)
    return x


def affine_jet(jb: JetBatch, w, b) -> JetBatch:
    """Affine layer y = W u + b; derivatives are linear in the jet."""
    out = JetBatch(
        ad.add(ad.dot_last(jb.value, w), b),
        None if jb.grad is None else ad.dot_last(jb.grad, w),
        None if jb.hess is None else ad.dot_last(jb.hess, w),
        None if jb.third is None else ad.dot_last(jb.third, w),
        dim=jb.dim,
    )
    return out


def elementwise_jet(jb: JetBatch, f0, f1, f2=None, f3=None) -> JetBatch:
    """Compose jets with a scalar function given its derivative arrays.

    f0..f3 are the function and its first three derivatives evaluated at
    jb.value, each shaped like jb.value.  The usual Faa di Bruno terms up
    to order three:

        (f o u)_i   = f' u_i
        (f o u)_ij  = f'' u_i u_j + f' u_ij
        (f o u)_ijl = f''' u_i u_j u_l
                      + f'' (u_i u_jl + u_j u_il + u_l u_ij) + f' u_ijl
    """
    g, H, T = jb.grad, jb.hess, jb.third
    out_grad = None if g is None else ad.mul(_ed(f1, 1), g)
    out_hess = None
    out_third = None
    if H is not None:
        outer = ad.einsum2("bim,bjm->bijm", g, g)
        out_hess = ad.add(ad.mul(_ed(f2, 2), outer), ad.mul(_ed(f1, 2), H))
        if T is not None:
            ggg = ad.einsum2("bim,bjkm->bijkm", g, outer)
            sym = ad.add(
                ad.einsum2("bim,bjkm->bijkm", g, H),
                ad.add(
                    ad.einsum2("bjm,bikm->bijkm", g, H),
                    ad.einsum2("bkm,bijm->bijkm", g, H),
                ),
            )
            out_third = ad.add(
                ad.add(ad.mul(_ed(f3, 3), ggg), ad.mul(_ed(f2, 3), sym)),
                ad.mul(_ed(f1, 3), T),
            )
    return JetBatch(f0, out_grad, out_hess, out_third, dim=jb.dim)


def tanh_jet(jb: JetBatch) -> JetBatch:
    t = ad.tanh(jb.value)
    t1 = ad.sub(1.0, ad.square(t))
    f2 = f3 = None
    if jb.order >= 2:
        f2 = ad.mul(-2.0, ad.mul(t, t1))
        if jb.order >= 3:
            # d/dv [-2 t (1 - t^2)] = -2 (1 - t^2)(1 - 3 t^2)
            f3 = ad.mul(-2.0, ad.mul(t1, ad.sub(1.0, ad.mul(3.0, ad.square(t)))))
    return elementwise_jet(jb, t, t1, f2, f3)


def sin_jet(jb: JetBatch) -> JetBatch:
    s, c = ad.sin(jb.value), ad.cos(jb.value)
    return elementwise_jet(jb, s, c, ad.neg(s) if jb.order >= 2 else None,
                           ad.neg(c) if jb.order >= 3 else None)


def cos_jet(jb: JetBatch) -> JetBatch:
    s, c = ad.sin(jb.value), ad.cos(jb.value)
    return elementwise_jet(jb, c, ad.neg(s), ad.neg(c) if jb.order >= 2 else None,
                           s if jb.order >= 3 else None)


def scale_jet(jb: JetBatch, factor) -> JetBatch:
    """Multiply a jet by per-unit constants (e.g. Fourier pulsations)."""
    return JetBatch(
        ad.mul(jb.value, factor),
        None if jb.grad is None else ad.mul(jb.grad, factor),
        None if jb.hess is None else ad.mul(jb.hess, factor),
        None if jb.third is None else ad.mul(jb.third, factor),
        dim=jb.dim,
    )


def concat_jets(parts) -> JetBatch:
    order = parts[0].order
    cat = ad.concat_last
    return JetBatch(
        cat([p.value for p in parts]),
        cat([p.grad for p in parts]) if order >= 1 else None,
        cat([p.hess for p in parts]) if order >= 2 else None,
        cat([p.third for p in parts]) if order >= 3 else None,
        dim=parts[0].dim,
    )


def stack_size(d, order):
    return 1 + (d if order >= 1 else 0) + (d * d if order >= 2 else 0) \
        + (d ** 3 if order >= 3 else 0)


def stack_jets(jb: JetBatch):
    """Pack a jet batch into one (K, n, m) array, component-major.

    Blocks: value, then the d gradient components, then the d^2 Hessian
    entries (row-major), then the d^3 third-order entries.  One array per
    layer keeps the affine transport a single GEMM.
    """
    n = ad.value_of(jb.value).shape[0]
    m = jb.width
    d = jb.dim
    parts = [ad.reshape(jb.value, (1, n, m))]
    if jb.grad is not None:
        parts.append(ad.transpose_axes(jb.grad, (1, 0, 2)))
    if jb.hess is not None:
        parts.append(ad.transpose_axes(ad.reshape(jb.hess, (n, d * d, m)), (1, 0, 2)))
    if jb.third is not None:
        parts.append(ad.transpose_axes(ad.reshape(jb.third, (n, d ** 3, m)), (1, 0, 2)))
    return ad.concat_axis0(parts)


def unstack_jets(stacked, d, order) -> JetBatch:
    _, n, m = ad.value_of(stacked).shape
    value = ad.reshape(ad.slice_axis0(stacked, 0, 1), (n, m))
    grad = hess = third = None
    off = 1
    if order >= 1:
        grad = ad.transpose_axes(ad.slice_axis0(stacked, off, off + d), (1, 0, 2))
        off += d
    if order >= 2:
        hess = ad.reshape(
            ad.transpose_axes(ad.slice_axis0(stacked, off, off + d * d), (1, 0, 2)),
            (n, d, d, m))
        off += d * d
    if order >= 3:
        third = ad.reshape(
            ad.transpose_axes(ad.slice_axis0(stacked, off, off + d ** 3), (1, 0, 2)),
            (n, d, d, d, m))
    return JetBatch(value, grad, hess, third, dim=d)


def tanh_stack(x, d, order):
    """Fused tanh jet propagation on a stacked (K, n, m) batch.

    Forward applies the Faa di Bruno rules once per block; the
    vector-Jacobian product is hand-derived, which keeps the whole layer
    at a handful of large array operations instead of a trail of
    per-component temporaries.  (Explicit np.* calls throughout: operator
    dispatch on large temporaries takes a slow temp-elision path.)
    """
    xv = ad.value_of(x)
    K, n, m = xv.shape
    dd = d * d
    v = xv[0]
    t = np.tanh(v)
    tsq = np.multiply(t, t)
    t1 = np.subtract(1.0, tsq)
    t2 = t3 = None
    G = H = T = outer = sym = ggg = None
    out = np.empty_like(xv)
    out[0] = t
    if order >= 1:
        G = xv[1:1 + d]
        np.multiply(t1, G, out=out[1:1 + d])
        t2 = np.multiply(t, t1)
        np.multiply(t2, -2.0, out=t2)
    if order >= 2:
        H = xv[1 + d:1 + d + dd].reshape(d, d, n, m)
        outer = np.einsum("anm,bnm->abnm", G, G)
        oh = out[1 + d:1 + d + dd].reshape(d, d, n, m)
        np.multiply(t2, outer, out=oh)
        h_part = np.multiply(t1, H)
        np.add(oh, h_part, out=oh)
        t3 = np.multiply(tsq, -3.0)
        np.add(t3, 1.0, out=t3)          # 1 - 3 t^2
        np.multiply(t3, t1, out=t3)
        np.multiply(t3, -2.0, out=t3)    # -2 t1 (1 - 3 t^2)
    if order >= 3:
        T = xv[1 + d + dd:].reshape(d, d, d, n, m)
        ggg = np.einsum("anm,bcnm->abcnm", G, outer)
        sym = np.einsum("anm,bcnm->abcnm", G, H)
        np.add(sym, np.einsum("bnm,acnm->abcnm", G, H), out=sym)
        np.add(sym, np.einsum("cnm,abnm->abcnm", G, H), out=sym)
        ot = out[1 + d + dd:].reshape(d, d, d, n, m)
        np.multiply(t3, ggg, out=ot)
        np.add(ot, np.multiply(t2, sym), out=ot)
        np.add(ot, np.multiply(t1, T), out=ot)

    def vjp(C):
        xb = np.empty_like(xv)
        acc_v = np.multiply(t1, C[0])
        if order >= 1:
            CG = C[1:1 + d]
            np.multiply(t1, CG, out=xb[1:1 + d])
            cg_g = np.einsum("anm,anm->nm", CG, G)
            np.multiply(cg_g, t2, out=cg_g)
            np.add(acc_v, cg_g, out=acc_v)
        if order >= 2:
            CH = C[1 + d:1 + d + dd].reshape(d, d, n, m)
            bh = np.multiply(t1, CH)
            mix = np.einsum("lbnm,bnm->lnm", CH, G)
            np.add(mix, np.einsum("blnm,bnm->lnm", CH, G), out=mix)
            np.multiply(mix, t2, out=mix)
            np.add(xb[1:1 + d], mix, out=xb[1:1 + d])
            dv = np.multiply(t3, outer)
            np.add(dv, np.multiply(t2, H), out=dv)
            np.add(acc_v, np.einsum("abnm,abnm->nm", CH, dv), out=acc_v)
        if order >= 3:
            CT = C[1 + d + dd:].reshape(d, d, d, n, m)
            np.multiply(t1, CT, out=xb[1 + d + dd:].reshape(d, d, d, n, m))
            hmix = np.einsum("iabnm,inm->abnm", CT, G)
            np.add(hmix, np.einsum("ajbnm,jnm->abnm", CT, G), out=hmix)
            np.add(hmix, np.einsum("abknm,knm->abnm", CT, G), out=hmix)
            np.multiply(hmix, t2, out=hmix)
            np.add(bh, hmix, out=bh)
            gmix = np.einsum("ljknm,jknm->lnm", CT, outer)
            np.add(gmix, np.einsum("ilknm,iknm->lnm", CT, outer), out=gmix)
            np.add(gmix, np.einsum("ijlnm,ijnm->lnm", CT, outer), out=gmix)
            np.multiply(gmix, t3, out=gmix)
            np.add(xb[1:1 + d], gmix, out=xb[1:1 + d])
            gmix2 = np.einsum("ljknm,jknm->lnm", CT, H)
            np.add(gmix2, np.einsum("ilknm,iknm->lnm", CT, H), out=gmix2)
            np.add(gmix2, np.einsum("ijlnm,ijnm->lnm", CT, H), out=gmix2)
            np.multiply(gmix2, t2, out=gmix2)
            np.add(xb[1:1 + d], gmix2, out=xb[1:1 + d])
            # t4 = d t3 / dv = 8 t t1 (2 - 3 t^2)
            t4 = np.multiply(tsq, -3.0)
            np.add(t4, 2.0, out=t4)
            np.multiply(t4, t, out=t4)
            np.multiply(t4, t1, out=t4)
            np.multiply(t4, 8.0, out=t4)
            dvt = np.multiply(t4, ggg)
            np.add(dvt, np.multiply(t3, sym), out=dvt)
            np.add(dvt, np.multiply(t2, T), out=dvt)
            np.add(acc_v, np.einsum("abcnm,abcnm->nm", CT, dvt), out=acc_v)
        if order >= 2:
            xb[1 + d:1 + d + dd] = bh.reshape(dd, n, m)
        xb[0] = acc_v
        return (xb,)

    return ad.custom(out, [x], vjp)


def identity_seed(points, order) -> JetBatch:
    """Jets of the coordinate functions themselves (untraced constants)."""
    x = np.asarray(points, dtype=np.float64)
    n, d = x.shape
    grad = hess = third = None
    if order >= 1:
        grad = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    if order >= 2:
        hess = np.zeros((n, d, d, d))
    if order >= 3:
        third = np.zeros((n, d, d, d, d))
    return JetBatch(x.copy(), grad, hess, third, dim=d)


def finite_difference_oracle(field, point, step=1e-5):
    """Central-difference value/gradient/Hessian of a scalar field.

    `field` maps a 1-d coordinate array to a float.  O(step^2) accurate;
    the point must sit at least `step` inside the field's domain.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(point, dtype=np.float64)
    d = x.shape[0]
    f0 = float(field(x))
    grad = np.zeros(d)
    hess = np.zeros((d, d))
    fp = np.zeros(d)
    fm = np.zeros(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        fp[i] = field(x + e)
        fm[i] = field(x - e)
        grad[i] = (fp[i] - fm[i]) / (2.0 * step)
        hess[i, i] = (fp[i] - 2.0 * f0 + fm[i]) / step**2
    for i in range(d):
        for j in range(i + 1, d):
            ei = np.zeros(d)
            ej = np.zeros(d)
            ei[i] = step
            ej[j] = step
            fpp = field(x + ei + ej)
            fpm = field(x + ei - ej)
            fmp = field(x - ei + ej)
            fmm = field(x - ei - ej)
            hess[i, j] = hess[j, i] = (fpp - fpm - fmp + fmm) / (4.0 * step**2)
    if not (np.isfinite(f0) and np.isfinite(grad).all() and np.isfinite(hess).all()):
        raise EvaluationError("finite differences hit non-finite field values")
    return Jet(f0, grad, hess)
