"""Dense tanh backbone with an optional fixed Fourier-feature frontend.

All benchmark runs share the same trunk: four hidden layers of width 80
with tanh activations and a linear output head.  The Fourier frontend
concatenates the raw coordinates with sine and cosine components of
2*pi*f*x for a fixed frequency list; frequencies are not trainable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import EvaluationError
from .jets import (JetBatch, affine_jet, concat_jets, cos_jet, sin_jet,
                   stack_jets, tanh_stack, unstack_jets)

FOURIER_FREQUENCIES = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
HIDDEN_WIDTH = 80
HIDDEN_LAYERS = 4


@dataclass(frozen=True)
class FourierFrontend:
    frequencies: tuple

    def out_width(self, d_in):
        return d_in + 2 * len(self.frequencies) * d_in

    def lift_matrix(self, d_in):
        """(d_in*F, d_in) matrix whose rows scale each axis by 2*pi*f."""
        rows = []
        for axis in range(d_in):
            for f in self.frequencies:
                row = np.zeros(d_in)
                row[axis] = 2.0 * np.pi * f
                rows.append(row)
        return np.asarray(rows)


@dataclass(frozen=True)
class CircleFrontend:
    """Per-axis (sin, cos) embedding of a circle-valued coordinate.

    An angle in (-1/2, 1/2] cannot be fed to an MLP directly without
    reintroducing a seam; the embedding is periodic and smooth across the
    wrap, so fields on the wrapped domain stay low-frequency.
    """

    def out_width(self, d_in):
        return 2 * d_in

    def lift_matrix(self, d_in):
        return 2.0 * np.pi * np.eye(d_in)


def _affine_stack(x, w, b):
    """y = x W^T on a stacked (K, n, m) jet batch, bias on the value block."""
    xv, wv, bv = ad.value_of(x), ad.value_of(w), ad.value_of(b)
    K, n, m_in = xv.shape
    x2 = xv.reshape(-1, m_in)
    out = (x2 @ wv.T).reshape(K, n, wv.shape[0])
    out[0] += bv

    def vjp(g):
        g2 = g.reshape(-1, wv.shape[0])
        return ((g2 @ wv).reshape(xv.shape), g2.T @ x2, g[0].sum(axis=0))

    return ad.custom(out, [x, w, b], vjp)


class DenseNetwork:
    """Layer shapes and parameter packing; weights live in a flat vector."""

    def __init__(self, layer_sizes, frontend=None):
        if any(s < 1 for s in layer_sizes):
            raise ValueError("layer sizes must be positive")
        self.layer_sizes = list(layer_sizes)
        self.frontend = frontend
        widths = list(layer_sizes)
        if frontend is not None:
            widths[0] = frontend.out_width(layer_sizes[0])
        self.shapes = [(widths[i + 1], widths[i]) for i in range(len(widths) - 1)]
        self.d_in = layer_sizes[0]
        self.d_out = layer_sizes[-1]

    @property
    def n_params(self):
        return sum(o * i + o for o, i in self.shapes)

    def init_params(self, seed):
        """Xavier-uniform weights, zero biases; deterministic per seed."""
        rng = np.random.default_rng(seed)
        parts = []
        for out, inp in self.shapes:
            limit = np.sqrt(6.0 / (inp + out))
            parts.append(rng.uniform(-limit, limit, size=(out, inp)).ravel())
            parts.append(np.zeros(out))
        return np.concatenate(parts)

    def unpack(self, flat):
        """Split a flat block into per-layer (W, b); works on arrays and Vars."""
        layers = []
        off = 0
        for out, inp in self.shapes:
            if isinstance(flat, ad.Var):
                w = ad.reshape(ad.slice_vec(flat, off, off + out * inp), (out, inp))
                off += out * inp
                b = ad.slice_vec(flat, off, off + out)
                off += out
            else:
                w = flat[off:off + out * inp].reshape(out, inp)
                off += out * inp
                b = flat[off:off + out]
                off += out
            layers.append((w, b))
        return layers

    def forward(self, layers, jb: JetBatch) -> JetBatch:
        """Propagate jets through frontend and layers.

        All jet components travel in one stacked array so each affine
        layer is a single GEMM.  Raises EvaluationError naming the first
        layer whose output values turn non-finite.
        """
        if self.frontend is not None:
            lift = self.frontend.lift_matrix(self.d_in)
            arg = affine_jet(jb, lift, np.zeros(lift.shape[0]))
            if isinstance(self.frontend, CircleFrontend):
                jb = concat_jets([sin_jet(arg), cos_jet(arg)])
            else:
                jb = concat_jets([jb, sin_jet(arg), cos_jet(arg)])
        order = jb.order
        d = jb.dim
        x = stack_jets(jb)
        last = len(layers) - 1
        for li, (w, b) in enumerate(layers):
            x = _affine_stack(x, w, b)
            if not np.isfinite(ad.value_of(x).sum()):
                raise EvaluationError(f"non-finite activation in layer {li}")
            if li < last:
                x = tanh_stack(x, d, order)
        return unstack_jets(x, d, order)


def init_network(seed, layer_sizes, frontend=None):
    """Build a network and its initial flat parameter vector."""
    net = DenseNetwork(layer_sizes, frontend)
    return net, net.init_params(seed)


def standard_network(d_in, d_out, frontend=None):
    sizes = [d_in] + [HIDDEN_WIDTH] * HIDDEN_LAYERS + [d_out]
    return DenseNetwork(sizes, frontend)


def save_checkpoint(path, params, meta):
    """Flat float64 parameter vector plus a JSON metadata blob; bit-exact."""
    np.savez(path, params=np.asarray(params, dtype=np.float64),
             meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8))


def load_checkpoint(path):
    with np.load(path) as data:
        params = data["params"].copy()
        meta = json.loads(bytes(data["meta"].tobytes()).decode())
    return params, meta
