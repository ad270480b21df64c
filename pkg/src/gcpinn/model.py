"""Mapping-composed network with a single flat parameter vector.

Parameter ordering is fixed so gradient vectors, kernel rows and
checkpoints line up across runs: per layer weights then biases, then
mapping parameters, then any strategy-owned scalars (e.g. adaptive loss
weights).  The trainable mask follows the same layout; frozen entries
still occupy slots and still receive mathematically defined gradients,
but optimizers never move them.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .jets import Jet, JetBatch
from .mappings import Mapping
from .network import DenseNetwork


class Binding:
    """Parameter views for one forward/backward episode.

    Traced bindings hold autodiff leaves; untraced bindings hold raw array
    views, which makes the same forward code run without building a graph.
    """

    __slots__ = ("leaves", "layers", "mapping_params", "extras", "traced")

    def __init__(self, leaves, layers, mapping_params, extras, traced):
        self.leaves = leaves
        self.layers = layers
        self.mapping_params = mapping_params
        self.extras = extras
        self.traced = traced


class Model:
    def __init__(self, network: DenseNetwork, mapping: Mapping, net_params,
                 extras=()):
        """extras: sequence of (name, init_array, trainable) appended last."""
        self.network = network
        self.mapping = mapping
        self.extra_specs = [(name, np.asarray(init, dtype=np.float64), bool(tr))
                            for name, init, tr in extras]
        blocks = [np.asarray(net_params, dtype=np.float64), mapping.param_init]
        blocks += [init for _, init, _ in self.extra_specs]
        self.params = np.concatenate(blocks) if blocks else np.zeros(0)
        self._net_n = network.n_params
        self._map_n = mapping.n_params
        mask = [np.ones(self._net_n, dtype=bool),
                np.full(self._map_n, mapping.trainable, dtype=bool)]
        mask += [np.full(init.size, tr, dtype=bool) for _, init, tr in self.extra_specs]
        self.trainable_mask = np.concatenate(mask) if mask else np.zeros(0, dtype=bool)

    @property
    def n_params(self):
        return self.params.size

    def mapping_slice(self):
        return slice(self._net_n, self._net_n + self._map_n)

    def extra_slice(self, name):
        off = self._net_n + self._map_n
        for ename, init, _ in self.extra_specs:
            if ename == name:
                return slice(off, off + init.size)
            off += init.size
        raise KeyError(name)

    def bind(self, params=None, traced=False) -> Binding:
        flat = self.params if params is None else np.asarray(params, dtype=np.float64)
        net_block = flat[:self._net_n]
        map_block = flat[self.mapping_slice()]
        extras = {}
        leaves = []
        if traced:
            net_var = ad.leaf(net_block)
            map_var = ad.leaf(map_block)
            leaves = [net_var, map_var]
            off = self._net_n + self._map_n
            for name, init, _ in self.extra_specs:
                v = ad.leaf(flat[off:off + init.size])
                extras[name] = v
                leaves.append(v)
                off += init.size
            layers = self.network.unpack(net_var)
            return Binding(leaves, layers, map_var, extras, True)
        off = self._net_n + self._map_n
        for name, init, _ in self.extra_specs:
            extras[name] = flat[off:off + init.size]
            off += init.size
        return Binding([], self.network.unpack(net_block), map_block, extras, False)

    def pack_leaf_grads(self, grads):
        return np.concatenate([np.asarray(g).ravel() for g in grads])

    def jets(self, points, order, binding=None) -> JetBatch:
        """Jets of the composed field u(x) = f(phi(x)) at physical points."""
        if binding is None:
            binding = self.bind()
        seed = self.mapping.seed(points, binding.mapping_params, order)
        return self.network.forward(binding.layers, seed)

    def values(self, points):
        return ad.value_of(self.jets(np.asarray(points, dtype=np.float64), 0).value)

    def with_params(self, params):
        self.params = np.asarray(params, dtype=np.float64).copy()
        return self


def evaluate_jet(model: Model, point):
    """Value, physical gradient and Hessian at one point, per network output."""
    pts = np.asarray(point, dtype=np.float64)[None, :]
    jb = model.jets(pts, order=2).arrays()
    if not (np.isfinite(jb.value).all() and np.isfinite(jb.grad).all()
            and np.isfinite(jb.hess).all()):
        raise_nonfinite(model)
    return [jb.jet(0, k) for k in range(jb.width)]


def raise_nonfinite(model):
    from .errors import EvaluationError
    raise EvaluationError(
        f"non-finite jet produced by {model.mapping.name} mapping composition")


def loss_parameter_gradient(model: Model, build_loss, params=None):
    """Gradient of a scalar loss with respect to the full parameter vector.

    `build_loss(binding)` assembles the loss from traced jets and must
    return a 0-d autodiff Var.  The gradient covers every declared
    parameter slot (including currently frozen mapping entries).
    """
    binding = model.bind(params=params, traced=True)
    loss = build_loss(binding)
    grads = ad.backward(loss, binding.leaves)
    flat = model.pack_leaf_grads(grads)
    if not np.isfinite(flat).all():
        bad = int(np.flatnonzero(~np.isfinite(flat))[0])
        from .errors import EvaluationError
        raise EvaluationError(f"non-finite gradient entry at parameter index {bad}")
    return float(loss.value), flat
