"""Backbone network: init, parameter counts, jets, checkpoints."""

import numpy as np
import pytest

from gcpinn import autodiff as ad
from gcpinn.benchmarks import get_benchmark
from gcpinn.errors import EvaluationError
from gcpinn.jets import identity_seed
from gcpinn.model import Model, evaluate_jet, loss_parameter_gradient
from gcpinn.mappings import make_mapping
from gcpinn.network import (FOURIER_FREQUENCIES, CircleFrontend, DenseNetwork,
                            FourierFrontend, init_network, load_checkpoint,
                            save_checkpoint, standard_network)
from gcpinn.runner import REFERENCE_PARAM_COUNTS, build_model, parameter_count_report


def test_init_is_deterministic():
    _, p1 = init_network(3407, [1, 80, 80, 80, 80, 1])
    _, p2 = init_network(3407, [1, 80, 80, 80, 80, 1])
    np.testing.assert_array_equal(p1, p2)
    _, p3 = init_network(3408, [1, 80, 80, 80, 80, 1])
    assert not np.array_equal(p1, p3)


def test_init_xavier_bounds_and_zero_biases():
    net, params = init_network(0, [3, 5, 2])
    layers = net.unpack(params)
    for (w, b), (out, inp) in zip(layers, net.shapes):
        limit = np.sqrt(6.0 / (inp + out))
        assert np.all(np.abs(w) <= limit)
        np.testing.assert_array_equal(b, np.zeros(out))


def test_parameter_count_plain_backbone():
    net = DenseNetwork([1, 80, 80, 80, 80, 1])
    assert net.n_params == 19681


def test_parameter_count_fourier_backbone():
    net = DenseNetwork([1, 80, 80, 80, 80, 1], FourierFrontend(FOURIER_FREQUENCIES))
    assert net.n_params == 20641


def test_fourier_feature_width_1d():
    fe = FourierFrontend(FOURIER_FREQUENCIES)
    assert fe.out_width(1) == 13
    assert fe.out_width(2) == 26


@pytest.mark.parametrize("method,count", sorted(REFERENCE_PARAM_COUNTS.items()))
def test_method_parameter_counts(method, count):
    report = parameter_count_report(method)
    if method == "gc-torus":
        assert report["matches"] is False
        assert report["note"]
        assert report["count"] == 19761
    else:
        assert report["matches"], report
        assert report["count"] == count


def test_forward_value_matches_jet_value():
    bench = get_benchmark("helmholtz1d")
    model = build_model(bench, "pinn", seed=5)
    pts = np.random.default_rng(0).random((40, 1))
    v0 = model.values(pts)
    v2 = ad.value_of(model.jets(pts, 2).value)
    np.testing.assert_array_equal(v0, v2)


def test_zero_weights_bias_output():
    net = DenseNetwork([1, 4, 1])
    params = np.zeros(net.n_params)
    params[-1] = 0.7          # output bias is the last slot
    layers = net.unpack(params)
    out = net.forward(layers, identity_seed(np.random.rand(6, 1), 2)).arrays()
    np.testing.assert_allclose(out.value, 0.7)
    np.testing.assert_array_equal(out.grad, np.zeros_like(out.grad))
    np.testing.assert_array_equal(out.hess, np.zeros_like(out.hess))


def test_single_linear_layer_jet():
    net = DenseNetwork([3, 2])
    rng = np.random.default_rng(7)
    params = rng.normal(size=net.n_params)
    layers = net.unpack(params)
    w, b = layers[0]
    out = net.forward(layers, identity_seed(rng.normal(size=(5, 3)), 2)).arrays()
    for p in range(5):
        np.testing.assert_allclose(out.grad[p], w.T, atol=1e-15)
    np.testing.assert_array_equal(out.hess, np.zeros_like(out.hess))


def test_identity_mapping_neutrality_bitwise():
    bench = get_benchmark("helmholtz1d")
    model = build_model(bench, "pinn", seed=9)
    pts = np.random.default_rng(1).random((20, 1))
    via_model = model.jets(pts, 2).arrays()
    seed = identity_seed(pts, 2)
    bare = model.network.forward(model.network.unpack(model.params[:model.network.n_params]),
                                 seed).arrays()
    np.testing.assert_array_equal(via_model.value, bare.value)
    np.testing.assert_array_equal(via_model.grad, bare.grad)
    np.testing.assert_array_equal(via_model.hess, bare.hess)


def test_hessian_symmetry_across_methods():
    rng = np.random.default_rng(2)
    for bname in ("helmholtz1d", "convdiff2d", "ns2d"):
        bench = get_benchmark(bname)
        for method in ("pinn", "ff", "gc-torus", "gc-radial", "gc-local"):
            model = build_model(bench, method, seed=3)
            pts = bench.lo + rng.random((15, bench.dim)) * (bench.hi - bench.lo)
            h = ad.value_of(model.jets(pts, 2).hess)
            assert np.max(np.abs(h - h.transpose(0, 2, 1, 3))) <= 1e-12


def test_evaluate_jet_single_point():
    bench = get_benchmark("ns2d")
    model = build_model(bench, "pinn", seed=11)
    jets = evaluate_jet(model, np.array([0.3, 0.4]))
    assert len(jets) == 3
    for jet in jets:
        assert jet.grad.shape == (2,)
        assert jet.hess.shape == (2, 2)
        assert jet.check_symmetry()


def test_evaluate_jet_nonfinite_raises_with_layer():
    bench = get_benchmark("helmholtz1d")
    model = build_model(bench, "pinn", seed=1)
    model.params[0] = np.inf
    with pytest.raises(EvaluationError, match="layer"):
        evaluate_jet(model, np.array([0.5]))


def test_single_parameter_linear_model_gradient():
    # u = theta * x, loss = (u(1) - 1)^2 at theta = 0 -> d loss/d theta = -2
    net = DenseNetwork([1, 1])
    mapping = make_mapping("identity", np.array([0.0]), np.array([1.0]))
    model = Model(net, mapping, np.zeros(net.n_params))
    x = np.array([[1.0]])

    def build(binding):
        u = model.jets(x, 0, binding).value
        return ad.square(ad.sub(ad.index_axis(ad.index_axis(u, 0, 0), 0, 0), 1.0))

    loss, grad = loss_parameter_gradient(model, build)
    assert abs(loss - 1.0) < 1e-15
    assert abs(grad[0] + 2.0) < 1e-12   # weight slot
    assert abs(grad[1] + 2.0) < 1e-12   # bias slot sees the same sensitivity


def test_zero_network_zero_source_gradient_vanishes():
    # symmetric zero is a stationary point of a pure residual-energy loss
    bench = get_benchmark("burgers1d")
    net = standard_network(1, 1)
    mapping = make_mapping("identity", bench.lo, bench.hi)
    model = Model(net, mapping, np.zeros(net.n_params))
    pts = np.random.default_rng(3).random((10, 1))

    def build(binding):
        jb = model.jets(pts, 2, binding)
        comps = bench.operator(jb)      # no source: target is zero
        return ad.mean_all(ad.square(comps[0]))

    loss, grad = loss_parameter_gradient(model, build)
    assert loss == 0.0
    np.testing.assert_array_equal(grad, np.zeros_like(grad))


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    bench = get_benchmark("helmholtz1d")
    model = build_model(bench, "gc-radial", seed=21)
    model.params += np.random.default_rng(4).normal(size=model.n_params) * 0.01
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, model.params, {"config": {"method": "gc-radial"}})
    params, meta = load_checkpoint(path)
    np.testing.assert_array_equal(params, model.params)
    assert meta == {"config": {"method": "gc-radial"}}


def test_circle_frontend_width_and_periodicity():
    assert CircleFrontend().out_width(1) == 2
    bench = get_benchmark("helmholtz1d")
    model = build_model(bench, "gc-torus", seed=6)
    x = np.random.default_rng(5).random((50, 1))
    np.testing.assert_allclose(model.values(x), model.values(x + 1.0), atol=1e-12)
