"""Metrics and residual-kernel diagnostics."""

import numpy as np
import pytest

from gcpinn.benchmarks import get_benchmark
from gcpinn.evaluation import (compute_metrics, effective_rank, ntk_matrix,
                               ntk_points, rel_l2_field)
from gcpinn.evaluation import test_points as eval_grid
from gcpinn.jets import JetBatch
from gcpinn.runner import build_model


class FieldModel:
    """Adapter exposing a closed-form field through the model interface."""

    def __init__(self, base, scale=1.0, offset=0.0):
        self.base = base
        self.scale = scale
        self.offset = offset

    def jets(self, pts, order, binding=None):
        jb = self.base.jets(np.asarray(pts), order)
        value = self.scale * jb.value + self.offset
        grad = None if jb.grad is None else self.scale * jb.grad
        hess = None if jb.hess is None else self.scale * jb.hess
        return JetBatch(value, grad, hess, dim=jb.dim)

    def values(self, pts):
        return self.jets(pts, 0).value


def test_exact_prediction_gives_zero_metrics():
    bench = get_benchmark("helmholtz1d")
    rep = compute_metrics(FieldModel(bench.exact), bench)
    assert rep.mse == 0.0 and rep.rel_l2 == 0.0 and rep.rel_h1 == 0.0
    assert rep.n_test == 2000


def test_doubled_prediction_gives_unit_rel_l2():
    bench = get_benchmark("helmholtz1d")
    rep = compute_metrics(FieldModel(bench.exact, scale=2.0), bench)
    assert abs(rep.rel_l2 - 1.0) < 1e-12
    assert abs(rep.rel_h1 - 1.0) < 1e-12


def test_constant_offset_metrics():
    # u = sin(2 pi x): offset by 0.1 -> MSE 0.01, Rel-L2 = 0.1 / sqrt(mean sin^2)
    from gcpinn.benchmarks import ExactField, SepTerm, USin
    bench = get_benchmark("helmholtz1d")
    field = ExactField([[SepTerm(1.0, USin(2 * np.pi))]])
    bench_like = get_benchmark("helmholtz1d")
    bench_like.exact = field
    rep = compute_metrics(FieldModel(field, offset=0.1), bench_like, n_test=200000)
    assert abs(rep.mse - 0.01) < 1e-12
    assert abs(rep.rel_l2 - 0.1 / np.sqrt(0.5)) < 2e-3


def test_rel_metrics_reject_zero_norm():
    from gcpinn.benchmarks import ExactField, SepTerm, USin
    bench = get_benchmark("helmholtz1d")
    bench.exact = ExactField([[SepTerm(0.0, USin(np.pi))]])
    with pytest.raises(ValueError):
        compute_metrics(FieldModel(bench.exact), bench)


def test_n_test_must_be_at_least_two():
    bench = get_benchmark("helmholtz1d")
    with pytest.raises(ValueError):
        compute_metrics(FieldModel(bench.exact), bench, n_test=1)


def test_ns_metrics_use_velocity_magnitude():
    bench = get_benchmark("ns2d")
    rep = compute_metrics(FieldModel(bench.exact), bench)
    assert rep.mse == 0.0 and rep.rel_l2 == 0.0
    assert len(rep.per_component) == 3


def test_rel_l2_field_matches_compute_metrics():
    bench = get_benchmark("helmholtz1d")
    model = build_model(bench, "pinn", seed=1)
    pts = eval_grid(bench)
    rep = compute_metrics(model, bench, points=pts)
    quick = rel_l2_field(model, bench, pts)
    assert abs(rep.rel_l2 - quick) < 1e-12


# -- effective rank -----------------------------------------------------------

def test_effective_rank_rank_one():
    assert abs(effective_rank([1.0, 0.0, 0.0]) - 1.0) < 1e-12


def test_effective_rank_uniform():
    assert abs(effective_rank([1.0, 1.0, 1.0, 1.0]) - 4.0) < 1e-12


def test_effective_rank_mixed_spectrum():
    expect = np.exp(-(0.5 * np.log(0.5) + 2 * 0.25 * np.log(0.25)))
    assert abs(effective_rank([2.0, 1.0, 1.0]) - expect) < 1e-12
    assert abs(expect - 2.8284271247461903) < 1e-12


def test_effective_rank_scale_invariant():
    lam = np.random.default_rng(0).random(16)
    r1 = effective_rank(lam)
    assert abs(effective_rank(137.0 * lam) - r1) < 1e-10
    assert 1.0 <= r1 <= 16.0


def test_effective_rank_rejects_zero_spectrum():
    with pytest.raises(ValueError):
        effective_rank([0.0, 0.0])


# -- residual kernel -----------------------------------------------------------

def test_ntk_single_point():
    bench = get_benchmark("helmholtz1d")
    model = build_model(bench, "pinn", seed=5)
    rep = ntk_matrix(model, bench, np.array([[0.4]]))
    assert rep.kernel.shape == (1, 1)
    assert rep.kernel[0, 0] > 0
    assert abs(rep.effective_rank - 1.0) < 1e-9


def test_ntk_duplicated_point_is_rank_one():
    bench = get_benchmark("helmholtz1d")
    model = build_model(bench, "pinn", seed=5)
    rep = ntk_matrix(model, bench, np.array([[0.4], [0.4]]))
    assert abs(rep.effective_rank - 1.0) < 1e-6


def test_ntk_symmetric_psd():
    bench = get_benchmark("helmholtz1d")
    model = build_model(bench, "pinn", seed=6)
    pts = ntk_points(bench, n=24)
    rep = ntk_matrix(model, bench, pts)
    np.testing.assert_allclose(rep.kernel, rep.kernel.T, atol=1e-10)
    lam_max = rep.eigenvalues[0]
    assert np.all(rep.eigenvalues >= -1e-10 * lam_max)
    assert np.all(np.diff(rep.eigenvalues) <= 1e-12)
    assert 1.0 <= rep.effective_rank <= 24.0


def test_ntk_rows_match_direct_gradient():
    """Kernel entries against per-point parameter gradients computed one
    at a time through the scalar-loss path."""
    from gcpinn.model import loss_parameter_gradient
    from gcpinn import autodiff as ad
    bench = get_benchmark("helmholtz1d")
    model = build_model(bench, "pinn", seed=8)
    pts = np.array([[0.3], [0.7]])
    rep = ntk_matrix(model, bench, pts)

    rows = []
    for i in range(2):
        def build(binding, i=i):
            jb = model.jets(pts[i:i + 1], 2, binding)
            return ad.index_axis(bench.residual(jb, pts[i:i + 1])[0], 0, 0)
        _, g = loss_parameter_gradient(model, build)
        rows.append(g)
    expect = np.array(rows) @ np.array(rows).T
    np.testing.assert_allclose(rep.kernel, expect, rtol=1e-10)


def test_ntk_point_budget_enforced():
    bench = get_benchmark("helmholtz1d")
    model = build_model(bench, "pinn", seed=5)
    with pytest.raises(ValueError):
        ntk_matrix(model, bench, np.zeros((513, 1)))
