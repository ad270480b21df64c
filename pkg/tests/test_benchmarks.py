"""Benchmark definitions: manufactured solutions, sources, residuals.

The source terms are cross-checked against fully independent symbolic
derivations (sympy applies each operator to the closed-form solution).
"""

import numpy as np
import pytest
import sympy as sp

from gcpinn.benchmarks import (BENCHMARK_NAMES, amplification_probe,
                               exact_solution_residual, get_benchmark,
                               model_residual, source_term)
from gcpinn.runner import build_model

RNG = np.random.default_rng(17)


def interior(bench, n):
    return bench.lo + RNG.random((n, bench.dim)) * (bench.hi - bench.lo)


# -- manufactured solution values ----------------------------------------

def test_helmholtz_solution_value():
    bench = get_benchmark("helmholtz1d")
    assert abs(bench.manufactured_solution(np.array([0.05]))[0] - 1.0) < 1e-12


def test_ns_pressure_value():
    bench = get_benchmark("ns2d")
    vals = bench.manufactured_solution(np.array([0.25, 0.25]))
    assert abs(vals[2] - 0.5) < 1e-12


def test_ns_v_vanishes_on_lower_wall():
    bench = get_benchmark("ns2d")
    for x in (0.1, 0.6, 0.99):
        vals = bench.manufactured_solution(np.array([x, 0.0]))
        assert abs(vals[1]) < 1e-14


# -- sympy source oracle --------------------------------------------------

def _sympy_sources():
    x, y = sp.symbols("x y")
    nu_b = sp.Rational(1, 10)
    u_b = sp.sin(2 * sp.pi * x) + sp.Rational(1, 10) * sp.sin(16 * sp.pi * x)
    burgers = u_b * sp.diff(u_b, x) - nu_b * sp.diff(u_b, x, 2)

    nu_c, a_c = sp.Rational(1, 1000), 1
    u_c = sp.sin(sp.pi * x) + sp.exp(-a_c * x / nu_c)
    convdiff = a_c * sp.diff(u_c, x) - nu_c * sp.diff(u_c, x, 2)

    k, m = 10, 5
    u_h = sp.sin(2 * sp.pi * m * x)
    helmholtz = sp.diff(u_h, x, 2) + k**2 * u_h

    eps = sp.Rational(1, 100)
    u_2 = sp.sin(sp.pi * x) * sp.sin(sp.pi * y) + sp.Rational(8, 10) * sp.exp(-(1 - x) / eps)
    convdiff2 = -eps * (sp.diff(u_2, x, 2) + sp.diff(u_2, y, 2)) \
        + sp.diff(u_2, x) + sp.diff(u_2, y)

    nu_n, A, B = sp.Rational(1, 100), sp.Rational(3, 10), sp.Rational(1, 2)
    lay = sp.exp(-(1 - x) / eps)
    u_n = sp.sin(sp.pi * y) * (1 + A * lay)
    v_n = (A / eps) * lay * (sp.cos(sp.pi * y) - 1) / sp.pi
    p_n = B * sp.sin(2 * sp.pi * x) * sp.sin(2 * sp.pi * y)
    mom_x = u_n * sp.diff(u_n, x) + v_n * sp.diff(u_n, y) + sp.diff(p_n, x) \
        - nu_n * (sp.diff(u_n, x, 2) + sp.diff(u_n, y, 2))
    mom_y = u_n * sp.diff(v_n, x) + v_n * sp.diff(v_n, y) + sp.diff(p_n, y) \
        - nu_n * (sp.diff(v_n, x, 2) + sp.diff(v_n, y, 2))
    cont = sp.diff(u_n, x) + sp.diff(v_n, y)

    lam = lambda e: sp.lambdify((x, y), e, "numpy")
    return {
        "burgers1d": [lam(burgers)],
        "convdiff1d": [lam(convdiff)],
        "helmholtz1d": [lam(helmholtz)],
        "convdiff2d": [lam(convdiff2)],
        "ns2d": [lam(mom_x), lam(mom_y), lam(cont)],
    }


SYMPY_SOURCES = _sympy_sources()


@pytest.mark.parametrize("name", BENCHMARK_NAMES)
def test_source_matches_sympy(name):
    bench = get_benchmark(name)
    pts = interior(bench, 10)
    got = source_term(bench, pts)
    xcol = pts[:, 0]
    ycol = pts[:, 1] if bench.dim == 2 else np.zeros_like(xcol)
    for c, fn in enumerate(SYMPY_SOURCES[name]):
        want = np.broadcast_to(np.asarray(fn(xcol, ycol), dtype=np.float64),
                               xcol.shape)
        scale = max(np.max(np.abs(want)), 1e-12)
        assert np.max(np.abs(got[:, c] - want)) / scale <= 1e-9, (name, c)


def test_helmholtz_source_closed_form_point():
    bench = get_benchmark("helmholtz1d")
    f = source_term(bench, np.array([0.05]))[0]
    assert abs(f - (100.0 - 100.0 * np.pi**2)) < 1e-9


# -- closure and residuals -------------------------------------------------

@pytest.mark.parametrize("name", BENCHMARK_NAMES)
def test_mms_closure(name):
    bench = get_benchmark(name)
    res = exact_solution_residual(bench, interior(bench, 1000))
    assert np.max(np.abs(res)) <= 1e-8


def test_ns_divergence_free():
    bench = get_benchmark("ns2d")
    jb = bench.exact.jets(interior(bench, 1000), order=1)
    div = jb.grad[:, 0, 0] + jb.grad[:, 1, 1]
    assert np.max(np.abs(div)) <= 1e-9


def test_zero_model_residual_is_minus_source():
    bench = get_benchmark("helmholtz1d")
    model = build_model(bench, "pinn", seed=0)
    model.params[:] = 0.0
    pts = interior(bench, 50)
    res = model_residual(bench, model, pts)
    np.testing.assert_allclose(res, -source_term(bench, pts), atol=1e-12)


def test_linear_field_convdiff_residual():
    # u(x) = x has zero second derivative, so only convection survives
    bench = get_benchmark("convdiff1d")

    class LinearField:
        def jets(self, pts, order, binding=None):
            from gcpinn.jets import identity_seed
            return identity_seed(np.asarray(pts), order)

    pts = interior(bench, 20)
    res = model_residual(bench, LinearField(), pts)
    f = source_term(bench, pts)
    np.testing.assert_allclose(res[:, 0], 1.0 - f[:, 0], atol=1e-12)


def test_boundary_residual_exact_solution_zero():
    for name in BENCHMARK_NAMES:
        bench = get_benchmark(name)

        class ExactModel:
            def values(self, pts):
                return bench.exact.value(pts)

        point = bench.lo.copy()
        out = bench.boundary_residual(ExactModel(), point)
        np.testing.assert_allclose(out, 0.0, atol=1e-14)


def test_boundary_residual_zero_model_values():
    bench = get_benchmark("helmholtz1d")

    class ZeroModel:
        def values(self, pts):
            return np.zeros((len(pts), 1))

    out = bench.boundary_residual(ZeroModel(), np.array([0.0]))
    np.testing.assert_allclose(out, [0.0], atol=1e-15)

    bench2 = get_benchmark("convdiff2d")

    class ZeroModel2:
        def values(self, pts):
            return np.zeros((len(pts), 1))

    out = bench2.boundary_residual(ZeroModel2(), np.array([1.0, 0.37]))
    np.testing.assert_allclose(out, [-0.8], atol=1e-12)


def test_ns_boundary_batch_has_pressure_pin():
    bench = get_benchmark("ns2d")
    pts, comps, targets = bench.boundary_batch(100, np.random.default_rng(0))
    pins = comps == 2
    assert pins.sum() == 1
    np.testing.assert_array_equal(pts[pins][0], bench.lo)
    assert abs(targets[pins][0] - bench.manufactured_solution(bench.lo)[2]) < 1e-15


def test_residual_gradient_matches_fd_of_residual():
    """The gradient-of-residual path (third-order jets) against finite
    differences of the residual itself."""
    for name in ("burgers1d", "convdiff2d"):
        bench = get_benchmark(name)
        model = build_model(bench, "pinn", seed=13)
        pts = interior(bench, 6) * 0.8 + 0.1 * (bench.hi - bench.lo)
        jb = model.jets(pts, order=3)
        from gcpinn import autodiff as ad
        grads = bench.residual_gradient(jb, pts)
        h = 1e-5
        for axis in range(bench.dim):
            e = np.zeros(bench.dim)
            e[axis] = h
            fd = (model_residual(bench, model, pts + e)
                  - model_residual(bench, model, pts - e)) / (2 * h)
            for c in range(bench.n_residual_components):
                got = ad.value_of(grads[c][axis])
                scale = max(np.max(np.abs(fd[:, c])), 1.0)
                assert np.max(np.abs(got - fd[:, c])) / scale < 1e-5, (name, c, axis)


# -- amplification probe ----------------------------------------------------

def test_amplification_eps_one():
    rep = amplification_probe(1.0)
    assert abs(rep.ratio - 1.0) < 1e-9


def test_amplification_eps_tenth():
    rep = amplification_probe(0.1)
    assert abs(rep.ratio - 100.0) / 100.0 < 0.02


def test_amplification_eps_hundredth():
    rep = amplification_probe(0.01)
    assert abs(rep.ratio - 1e4) / 1e4 < 0.05


def test_amplification_rejects_coarse_grid():
    with pytest.raises(ValueError, match="grid too coarse"):
        amplification_probe(0.01, grid_points=300)


def test_amplification_rejects_bad_eps():
    with pytest.raises(ValueError):
        amplification_probe(0.0)


def test_unknown_benchmark_rejected():
    with pytest.raises(ValueError):
        get_benchmark("heat3d")
