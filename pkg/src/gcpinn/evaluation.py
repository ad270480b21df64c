"""Error metrics on a test grid and residual-kernel spectral diagnostics.

Metrics follow the discrete norms used for reporting: MSE, relative L2
error ||u_hat - u||_2 / ||u||_2, and a relative H1 error that also sums
squared errors of every spatial partial derivative.  For the
Navier-Stokes benchmark the headline MSE/Rel-L2 are computed on the
velocity magnitude; Rel-H1 is computed on the stacked velocity
components (the magnitude derivative is undefined at stagnation points),
and per-component metrics are reported alongside.

The residual kernel is the Gram matrix of per-point parameter gradients
of the PDE residual; its eigenvalue spectrum and entropy-based effective
rank diagnose how many directions the residual gradients excite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .benchmarks import Benchmark
from .model import Model

TEST_GRID_SEED = 90210     # one fixed grid per benchmark, shared by every method
NTK_POINT_SEED = 77003
NTK_MAX_POINTS = 512
DEFAULT_N_TEST = 2000


@dataclass
class MetricReport:
    mse: float
    rel_l2: float
    rel_h1: float
    n_test: int
    per_component: list = field(default_factory=list)

    def as_dict(self):
        out = {"mse": self.mse, "rel_l2": self.rel_l2, "rel_h1": self.rel_h1,
               "n_test": self.n_test}
        if self.per_component:
            out["per_component"] = [
                {"mse": c.mse, "rel_l2": c.rel_l2, "rel_h1": c.rel_h1}
                for c in self.per_component
            ]
        return out


@dataclass
class NtkReport:
    kernel: np.ndarray
    eigenvalues: np.ndarray   # descending
    effective_rank: float


def test_points(benchmark: Benchmark, n_test=DEFAULT_N_TEST, seed=TEST_GRID_SEED):
    rng = np.random.default_rng(seed)
    return benchmark.lo + rng.random((n_test, benchmark.dim)) * (benchmark.hi - benchmark.lo)


def _norms(err_val, err_grad, ref_val, ref_grad):
    l2_err = float(np.sum(err_val**2))
    l2_ref = float(np.sum(ref_val**2))
    h1_err = l2_err + float(np.sum(err_grad**2))
    h1_ref = l2_ref + float(np.sum(ref_grad**2))
    if l2_ref == 0.0:
        raise ValueError("exact solution has zero norm on the test grid; "
                         "relative metrics are undefined")
    return (float(np.mean(err_val**2)),
            float(np.sqrt(l2_err / l2_ref)),
            float(np.sqrt(h1_err / h1_ref)))


def compute_metrics(model: Model, benchmark: Benchmark, n_test=DEFAULT_N_TEST,
                    rng=None, points=None) -> MetricReport:
    """MSE / Rel-L2 / Rel-H1 on uniformly sampled test points."""
    if n_test < 2:
        raise ValueError("n_test must be at least 2")
    if points is None:
        if rng is None:
            points = test_points(benchmark, n_test)
        else:
            points = benchmark.lo + rng.random((n_test, benchmark.dim)) \
                * (benchmark.hi - benchmark.lo)
    n_test = len(points)
    pred = model.jets(points, order=1).arrays()
    exact = benchmark.exact.jets(points, order=1)

    per_component = []
    if benchmark.n_outputs > 1:
        for k in range(benchmark.n_outputs):
            mse, rl2, rh1 = _norms(pred.value[:, k] - exact.value[:, k],
                                   pred.grad[:, :, k] - exact.grad[:, :, k],
                                   exact.value[:, k], exact.grad[:, :, k])
            per_component.append(MetricReport(mse, rl2, rh1, n_test))
        # headline values: velocity magnitude, H1 on stacked velocities
        q_pred = np.sqrt(pred.value[:, 0]**2 + pred.value[:, 1]**2)
        q_ref = np.sqrt(exact.value[:, 0]**2 + exact.value[:, 1]**2)
        mse = float(np.mean((q_pred - q_ref)**2))
        if np.sum(q_ref**2) == 0.0:
            raise ValueError("exact velocity magnitude has zero norm")
        rel_l2 = float(np.sqrt(np.sum((q_pred - q_ref)**2) / np.sum(q_ref**2)))
        ev = pred.value[:, :2] - exact.value[:, :2]
        eg = pred.grad[:, :, :2] - exact.grad[:, :, :2]
        h1_err = float(np.sum(ev**2) + np.sum(eg**2))
        h1_ref = float(np.sum(exact.value[:, :2]**2) + np.sum(exact.grad[:, :, :2]**2))
        rel_h1 = float(np.sqrt(h1_err / h1_ref))
        return MetricReport(mse, rel_l2, rel_h1, n_test, per_component)

    mse, rl2, rh1 = _norms(pred.value[:, 0] - exact.value[:, 0],
                           pred.grad[:, :, 0] - exact.grad[:, :, 0],
                           exact.value[:, 0], exact.grad[:, :, 0])
    return MetricReport(mse, rl2, rh1, n_test)


def rel_l2_field(model: Model, benchmark: Benchmark, points, exact_vals=None):
    """Value-only Rel-L2, cheap enough for per-step convergence logging."""
    pred = model.values(points)
    if exact_vals is None:
        exact_vals = benchmark.exact.value(points)
    if benchmark.n_outputs > 1:
        p = np.sqrt(pred[:, 0]**2 + pred[:, 1]**2)
        e = np.sqrt(exact_vals[:, 0]**2 + exact_vals[:, 1]**2)
    else:
        p, e = pred[:, 0], exact_vals[:, 0]
    return float(np.sqrt(np.sum((p - e)**2) / np.sum(e**2)))


def effective_rank(eigenvalues):
    """exp of the spectral entropy of the normalized eigenvalues.

    Scale-invariant; equals the count of equal nonzero eigenvalues and 1
    for a rank-one spectrum.  Zero eigenvalues contribute nothing.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if lam.size == 0 or np.all(lam <= 0.0):
        raise ValueError("effective rank needs at least one positive eigenvalue")
    lam = np.clip(lam, 0.0, None)
    p = lam / lam.sum()
    nz = p[p > 0.0]
    return float(np.exp(-np.sum(nz * np.log(nz))))


def ntk_points(benchmark: Benchmark, n=128, seed=NTK_POINT_SEED):
    rng = np.random.default_rng(seed)
    return benchmark.lo + rng.random((n, benchmark.dim)) * (benchmark.hi - benchmark.lo)


def ntk_matrix(model: Model, benchmark: Benchmark, points) -> NtkReport:
    """Residual-kernel Gram matrix, spectrum, and effective rank.

    Row i is the gradient of the residual at point i with respect to the
    full parameter vector (components stacked for multi-equation systems);
    K = G G^T is symmetric positive semidefinite by construction.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if n > NTK_MAX_POINTS:
        raise ValueError(f"at most {NTK_MAX_POINTS} kernel points (got {n})")
    binding = model.bind(traced=True)
    jb = model.jets(points, order=2, binding=binding)
    res = benchmark.residual(jb, points)
    rows = np.zeros((n, len(res), model.n_params))
    for c, comp in enumerate(res):
        for i in range(n):
            seed = np.zeros(n)
            seed[i] = 1.0
            rows[i, c] = model.pack_leaf_grads(ad.backward(comp, binding.leaves, seed))
    g = rows.reshape(n, -1)
    kernel = g @ g.T
    eig = np.linalg.eigvalsh(kernel)[::-1]
    return NtkReport(kernel, eig, effective_rank(eig))


