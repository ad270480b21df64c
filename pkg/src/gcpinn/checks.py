"""Self-contained property suites behind the `check` CLI command.

Each check returns a CheckResult with the measured quantity and the
tolerance it was held to, so the output is machine-readable evidence
rather than a bare boolean.  The same functions back the test suite.

Suites:
    derivative  jets of mapping-composed networks against central finite
                differences, and parameter gradients of every strategy's
                loss against finite differences over the parameters
    mapping     closed-form identities of the mapping family
    mms         manufactured-solution closure of all five benchmarks
    probe       second-derivative amplification measurement
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .benchmarks import (BENCHMARK_NAMES, amplification_probe,
                         exact_solution_residual, get_benchmark)
from .config import METHODS
from .mappings import (SATURATING_STEEPNESS, VARIANTS, make_mapping, map_point,
                       mapping_jacobian)
from .runner import build_model
from .training import (StrategyState, TrainingSchedule, loss_and_grad,
                       sample_collocation)

GRAD_RTOL = 1e-5
HESS_RTOL = 1e-3
PARAM_GRAD_RTOL = 1e-5
FD_STEP = 1e-4


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.measured = float(self.measured)
        self.tolerance = float(self.tolerance)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return (f"[{status}] {self.name}: measured {self.measured:.3e} "
                f"vs tolerance {self.tolerance:.3e}{extra}")

    def as_dict(self):
        return {"name": self.name, "passed": self.passed,
                "measured": self.measured, "tolerance": self.tolerance,
                "detail": self.detail}


def _interior_points(bench, mapping_variant, n, rng, margin):
    """Random interior points away from finite-difference exclusion zones
    (the radial origin kink and the piecewise-linear knots)."""
    lo, hi = bench.lo + margin, bench.hi - margin
    pts = lo + rng.random((n, bench.dim)) * (hi - lo)
    if mapping_variant == "radial":
        center = np.zeros(bench.dim) if bench.dim == 1 else 0.5 * (bench.lo + bench.hi)
        r = np.linalg.norm(pts - center, axis=1)
        pts[r < 4 * margin] += 0.05 * (bench.hi - bench.lo)
    if mapping_variant == "pwl":
        from .mappings import PWL_SEGMENTS
        span = bench.hi - bench.lo
        frac = (pts - bench.lo) / span * PWL_SEGMENTS
        near = np.abs(frac - np.round(frac)) < PWL_SEGMENTS * 4 * margin / span
        # park offending coordinates at the middle of their segment
        mid = bench.lo + (np.floor(frac) + 0.5) / PWL_SEGMENTS * span
        pts = np.where(near, mid, pts)
    return pts


METHOD_FOR_VARIANT = {
    "identity": "pinn",
    "torus": "gc-torus",
    "radial": "gc-radial",
    "local_stretch": "gc-local",
    "pwl": "gc-pwl",
    "saturating": "gc-saturating",
}


def jet_fd_errors(bench, mapping_variant, n_points=100, seed=1234, step=FD_STEP):
    """Worst relative gradient/Hessian error of composed jets vs central
    differences over seeded random points; the model is composed exactly
    as the corresponding training method composes it."""
    rng = np.random.default_rng(seed)
    model = build_model(bench, METHOD_FOR_VARIANT[mapping_variant], seed=seed)
    pts = _interior_points(bench, mapping_variant, n_points, rng, 2 * step)
    jb = model.jets(pts, order=2).arrays()
    d = bench.dim

    def values_at(shifted):
        return model.values(shifted)        # (n, m)

    base = values_at(pts)
    grad_fd = np.zeros_like(jb.grad)
    hess_fd = np.zeros_like(jb.hess)
    shifts = {}
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        shifts[(i, +1)] = values_at(pts + e)
        shifts[(i, -1)] = values_at(pts - e)
    for i in range(d):
        grad_fd[:, i, :] = (shifts[(i, +1)] - shifts[(i, -1)]) / (2 * step)
        hess_fd[:, i, i, :] = (shifts[(i, +1)] - 2 * base + shifts[(i, -1)]) / step**2
    for i in range(d):
        for j in range(i + 1, d):
            ei, ej = np.zeros(d), np.zeros(d)
            ei[i], ej[j] = step, step
            cross = (values_at(pts + ei + ej) - values_at(pts + ei - ej)
                     - values_at(pts - ei + ej) + values_at(pts - ei - ej)) / (4 * step**2)
            hess_fd[:, i, j, :] = cross
            hess_fd[:, j, i, :] = cross
    gscale = max(np.max(np.abs(grad_fd)), 1e-10)
    hscale = max(np.max(np.abs(hess_fd)), 1e-10)
    gerr = float(np.max(np.abs(jb.grad - grad_fd)) / gscale)
    herr = float(np.max(np.abs(jb.hess - hess_fd)) / hscale)
    return gerr, herr


def derivative_suite(n_points=100, seed=1234):
    results = []
    for bname in BENCHMARK_NAMES:
        bench = get_benchmark(bname)
        for variant in VARIANTS:
            gerr, herr = jet_fd_errors(bench, variant, n_points, seed)
            results.append(CheckResult(
                f"jet-grad-fd/{bname}/{variant}", gerr <= GRAD_RTOL, gerr, GRAD_RTOL))
            results.append(CheckResult(
                f"jet-hess-fd/{bname}/{variant}", herr <= HESS_RTOL, herr, HESS_RTOL))
    return results


def param_grad_fd_error(bench, method, seed=7, n_res=5, iteration=4200,
                        trainable_mapping=False, small=True):
    """Relative error of the analytic loss gradient vs central finite
    differences over every parameter (small backbone keeps this fast)."""
    model = build_model(bench, method, train_mapping=trainable_mapping, seed=seed)
    if small:
        from .network import (DenseNetwork, FourierFrontend, CircleFrontend,
                              FOURIER_FREQUENCIES)
        frontend = None
        if METHODS[method][2]:
            frontend = FourierFrontend(FOURIER_FREQUENCIES)
        elif METHODS[method][0] == "torus":
            frontend = CircleFrontend()
        net = DenseNetwork([bench.dim, 8, 8, bench.n_outputs], frontend)
        from .model import Model
        extras = [(nm, model.params[model.extra_slice(nm)], tr)
                  for nm, _, tr in model.extra_specs]
        model = Model(net, model.mapping, net.init_params(seed), extras)
    rng = np.random.default_rng(seed)
    pts = sample_collocation(bench.lo, bench.hi, n_res, rng)
    bc = bench.boundary_batch(8, rng)
    schedule = TrainingSchedule(strategy=METHODS[method][1])
    state = StrategyState(name=schedule.strategy)

    def loss_at(theta):
        rec, _ = loss_and_grad(model.with_params(theta), bench, schedule, state,
                               pts, bc, iteration, "adam")
        return rec.total

    theta0 = model.params.copy()
    _, grad = loss_and_grad(model.with_params(theta0), bench, schedule, state,
                            pts, bc, iteration, "adam")
    fd = np.zeros_like(theta0)
    h = 1e-6
    for i in range(theta0.size):
        tp, tm = theta0.copy(), theta0.copy()
        tp[i] += h
        tm[i] -= h
        fd[i] = (loss_at(tp) - loss_at(tm)) / (2 * h)
    model.with_params(theta0)
    scale = max(np.max(np.abs(fd)), 1e-8)
    return float(np.max(np.abs(grad - fd)) / scale)


def parameter_gradient_suite(seed=7):
    results = []
    cases = [
        ("helmholtz1d", "pinn", False),
        ("burgers1d", "gpinn", False),
        ("convdiff1d", "sa", False),
        ("helmholtz1d", "ff", False),
        ("burgers1d", "gc-local", True),
        ("helmholtz1d", "gc-radial", True),
        ("helmholtz1d", "gc-pwl", False),
        ("convdiff2d", "pinn", False),
    ]
    for bname, method, train_map in cases:
        err = param_grad_fd_error(get_benchmark(bname), method, seed=seed,
                                  trainable_mapping=train_map)
        results.append(CheckResult(
            f"loss-param-grad-fd/{bname}/{method}", err <= PARAM_GRAD_RTOL,
            err, PARAM_GRAD_RTOL))
    return results


def mapping_suite(seed=99):
    rng = np.random.default_rng(seed)
    results = []
    lo, hi = np.array([0.0]), np.array([1.0])

    torus = make_mapping("torus", lo, hi)
    x = rng.random((1000, 1))
    dev = float(np.max(np.abs(map_point(torus, x + 1.0) - map_point(torus, x))))
    results.append(CheckResult("torus-periodicity", dev <= 5e-15, dev, 5e-15,
                               "one period shift, machine-exact"))
    jac = mapping_jacobian(torus, x)
    jdev = float(np.max(np.abs(jac - np.eye(1))))
    results.append(CheckResult("torus-jacobian-identity", jdev == 0.0, jdev, 0.0))
    from .mappings import mapping_hessian
    hdev = float(np.max(np.abs(mapping_hessian(torus, x))))
    results.append(CheckResult("torus-hessian-zero", hdev == 0.0, hdev, 0.0))
    vals = map_point(torus, x)
    in_range = bool(np.all((vals > -0.5) & (vals <= 0.5)))
    results.append(CheckResult("torus-range", in_range,
                               float(np.max(np.abs(vals))), 0.5))

    alpha = 20.0
    radial = make_mapping("radial", lo, hi, alpha=alpha)
    worst = 0.0
    for R in (10.0, 100.0, 1000.0):
        j = mapping_jacobian(radial, np.array([R]))[0, 0]
        ratio = j * R * np.log(1.0 + alpha)   # -> 1 in the far field
        worst = max(worst, ratio, 1.0 / ratio)
    results.append(CheckResult("radial-far-field-decay", worst <= 1.2, worst, 1.2,
                               "Jacobian ~ 1/R at R in {10,100,1000}"))

    sat = make_mapping("saturating", lo, hi)
    xs = np.concatenate([np.linspace(0.0, 0.15, 400), np.linspace(0.85, 1.0, 400)])
    jmax = float(np.max(np.abs(mapping_jacobian(sat, xs[:, None]))))
    results.append(CheckResult("saturating-gradient-collapse", jmax < 1e-5,
                               jmax, 1e-5,
                               f"|x - c| >= 0.35 with k = {SATURATING_STEEPNESS:g}"))

    pwl = make_mapping("pwl", lo, hi)
    rng2 = np.random.default_rng(seed + 1)
    params = rng2.normal(size=pwl.param_init.shape)
    grid = np.linspace(0.0, 1.0, 257)[:, None]
    vals = map_point(pwl, grid, params)[:, 0]
    mono = bool(np.all(np.diff(vals) > 0))
    results.append(CheckResult("pwl-monotone", mono, float(np.min(np.diff(vals))), 0.0,
                               "strictly increasing on a 257-point grid"))
    emax = max(abs(vals[0]), abs(vals[-1] - 1.0))
    results.append(CheckResult("pwl-endpoints", emax <= 1e-12, float(emax), 1e-12))
    inc = pwl.increments(params)[0]
    sdev = abs(float(inc.sum()) - 1.0)
    results.append(CheckResult("pwl-increment-sum", sdev <= 1e-12, sdev, 1e-12))

    ident = make_mapping("identity", lo, hi)
    x5 = rng.random((100, 1))
    jdev = float(np.max(np.abs(mapping_jacobian(ident, x5) - np.eye(1))))
    hdev = float(np.max(np.abs(mapping_hessian(ident, x5))))
    results.append(CheckResult("identity-neutrality", jdev == 0.0 and hdev == 0.0,
                               max(jdev, hdev), 0.0))
    return results


def mms_suite(n_points=1000, seed=2718):
    results = []
    rng = np.random.default_rng(seed)
    for bname in BENCHMARK_NAMES:
        bench = get_benchmark(bname)
        pts = sample_collocation(bench.lo, bench.hi, n_points, rng)
        res = exact_solution_residual(bench, pts)
        worst = float(np.max(np.abs(res)))
        results.append(CheckResult(f"mms-closure/{bname}", worst <= 1e-8,
                                   worst, 1e-8))
    ns = get_benchmark("ns2d")
    pts = sample_collocation(ns.lo, ns.hi, n_points, rng)
    jb = ns.exact.jets(pts, order=1)
    div = jb.grad[:, 0, 0] + jb.grad[:, 1, 1]
    dmax = float(np.max(np.abs(div)))
    results.append(CheckResult("ns-divergence-free", dmax <= 1e-9, dmax, 1e-9))
    return results


def probe_suite():
    rep = amplification_probe(0.01)
    err = abs(rep.ratio - 1e4) / 1e4
    return [CheckResult("amplification-ratio", err <= 0.05, rep.ratio, 1e4,
                        f"relative deviation {err:.3e} (<= 5%)")]


SUITES = {
    "derivative": derivative_suite,
    "params": parameter_gradient_suite,
    "mapping": mapping_suite,
    "mms": mms_suite,
    "probe": probe_suite,
}


def run_checks(suites=None):
    chosen = suites or list(SUITES)
    results = []
    for name in chosen:
        if name not in SUITES:
            raise ValueError(f"unknown check suite {name!r}; choose from {sorted(SUITES)}")
        results.extend(SUITES[name]())
    return results
