"""Manufactured-solution PDE benchmarks.

Five steady problems on the unit interval/square.  Every benchmark carries
a closed-form exact solution; the source term is obtained by pushing the
exact field through the same differential-operator code that evaluates
model residuals, so the operator and the source can never drift apart
(method of manufactured solutions).

    burgers1d    -nu u_xx + u u_x = f          nu = 0.1
    convdiff1d   -nu u_xx + a u_x = f          nu = 1e-3, a = 1 (Pe = 1000)
    helmholtz1d  u_xx + k^2 u = f              k = 10, u* = sin(2 pi m x), m = 5
    convdiff2d   -eps lap(u) + b.grad(u) = f   eps = 0.01, b = (1,1)
    ns2d         steady incompressible Navier-Stokes with an exponential
                 velocity boundary layer at x = 1 and pressure pinned at
                 the origin to fix the gauge

The exact solutions the sources are derived from:

    burgers1d    u* = sin(2 pi x) + 0.1 sin(16 pi x)
    convdiff1d   u* = sin(pi x) + exp(-a x / nu)        (layer of width nu/a at x=0)
    helmholtz1d  u* = sin(10 pi x)
    convdiff2d   u* = sin(pi x) sin(pi y) + 0.8 exp(-(1-x)/0.01)
    ns2d         u* = sin(pi y) (1 + 0.3 exp(-(1-x)/0.01))
                 v* = (0.3/0.01) exp(-(1-x)/0.01) (cos(pi y) - 1)/pi
                 p* = 0.5 sin(2 pi x) sin(2 pi y)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .jets import JetBatch


# ---------------------------------------------------------------------------
# exact fields as sums of separable univariate factors

class USin:
    def __init__(self, omega, phase=0.0):
        self.omega = omega
        self.phase = phase

    def d(self, x, k):
        return self.omega**k * np.sin(self.omega * x + self.phase + k * np.pi / 2.0)


class UExp:
    """exp(rate * (x - shift)); every derivative multiplies by rate."""

    def __init__(self, rate, shift=0.0):
        self.rate = rate
        self.shift = shift

    def d(self, x, k):
        return self.rate**k * np.exp(self.rate * (x - self.shift))


class UOne:
    def d(self, x, k):
        return np.ones_like(x) if k == 0 else np.zeros_like(x)


@dataclass
class SepTerm:
    coef: float
    fx: object
    fy: object = None


class ExactField:
    """Closed-form multi-component field with derivatives up to order 3."""

    def __init__(self, components):
        self.components = components  # list of lists of SepTerm

    @property
    def n_outputs(self):
        return len(self.components)

    def _partial(self, terms, x, counts):
        total = np.zeros(x.shape[0])
        for t in terms:
            part = t.coef * t.fx.d(x[:, 0], counts[0])
            if t.fy is not None:
                part = part * t.fy.d(x[:, 1], counts[1])
            total += part
        return total

    def jets(self, points, order=2) -> JetBatch:
        x = np.asarray(points, dtype=np.float64)
        n = x.shape[0]
        d = x.shape[1]
        m = self.n_outputs

        def counts(idx):
            c = [0, 0]
            for i in idx:
                c[i] += 1
            return c

        value = np.zeros((n, m))
        for k, terms in enumerate(self.components):
            value[:, k] = self._partial(terms, x, [0, 0])
        grad = hess = third = None
        if order >= 1:
            grad = np.zeros((n, d, m))
            for k, terms in enumerate(self.components):
                for i in range(d):
                    grad[:, i, k] = self._partial(terms, x, counts((i,)))
        if order >= 2:
            hess = np.zeros((n, d, d, m))
            for k, terms in enumerate(self.components):
                for i in range(d):
                    for j in range(i, d):
                        v = self._partial(terms, x, counts((i, j)))
                        hess[:, i, j, k] = v
                        hess[:, j, i, k] = v
        if order >= 3:
            third = np.zeros((n, d, d, d, m))
            for k, terms in enumerate(self.components):
                for i in range(d):
                    for j in range(d):
                        for l in range(d):
                            third[:, i, j, l, k] = self._partial(terms, x, counts((i, j, l)))
        return JetBatch(value, grad, hess, third, dim=d)

    def value(self, points):
        return self.jets(points, order=0).value


# ---------------------------------------------------------------------------
# jet component accessors (work on arrays and Vars alike)

def _V(jb, k):
    return ad.index_axis(jb.value, 1, k)


def _G(jb, i, k):
    return ad.index_axis(ad.index_axis(jb.grad, 1, i), 1, k)


def _H(jb, i, j, k):
    return ad.index_axis(ad.index_axis(ad.index_axis(jb.hess, 1, i), 1, j), 1, k)


def _T(jb, i, j, l, k):
    return ad.index_axis(ad.index_axis(ad.index_axis(
        ad.index_axis(jb.third, 1, i), 1, j), 1, l), 1, k)


@dataclass
class Benchmark:
    """Domain, operator, exact solution and boundary data for one problem."""

    name: str
    dim: int
    n_outputs: int
    n_residual_components: int
    lo: np.ndarray
    hi: np.ndarray
    exact: ExactField
    coefficients: dict = field(default_factory=dict)
    operator_order: int = 2

    # -- differential operator -------------------------------------------

    def operator(self, jb):
        """Raw N[field] per residual component, each a (n,) array/Var."""
        raise NotImplementedError

    def operator_gradient(self, jb):
        """Spatial gradient of N[field]: list over components of per-axis lists."""
        raise NotImplementedError

    # -- residuals ---------------------------------------------------------

    def source(self, points, with_gradient=False):
        """f = N[u*]; optionally also its spatial gradient (for the
        gradient-augmented loss)."""
        jb = self.exact.jets(points, order=3 if with_gradient else 2)
        comps = [ad.value_of(c) for c in self.operator(jb)]
        if not with_gradient:
            return comps, None
        grads = [[ad.value_of(g) for g in per_axis] for per_axis in self.operator_gradient(jb)]
        return comps, grads

    def residual(self, jb, points, source=None):
        if source is None:
            source, _ = self.source(points)
        return [ad.sub(c, f) for c, f in zip(self.operator(jb), source)]

    def residual_gradient(self, jb, points, source_grad=None):
        if source_grad is None:
            _, source_grad = self.source(points, with_gradient=True)
        out = []
        for comp, fg in zip(self.operator_gradient(jb), source_grad):
            out.append([ad.sub(g, f) for g, f in zip(comp, fg)])
        return out

    # -- boundary -----------------------------------------------------------

    def boundary_batch(self, n, rng):
        """Dirichlet data from the exact solution on the domain boundary.

        Returns (points (M,d), component index (M,), targets (M,)).
        """
        if self.dim == 1:
            pts = np.asarray([[self.lo[0]], [self.hi[0]]])
        else:
            per = max(n // 4, 1)
            lo, hi = self.lo, self.hi
            ys = rng.uniform(lo[1], hi[1], size=per)
            xs = rng.uniform(lo[0], hi[0], size=per)
            ys2 = rng.uniform(lo[1], hi[1], size=per)
            xs2 = rng.uniform(lo[0], hi[0], size=per)
            pts = np.concatenate([
                np.stack([np.full(per, lo[0]), ys], axis=1),
                np.stack([np.full(per, hi[0]), ys2], axis=1),
                np.stack([xs, np.full(per, lo[1])], axis=1),
                np.stack([xs2, np.full(per, hi[1])], axis=1),
            ])
        comps = [np.zeros(len(pts), dtype=int)]
        points = [pts]
        n_bc = 1 if self.n_outputs == 1 else 2  # NS constrains (u, v)
        for c in range(1, n_bc):
            points.append(pts)
            comps.append(np.full(len(pts), c, dtype=int))
        points = np.concatenate(points)
        comps = np.concatenate(comps)
        if self.name == "ns2d":
            # pressure is only defined up to a constant; pin it at the origin
            points = np.concatenate([points, [self.lo]])
            comps = np.concatenate([comps, [2]])
        vals = self.exact.value(points)
        targets = vals[np.arange(len(points)), comps]
        return points, comps, targets

    def boundary_residual(self, model, point):
        """u_theta - u* at one boundary point, one entry per constrained output."""
        pts = np.asarray(point, dtype=np.float64)[None, :]
        vals = model.values(pts)[0]
        exact = self.exact.value(pts)[0]
        n_bc = 1 if self.n_outputs == 1 else 2
        out = vals[:n_bc] - exact[:n_bc]
        if self.name == "ns2d" and np.allclose(pts[0], self.lo):
            out = np.concatenate([out, [vals[2] - exact[2]]])
        return out

    def manufactured_solution(self, point):
        x = np.asarray(point, dtype=np.float64)
        single = x.ndim == 1
        vals = self.exact.value(x[None, :] if single else x)
        return vals[0] if single else vals


class Burgers1D(Benchmark):
    def operator(self, jb):
        nu = self.coefficients["nu"]
        u, ux, uxx = _V(jb, 0), _G(jb, 0, 0), _H(jb, 0, 0, 0)
        return [ad.sub(ad.mul(u, ux), ad.mul(nu, uxx))]

    def operator_gradient(self, jb):
        nu = self.coefficients["nu"]
        u, ux, uxx, uxxx = _V(jb, 0), _G(jb, 0, 0), _H(jb, 0, 0, 0), _T(jb, 0, 0, 0, 0)
        return [[ad.sub(ad.add(ad.square(ux), ad.mul(u, uxx)), ad.mul(nu, uxxx))]]


class ConvDiff1D(Benchmark):
    def operator(self, jb):
        nu, a = self.coefficients["nu"], self.coefficients["a"]
        ux, uxx = _G(jb, 0, 0), _H(jb, 0, 0, 0)
        return [ad.sub(ad.mul(a, ux), ad.mul(nu, uxx))]

    def operator_gradient(self, jb):
        nu, a = self.coefficients["nu"], self.coefficients["a"]
        uxx, uxxx = _H(jb, 0, 0, 0), _T(jb, 0, 0, 0, 0)
        return [[ad.sub(ad.mul(a, uxx), ad.mul(nu, uxxx))]]


class Helmholtz1D(Benchmark):
    def operator(self, jb):
        k2 = self.coefficients["k"] ** 2
        u, uxx = _V(jb, 0), _H(jb, 0, 0, 0)
        return [ad.add(uxx, ad.mul(k2, u))]

    def operator_gradient(self, jb):
        k2 = self.coefficients["k"] ** 2
        ux, uxxx = _G(jb, 0, 0), _T(jb, 0, 0, 0, 0)
        return [[ad.add(uxxx, ad.mul(k2, ux))]]


class ConvDiff2D(Benchmark):
    def operator(self, jb):
        eps = self.coefficients["eps"]
        b1, b2 = self.coefficients["b"]
        ux, uy = _G(jb, 0, 0), _G(jb, 1, 0)
        lap = ad.add(_H(jb, 0, 0, 0), _H(jb, 1, 1, 0))
        return [ad.add(ad.sub(ad.mul(b1, ux), ad.mul(eps, lap)), ad.mul(b2, uy))]

    def operator_gradient(self, jb):
        eps = self.coefficients["eps"]
        b1, b2 = self.coefficients["b"]
        uxx, uxy, uyy = _H(jb, 0, 0, 0), _H(jb, 0, 1, 0), _H(jb, 1, 1, 0)
        gx = ad.add(ad.sub(ad.mul(b1, uxx),
                           ad.mul(eps, ad.add(_T(jb, 0, 0, 0, 0), _T(jb, 0, 1, 1, 0)))),
                    ad.mul(b2, uxy))
        gy = ad.add(ad.sub(ad.mul(b1, uxy),
                           ad.mul(eps, ad.add(_T(jb, 0, 0, 1, 0), _T(jb, 1, 1, 1, 0)))),
                    ad.mul(b2, uyy))
        return [[gx, gy]]


class NavierStokes2D(Benchmark):
    def operator(self, jb):
        nu = self.coefficients["nu"]
        u, v = _V(jb, 0), _V(jb, 1)
        ux, uy = _G(jb, 0, 0), _G(jb, 1, 0)
        vx, vy = _G(jb, 0, 1), _G(jb, 1, 1)
        px, py = _G(jb, 0, 2), _G(jb, 1, 2)
        lap_u = ad.add(_H(jb, 0, 0, 0), _H(jb, 1, 1, 0))
        lap_v = ad.add(_H(jb, 0, 0, 1), _H(jb, 1, 1, 1))
        mom_x = ad.sub(ad.add(ad.add(ad.mul(u, ux), ad.mul(v, uy)), px), ad.mul(nu, lap_u))
        mom_y = ad.sub(ad.add(ad.add(ad.mul(u, vx), ad.mul(v, vy)), py), ad.mul(nu, lap_v))
        cont = ad.add(ux, vy)
        return [mom_x, mom_y, cont]

    def operator_gradient(self, jb):
        nu = self.coefficients["nu"]
        u, v = _V(jb, 0), _V(jb, 1)
        ux, uy = _G(jb, 0, 0), _G(jb, 1, 0)
        vx, vy = _G(jb, 0, 1), _G(jb, 1, 1)
        uxx, uxy, uyy = _H(jb, 0, 0, 0), _H(jb, 0, 1, 0), _H(jb, 1, 1, 0)
        vxx, vxy, vyy = _H(jb, 0, 0, 1), _H(jb, 0, 1, 1), _H(jb, 1, 1, 1)
        pxx, pxy, pyy = _H(jb, 0, 0, 2), _H(jb, 0, 1, 2), _H(jb, 1, 1, 2)

        def add4(a, b, c, d):
            return ad.add(ad.add(a, b), ad.add(c, d))

        mom_x_x = ad.sub(
            ad.add(add4(ad.square(ux), ad.mul(u, uxx), ad.mul(vx, uy), ad.mul(v, uxy)), pxx),
            ad.mul(nu, ad.add(_T(jb, 0, 0, 0, 0), _T(jb, 0, 1, 1, 0))))
        mom_x_y = ad.sub(
            ad.add(add4(ad.mul(uy, ux), ad.mul(u, uxy), ad.mul(vy, uy), ad.mul(v, uyy)), pxy),
            ad.mul(nu, ad.add(_T(jb, 0, 0, 1, 0), _T(jb, 1, 1, 1, 0))))
        mom_y_x = ad.sub(
            ad.add(add4(ad.mul(ux, vx), ad.mul(u, vxx), ad.mul(vx, vy), ad.mul(v, vxy)), pxy),
            ad.mul(nu, ad.add(_T(jb, 0, 0, 0, 1), _T(jb, 0, 1, 1, 1))))
        mom_y_y = ad.sub(
            ad.add(add4(ad.mul(uy, vx), ad.mul(u, vxy), ad.square(vy), ad.mul(v, vyy)), pyy),
            ad.mul(nu, ad.add(_T(jb, 0, 0, 1, 1), _T(jb, 1, 1, 1, 1))))
        cont_x = ad.add(uxx, vxy)
        cont_y = ad.add(uxy, vyy)
        return [[mom_x_x, mom_x_y], [mom_y_x, mom_y_y], [cont_x, cont_y]]


def _build_burgers1d():
    exact = ExactField([[SepTerm(1.0, USin(2 * np.pi)), SepTerm(0.1, USin(16 * np.pi))]])
    return Burgers1D("burgers1d", 1, 1, 1, np.array([0.0]), np.array([1.0]),
                     exact, {"nu": 0.1})


def _build_convdiff1d():
    nu, a = 1e-3, 1.0
    exact = ExactField([[SepTerm(1.0, USin(np.pi)), SepTerm(1.0, UExp(-a / nu))]])
    return ConvDiff1D("convdiff1d", 1, 1, 1, np.array([0.0]), np.array([1.0]),
                      exact, {"nu": nu, "a": a})


def _build_helmholtz1d():
    exact = ExactField([[SepTerm(1.0, USin(10 * np.pi))]])
    return Helmholtz1D("helmholtz1d", 1, 1, 1, np.array([0.0]), np.array([1.0]),
                       exact, {"k": 10.0, "m": 5})


def _build_convdiff2d():
    eps_layer = 0.01
    exact = ExactField([[
        SepTerm(1.0, USin(np.pi), USin(np.pi)),
        SepTerm(0.8, UExp(1.0 / eps_layer, shift=1.0), UOne()),
    ]])
    return ConvDiff2D("convdiff2d", 2, 1, 1, np.array([0.0, 0.0]), np.array([1.0, 1.0]),
                      exact, {"eps": 0.01, "b": (1.0, 1.0), "A": 0.8,
                              "eps_layer": eps_layer})


def _build_ns2d():
    nu, A, eps_layer, B = 0.01, 0.3, 0.01, 0.5
    lay = UExp(1.0 / eps_layer, shift=1.0)
    u_comp = [SepTerm(1.0, UOne(), USin(np.pi)),
              SepTerm(A, lay, USin(np.pi))]
    v_comp = [SepTerm(A / (eps_layer * np.pi), lay, USin(np.pi, phase=np.pi / 2.0)),
              SepTerm(-A / (eps_layer * np.pi), lay, UOne())]
    p_comp = [SepTerm(B, USin(2 * np.pi), USin(2 * np.pi))]
    exact = ExactField([u_comp, v_comp, p_comp])
    return NavierStokes2D("ns2d", 2, 3, 3, np.array([0.0, 0.0]), np.array([1.0, 1.0]),
                          exact, {"nu": nu, "rho": 1.0, "A": A,
                                  "eps_layer": eps_layer, "B": B})


_BUILDERS = {
    "burgers1d": _build_burgers1d,
    "convdiff1d": _build_convdiff1d,
    "helmholtz1d": _build_helmholtz1d,
    "convdiff2d": _build_convdiff2d,
    "ns2d": _build_ns2d,
}

BENCHMARK_NAMES = tuple(_BUILDERS)


def get_benchmark(name) -> Benchmark:
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise ValueError(f"unknown benchmark: {name!r}; choose from {BENCHMARK_NAMES}")


def source_term(benchmark, point):
    """f = N[u*] at one point (or a batch), one entry per residual component."""
    x = np.asarray(point, dtype=np.float64)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    comps, _ = benchmark.source(pts)
    out = np.stack(comps, axis=1)
    return out[0] if single else out


def model_residual(benchmark, model, point, order=2):
    """N[u_theta] - f at one point (or a batch), per residual component."""
    x = np.asarray(point, dtype=np.float64)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    jb = model.jets(pts, order=order)
    comps = [ad.value_of(c) for c in benchmark.residual(jb, pts)]
    out = np.stack(comps, axis=1)
    return out[0] if single else out


def exact_solution_residual(benchmark, points):
    """Residual of the exact solution itself (the manufactured-solution
    closure check); evaluates the operator on the exact jets and subtracts
    the source."""
    pts = np.asarray(points, dtype=np.float64)
    jb = benchmark.exact.jets(pts, order=2)
    comps = [ad.value_of(c) for c in benchmark.residual(jb, pts)]
    return np.stack(comps, axis=1)


@dataclass
class AmplificationReport:
    eps: float
    grid_points: int
    fine_max: float
    smooth_max: float
    ratio: float


def amplification_probe(eps, grid_points=None) -> AmplificationReport:
    """Measured second-derivative amplification of a two-scale field.

    Samples sin(2 pi x) + sin(2 pi x / eps) on a uniform grid, forms second
    differences of each component, and reports the ratio of the fine-scale
    to the smooth-scale amplitude (analytically 1/eps^2).
    """
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    min_grid = int(np.ceil(4.0 / eps))
    if grid_points is None:
        grid_points = max(int(np.ceil(64.0 / eps)), 512)
    if grid_points < min_grid:
        raise ValueError(
            f"grid too coarse: {grid_points} points give fewer than 4 per fine "
            f"wavelength (need >= {min_grid})")
    x = np.linspace(0.0, 1.0, grid_points + 1)
    h = x[1] - x[0]
    smooth = np.sin(2.0 * np.pi * x)
    fine = np.sin(2.0 * np.pi * x / eps)

    def second_diff(f):
        return (f[2:] - 2.0 * f[1:-1] + f[:-2]) / h**2

    fine_max = float(np.max(np.abs(second_diff(fine))))
    smooth_max = float(np.max(np.abs(second_diff(smooth))))
    return AmplificationReport(eps, grid_points, fine_max, smooth_max,
                               fine_max / smooth_max)
