"""Two-stage training protocol and the five loss strategies.

Stage one runs Adam on a fresh uniform collocation batch per step; stage
two runs L-BFGS with a strong Wolfe line search on one fixed batch.  The
composite loss is

    w_res * mean ||R||^2  +  w_bc * mean ||B||^2  +  c_reg * penalty(map)

with (w_res, w_bc) = (1, 100) for every strategy except the self-adaptive
one, which replaces both by clipped exponentials of two trainable
log-weights (trained by gradient ascent, frozen before L-BFGS).  The
residual-gradient strategy adds a ramped, normalized, clipped
mean ||grad_x R||^2 term during Adam only; the refinement strategy grows
its collocation pool every 500 steps from the worst of 8000 candidates.

Batch loss/gradient evaluation is chunked at a fixed size with reduction
in ascending chunk order, so results are bit-identical at any worker
count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .benchmarks import Benchmark
from .errors import DivergenceError
from .model import Model

BC_WEIGHT = 100.0
MAPPING_REG_COEFF = 1e-6

SA_WEIGHT_CLIP = (1e-3, 1e3)

RAR_PERIOD = 500
RAR_CANDIDATES = 8000
RAR_TOP = 500
RAR_CAPACITY = 60000

GPINN_LAMBDA = 5e-6
GPINN_WARMUP = 2000
GPINN_RAMP = 2000
GPINN_CLIP = 100.0
GPINN_EPS_DEN = 1e-8

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

LBFGS_HISTORY = 50
WOLFE_C1 = 1e-4
WOLFE_C2 = 0.9
GRAD_TOL = 1e-10

CHUNK = 1024
DIVERGENCE_LIMIT = 1e12

STRATEGIES = ("vanilla", "ff", "sa", "rar", "gpinn", "gc")


@dataclass
class TrainingSchedule:
    seed: int = 3407
    adam_lr: float = 1e-3
    adam_epochs: int = 6000
    adam_points: int = 3000
    lbfgs_lr: float = 1.0
    lbfgs_steps: int = 500
    lbfgs_points: int = 15000
    bc_weight: float = BC_WEIGHT
    mapping_reg_coeff: float = MAPPING_REG_COEFF
    bc_points: int = 400         # 2-d benchmarks; 1-d always uses both endpoints
    strategy: str = "vanilla"
    workers: int = 1


@dataclass
class StrategyState:
    name: str = "vanilla"
    rar_pool: np.ndarray | None = None
    sa_frozen: tuple | None = None   # (w_res, w_bc) once L-BFGS starts


@dataclass
class LossRecord:
    total: float
    residual: float        # mean ||R||^2 before weighting
    bc: float              # mean ||B||^2 before weighting
    reg: float             # degeneracy penalty before its coefficient
    strategy_a: float = 0.0
    strategy_b: float = 0.0

    def components(self):
        return (f"total={self.total:.6e} residual={self.residual:.6e} "
                f"bc={self.bc:.6e} reg={self.reg:.6e} "
                f"strategy=({self.strategy_a:.6e}, {self.strategy_b:.6e})")


@dataclass
class LogRow:
    iteration: int
    stage: str
    record: LossRecord
    test_rel_l2: float | None = None


def sample_collocation(lo, hi, n, rng):
    """n i.i.d. uniform points inside the box; deterministic per rng state."""
    if n < 1:
        raise ValueError("need at least one collocation point")
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    return lo + rng.random((n, lo.shape[0])) * (hi - lo)


def gpinn_coefficient(iteration):
    """0 through the warm-up, then a linear ramp to the base weight."""
    if iteration < GPINN_WARMUP:
        return 0.0
    if iteration >= GPINN_WARMUP + GPINN_RAMP:
        return GPINN_LAMBDA
    return GPINN_LAMBDA * (iteration - GPINN_WARMUP) / GPINN_RAMP


def _residual_chunk(model, benchmark, pts, source, need_gpinn, source_grad):
    """Sums over one chunk plus their parameter gradients (3 reverse sweeps
    at most: residual energy, residual-gradient energy, field-gradient
    energy)."""
    binding = model.bind(traced=True)
    order = 3 if need_gpinn else 2
    jb = model.jets(pts, order, binding)
    res = benchmark.residual(jb, pts, source=source)
    r2 = None
    for comp in res:
        term = ad.sum_all(ad.square(comp))
        r2 = term if r2 is None else ad.add(r2, term)
    out = {"r2": float(r2.value)}
    grads = {"r2": model.pack_leaf_grads(ad.backward(r2, binding.leaves))}
    if need_gpinn:
        rg = benchmark.residual_gradient(jb, pts, source_grad=source_grad)
        a = None
        for per_axis in rg:
            for gcomp in per_axis:
                term = ad.sum_all(ad.square(gcomp))
                a = term if a is None else ad.add(a, term)
        b = ad.sum_all(ad.square(jb.grad))
        out["a"] = float(a.value)
        out["b"] = float(b.value)
        grads["a"] = model.pack_leaf_grads(ad.backward(a, binding.leaves))
        grads["b"] = model.pack_leaf_grads(ad.backward(b, binding.leaves))
    return out, grads


def _boundary_sums(model, benchmark, bc_points, bc_comps, bc_targets):
    binding = model.bind(traced=True)
    jb = model.jets(bc_points, 0, binding)
    picked = ad.gather_rows(jb.value, bc_comps)
    bc2 = ad.sum_all(ad.square(ad.sub(picked, bc_targets)))
    return float(bc2.value), model.pack_leaf_grads(ad.backward(bc2, binding.leaves))


def loss_and_grad(model: Model, benchmark: Benchmark, schedule: TrainingSchedule,
                  state: StrategyState, res_points, bc_batch, iteration, stage):
    """Composite loss and its gradient over the full parameter vector.

    Chunked over the residual batch (fixed chunk size, ascending reduction
    order); the chunk sums are combined on a small tape so strategy
    couplings (adaptive weights, the normalized gradient term, clipping)
    keep exact derivatives.
    """
    n = len(res_points)
    strat = state.name
    lam = gpinn_coefficient(iteration) if (strat == "gpinn" and stage == "adam") else 0.0
    need_gpinn = lam > 0.0

    source, source_grad = benchmark.source(res_points, with_gradient=need_gpinn)

    chunks = [(i, res_points[i:i + CHUNK]) for i in range(0, n, CHUNK)]

    def src_slice(i, arr_list):
        return [a[i:i + CHUNK] for a in arr_list]

    def run_chunk(item):
        i, pts = item
        src = src_slice(i, source)
        sgrad = None
        if need_gpinn:
            sgrad = [src_slice(i, per_axis) for per_axis in source_grad]
        return _residual_chunk(model, benchmark, pts, src, need_gpinn, sgrad)

    if schedule.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=schedule.workers) as pool:
            results = list(pool.map(run_chunk, chunks))
    else:
        results = [run_chunk(c) for c in chunks]

    r2_sum = 0.0
    a_sum = b_sum = 0.0
    g_r2 = np.zeros(model.n_params)
    g_a = np.zeros(model.n_params)
    g_b = np.zeros(model.n_params)
    for out, grads in results:          # ascending chunk order
        r2_sum += out["r2"]
        g_r2 += grads["r2"]
        if need_gpinn:
            a_sum += out["a"]
            b_sum += out["b"]
            g_a += grads["a"]
            g_b += grads["b"]

    bc_points, bc_comps, bc_targets = bc_batch
    m = len(bc_points)
    bc_sum, g_bc = _boundary_sums(model, benchmark, bc_points, bc_comps, bc_targets)

    # combine partial sums on a small tape; leaves give the chain-rule
    # coefficients for each accumulated gradient
    r2_leaf = ad.leaf(r2_sum)
    bc_leaf = ad.leaf(bc_sum)
    a_leaf = ad.leaf(a_sum)
    b_leaf = ad.leaf(b_sum)
    map_leaf = ad.leaf(model.params[model.mapping_slice()])
    combine_leaves = [r2_leaf, bc_leaf, a_leaf, b_leaf, map_leaf]

    mean_r2 = ad.div(r2_leaf, float(n))
    mean_bc = ad.div(bc_leaf, float(m))

    sa_vals = (1.0, schedule.bc_weight)
    if strat == "sa":
        if stage == "adam":
            lw = ad.leaf(model.params[model.extra_slice("sa_log_weights")])
            combine_leaves.append(lw)
            w_res = ad.clip(ad.exp(ad.index_axis(lw, 0, 0)), *SA_WEIGHT_CLIP)
            w_bc = ad.clip(ad.exp(ad.index_axis(lw, 0, 1)), *SA_WEIGHT_CLIP)
            sa_vals = (float(w_res.value), float(w_bc.value))
            loss = ad.add(ad.mul(w_res, mean_r2), ad.mul(w_bc, mean_bc))
        else:
            w_res, w_bc = state.sa_frozen
            sa_vals = (w_res, w_bc)
            loss = ad.add(ad.mul(w_res, mean_r2), ad.mul(w_bc, mean_bc))
    else:
        loss = ad.add(mean_r2, ad.mul(schedule.bc_weight, mean_bc))

    penalty = model.mapping.degeneracy_penalty(map_leaf)
    loss = ad.add(loss, ad.mul(schedule.mapping_reg_coeff, penalty))

    ratio_val = 0.0
    if need_gpinn:
        ratio = ad.div(ad.div(a_leaf, float(n)),
                       ad.add(ad.div(b_leaf, float(n)), GPINN_EPS_DEN))
        ratio_val = float(ratio.value)
        loss = ad.add(loss, ad.mul(lam, ad.clip(ratio, None, GPINN_CLIP)))

    seeds = ad.backward(loss, combine_leaves)
    grad = (float(seeds[0]) * g_r2 + float(seeds[1]) * g_bc
            + float(seeds[2]) * g_a + float(seeds[3]) * g_b)
    grad[model.mapping_slice()] += seeds[4]
    if strat == "sa" and stage == "adam":
        grad[model.extra_slice("sa_log_weights")] += seeds[5]

    if strat == "sa":
        sa, sb = sa_vals
    elif strat == "gpinn":
        sa = lam * min(ratio_val, GPINN_CLIP) if need_gpinn else 0.0
        sb = ratio_val
    elif strat == "rar":
        sa = float(0 if state.rar_pool is None else len(state.rar_pool))
        sb = 0.0
    else:
        sa, sb = 0.0, 0.0
    record = LossRecord(float(loss.value), r2_sum / n, bc_sum / m,
                        float(penalty.value), sa, sb)
    if not np.isfinite(record.total):
        raise DivergenceError(f"non-finite loss: {record.components()}")
    return record, grad


def residual_magnitude(model, benchmark, points):
    """Pointwise residual norm (over components), untraced."""
    jb = model.jets(points, order=2)
    total = None
    for comp in benchmark.residual(jb, points):
        sq = ad.value_of(comp) ** 2
        total = sq if total is None else total + sq
    return np.sqrt(total)


# ---------------------------------------------------------------------------
# optimizers

class Adam:
    def __init__(self, n, lr, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params, grad, mask, ascent=None):
        """One update on the masked coordinates; `ascent` marks entries
        optimized by gradient ascent (adaptive loss weights)."""
        g = np.where(mask, grad, 0.0)
        if ascent is not None:
            g = np.where(ascent, -g, g)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * g
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * g * g
        mhat = self.m / (1.0 - self.beta1**self.t)
        vhat = self.v / (1.0 - self.beta2**self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _two_loop(g, s_list, y_list, rho_list):
    q = g.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
        a = rho * s.dot(q)
        alphas.append(a)
        q -= a * y
    if s_list:
        gamma = s_list[-1].dot(y_list[-1]) / y_list[-1].dot(y_list[-1])
        q *= gamma
    for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
        beta = rho * y.dot(q)
        q += (a - beta) * s
    return q


def _quad_interp(a_lo, f_lo, g_lo, a_hi, f_hi):
    denom = 2.0 * (f_hi - f_lo - g_lo * (a_hi - a_lo))
    if denom == 0.0:
        return 0.5 * (a_lo + a_hi)
    t = -g_lo * (a_hi - a_lo) ** 2 / denom
    return a_lo + t


def strong_wolfe(phi, f0, g0, alpha_init=1.0, c1=WOLFE_C1, c2=WOLFE_C2,
                 max_evals=25):
    """Bracket-and-zoom line search enforcing the strong Wolfe conditions.

    phi(alpha) -> (f, dphi, payload).  Returns (alpha, payload) or (None,
    None) when no acceptable step was found (a normal stage terminator).
    """
    evals = 0

    def take(alpha):
        nonlocal evals
        evals += 1
        return phi(alpha)

    def zoom(a_lo, f_lo, g_lo, a_hi, f_hi):
        nonlocal evals
        while evals < max_evals:
            a = _quad_interp(a_lo, f_lo, g_lo, a_hi, f_hi)
            lo, hi = min(a_lo, a_hi), max(a_lo, a_hi)
            width = hi - lo
            if not np.isfinite(a) or a <= lo + 0.1 * width or a >= hi - 0.1 * width:
                a = 0.5 * (a_lo + a_hi)
            f, df, payload = take(a)
            if f > f0 + c1 * a * g0 or f >= f_lo:
                a_hi, f_hi = a, f
            else:
                if abs(df) <= -c2 * g0:
                    return a, payload
                if df * (a_hi - a_lo) >= 0.0:
                    a_hi, f_hi = a_lo, f_lo
                a_lo, f_lo, g_lo = a, f, df
            if abs(a_hi - a_lo) < 1e-16:
                return None, None
        return None, None

    a_prev, f_prev, g_prev = 0.0, f0, g0
    a = alpha_init
    first = True
    while evals < max_evals:
        f, df, payload = take(a)
        if not np.isfinite(f):
            a = 0.5 * (a_prev + a)  # shrink back toward the last good point
            continue
        if f > f0 + c1 * a * g0 or (not first and f >= f_prev):
            return zoom(a_prev, f_prev, g_prev, a, f)
        if abs(df) <= -c2 * g0:
            return a, payload
        if df >= 0.0:
            return zoom(a, f, df, a_prev, f_prev)
        a_prev, f_prev, g_prev = a, f, df
        a = 2.0 * a
        first = False
    return None, None


@dataclass
class LbfgsResult:
    params: np.ndarray
    loss: float
    iterations: int
    stop_reason: str


def lbfgs_minimize(objective, x0, max_steps, history=LBFGS_HISTORY,
                   init_step=1.0, grad_tol=GRAD_TOL, callback=None):
    """L-BFGS with two-loop recursion and strong Wolfe line search.

    `objective(x) -> (f, grad, payload)`; payload rides along to the
    callback so training can log loss components without recomputing.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    f, g, payload = objective(x)
    s_list, y_list, rho_list = [], [], []
    reason = "step_limit"
    k = 0
    for k in range(1, max_steps + 1):
        if np.max(np.abs(g)) < grad_tol:
            reason = "gradient_tolerance"
            k -= 1
            break
        d = -_two_loop(g, s_list, y_list, rho_list)
        dg = d.dot(g)
        if dg >= 0.0:                   # curvature gone bad; restart on steepest descent
            d = -g
            dg = d.dot(g)
            s_list, y_list, rho_list = [], [], []

        def phi(alpha, x=x, d=d):
            fa, ga, pa = objective(x + alpha * d)
            return fa, ga.dot(d), (fa, ga, pa)

        alpha, hit = strong_wolfe(phi, f, dg, alpha_init=init_step)
        if alpha is None:
            reason = "line_search_failure"
            k -= 1
            break
        f_new, g_new, payload = hit
        s = alpha * d
        y = g_new - g
        sy = s.dot(y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > history:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)
        x = x + s
        f, g = f_new, g_new
        if callback is not None:
            callback(k, x, f, g, payload)
    return LbfgsResult(x, f, k, reason)


# ---------------------------------------------------------------------------
# stages

def _boundary_batch(benchmark, schedule, rng):
    n = 2 if benchmark.dim == 1 else schedule.bc_points
    return benchmark.boundary_batch(n, rng)


def _check_divergence(record):
    if not np.isfinite(record.total) or record.total > DIVERGENCE_LIMIT:
        raise DivergenceError(f"training diverged: {record.components()}")


def run_adam_stage(model: Model, benchmark: Benchmark, schedule: TrainingSchedule,
                   state: StrategyState, rng, log, rel_l2_fn=None,
                   hook=None, rel_l2_every=100):
    """First-stage optimization; returns the (mutated) model.

    `log` collects LogRow entries; `rel_l2_fn(model)` supplies the test
    metric every `rel_l2_every` steps; `hook(stage, iteration, model)`
    fires every RAR_PERIOD steps for diagnostics recording.
    """
    if schedule.adam_epochs == 0:
        return model
    opt = Adam(model.n_params, schedule.adam_lr)
    mask = model.trainable_mask
    ascent = None
    if state.name == "sa":
        ascent = np.zeros(model.n_params, dtype=bool)
        ascent[model.extra_slice("sa_log_weights")] = True
    if state.name == "rar" and state.rar_pool is None:
        state.rar_pool = sample_collocation(benchmark.lo, benchmark.hi,
                                            schedule.adam_points, rng)
    for it in range(1, schedule.adam_epochs + 1):
        if state.name == "rar":
            pick = rng.integers(0, len(state.rar_pool), size=schedule.adam_points)
            pts = state.rar_pool[pick]
        else:
            pts = sample_collocation(benchmark.lo, benchmark.hi,
                                     schedule.adam_points, rng)
        bc_batch = _boundary_batch(benchmark, schedule, rng)
        record, grad = loss_and_grad(model, benchmark, schedule, state, pts,
                                     bc_batch, it, "adam")
        _check_divergence(record)
        model.params = opt.step(model.params, grad, mask, ascent)
        rel = None
        if rel_l2_fn is not None and (it % rel_l2_every == 0 or it == schedule.adam_epochs):
            rel = rel_l2_fn(model)
        log.append(LogRow(it, "adam", record, rel))
        if it % RAR_PERIOD == 0:
            if state.name == "rar" and len(state.rar_pool) < RAR_CAPACITY:
                cands = sample_collocation(benchmark.lo, benchmark.hi,
                                           RAR_CANDIDATES, rng)
                mags = residual_magnitude(model, benchmark, cands)
                top = np.argsort(-mags, kind="stable")[:RAR_TOP]
                room = RAR_CAPACITY - len(state.rar_pool)
                state.rar_pool = np.concatenate([state.rar_pool, cands[top[:room]]])
            if hook is not None:
                hook("adam", it, model)
    return model


def run_lbfgs_stage(model: Model, benchmark: Benchmark, schedule: TrainingSchedule,
                    state: StrategyState, rng, log, rel_l2_fn=None, hook=None):
    """Second-stage optimization on a fixed batch; strategies freeze."""
    if schedule.lbfgs_steps == 0:
        return model
    if state.name == "sa" and state.sa_frozen is None:
        lw = model.params[model.extra_slice("sa_log_weights")]
        state.sa_frozen = tuple(np.clip(np.exp(lw), *SA_WEIGHT_CLIP))
    if state.name == "rar" and state.rar_pool is not None:
        pick = rng.integers(0, len(state.rar_pool), size=schedule.lbfgs_points)
        pts = state.rar_pool[pick]
    else:
        pts = sample_collocation(benchmark.lo, benchmark.hi,
                                 schedule.lbfgs_points, rng)
    bc_batch = _boundary_batch(benchmark, schedule, rng)
    mask = model.trainable_mask.copy()
    if state.name == "sa":
        mask[model.extra_slice("sa_log_weights")] = False

    offset = schedule.adam_epochs

    def objective(theta):
        record, grad = loss_and_grad(model.with_params(theta), benchmark, schedule,
                                     state, pts, bc_batch, offset, "lbfgs")
        return record.total, np.where(mask, grad, 0.0), record

    def callback(k, x, fval, g, record):
        _check_divergence(record)
        rel = rel_l2_fn(model.with_params(x)) if rel_l2_fn is not None else None
        log.append(LogRow(offset + k, "lbfgs", record, rel))

    result = lbfgs_minimize(objective, model.params, schedule.lbfgs_steps,
                            init_step=schedule.lbfgs_lr, callback=callback)
    model.params = result.params
    if hook is not None:
        hook("lbfgs", offset + result.iterations, model)
    return model
