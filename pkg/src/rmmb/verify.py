"""Self-contained verification suites behind the `rmmb verify` command.

Eight suites cross-check the library against independent oracles: exact
hand-computable values, a definitional variance sum, Monte Carlo estimates,
finite differences, and integer byte accounting.  Each check yields a
CheckResult; the CLI emits them as JSONL and fails the run if any check fails.

All randomness comes from the package's own counter-based streams, so results
are reproducible across platforms and numpy versions for a given config.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linear import LinearLayer, backward, forward, stored_activation_bytes
from .prng import RngState, derive_seed
from .sketch import GAUSSIAN, RADEMACHER, SketchSpec, compressed_dim, project, sample_sketch
from .trainer import MlpModel, init_model, softmax_cross_entropy
from .variance import check_bound, empirical_rmm_variance, rmm_variance, sgd_variance


@dataclass(frozen=True)
class CheckResult:
    name: str
    expected: float
    observed: float
    tolerance: float
    passed: bool

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "expected": self.expected,
            "observed": self.observed,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


def _result(name: str, observed: float, tolerance: float, expected: float = 0.0) -> CheckResult:
    return CheckResult(
        name=name,
        expected=expected,
        observed=float(observed),
        tolerance=float(tolerance),
        passed=bool(observed <= tolerance),
    )


def _rand_matrix(state: RngState, rows: int, cols: int) -> np.ndarray:
    return state.normal(rows * cols).reshape(rows, cols)


def _randint(state: RngState, lo: int, hi: int) -> int:
    """Uniform-ish integer in [lo, hi] (modulo bias is irrelevant here)."""
    return lo + int(state.raw(1)[0] % np.uint64(hi - lo + 1))


def check_counterexample(cfg: dict, seed: int) -> CheckResult:
    """Exact values for the aligned-but-orthogonal 2-row construction.

    X = [[1,0],[-e,0]], Y = [[1,0],[1/e,0]] has X^T Y = 0, so (B-1) * sgd
    variance is exactly 4 and b_proj * rmm variance is exactly
    2 + e^2 + e^-2 for any e > 0.
    """
    worst = 0.0
    for eps in cfg["epsilons"]:
        x = np.array([[1.0, 0.0], [-eps, 0.0]])
        y = np.array([[1.0, 0.0], [1.0 / eps, 0.0]])
        sgd_scaled = (2 - 1) * sgd_variance(x, y)
        rmm_scaled = 1 * rmm_variance(x, y, 1)
        target = 2.0 + eps * eps + 1.0 / (eps * eps)
        worst = max(worst, abs(sgd_scaled - 4.0) / 4.0, abs(rmm_scaled - target) / target)
    return _result("counterexample_exactness", worst, cfg["tolerance"])


def _sgd_variance_definitional(x: np.ndarray, y: np.ndarray) -> float:
    """Independent oracle: average squared deviation of scaled per-row outer
    products from the full product, straight from the definition."""
    batch = x.shape[0]
    exact = x.T @ y
    total = 0.0
    for k in range(batch):
        dev = batch * np.outer(x[k], y[k]) - exact
        total += float((dev * dev).sum())
    return total / (batch * (batch - 1))


def check_sgd_oracle(cfg: dict, seed: int) -> CheckResult:
    state = RngState(derive_seed(seed, 1))
    worst = 0.0
    for _ in range(cfg["cases"]):
        b = _randint(state, 2, 32)
        n = _randint(state, 1, 16)
        m = _randint(state, 1, 16)
        x = _rand_matrix(state, b, n)
        y = _rand_matrix(state, b, m)
        closed = sgd_variance(x, y)
        oracle = _sgd_variance_definitional(x, y)
        denom = max(abs(oracle), 1e-300)
        worst = max(worst, abs(closed - oracle) / denom)
    return _result("sgd_variance_oracle", worst, cfg["tolerance"])


def check_rmm_monte_carlo(cfg: dict, seed: int) -> CheckResult:
    """Gaussian-sketch closed form vs a Monte Carlo measurement of the same
    expectation, across random shapes."""
    state = RngState(derive_seed(seed, 2))
    worst = 0.0
    for i in range(cfg["combos"]):
        b = _randint(state, 2, 32)
        n = _randint(state, 1, 8)
        m = _randint(state, 1, 8)
        b_proj = _randint(state, 1, b)
        x = _rand_matrix(state, b, n)
        y = _rand_matrix(state, b, m)
        spec = SketchSpec(
            distribution=GAUSSIAN, rho=1.0, bproj_min=b_proj, bproj_max=b_proj, seed=0
        )
        closed = rmm_variance(x, y, b_proj)
        empirical, _ = empirical_rmm_variance(x, y, spec, cfg["samples"], derive_seed(seed, 2, i))
        worst = max(worst, abs(empirical - closed) / closed)
    return _result("rmm_variance_monte_carlo", worst, cfg["tolerance"])


def check_unbiasedness(cfg: dict, seed: int) -> CheckResult:
    """Monte Carlo mean of the randomized weight gradient vs the exact one.

    Runs the real forward/backward path with a fresh sketch per step; the
    observed value is the worst entrywise deviation in standard-error units.
    """
    state = RngState(derive_seed(seed, 3))
    n_out, n_in, batch = 16, 8, 32
    w = _rand_matrix(state, n_out, n_in)
    x = _rand_matrix(state, batch, n_in)
    dy = _rand_matrix(state, batch, n_out)
    spec = SketchSpec(distribution=GAUSSIAN, rho=0.5, seed=derive_seed(seed, 3, 1))
    layer = LinearLayer(w=w, b=np.zeros(n_out), sketch=spec, layer_id=0)
    exact = dy.T @ x
    n = cfg["samples"]
    total = np.zeros_like(exact)
    total_sq = np.zeros_like(exact)
    for step in range(n):
        _, ctx = forward(layer, x, step=step)
        dw = backward(layer, ctx, dy).dw
        total += dw
        total_sq += dw * dw
    mean = total / n
    var = np.maximum((total_sq - n * mean * mean) / (n - 1), 0.0)
    stderr = np.sqrt(var / n)
    sigmas = np.abs(mean - exact) / stderr
    return _result("weight_gradient_unbiasedness", float(sigmas.max()), cfg["tolerance_sigma"])


def check_bound_sweep(cfg: dict, seed: int) -> CheckResult:
    """The variance-ratio inequality over random draws: zero violations expected."""
    state = RngState(derive_seed(seed, 4))
    violations = 0
    applicable = 0
    for _ in range(cfg["draws"]):
        b = _randint(state, 4, 64)
        n = _randint(state, 1, 16)
        m = _randint(state, 1, 16)
        b_proj = _randint(state, 1, b)
        x = _rand_matrix(state, b, n)
        y = _rand_matrix(state, b, m)
        report = check_bound(x, y, b_proj)
        if report.applicable:
            applicable += 1
            if report.violation:
                violations += 1
    if applicable == 0:
        return _result("variance_ratio_bound_sweep", float("inf"), 0.0)
    return _result("variance_ratio_bound_sweep", float(violations), 0.0)


def check_rematerialization(cfg: dict, seed: int) -> CheckResult:
    """Backward twice from one context and sketch regeneration are bitwise stable."""
    state = RngState(derive_seed(seed, 5))
    worst = 0.0
    exact_everywhere = True
    for distribution in (GAUSSIAN, RADEMACHER):
        batch, n_in, n_out = 16, 8, 4
        w = _rand_matrix(state, n_out, n_in)
        x = _rand_matrix(state, batch, n_in)
        dy = _rand_matrix(state, batch, n_out)
        spec = SketchSpec(distribution=distribution, rho=0.5, seed=derive_seed(seed, 5, 1))
        layer = LinearLayer(w=w, b=np.zeros(n_out), sketch=spec, layer_id=0)
        _, ctx = forward(layer, x, step=3)
        g_first = backward(layer, ctx, dy)
        g_second = backward(layer, ctx, dy)
        s_first = sample_sketch(ctx.handle)
        s_second = sample_sketch(ctx.handle)
        checks = [
            (g_first.dw, g_second.dw),
            (s_first, s_second),
            (project(x, s_first), ctx.x_proj),
        ]
        for a, bmat in checks:
            if not np.array_equal(a, bmat):
                exact_everywhere = False
                worst = max(worst, float(np.abs(a - bmat).max()))
    observed = worst if not exact_everywhere else 0.0
    return _result("rematerialization_determinism", observed, 0.0)


def check_fd_input_gradient(cfg: dict, seed: int) -> CheckResult:
    """dX against central finite differences, both storage modes.

    The map x -> sum(forward(x) * G) is linear, so central differences are
    exact up to float round-off; every input entry is checked.
    """
    state = RngState(derive_seed(seed, 6))
    batch, n_in, n_out = 6, 5, 4
    w = _rand_matrix(state, n_out, n_in)
    x = _rand_matrix(state, batch, n_in)
    g = _rand_matrix(state, batch, n_out)
    h = cfg["step_size"]
    worst = 0.0
    for spec in (None, SketchSpec(distribution=GAUSSIAN, rho=0.5, seed=derive_seed(seed, 6, 1))):
        layer = LinearLayer(w=w, b=np.zeros(n_out), sketch=spec, layer_id=0)
        _, ctx = forward(layer, x, step=0)
        dx = backward(layer, ctx, g).dx
        for i in range(batch):
            for j in range(n_in):
                xp = x.copy()
                xp[i, j] += h
                xm = x.copy()
                xm[i, j] -= h
                lp = float((forward(layer, xp, step=0)[0] * g).sum())
                lm = float((forward(layer, xm, step=0)[0] * g).sum())
                fd = (lp - lm) / (2.0 * h)
                worst = max(worst, abs(fd - dx[i, j]) / abs(dx[i, j]))
    return _result("fd_input_gradient", worst, cfg["input_tolerance"])


def _model_loss(model: MlpModel, x: np.ndarray, labels: np.ndarray) -> float:
    hidden = np.maximum(x @ model.layer1.w.T + model.layer1.b, 0.0)
    logits = hidden @ model.layer2.w.T + model.layer2.b
    loss, _ = softmax_cross_entropy(logits, labels)
    return loss


def check_fd_weight_chain(cfg: dict, seed: int) -> CheckResult:
    """Full-model chain-rule weight gradients vs finite differences of the loss.

    Exact mode only; a sampled subset of weight entries across both layers.
    """
    state = RngState(derive_seed(seed, 7))
    batch, dim, hidden_dim, classes = 12, 4, 6, 3
    model = init_model(dim, hidden_dim, classes, derive_seed(seed, 7, 1))
    x = _rand_matrix(state, batch, dim)
    labels = np.array([_randint(state, 0, classes - 1) for _ in range(batch)], dtype=np.int64)

    pre, ctx1 = forward(model.layer1, x)
    hidden = np.maximum(pre, 0.0)
    logits, ctx2 = forward(model.layer2, hidden)
    _, dlogits = softmax_cross_entropy(logits, labels)
    g2 = backward(model.layer2, ctx2, dlogits)
    dpre = g2.dx * (pre > 0.0)
    g1 = backward(model.layer1, ctx1, dpre)
    grads = [g1.dw, g2.dw]
    layers = [model.layer1, model.layer2]

    h = cfg["step_size"]
    worst = 0.0
    for _ in range(cfg["weight_entries"]):
        which = _randint(state, 0, 1)
        layer = layers[which]
        i = _randint(state, 0, layer.n_out - 1)
        j = _randint(state, 0, layer.n_in - 1)
        original = layer.w[i, j]
        layer.w[i, j] = original + h
        lp = _model_loss(model, x, labels)
        layer.w[i, j] = original - h
        lm = _model_loss(model, x, labels)
        layer.w[i, j] = original
        fd = (lp - lm) / (2.0 * h)
        analytic = grads[which][i, j]
        worst = max(worst, abs(fd - analytic) / abs(analytic))
    return _result("fd_weight_chain", worst, cfg["weight_tolerance"])


def check_memory_accounting(cfg: dict, seed: int) -> CheckResult:
    """Stored bytes are exactly 8 * b_proj * n_in on a (B, rho) grid.

    Also pins the rho=0.1, B=64 point: b_proj 6, so the activation store
    shrinks by 64/6 (~10.7x).
    """
    state = RngState(derive_seed(seed, 8))
    n_in, n_out = 16, 8
    w = _rand_matrix(state, n_out, n_in)
    deviation = 0
    for batch in (4, 16, 64, 128):
        x = _rand_matrix(state, batch, n_in)
        exact_layer = LinearLayer(w=w, b=np.zeros(n_out), sketch=None, layer_id=0)
        _, ctx = forward(exact_layer, x)
        deviation = max(deviation, abs(stored_activation_bytes(ctx) - 8 * batch * n_in))
        for rho in (0.1, 0.25, 0.5, 1.0):
            spec = SketchSpec(distribution=GAUSSIAN, rho=rho, seed=seed)
            layer = LinearLayer(w=w, b=np.zeros(n_out), sketch=spec, layer_id=0)
            _, ctx = forward(layer, x)
            b_proj = compressed_dim(batch, spec)
            deviation = max(deviation, abs(stored_activation_bytes(ctx) - 8 * b_proj * n_in))
    spec = SketchSpec(distribution=GAUSSIAN, rho=0.1, seed=seed)
    deviation = max(deviation, abs(compressed_dim(64, spec) - 6))
    return _result("memory_accounting", float(deviation), 0.0)


def run_verify(cfg: dict) -> list[CheckResult]:
    """Run all suites in order; returns one CheckResult per check."""
    seed = cfg["seed"]
    results = []
    results.append(check_counterexample(cfg["counterexample"], seed))
    results.append(check_sgd_oracle(cfg["sgd_oracle"], seed))
    results.append(check_rmm_monte_carlo(cfg["rmm_monte_carlo"], seed))
    results.append(check_unbiasedness(cfg["unbiasedness"], seed))
    results.append(check_bound_sweep(cfg["bound_sweep"], seed))
    results.append(check_rematerialization(cfg["rematerialization"], seed))
    results.append(check_fd_input_gradient(cfg["finite_differences"], seed))
    results.append(check_fd_weight_chain(cfg["finite_differences"], seed))
    results.append(check_memory_accounting(cfg["memory_accounting"], seed))
    return results
