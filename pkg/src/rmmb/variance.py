"""Gradient-noise estimators for minibatch SGD and sketch-compressed products.

For a batch of activations X (B x N) and output gradients Y (B x M), the exact
weight-gradient contribution is X^T Y.  Two noise sources are quantified here:

* ``sgd_variance``: the sampling noise of a size-B minibatch itself, i.e. the
  expected squared Frobenius deviation of B * x_k y_k^T (a single random row,
  scaled) from X^T Y, averaged over rows and normalized per draw of B rows.
* ``rmm_variance``: the extra noise introduced by replacing X^T Y with the
  sketch estimate X^T S S^T Y for a Gaussian sketch S with ``b_proj`` columns.

Writing P = |X|_F^2 |Y|_F^2, Q = |X^T Y|_F^2, the Gaussian sketch estimator
has exact variance (P + Q) / b_proj; ``empirical_rmm_variance`` provides an
independent Monte Carlo measurement of the same quantity for either sketch
distribution.  Rademacher sketches have strictly smaller variance, so for them
the closed form is an upper bound and only the measured value is meaningful.

``check_bound`` compares the two noise scales: with alpha = Q / P in (0, 1],
it tests (b_proj / (B - 1)) * rmm_variance / sgd_variance <= (alpha + 1) /
alpha and flags violations rather than asserting, because adversarial inputs
exist where the inequality fails even though it holds across broad random
families.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .linalg import Matrix, ShapeError, frobenius_norm_sq
from .prng import derive_seed_block, normal_block, sign_block
from .sketch import GAUSSIAN, SketchSpec, compressed_dim

# Samples per vectorized Monte Carlo batch; fixed so results are independent
# of memory pressure or caller chunking choices.
_MC_CHUNK = 512


def _check_pair(x: Matrix, y: Matrix) -> int:
    if x.ndim != 2 or y.ndim != 2:
        raise ShapeError("expected 2-D activation and gradient matrices")
    if x.shape[0] != y.shape[0]:
        raise ShapeError(
            f"row counts differ: activations {x.shape[0]}, gradients {y.shape[0]}"
        )
    return x.shape[0]


def sgd_variance(x: Matrix, y: Matrix) -> float:
    """Minibatch sampling variance of the weight-gradient estimate.

    Closed form (B * sum_k |x_k|^2 |y_k|^2 - |X^T Y|_F^2) / (B - 1); equals
    the definitional average (1 / (B (B-1))) sum_k |B x_k y_k^T - X^T Y|_F^2.
    Requires B >= 2.
    """
    batch = _check_pair(x, y)
    if batch < 2:
        raise ValueError(f"sgd_variance needs a batch of at least 2 rows, got {batch}")
    row_sq_x = np.einsum("ij,ij->i", x, x)
    row_sq_y = np.einsum("ij,ij->i", y, y)
    t = float(row_sq_x @ row_sq_y)
    q = frobenius_norm_sq(x.T @ y)
    # Mathematically nonnegative; clamp float cancellation residue.
    return max((batch * t - q) / (batch - 1), 0.0)


def rmm_variance(x: Matrix, y: Matrix, b_proj: int) -> float:
    """Gaussian-sketch variance of the compressed product X^T S S^T Y.

    Exact expectation of |X^T S S^T Y - X^T Y|_F^2 over S with iid normal
    entries scaled by 1/sqrt(b_proj):
    (|X|_F^2 |Y|_F^2 + |X^T Y|_F^2) / b_proj.
    """
    _check_pair(x, y)
    if b_proj < 1:
        raise ValueError(f"b_proj must be >= 1, got {b_proj}")
    p = frobenius_norm_sq(x) * frobenius_norm_sq(y)
    q = frobenius_norm_sq(x.T @ y)
    return (p + q) / b_proj


def correlation_ratio(x: Matrix, y: Matrix) -> float:
    """Alignment ratio alpha = |X^T Y|_F^2 / (|X|_F^2 |Y|_F^2), in [0, 1].

    Raises ValueError when either matrix is zero (the ratio is undefined).
    """
    _check_pair(x, y)
    p = frobenius_norm_sq(x) * frobenius_norm_sq(y)
    if p == 0.0:
        raise ValueError("correlation ratio is undefined for zero matrices")
    q = frobenius_norm_sq(x.T @ y)
    return min(max(q / p, 0.0), 1.0)


@dataclass(frozen=True)
class VarianceReport:
    """One comparison of minibatch noise vs sketch noise.

    ``lhs`` and ``bound`` are None when the ratio test does not apply (zero
    inputs or zero minibatch variance); ``violation`` is False in that case.
    Sketch-free baselines carry only the minibatch fields: ``b_proj`` and
    ``d_rmm_sq`` are None and are omitted from the JSON form.
    """

    batch: int
    b_proj: int | None
    d_sgd_sq: float
    d_rmm_sq: float | None
    alpha: float | None
    lhs: float | None
    bound: float | None
    violation: bool | None
    layer_id: int | None = None
    step: int | None = None

    @property
    def applicable(self) -> bool:
        return self.lhs is not None

    def to_json_dict(self) -> dict:
        record = {
            "step": self.step,
            "layer_id": self.layer_id,
            "B": self.batch,
            "B_proj": self.b_proj,
            "d_sgd_sq": self.d_sgd_sq,
            "d_rmm_sq": self.d_rmm_sq,
            "alpha": self.alpha,
            "lhs": self.lhs,
            "bound": self.bound,
            "violation": self.violation,
        }
        return {k: v for k, v in record.items() if v is not None}


def sgd_report(
    x: Matrix,
    y: Matrix,
    layer_id: int | None = None,
    step: int | None = None,
) -> VarianceReport:
    """Minibatch-noise-only report for sketch-free baselines.

    Sketch fields (b_proj, d_rmm_sq, lhs, bound, violation) are left unset.
    """
    batch = _check_pair(x, y)
    if batch < 2:
        raise ValueError(f"sgd_report needs a batch of at least 2 rows, got {batch}")
    p = frobenius_norm_sq(x) * frobenius_norm_sq(y)
    alpha = None if p == 0.0 else min(max(frobenius_norm_sq(x.T @ y) / p, 0.0), 1.0)
    return VarianceReport(
        batch=batch,
        b_proj=None,
        d_sgd_sq=sgd_variance(x, y),
        d_rmm_sq=None,
        alpha=alpha,
        lhs=None,
        bound=None,
        violation=None,
        layer_id=layer_id,
        step=step,
    )


def check_bound(
    x: Matrix,
    y: Matrix,
    b_proj: int,
    layer_id: int | None = None,
    step: int | None = None,
) -> VarianceReport:
    """Compare sketch noise against minibatch noise for one (X, Y) pair.

    Tolerates degenerate inputs: when X or Y is zero, or the minibatch
    variance vanishes, the ratio test is skipped and reported as
    non-applicable instead of raising.
    """
    batch = _check_pair(x, y)
    if batch < 2:
        raise ValueError(f"check_bound needs a batch of at least 2 rows, got {batch}")
    if b_proj < 1:
        raise ValueError(f"b_proj must be >= 1, got {b_proj}")
    d_sgd = sgd_variance(x, y)
    d_rmm = rmm_variance(x, y, b_proj)
    p = frobenius_norm_sq(x) * frobenius_norm_sq(y)
    if p == 0.0:
        alpha: float | None = None
    else:
        alpha = min(max(frobenius_norm_sq(x.T @ y) / p, 0.0), 1.0)
    if alpha is not None and alpha > 0.0 and d_sgd > 0.0:
        lhs: float | None = (b_proj / (batch - 1)) * d_rmm / d_sgd
        bound: float | None = (alpha + 1.0) / alpha
        violation = lhs > bound
    else:
        lhs = None
        bound = None
        violation = False
    return VarianceReport(
        batch=batch,
        b_proj=b_proj,
        d_sgd_sq=d_sgd,
        d_rmm_sq=d_rmm,
        alpha=alpha,
        lhs=lhs,
        bound=bound,
        violation=violation,
        layer_id=layer_id,
        step=step,
    )


def empirical_rmm_variance(
    x: Matrix,
    y: Matrix,
    spec: SketchSpec,
    n_samples: int,
    seed: int,
) -> tuple[float, float]:
    """Monte Carlo estimate of the sketch-induced variance, with standard error.

    Draws ``n_samples`` independent sketches S (distribution and projected
    dimension taken from ``spec`` for this batch size), measures
    |X^T S S^T Y - X^T Y|_F^2 for each, and returns (mean, standard error of
    the mean).  Deterministic for a given seed: every sample's sketch comes
    from its own derived seed, independent of chunking.
    """
    batch = _check_pair(x, y)
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")
    b_proj = compressed_dim(batch, spec)
    exact = x.T @ y
    scale = 1.0 / math.sqrt(b_proj)
    total = 0.0
    total_sq = 0.0
    for start in range(0, n_samples, _MC_CHUNK):
        count = min(_MC_CHUNK, n_samples - start)
        seeds = derive_seed_block(seed, np.arange(start, start + count, dtype=np.uint64))
        if spec.distribution == GAUSSIAN:
            flat = normal_block(seeds, batch * b_proj)
        else:
            flat = sign_block(seeds, batch * b_proj)
        sketches = flat.reshape(count, batch, b_proj) * scale
        left = np.einsum("bn,cbk->cnk", x, sketches, optimize=True)
        right = np.einsum("cbk,bm->ckm", sketches, y, optimize=True)
        err = left @ right - exact
        vals = np.einsum("cnm,cnm->c", err, err, optimize=True)
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
    mean = total / n_samples
    var = max((total_sq - n_samples * mean * mean) / (n_samples - 1), 0.0)
    return mean, math.sqrt(var / n_samples)


def reports_to_jsonl(reports) -> str:
    """Serialize an iterable of VarianceReport to JSON Lines text."""
    return "\n".join(json.dumps(r.to_json_dict()) for r in reports)
