"""Memory and throughput benchmarks for the layer forward/backward path.

bench-memory reports the analytic stored-activation bytes per grid point plus
a tracemalloc peak measurement of the whole forward+backward path; the
analytic column is exact by construction, the measured one is informational.
bench-throughput times forward+backward rounds per second for exact vs
randomized modes; wall-clock numbers are hardware-dependent and are reported,
never asserted.
"""

from __future__ import annotations

import time
import tracemalloc

import numpy as np

from .linear import LinearLayer, backward, forward, stored_activation_bytes
from .prng import RngState, derive_seed
from .sketch import SketchSpec, compressed_dim


def _measure_peak_bytes(layer: LinearLayer, x: np.ndarray, dy: np.ndarray) -> int:
    tracemalloc.start()
    tracemalloc.reset_peak()
    out, ctx = forward(layer, x, step=0)
    grads = backward(layer, ctx, dy)
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    del out, grads
    return int(peak)


def bench_memory_records(cfg: dict) -> list[dict]:
    """Analytic stored bytes and measured peak per (B, n_in, rho) grid point."""
    state = RngState(derive_seed(cfg["seed"], 21))
    n_out = cfg["n_out"]
    records = []
    for batch in cfg["batch_sizes"]:
        for n_in in cfg["input_dims"]:
            w = state.normal(n_out * n_in).reshape(n_out, n_in)
            x = state.normal(batch * n_in).reshape(batch, n_in)
            dy = state.normal(batch * n_out).reshape(batch, n_out)
            exact_bytes = 8 * batch * n_in
            for rho in cfg["rhos"]:
                spec = SketchSpec(
                    distribution=cfg["distribution"], rho=rho, seed=cfg["seed"]
                )
                layer = LinearLayer(w=w, b=np.zeros(n_out), sketch=spec, layer_id=0)
                _, ctx = forward(layer, x, step=0)
                b_proj = compressed_dim(batch, spec)
                records.append(
                    {
                        "B": batch,
                        "n_in": n_in,
                        "rho": rho,
                        "B_proj": b_proj,
                        "stored_bytes": stored_activation_bytes(ctx),
                        "exact_bytes": exact_bytes,
                        "ratio": b_proj / batch,
                        "measured_peak_bytes": _measure_peak_bytes(layer, x, dy),
                    }
                )
    return records


def _time_rounds(layer: LinearLayer, x: np.ndarray, dy: np.ndarray, iters: int, warmup: int) -> float:
    for step in range(warmup):
        _, ctx = forward(layer, x, step=step)
        backward(layer, ctx, dy)
    start = time.perf_counter()
    for step in range(iters):
        _, ctx = forward(layer, x, step=warmup + step)
        backward(layer, ctx, dy)
    return time.perf_counter() - start


def bench_throughput_records(cfg: dict) -> list[dict]:
    """Forward+backward samples/sec, exact vs randomized, per batch size and rho."""
    state = RngState(derive_seed(cfg["seed"], 22))
    n_in, n_out = cfg["n_in"], cfg["n_out"]
    iters, warmup = cfg["iters"], cfg["warmup"]
    w = state.normal(n_out * n_in).reshape(n_out, n_in)
    records = []
    for batch in cfg["batch_sizes"]:
        x = state.normal(batch * n_in).reshape(batch, n_in)
        dy = state.normal(batch * n_out).reshape(batch, n_out)
        exact_layer = LinearLayer(w=w, b=np.zeros(n_out), sketch=None, layer_id=0)
        elapsed = _time_rounds(exact_layer, x, dy, iters, warmup)
        records.append(
            {
                "B": batch,
                "n_in": n_in,
                "n_out": n_out,
                "mode": "exact",
                "iters": iters,
                "samples_per_sec": batch * iters / elapsed,
            }
        )
        for rho in cfg["rhos"]:
            spec = SketchSpec(distribution=cfg["distribution"], rho=rho, seed=cfg["seed"])
            layer = LinearLayer(w=w, b=np.zeros(n_out), sketch=spec, layer_id=0)
            elapsed = _time_rounds(layer, x, dy, iters, warmup)
            records.append(
                {
                    "B": batch,
                    "n_in": n_in,
                    "n_out": n_out,
                    "mode": "randomized",
                    "rho": rho,
                    "B_proj": compressed_dim(batch, spec),
                    "iters": iters,
                    "samples_per_sec": batch * iters / elapsed,
                }
            )
    return records
