"""Layer forward/backward tests: exactness, unbiasedness, rematerialization,
memory accounting, and blob serialization."""

import weakref

import numpy as np
import pytest

from rmmb.linalg import ShapeError
from rmmb.linear import (
    IntegrityError,
    LinearLayer,
    SavedContext,
    backward,
    exact_weight_grad,
    forward,
    layer_from_bytes,
    layer_to_bytes,
    memory_ratio,
    stored_activation_bytes,
)
from rmmb.sketch import GAUSSIAN, RADEMACHER, SketchHandle, SketchSpec


def make_layer(n_out=3, n_in=5, sketch=None, seed=0):
    rng = np.random.default_rng(seed)
    return LinearLayer(
        w=rng.standard_normal((n_out, n_in)),
        b=rng.standard_normal(n_out),
        sketch=sketch,
        layer_id=0,
    )


def test_forward_identity_weights():
    layer = LinearLayer(w=np.eye(4), b=np.zeros(4))
    x = np.random.default_rng(1).standard_normal((6, 4))
    out, ctx = forward(layer, x)
    assert np.array_equal(out, x)
    assert ctx.x is x and not ctx.is_randomized


def test_forward_zero_weights_bias_broadcast():
    layer = LinearLayer(w=np.zeros((3, 2)), b=np.array([1.0, 2.0, 3.0]))
    out, _ = forward(layer, np.ones((5, 2)))
    assert np.array_equal(out, np.tile([1.0, 2.0, 3.0], (5, 1)))


def test_forward_output_identical_across_modes():
    spec = SketchSpec(distribution=GAUSSIAN, rho=0.5, seed=3)
    exact = make_layer(seed=2)
    randomized = make_layer(seed=2, sketch=spec)
    x = np.random.default_rng(3).standard_normal((8, 5))
    out_exact, _ = forward(exact, x, step=4)
    out_rand, ctx = forward(randomized, x, step=4)
    assert np.array_equal(out_exact, out_rand)
    assert ctx.is_randomized and ctx.x is None
    assert ctx.x_proj.shape == (4, 5)


def test_forward_shape_validation():
    layer = make_layer()
    with pytest.raises(ShapeError):
        forward(layer, np.zeros((4, 7)))
    with pytest.raises(ShapeError):
        forward(layer, np.zeros(5))


def test_backward_exact_matches_oracle():
    layer = make_layer(seed=4)
    rng = np.random.default_rng(5)
    x = rng.standard_normal((7, 5))
    dy = rng.standard_normal((7, 3))
    _, ctx = forward(layer, x)
    grads = backward(layer, ctx, dy)
    assert np.array_equal(grads.dw, exact_weight_grad(x, dy))
    assert np.array_equal(grads.dw, dy.T @ x)
    assert np.array_equal(grads.dx, dy @ layer.w)
    assert np.array_equal(grads.db, dy.sum(axis=0))


def test_backward_zero_grad_in_both_modes():
    for sketch in (None, SketchSpec(rho=0.5, seed=1)):
        layer = make_layer(sketch=sketch, seed=6)
        x = np.random.default_rng(7).standard_normal((6, 5))
        _, ctx = forward(layer, x)
        grads = backward(layer, ctx, np.zeros((6, 3)))
        assert np.array_equal(grads.dw, np.zeros((3, 5)))
        assert np.array_equal(grads.dx, np.zeros((6, 5)))
        assert np.array_equal(grads.db, np.zeros(3))


def test_backward_dx_and_db_exact_in_randomized_mode():
    spec = SketchSpec(distribution=RADEMACHER, rho=0.25, seed=9)
    layer = make_layer(sketch=spec, seed=8)
    rng = np.random.default_rng(9)
    x = rng.standard_normal((16, 5))
    dy = rng.standard_normal((16, 3))
    _, ctx = forward(layer, x, step=2)
    grads = backward(layer, ctx, dy)
    assert np.array_equal(grads.dx, dy @ layer.w)
    assert np.array_equal(grads.db, dy.sum(axis=0))
    assert not np.array_equal(grads.dw, dy.T @ x)  # randomized estimate differs


def test_backward_twice_is_bitwise_identical():
    spec = SketchSpec(distribution=GAUSSIAN, rho=0.5, seed=10)
    layer = make_layer(sketch=spec, seed=10)
    rng = np.random.default_rng(11)
    x = rng.standard_normal((10, 5))
    dy = rng.standard_normal((10, 3))
    _, ctx = forward(layer, x, step=7)
    first = backward(layer, ctx, dy)
    second = backward(layer, ctx, dy)
    assert np.array_equal(first.dw, second.dw)
    assert np.array_equal(first.dx, second.dx)
    assert np.array_equal(first.db, second.db)


def test_randomized_dw_is_unbiased():
    spec = SketchSpec(distribution=GAUSSIAN, rho=0.5, seed=12)
    layer = make_layer(n_out=4, n_in=3, sketch=spec, seed=12)
    rng = np.random.default_rng(13)
    x = rng.standard_normal((12, 3))
    dy = rng.standard_normal((12, 4))
    exact = dy.T @ x
    n = 4_000
    total = np.zeros_like(exact)
    total_sq = np.zeros_like(exact)
    for step in range(n):
        _, ctx = forward(layer, x, step=step)
        dw = backward(layer, ctx, dy).dw
        total += dw
        total_sq += dw * dw
    mean = total / n
    stderr = np.sqrt(np.maximum(total_sq / n - mean**2, 0.0) / (n - 1))
    assert (np.abs(mean - exact) <= 4.0 * stderr).all()


def test_different_steps_use_different_sketches():
    spec = SketchSpec(distribution=GAUSSIAN, rho=0.5, seed=14)
    layer = make_layer(sketch=spec, seed=14)
    x = np.random.default_rng(15).standard_normal((8, 5))
    _, ctx_a = forward(layer, x, step=0)
    _, ctx_b = forward(layer, x, step=1)
    assert ctx_a.handle.seed != ctx_b.handle.seed
    assert not np.array_equal(ctx_a.x_proj, ctx_b.x_proj)


def test_randomized_context_does_not_retain_input():
    spec = SketchSpec(distribution=GAUSSIAN, rho=0.5, seed=16)
    layer = make_layer(sketch=spec, seed=16)
    x = np.random.default_rng(17).standard_normal((8, 5))
    ref = weakref.ref(x)
    _, ctx = forward(layer, x, step=0)
    del x
    assert ref() is None, "randomized mode must not keep the input alive"
    assert ctx.x_proj is not None


def test_corrupted_handle_raises_integrity_error():
    spec = SketchSpec(distribution=GAUSSIAN, rho=0.5, seed=18)
    layer = make_layer(sketch=spec, seed=18)
    x = np.random.default_rng(19).standard_normal((8, 5))
    _, ctx = forward(layer, x, step=0)
    tampered = SavedContext(
        batch=ctx.batch,
        x_proj=ctx.x_proj,
        handle=SketchHandle(
            seed=ctx.handle.seed,
            batch=ctx.handle.batch,
            proj=ctx.handle.proj + 1,
            distribution=ctx.handle.distribution,
        ),
    )
    with pytest.raises(IntegrityError):
        backward(layer, tampered, np.zeros((8, 3)))
    missing = SavedContext(batch=8)
    with pytest.raises(IntegrityError):
        backward(layer, missing, np.zeros((8, 3)))


def test_backward_dy_shape_check():
    layer = make_layer()
    x = np.zeros((4, 5))
    _, ctx = forward(layer, x)
    with pytest.raises(ShapeError):
        backward(layer, ctx, np.zeros((4, 2)))
    with pytest.raises(ShapeError):
        backward(layer, ctx, np.zeros((5, 3)))


def test_stored_bytes_accounting():
    x = np.random.default_rng(20).standard_normal((64, 16))
    exact_layer = LinearLayer(w=np.zeros((4, 16)), b=np.zeros(4))
    _, ctx = forward(exact_layer, x)
    assert stored_activation_bytes(ctx) == 8 * 64 * 16 == 8192
    spec = SketchSpec(rho=0.25, seed=21)
    rand_layer = LinearLayer(w=np.zeros((4, 16)), b=np.zeros(4), sketch=spec)
    _, ctx = forward(rand_layer, x)
    assert stored_activation_bytes(ctx) == 8 * 16 * 16 == 2048
    assert memory_ratio(64, spec) == 0.25
    assert memory_ratio(64, None) == 1.0
    assert memory_ratio(64, SketchSpec(rho=1.0)) == 1.0


def test_layer_validation():
    with pytest.raises(ShapeError):
        LinearLayer(w=np.zeros((2, 3)), b=np.zeros(3))
    with pytest.raises(ValueError):
        LinearLayer(w=np.full((2, 2), np.nan), b=np.zeros(2))


def test_blob_roundtrip_bitwise():
    layer = make_layer(n_out=4, n_in=6, seed=22)
    blob = layer_to_bytes(layer)
    assert blob[:4] == b"RMML"
    assert len(blob) == 12 + 8 * (4 * 6 + 4)
    parsed, offset = layer_from_bytes(blob)
    assert offset == len(blob)
    assert np.array_equal(parsed.w, layer.w)
    assert np.array_equal(parsed.b, layer.b)


def test_blob_concatenation_and_offsets():
    a = make_layer(n_out=2, n_in=3, seed=23)
    b = make_layer(n_out=5, n_in=2, seed=24)
    blob = layer_to_bytes(a) + layer_to_bytes(b)
    first, offset = layer_from_bytes(blob, 0)
    second, end = layer_from_bytes(blob, offset)
    assert end == len(blob)
    assert np.array_equal(first.w, a.w)
    assert np.array_equal(second.w, b.w)


def test_blob_corruption_detected():
    layer = make_layer(seed=25)
    blob = bytearray(layer_to_bytes(layer))
    blob[0:4] = b"XXXX"
    with pytest.raises(IntegrityError):
        layer_from_bytes(bytes(blob))
    with pytest.raises(IntegrityError):
        layer_from_bytes(layer_to_bytes(layer)[:-8])
