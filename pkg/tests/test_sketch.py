"""Sketch sampling, sizing, and rematerialization-identity tests."""

import json
import math

import numpy as np
import pytest

from rmmb.linalg import ShapeError, matmul, transpose
from rmmb.prng import RngState
from rmmb.sketch import (
    GAUSSIAN,
    RADEMACHER,
    SketchHandle,
    SketchSpec,
    compressed_dim,
    derive_handle,
    project,
    sample_sketch,
)


def test_compressed_dim_reference_points():
    assert compressed_dim(64, SketchSpec(rho=0.5)) == 32
    assert compressed_dim(10, SketchSpec(rho=1.0)) == 10
    assert compressed_dim(7, SketchSpec(rho=0.1, bproj_min=1)) == 1
    assert compressed_dim(64, SketchSpec(rho=0.1)) == 6
    # round half away from zero: 0.5 * 7 = 3.5 -> 4
    assert compressed_dim(7, SketchSpec(rho=0.5)) == 4


def test_compressed_dim_clamps():
    assert compressed_dim(100, SketchSpec(rho=0.9, bproj_max=10)) == 10
    assert compressed_dim(100, SketchSpec(rho=0.01, bproj_min=5)) == 5
    # bproj_min larger than the batch cannot push past the batch size
    assert compressed_dim(3, SketchSpec(rho=0.5, bproj_min=8, bproj_max=8)) == 3


def test_compressed_dim_always_in_range():
    specs = [
        SketchSpec(rho=r, bproj_min=lo, bproj_max=hi)
        for r in (0.01, 0.1, 0.37, 0.5, 0.99, 1.0)
        for lo in (1, 2, 7)
        for hi in (None, 3, 64)
        if hi is None or hi >= lo
    ]
    for batch in range(1, 70):
        for spec in specs:
            b_proj = compressed_dim(batch, spec)
            assert 1 <= b_proj <= batch


def test_spec_validation():
    with pytest.raises(ValueError):
        SketchSpec(distribution="uniform")
    with pytest.raises(ValueError):
        SketchSpec(rho=0.0)
    with pytest.raises(ValueError):
        SketchSpec(rho=1.5)
    with pytest.raises(ValueError):
        SketchSpec(bproj_min=0)
    with pytest.raises(ValueError):
        SketchSpec(bproj_min=5, bproj_max=4)
    with pytest.raises(ValueError):
        compressed_dim(0, SketchSpec())


def test_spec_json_roundtrip():
    spec = SketchSpec(distribution=RADEMACHER, rho=0.25, bproj_min=2, bproj_max=16, seed=99)
    parsed = SketchSpec.from_json(spec.to_json())
    assert parsed == spec
    keys = set(json.loads(spec.to_json()))
    assert keys == {"distribution", "rho", "bproj_min", "bproj_max", "seed"}
    with pytest.raises(ValueError):
        SketchSpec.from_json_dict({"distribution": "gaussian", "bogus": 1})


def test_sample_sketch_deterministic():
    handle = SketchHandle(seed=123, batch=12, proj=5, distribution=GAUSSIAN)
    assert np.array_equal(sample_sketch(handle), sample_sketch(handle))


def test_rademacher_entries_have_exact_magnitude():
    handle = SketchHandle(seed=7, batch=10, proj=4, distribution=RADEMACHER)
    s = sample_sketch(handle)
    assert s.shape == (10, 4)
    assert set(np.unique(np.abs(s))) == {0.5}  # 1/sqrt(4)


def test_gaussian_entries_come_from_the_seeded_stream():
    handle = SketchHandle(seed=55, batch=6, proj=3, distribution=GAUSSIAN)
    s = sample_sketch(handle)
    raw = RngState(55).normal(18) / math.sqrt(3)
    assert np.array_equal(s, raw.reshape(6, 3))


def test_sketch_second_moment_is_identity():
    # E[S S^T] = I for both distributions. Rademacher diagonals are exact
    # every sample; Gaussian diagonals and all off-diagonals converge.
    batch, proj, n = 8, 4, 20_000
    for dist in (GAUSSIAN, RADEMACHER):
        acc = np.zeros((batch, batch))
        for i in range(n):
            s = sample_sketch(SketchHandle(seed=1000 + i, batch=batch, proj=proj, distribution=dist))
            acc += s @ s.T
        mean = acc / n
        assert np.abs(mean - np.eye(batch)).max() < 0.05
    s = sample_sketch(SketchHandle(seed=5, batch=batch, proj=proj, distribution=RADEMACHER))
    assert np.allclose(np.diag(s @ s.T), 1.0)


def test_projection_matches_matmul_oracle():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((9, 5))
    s = sample_sketch(SketchHandle(seed=3, batch=9, proj=4, distribution=GAUSSIAN))
    assert np.array_equal(project(x, s), matmul(transpose(s), x))


def test_projection_identity_sketch():
    x = np.array([[2.0, 3.0]])
    s = np.array([[1.0]])
    assert np.array_equal(project(x, s), x)
    assert np.array_equal(project(np.zeros((4, 3)), np.ones((4, 2))), np.zeros((2, 3)))


def test_projection_shape_error():
    with pytest.raises(ShapeError):
        project(np.zeros((4, 3)), np.zeros((5, 2)))


def test_projection_scaling_is_exact_for_powers_of_two():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((6, 4))
    s = sample_sketch(SketchHandle(seed=10, batch=6, proj=2, distribution=GAUSSIAN))
    assert np.array_equal(project(4.0 * x, s), 4.0 * project(x, s))


def test_unbiased_product_estimate():
    # X^T S S^T Y averages to X^T Y within 4 standard errors entrywise.
    rng = np.random.default_rng(10)
    x = rng.standard_normal((12, 3))
    y = rng.standard_normal((12, 4))
    exact = x.T @ y
    n = 10_000
    total = np.zeros_like(exact)
    total_sq = np.zeros_like(exact)
    for i in range(n):
        s = sample_sketch(SketchHandle(seed=i, batch=12, proj=6, distribution=GAUSSIAN))
        est = (x.T @ s) @ (s.T @ y)
        total += est
        total_sq += est * est
    mean = total / n
    stderr = np.sqrt(np.maximum(total_sq / n - mean**2, 0.0) / (n - 1))
    assert (np.abs(mean - exact) <= 4.0 * stderr).all()


def test_derive_handle_is_deterministic_and_distinct():
    spec = SketchSpec(rho=0.5, seed=77)
    a = derive_handle(spec, layer_id=0, step=3, batch=16)
    b = derive_handle(spec, layer_id=0, step=3, batch=16)
    assert a == b
    assert a.proj == 8 and a.batch == 16
    seeds = {
        derive_handle(spec, layer_id=layer, step=step, batch=16).seed
        for layer in range(4)
        for step in range(2500)
    }
    assert len(seeds) == 10_000


def test_handle_validation():
    with pytest.raises(ValueError):
        SketchHandle(seed=1, batch=4, proj=5, distribution=GAUSSIAN)
    with pytest.raises(ValueError):
        SketchHandle(seed=1, batch=0, proj=0, distribution=GAUSSIAN)
    with pytest.raises(ValueError):
        SketchHandle(seed=1, batch=4, proj=2, distribution="bogus")
