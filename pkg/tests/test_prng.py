"""Deterministic stream tests, including an independent generator oracle."""

import numpy as np
import pytest

from rmmb.prng import (
    RngState,
    derive_seed,
    derive_seed_block,
    mix_int,
    normal_block,
    raw_block,
    sign_block,
    uniform_block,
)

MASK = 0xFFFFFFFFFFFFFFFF


def reference_stream(seed: int, count: int) -> list[int]:
    """Plain-int implementation of the same published mixing constants,
    written independently of the numpy code path."""
    gamma = 0x9E3779B97F4A7C15
    out = []
    for k in range(1, count + 1):
        z = (seed + k * gamma) & MASK
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append(z ^ (z >> 31))
    return out


def test_raw_block_matches_reference_oracle():
    for seed in (0, 1, 42, MASK, 0xDEADBEEF):
        got = raw_block(np.array([seed], dtype=np.uint64), 0, 16)[0]
        assert [int(v) for v in got] == reference_stream(seed, 16)


def test_mix_int_matches_array_mixer():
    values = [0, 1, 2**31, 2**63, MASK, 0x123456789ABCDEF0]
    arr = raw_block(np.array(values, dtype=np.uint64), 0, 1)
    for v, row in zip(values, arr):
        assert int(row[0]) == reference_stream(v, 1)[0]
    for v in values:
        # mix_int is the bare finalizer; feed it the pre-mixed position value.
        z = (v + 0x9E3779B97F4A7C15) & MASK
        assert mix_int(z) == reference_stream(v, 1)[0]


def test_same_seed_same_stream():
    a = RngState(123)
    b = RngState(123)
    assert np.array_equal(a.normal(101), b.normal(101))
    assert np.array_equal(a.signs(37), b.signs(37))
    assert a == b


def test_different_seeds_differ():
    assert not np.array_equal(RngState(1).normal(32), RngState(2).normal(32))


def test_serialization_roundtrip_mid_stream():
    state = RngState(77)
    first = state.normal(13)
    resumed = RngState.from_bytes(state.to_bytes())
    assert resumed == state
    rest_a = state.normal(21)
    rest_b = resumed.normal(21)
    assert np.array_equal(rest_a, rest_b)
    # A fresh state replays the first draw exactly.  (Draws are atomic: one
    # normal(34) is laid out differently than normal(13) + normal(21), so the
    # contract is per-request determinism, not concatenation.)
    assert np.array_equal(RngState(77).normal(13), first)


def test_state_bytes_format():
    blob = RngState(5, counter=9).to_bytes()
    assert len(blob) == 16
    assert blob == (5).to_bytes(8, "little") + (9).to_bytes(8, "little")
    with pytest.raises(ValueError):
        RngState.from_bytes(b"short")


def test_counter_advance_counts():
    state = RngState(3)
    state.normal(5)  # odd count still consumes a whole pair per two outputs
    assert state.counter == 6
    state.signs(3)
    assert state.counter == 9
    state.uniform(2)
    assert state.counter == 11
    state.raw(1)
    assert state.counter == 12


def test_block_functions_match_stateful_draws():
    seeds = np.array([11, 99], dtype=np.uint64)
    blocks = normal_block(seeds, 9, start=4)
    for row, seed in zip(blocks, seeds):
        state = RngState(int(seed), counter=4)
        assert np.array_equal(state.normal(9), row)
    sblocks = sign_block(seeds, 7, start=0)
    for row, seed in zip(sblocks, seeds):
        assert np.array_equal(RngState(int(seed)).signs(7), row)


def test_signs_are_unit_and_balanced():
    vals = RngState(2024).signs(200_000)
    assert set(np.unique(vals)) == {-1.0, 1.0}
    assert abs(vals.mean()) < 0.01


def test_uniform_range_and_mean():
    vals = RngState(7).uniform(200_000)
    assert vals.min() >= 0.0
    assert vals.max() < 1.0
    assert abs(vals.mean() - 0.5) < 0.005


def test_normal_moments():
    vals = RngState(31337).normal(400_000)
    assert np.isfinite(vals).all()
    assert abs(vals.mean()) < 0.01
    assert abs(vals.var() - 1.0) < 0.02
    # Fourth moment of a standard normal is 3.
    assert abs((vals**4).mean() - 3.0) < 0.1


def test_permutation_is_valid_and_seeded():
    p = RngState(5).permutation(257)
    assert sorted(p.tolist()) == list(range(257))
    assert np.array_equal(p, RngState(5).permutation(257))
    assert not np.array_equal(p, RngState(6).permutation(257))


def test_derive_seed_deterministic_and_spread():
    assert derive_seed(10, 1, 2) == derive_seed(10, 1, 2)
    assert derive_seed(10, 1, 2) != derive_seed(10, 2, 1)
    assert derive_seed(10, 1) != derive_seed(11, 1)
    seen = {derive_seed(999, layer, step) for layer in range(10) for step in range(1000)}
    assert len(seen) == 10_000


def test_derive_seed_block_matches_scalar():
    nonces = np.arange(512, dtype=np.uint64)
    block = derive_seed_block(12345, nonces)
    for n in (0, 1, 17, 511):
        assert int(block[n]) == derive_seed(12345, n)


def test_raw_block_is_position_based():
    seeds = np.array([8], dtype=np.uint64)
    whole = raw_block(seeds, 0, 32)[0]
    tail = raw_block(seeds, 20, 12)[0]
    assert np.array_equal(whole[20:], tail)
