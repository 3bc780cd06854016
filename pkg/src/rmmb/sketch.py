"""Random sketch matrices that can be regenerated from a compact handle.

A sketch S is a tall random matrix with E[S S^T] = I used to compress a batch
dimension: instead of storing a B x N activation, a layer stores the
B_proj x N projection S^T X together with the handle that produced S.  Because
S is a pure function of the handle (seed, dimensions, distribution), the
backward pass rebuilds the identical matrix and never needs the original.

Two entry distributions are supported: "gaussian" (iid standard normal) and
"rademacher" (iid signs), both scaled by 1/sqrt(B_proj).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .linalg import Matrix, ShapeError
from .prng import RngState, derive_seed

GAUSSIAN = "gaussian"
RADEMACHER = "rademacher"
DISTRIBUTIONS = (GAUSSIAN, RADEMACHER)


@dataclass(frozen=True)
class SketchSpec:
    """Configuration for sketch sampling.

    rho is the target compression ratio: a batch of B rows is projected to
    roughly rho * B rows, clamped to [bproj_min, min(bproj_max, B)].
    bproj_max of None means "no upper clamp".  seed is the master seed from
    which per-(layer, step) sketch seeds are derived.
    """

    distribution: str = GAUSSIAN
    rho: float = 0.5
    bproj_min: int = 1
    bproj_max: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(
                f"unknown distribution {self.distribution!r}; expected one of {DISTRIBUTIONS}"
            )
        if not (isinstance(self.rho, (int, float)) and 0.0 < float(self.rho) <= 1.0):
            raise ValueError(f"rho must be in (0, 1], got {self.rho!r}")
        if not (isinstance(self.bproj_min, int) and self.bproj_min >= 1):
            raise ValueError(f"bproj_min must be an integer >= 1, got {self.bproj_min!r}")
        if self.bproj_max is not None:
            if not (isinstance(self.bproj_max, int) and self.bproj_max >= self.bproj_min):
                raise ValueError(
                    f"bproj_max must be None or an integer >= bproj_min, got {self.bproj_max!r}"
                )
        if not isinstance(self.seed, int):
            raise ValueError(f"seed must be an integer, got {self.seed!r}")

    def to_json_dict(self) -> dict:
        return {
            "distribution": self.distribution,
            "rho": float(self.rho),
            "bproj_min": self.bproj_min,
            "bproj_max": self.bproj_max,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, data: dict) -> "SketchSpec":
        extra = set(data) - {"distribution", "rho", "bproj_min", "bproj_max", "seed"}
        if extra:
            raise ValueError(f"unknown sketch keys: {sorted(extra)}")
        return cls(
            distribution=data.get("distribution", GAUSSIAN),
            rho=float(data.get("rho", 0.5)),
            bproj_min=int(data.get("bproj_min", 1)),
            bproj_max=None if data.get("bproj_max") is None else int(data["bproj_max"]),
            seed=int(data.get("seed", 0)),
        )

    @classmethod
    def from_json(cls, text: str) -> "SketchSpec":
        return cls.from_json_dict(json.loads(text))


@dataclass(frozen=True)
class SketchHandle:
    """Everything needed to rematerialize one sketch matrix exactly."""

    seed: int
    batch: int
    proj: int
    distribution: str

    def __post_init__(self):
        if self.batch < 1 or self.proj < 1:
            raise ValueError(f"handle dimensions must be >= 1, got {self.batch}x{self.proj}")
        if self.proj > self.batch:
            raise ValueError(f"proj dimension {self.proj} exceeds batch {self.batch}")
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")


def compressed_dim(batch: int, spec: SketchSpec) -> int:
    """Projected row count for a batch of the given size.

    round(rho * batch) with ties away from zero, clamped into
    [bproj_min, min(bproj_max, batch)]; the result always lies in [1, batch].
    """
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")
    hi = batch if spec.bproj_max is None else min(spec.bproj_max, batch)
    lo = min(spec.bproj_min, hi)
    target = math.floor(spec.rho * batch + 0.5)
    return int(min(max(target, lo), hi))


def derive_handle(spec: SketchSpec, layer_id: int, step: int, batch: int) -> SketchHandle:
    """Handle for the sketch used by one layer at one optimizer step."""
    return SketchHandle(
        seed=derive_seed(spec.seed, layer_id, step),
        batch=batch,
        proj=compressed_dim(batch, spec),
        distribution=spec.distribution,
    )


def sample_sketch(handle: SketchHandle) -> Matrix:
    """Materialize the batch x proj sketch matrix for a handle.

    Deterministic: the same handle always yields the bit-identical matrix.
    """
    state = RngState(handle.seed)
    n = handle.batch * handle.proj
    if handle.distribution == GAUSSIAN:
        flat = state.normal(n)
    else:
        flat = state.signs(n)
    return (flat / math.sqrt(handle.proj)).reshape(handle.batch, handle.proj)


def project(x: Matrix, s: Matrix) -> Matrix:
    """Compressed activations S^T X (shape proj x n_in)."""
    if x.ndim != 2 or s.ndim != 2:
        raise ShapeError("project operands must be 2-D")
    if x.shape[0] != s.shape[0]:
        raise ShapeError(
            f"batch mismatch: activations have {x.shape[0]} rows, sketch has {s.shape[0]}"
        )
    return np.ascontiguousarray(s.T @ x)
