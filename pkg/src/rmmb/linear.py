"""Linear layer with exact or sketch-compressed activation storage.

Forward computes X W^T + 1 b^T.  The backward pass needs the input X only for
the weight gradient dY^T X; input gradients (dY W) and bias gradients
(column sums of dY) never touch X.  In randomized mode the layer therefore
stores the projection S^T X plus a sketch handle instead of X, and the weight
gradient becomes (dY^T S)(S^T X) with S rebuilt bit-for-bit from the handle.
The estimate is unbiased; only dW is randomized, dX and db stay exact.

Storage per layer drops from 8 * B * n_in bytes to 8 * b_proj * n_in bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .linalg import Matrix, ShapeError
from .sketch import SketchHandle, SketchSpec, compressed_dim, derive_handle, project, sample_sketch

_MAGIC = b"RMML"
_HEADER = struct.Struct("<4sII")


class IntegrityError(RuntimeError):
    """Saved backward context or serialized blob is internally inconsistent."""


@dataclass
class LinearLayer:
    """Parameters plus the storage policy for backward.

    ``sketch`` of None selects exact mode (store X); otherwise activations are
    compressed with sketches derived from ``sketch.seed``, this layer_id, and
    the step passed to :func:`forward`.
    """

    w: Matrix
    b: np.ndarray
    sketch: SketchSpec | None = None
    layer_id: int = 0

    def __post_init__(self):
        self.w = np.ascontiguousarray(self.w, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)
        if self.w.ndim != 2:
            raise ShapeError(f"weights must be 2-D, got {self.w.ndim}-D")
        if self.b.ndim != 1 or self.b.shape[0] != self.w.shape[0]:
            raise ShapeError(
                f"bias must be 1-D with {self.w.shape[0]} entries, got shape {self.b.shape}"
            )
        if not (np.isfinite(self.w).all() and np.isfinite(self.b).all()):
            raise ValueError("layer parameters must be finite")

    @property
    def n_out(self) -> int:
        return self.w.shape[0]

    @property
    def n_in(self) -> int:
        return self.w.shape[1]


@dataclass
class SavedContext:
    """What forward retains for backward: either X itself or its projection."""

    batch: int
    x: Matrix | None = None
    x_proj: Matrix | None = None
    handle: SketchHandle | None = None

    @property
    def is_randomized(self) -> bool:
        return self.handle is not None


@dataclass
class LayerGrads:
    dx: Matrix
    dw: Matrix
    db: np.ndarray


def forward(layer: LinearLayer, x: Matrix, step: int = 0) -> tuple[Matrix, SavedContext]:
    """Apply the layer to a batch; returns outputs and the backward context.

    Outputs are identical in both storage modes; only what the context
    retains differs.
    """
    if x.ndim != 2:
        raise ShapeError(f"input must be 2-D, got {x.ndim}-D")
    if x.shape[1] != layer.n_in:
        raise ShapeError(
            f"input has {x.shape[1]} features, layer expects {layer.n_in}"
        )
    out = x @ layer.w.T + layer.b
    if layer.sketch is None:
        ctx = SavedContext(batch=x.shape[0], x=x)
    else:
        handle = derive_handle(layer.sketch, layer.layer_id, step, x.shape[0])
        s = sample_sketch(handle)
        ctx = SavedContext(batch=x.shape[0], x_proj=project(x, s), handle=handle)
    return out, ctx


def exact_weight_grad(x: Matrix, dy: Matrix) -> Matrix:
    """Uncompressed weight gradient dY^T X."""
    if x.shape[0] != dy.shape[0]:
        raise ShapeError(
            f"row counts differ: activations {x.shape[0]}, gradients {dy.shape[0]}"
        )
    return dy.T @ x


def backward(layer: LinearLayer, ctx: SavedContext, dy: Matrix) -> LayerGrads:
    """Gradients for one batch from the saved context.

    dx and db are always exact.  dw is exact in exact mode and the unbiased
    sketch estimate in randomized mode, where the sketch is rematerialized
    from the handle (bitwise identical to the forward-pass sketch).
    """
    if dy.ndim != 2 or dy.shape != (ctx.batch, layer.n_out):
        raise ShapeError(
            f"output gradient must be {ctx.batch}x{layer.n_out}, got shape {dy.shape}"
        )
    dx = dy @ layer.w
    db = dy.sum(axis=0)
    if ctx.is_randomized:
        handle = ctx.handle
        if ctx.x_proj is None:
            raise IntegrityError("randomized context is missing the projected activations")
        if handle.batch != ctx.batch or handle.proj != ctx.x_proj.shape[0]:
            raise IntegrityError(
                f"sketch handle dimensions {handle.batch}x{handle.proj} do not match "
                f"stored projection {ctx.x_proj.shape[0]}x{ctx.x_proj.shape[1]} "
                f"for batch {ctx.batch}"
            )
        if ctx.x_proj.shape[1] != layer.n_in:
            raise ShapeError(
                f"stored projection has {ctx.x_proj.shape[1]} features, layer expects {layer.n_in}"
            )
        s = sample_sketch(handle)
        dw = (dy.T @ s) @ ctx.x_proj
    else:
        if ctx.x is None:
            raise IntegrityError("exact context is missing the stored activations")
        dw = exact_weight_grad(ctx.x, dy)
    return LayerGrads(dx=dx, dw=dw, db=db)


def stored_activation_bytes(ctx: SavedContext) -> int:
    """Bytes held for backward: 8 per float64 entry of the stored matrix."""
    arr = ctx.x_proj if ctx.is_randomized else ctx.x
    if arr is None:
        raise IntegrityError("context holds no stored activations")
    return 8 * arr.shape[0] * arr.shape[1]


def memory_ratio(batch: int, spec: SketchSpec | None) -> float:
    """Stored-rows fraction relative to exact mode: b_proj / B (1.0 when exact)."""
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")
    if spec is None:
        return 1.0
    return compressed_dim(batch, spec) / batch


def layer_to_bytes(layer: LinearLayer) -> bytes:
    """Serialize parameters (not the storage policy) as a binary blob.

    Layout: magic "RMML", u32 n_out, u32 n_in, then row-major float64
    little-endian weights followed by the bias vector.
    """
    header = _HEADER.pack(_MAGIC, layer.n_out, layer.n_in)
    body = layer.w.astype("<f8").tobytes(order="C") + layer.b.astype("<f8").tobytes()
    return header + body


def layer_from_bytes(blob: bytes, offset: int = 0) -> tuple[LinearLayer, int]:
    """Parse one layer blob at ``offset``; returns (layer, offset past it)."""
    end_header = offset + _HEADER.size
    if len(blob) < end_header:
        raise IntegrityError("blob too short for a layer header")
    magic, n_out, n_in = _HEADER.unpack_from(blob, offset)
    if magic != _MAGIC:
        raise IntegrityError(f"bad magic {magic!r}, expected {_MAGIC!r}")
    need = 8 * (n_out * n_in + n_out)
    if len(blob) < end_header + need:
        raise IntegrityError(
            f"blob too short for a {n_out}x{n_in} layer: need {need} parameter bytes"
        )
    w = np.frombuffer(blob, dtype="<f8", count=n_out * n_in, offset=end_header)
    w = w.reshape(n_out, n_in).astype(np.float64)
    b = np.frombuffer(
        blob, dtype="<f8", count=n_out, offset=end_header + 8 * n_out * n_in
    ).astype(np.float64)
    return LinearLayer(w=w, b=b), end_header + need
