"""Conditioning tensors for a downstream video model: the persistent
flow-warped Gaussian noise stream, the SDEdit mixture, and the pluggable
generator boundary (the default stub passes the preview through).

The noise carrier is transported, not resampled: a fixed budget of noise
particles (a stratified sub-lattice per latent cell, each carrying an i.i.d.
N(0,1) value per channel) is advected along the bilinearly-interpolated pooled
flow. Each emitted pixel is the sum of the values that landed in its cell,
normalized by the square root of the accumulated squared weights (unit weights,
so 1/sqrt(count)); cells receiving total weight below the refill threshold get
fresh draws. Because every particle value is an independent Gaussian used in
exactly one cell per frame, per-pixel marginals are exactly standard normal for
any number of warps, which a re-splatted value grid cannot guarantee.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np
from numba import njit, prange

from .errors import GeneratorError, InvalidAlpha, ShapeError
from .scene import ConditioningFrame

DOWNSAMPLE = 8  # latent spatial stride s
CHANNELS = 16  # latent channels c
_SUB = 3  # noise particles per latent cell axis (9 per cell)
_CAP = 32  # max landed particles summed per cell
WEIGHT_REFILL = 0.05  # cells below this accumulated weight are refilled


@njit(cache=True)
def _advect(px, py, alive, flow, h, w):
    """Move particles along the bilinearly sampled flow; kill leavers."""
    for p in range(px.shape[0]):
        x = px[p]
        y = py[p]
        x0 = int(np.floor(x)); y0 = int(np.floor(y))
        x0 = min(max(x0, 0), w - 1); y0 = min(max(y0, 0), h - 1)
        x1 = min(x0 + 1, w - 1); y1 = min(y0 + 1, h - 1)
        fx = min(max(x - x0, 0.0), 1.0)
        fy = min(max(y - y0, 0.0), 1.0)
        ux = ((1 - fy) * ((1 - fx) * flow[y0, x0, 0] + fx * flow[y0, x1, 0])
              + fy * ((1 - fx) * flow[y1, x0, 0] + fx * flow[y1, x1, 0]))
        uy = ((1 - fy) * ((1 - fx) * flow[y0, x0, 1] + fx * flow[y0, x1, 1])
              + fy * ((1 - fx) * flow[y1, x0, 1] + fx * flow[y1, x1, 1]))
        x = x + ux
        y = y + uy
        px[p] = x
        py[p] = y
        alive[p] = 1 if (0.0 <= x < w and 0.0 <= y < h) else 0


@njit(cache=True)
def _bin_particles(px, py, alive, w, counts, order, cursor):
    n = px.shape[0]
    ncells = counts.shape[0]
    for c in range(ncells):
        counts[c] = 0
    for p in range(n):
        if alive[p]:
            c = int(py[p]) * w + int(px[p])
            counts[c] += 1
    acc = 0
    for c in range(ncells):
        cursor[c] = acc
        acc += counts[c]
    for p in range(n):
        if alive[p]:
            c = int(py[p]) * w + int(px[p])
            order[cursor[c]] = p
            cursor[c] += 1
    # restore cursor to cell starts
    acc = 0
    for c in range(ncells):
        cursor[c] = acc
        acc += counts[c]


@njit(cache=True, parallel=True)
def _emit_and_rebuild(px, py, values, counts, starts, order,
                      fresh_values, spawn_offsets, h, w, carrier,
                      out_px, out_py, out_values):
    nc = values.shape[1]
    per_cell = _SUB * _SUB
    for cell in prange(h * w):
        cy = cell // w
        cx = cell % w
        cnt = counts[cell]
        base = starts[cell]
        k = min(cnt, _CAP)
        out_base = cell * per_cell
        keep = min(cnt, per_cell)
        spawn = per_cell - keep
        sbase = spawn_offsets[cell]
        if k > 0:
            inv = 1.0 / np.sqrt(k)
            for ch in range(nc):
                acc = 0.0
                for s in range(k):
                    acc += values[order[base + s], ch]
                carrier[cy, cx, ch] = acc * inv
        else:
            # refill: the freshly spawned values are the cell's new content
            inv = 1.0 / np.sqrt(spawn)
            for ch in range(nc):
                acc = 0.0
                for s in range(spawn):
                    acc += fresh_values[sbase + s, ch]
                carrier[cy, cx, ch] = acc * inv
        # survivors keep their positions and values
        for s in range(keep):
            p = order[base + s]
            out_px[out_base + s] = px[p]
            out_py[out_base + s] = py[p]
            for ch in range(nc):
                out_values[out_base + s, ch] = values[p, ch]
        # top up with fresh particles on the stratified sub-lattice
        for s in range(spawn):
            slot = keep + s
            a = slot // _SUB
            b = slot % _SUB
            out_px[out_base + slot] = cx + (b + 0.5) / _SUB
            out_py[out_base + slot] = cy + (a + 0.5) / _SUB
            for ch in range(nc):
                out_values[out_base + slot, ch] = fresh_values[sbase + s, ch]


def _stratified_positions(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    sub = (np.arange(_SUB) + 0.5) / _SUB
    oy, ox = np.meshgrid(sub, sub, indexing="ij")
    cy, cx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    px = (cx[:, :, None, None] + ox[None, None]).ravel().astype(np.float32)
    py = (cy[:, :, None, None] + oy[None, None]).ravel().astype(np.float32)
    return px, py


@dataclass
class NoiseState:
    """Persistent carrier for flow-warped noise at latent resolution."""

    h: int
    w: int
    c: int
    seed: int
    frame_index: int = 0
    px: np.ndarray = None
    py: np.ndarray = None
    values: np.ndarray = None
    carrier: np.ndarray = None
    rng: np.random.Generator = None

    @classmethod
    def create(cls, height: int, width: int, seed: int,
               downsample: int = DOWNSAMPLE, channels: int = CHANNELS) -> "NoiseState":
        if height % downsample or width % downsample:
            raise ShapeError(f"frame {width}x{height} not divisible by stride {downsample}")
        h, w = height // downsample, width // downsample
        rng = np.random.default_rng(seed)
        px, py = _stratified_positions(h, w)
        per_cell = _SUB * _SUB
        ncells = h * w
        values = rng.standard_normal((ncells * per_cell, channels), dtype=np.float32)
        # emit with the same kernel (and summation order) the warp path uses
        counts = np.full(ncells, per_cell, np.int64)
        starts = np.arange(ncells, dtype=np.int64) * per_cell
        order = np.arange(ncells * per_cell, dtype=np.int64)
        fresh = np.zeros((1, channels), np.float32)
        carrier = np.empty((h, w, channels), np.float32)
        out_px = np.empty_like(px)
        out_py = np.empty_like(py)
        out_values = np.empty_like(values)
        _emit_and_rebuild(px, py, values, counts, starts, order, fresh,
                          np.zeros(ncells, np.int64), h, w, carrier,
                          out_px, out_py, out_values)
        return cls(h=h, w=w, c=channels, seed=seed, px=out_px, py=out_py,
                   values=out_values, carrier=carrier, rng=rng)

    @property
    def downsample_of(self) -> int:
        return DOWNSAMPLE


@njit(cache=True, parallel=True)
def _pool_kernel(src, h, w, sy, sx, comps, out):
    inv = 1.0 / (sy * sx)
    for cell in prange(h * w):
        i = cell // w
        j = cell % w
        for ch in range(comps):
            acc = 0.0
            for a in range(i * sy, (i + 1) * sy):
                for b in range(j * sx, (j + 1) * sx):
                    acc += src[a, b, ch]
            out[i, j, ch] = acc * inv


def pool_flow(flow: np.ndarray, h: int, w: int) -> np.ndarray:
    """Average-pool pixel flow to latent cells and rescale to latent units."""
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ShapeError(f"flow must be HxWx2, got {flow.shape}")
    H, W = flow.shape[:2]
    if H % h or W % w:
        raise ShapeError(f"flow {W}x{H} not divisible by latent {w}x{h}")
    sy, sx = H // h, W // w
    out = np.empty((h, w, 2), np.float32)
    _pool_kernel(flow, h, w, sy, sx, 2, out)
    out[..., 0] /= sx
    out[..., 1] /= sy
    return out


def warp_noise(state: NoiseState, flow: np.ndarray) -> tuple[NoiseState, np.ndarray]:
    """Advect the carrier along the flow; returns (new state, latent frame)."""
    pooled = pool_flow(flow, state.h, state.w)
    n = len(state.px)
    px = state.px.copy()
    py = state.py.copy()
    alive = np.empty(n, np.uint8)
    _advect(px, py, alive, pooled, state.h, state.w)

    ncells = state.h * state.w
    counts = np.empty(ncells, np.int64)
    order = np.empty(n, np.int64)
    cursor = np.empty(ncells, np.int64)
    _bin_particles(px, py, alive, state.w, counts, order, cursor)

    per_cell = _SUB * _SUB
    spawn_per_cell = np.maximum(per_cell - counts, 0)
    spawn_offsets = np.zeros(ncells, np.int64)
    np.cumsum(spawn_per_cell[:-1], out=spawn_offsets[1:])
    total_spawn = int(spawn_per_cell.sum())
    if total_spawn:
        fresh = state.rng.standard_normal((total_spawn, state.c), dtype=np.float32)
    else:
        fresh = np.zeros((1, state.c), np.float32)

    carrier = np.empty((state.h, state.w, state.c), np.float32)
    out_px = np.empty(ncells * per_cell, np.float32)
    out_py = np.empty_like(out_px)
    out_values = np.empty((ncells * per_cell, state.c), np.float32)
    _emit_and_rebuild(px, py, state.values, counts, cursor, order,
                      fresh, spawn_offsets, state.h, state.w, carrier,
                      out_px, out_py, out_values)

    new = NoiseState(h=state.h, w=state.w, c=state.c, seed=state.seed,
                     frame_index=state.frame_index + 1,
                     px=out_px, py=out_py, values=out_values,
                     carrier=carrier, rng=state.rng)
    return new, carrier


# ---------------------------------------------------------------------------
# SDEdit mixing and the stub encoder

@dataclass
class LatentFrame:
    tensor: np.ndarray
    alpha: float
    flow_warped: bool = False
    sdedit_mixed: bool = False


def sdedit_mix(preview_latent: np.ndarray, z_flow: np.ndarray, alpha: float) -> LatentFrame:
    """alpha * encoded preview + sqrt(1 - alpha^2) * flow-warped noise."""
    if preview_latent.shape != z_flow.shape:
        raise ShapeError(f"latent shapes differ: {preview_latent.shape} vs {z_flow.shape}")
    if not (0.0 <= alpha <= 1.0):
        raise InvalidAlpha(f"alpha must be in [0, 1], got {alpha}")
    mixed = alpha * preview_latent + np.sqrt(1.0 - alpha * alpha) * z_flow
    return LatentFrame(tensor=mixed, alpha=alpha, flow_warped=True, sdedit_mixed=True)


def encode_preview(preview: np.ndarray, downsample: int = DOWNSAMPLE,
                   channels: int = CHANNELS) -> np.ndarray:
    """Stub VAE encoder: mean-pool, replicate RGB across channels, standardize.

    A real encoder can be swapped in anywhere a callable of the same shape
    contract (H, W, 3) u8 -> (H/s, W/s, c) f32 is accepted.
    """
    H, W = preview.shape[:2]
    if H % downsample or W % downsample:
        raise ShapeError(f"preview {W}x{H} not divisible by stride {downsample}")
    h, w = H // downsample, W // downsample
    pooled = np.empty((h, w, 3), np.float32)
    _pool_kernel(preview, h, w, downsample, downsample, 3, pooled)
    reps = int(np.ceil(channels / 3))
    lat = np.tile(pooled, (1, 1, reps))[:, :, :channels].astype(np.float64)
    std = lat.std()
    if std < 1e-12:
        return np.zeros((h, w, channels), np.float32)
    return ((lat - lat.mean()) / std).astype(np.float32)


# ---------------------------------------------------------------------------
# Generator boundary

class GeneratorPlugin(Protocol):
    def generate(self, cond: ConditioningFrame, mixed_latent: Optional[LatentFrame],
                 history: Sequence[np.ndarray]) -> np.ndarray: ...


class StubGenerator:
    """Passes the coarse preview through unchanged."""

    name = "stub"

    def generate(self, cond, mixed_latent, history):
        return cond.preview.copy()


def generate(cond: ConditioningFrame, history: Sequence[np.ndarray] = (),
             plugin: Optional[GeneratorPlugin] = None,
             mixed_latent: Optional[LatentFrame] = None) -> tuple[np.ndarray, Optional[str]]:
    """Run the generator; plugin failures fall back to the stub.

    Returns (frame, error_detail_or_None).
    """
    stub = StubGenerator()
    if plugin is None:
        return stub.generate(cond, mixed_latent, history), None
    try:
        frame = plugin.generate(cond, mixed_latent, history)
        frame = np.asarray(frame, np.uint8)
        if frame.shape != cond.preview.shape:
            raise GeneratorError(f"plugin returned shape {frame.shape}, "
                                 f"expected {cond.preview.shape}")
        return frame, None
    except Exception as exc:  # noqa: BLE001 - plugin boundary isolates all failures
        return stub.generate(cond, mixed_latent, history), f"{type(exc).__name__}: {exc}"


class SocketGeneratorPlugin:
    """Bridges the generator call to an external process over the wire protocol.

    Sends the conditioning frame as FramePreview + FrameFlow + FrameNoise
    messages on a TCP connection and expects one FrameGenerated (or
    FramePreview) message back.
    """

    name = "socket"

    def __init__(self, host: str, port: int, timeout: float = 5.0):
        import socket

        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._sock.settimeout(timeout)
        self._buf = b""

    def close(self):
        self._sock.close()

    def generate(self, cond, mixed_latent, history):
        from .stream import protocol as proto

        msgs = proto.conditioning_messages(cond)
        for m in msgs:
            self._sock.sendall(proto.encode_message(m))
        while True:
            try:
                msg, used = proto.decode_message(self._buf)
            except proto.errors.Incomplete:
                chunk = self._sock.recv(65536)
                if not chunk:
                    raise GeneratorError("generator socket closed") from None
                self._buf += chunk
                continue
            self._buf = self._buf[used:]
            if isinstance(msg, (proto.FrameGeneratedMsg, proto.FramePreviewMsg)):
                frame = msg.rgb.reshape(msg.height, msg.width, 3)
                return frame
