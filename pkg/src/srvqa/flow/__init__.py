"""Dense optical flow between consecutive frames.

Two engines: a Farneback estimator (polynomial expansion, coarse-to-fine)
and an exhaustive block matcher used as an independent oracle and
fallback. The inner kernels come from a compiled Cython module when it is
installed, with a numpy fallback selected at import; set ``SRVQA_NO_EXT=1``
to force the fallback.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from srvqa.media import resize_bilinear_image

from . import _npkernels

if os.environ.get("SRVQA_NO_EXT"):
    _kernels = _npkernels
else:
    try:
        from . import _ckernels as _kernels
    except ImportError:
        _kernels = _npkernels

BACKEND = _kernels.BACKEND


class FlowError(ValueError):
    """Raised for mismatched frames or degenerate flow parameters."""


@dataclass
class FarnebackParams:
    pyramid_levels: int = 3
    pyramid_scale: float = 0.5
    window_size: int = 15
    iterations: int = 3
    poly_n: int = 5
    poly_sigma: float = 1.1

    def validate(self):
        if self.pyramid_levels < 1:
            raise FlowError("pyramid_levels must be >= 1")
        if not 0.0 < self.pyramid_scale < 1.0:
            raise FlowError("pyramid_scale must be in (0, 1)")
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise FlowError("window_size must be odd and >= 3")
        if self.iterations < 1:
            raise FlowError("iterations must be >= 1")
        if self.poly_n < 3 or self.poly_n % 2 == 0:
            raise FlowError("poly_n must be odd and >= 3")
        if self.poly_sigma <= 0:
            raise FlowError("poly_sigma must be positive")


@dataclass
class FlowField:
    """Per-pixel (dx, dy) displacement in pixels/frame plus a validity mask."""

    vectors: np.ndarray  # (H, W, 2)
    valid: np.ndarray  # (H, W) bool

    def __post_init__(self):
        if not np.all(np.isfinite(self.vectors)):
            raise FlowError("flow field contains non-finite values")


def _as_gray2d(frame) -> np.ndarray:
    pixels = frame.pixels if hasattr(frame, "pixels") else np.asarray(frame, dtype=np.float64)
    if pixels.ndim == 3:
        if pixels.shape[2] != 1:
            raise FlowError("flow expects single-channel frames")
        pixels = pixels[:, :, 0]
    return np.asarray(pixels, dtype=np.float64)


def poly_expansion(img: np.ndarray, n: int, sigma: float):
    """Per-pixel quadratic fit f(p+x) ~ x^T A x + b^T x + c.

    Gaussian-weighted least squares over an n x n neighbourhood, computed
    with separable correlations (reflect borders). Returns (A, b) with
    A of shape (H, W, 2, 2) and b of shape (H, W, 2).
    """
    half = n // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    w = np.exp(-(x**2) / (2.0 * sigma**2))

    # gram matrix of the basis (1, x, y, x^2, y^2, xy) under the weights
    wx2d = np.outer(w, w)
    xx, yy = np.meshgrid(x, x, indexing="xy")
    basis = np.stack([np.ones_like(xx), xx, yy, xx**2, yy**2, xx * yy])
    g = np.einsum("kij,lij,ij->kl", basis, basis, wx2d)
    g_inv = np.linalg.inv(g)

    # separable moments m_pq = sum w(x) w(y) x^p y^q f
    # correlate1d correlates, so the x/y sign convention carries through
    kern = {0: w, 1: w * x, 2: w * x**2}

    def moment(p, q):
        out = correlate1d(img, kern[q], axis=0, mode="reflect")
        return correlate1d(out, kern[p], axis=1, mode="reflect")

    m = np.stack(
        [moment(0, 0), moment(1, 0), moment(0, 1), moment(2, 0), moment(0, 2), moment(1, 1)],
        axis=-1,
    )
    coef = m @ g_inv.T
    b = coef[..., 1:3]
    a = np.empty(img.shape + (2, 2))
    a[..., 0, 0] = coef[..., 3]
    a[..., 1, 1] = coef[..., 4]
    a[..., 0, 1] = coef[..., 5] / 2.0
    a[..., 1, 0] = coef[..., 5] / 2.0
    return a, b


def _warp_fields(a2, b2, flow):
    """Bilinear-sample expansion coefficients at x + flow (edge clamp).

    Exact at integer coordinates, so zero flow reproduces the inputs
    bitwise.
    """
    h, w = flow.shape[:2]
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    px = np.clip(xs + flow[..., 0], 0.0, w - 1.0)
    py = np.clip(ys + flow[..., 1], 0.0, h - 1.0)
    x0 = np.clip(np.floor(px).astype(int), 0, w - 1)
    y0 = np.clip(np.floor(py).astype(int), 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    fx = px - x0
    fy = py - y0

    def sample(field):
        flat = field.reshape(h * w, -1)
        i00 = (y0 * w + x0).ravel()
        i01 = (y0 * w + x1).ravel()
        i10 = (y1 * w + x0).ravel()
        i11 = (y1 * w + x1).ravel()
        wx = fx.ravel()[:, None]
        wy = fy.ravel()[:, None]
        out = (
            flat[i00] * (1 - wx) * (1 - wy)
            + flat[i01] * wx * (1 - wy)
            + flat[i10] * (1 - wx) * wy
            + flat[i11] * wx * wy
        )
        return out.reshape(field.shape)

    return sample(a2), sample(b2)


def farneback_flow(prev, nxt, params: FarnebackParams | None = None) -> FlowField:
    """Coarse-to-fine Farneback flow from ``prev`` to ``nxt``."""
    params = params or FarnebackParams()
    params.validate()
    prev2d = _as_gray2d(prev)
    next2d = _as_gray2d(nxt)
    if prev2d.shape != next2d.shape:
        raise FlowError(f"frame shapes differ: {prev2d.shape} vs {next2d.shape}")
    h, w = prev2d.shape
    if min(h, w) < 2 * params.poly_n:
        raise FlowError(f"frames too small for poly_n={params.poly_n}")

    # limit the pyramid so the coarsest level still fits the fit window
    sizes = [(h, w)]
    for _ in range(params.pyramid_levels - 1):
        nh = int(round(sizes[-1][0] * params.pyramid_scale))
        nw = int(round(sizes[-1][1] * params.pyramid_scale))
        if min(nh, nw) < 2 * params.poly_n:
            break
        sizes.append((nh, nw))

    flow = np.zeros(sizes[-1] + (2,))
    for level in range(len(sizes) - 1, -1, -1):
        lh, lw = sizes[level]
        p_img = resize_bilinear_image(prev2d, lh, lw)
        n_img = resize_bilinear_image(next2d, lh, lw)
        if flow.shape[:2] != (lh, lw):
            scale_x = lw / flow.shape[1]
            scale_y = lh / flow.shape[0]
            flow = resize_bilinear_image(flow, lh, lw)
            flow[..., 0] *= scale_x
            flow[..., 1] *= scale_y
        a1, b1 = poly_expansion(p_img, params.poly_n, params.poly_sigma)
        a2, b2 = poly_expansion(n_img, params.poly_n, params.poly_sigma)
        for _ in range(params.iterations):
            a2w, b2w = _warp_fields(a2, b2, flow)
            flow = _kernels.flow_update(a1, b1, a2w, b2w, flow, params.window_size)

    valid = np.zeros((h, w), dtype=bool)
    m = params.poly_n
    if h > 2 * m and w > 2 * m:
        valid[m:-m, m:-m] = True
    return FlowField(flow, valid)


def block_match_flow(prev, nxt, block: int = 8, radius: int = 4) -> FlowField:
    """Integer-precision exhaustive SAD block matching."""
    if block < 2:
        raise FlowError("block must be >= 2")
    if radius < 1:
        raise FlowError("radius must be >= 1")
    prev2d = _as_gray2d(prev)
    next2d = _as_gray2d(nxt)
    if prev2d.shape != next2d.shape:
        raise FlowError(f"frame shapes differ: {prev2d.shape} vs {next2d.shape}")
    vectors = np.asarray(_kernels.block_match(prev2d, next2d, block, radius), dtype=np.float64)
    h, w = prev2d.shape
    valid = np.zeros((h, w), dtype=bool)
    by, bx = h // block, w // block
    if by > 2 and bx > 2:
        valid[block : (by - 1) * block, block : (bx - 1) * block] = True
    return FlowField(vectors, valid)


def flow_magnitude(field: FlowField | np.ndarray) -> np.ndarray:
    vectors = field.vectors if isinstance(field, FlowField) else np.asarray(field)
    return np.sqrt(vectors[..., 0] ** 2 + vectors[..., 1] ** 2)


def direction_histogram(field, bins: int = 16, mag_floor: float = 1e-3) -> np.ndarray:
    """Normalized histogram of flow directions over [0, 2pi).

    Pixels below ``mag_floor`` are excluded; a fully excluded field yields
    the uniform histogram.
    """
    if bins < 2:
        raise FlowError("bins must be >= 2")
    vectors = field.vectors if isinstance(field, FlowField) else np.asarray(field)
    mag = np.sqrt(vectors[..., 0] ** 2 + vectors[..., 1] ** 2)
    mask = mag >= mag_floor
    if not mask.any():
        return np.full(bins, 1.0 / bins)
    angles = np.arctan2(vectors[..., 1], vectors[..., 0])[mask] % (2.0 * np.pi)
    idx = np.minimum((angles / (2.0 * np.pi / bins)).astype(int), bins - 1)
    hist = np.bincount(idx, minlength=bins).astype(np.float64)
    return hist / hist.sum()


def save_flow(field: FlowField, path) -> None:
    """Binary dump: int32 H, W header + float32 dx plane + dy plane."""
    h, w = field.vectors.shape[:2]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<ii", h, w))
        fh.write(field.vectors[..., 0].astype("<f4").tobytes())
        fh.write(field.vectors[..., 1].astype("<f4").tobytes())


def load_flow(path) -> FlowField:
    raw = Path(path).read_bytes()
    h, w = struct.unpack("<ii", raw[:8])
    planes = np.frombuffer(raw[8:], dtype="<f4").reshape(2, h, w)
    vectors = np.stack([planes[0], planes[1]], axis=-1).astype(np.float64)
    return FlowField(vectors, np.ones((h, w), dtype=bool))
