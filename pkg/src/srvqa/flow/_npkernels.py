"""Pure-numpy flow kernels.

These are the reference implementations of the two hot inner loops; the
compiled module `_ckernels` mirrors their signatures and is preferred at
import time when available.
"""
from __future__ import annotations

import numpy as np

BACKEND = "numpy"


def _box_blur(img: np.ndarray, size: int) -> np.ndarray:
    """Uniform window average, reflect borders, separable passes."""
    from scipy.ndimage import correlate1d

    kernel = np.full(size, 1.0 / size)
    out = correlate1d(img, kernel, axis=0, mode="reflect")
    return correlate1d(out, kernel, axis=1, mode="reflect")


def flow_update(a1, b1, a2w, b2w, d0, winsize):
    """One Farneback displacement refinement pass.

    ``a1``/``a2w`` are (H, W, 2, 2) quadratic coefficients (frame 2 already
    warped by ``d0``), ``b1``/``b2w`` the (H, W, 2) linear ones. Solves the
    window-averaged least-squares system for the total displacement.
    """
    a = 0.5 * (a1 + a2w)
    db = -0.5 * (b2w - b1) + np.einsum("hwij,hwj->hwi", a, d0)

    # accumulate G = A^T A (symmetric) and h = A^T db, then window-average
    g11 = a[..., 0, 0] ** 2 + a[..., 1, 0] ** 2
    g12 = a[..., 0, 0] * a[..., 0, 1] + a[..., 1, 0] * a[..., 1, 1]
    g22 = a[..., 0, 1] ** 2 + a[..., 1, 1] ** 2
    h1 = a[..., 0, 0] * db[..., 0] + a[..., 1, 0] * db[..., 1]
    h2 = a[..., 0, 1] * db[..., 0] + a[..., 1, 1] * db[..., 1]

    g11 = _box_blur(g11, winsize)
    g12 = _box_blur(g12, winsize)
    g22 = _box_blur(g22, winsize)
    h1 = _box_blur(h1, winsize)
    h2 = _box_blur(h2, winsize)

    det = g11 * g22 - g12 * g12
    safe = det > 1e-12
    inv_det = np.where(safe, 1.0 / np.where(safe, det, 1.0), 0.0)
    dx = (g22 * h1 - g12 * h2) * inv_det
    dy = (g11 * h2 - g12 * h1) * inv_det
    return np.stack([dx, dy], axis=-1)


def block_match(prev, nxt, block, radius):
    """Exhaustive integer SAD search per block.

    Candidates are scanned in (magnitude^2, dy, dx) order with a strict
    improvement test, which realises the deterministic tie-break.
    """
    h, w = prev.shape
    by, bx = h // block, w // block
    if by == 0 or bx == 0:
        return np.zeros((h, w, 2))
    core = prev[: by * block, : bx * block].reshape(by, block, bx, block)

    candidates = sorted(
        ((dy * dy + dx * dx, dy, dx)
         for dy in range(-radius, radius + 1)
         for dx in range(-radius, radius + 1)),
    )
    best_sad = np.full((by, bx), np.inf)
    best_dy = np.zeros((by, bx))
    best_dx = np.zeros((by, bx))
    ys = np.arange(by) * block
    xs = np.arange(bx) * block
    for _, dy, dx in candidates:
        ok_y = (ys + dy >= 0) & (ys + dy + block <= h)
        ok_x = (xs + dx >= 0) & (xs + dx + block <= w)
        if not (ok_y.any() and ok_x.any()):
            continue
        shifted = np.full((by, block, bx, block), np.inf)
        iy = np.where(ok_y)[0]
        ix = np.where(ok_x)[0]
        for i in iy:
            y0 = ys[i] + dy
            row = nxt[y0 : y0 + block]
            for j in ix:
                x0 = xs[j] + dx
                shifted[i, :, j, :] = row[:, x0 : x0 + block]
        sad = np.abs(core - shifted).sum(axis=(1, 3))
        better = sad < best_sad
        best_sad = np.where(better, sad, best_sad)
        best_dy = np.where(better, dy, best_dy)
        best_dx = np.where(better, dx, best_dx)

    field = np.zeros((h, w, 2))
    field[: by * block, : bx * block, 0] = np.repeat(np.repeat(best_dx, block, 0), block, 1)
    field[: by * block, : bx * block, 1] = np.repeat(np.repeat(best_dy, block, 0), block, 1)
    return field
