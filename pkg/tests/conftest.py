import numpy as np
import pytest
from scipy import ndimage


def smooth_texture(h, w, seed=0, sigma=2.0, pad=0):
    """Smooth random texture in [0, 1]; flow-friendly."""
    rng = np.random.default_rng(seed)
    img = ndimage.gaussian_filter(rng.random((h + 2 * pad, w + 2 * pad)), sigma)
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo)


def shifted_pair(h, w, dy, dx, seed=0, sigma=2.0):
    """Two crops of one texture related by an exact (dy, dx) translation.

    Fractional shifts use bilinear sampling of the oversized texture.
    """
    pad = int(np.ceil(max(abs(dy), abs(dx)))) + 4
    base = smooth_texture(h, w, seed=seed, sigma=sigma, pad=pad)

    def crop(oy, ox):
        y0, x0 = pad + oy, pad + ox
        iy, ix = int(np.floor(y0)), int(np.floor(x0))
        fy, fx = y0 - iy, x0 - ix
        a = base[iy : iy + h, ix : ix + w]
        b = base[iy : iy + h, ix + 1 : ix + w + 1]
        c = base[iy + 1 : iy + h + 1, ix : ix + w]
        d = base[iy + 1 : iy + h + 1, ix + 1 : ix + w + 1]
        return (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d)

    # a feature at position p in `prev` appears at p + (dx, dy) in `next`
    return crop(0.0, 0.0), crop(-dy, -dx)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_video(f=4, h=12, w=10, c=1, seed=0):
    from srvqa.media import VideoTensor

    r = np.random.default_rng(seed)
    return VideoTensor(r.random((f, h, w, c)))
