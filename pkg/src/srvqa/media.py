"""Video I/O and basic raster conversions.

Everything downstream works on :class:`VideoTensor` holding unit-interval
float64 samples; 8-bit integers exist only at the file boundary. Supported
containers are deliberately simple and bit-exact: numbered PNG sequences,
a raw planar format (JSON header + contiguous planes), and uncompressed
Y4M (C420 with nearest-neighbour chroma upsampling, or C444).
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image


class MediaError(ValueError):
    """Raised for malformed or unsupported video inputs."""


BT601_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass
class VideoTensor:
    """A frame sequence of shape (F, H, W, C) with samples in [0, 1]."""

    frames: np.ndarray
    source_depth: int = 8
    fps: float = 30.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 4:
            raise MediaError(f"expected (F, H, W, C) frames, got shape {self.frames.shape}")
        f, _, _, c = self.frames.shape
        if f < 2:
            raise MediaError("a video needs at least 2 frames")
        if c not in (1, 3):
            raise MediaError(f"channel count must be 1 or 3, got {c}")
        lo, hi = self.frames.min(), self.frames.max()
        if lo < 0.0 or hi > 1.0:
            raise MediaError(f"samples outside [0, 1]: min={lo}, max={hi}")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def channels(self) -> int:
        return self.frames.shape[3]


@dataclass
class Frame:
    """One image of shape (H, W, C), unit floats."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] not in (1, 3):
            raise MediaError(f"expected (H, W, C) pixels with C in {{1,3}}, got {self.pixels.shape}")


_NUM_RE = re.compile(r"(\d+)")


def _numeric_key(path: Path):
    m = _NUM_RE.findall(path.stem)
    return (int(m[-1]) if m else 0, path.name)


def load_video(path, fmt: str) -> VideoTensor:
    """Load a video from ``path`` in one of png_seq / raw_planar / y4m."""
    path = Path(path)
    if not path.exists():
        raise MediaError(f"no such path: {path}")
    if fmt == "png_seq":
        return _load_png_seq(path)
    if fmt == "raw_planar":
        return _load_raw_planar(path)
    if fmt == "y4m":
        return _load_y4m(path)
    raise MediaError(f"unknown format: {fmt}")


def _load_png_seq(directory: Path) -> VideoTensor:
    files = sorted(
        [p for p in directory.iterdir() if p.suffix.lower() in (".png", ".pgm")],
        key=_numeric_key,
    )
    if len(files) < 2:
        raise MediaError(f"need at least 2 frames in {directory}")
    frames = []
    for p in files:
        img = np.asarray(Image.open(p))
        if img.ndim == 2:
            img = img[:, :, None]
        if img.shape[2] == 4:  # drop alpha
            img = img[:, :, :3]
        frames.append(img.astype(np.float64) / 255.0)
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise MediaError(f"inconsistent frame dimensions: {sorted(shapes)}")
    return VideoTensor(np.stack(frames))


def _load_raw_planar(directory: Path) -> VideoTensor:
    header_path = directory / "header.json"
    if not header_path.exists():
        raise MediaError(f"missing {header_path}")
    header = json.loads(header_path.read_text())
    f, h, w, c = header["F"], header["H"], header["W"], header["C"]
    depth = header.get("depth", 8)
    if depth != 8:
        raise MediaError(f"unsupported raw_planar depth: {depth}")
    data = (directory / "frames.bin").read_bytes()
    expected = f * h * w * c
    if len(data) != expected:
        raise MediaError(f"frames.bin has {len(data)} bytes, expected {expected}")
    arr = np.frombuffer(data, dtype=np.uint8).reshape(f, c, h, w)
    frames = np.transpose(arr, (0, 2, 3, 1)).astype(np.float64) / 255.0
    return VideoTensor(frames, fps=header.get("fps", 30.0))


def save_raw_planar(video: VideoTensor, directory) -> None:
    """Write the raw planar container (header.json + frames.bin, 8-bit)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = {
        "F": video.num_frames,
        "H": video.height,
        "W": video.width,
        "C": video.channels,
        "depth": 8,
        "fps": video.fps,
    }
    (directory / "header.json").write_text(json.dumps(header))
    samples = np.round(video.frames * 255.0).astype(np.uint8)
    planes = np.transpose(samples, (0, 3, 1, 2))
    (directory / "frames.bin").write_bytes(planes.tobytes())


def _load_y4m(path: Path) -> VideoTensor:
    raw = path.read_bytes()
    nl = raw.index(b"\n")
    header = raw[:nl].decode("ascii")
    if not header.startswith("YUV4MPEG2"):
        raise MediaError("not a YUV4MPEG2 stream")
    w = h = None
    colorspace = "C420"
    fps = 30.0
    for token in header.split()[1:]:
        if token.startswith("W"):
            w = int(token[1:])
        elif token.startswith("H"):
            h = int(token[1:])
        elif token.startswith("C"):
            colorspace = token
        elif token.startswith("F"):
            num, den = token[1:].split(":")
            fps = int(num) / int(den)
    if w is None or h is None:
        raise MediaError("y4m header missing W/H")
    if colorspace.startswith("C420"):
        subsample = 2
    elif colorspace.startswith("C444"):
        subsample = 1
    else:
        raise MediaError(f"unsupported chroma: {colorspace}")
    cw, ch = w // subsample, h // subsample
    frame_bytes = w * h + 2 * cw * ch
    frames = []
    pos = nl + 1
    while pos < len(raw):
        fnl = raw.index(b"\n", pos)
        if not raw[pos:fnl].startswith(b"FRAME"):
            raise MediaError("malformed y4m frame marker")
        pos = fnl + 1
        chunk = raw[pos : pos + frame_bytes]
        if len(chunk) != frame_bytes:
            raise MediaError("truncated y4m frame payload")
        y = np.frombuffer(chunk, dtype=np.uint8, count=w * h).reshape(h, w)
        u = np.frombuffer(chunk, dtype=np.uint8, count=cw * ch, offset=w * h).reshape(ch, cw)
        v = np.frombuffer(chunk, dtype=np.uint8, count=cw * ch, offset=w * h + cw * ch).reshape(ch, cw)
        if subsample == 2:  # nearest-neighbour chroma upsampling
            u = np.repeat(np.repeat(u, 2, axis=0), 2, axis=1)[:h, :w]
            v = np.repeat(np.repeat(v, 2, axis=0), 2, axis=1)[:h, :w]
        frames.append(np.stack([y, u, v], axis=-1).astype(np.float64) / 255.0)
        pos += frame_bytes
    if len(frames) < 2:
        raise MediaError("y4m stream has fewer than 2 frames")
    return VideoTensor(np.stack(frames), fps=fps)


def to_grayscale(video: VideoTensor) -> VideoTensor:
    """BT.601 luma; identity for single-channel input."""
    if video.channels == 1:
        return VideoTensor(video.frames.copy(), video.source_depth, video.fps)
    gray = np.tensordot(video.frames, BT601_WEIGHTS, axes=([3], [0]))[..., None]
    return VideoTensor(np.clip(gray, 0.0, 1.0), video.source_depth, video.fps)


def resize_bilinear_image(img: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resize of an (H, W, ...) array with half-pixel centers."""
    h, w = img.shape[:2]
    if (h, w) == (new_h, new_w):
        return img.copy()
    ys = (np.arange(new_h) + 0.5) * h / new_h - 0.5
    xs = (np.arange(new_w) + 0.5) * w / new_w - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)
    wx = np.clip(xs - x0, 0.0, 1.0)
    top = img[y0][:, x0] * (1 - wx)[None, :, None] + img[y0][:, x1] * wx[None, :, None] \
        if img.ndim == 3 else img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx)[None, :, None] + img[y1][:, x1] * wx[None, :, None] \
        if img.ndim == 3 else img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    if img.ndim == 3:
        return top * (1 - wy)[:, None, None] + bot * wy[:, None, None]
    return top * (1 - wy)[:, None] + bot * wy[:, None]


def resize_bilinear(video: VideoTensor, new_h: int, new_w: int) -> VideoTensor:
    if new_h < 1 or new_w < 1:
        raise MediaError("target dimensions must be >= 1")
    frames = np.stack([resize_bilinear_image(f, new_h, new_w) for f in video.frames])
    return VideoTensor(np.clip(frames, 0.0, 1.0), video.source_depth, video.fps)


def save_map(map2d: np.ndarray, path, fmt: str = "pgm16") -> None:
    """Dump a scalar map, min-max scaled to the full integer range.

    A constant map is written as zeros so degenerate inputs stay valid.
    """
    map2d = np.asarray(map2d, dtype=np.float64)
    if not np.all(np.isfinite(map2d)):
        raise MediaError("map contains non-finite values")
    lo, hi = map2d.min(), map2d.max()
    if hi > lo:
        unit = (map2d - lo) / (hi - lo)
    else:
        unit = np.zeros_like(map2d)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "pgm16":
        pixels = np.round(unit * 65535.0).astype(">u2")
        h, w = pixels.shape
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
            fh.write(pixels.tobytes())
    elif fmt == "png":
        pixels = np.round(unit * 255.0).astype(np.uint8)
        Image.fromarray(pixels, mode="L").save(path)
    else:
        raise MediaError(f"unknown map format: {fmt}")


def load_pgm16(path) -> np.ndarray:
    """Read back a P5 16-bit PGM written by :func:`save_map`."""
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise MediaError("not a P5 PGM")
    w, h = (int(t) for t in parts[1].split())
    maxval = int(parts[2])
    dtype = ">u2" if maxval > 255 else np.uint8
    return np.frombuffer(parts[3], dtype=dtype, count=w * h).reshape(h, w).astype(np.float64)
