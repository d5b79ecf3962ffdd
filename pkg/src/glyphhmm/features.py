"""Sliding-window gradient-orientation features for binary character images."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .dataset import BinaryImage

SQRT2 = math.sqrt(2.0)

CACHE_MAGIC = b"GHFC"
CACHE_VERSION = 1
_WEIGHT_CODES = {"unit": 0, "magnitude": 1}
_WEIGHT_NAMES = {v: k for k, v in _WEIGHT_CODES.items()}


class EmptyImage(Exception):
    """Raised when an image has no foreground pixel."""


class CacheFormatError(Exception):
    pass


@dataclass(frozen=True)
class FeatureConfig:
    w: int = 8
    h: int = 8
    bins: int = 5
    weight_mode: str = "unit"
    stride: int = 1
    standard_height: int = 64

    def __post_init__(self):
        if self.w < 1 or self.h < 1 or self.bins < 2 or self.stride < 1:
            raise ValueError("invalid feature configuration")
        if self.standard_height < self.h:
            raise ValueError("standard_height must be at least h")
        if self.weight_mode not in _WEIGHT_CODES:
            raise ValueError(f"unknown weight_mode {self.weight_mode!r}")

    @property
    def dimension(self) -> int:
        return self.bins * self.h


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    """Frames are float32 (n_frames, bins*h); one frame per window position."""

    frames: np.ndarray
    source_width: int

    def __post_init__(self):
        fr = np.asarray(self.frames, dtype=np.float32)
        if fr.ndim != 2 or fr.shape[0] < 1:
            raise ValueError("frames must be a non-empty 2D array")
        fr.setflags(write=False)
        object.__setattr__(self, "frames", fr)

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def dimension(self) -> int:
        return self.frames.shape[1]


def crop_to_foreground(image: BinaryImage) -> BinaryImage:
    """Crop to the minimal bounding box of foreground pixels."""
    rows = np.flatnonzero(image.pixels.any(axis=1))
    cols = np.flatnonzero(image.pixels.any(axis=0))
    if rows.size == 0:
        raise EmptyImage("image has no foreground pixel")
    return BinaryImage(image.pixels[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1])


def normalize_height(image: BinaryImage, standard_height: int) -> BinaryImage:
    """Rescale to a standard height, preserving aspect ratio (nearest neighbor)."""
    if image.height == standard_height:
        return image
    scale = standard_height / image.height
    new_width = max(1, round(image.width * scale))
    # pixel-center sampling, matching the naive per-pixel resampler
    rows = np.minimum(
        ((np.arange(standard_height) + 0.5) * image.height / standard_height).astype(int),
        image.height - 1,
    )
    cols = np.minimum(
        ((np.arange(new_width) + 0.5) * image.width / new_width).astype(int),
        image.width - 1,
    )
    return BinaryImage(image.pixels[np.ix_(rows, cols)])


def gradient_field(image: BinaryImage):
    """Central differences with a [-1 0 1] mask and replicate padding.

    Returns integer (gx, gy) arrays with values in {-1, 0, 1}.
    """
    intensity = image.pixels.astype(np.int8)
    padded = np.pad(intensity, 1, mode="edge")
    gx = padded[1:-1, 2:].astype(np.int32) - padded[1:-1, :-2]
    gy = padded[2:, 1:-1].astype(np.int32) - padded[:-2, 1:-1]
    return gx, gy


def orientation_bin(gx: int, gy: int, bins: int):
    """Histogram bin of the gradient direction, or None for a zero gradient.

    Bin k covers [k*360/bins, (k+1)*360/bins) degrees; exact multiples start
    the higher-indexed bin.
    """
    if gx == 0 and gy == 0:
        return None
    theta = math.degrees(math.atan2(gy, gx)) % 360.0
    return min(int(theta // (360.0 / bins)), bins - 1)


def _cell_bounds(height: int, h: int):
    # h equal horizontal bands; the last band absorbs the remainder
    size = height // h
    bounds = [(i * size, (i + 1) * size) for i in range(h - 1)]
    bounds.append(((h - 1) * size, height))
    return bounds


def _bin_index_grid(gx, gy, bins):
    theta = np.degrees(np.arctan2(gy, gx)) % 360.0
    idx = np.minimum((theta // (360.0 / bins)).astype(np.int64), bins - 1)
    idx[(gx == 0) & (gy == 0)] = -1
    return idx


def extract_features(image: BinaryImage, cfg: FeatureConfig) -> FeatureSequence:
    """Crop, rescale and scan the image into gradient-histogram frames.

    A window of width ``cfg.w`` slides left to right in steps of
    ``cfg.stride``; each window is cut into ``cfg.h`` cells stacked
    top-to-bottom and each cell contributes a ``cfg.bins``-bin orientation
    histogram. Zero-gradient pixels contribute nothing. Unit mode adds 1 per
    contributing pixel, magnitude mode adds the gradient magnitude.
    """
    image = normalize_height(crop_to_foreground(image), cfg.standard_height)
    source_width = image.width

    pixels = image.pixels
    if source_width < cfg.w:
        pad = np.zeros((cfg.standard_height, cfg.w - source_width), dtype=bool)
        pixels = np.hstack([pixels, pad])
    width = pixels.shape[1]

    gx, gy = gradient_field(BinaryImage(pixels))
    bin_idx = _bin_index_grid(gx, gy, cfg.bins)
    sq_mag = gx * gx + gy * gy  # 0, 1 or 2 for a binary image

    n_frames = (width - cfg.w) // cfg.stride + 1
    bounds = _cell_bounds(cfg.standard_height, cfg.h)

    frames = np.zeros((n_frames, cfg.dimension), dtype=np.float64)
    for t in range(n_frames):
        left = t * cfg.stride
        for c, (top, bottom) in enumerate(bounds):
            idx = bin_idx[top:bottom, left : left + cfg.w]
            mag = sq_mag[top:bottom, left : left + cfg.w]
            # exact counts per bin, split by squared magnitude (1 vs 2) so the
            # magnitude-weighted histogram a + b*sqrt(2) is order-independent
            n1 = np.bincount(idx[mag == 1], minlength=cfg.bins)
            n2 = np.bincount(idx[mag == 2], minlength=cfg.bins)
            if cfg.weight_mode == "unit":
                hist = n1 + n2
            else:
                hist = n1 + n2 * SQRT2
            frames[t, c * cfg.bins : (c + 1) * cfg.bins] = hist

    return FeatureSequence(frames=frames.astype(np.float32), source_width=source_width)


def save_feature_cache(path, seq: FeatureSequence, cfg: FeatureConfig) -> None:
    """Write a feature sequence to the binary cache format (bit-exact round trip)."""
    frames = np.ascontiguousarray(seq.frames, dtype="<f4")
    header = struct.pack(
        "<4sIIIIIBI",
        CACHE_MAGIC,
        CACHE_VERSION,
        cfg.bins,
        cfg.h,
        cfg.w,
        cfg.stride,
        _WEIGHT_CODES[cfg.weight_mode],
        frames.shape[0],
    ) + struct.pack("<I", seq.source_width)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(frames.tobytes())


def load_feature_cache(path):
    """Read a cached feature sequence; returns (FeatureSequence, header dict)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    head_fmt = "<4sIIIIIBI"
    head_size = struct.calcsize(head_fmt)
    if len(blob) < head_size + 4:
        raise CacheFormatError(f"truncated cache file: {path}")
    magic, version, bins, h, w, stride, wcode, n_frames = struct.unpack_from(head_fmt, blob)
    if magic != CACHE_MAGIC:
        raise CacheFormatError(f"bad magic in {path}")
    if version != CACHE_VERSION:
        raise CacheFormatError(f"unsupported cache version {version}")
    (source_width,) = struct.unpack_from("<I", blob, head_size)
    body = np.frombuffer(blob, dtype="<f4", offset=head_size + 4)
    if body.size != n_frames * bins * h:
        raise CacheFormatError(f"frame payload size mismatch in {path}")
    seq = FeatureSequence(frames=body.reshape(n_frames, bins * h), source_width=source_width)
    header = {
        "bins": bins,
        "h": h,
        "w": w,
        "stride": stride,
        "weight_mode": _WEIGHT_NAMES[wcode],
        "n_frames": n_frames,
    }
    return seq, header
