"""Network input layouts: resized RGB, LiDAR intensity image and the fused image.

Every layout is a 224 x 224 x 3 float tensor in [0, 1]. The fused layout
stacks 16 intensity rows (one per laser ring) above 208 RGB rows.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import kernels
from .errors import InvalidInputError

NET_SIZE = 224
RINGS = 16
FUSED_RGB_ROWS = NET_SIZE - RINGS  # 208
ROW_REPEAT = NET_SIZE // RINGS  # 14
DEFAULT_COLS = 720
FOV_FULL = (-math.pi, math.pi)
FOV_FRONT = (-math.pi / 2, math.pi / 2)
RAW_INTENSITY_MAX = 255.0
LAYOUTS = ("rgb", "intensity", "fused")


@dataclass
class NetInput:
    tensor: np.ndarray
    layout: str

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise InvalidInputError(f"unknown layout {self.layout!r}")


@dataclass
class LidarScan:
    """Point list of one sweep; intensity already normalized to [0, 1]."""

    ring: np.ndarray
    azimuth: np.ndarray
    range: np.ndarray
    intensity: np.ndarray

    def __post_init__(self):
        self.ring = np.asarray(self.ring, dtype=np.int64).reshape(-1)
        self.azimuth = np.asarray(self.azimuth, dtype=float).reshape(-1)
        self.range = np.asarray(self.range, dtype=float).reshape(-1)
        self.intensity = np.asarray(self.intensity, dtype=float).reshape(-1)
        n = len(self.ring)
        if not (len(self.azimuth) == len(self.range) == len(self.intensity) == n):
            raise InvalidInputError("scan columns differ in length")
        if n and (self.ring.min() < 0 or self.ring.max() >= RINGS):
            raise InvalidInputError("ring index outside 0..15")
        if n and (self.intensity.min() < 0 or self.intensity.max() > 1):
            raise InvalidInputError("intensity outside [0, 1]")

    def __len__(self):
        return len(self.ring)

    @classmethod
    def empty(cls):
        return cls([], [], [], [])

    def subset(self, mask):
        return LidarScan(self.ring[mask], self.azimuth[mask], self.range[mask], self.intensity[mask])


def normalize_raw_intensity(raw):
    """Sensor intensity (0..255) -> [0, 1]."""
    return np.clip(np.asarray(raw, dtype=float) / RAW_INTENSITY_MAX, 0.0, 1.0)


def _check_rgb(img):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InvalidInputError(f"RGB image must be H x W x 3, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise InvalidInputError("zero-sized image")
    return img


def resize_rgb(img, target=(NET_SIZE, NET_SIZE)):
    """8-bit RGB -> bilinear resize to ``target`` (rows, cols), scaled to [0, 1].

    With the default target the result is a NetInput; other targets return
    the bare array (used for the fused layout).
    """
    img = _check_rgb(img)
    x = img.astype(np.float64) / 255.0
    out = np.clip(kernels.bilinear_resize(x, target[0], target[1]), 0.0, 1.0)
    if tuple(target) == (NET_SIZE, NET_SIZE):
        return NetInput(out, "rgb")
    return out


def project_intensity(scan, cols=DEFAULT_COLS, fov=FOV_FULL):
    """Bin a scan into a 16 x cols intensity image; collisions keep the max."""
    if cols < 1:
        raise InvalidInputError("cols must be >= 1")
    start, end = fov
    width = end - start
    if width <= 0:
        raise InvalidInputError("empty field of view")
    img = np.zeros((RINGS, cols))
    if len(scan) == 0:
        return img
    keep = (scan.azimuth >= start) & (scan.azimuth < end)
    col = np.floor((scan.azimuth[keep] - start) / width * cols).astype(np.int64)
    col = np.clip(col, 0, cols - 1)
    return kernels.scatter_max(scan.ring[keep], col, scan.intensity[keep], img)


def _intensity_rows(img, width):
    img = np.asarray(img, dtype=float)
    if img.ndim != 2 or img.shape[0] != RINGS:
        raise InvalidInputError(f"intensity image must be {RINGS} x cols, got {img.shape}")
    return kernels.bilinear_resize(img[:, :, None], RINGS, width)[:, :, 0]


def intensity_to_netinput(img):
    """Replicate each ring 14x vertically, bilinear along azimuth, 3 channels."""
    rows = _intensity_rows(img, NET_SIZE)
    tall = np.repeat(rows, ROW_REPEAT, axis=0)
    out = np.clip(np.repeat(tall[:, :, None], 3, axis=2), 0.0, 1.0)
    return NetInput(out, "intensity")


def compose_fused(intensity, rgb):
    """Rows 0-15: intensity (azimuth resized to 224); rows 16-223: RGB resized to 208 x 224."""
    top = _intensity_rows(intensity, NET_SIZE)
    out = np.empty((NET_SIZE, NET_SIZE, 3))
    out[:RINGS] = top[:, :, None]
    out[RINGS:] = resize_rgb(rgb, (FUSED_RGB_ROWS, NET_SIZE))
    return NetInput(np.clip(out, 0.0, 1.0), "fused")


def write_scan(path, scan):
    """Line-delimited ``ring, azimuth_rad, range_m, intensity_0_1``."""
    with open(path, "w") as fh:
        for r, a, d, i in zip(scan.ring, scan.azimuth, scan.range, scan.intensity):
            fh.write(f"{r},{a:.6f},{d:.3f},{i:.4f}\n")


def read_scan(path):
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.size == 0:
        return LidarScan.empty()
    if data.shape[1] != 4:
        raise InvalidInputError(f"{path}: expected 4 columns, got {data.shape[1]}")
    return LidarScan(data[:, 0].astype(np.int64), data[:, 1], data[:, 2], data[:, 3])


def write_rgb(path, img):
    from PIL import Image
    Image.fromarray(np.asarray(img, dtype=np.uint8), "RGB").save(path)


def read_rgb(path):
    from PIL import Image
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)
