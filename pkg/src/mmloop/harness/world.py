"""Seeded synthetic multi-weather world.

The route is a closed rectangle traversed counter-clockwise. Appearance is a
smooth function of arc length: each place carries latent camera and LiDAR
codes, circularly smoothed along the route and linearly interpolated in
between, which are rendered through fixed random basis patterns. Nearby
positions therefore look alike and distant ones do not. Every sample adds
its own transient content (``clutter``) drawn from the same basis, so two
visits to one place never match exactly. Optional look-alike stretches copy
codes from the far side of the loop into one modality only.

Weather effects follow the failure modes they stand in for: glare saturates
a disc and its halo around a low sun in the camera frame, darkness scales it
toward black, rain removes LiDAR returns, flattens the surviving
intensities and barely touches the camera. Each effect acts only on its own
modality.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .. import kernels
from ..geo import latlon_to_utm, utm_to_latlon, wrap_angle
from ..imaging import RINGS, LidarScan

EFFECTS = ("clean", "sun_glare", "after_rain", "darkness")
EFFECT_CATEGORY = {"clean": "C", "sun_glare": "S", "after_rain": "AR", "darkness": "SS"}

CAMERA_SHAPE = (96, 128)
SPEED = 5.0  # m/s
GPS_RATE = 10.0  # Hz
GPS_NOISE = 0.05  # m
ORIGIN = (-33.8886, 151.1873)
RAIN_FLATTEN = 0.85
GLARE_SAT, GLARE_HALO, GLARE_LIFT = 0.55, 0.12, 0.1


@dataclass(frozen=True)
class WorldSpec:
    n_places: int = 60
    loop_length: float = 300.0
    seed: int = 0
    appearance_dim: int = 8
    lidar_cols: int = 180
    origin: tuple = ORIGIN
    code_sigma: float = 1.0  # along-route smoothing of the latent codes, in places
    alias_count: int = 0  # look-alike stretches per modality
    alias_len: int = 3  # places per stretch
    clutter: float = 0.0  # per-sample transient content, in code units
    lidar_clutter: float = 0.0

    def __post_init__(self):
        if self.n_places < 2:
            raise ValueError("n_places must be >= 2")
        if self.loop_length <= 0:
            raise ValueError("loop_length must be positive")


@dataclass(frozen=True)
class WeatherEffect:
    kind: str = "clean"
    severity: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in EFFECTS:
            raise ValueError(f"unknown weather effect {self.kind!r}")
        if not 0.0 <= self.severity <= 1.0:
            raise ValueError("severity must be in [0, 1]")

    @property
    def category(self):
        return EFFECT_CATEGORY[self.kind]


def _smooth_noise(rng, shape, cells):
    """Unit-variance random field: coarse Gaussian grid, bilinearly upsampled."""
    chans = shape[2] if len(shape) == 3 else 1
    coarse = rng.standard_normal((cells[0], cells[1], chans))
    f = kernels.bilinear_resize(coarse, shape[0], shape[1])
    if len(shape) == 2:
        f = f[:, :, 0]
    return (f - f.mean()) / (f.std() + 1e-12)


def _circular_smooth(x, sigma):
    if sigma <= 0:
        return x / x.std(axis=0, keepdims=True)
    n = len(x)
    k = np.arange(n)
    d = np.minimum(k, n - k)
    kern = np.exp(-0.5 * (d / sigma) ** 2)
    kern /= kern.sum()
    out = np.real(np.fft.ifft(np.fft.fft(x, axis=0) * np.fft.fft(kern)[:, None], axis=0))
    return out / out.std(axis=0, keepdims=True)


@dataclass
class World:
    spec: WorldSpec
    side_a: float
    side_b: float
    cam_codes: np.ndarray
    lidar_codes: np.ndarray
    cam_basis: np.ndarray
    lidar_basis: np.ndarray
    origin_en: tuple
    zone: str

    @property
    def spacing(self):
        return self.spec.loop_length / self.spec.n_places

    def place_arc(self):
        return np.arange(self.spec.n_places) * self.spacing

    def local_xy(self, s):
        """Arc length -> (x, y, heading) on the rectangle (counter-clockwise)."""
        s = np.mod(np.asarray(s, dtype=float), self.spec.loop_length)
        a, b = self.side_a, self.side_b
        x = np.empty_like(s)
        y = np.empty_like(s)
        h = np.empty_like(s)
        legs = [(0, a, lambda t: (t, 0.0 * t), 0.0),
                (a, a + b, lambda t: (a + 0.0 * t, t), math.pi / 2),
                (a + b, 2 * a + b, lambda t: (a - t, b + 0.0 * t), -math.pi),
                (2 * a + b, 2 * a + 2 * b, lambda t: (0.0 * t, b - t), -math.pi / 2)]
        for lo, hi, fn, head in legs:
            m = (s >= lo) & (s < hi) if hi > lo else np.zeros(s.shape, bool)
            xx, yy = fn(s[m] - lo)
            x[m], y[m], h[m] = xx, yy, head
        return x, y, h

    def utm(self, s):
        x, y, h = self.local_xy(s)
        return self.origin_en[0] + x, self.origin_en[1] + y, h

    def place_poses(self):
        return self.utm(self.place_arc())

    def _codes_at(self, codes, s):
        n = self.spec.n_places
        u = np.mod(np.asarray(s, dtype=float), self.spec.loop_length) / self.spacing
        i0 = np.floor(u).astype(int) % n
        i1 = (i0 + 1) % n
        w = (u - np.floor(u))[..., None]
        return (1 - w) * codes[i0] + w * codes[i1]

    def camera_code(self, s):
        return self._codes_at(self.cam_codes, s)

    def lidar_code(self, s):
        return self._codes_at(self.lidar_codes, s)


def alias_stretches(spec, rng):
    """Place index pairs (src, dst) whose codes are copied src -> dst.

    Each modality gets ``alias_count`` stretches of ``alias_len`` places that
    look exactly like a stretch half a loop away (think repeated facades for
    the camera, identical kerbs for the LiDAR). The LiDAR stretches sit
    between the camera ones, so no place is aliased in both modalities.
    """
    n = spec.n_places
    k, m = spec.alias_count, spec.alias_len
    cam, lid = [], []
    if k <= 0 or m <= 0:
        return cam, lid
    period = n / (2 * k)
    start = int(rng.integers(0, n))
    for i in range(k):
        c0 = int(round(start + i * period))
        l0 = int(round(start + (i + 0.5) * period))
        for j in range(m):
            cam.append(((c0 + j) % n, (c0 + j + n // 2) % n))
            lid.append(((l0 + j) % n, (l0 + j + n // 2) % n))
    return cam, lid


def generate_world(spec):
    rng = np.random.default_rng([spec.seed, 0])
    n = spec.n_places
    spacing = spec.loop_length / n
    half = n // 2
    na = max(1, int(round(0.3 * n)))
    na = min(na, half)
    side_a = na * spacing
    side_b = spec.loop_length / 2 - side_a
    d = spec.appearance_dim
    cam_codes = _circular_smooth(rng.standard_normal((n, d)), spec.code_sigma)
    lidar_codes = _circular_smooth(rng.standard_normal((n, d)), spec.code_sigma)
    h, w = CAMERA_SHAPE
    cam_basis = np.stack([_smooth_noise(rng, (h, w, 3), (6, 8)) for _ in range(d)])
    lidar_basis = np.stack([_smooth_noise(rng, (RINGS, spec.lidar_cols), (4, 24)) for _ in range(d)])
    cam_alias, lid_alias = alias_stretches(spec, np.random.default_rng([spec.seed, 1]))
    for src, dst in cam_alias:
        cam_codes[dst] = cam_codes[src]
    for src, dst in lid_alias:
        lidar_codes[dst] = lidar_codes[src]
    e, nn, zone = latlon_to_utm(*spec.origin)
    return World(spec, side_a, side_b, cam_codes, lidar_codes, cam_basis, lidar_basis,
                 (float(e[0]), float(nn[0])), zone)


@dataclass
class SyntheticRun:
    run_id: str
    effect: WeatherEffect
    sample_ids: np.ndarray
    timestamps: np.ndarray
    arc: np.ndarray
    rgb: list
    scans: list
    fix_times: np.ndarray
    fix_lat: np.ndarray
    fix_lon: np.ndarray
    zone: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def weather(self):
        return self.effect.category

    def __len__(self):
        return len(self.sample_ids)


def _render_rgb(world, code, rng):
    img = 0.5 + 0.2 * np.tensordot(code, world.cam_basis, axes=(0, 0))
    gain = 1.0 + 0.04 * rng.standard_normal()
    offset = 0.02 * rng.standard_normal()
    img = img * gain + offset + 0.02 * rng.standard_normal(img.shape)
    return img


def _render_scan(world, code, rng):
    cols = world.spec.lidar_cols
    pattern = 0.45 + 0.28 * np.tensordot(code, world.lidar_basis, axes=(0, 0))
    ring = np.repeat(np.arange(RINGS), cols)
    az = np.tile((np.arange(cols) + 0.5) * (2 * np.pi / cols) - np.pi, RINGS)
    inten = np.clip(pattern.ravel() + 0.03 * rng.standard_normal(ring.size), 0.0, 1.0)
    rng_m = 4.0 + 30.0 * rng.random(ring.size)
    return LidarScan(ring, az, rng_m, inten)


def _apply_rgb_weather(img, effect, rng):
    v = effect.severity
    if effect.kind == "sun_glare" and v > 0:
        h, w = img.shape[:2]
        cy = rng.uniform(0.4 * h, 0.8 * h)
        cx = rng.uniform(0.2 * w, 0.8 * w)
        yy, xx = np.mgrid[0:h, 0:w]
        dist = np.hypot(yy - cy, xx - cx)
        # the glare disc grows quickly as the sun nears the optical axis
        sat_frac = GLARE_SAT * v ** 3
        halo_frac = min(1.0, sat_frac + GLARE_HALO * v)
        r_sat = np.quantile(dist, sat_frac)
        r_halo = max(np.quantile(dist, halo_frac), r_sat + 1e-6)
        blend = np.clip((r_halo - dist) / (r_halo - r_sat), 0.0, 1.0)[..., None]
        img = img * (1.0 + GLARE_LIFT * v)
        img = img * (1 - blend) + blend
    elif effect.kind == "darkness" and v > 0:
        img = img * (1.0 - 0.85 * v) + 0.02 * v * rng.standard_normal(img.shape)
    elif effect.kind == "after_rain" and v > 0:
        img = img * (1.0 - 0.05 * v) + 0.01 * v * rng.standard_normal(img.shape)
    return img


def _apply_scan_weather(scan, effect, rng):
    v = effect.severity
    if effect.kind == "after_rain" and v > 0:
        keep = rng.random(len(scan)) >= v
        scan = scan.subset(keep)
        # wet surfaces flatten reflectivity toward a common dull level
        inten = 0.3 + (scan.intensity - 0.3) * (1.0 - RAIN_FLATTEN * v)
        return LidarScan(scan.ring, scan.azimuth, scan.range, np.clip(inten, 0.0, 1.0))
    return scan


def render_run(world, effect=WeatherEffect(), jitter_seed=0, run_id="run0", samples_per_place=2,
               id_offset=0, t0=0.0):
    """Render one lap: sensor samples every spacing / samples_per_place metres."""
    spec = world.spec
    L = spec.loop_length
    n = spec.n_places * samples_per_place
    step = L / n
    base = [spec.seed, int(jitter_seed)]
    pose_rng = np.random.default_rng(base + [1])
    cam_rng = np.random.default_rng(base + [2])
    lid_rng = np.random.default_rng(base + [3])
    kind = EFFECTS.index(effect.kind)
    cam_w_rng = np.random.default_rng(base + [int(effect.seed), 10 + kind])
    lid_w_rng = np.random.default_rng(base + [int(effect.seed), 20 + kind])

    arc = (np.arange(n) + 0.5) * step + 0.25 * step * pose_rng.uniform(-1, 1, n)
    arc = np.clip(arc, 0.05, L - 0.05)
    timestamps = t0 + arc / SPEED

    rgb, scans = [], []
    cam_codes = world.camera_code(arc)
    lid_codes = world.lidar_code(arc)
    # passing cars, pedestrians: drawn per sample from the same basis
    if spec.clutter > 0:
        cam_codes = cam_codes + spec.clutter * cam_rng.standard_normal(cam_codes.shape)
    if spec.lidar_clutter > 0:
        lid_codes = lid_codes + spec.lidar_clutter * lid_rng.standard_normal(lid_codes.shape)
    for i in range(n):
        img = _render_rgb(world, cam_codes[i], cam_rng)
        img = _apply_rgb_weather(img, effect, cam_w_rng)
        rgb.append(np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8))
        scan = _render_scan(world, lid_codes[i], lid_rng)
        scans.append(_apply_scan_weather(scan, effect, lid_w_rng))

    # GPS track along the centre line, slightly noisy, bracketing every sample
    n_fix = int(math.ceil(L / SPEED * GPS_RATE)) + 1
    ft = t0 + np.arange(n_fix) / GPS_RATE
    fs = (ft - t0) * SPEED
    fe, fn, _ = world.utm(np.minimum(fs, L - 1e-9))
    fe = fe + GPS_NOISE * pose_rng.standard_normal(n_fix)
    fn = fn + GPS_NOISE * pose_rng.standard_normal(n_fix)
    lat, lon = utm_to_latlon(fe, fn, world.zone)
    ids = id_offset + np.arange(n, dtype=np.int64)
    return SyntheticRun(run_id, effect, ids, timestamps, arc, rgb, scans, ft, lat, lon, world.zone)


def true_heading(world, s):
    return wrap_angle(world.local_xy(s)[2])
