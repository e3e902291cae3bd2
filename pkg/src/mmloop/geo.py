"""Geodetic fixes to metric poses, place discretization and train/test splits.

UTM uses the Krueger n-series (third order), which is good to about a
millimetre within a zone. Zones are plain 6 degree bands; the Norway and
Svalbard exceptions are not applied.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .errors import ExtrapolationError, InsufficientDataError, InvalidInputError, ConfigError

HEADING_GATE = math.pi / 2
MIN_STEP = 0.05  # m; shorter moves keep the previous heading

# WGS84
_A = 6378137.0
_F = 1 / 298.257223563
_K0 = 0.9996
_E0 = 500000.0
_N0_SOUTH = 10000000.0

_n = _F / (2 - _F)
_AA = _A / (1 + _n) * (1 + _n ** 2 / 4 + _n ** 4 / 64)
_ALPHA = (_n / 2 - 2 * _n ** 2 / 3 + 5 * _n ** 3 / 16,
          13 * _n ** 2 / 48 - 3 * _n ** 3 / 5,
          61 * _n ** 3 / 240)
_BETA = (_n / 2 - 2 * _n ** 2 / 3 + 37 * _n ** 3 / 96,
         _n ** 2 / 48 + _n ** 3 / 15,
         17 * _n ** 3 / 480)
_DELTA = (2 * _n - 2 * _n ** 2 / 3 - 2 * _n ** 3,
          7 * _n ** 2 / 3 - 8 * _n ** 3 / 5,
          56 * _n ** 3 / 15)
_C = 2 * math.sqrt(_n) / (1 + _n)


@dataclass(frozen=True)
class GeoFix:
    timestamp: float
    latitude: float
    longitude: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise InvalidInputError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise InvalidInputError(f"longitude {self.longitude} outside [-180, 180]")


@dataclass(frozen=True)
class MetricPose:
    easting: float
    northing: float
    heading: float = float("nan")
    zone: str = ""

    def distance_to(self, other):
        return math.hypot(self.easting - other.easting, self.northing - other.northing)


def wrap_angle(a):
    """Map angles to [-pi, pi)."""
    return (np.asarray(a, dtype=float) + np.pi) % (2 * np.pi) - np.pi


def heading_difference(a, b):
    """Absolute circular difference in [0, pi]."""
    return np.abs(wrap_angle(np.asarray(a) - np.asarray(b)))


def zone_number(longitude):
    return min(int((longitude + 180.0) // 6) + 1, 60)


def zone_label(number, south):
    return f"{number}{'S' if south else 'N'}"


def parse_zone(zone):
    return int(zone[:-1]), zone[-1].upper() == "S"


def central_meridian(number):
    return (number - 1) * 6 - 180 + 3


def latlon_to_utm(lat, lon, zone=None):
    """Vectorised forward projection. Returns (easting, northing, zone label).

    All points are projected into one zone: ``zone`` if given, else the zone
    of the first point.
    """
    lat = np.atleast_1d(np.asarray(lat, dtype=float))
    lon = np.atleast_1d(np.asarray(lon, dtype=float))
    if np.any(np.abs(lat) >= 84.0):
        raise InvalidInputError("latitude outside the UTM band |lat| < 84")
    if np.any(np.abs(lon) > 180.0):
        raise InvalidInputError("longitude outside [-180, 180]")
    if zone is None:
        zone = zone_label(zone_number(lon[0]), lat[0] < 0)
    number, south = parse_zone(zone)
    phi = np.radians(lat)
    dlam = np.radians(lon - central_meridian(number))
    dlam = (dlam + np.pi) % (2 * np.pi) - np.pi
    sphi = np.sin(phi)
    t = np.sinh(np.arctanh(sphi) - _C * np.arctanh(_C * sphi))
    xi_p = np.arctan2(t, np.cos(dlam))
    eta_p = np.arctanh(np.sin(dlam) / np.sqrt(1 + t * t))
    e = eta_p.copy()
    nn = xi_p.copy()
    for j, a in enumerate(_ALPHA, start=1):
        e += a * np.cos(2 * j * xi_p) * np.sinh(2 * j * eta_p)
        nn += a * np.sin(2 * j * xi_p) * np.cosh(2 * j * eta_p)
    easting = _E0 + _K0 * _AA * e
    northing = _K0 * _AA * nn + (_N0_SOUTH if south else 0.0)
    return easting, northing, zone


def utm_to_latlon(easting, northing, zone):
    """Inverse of :func:`latlon_to_utm` for one zone."""
    number, south = parse_zone(zone)
    e = np.atleast_1d(np.asarray(easting, dtype=float))
    nn = np.atleast_1d(np.asarray(northing, dtype=float)) - (_N0_SOUTH if south else 0.0)
    xi = nn / (_K0 * _AA)
    eta = (e - _E0) / (_K0 * _AA)
    xi_p = xi.copy()
    eta_p = eta.copy()
    for j, b in enumerate(_BETA, start=1):
        xi_p -= b * np.sin(2 * j * xi) * np.cosh(2 * j * eta)
        eta_p -= b * np.cos(2 * j * xi) * np.sinh(2 * j * eta)
    chi = np.arcsin(np.sin(xi_p) / np.cosh(eta_p))
    phi = chi.copy()
    for j, d in enumerate(_DELTA, start=1):
        phi += d * np.sin(2 * j * chi)
    lam = np.arctan2(np.sinh(eta_p), np.cos(xi_p))
    lon = central_meridian(number) + np.degrees(lam)
    return np.degrees(phi), (lon + 180.0) % 360.0 - 180.0


def utm_convert(fix, zone=None):
    """GeoFix -> MetricPose with heading unset (NaN)."""
    e, n, z = latlon_to_utm(fix.latitude, fix.longitude, zone)
    return MetricPose(float(e[0]), float(n[0]), float("nan"), z)


@dataclass
class Trajectory:
    """Time-ordered metric fixes of one run, stored column-wise."""

    run_id: str
    timestamps: np.ndarray
    easting: np.ndarray
    northing: np.ndarray
    heading: np.ndarray = None
    zone: str = ""

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.easting = np.asarray(self.easting, dtype=float)
        self.northing = np.asarray(self.northing, dtype=float)
        if self.heading is None:
            self.heading = np.full(len(self.timestamps), np.nan)
        self.heading = np.asarray(self.heading, dtype=float)
        if len(self.timestamps) > 1 and np.any(np.diff(self.timestamps) <= 0):
            raise InvalidInputError(f"run {self.run_id}: timestamps not strictly increasing")

    def __len__(self):
        return len(self.timestamps)

    def pose(self, i):
        return MetricPose(float(self.easting[i]), float(self.northing[i]), float(self.heading[i]), self.zone)

    @classmethod
    def from_fixes(cls, run_id, fixes, zone=None):
        """Project GeoFixes into a Trajectory, in ``zone`` or the zone of the first fix."""
        if not fixes:
            return cls(run_id, [], [], [], None, zone or "")
        lat = [f.latitude for f in fixes]
        lon = [f.longitude for f in fixes]
        e, n, zone = latlon_to_utm(lat, lon, zone)
        return cls(run_id, [f.timestamp for f in fixes], e, n, None, zone)


def heading_from_track(traj):
    """Fill headings with the direction of travel towards the next fix."""
    n = len(traj)
    if n < 2:
        raise InsufficientDataError(f"run {traj.run_id}: heading needs at least 2 fixes, got {n}")
    de = np.diff(traj.easting)
    dn = np.diff(traj.northing)
    step = np.hypot(de, dn)
    raw = np.arctan2(dn, de)
    heading = np.full(n, np.nan)
    last = np.nan
    for i in range(n - 1):
        if step[i] >= MIN_STEP:
            last = raw[i]
        heading[i] = last
    heading[n - 1] = heading[n - 2]
    # leading stationary fixes take the first valid heading; no motion at all -> 0
    valid = np.flatnonzero(~np.isnan(heading))
    if len(valid) == 0:
        heading[:] = 0.0
    else:
        heading[:valid[0]] = heading[valid[0]]
    return replace(traj, heading=wrap_angle(heading))


def interpolate_poses(traj, times):
    """Vectorised pose interpolation.

    Returns (easting, northing, heading, inside) where ``inside`` flags the
    query times bracketed by the trajectory; outside entries are NaN.
    """
    t = np.atleast_1d(np.asarray(times, dtype=float))
    ts = traj.timestamps
    out_e = np.full(len(t), np.nan)
    out_n = np.full(len(t), np.nan)
    out_h = np.full(len(t), np.nan)
    if len(ts) == 0:
        return out_e, out_n, out_h, np.zeros(len(t), dtype=bool)
    inside = (t >= ts[0]) & (t <= ts[-1])
    ti = t[inside]
    hi = np.searchsorted(ts, ti, side="left")
    exact = (hi < len(ts)) & (ts[np.minimum(hi, len(ts) - 1)] == ti)
    hi = np.clip(hi, 1, len(ts) - 1)
    lo = hi - 1
    w = (ti - ts[lo]) / (ts[hi] - ts[lo])
    e = traj.easting[lo] + (traj.easting[hi] - traj.easting[lo]) * w
    n = traj.northing[lo] + (traj.northing[hi] - traj.northing[lo]) * w
    h = wrap_angle(traj.heading[lo] + wrap_angle(traj.heading[hi] - traj.heading[lo]) * w)
    k = np.searchsorted(ts, ti[exact])
    e[exact] = traj.easting[k]
    n[exact] = traj.northing[k]
    h[exact] = traj.heading[k]
    out_e[inside], out_n[inside], out_h[inside] = e, n, h
    return out_e, out_n, out_h, inside


def interpolate_pose(traj, t):
    e, n, h, inside = interpolate_poses(traj, [t])
    if not inside[0]:
        if len(traj) == 0:
            raise ExtrapolationError(f"run {traj.run_id} has no fixes")
        raise ExtrapolationError(
            f"t={t} outside [{traj.timestamps[0]}, {traj.timestamps[-1]}] of run {traj.run_id}")
    return MetricPose(float(e[0]), float(n[0]), float(h[0]), traj.zone)


@dataclass(frozen=True)
class Place:
    place_id: int
    pose: MetricPose
    source_timestamp: float


def discretize_places(traj, d_p=5.0, heading_gate=HEADING_GATE):
    """Greedy time-order sweep: a fix becomes a place unless an accepted place
    lies closer than ``d_p`` with a heading within ``heading_gate``."""
    if d_p <= 0:
        raise ConfigError("d_p must be positive")
    if len(traj) == 0:
        return []
    if np.any(np.isnan(traj.heading)):
        raise InvalidInputError("headings must be filled before discretization")
    idx = kernels.greedy_places(traj.easting, traj.northing, traj.heading, d_p, heading_gate)
    return [Place(pid, traj.pose(i), float(traj.timestamps[i])) for pid, i in enumerate(idx)]


def place_arrays(places):
    e = np.array([p.pose.easting for p in places], dtype=float)
    n = np.array([p.pose.northing for p in places], dtype=float)
    h = np.array([p.pose.heading for p in places], dtype=float)
    return e, n, h


def assign_samples(places, samples, d_w=10.0, heading_gate=HEADING_GATE):
    """Attach each sample to every place within ``d_w`` whose heading is within the gate.

    ``samples`` is an iterable of (timestamp, MetricPose, sample_id).
    Returns ({place_id: [sample_id, ...]}, [unassigned sample_id, ...]).
    """
    mapping = {p.place_id: [] for p in places}
    samples = list(samples)
    if not places:
        return mapping, [s[2] for s in samples]
    pe, pn, ph = place_arrays(places)
    tree = cKDTree(np.column_stack([pe, pn]))
    pids = [p.place_id for p in places]
    unassigned = []
    for _, pose, sid in samples:
        near = tree.query_ball_point([pose.easting, pose.northing], d_w)
        hit = False
        for j in sorted(near):
            # the tree radius is inclusive up to rounding; re-check exactly
            if math.hypot(pe[j] - pose.easting, pn[j] - pose.northing) > d_w:
                continue
            if heading_difference(ph[j], pose.heading) < heading_gate:
                mapping[pids[j]].append(sid)
                hit = True
        if not hit:
            unassigned.append(sid)
    return mapping, unassigned


def nearest_place(places, east, north, heading, heading_gate=HEADING_GATE):
    """Nearest heading-compatible place for each query (-1 if none).

    Returns (place_index, distance)."""
    pe, pn, ph = place_arrays(places)
    east = np.atleast_1d(east)
    north = np.atleast_1d(north)
    heading = np.atleast_1d(heading)
    d = np.hypot(pe[None, :] - east[:, None], pn[None, :] - north[:, None])
    ok = heading_difference(ph[None, :], heading[:, None]) < heading_gate
    d = np.where(ok, d, np.inf)
    j = np.argmin(d, axis=1)
    dist = d[np.arange(len(j)), j]
    j = np.where(np.isfinite(dist), j, -1)
    return j, dist


@dataclass
class PlaceSplit:
    train: set = field(default_factory=set)
    test: set = field(default_factory=set)
    buffer: set = field(default_factory=set)

    def label(self, place_id):
        if place_id in self.train:
            return "train"
        if place_id in self.test:
            return "test"
        return "buffer"


def split_places(places, train_fraction=0.6, buffer_radius=10.0, seed=0, n_segments=2):
    """Alternate contiguous train/test segments along the trajectory.

    The place sequence (place_id order) is cut into ``n_segments`` blocks;
    each block opens with a train run of ``train_fraction`` of its length and
    closes with a test run. A seeded cyclic offset decides where the first
    block starts. Test places closer than ``buffer_radius`` to any train
    place are moved to the buffer set.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if buffer_radius < 0:
        raise ConfigError("buffer_radius must be non-negative")
    if n_segments < 1:
        raise ConfigError("n_segments must be >= 1")
    ordered = sorted(places, key=lambda p: p.place_id)
    n = len(ordered)
    if n == 0:
        return PlaceSplit()
    offset = int(np.random.default_rng(seed).integers(n))
    is_train = np.zeros(n, dtype=bool)
    for i in range(n):
        pos = (i - offset) % n
        block = min(pos * n_segments // n, n_segments - 1)
        start = -(-block * n // n_segments)
        end = -(-(block + 1) * n // n_segments)
        is_train[i] = pos - start < max(1, round(train_fraction * (end - start)))
    ids = np.array([p.place_id for p in ordered])
    train = set(ids[is_train].tolist())
    test = set(ids[~is_train].tolist())
    buffer = set()
    if buffer_radius > 0 and train and test:
        pe, pn, _ = place_arrays(ordered)
        tree = cKDTree(np.column_stack([pe[is_train], pn[is_train]]))
        for i in np.flatnonzero(~is_train):
            d, _ = tree.query([pe[i], pn[i]])
            if d < buffer_radius:
                buffer.add(int(ids[i]))
        test -= buffer
    return PlaceSplit(train, test, buffer)
