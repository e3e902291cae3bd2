"""Triplet database construction.

Positives are cross-run samples attached to a common place and within
``d_w`` of each other. Negatives come from one of two regimes: ``random``
draws uniformly from samples farther than ``t_n``; ``hard`` draws uniformly
from the annulus (d_w, hard_radius].
"""

from dataclasses import dataclass, field, asdict
import logging
import math

import numpy as np

from .errors import ConfigError, DataError, MiningExhaustedError

log = logging.getLogger(__name__)

REGIMES = ("random", "hard")
_MAGIC = "# mmloop-triplets v1"


@dataclass(frozen=True)
class MiningConfig:
    d_w: float = 10.0
    t_n: float = 50.0
    hard_radius: float = 25.0
    seed: int = 0
    heading_gate: float = math.pi / 2

    def __post_init__(self):
        if not self.d_w < self.hard_radius <= self.t_n:
            raise ConfigError(
                f"need d_w < hard_radius <= t_n, got {self.d_w}, {self.hard_radius}, {self.t_n}")


@dataclass(frozen=True)
class TripletRecord:
    anchor: int
    positive: int
    negative: int
    regime: str


@dataclass
class TripletDb:
    anchors: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray
    regime: str
    config: MiningConfig
    provenance: list = field(default_factory=list)
    skipped: int = 0

    def __len__(self):
        return len(self.anchors)

    def __iter__(self):
        for a, p, n in zip(self.anchors, self.positives, self.negatives):
            yield TripletRecord(int(a), int(p), int(n), self.regime)

    @property
    def records(self):
        return list(self)

    def subset(self, idx):
        return TripletDb(self.anchors[idx], self.positives[idx], self.negatives[idx],
                         self.regime, self.config, list(self.provenance))

    @classmethod
    def empty(cls, regime, config):
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z.copy(), z.copy(), regime, config)


class PoseTable:
    """Sample id -> planar position/heading lookup, with optional run labels."""

    def __init__(self, ids, east, north, heading=None, runs=None):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.east = np.asarray(east, dtype=float)
        self.north = np.asarray(north, dtype=float)
        self.heading = None if heading is None else np.asarray(heading, dtype=float)
        self.runs = None if runs is None else np.asarray(runs)
        self._row = {int(s): i for i, s in enumerate(self.ids)}
        if len(self._row) != len(self.ids):
            raise DataError("duplicate sample ids in pose table")

    def __len__(self):
        return len(self.ids)

    def row(self, sid):
        return self._row[int(sid)]

    def distances_from(self, sid):
        i = self.row(sid)
        return np.hypot(self.east - self.east[i], self.north - self.north[i])


def mine_positive_pairs(assignments, poses, d_w=10.0, heading_gate=math.pi / 2):
    """All ordered pairs of distinct samples sharing a place.

    Pairs must lie within ``d_w`` of each other with compatible headings,
    and must come from different runs when ``poses`` carries run labels.
    Pairs reachable through several places are emitted once, sorted.
    """
    pairs = set()
    for pid in sorted(assignments):
        members = sorted(set(int(s) for s in assignments[pid]))
        if len(members) < 2:
            continue
        rows = np.array([poses.row(s) for s in members])
        e, n = poses.east[rows], poses.north[rows]
        ok = np.hypot(e[:, None] - e[None, :], n[:, None] - n[None, :]) <= d_w
        np.fill_diagonal(ok, False)
        if poses.heading is not None:
            h = poses.heading[rows]
            dh = np.abs((h[:, None] - h[None, :] + np.pi) % (2 * np.pi) - np.pi)
            ok &= dh < heading_gate
        if poses.runs is not None:
            r = poses.runs[rows]
            ok &= r[:, None] != r[None, :]
        ii, jj = np.nonzero(ok)
        pairs.update(zip((members[i] for i in ii), (members[j] for j in jj)))
    return sorted(pairs)


def eligible_negatives(anchor, poses, config, regime):
    """Sample ids admissible as ``regime`` negatives for ``anchor`` (sorted by id)."""
    if regime not in REGIMES:
        raise ConfigError(f"unknown regime {regime!r}")
    d = poses.distances_from(anchor)
    if regime == "random":
        ok = d > config.t_n
    else:
        ok = (d > config.d_w) & (d <= config.hard_radius)
    ok[poses.row(anchor)] = False
    return np.sort(poses.ids[ok])


def sample_negative(anchor, poses, config, regime, rng=None):
    """Uniform draw from the regime's eligibility window around ``anchor``."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    cand = eligible_negatives(anchor, poses, config, regime)
    if len(cand) == 0:
        raise MiningExhaustedError(anchor, regime)
    return int(cand[rng.integers(len(cand))])


def build_triplet_db(pairs, poses, config, regime, provenance=()):
    """One triplet per positive pair, with a fresh negative; seeded shuffle.

    Anchors without eligible negatives are skipped and counted in ``skipped``.
    """
    if not pairs:
        raise DataError("no positive pairs to build triplets from")
    rng = np.random.default_rng([config.seed, REGIMES.index(regime)])
    cache = {}
    out = []
    skipped = 0
    for a, p in sorted(pairs):
        if a not in cache:
            cache[a] = eligible_negatives(a, poses, config, regime)
        cand = cache[a]
        # the positive is within d_w of the anchor, so it is never eligible
        if len(cand) == 0:
            skipped += 1
            continue
        out.append((a, p, int(cand[rng.integers(len(cand))])))
    if skipped:
        log.warning("%s regime: %d pairs skipped, no eligible negative", regime, skipped)
    arr = np.array(out, dtype=np.int64).reshape(-1, 3)
    arr = arr[rng.permutation(len(arr))]
    return TripletDb(arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy(), regime, config,
                     list(provenance), skipped)


def save_triplet_db(db, path):
    cfg = asdict(db.config)
    head = " ".join(f"{k}={v!r}" for k, v in cfg.items())
    prov = ",".join(str(p) for p in db.provenance)
    with open(path, "w") as fh:
        fh.write(f"{_MAGIC} regime={db.regime} skipped={db.skipped} {head} provenance={prov}\n")
        for a, p, n in zip(db.anchors, db.positives, db.negatives):
            fh.write(f"{a},{p},{n},{db.regime}\n")


def load_triplet_db(path):
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith(_MAGIC):
            raise DataError(f"{path}: not a triplet database")
        meta = dict(tok.split("=", 1) for tok in header[len(_MAGIC):].split())
        rows = [line.strip().split(",") for line in fh if line.strip()]
    cfg = MiningConfig(d_w=float(meta["d_w"]), t_n=float(meta["t_n"]),
                       hard_radius=float(meta["hard_radius"]), seed=int(meta["seed"]),
                       heading_gate=float(meta["heading_gate"]))
    regime = meta["regime"]
    arr = np.array([[int(r[0]), int(r[1]), int(r[2])] for r in rows], dtype=np.int64).reshape(-1, 3)
    if any(r[3] != regime for r in rows):
        raise DataError(f"{path}: mixed regimes")
    prov = [p for p in meta.get("provenance", "").split(",") if p]
    return TripletDb(arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy(), regime, cfg, prov,
                     int(meta.get("skipped", 0)))
