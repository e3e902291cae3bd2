"""Stage runner: synth -> ingest -> mine -> train -> extract -> eval -> report.

Layout under the output directory::

    synth/    runs.csv, trajectory.csv, samples.csv, payload/<run>/<id>.png|.txt
    ingest/   samples.csv (poses, place, split), places.csv
    mine/     triplets_random.txt, triplets_hard.txt
    <modality>/
              weights_pre_finetune.bin, weights.bin, train_log.csv, train_state.json,
              descriptors*.npy, eval*.csv, report_*.csv, report*.json

Every stage directory also gets ``config.txt``, the resolved configuration
that produced it. synth/ingest/mine are shared by all modalities.
"""

import csv
import json
import logging
import os

import numpy as np

from .. import evaluation as ev
from .. import geo, imaging, mining
from ..descriptor import (ArrayResolver, LossConfig, NetworkConfig, TrainConfig, fine_tune_hard,
                          forward, load_weights, parse_stages, save_weights, train, write_train_log)
from ..errors import ConfigError, DataError, MmloopError
from .config import STAGES, parse_runs
from .world import EFFECTS, WeatherEffect, WorldSpec, generate_world, render_run

log = logging.getLogger(__name__)

RUN_ID_STRIDE = 100000
VARIANTS = {"final": "", "pre_finetune": "_pre_finetune"}


class StageFailed(MmloopError):
    """Wraps the error raised inside a stage, keeping its exit code."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)


def _read_csv(path):
    try:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh, skipinitialspace=True))
    except FileNotFoundError:
        raise DataError(f"missing input file {path}") from None


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _field(row, key, path):
    try:
        return row[key]
    except KeyError:
        raise DataError(f"{path}: missing column {key!r}") from None


class Pipeline:
    def __init__(self, cfg):
        self.cfg = cfg
        self.out = cfg["out"]
        self._inputs = {}

    # paths
    def stage_dir(self, stage):
        if stage in ("synth", "ingest", "mine"):
            d = os.path.join(self.out, stage)
        else:
            d = os.path.join(self.out, self.cfg["modality"])
        os.makedirs(d, exist_ok=True)
        return d

    def path(self, stage, name):
        return os.path.join(self.stage_dir(stage), name)

    def _echo(self, stage):
        with open(self.path(stage, "config.txt"), "w") as fh:
            fh.write(self.cfg.dumps())

    def run(self, stages=None):
        stages = self.cfg["stages"] if stages is None else stages
        for stage in STAGES:
            if stage in stages:
                self.run_stage(stage)

    def run_stage(self, stage):
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}")
        log.info("stage %s", stage)
        try:
            getattr(self, stage)()
            self._echo(stage)
        except MmloopError as exc:
            raise StageFailed(stage, exc) from exc

    # synth
    def world_spec(self):
        c = self.cfg
        return WorldSpec(n_places=c["n_places"], loop_length=c["loop_length"], seed=c["seed"],
                         appearance_dim=c["appearance_dim"], lidar_cols=c["lidar_cols"],
                         code_sigma=c["code_sigma"], alias_count=c["alias_count"],
                         alias_len=c["alias_len"], clutter=c["clutter"], lidar_clutter=c["lidar_clutter"])

    def synth(self):
        try:
            spec = self.world_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        effects = []
        for i, (kind, sev) in enumerate(parse_runs(self.cfg["runs"])):
            if kind not in EFFECTS:
                raise ConfigError(f"unknown weather effect {kind!r}; expected one of {EFFECTS}")
            try:
                effects.append(WeatherEffect(kind, sev, seed=i))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        world = generate_world(spec)
        d = self.stage_dir("synth")
        run_rows, traj_rows, sample_rows = [], [], []
        for i, effect in enumerate(effects):
            run_id = f"run{i}"
            run = render_run(world, effect, jitter_seed=i + 1, run_id=run_id,
                             samples_per_place=self.cfg["samples_per_place"],
                             id_offset=i * RUN_ID_STRIDE, t0=1000.0 * i)
            run_rows.append([run_id, run.weather, effect.kind, f"{effect.severity:g}"])
            traj_rows += [[run_id, f"{t:.3f}", f"{la:.9f}", f"{lo:.9f}"]
                          for t, la, lo in zip(run.fix_times, run.fix_lat, run.fix_lon)]
            pdir = os.path.join(d, "payload", run_id)
            os.makedirs(pdir, exist_ok=True)
            for sid, t, img, scan in zip(run.sample_ids, run.timestamps, run.rgb, run.scans):
                rgb_rel = os.path.join("payload", run_id, f"{sid}.png")
                scan_rel = os.path.join("payload", run_id, f"{sid}.txt")
                imaging.write_rgb(os.path.join(d, rgb_rel), img)
                imaging.write_scan(os.path.join(d, scan_rel), scan)
                sample_rows.append([sid, run_id, f"{t:.6f}", "camera", rgb_rel])
                sample_rows.append([sid, run_id, f"{t:.6f}", "lidar", scan_rel])
        _write_csv(os.path.join(d, "runs.csv"), ["run_id", "weather", "effect", "severity"], run_rows)
        _write_csv(os.path.join(d, "trajectory.csv"), ["run_id", "timestamp_s", "lat_deg", "lon_deg"],
                   traj_rows)
        _write_csv(os.path.join(d, "samples.csv"),
                   ["sample_id", "run_id", "timestamp_s", "modality", "payload_path"], sample_rows)

    # ingest
    def _manifest(self, key, name):
        return self.cfg[key] or os.path.join(self.out, "synth", name)

    def ingest(self):
        c = self.cfg
        traj_path = self._manifest("trajectory_manifest", "trajectory.csv")
        sample_path = self._manifest("sample_manifest", "samples.csv")
        run_path = self._manifest("run_manifest", "runs.csv")
        weather = {r["run_id"]: r["weather"] for r in _read_csv(run_path)}
        for w in weather.values():
            ev.weather_category(w)

        fixes = {}
        for row in _read_csv(traj_path):
            rid = _field(row, "run_id", traj_path)
            try:
                fix = geo.GeoFix(float(row["timestamp_s"]), float(row["lat_deg"]), float(row["lon_deg"]))
            except (KeyError, ValueError) as exc:
                raise DataError(f"{traj_path}: bad record {row}: {exc}") from None
            fixes.setdefault(rid, []).append(fix)
        order = [r for r in weather if r in fixes]
        if not order:
            raise DataError("no trajectory matches any run in the run manifest")
        trajs = {}
        zone = None
        for rid in order:
            traj = geo.Trajectory.from_fixes(rid, fixes[rid], zone=zone)
            zone = traj.zone
            trajs[rid] = geo.heading_from_track(traj)

        times = {}
        for row in _read_csv(sample_path):
            sid = int(_field(row, "sample_id", sample_path))
            rid = row["run_id"]
            times.setdefault((rid, sid), float(row["timestamp_s"]))
        recs = []
        dropped = 0
        for rid in order:
            ids = sorted(s for r, s in times if r == rid)
            if not ids:
                continue
            t = np.array([times[(rid, s)] for s in ids])
            e, n, h, inside = geo.interpolate_poses(trajs[rid], t)
            dropped += int((~inside).sum())
            recs += [(s, rid, tt, ee, nn, hh) for s, tt, ee, nn, hh, ok in zip(ids, t, e, n, h, inside) if ok]
        if dropped:
            log.warning("dropped %d samples outside their trajectory's time span", dropped)
        if not recs:
            raise DataError("no samples could be placed on a trajectory")

        all_fix = geo.Trajectory(
            "all", np.arange(sum(len(trajs[r].timestamps) for r in order), dtype=float),
            np.concatenate([trajs[r].easting for r in order]),
            np.concatenate([trajs[r].northing for r in order]),
            np.concatenate([trajs[r].heading for r in order]), zone)
        places = geo.discretize_places(all_fix, c["d_p"], c["heading_gate"])
        split = geo.split_places(places, c["train_fraction"], c["buffer_radius"], c["seed"],
                                 c["n_segments"])
        e = np.array([r[3] for r in recs])
        n = np.array([r[4] for r in recs])
        h = np.array([r[5] for r in recs])
        pidx, _ = geo.nearest_place(places, e, n, h, c["heading_gate"])
        rows = []
        for (sid, rid, t, ee, nn, hh), pi in zip(recs, pidx):
            pid = places[pi].place_id if pi >= 0 else -1
            label = split.label(pid) if pid >= 0 else "none"
            rows.append([sid, rid, weather[rid], f"{t:.6f}", repr(float(ee)), repr(float(nn)),
                         repr(float(hh)), zone, pid, label])
        d = self.stage_dir("ingest")
        _write_csv(os.path.join(d, "samples.csv"),
                   ["sample_id", "run_id", "weather", "timestamp_s", "easting", "northing", "heading",
                    "zone", "place_id", "split"], rows)
        _write_csv(os.path.join(d, "places.csv"),
                   ["place_id", "easting", "northing", "heading", "source_timestamp", "split"],
                   [[p.place_id, repr(p.pose.easting), repr(p.pose.northing), repr(p.pose.heading),
                     repr(p.source_timestamp), split.label(p.place_id)] for p in places])
        log.info("ingest: %d samples, %d places (%d train / %d test / %d buffer)", len(rows),
                 len(places), len(split.train), len(split.test), len(split.buffer))

    def ingested(self):
        path = os.path.join(self.out, "ingest", "samples.csv")
        rows = _read_csv(path)
        if not rows:
            raise DataError(f"{path}: no samples")
        return {
            "ids": np.array([int(r["sample_id"]) for r in rows], dtype=np.int64),
            "run": np.array([r["run_id"] for r in rows]),
            "weather": np.array([r["weather"] for r in rows]),
            "east": np.array([float(r["easting"]) for r in rows]),
            "north": np.array([float(r["northing"]) for r in rows]),
            "heading": np.array([float(r["heading"]) for r in rows]),
            "zone": rows[0]["zone"],
            "place": np.array([int(r["place_id"]) for r in rows], dtype=np.int64),
            "split": np.array([r["split"] for r in rows]),
        }

    def places(self):
        rows = _read_csv(os.path.join(self.out, "ingest", "places.csv"))
        zone = self.ingested()["zone"]
        return [(geo.Place(int(r["place_id"]), geo.MetricPose(float(r["easting"]), float(r["northing"]),
                                                               float(r["heading"]), zone),
                           float(r["source_timestamp"])), r["split"]) for r in rows]

    # mine
    def mining_config(self):
        c = self.cfg
        return mining.MiningConfig(d_w=c["d_w"], t_n=c["t_n"], hard_radius=c["hard_radius"],
                                   seed=c["seed"], heading_gate=c["heading_gate"])

    def mine(self):
        mc = self.mining_config()
        s = self.ingested()
        m = s["split"] == "train"
        poses = mining.PoseTable(s["ids"][m], s["east"][m], s["north"][m], s["heading"][m], s["run"][m])
        train_places = [p for p, lab in self.places() if lab == "train"]
        samples = [(0.0, geo.MetricPose(e, n, h), int(i))
                   for i, e, n, h in zip(poses.ids, poses.east, poses.north, poses.heading)]
        assign, unassigned = geo.assign_samples(train_places, samples, mc.d_w, mc.heading_gate)
        if unassigned:
            log.info("mine: %d training samples matched no place", len(unassigned))
        pairs = mining.mine_positive_pairs(assign, poses, mc.d_w, mc.heading_gate)
        prov = [f"seed={self.cfg['seed']}", f"runs={'+'.join(sorted(set(s['run'])))}"]
        for regime in mining.REGIMES:
            db = mining.build_triplet_db(pairs, poses, mc, regime, prov)
            mining.save_triplet_db(db, self.path("mine", f"triplets_{regime}.txt"))
            log.info("mine: %s db %d triplets, %d skipped", regime, len(db), db.skipped)

    # network inputs
    def _payloads(self):
        path = self._manifest("sample_manifest", "samples.csv")
        base = os.path.dirname(os.path.abspath(path))
        out = {}
        for row in _read_csv(path):
            p = row["payload_path"]
            out[(int(row["sample_id"]), row["modality"])] = p if os.path.isabs(p) else os.path.join(base, p)
        return out

    def _net_input(self, sid, payloads):
        mod = self.cfg["modality"]
        try:
            if mod in ("camera", "fused"):
                rgb = imaging.read_rgb(payloads[(sid, "camera")])
            if mod in ("lidar", "fused"):
                scan = imaging.read_scan(payloads[(sid, "lidar")])
                inten = imaging.project_intensity(scan, cols=self.cfg["lidar_cols"])
        except KeyError as exc:
            raise DataError(f"sample {sid} has no {exc.args[0][1]} payload") from None
        except OSError as exc:
            raise DataError(f"cannot read payload for sample {sid}: {exc}") from None
        if mod == "camera":
            return imaging.resize_rgb(rgb).tensor
        if mod == "lidar":
            return imaging.intensity_to_netinput(inten).tensor
        return imaging.compose_fused(inten, rgb).tensor

    def inputs(self, ids):
        """ArrayResolver over the network inputs of ``ids`` (float32 cache)."""
        ids = np.unique(np.asarray(ids, dtype=np.int64))
        missing = [int(i) for i in ids if int(i) not in self._inputs]
        if missing:
            payloads = self._payloads()
            for sid in missing:
                self._inputs[sid] = self._net_input(sid, payloads).astype(np.float32)
        return ArrayResolver(ids, np.stack([self._inputs[int(i)] for i in ids]))

    # train
    def network_config(self):
        c = self.cfg
        try:
            return NetworkConfig(conv_stages=parse_stages(c["conv_stages"]), activation=c["activation"],
                                 descriptor_dim=c["descriptor_dim"])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"network config: {exc}") from None

    def train_config(self):
        c = self.cfg
        return TrainConfig(lr=c["lr"], momentum=c["momentum"], epochs=c["epochs"],
                           finetune_epochs=c["finetune_epochs"], batch_size=c["batch_size"],
                           triplets_per_epoch=c["triplets_per_epoch"], val_fraction=c["val_fraction"],
                           val_max=c["val_max"], plateau_window=c["plateau_window"],
                           plateau_epsilon=c["plateau_epsilon"], seed=c["seed"])

    def train(self):
        rdb = mining.load_triplet_db(os.path.join(self.out, "mine", "triplets_random.txt"))
        hdb = mining.load_triplet_db(os.path.join(self.out, "mine", "triplets_hard.txt"))
        ids = np.concatenate([rdb.anchors, rdb.positives, rdb.negatives,
                              hdb.anchors, hdb.positives, hdb.negatives])
        resolver = self.inputs(ids)
        net_cfg, tcfg = self.network_config(), self.train_config()
        loss_cfg = LossConfig(margin=self.cfg["margin"])
        weights, state = train(rdb, resolver, net_cfg, loss_cfg, tcfg)
        save_weights(weights, self.path("train", "weights_pre_finetune.bin"))
        if state.plateau:
            weights = fine_tune_hard(weights, hdb, resolver, loss_cfg, tcfg, state)
        else:
            log.warning("no plateau within %d epochs; skipping the hard-negative fine-tune", tcfg.epochs)
        save_weights(weights, self.path("train", "weights.bin"))
        write_train_log(state, self.path("train", "train_log.csv"))
        with open(self.path("train", "train_state.json"), "w") as fh:
            json.dump({"epochs": state.epoch, "plateau": state.plateau, "phase": state.phase,
                       "fine_tuned": state.phase == "hard_db", "val_loss": state.val_loss,
                       "active_loss": state.active_loss, "active_fraction": state.active_fraction},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")

    # extract
    def extract(self):
        s = self.ingested()
        ids = s["ids"][s["split"] == "test"]
        if len(ids) == 0:
            raise DataError("no test samples to describe")
        resolver = self.inputs(ids)
        net_cfg = self.network_config()
        for suffix in VARIANTS.values():
            wpath = self.path("extract", f"weights{suffix}.bin")
            if not os.path.exists(wpath):
                raise DataError(f"missing {wpath}; run the train stage first")
            w = load_weights(wpath, expected=net_cfg)
            desc = np.concatenate([forward(w, resolver(ids[k:k + 64])) for k in range(0, len(ids), 64)])
            np.save(self.path("extract", f"descriptor_ids{suffix}.npy"), ids)
            np.save(self.path("extract", f"descriptors{suffix}.npy"), desc)

    # eval
    def run_manifests(self):
        s = self.ingested()
        m = s["split"] == "test"
        out = []
        for rid in dict.fromkeys(s["run"]):
            r = m & (s["run"] == rid)
            w = s["weather"][s["run"] == rid][0]
            out.append(ev.RunManifest(rid, w, s["ids"][r], s["east"][r], s["north"][r], s["heading"][r],
                                      s["zone"]))
        return out

    def eval(self):
        runs = self.run_manifests()
        gate = self.cfg["heading_gate"] if self.cfg["judge_heading_gate"] else None
        for suffix in VARIANTS.values():
            try:
                ids = np.load(self.path("eval", f"descriptor_ids{suffix}.npy"))
                desc = np.load(self.path("eval", f"descriptors{suffix}.npy"))
            except FileNotFoundError:
                raise DataError("missing descriptors; run the extract stage first") from None
            lookup = {int(i): d for i, d in zip(ids, desc)}
            rows = []
            for t in runs:
                for r in runs:
                    if t.run_id == r.run_id or len(t) == 0 or len(r) == 0:
                        continue
                    res = ev.accuracy_over(t, r, lookup, self.cfg["judge_radius"], gate)
                    rows.append([t.run_id, r.run_id, t.weather.value, r.weather.value, res.correct,
                                 res.total, f"{res.percent:.4f}"])
            _write_csv(self.path("eval", f"eval{suffix}.csv"),
                       ["test_run", "reference_run", "test_weather", "reference_weather", "correct",
                        "total", "percent"], rows)

    # report
    def matrices(self, suffix=""):
        rows = _read_csv(self.path("report", f"eval{suffix}.csv"))
        pairs = []
        for r in rows:
            t = ev.RunManifest(r["test_run"], r["test_weather"], [], [], [], [])
            f = ev.RunManifest(r["reference_run"], r["reference_weather"], [], [], [], [])
            pairs.append((t, f, ev.AccuracyResult(int(r["correct"]), int(r["total"]))))
        return ev.weather_matrix(pairs, "accuracy"), ev.weather_matrix(pairs, "counts")

    def report(self):
        fmts = self.cfg["report_formats"]
        for suffix in VARIANTS.values():
            acc, counts = self.matrices(suffix)
            if "csv" in fmts:
                ev.emit_report(acc, self.path("report", f"report{suffix}_accuracy.csv"), "csv")
                ev.emit_report(counts, self.path("report", f"report{suffix}_counts.csv"), "csv")
            if "json" in fmts:
                doc = {"modality": self.cfg["modality"], "seed": self.cfg["seed"],
                       "accuracy": ev.matrix_to_dict(acc), "counts": ev.matrix_to_dict(counts)}
                with open(self.path("report", f"report{suffix}.json"), "w") as fh:
                    json.dump(doc, fh, indent=2, sort_keys=True)
                    fh.write("\n")


def run_pipeline(cfg, stages=None):
    Pipeline(cfg).run(stages)
    return cfg["out"]
