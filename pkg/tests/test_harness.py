import os

import numpy as np
import pytest

from mmloop import geo
from mmloop.errors import ConfigError
from mmloop.harness import config as hc
from mmloop.harness.pipeline import Pipeline, StageFailed
from mmloop.harness.world import (WeatherEffect, WorldSpec, generate_world, render_run, true_heading)


@pytest.fixture(scope="module")
def world():
    return generate_world(WorldSpec(n_places=20, loop_length=100.0, seed=3))


def run(world, kind="clean", sev=0.0, eseed=0, jitter=1, spp=1):
    return render_run(world, WeatherEffect(kind, sev, eseed), jitter_seed=jitter, samples_per_place=spp)


def same_scans(a, b):
    return all(np.array_equal(x.ring, y.ring) and np.array_equal(x.intensity, y.intensity)
               and np.array_equal(x.azimuth, y.azimuth) and np.array_equal(x.range, y.range)
               for x, y in zip(a.scans, b.scans))


def same_rgb(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a.rgb, b.rgb))


class TestWorld:
    def test_deterministic(self):
        a = generate_world(WorldSpec(seed=5))
        b = generate_world(WorldSpec(seed=5))
        c = generate_world(WorldSpec(seed=6))
        assert np.array_equal(a.cam_codes, b.cam_codes) and np.array_equal(a.lidar_basis, b.lidar_basis)
        assert not np.array_equal(a.cam_codes, c.cam_codes)

    def test_two_places(self):
        w = generate_world(WorldSpec(n_places=2))
        e, n, _ = w.place_poses()
        assert np.hypot(e[1] - e[0], n[1] - n[0]) >= 5.0

    def test_spacing(self):
        w = generate_world(WorldSpec(n_places=100, loop_length=500.0))
        e, n, _ = w.place_poses()
        step = np.hypot(np.diff(np.append(e, e[0])), np.diff(np.append(n, n[0])))
        np.testing.assert_allclose(step, 5.0, atol=1e-6)

    def test_closed_loop_counter_clockwise(self, world):
        s = np.linspace(0, 100, 401)[:-1]
        x, y, _ = world.local_xy(s)
        area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        assert area > 0
        h = true_heading(world, s)
        assert np.all((h >= -np.pi) & (h < np.pi))

    def test_alias_stretches_disjoint(self):
        w = generate_world(WorldSpec(seed=1, alias_count=2, alias_len=3))

        def twins(codes):
            same = np.all(codes[:, None] == codes[None, :], axis=2)
            np.fill_diagonal(same, False)
            return set(np.flatnonzero(same.any(axis=1)))

        cam, lid = twins(w.cam_codes), twins(w.lidar_codes)
        assert len(cam) == 12 and len(lid) == 12
        assert not cam & lid
        for i in cam:
            assert np.array_equal(w.cam_codes[i], w.cam_codes[(i + 30) % 60])

    def test_bad_spec(self):
        with pytest.raises(ValueError):
            WorldSpec(n_places=1)
        with pytest.raises(ValueError):
            WeatherEffect("fog", 0.5)
        with pytest.raises(ValueError):
            WeatherEffect("sun_glare", 1.5)


class TestWeather:
    def test_clean_is_identity(self, world):
        base = run(world)
        assert same_rgb(base, run(world, eseed=9))
        assert same_scans(base, run(world, eseed=9))
        assert same_rgb(base, run(world, "sun_glare", 0.0))

    def test_glare_saturates_and_spares_scans(self, world):
        base = run(world)
        glare = run(world, "sun_glare", 1.0)
        for img in glare.rgb:
            assert np.mean(np.all(img == 255, axis=2)) >= 0.5
        assert same_scans(base, glare)

    def test_rain_drops_returns(self, world):
        base = run(world)
        rain = run(world, "after_rain", 0.5)
        kept = sum(len(s) for s in rain.scans) / sum(len(s) for s in base.scans)
        assert abs(kept - 0.5) <= 0.05
        shift = np.mean([np.abs(a.astype(float) - b).mean() / 255 for a, b in zip(base.rgb, rain.rgb)])
        assert shift < 0.05

    def test_darkness_scales_rgb_only(self, world):
        base = run(world)
        dark = run(world, "darkness", 1.0)
        assert np.mean([d.mean() for d in dark.rgb]) < 0.3 * np.mean([b.mean() for b in base.rgb])
        assert same_scans(base, dark)

    def test_categories(self):
        assert [WeatherEffect(k).category for k in ("clean", "sun_glare", "after_rain", "darkness")] == \
            ["C", "S", "AR", "SS"]

    def test_gps_brackets_samples(self, world):
        r = run(world, spp=2)
        assert r.fix_times[0] <= r.timestamps.min() and r.timestamps.max() <= r.fix_times[-1]
        e, n, _ = geo.latlon_to_utm(r.fix_lat, r.fix_lon, r.zone)
        we, wn, _ = world.utm(np.minimum((r.fix_times - r.fix_times[0]) * 5.0, 100 - 1e-9))
        assert np.max(np.hypot(e - we, n - wn)) < 0.5


class TestConfig:
    def test_defaults_round_trip(self):
        cfg = hc.default_config()
        again = hc.parse_config(cfg.dumps())
        assert again == cfg

    def test_file_and_overrides(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("# comment\nseed = 4\nepochs = 3  # trailing\n\nruns = clean:0, after_rain:0.5\n")
        cfg = hc.load_config(str(p), {"seed": 9, "modality": "fused"})
        assert cfg.seed == 9 and cfg.epochs == 3 and cfg.modality == "fused"
        assert hc.parse_runs(cfg.runs) == [("clean", 0.0), ("after_rain", 0.5)]

    @pytest.mark.parametrize("text", ["bogus = 1\n", "epochs = many\n", "no equals sign\n",
                                      "modality = radar\n", "train_fraction = 1.0\n",
                                      "stages = synth,dance\n", "judge_heading_gate = maybe\n"])
    def test_config_errors(self, tmp_path, text):
        p = tmp_path / "c.cfg"
        p.write_text(text)
        with pytest.raises(ConfigError):
            hc.load_config(str(p))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            hc.load_config(str(tmp_path / "nope.cfg"))


SMALL = {"n_places": 40, "loop_length": 200.0, "samples_per_place": 1, "epochs": 3, "finetune_epochs": 1,
         "triplets_per_epoch": 16, "plateau_window": 2, "plateau_epsilon": 10.0,
         "conv_stages": "4x4s4p2,8x3s1p2,8x3s1p2,8x3s1p2", "descriptor_dim": 16}


def small_cfg(out, **kw):
    return hc.load_config(None, dict(SMALL, out=str(out), **kw))


class TestPipeline:
    def test_stage_gating(self, tmp_path):
        Pipeline(small_cfg(tmp_path, stages="synth,ingest,mine")).run()
        assert (tmp_path / "mine" / "triplets_random.txt").exists()
        assert (tmp_path / "mine" / "config.txt").exists()
        assert not (tmp_path / "camera").exists()

    def test_ingest_outputs(self, tmp_path):
        p = Pipeline(small_cfg(tmp_path))
        p.run(["synth", "ingest"])
        s = p.ingested()
        assert set(s["split"]) <= {"train", "test", "buffer", "none"}
        assert s["zone"] == "56S"
        places = p.places()
        for place, label in places:
            if label == "test":
                for other, lab2 in places:
                    if lab2 == "train":
                        assert place.pose.distance_to(other.pose) >= 10.0
        head = (tmp_path / "synth" / "samples.csv").read_text().splitlines()[0]
        assert head == "sample_id,run_id,timestamp_s,modality,payload_path"
        head = (tmp_path / "synth" / "trajectory.csv").read_text().splitlines()[0]
        assert head == "run_id,timestamp_s,lat_deg,lon_deg"

    def test_missing_prerequisite(self, tmp_path):
        with pytest.raises(StageFailed) as exc:
            Pipeline(small_cfg(tmp_path)).run_stage("mine")
        assert exc.value.stage == "mine" and exc.value.exit_code == 3

    @pytest.mark.parametrize("modality", ["camera", "lidar", "fused"])
    def test_full_run_small(self, tmp_path, modality):
        cfg = small_cfg(tmp_path, modality=modality)
        Pipeline(cfg).run()
        d = tmp_path / modality
        for name in ("weights.bin", "weights_pre_finetune.bin", "train_log.csv", "report_accuracy.csv",
                     "report_counts.csv", "report.json", "report_pre_finetune_accuracy.csv"):
            assert (d / name).exists(), name
        rows = (d / "report_accuracy.csv").read_text().splitlines()
        assert rows[0] == "test\\reference,S,C,S/C,AR,SS,VC,Mean"
        log = (d / "train_log.csv").read_text().splitlines()
        assert log[0] == "epoch,phase,train_loss,val_loss"
        assert "hard_db" in log[-1]

    def test_shared_stages_serve_all_modalities(self, tmp_path):
        Pipeline(small_cfg(tmp_path, stages="synth,ingest,mine")).run()
        for modality in ("camera", "lidar"):
            Pipeline(small_cfg(tmp_path, modality=modality, stages="train,extract,eval,report")).run()
        a = (tmp_path / "camera" / "report_counts.csv").read_bytes()
        b = (tmp_path / "lidar" / "report_counts.csv").read_bytes()
        assert a == b


class TestTrainingRegression:
    def test_loss_halves_on_reference_world(self, tmp_path):
        # frozen bound on the default world: mean triplet loss (inactive triplets count 0)
        cfg = hc.load_config(None, {"seed": 0, "out": str(tmp_path), "modality": "lidar", "epochs": 20,
                                     "finetune_epochs": 1, "stages": "synth,ingest,mine,train"})
        Pipeline(cfg).run()
        rows = [ln.split(",") for ln in (tmp_path / "lidar" / "train_log.csv").read_text().splitlines()[1:]]
        loss = [float(r[2]) for r in rows if r[1] == "random_db"]
        assert 0 < len(loss) <= 20
        assert min(loss) <= 0.5 * loss[0]
