import subprocess
import sys

import pytest

from mmloop.harness.cli import build_parser, main

SMALL = ["--set", "n_places=40", "--set", "loop_length=200", "--set", "samples_per_place=1"]


class TestParser:
    def test_global_flags_either_side(self):
        p = build_parser()
        a = p.parse_args(["--seed", "3", "synth", "--out", "x"])
        assert a.seed == 3 and a.out == "x" and a.command == "synth"
        b = p.parse_args(["synth", "--seed", "4"])
        assert b.seed == 4

    def test_unknown_modality_rejected(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["--modality", "radar", "synth"])
        assert exc.value.code == 2

    @pytest.mark.parametrize("cmd", ["synth", "ingest", "mine", "train", "extract", "eval", "report", "pipeline"])
    def test_subcommands_exist(self, cmd):
        assert build_parser().parse_args([cmd]).command == cmd


class TestExitCodes:
    def test_config_error(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("nonsense_key = 1\n")
        assert main(["--config", str(cfg), "--out", str(tmp_path), "synth"]) == 2
        assert "nonsense_key" in capsys.readouterr().err

    def test_bad_set(self, tmp_path):
        assert main(["--out", str(tmp_path), "--set", "epochs", "synth"]) == 2

    def test_data_error_when_inputs_missing(self, tmp_path):
        assert main(["--out", str(tmp_path), "mine"]) == 3

    def test_bad_manifest_is_data_error(self, tmp_path):
        traj = tmp_path / "t.csv"
        traj.write_text("run_id,timestamp_s,lat_deg,lon_deg\nrun0,0,not-a-number,151\n")
        rc = main(["--out", str(tmp_path), "--set", f"trajectory_manifest={traj}",
                   "--set", f"sample_manifest={traj}", "ingest"])
        assert rc == 3

    def test_synth_ok_and_flags_recorded(self, tmp_path):
        rc = main(["--out", str(tmp_path), "--seed", "7", "--modality", "lidar"] + SMALL + ["synth"])
        assert rc == 0
        echoed = (tmp_path / "synth" / "config.txt").read_text()
        assert "seed = 7\n" in echoed and "modality = lidar\n" in echoed

    def test_flags_override_file(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("seed = 1\nn_places = 40\nloop_length = 200\nsamples_per_place = 1\n")
        assert main(["--config", str(cfg), "--seed", "5", "--out", str(tmp_path), "synth"]) == 0
        assert "seed = 5\n" in (tmp_path / "synth" / "config.txt").read_text()

    def test_pipeline_stage_subset(self, tmp_path):
        rc = main(["--out", str(tmp_path)] + SMALL + ["pipeline", "--stages", "synth,ingest,mine"])
        assert rc == 0
        assert (tmp_path / "mine" / "triplets_hard.txt").exists()
        assert not (tmp_path / "camera" / "weights.bin").exists()

    def test_module_entry_point(self, tmp_path):
        out = subprocess.run([sys.executable, "-m", "mmloop.harness.cli", "--help"],
                             capture_output=True, text=True)
        assert out.returncode == 0 and "pipeline" in out.stdout
