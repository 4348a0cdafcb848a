"""The command-line surface: artifacts, exit codes, idempotence."""

import json
from pathlib import Path

import numpy as np
import pytest

from herdnet.cli import main


def write_synth_spec(path, samples=8, seed=3):
    spec = {
        "samples_per_class": samples,
        "noise_sigma": 0.3,
        "seed": seed,
        "species": [
            {"species_id": 0, "name": "a", "rate_hz": 100.0,
             "motifs": ["burst", "sway"], "amplitude": 1.3},
            {"species_id": 1, "name": "b", "rate_hz": 25.0,
             "motifs": ["burst", "sway"], "rotation_deg": -30.0},
            {"species_id": 2, "name": "c", "rate_hz": 12.5,
             "motifs": ["burst", "sway"], "amplitude": 0.7},
        ],
    }
    Path(path).write_text(json.dumps(spec))


def write_config(path, epochs=1):
    cfg = {
        "model": {"widths": [4, 6], "fc_dim": 6, "rank": 2},
        "train": {"epochs": epochs, "batch_size": 6, "lr": 0.001, "seed": 0},
        "eval": {"folds": 4, "cross_validate": False},
    }
    Path(path).write_text(json.dumps(cfg))


@pytest.fixture()
def prepared(tmp_path):
    spec = tmp_path / "spec.json"
    write_synth_spec(spec)
    archive = tmp_path / "data" / "windows.hwa"
    code = main(["prepare", "--dataset", "synthetic", "--synth-spec", str(spec),
                 "--out", str(archive)])
    assert code == 0
    cfg = tmp_path / "cfg.json"
    write_config(cfg)
    return tmp_path, archive, cfg


class TestPrepare:
    def test_synthetic_archive_and_report(self, prepared):
        tmp_path, archive, _ = prepared
        assert archive.exists()
        report = json.loads(archive.with_suffix(".hwa.ingest.json").read_text())
        assert sorted(report["species"]) == ["0", "1", "2"]
        manifest = json.loads(archive.with_suffix(".hwa.manifest.json").read_text())
        assert manifest["command"] == "prepare"
        from herdnet.archive import read_archive
        ds = read_archive(archive)
        assert sorted(ds.species) == [0, 1, 2]

    def test_horse_fixture_windows_are_200_steps_before_resampling(self, tmp_path, capsys):
        root = tmp_path / "horse"
        root.mkdir()
        rng = np.random.default_rng(0)
        rows = ["Ax,Ay,Az,label"]
        rows += [f"{x},{y},{z},walking" for x, y, z in rng.uniform(-1, 1, (400, 3))]
        (root / "h1.csv").write_text("\n".join(rows) + "\n")
        out = tmp_path / "horse.hwa"
        assert main(["prepare", "--dataset", "horse", "--in", str(root),
                     "--out", str(out)]) == 0
        # 400 steps at 100 Hz -> 2 windows, each resampled from 200 steps
        from herdnet.archive import read_archive
        ds = read_archive(out)
        assert len(ds.species[0]) == 2
        assert ds.species[0].data.shape == (2, 3, 50)

    def test_malformed_csv_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("species,subject,rate_hz,t,ax,ay,az,label\n0,a,25.0,0,x,0,0,walk\n")
        code = main(["prepare", "--dataset", "csv", "--in", str(bad),
                     "--out", str(tmp_path / "o.hwa")])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_input_exits_2(self, tmp_path, capsys):
        code = main(["prepare", "--dataset", "csv", "--in", str(tmp_path / "none.csv"),
                     "--out", str(tmp_path / "o.hwa")])
        assert code == 2


class TestTrain:
    def test_default_run_writes_artifacts(self, prepared):
        tmp_path, archive, cfg = prepared
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg), "--data", str(archive),
                     "--out", str(out)]) == 0
        assert (out / "metrics.json").exists()
        assert (out / "curves_r0.csv").exists()
        assert (out / "checkpoint_r0.npz").exists()
        assert (out / "bn_stats_r0.csv").exists()
        assert (out / "manifest.json").exists()
        metrics = json.loads((out / "metrics.json").read_text())
        assert set(metrics["species"]) == {"0", "1", "2"}

    def test_idempotent_outputs_modulo_manifest(self, prepared):
        tmp_path, archive, cfg = prepared
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        for out in (out1, out2):
            assert main(["train", "--config", str(cfg), "--data", str(archive),
                         "--out", str(out)]) == 0
        for name in ("metrics.json", "curves_r0.csv", "checkpoint_r0.npz"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_ablation_grid_runs_four_configs(self, prepared):
        tmp_path, archive, cfg = prepared
        out = tmp_path / "ablate"
        assert main(["train", "--config", str(cfg), "--data", str(archive),
                     "--out", str(out), "--ablate", "no-spconv,no-sbn"]) == 0
        subdirs = sorted(p.name for p in out.iterdir() if p.is_dir())
        assert subdirs == ["spconv-off_sbn-off", "spconv-off_sbn-on",
                          "spconv-on_sbn-off", "spconv-on_sbn-on"]
        assert (out / "ablation.csv").exists()

    def test_single_net_baseline_covers_one_species(self, prepared):
        tmp_path, archive, cfg = prepared
        out = tmp_path / "single"
        assert main(["train", "--config", str(cfg), "--data", str(archive),
                     "--out", str(out), "--single-net", "1"]) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert set(metrics["species"]) == {"1"}

    def test_unknown_ablate_module_exits_2(self, prepared, capsys):
        tmp_path, archive, cfg = prepared
        code = main(["train", "--config", str(cfg), "--data", str(archive),
                     "--out", str(tmp_path / "x"), "--ablate", "no-heads"])
        assert code == 2


class TestSweep:
    def test_rank_sweep_csv_schema(self, prepared):
        tmp_path, archive, cfg = prepared
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", str(cfg), "--data", str(archive),
                     "--out", str(out), "--rank", "2,3", "--frconv"]) == 0
        lines = (out / "sweep.csv").read_text().strip().splitlines()
        assert lines[0] == "sweep_var,value,species,metric,mean,std"
        values = {line.split(",")[1] for line in lines[1:]}
        assert values == {"2", "3", "frconv"}
        # 3 sweep points x 3 species x 4 metrics
        assert len(lines) - 1 == 36

    def test_fraction_sweep_with_baseline_rows(self, prepared):
        tmp_path, archive, cfg = prepared
        out = tmp_path / "fsweep"
        assert main(["sweep", "--config", str(cfg), "--data", str(archive),
                     "--out", str(out), "--fraction", "1.0,0.5",
                     "--with-single-net"]) == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        kinds = {line.split(",")[0] for line in lines[1:]}
        assert kinds == {"fraction", "fraction-singlenet"}

    def test_sweep_without_axis_exits_2(self, prepared, capsys):
        tmp_path, archive, cfg = prepared
        code = main(["sweep", "--config", str(cfg), "--data", str(archive),
                     "--out", str(tmp_path / "s")])
        assert code == 2


class TestGradcheckCommand:
    def test_passes_and_exits_zero(self, capsys):
        assert main(["gradcheck", "--scale", "tiny"]) == 0
        out = capsys.readouterr().out
        assert "[PASS] end_to_end/mixed-batch" in out
        assert "FAIL" not in out

    def test_detects_injected_sign_flip(self, capsys, monkeypatch):
        from herdnet.autodiff import kernels
        true_bwd = kernels.conv1x3_bwd_input
        monkeypatch.setattr(kernels, "conv1x3_bwd_input",
                            lambda gy, w, stride, wp: -true_bwd(gy, w, stride, wp))
        assert main(["gradcheck", "--scale", "tiny"]) == 1
        assert "FAIL" in capsys.readouterr().out
