import hashlib
import json
import shutil
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from roweeder.cli import main
from roweeder.raster import read_classmask_png


def tree_digest(root: Path) -> dict:
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


@pytest.fixture
def synth_root(tmp_path):
    root = tmp_path / "data"
    rc = main([
        "synth", "--out", str(root), "--maps", "3", "--size", "128", "--rows", "3",
        "--angles", "0,20", "--spacing", "30", "--inter-weeds", "6",
        "--seed", "11", "--tile-size", "128",
    ])
    assert rc == 0
    return root


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"tile_size": 128, "hough": {"threshold": 40}}))
    return path


class TestSynthAndIngest:
    def test_layout_and_manifest(self, synth_root):
        assert (synth_root / "manifest.json").exists()
        manifest = json.loads((synth_root / "manifest.json").read_text())
        assert sorted(manifest["maps"]) == ["000", "001", "002"]
        for sub in ("R", "G", "B", "NIR", "groundtruth"):
            assert (synth_root / "000" / sub / "0.png").exists()

    def test_synth_deterministic(self, synth_root, tmp_path):
        other = tmp_path / "data2"
        rc = main([
            "synth", "--out", str(other), "--maps", "3", "--size", "128", "--rows", "3",
            "--angles", "0,20", "--spacing", "30", "--inter-weeds", "6",
            "--seed", "11", "--tile-size", "128",
        ])
        assert rc == 0
        assert tree_digest(other) == tree_digest(synth_root)

    def test_ingest_reports_maps(self, synth_root, config_path, tmp_path, capsys):
        rc = main(["ingest", "--input", str(synth_root), "--config", str(config_path)])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["maps"]["000"]["n_tiles"] == 1
        assert report["maps"]["000"]["has_groundtruth"] is True
        assert "nir" in report["maps"]["000"]["channels"]

    def test_ingest_missing_root_fails(self, tmp_path):
        rc = main(["ingest", "--input", str(tmp_path / "nothing")])
        assert rc == 1


class TestFolds:
    def test_folds_structure_and_determinism(self, synth_root, config_path, tmp_path):
        out1 = tmp_path / "folds1.json"
        out2 = tmp_path / "folds2.json"
        for out in (out1, out2):
            rc = main([
                "folds", "--input", str(synth_root), "--config", str(config_path),
                "--val-fraction", "0.34", "--out", str(out),
            ])
            assert rc == 0
        assert out1.read_bytes() == out2.read_bytes()
        folds = json.loads(out1.read_text())["folds"]
        assert sorted(f["test_map"] for f in folds) == ["000", "001", "002"]
        for fold in folds:
            assert fold["test_map"] not in fold["train_maps"]


class TestPseudoLabelAndEvaluate:
    def run_pseudo(self, synth_root, config_path, out_dir, jobs=1):
        return main([
            "pseudo-label", "--input", str(synth_root), "--out", str(out_dir),
            "--config", str(config_path), "--jobs", str(jobs),
        ])

    def test_outputs_and_manifest(self, synth_root, config_path, tmp_path):
        out_dir = tmp_path / "pseudo"
        assert self.run_pseudo(synth_root, config_path, out_dir) == 0
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert sorted(manifest["maps"]) == ["000", "001", "002"]
        entry = manifest["maps"]["000"]["tiles"][0]
        assert (out_dir / entry["pseudo"]).exists()
        assert (out_dir / entry["rows"]).exists()
        mask = read_classmask_png(out_dir / entry["pseudo"])
        assert mask.shape == (128, 128)

    def test_deterministic_and_jobs_independent(self, synth_root, config_path, tmp_path):
        out1, out2, out3 = (tmp_path / n for n in ("p1", "p2", "p8"))
        assert self.run_pseudo(synth_root, config_path, out1, jobs=1) == 0
        assert self.run_pseudo(synth_root, config_path, out2, jobs=1) == 0
        assert self.run_pseudo(synth_root, config_path, out3, jobs=8) == 0
        d1, d2, d3 = tree_digest(out1), tree_digest(out2), tree_digest(out3)
        assert d1 == d2
        assert d1 == d3

    def test_missing_nir_exits_2(self, synth_root, config_path, tmp_path):
        crippled = tmp_path / "no_nir"
        shutil.copytree(synth_root, crippled)
        for map_dir in crippled.iterdir():
            if (map_dir / "NIR").is_dir():
                shutil.rmtree(map_dir / "NIR")
        rc = self.run_pseudo(crippled, config_path, tmp_path / "out")
        assert rc == 2

    def test_evaluate_pred_equals_gt(self, synth_root, config_path, tmp_path, capsys):
        rc = main([
            "evaluate", "--pred", str(synth_root), "--gt", str(synth_root),
            "--config", str(config_path),
        ])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["full"]["macro"] == 1.0

    def test_evaluate_pseudo_vs_gt_with_rows(self, synth_root, config_path, tmp_path, capsys):
        out_dir = tmp_path / "pseudo"
        assert self.run_pseudo(synth_root, config_path, out_dir) == 0
        capsys.readouterr()  # drain the pseudo-label summary line
        rc = main([
            "evaluate", "--pred", str(out_dir), "--gt", str(synth_root),
            "--rows", str(out_dir), "--config", str(config_path),
        ])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["full"]["macro"] >= 0.9
        assert "intra_row" in report and "inter_row" in report
        assert report["n_tiles"] == 3

    def test_evaluate_tile_mismatch_exits_1(self, synth_root, config_path, tmp_path):
        out_dir = tmp_path / "pseudo"
        assert self.run_pseudo(synth_root, config_path, out_dir) == 0
        shutil.rmtree(out_dir / "002")
        rc = main([
            "evaluate", "--pred", str(out_dir), "--gt", str(synth_root),
            "--config", str(config_path),
        ])
        assert rc == 1


class TestRender:
    def test_render_plain_composite(self, synth_root, tmp_path):
        args = [
            "render",
            "--red", str(synth_root / "000" / "R" / "0.png"),
            "--green", str(synth_root / "000" / "G" / "0.png"),
            "--blue", str(synth_root / "000" / "B" / "0.png"),
            "--out", str(tmp_path / "plain.png"),
        ]
        assert main(args) == 0
        with Image.open(tmp_path / "plain.png") as img:
            assert img.size == (128, 128)
            assert img.mode == "RGB"

    def test_render_tints_exact_pixels(self, synth_root, tmp_path):
        from roweeder.raster import ClassMask, write_classmask_png

        labels = np.zeros((128, 128), dtype=np.uint8)
        labels[3, 4] = 1
        labels[5, 6] = 2
        labels[7, 8] = 1
        mask_path = tmp_path / "mask.png"
        write_classmask_png(ClassMask(labels), mask_path)
        out_path = tmp_path / "overlay.png"
        args = [
            "render",
            "--red", str(synth_root / "000" / "R" / "0.png"),
            "--green", str(synth_root / "000" / "G" / "0.png"),
            "--blue", str(synth_root / "000" / "B" / "0.png"),
            "--mask", str(mask_path),
            "--out", str(out_path),
        ]
        assert main(args) == 0
        rgb = np.asarray(Image.open(out_path))
        assert tuple(rgb[3, 4]) == (0, 255, 0)
        assert tuple(rgb[5, 6]) == (255, 0, 0)
        assert tuple(rgb[7, 8]) == (0, 255, 0)
        # background pixel untinted: equals the plain composite
        plain = tmp_path / "plain2.png"
        assert main(args[:7] + ["--out", str(plain)]) == 0
        base = np.asarray(Image.open(plain))
        assert np.array_equal(rgb[50, 50], base[50, 50])

    def test_render_rows_purple(self, synth_root, tmp_path):
        from roweeder.raster import BinaryMask, write_binarymask_png

        bits = np.zeros((128, 128), dtype=bool)
        bits[64, :] = True
        rows_path = tmp_path / "rows.png"
        write_binarymask_png(BinaryMask(bits), rows_path)
        out_path = tmp_path / "rows_overlay.png"
        args = [
            "render",
            "--red", str(synth_root / "000" / "R" / "0.png"),
            "--green", str(synth_root / "000" / "G" / "0.png"),
            "--blue", str(synth_root / "000" / "B" / "0.png"),
            "--rows", str(rows_path),
            "--out", str(out_path),
        ]
        assert main(args) == 0
        rgb = np.asarray(Image.open(out_path))
        assert np.all(rgb[64, :, 0] == 160)
        assert np.all(rgb[64, :, 2] == 240)


class TestUsage:
    def test_bad_config_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"unknown_key": 1}))
        rc = main(["ingest", "--input", str(tmp_path), "--config", str(bad)])
        assert rc == 2
