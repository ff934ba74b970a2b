import json

import numpy as np
import pytest
from PIL import Image

from groupmatch.cli import main
from groupmatch.dataset import load_dataset
from groupmatch.evaluate import load_report
from groupmatch.features_io import load_features


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "data"
    code = main(
        [
            "synth",
            "--groups", "8",
            "--noise", "0.1",
            "--member-change", "0.2",
            "--layout-jitter", "0.05",
            "--seed", "3",
            "--out", str(out),
        ]
    )
    assert code == 0
    return out


class TestSynthCommand:
    def test_outputs_exist(self, synth_dir):
        assert (synth_dir / "dataset.json").exists()
        assert (synth_dir / "features.json").exists()
        ds = load_dataset(synth_dir / "dataset.json")
        assert len(ds.images) == 16
        assert ds.feature_file == "features.json"

    def test_binary_format(self, tmp_path):
        out = tmp_path / "bin"
        assert main(["synth", "--groups", "2", "--seed", "0", "--format", "binary", "--out", str(out)]) == 0
        dim, records = load_features(out / "features.gmf")
        assert dim == 32
        assert len(records) == 4


class TestEvalCommand:
    def test_eval_writes_report(self, synth_dir, tmp_path, capsys):
        report_path = tmp_path / "report.json"
        code = main(
            [
                "eval",
                "--dataset", str(synth_dir / "dataset.json"),
                "--splits", "2",
                "--seed", "1",
                "--ranks", "1,2,4",
                "--out", str(report_path),
            ]
        )
        assert code == 0
        report = load_report(report_path)
        assert report.ranks == (1, 2, 4)
        assert len(report.per_split) == 2
        assert "mean CMC" in capsys.readouterr().out

    def test_eval_csv(self, synth_dir, tmp_path):
        report_path = tmp_path / "report.csv"
        code = main(
            [
                "eval",
                "--dataset", str(synth_dir / "dataset.json"),
                "--splits", "1",
                "--seed", "1",
                "--ranks", "1,2",
                "--out", str(report_path),
            ]
        )
        assert code == 0
        assert report_path.read_text().splitlines()[0] == "rank,split,rate"

    def test_invalid_dataset_exits_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code = main(["eval", "--dataset", str(bad), "--out", str(tmp_path / "r.json")])
        assert code == 1
        assert "invalid-dataset" in capsys.readouterr().err


class TestMatchCommand:
    def test_match_ranks_gallery(self, synth_dir, tmp_path):
        out = tmp_path / "match.json"
        code = main(
            [
                "match",
                "--dataset", str(synth_dir / "dataset.json"),
                "--probe", "g0000_a",
                "--gallery-camera", "B",
                "--out", str(out),
            ]
        )
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["probe"] == "g0000_a"
        assert len(doc["results"]) == 8
        assert doc["results"][0]["group_id"] == 0  # self group ranks first
        scores = [r["fused_score"] for r in doc["results"]]
        assert scores == sorted(scores, reverse=True)
        assert all(isinstance(r["mapping"], list) for r in doc["results"])

    def test_unknown_probe_exits_one(self, synth_dir, tmp_path):
        code = main(
            [
                "match",
                "--dataset", str(synth_dir / "dataset.json"),
                "--probe", "nope",
                "--gallery-camera", "B",
                "--out", str(tmp_path / "m.json"),
            ]
        )
        assert code == 1


class TestFeaturesCommand:
    def _image_dataset(self, tmp_path, rng):
        images_dir = tmp_path / "imgs"
        images_dir.mkdir()
        entries = []
        for k, gid in [(0, 0), (1, 0)]:
            arr = (rng.random((120, 160, 3)) * 255).astype(np.uint8)
            path = images_dir / f"im{k}.png"
            Image.fromarray(arr).save(path)
            entries.append(
                {
                    "id": f"im{k}",
                    "camera": "A" if k == 0 else "B",
                    "group_id": gid,
                    "path": str(path),
                    "image_size": [160, 120],
                    "boxes": [
                        {"x": 10, "y": 10, "w": 30, "h": 80},
                        {"x": 80, "y": 20, "w": 30, "h": 80},
                    ],
                }
            )
        doc = {"version": 1, "cameras": ["A", "B"], "images": entries}
        ds_path = tmp_path / "ds.json"
        ds_path.write_text(json.dumps(doc))
        return ds_path

    def test_descriptor_extraction(self, tmp_path, rng):
        ds_path = self._image_dataset(tmp_path, rng)
        out = tmp_path / "features.json"
        code = main(["features", "--dataset", str(ds_path), "--out", str(out)])
        assert code == 0
        dim, records = load_features(out)
        assert dim == 2736
        assert records["im0"]["persons"].shape == (2, 2736)

    def test_missing_image_exits_one(self, tmp_path):
        doc = {
            "version": 1,
            "cameras": ["A"],
            "images": [
                {
                    "id": "x",
                    "camera": "A",
                    "group_id": 0,
                    "path": str(tmp_path / "absent.png"),
                    "image_size": [50, 50],
                    "boxes": [{"x": 1, "y": 1, "w": 10, "h": 20}],
                }
            ],
        }
        ds_path = tmp_path / "ds.json"
        ds_path.write_text(json.dumps(doc))
        assert main(["features", "--dataset", str(ds_path), "--out", str(tmp_path / "f.json")]) == 1


class TestOracleCheckCommand:
    def test_small_run_passes(self, capsys):
        code = main(["oracle-check", "--trials", "25", "--max-size", "3", "--seed", "9"])
        out = capsys.readouterr().out
        assert code == 0
        assert "[PASS] transport" in out
        assert "[PASS] matching" in out


class TestConfigOverrides:
    def test_config_file_and_set(self, synth_dir, tmp_path):
        cfg_file = tmp_path / "engine.cfg"
        cfg_file.write_text("solver.jump_prob = 0.3\n# comment\nimportance.max_iter = 2\n")
        out = tmp_path / "r.json"
        code = main(
            [
                "eval",
                "--dataset", str(synth_dir / "dataset.json"),
                "--config", str(cfg_file),
                "--set", "solver.sinkhorn_iters=5",
                "--splits", "1",
                "--seed", "0",
                "--ranks", "1",
                "--out", str(out),
            ]
        )
        assert code == 0

    def test_bad_config_key_exits_one(self, synth_dir, tmp_path):
        code = main(
            [
                "eval",
                "--dataset", str(synth_dir / "dataset.json"),
                "--set", "nope.nope=1",
                "--out", str(tmp_path / "r.json"),
            ]
        )
        assert code == 1
