import json

import numpy as np
import pytest

from cadd.cli import main
from cadd.config import ConfigError, load_run_config


SMALL_SCENE = {
    "scene": {"instances_per_category": 1, "n_views": 6, "image_size": [48, 48]},
    "graph": {"n_global": 4, "target_size": 8},
    "train": {"iterations": 4, "n_matches": 32, "nonmatches_per_match": 2, "cross_nonmatches": 32},
    "eval": {"n_composites": 3, "n_transfer_pairs": 4, "queries_per_instance": 1},
}


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "cfg.json"
    p.write_text(json.dumps(SMALL_SCENE))
    return p


@pytest.fixture(scope="module")
def cli_data(tmp_path_factory, small_config):
    out = tmp_path_factory.mktemp("data")
    assert main(["gen-data", "--config", str(small_config), "--out", str(out)]) == 0
    return out


class TestConfig:
    def test_stock_defaults(self):
        cfg = load_run_config()
        assert cfg.train.iterations == 3500
        assert cfg.train.d_desc == 5
        assert cfg.train.lr == 1e-4
        assert cfg.train.decay == 0.9
        assert cfg.train.margin == 0.5
        assert cfg.graph.n_local == 5
        assert cfg.graph.n_global == 300
        assert cfg.graph.lam == 0.1
        assert cfg.train.projection_steps == 500

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"train": {"iterationz": 5}}))
        with pytest.raises(ConfigError, match="iterationz"):
            load_run_config(p)

    def test_unknown_section_rejected(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"trainer": {}}))
        with pytest.raises(ConfigError):
            load_run_config(p)

    def test_flag_overrides_file(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"train": {"iterations": 7}}))
        cfg = load_run_config(p, {"train.iterations": 9})
        assert cfg.train.iterations == 9

    def test_seed_propagates(self):
        cfg = load_run_config(None, {"seed": 42})
        assert cfg.scene.seed == 42
        assert cfg.train.seed == 42
        assert cfg.graph.seed == 42


class TestCli:
    def test_gen_data_layout(self, cli_data):
        assert (cli_data / "dataset.json").exists()
        assert (cli_data / "keypoints.json").exists()
        seq_dirs = sorted(p.name for p in (cli_data / "sequences").iterdir())
        assert len(seq_dirs) == 2
        frames = cli_data / "sequences" / seq_dirs[0] / "frames"
        assert (frames / "0_rgb.png").exists()
        assert (frames / "0_depth.png").exists()
        assert (frames / "0_mask.png").exists()
        assert (frames / "0_pose.json").exists()
        assert (cli_data / "sequences" / seq_dirs[0] / "meta.json").exists()
        assert (cli_data / "composites" / "meta.json").exists()

    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as e:
            main(["gen-data", "--nope"])
        assert e.value.code == 2

    def test_bad_config_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{\"whatever\": 1}")
        assert main(["gen-data", "--config", str(bad), "--out", str(tmp_path / "d")]) == 2

    def test_missing_data_exits_2(self, small_config, tmp_path):
        code = main(
            ["build-graph", "--config", str(small_config), "--data", str(tmp_path / "none"),
             "--out", str(tmp_path / "g.json")]
        )
        assert code == 2

    def test_full_pipeline(self, small_config, cli_data, tmp_path, capsys):
        graph_path = tmp_path / "graph.json"
        assert main(["build-graph", "--config", str(small_config), "--data", str(cli_data),
                     "--out", str(graph_path)]) == 0
        assert graph_path.exists()

        van_dir = tmp_path / "van"
        assert main(["train", "--config", str(small_config), "--variant", "vanilla",
                     "--data", str(cli_data), "--out", str(van_dir)]) == 0
        soft_dir = tmp_path / "soft"
        assert main(["train", "--config", str(small_config), "--variant", "soft",
                     "--data", str(cli_data), "--graph", str(graph_path),
                     "--out", str(soft_dir)]) == 0

        report_path = tmp_path / "report.json"
        assert main(["eval", "--config", str(small_config),
                     "--checkpoints", f"van={van_dir / 'checkpoint.npz'},soft={soft_dir / 'checkpoint.npz'}",
                     "--data", str(cli_data), "--report", str(report_path)]) == 0
        report = json.loads(report_path.read_text())
        assert set(report["models"]) == {"van", "soft"}
        assert report_path.with_suffix(".cdf.png").exists()

        csv_path = tmp_path / "descs.csv"
        assert main(["export", "--config", str(small_config),
                     "--checkpoints", str(van_dir / "checkpoint.npz"),
                     "--data", str(cli_data), "--out", str(csv_path),
                     "--frames", "4", "--pixels", "10"]) == 0
        rows = csv_path.read_text().splitlines()
        assert len(rows) == 41  # header + 4 frames x 10 pixels

        out = capsys.readouterr().out
        assert "effective config:" in out

    def test_train_soft_without_graph_exits_2(self, small_config, cli_data, tmp_path):
        assert main(["train", "--config", str(small_config), "--variant", "soft",
                     "--data", str(cli_data), "--out", str(tmp_path / "x")]) == 2
