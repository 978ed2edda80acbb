import json
from pathlib import Path

import pytest

from learnbnb.cli import main
from learnbnb.cran import CranConfig, generate_instance
from learnbnb.experiments import (
    EXIT_CONFIG_ERROR,
    EXIT_INFEASIBLE_BATCH,
    EXIT_OK,
    ConfigError,
    ExperimentSpec,
    load_config,
    load_instance,
    render_table,
    run_experiment,
    save_instance,
)

TINY = {
    "cran": {"rrh_count": 3, "user_count": 2, "antennas_per_rrh": 1},
    "counts": {"train": 3, "test": 2, "unlabeled": 2},
    "dagger": {"rounds": 2, "epochs_per_round": 2, "validation_fraction": 0.34},
    "si": {"rounds": 2, "epochs_per_round": 1},
}


def write_config(tmp_path: Path, overrides: dict | None = None) -> str:
    cfg = json.loads(json.dumps(TINY))
    for key, value in (overrides or {}).items():
        cfg.setdefault(key, {}).update(value) if isinstance(value, dict) else cfg.__setitem__(key, value)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


class TestInstanceFiles:
    def test_round_trip(self, tmp_path, small_cfg):
        inst = generate_instance(small_cfg, seed=2)
        path = tmp_path / "inst.json"
        save_instance(inst, path)
        loaded = load_instance(path)
        assert loaded.instance_id == inst.instance_id
        assert (loaded.channel == inst.channel).all()

    def test_tampered_file_is_rejected(self, tmp_path, small_cfg):
        inst = generate_instance(small_cfg, seed=2)
        path = tmp_path / "inst.json"
        save_instance(inst, path)
        doc = json.loads(path.read_text())
        doc["pc"][0] += 1.0
        path.write_text(json.dumps(doc))
        with pytest.raises(ConfigError, match="digest"):
            load_instance(path)


class TestConfig:
    def test_unknown_section_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"cran": {}, "typo_section": {}}))
        with pytest.raises(ConfigError, match="typo_section"):
            load_config(ExperimentSpec(task="generate", config_path=str(path)))

    def test_missing_file_rejected(self):
        with pytest.raises(ConfigError, match="not found"):
            load_config(ExperimentSpec(task="generate", config_path="/nonexistent.json"))

    def test_bad_task_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentSpec(task="fly-to-the-moon")

    def test_render_table_formats(self):
        rows = [["a", 1], ["bb", 22]]
        table = render_table(["name", "value"], rows, "table")
        assert "name" in table and "bb" in table
        csv = render_table(["name", "value"], rows, "csv")
        assert csv.splitlines()[0] == "name,value"


class TestCliPipeline:
    def test_generate_then_solve_and_baseline(self, tmp_path):
        cfg = write_config(tmp_path)
        out = str(tmp_path / "out")
        assert main(["generate", "--config", cfg, "--seed", "3", "--out", out]) == EXIT_OK
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert len(manifest["train"]) == 3
        assert main(["solve-exact", "--config", cfg, "--seed", "3", "--out", out]) == EXIT_OK
        assert (tmp_path / "out" / "results_exact.csv").exists()
        assert main(["baseline", "--config", cfg, "--seed", "3", "--out", out]) == EXIT_OK

    def test_train_then_solve_lorm(self, tmp_path):
        cfg = write_config(tmp_path)
        out = str(tmp_path / "out")
        main(["generate", "--config", cfg, "--seed", "5", "--out", out])
        assert main(["train", "--config", cfg, "--seed", "5", "--out", out]) == EXIT_OK
        assert (tmp_path / "out" / "model.json").exists()
        assert main(["solve-lorm", "--config", cfg, "--seed", "5", "--out", out]) == EXIT_OK
        rows = (tmp_path / "out" / "results_lorm.csv").read_text().strip().split("\n")
        assert len(rows) == 1 + 2  # header + test instances

    def test_transfer_requires_source_model(self, tmp_path):
        cfg = write_config(tmp_path)
        out = str(tmp_path / "out")
        main(["generate", "--config", cfg, "--seed", "5", "--out", out])
        assert main(["transfer", "--config", cfg, "--seed", "5", "--out", out]) == EXIT_CONFIG_ERROR

    def test_transfer_pipeline(self, tmp_path):
        cfg_path = tmp_path / "config.json"
        cfg = json.loads(json.dumps(TINY))
        out = tmp_path / "out"
        cfg_path.write_text(json.dumps(cfg))
        main(["generate", "--config", str(cfg_path), "--seed", "6", "--out", str(out)])
        main(["train", "--config", str(cfg_path), "--seed", "6", "--out", str(out)])
        cfg["paths"] = {"source_model": str(out / "model.json")}
        cfg_path.write_text(json.dumps(cfg))
        assert main(["transfer", "--config", str(cfg_path), "--seed", "6", "--out", str(out)]) == EXIT_OK
        assert (out / "model_transferred.json").exists()

    def test_solve_lorm_without_model_is_config_error(self, tmp_path):
        cfg = write_config(tmp_path)
        out = str(tmp_path / "out")
        main(["generate", "--config", cfg, "--seed", "3", "--out", out])
        assert main(["solve-lorm", "--config", cfg, "--seed", "3", "--out", out]) == EXIT_CONFIG_ERROR

    def test_unknown_config_key_exits_2(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"nonsense": 1}))
        assert main(["generate", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_CONFIG_ERROR

    def test_infeasible_batch_exits_3(self, tmp_path):
        path = tmp_path / "impossible.json"
        path.write_text(
            json.dumps(
                {
                    "cran": {
                        "rrh_count": 1,
                        "user_count": 1,
                        "antennas_per_rrh": 1,
                        "target_sinr_db": 60.0,
                        "max_power_w": 1e-9,
                    },
                    "counts": {"train": 1, "test": 0, "unlabeled": 0},
                }
            )
        )
        code = main(["generate", "--config", str(path), "--out", str(tmp_path / "o")])
        assert code == EXIT_INFEASIBLE_BATCH

    def test_theory_task_writes_table(self, tmp_path):
        path = tmp_path / "theory.json"
        path.write_text(json.dumps({"theory": {"eps1": [0.1], "eps2": [0.0], "n": 6, "trials": 200}}))
        out = tmp_path / "out"
        assert main(["theory", "--config", str(path), "--out", str(out)]) == EXIT_OK
        assert (out / "theory.csv").exists()

    def test_bench_end_to_end(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["bench", "--config", cfg, "--seed", "8", "--out", str(out)]) == EXIT_OK
        summary = (out / "summary.csv").read_text()
        for method in ("lorm", "exact", "gsbf", "rminlp"):
            assert method in summary
        assert (out / "results.csv").exists()
        assert (out / "model.json").exists()

    def test_rerun_is_deterministic_up_to_timing(self, tmp_path):
        cfg = write_config(tmp_path)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["bench", "--config", cfg, "--seed", "4", "--out", str(out_a)])
        main(["bench", "--config", cfg, "--seed", "4", "--out", str(out_b)])

        def strip_timing(path: Path) -> list[str]:
            lines = path.read_text().strip().split("\n")
            header = lines[0].split(",")
            drop = {i for i, c in enumerate(header) if "time" in c}
            return [
                ",".join(v for i, v in enumerate(line.split(",")) if i not in drop)
                for line in lines
            ]

        assert strip_timing(out_a / "results.csv") == strip_timing(out_b / "results.csv")

    def test_workers_do_not_change_results(self, tmp_path):
        cfg = write_config(tmp_path)
        out_a, out_b = tmp_path / "w1", tmp_path / "w4"
        main(["bench", "--config", cfg, "--seed", "4", "--out", str(out_a), "--workers", "1"])
        main(["bench", "--config", cfg, "--seed", "4", "--out", str(out_b), "--workers", "4"])
        a = (out_a / "results.csv").read_text()
        b = (out_b / "results.csv").read_text()
        drop_time = lambda text: [
            ",".join(v for i, v in enumerate(line.split(",")) if i != 6)
            for line in text.strip().split("\n")
        ]
        assert drop_time(a) == drop_time(b)
