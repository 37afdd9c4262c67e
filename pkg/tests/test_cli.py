import subprocess
import sys

import pytest
import yaml

from tser.cli import main
from tser.series import load_collection


def write_config(tmp_path, **overrides):
    cfg = {
        "generator": {"n_series": 4, "lengths": 70, "seed": 2},
        "q": 4,
        "horizon": 2,
        "learner": {"name": "knn", "k": 5},
        "k": 3,
        "draws": 1000,
    }
    cfg.update(overrides)
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_run_writes_tables(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
    names = {p.name for p in (tmp_path / "out").iterdir()}
    assert names == {"per_series_scores.csv", "summary.csv", "manifest.json"}
    assert "summary.csv" in capsys.readouterr().out


def test_run_twice_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path)
    for d in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--seed", "5", "--out", str(tmp_path / d)]) == 0
    for name in ("per_series_scores.csv", "summary.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize("verb", ["integration", "ratio-sweep"])
def test_other_experiment_verbs(tmp_path, verb):
    cfg = write_config(tmp_path, ratio_grid=[0.5, 1.0])
    assert main([verb, "--config", str(cfg), "--out", str(tmp_path / "o"), "--max-series", "2"]) == 0
    assert (tmp_path / "o" / "summary.csv").exists()


def test_unknown_config_key_exits_1(tmp_path):
    cfg = write_config(tmp_path, colour="blue")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_missing_output_exits_1(tmp_path):
    assert main(["run", "--config", str(write_config(tmp_path))]) == 1


def test_bad_data_exits_2(tmp_path):
    data = tmp_path / "bad.csv"
    data.write_text("unique_id,ds,y\nA,1,1.0\nA,2,oops\n")
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"data": "bad.csv", "horizon": 1, "q": 2}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_missing_data_file_exits_2(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"data": "nowhere.csv", "horizon": 1}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_zero_cells_exits_3(tmp_path):
    rows = ["unique_id,ds,y"]
    for sid in ("a", "b"):
        rows += [f"{sid},{t},{3.0 if t < 30 else t}" for t in range(40)]
    (tmp_path / "flat.csv").write_text("\n".join(rows) + "\n")
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"data": "flat.csv", "horizon": 2, "q": 3, "methods": ["GLOBAL"], "draws": 1000}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert not (tmp_path / "o").exists() or not any((tmp_path / "o").iterdir())


def test_gen_then_run_from_file(tmp_path):
    gen = tmp_path / "gen.yaml"
    gen.write_text(yaml.safe_dump({"n_series": 3, "lengths": 60, "horizon": 2, "q": 4}))
    out = tmp_path / "synthetic.csv"
    assert main(["gen", "--config", str(gen), "--seed", "4", "--out", str(out)]) == 0
    coll = load_collection(out)
    assert len(coll) == 3 and coll.horizon == 2
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"data": "synthetic.csv", "q": 4, "learner": {"name": "knn", "k": 3}, "k": 3,
                                   "draws": 1000}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0


def test_resample_dump(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "rows.csv"
    assert main(["resample", "--config", str(cfg), "--target", "deviant", "--method", "SMOTE", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].split(",")[:3] == ["target_id", "origin_time", "synthetic"]
    # 49 training observations give 44 rows per series; balance 3 x 44 against 44
    assert len(lines) - 1 == 3 * 44 - 44


def test_resample_unknown_target(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["resample", "--config", str(cfg), "--target", "nope", "--out", str(tmp_path / "r.csv")]) == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "tser", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "ratio-sweep" in proc.stdout
