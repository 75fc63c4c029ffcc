import json
import os

import pytest

from dronecf import dataio, reports
from dronecf.cli import main
from dronecf.config import (
    config_from_dict,
    config_to_dict,
    default_config,
    load_config,
    save_config,
)
from dronecf.errors import ConfigError, PipelineError
from dronecf.pipeline import run_pipeline


def small_dict(seed=5):
    return {
        "seed": seed,
        "flight_plans": [
            {"name": "low", "waypoints": [[100.0, 0.0], [140.0, 0.0]], "altitude_m": 35.0},
            {"name": "high", "waypoints": [[100.0, 0.0], [140.0, 0.0]], "altitude_m": 70.0},
        ],
        "environment": {"n_freq": 8},
        "snr_sweep": {"counts": [2, 4, 8, 16], "n_subsets": 50},
        "sinr_eval": {"ap_counts": [8, 16], "n_subsets": 10, "plans": ["low"]},
        "repro": {"ue_ids": [2, 3], "trials": [1, 2]},
    }


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(small_dict()))
    return str(path)


# --- config ---

def test_default_config_shape():
    cfg = default_config(3)
    assert list(cfg.flight_plans) == ["ap35", "ap70"]
    assert cfg.ue_ids == [1, 2, 3, 4]
    assert cfg.environment.seed == 3


def test_config_round_trip(tmp_path):
    cfg = config_from_dict(small_dict())
    path = tmp_path / "c.json"
    save_config(cfg, path)
    back = load_config(path)
    assert config_to_dict(back) == config_to_dict(cfg)
    assert back.environment.n_freq == 8


def test_default_config_round_trip(tmp_path):
    cfg = default_config(11)
    save_config(cfg, tmp_path / "c.json")
    assert config_to_dict(load_config(tmp_path / "c.json")) == config_to_dict(cfg)


def test_environment_seed_follows_master_seed():
    d = small_dict(9)
    d["environment"]["seed"] = 123
    assert config_from_dict(d).environment.seed == 9
    assert config_from_dict(small_dict()).with_seed(4).environment.seed == 4


@pytest.mark.parametrize("patch", [
    {"ues": [{"ue_id": 1, "position": [1, 1, 1.5]}, {"ue_id": 1, "position": [2, 2, 1.5]}]},
    {"flight_plans": [{"name": "a", "waypoints": [[0, 0], [1, 0]]}, {"name": "a", "waypoints": [[0, 0], [1, 0]]}]},
    {"flight_plans": [{"waypoints": [[0, 0], [1, 0]]}]},
    {"repro": {"ue_ids": [9]}},
    {"snr_sweep": {"plans": ["nowhere"]}},
    {"sinr_eval": {"methods": ["zf"]}},
    {"sinr_eval": {"frequency_mode": "sometimes"}},
    {"repro": {"trials": [1, 2, 3]}},
    {"trials_per_ue": 0},
    {"bogus": 1},
    {"snr_sweep": {"count": [2]}},
    {"ues": []},
])
def test_invalid_config(patch):
    with pytest.raises(ConfigError):
        config_from_dict({**small_dict(), **patch})


def test_invalid_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)


# --- pipeline ---

def _tree(d):
    out = {}
    for name in sorted(os.listdir(d)):
        with open(os.path.join(d, name), "rb") as fh:
            out[name] = fh.read()
    return out


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    cfg = config_from_dict(small_dict())
    out = tmp_path_factory.mktemp("run1")
    result = run_pipeline(cfg, out, workers=1)
    return cfg, out, result


def test_pipeline_outputs(small_run):
    cfg, out, result = small_run
    names = sorted(os.listdir(out))
    assert names == sorted(os.path.basename(p) for p in result.files)
    assert "dataset_low.txt" in names and "sinr_eval_low.csv" in names and "sinr_eval_high.csv" not in names
    rows = reports.read_csv(os.path.join(out, "gain_map_low_ue2.csv"))
    assert len(rows) == 201
    sweep = reports.read_csv(os.path.join(out, "snr_sweep_high.csv"))
    assert len(sweep) == 4 * 4
    sinr = reports.read_csv(os.path.join(out, "sinr_eval_low.csv"))
    assert len(sinr) == 4 * 2 * 2
    rep = reports.read_csv(os.path.join(out, "repro_low.csv"))
    assert [int(r["ue_id"]) for r in rep] == [2, 3]
    assert all(float(r["rms_error_db"]) > 0 for r in rep)


def test_pipeline_dataset_has_repro_trials(small_run):
    _, out, _ = small_run
    ds = dataio.read_dataset(os.path.join(out, "dataset_low.txt"))
    assert ds.trials(2) == [1, 2] and ds.trials(1) == [1]


def test_pipeline_deterministic_across_runs_and_workers(small_run, tmp_path):
    cfg, out, _ = small_run
    run_pipeline(cfg, tmp_path / "a", workers=1)
    run_pipeline(cfg, tmp_path / "b", workers=4)
    ref = _tree(out)
    assert _tree(tmp_path / "a") == ref
    assert _tree(tmp_path / "b") == ref


def test_seed_changes_outputs(small_run, tmp_path):
    cfg, out, _ = small_run
    run_pipeline(cfg.with_seed(6), tmp_path)
    assert _tree(tmp_path)["dataset_low.txt"] != _tree(out)["dataset_low.txt"]


def test_zero_jitter_repro_is_exactly_zero(tmp_path):
    d = small_dict()
    d["jitter"] = False
    d["snr_sweep"] = None
    d["sinr_eval"] = None
    run_pipeline(config_from_dict(d), tmp_path)
    rows = reports.read_csv(tmp_path / "repro_low.csv")
    assert [float(r["rms_error_db"]) for r in rows] == [0.0, 0.0]


def test_stage_tagged_failure(tmp_path):
    from dataclasses import replace
    cfg = config_from_dict(small_dict())
    bad = replace(cfg, ues=((1, (900.0, 0.0, 1.5)),) + cfg.ues[1:])
    with pytest.raises(PipelineError) as e:
        run_pipeline(bad, tmp_path)
    assert e.value.stage == "sound:low"


# --- CLI ---

def test_cli_generate_writes_resolved_config(tmp_path, capsys):
    assert main(["generate", "--seed", "17", "--out-dir", str(tmp_path)]) == 0
    cfg = load_config(tmp_path / "config.json")
    assert cfg.seed == 17 and cfg.environment.seed == 17
    assert str(tmp_path / "config.json") in capsys.readouterr().out


def test_cli_sound_and_analyses(tmp_path, cfg_file, small_run):
    _, ref_dir, _ = small_run
    out = str(tmp_path)
    assert main(["sound", "--config", cfg_file, "--out-dir", out, "--workers", "2"]) == 0
    ds_path = os.path.join(out, "dataset_low.txt")
    with open(ds_path, "rb") as a, open(os.path.join(ref_dir, "dataset_low.txt"), "rb") as b:
        assert a.read() == b.read()
    args = ["--config", cfg_file, "--out-dir", out, "--dataset", ds_path]
    assert main(["gain-map", *args, "--ue", "2"]) == 0
    assert main(["snr-sweep", *args]) == 0
    assert main(["sinr-eval", *args]) == 0
    assert main(["repro", *args]) == 0
    for name in ("gain_map_low_ue2.csv", "snr_sweep_low.csv", "sinr_eval_low.csv", "repro_low.csv"):
        with open(os.path.join(out, name), "rb") as a, open(os.path.join(ref_dir, name), "rb") as b:
            assert a.read() == b.read(), name


def test_cli_overrides(tmp_path, cfg_file, small_run):
    _, ref_dir, _ = small_run
    ds_path = os.path.join(ref_dir, "dataset_high.txt")
    args = ["--config", cfg_file, "--out-dir", str(tmp_path), "--dataset", ds_path]
    assert main(["snr-sweep", *args, "--counts", "2", "4", "--n-subsets", "20", "--ue", "1"]) == 0
    rows = reports.read_csv(tmp_path / "snr_sweep_high.csv")
    assert [(int(r["ue_id"]), int(r["ap_count"])) for r in rows] == [(1, 2), (1, 4)]
    assert main(["sinr-eval", *args, "--ap-counts", "4", "--methods", "mr", "--n-subsets", "3"]) == 0
    rows = reports.read_csv(tmp_path / "sinr_eval_high.csv")
    assert {r["method"] for r in rows} == {"mr"} and {int(r["L"]) for r in rows} == {4}


def test_cli_run_matches_library(tmp_path, cfg_file, small_run):
    _, ref_dir, _ = small_run
    out = tmp_path / "out"
    assert main(["run", "--config", cfg_file, "--out-dir", str(out), "--workers", "3"]) == 0
    assert _tree(out) == _tree(ref_dir)


def test_cli_import(tmp_path, small_run):
    _, ref_dir, _ = small_run
    mapping = tmp_path / "m.json"
    mapping.write_text(json.dumps(dataio.NATIVE_MAPPING))
    out = tmp_path / "sub" / "imported.txt"
    src = os.path.join(ref_dir, "dataset_low.txt")
    assert main(["import", src, "--mapping", str(mapping), "--output", str(out)]) == 0
    assert out.read_bytes() == open(src, "rb").read()


def test_cli_missing_dataset_is_stage_tagged(tmp_path, capsys):
    rc = main(["gain-map", "--dataset", str(tmp_path / "nope.txt"), "--out-dir", str(tmp_path)])
    assert rc == 1
    err = capsys.readouterr().err
    assert err.startswith("dronecf: error: [read]")


def test_cli_malformed_dataset(tmp_path, capsys):
    path = tmp_path / "bad.txt"
    path.write_text('{"format_version": 7}\n')
    assert main(["repro", "--dataset", str(path), "--out-dir", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "[read]" in err and "line 1" in err


def test_cli_format_version_gate(tmp_path, small_run, capsys):
    _, ref_dir, _ = small_run
    rc = main(["gain-map", "--dataset", os.path.join(ref_dir, "dataset_low.txt"),
               "--out-dir", str(tmp_path), "--format-version", "2"])
    assert rc == 1 and "[read]" in capsys.readouterr().err


def test_cli_bad_config(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"ues": [{"ue_id": 1, "position": [0, 0, 1]}] * 2}))
    assert main(["generate", "--config", str(path), "--out-dir", str(tmp_path)]) == 1
    assert "[config] ConfigError" in capsys.readouterr().err


def test_cli_bad_mapping(tmp_path, capsys):
    src = tmp_path / "x.csv"
    src.write_text("a,b\n1,2\n")
    mapping = tmp_path / "m.json"
    mapping.write_text(json.dumps({"units": {"position": "league"}}))
    rc = main(["import", str(src), "--mapping", str(mapping), "--output", str(tmp_path / "o.txt")])
    assert rc == 1 and "[import] MappingError" in capsys.readouterr().err


def test_cli_unknown_subcommand():
    with pytest.raises(SystemExit) as e:
        main(["fly-away"])
    assert e.value.code != 0


def test_module_entry_point(tmp_path):
    import subprocess
    import sys
    r = subprocess.run([sys.executable, "-m", "dronecf", "generate", "--out-dir", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0 and (tmp_path / "config.json").exists()
