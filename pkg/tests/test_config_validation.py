import json
import os

import pytest

from pepforge.core.errors import ConfigError, ConfigValidationError, InvariantError
from pepforge.data.dataset import build_example, example_to_doc
from pepforge.utils.config import (
    append_history,
    get_history_path,
    load_run_config,
    parse_override,
    preset_config,
    read_history,
    run_config_from_dict,
)
from pepforge.utils.config_validation import (
    assert_valid_example_doc,
    assert_valid_run_config,
    validate_example_doc,
    validate_run_config,
)


def _paths(issues):
    return {i.path for i in issues}


def test_presets_are_valid():
    for name in ("miniature", "full"):
        ok, issues = validate_run_config(preset_config(name).to_dict())
        assert ok, issues
    full = preset_config("full")
    assert full.schedule.T == 1000
    assert full.model.hidden % full.model.heads == 0
    with pytest.raises(ConfigError):
        preset_config("huge")


def test_validator_reports_path_scoped_issues():
    cfg = preset_config().to_dict()
    cfg["model"]["heads"] = 3
    cfg["schedule"]["T"] = 1
    cfg["split_ratios"] = [0.5, 0.5, 0.5]
    cfg["ext_k"] = 7
    ok, issues = validate_run_config(cfg)
    assert not ok
    assert {"$.model.heads", "$.schedule.T", "$.split_ratios", "$.ext_k"} <= _paths(issues)
    codes = {i.path: i.code for i in issues}
    assert codes["$.model.heads"] == "cross_constraint"


def test_validator_collects_instead_of_raising():
    ok, issues = validate_run_config({"model": "wide"})
    assert not ok
    assert "$.model" in _paths(issues)
    ok, issues = validate_run_config([])  # type: ignore[arg-type]
    assert not ok and _paths(issues) == {"$"}


def test_assert_valid_run_config_raises_with_paths():
    cfg = preset_config().to_dict()
    cfg["optimizer"]["lr"] = -1.0
    with pytest.raises(ConfigValidationError) as info:
        assert_valid_run_config(cfg)
    assert "$.optimizer.lr" in str(info.value)
    assert info.value.exit_code == 2


def test_parse_override_reads_toml_literals():
    assert parse_override("model.hidden=16") == (["model", "hidden"], 16)
    assert parse_override("split_ratios=[0.6, 0.2, 0.2]") == (["split_ratios"], [0.6, 0.2, 0.2])
    assert parse_override("paths.data_dir=some/dir") == (["paths", "data_dir"], "some/dir")
    with pytest.raises(ConfigError):
        parse_override("model.hidden")


def test_load_precedence(tmp_path, monkeypatch):
    toml = tmp_path / "run.toml"
    toml.write_text('preset = "miniature"\next_k = 2\n[model]\nhidden = 32\nheads = 4\n')
    monkeypatch.setenv("PEPFORGE_SEED", "17")
    cfg = load_run_config(str(toml), overrides=["model.blocks=3"])
    assert (cfg.ext_k, cfg.model.hidden, cfg.model.blocks, cfg.seed) == (2, 32, 3, 17)
    cfg = load_run_config(str(toml), seed=5, ext_k=4)
    assert (cfg.seed, cfg.ext_k) == (5, 4)
    cfg = load_run_config(str(toml), preset="full")
    assert cfg.schedule.T == 1000 and cfg.model.hidden == 32


def test_config_file_is_found_in_working_directory(tmp_path):
    (tmp_path / "pepforge.toml").write_text("[schedule]\nT = 20\n")
    assert load_run_config().schedule.T == 20
    assert load_run_config(search=False).schedule.T == 100


def test_load_rejects_bad_input(tmp_path, monkeypatch):
    toml = tmp_path / "run.toml"
    toml.write_text("[model]\nwidth = 3\n")
    with pytest.raises(ConfigError):
        load_run_config(str(toml))
    with pytest.raises(ConfigError):
        load_run_config(str(tmp_path / "missing.toml"))
    with pytest.raises(ConfigValidationError):
        load_run_config(search=False, overrides=["model.heads=5"])
    with pytest.raises(ConfigError):
        load_run_config(search=False, overrides=["model.hidden=wide"])
    monkeypatch.setenv("PEPFORGE_SEED", "abc")
    with pytest.raises(ConfigError):
        load_run_config(search=False)


def test_run_config_from_dict_restores_values():
    cfg = preset_config()
    cfg.model.hidden = 16
    cfg.split_ratios = (0.6, 0.2, 0.2)
    back = run_config_from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg


def test_example_doc_validation(complex_structure):
    doc = example_to_doc(build_example(complex_structure, "P", k=0))
    ok, issues = validate_example_doc(doc)
    assert ok, issues
    doc["meta"]["aa_order"] = "ARNDCQEGHILKMFPSTWYV"
    doc["peptide"]["angles"][0][5] = -1.0
    doc["pocket"]["ids"] = doc["pocket"]["ids"][:-1]
    ok, issues = validate_example_doc(doc)
    assert not ok
    assert {"$.meta.aa_order", "$.peptide.angles[0]", "$.pocket.ids"} <= _paths(issues)
    with pytest.raises(InvariantError):
        assert_valid_example_doc(doc)


def test_history_lives_in_the_config_dir(tmp_path):
    append_history({"command": "prepare", "request_id": "r1"})
    append_history({"command": "train", "request_id": "r2"})
    path = get_history_path()
    assert os.path.dirname(path) == os.environ["PEPFORGE_HOME"]
    records = read_history()
    assert [r["command"] for r in records] == ["prepare", "train"]
    assert all("ts" in r for r in records)
    assert read_history(limit=1)[0]["request_id"] == "r2"


def test_history_can_be_disabled(monkeypatch):
    monkeypatch.setenv("PEPFORGE_HISTORY", "0")
    append_history({"command": "prepare"})
    assert read_history() == []
