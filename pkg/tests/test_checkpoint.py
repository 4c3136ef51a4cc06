import json
import math

import numpy as np
import pytest

from pepforge.core.checkpoint import Checkpoint, check_compatible, load_checkpoint, save_checkpoint
from pepforge.core.denoiser import Denoiser
from pepforge.core.errors import ConfigError, DataError
from pepforge.generation.schedule import cosine_schedule
from pepforge.generation.structure_diffusion import AngleCalibration
from pepforge.utils.config import ModelConfig, preset_config


def _checkpoint(kind="structure", ext_k=0):
    cfg = preset_config()
    cfg.model = ModelConfig(blocks=1, hidden=8, heads=2, ff=16)
    cfg.schedule.T = 10
    cfg.ext_k = ext_k
    schedule = cosine_schedule(10)
    model = Denoiser(kind, cfg.model, schedule.T, seed=3)
    calibration = AngleCalibration.default() if kind == "structure" else None
    return Checkpoint(kind=kind, model=model, schedule=schedule, config=cfg, calibration=calibration,
                      training={"epoch": 1, "step": 4, "best_val_loss": 0.5})


def test_checkpoint_restores_the_model(tmp_path):
    ckpt = _checkpoint()
    path = str(tmp_path / "structure-ext0.ckpt.json")
    save_checkpoint(path, ckpt)
    back = load_checkpoint(path, expect_kind="structure")
    assert back.training == {"epoch": 1, "step": 4, "best_val_loss": 0.5}
    assert back.calibration == ckpt.calibration
    assert back.schedule.T == 10

    rng = np.random.default_rng(0)
    noisy = rng.uniform(-math.pi, math.pi, (1, 3, 8))
    poc_a = rng.uniform(-math.pi, math.pi, (1, 4, 8))
    poc_aa = np.eye(20)[rng.integers(0, 20, 4)][None]
    before = ckpt.model(noisy, [5], poc_a, poc_aa).data
    after = back.model(noisy, [5], poc_a, poc_aa).data
    assert np.array_equal(before, after)


def test_checkpoint_rejects_wrong_kind_and_bad_documents(tmp_path):
    path = tmp_path / "seq.ckpt.json"
    save_checkpoint(str(path), _checkpoint("sequence"))
    with pytest.raises(ConfigError):
        load_checkpoint(str(path), expect_kind="structure")

    doc = json.loads(path.read_text())
    doc["aa_order"] = "ARNDCQEGHILKMFPSTWYV"
    path.write_text(json.dumps(doc))
    with pytest.raises(ConfigError):
        load_checkpoint(str(path))

    path.write_text("{not json")
    with pytest.raises(DataError):
        load_checkpoint(str(path))
    with pytest.raises(DataError):
        load_checkpoint(str(tmp_path / "missing.json"))


def test_twin_checkpoints_must_share_ext_k():
    check_compatible(_checkpoint("structure", 1), _checkpoint("sequence", 1))
    with pytest.raises(ConfigError):
        check_compatible(_checkpoint("structure", 0), _checkpoint("sequence", 2))
