import numpy as np
import pytest

from pepforge.data.dataset import build_example
from pepforge.evaluation.sequence import recovery_rate
from pepforge.generation.sequence_diffusion import sample_sequence
from pepforge.generation.structure_diffusion import sample_structure, wrapped_difference
from pepforge.generation.training import train_sequence, train_structure
from pepforge.utils.config import preset_config

pytestmark = pytest.mark.slow


def _overfit_config(steps=2000):
    cfg = preset_config()
    cfg.seed = 0
    cfg.optimizer.batch_size = 1
    cfg.optimizer.epochs = steps
    cfg.optimizer.max_steps = steps
    cfg.optimizer.patience = 0
    return cfg


@pytest.fixture
def example(complex_structure):
    return build_example(complex_structure, "P", k=0)


def test_structure_model_memorizes_one_complex(example):
    result = train_structure([example], [], _overfit_config())
    assert result.steps == 2000
    assert np.mean(result.train_losses[-100:]) < 0.05

    target = example.peptide_angles.angles
    errors = []
    for seed in range(5):
        ic = sample_structure(
            result.model, example.pocket, len(target), result.schedule, np.random.default_rng(seed), result.calibration
        )
        errors.append(np.abs(wrapped_difference(ic.angles, target)).mean())
    assert np.mean(errors) < 0.3


def test_sequence_model_memorizes_one_complex(example):
    result = train_sequence([example], [], _overfit_config())
    truth = example.interior_sequence
    samples = [
        sample_sequence(result.model, example.peptide_angles, example.pocket, result.transitions, np.random.default_rng(s))
        for s in range(10)
    ]
    identities = [recovery_rate(s, truth) for s in samples]
    assert np.mean(identities) >= 90.0
    assert max(identities) == 100.0
