from __future__ import annotations

import pytest

from cqsim.dialogue import build_eval_scripts, synthetic_training_turns
from cqsim.drawer import TrainConfig, Vocabulary, train
from cqsim.world import default_gallery


@pytest.fixture(scope="session")
def gallery():
    return default_gallery()


@pytest.fixture(scope="session")
def small_model(gallery):
    """A quickly trained drawer for engine/service tests (not statement-quality)."""
    turns = synthetic_training_turns(150, gallery, seed=0)
    vocab = Vocabulary.from_texts([t.input_text for t in turns])
    result = train(turns, vocab, gallery, TrainConfig(epochs=6, seed=0))
    return result.params


@pytest.fixture(scope="session")
def small_scripts(gallery):
    return build_eval_scripts(25, gallery, seed=11)
