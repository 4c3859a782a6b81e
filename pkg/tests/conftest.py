"""Shared desk-scale fixtures: the training runs are expensive, so the toy
corpus, trained tokenizer, language model stages, and evaluator are built
once per session and reused by unit and acceptance tests alike."""

import pytest

from handmotion.datagen import generate_corpus
from handmotion.filters import curate
from handmotion.tokenizer import (
    TokenizerConfig,
    TokenizerTrainConfig,
    build_tokenizer,
    reconstruction_mse,
    train_tokenizer,
)

DESK_SEED = 11

DESK_TOKENIZER_CONFIG = TokenizerTrainConfig(
    model=TokenizerConfig(codebook_size=192, code_dim=16, downsample=8, width=48),
    epochs=50,
    lr=2e-3,
    batch_size=32,
    crop=32,
    seed=DESK_SEED,
)


@pytest.fixture(scope="session")
def toy_corpus():
    records, report = curate(generate_corpus(200, seed=DESK_SEED))
    assert report.kept_fraction == 1.0
    return records


@pytest.fixture(scope="session")
def heldout_corpus():
    records, _ = curate(generate_corpus(100, seed=977))
    return records


@pytest.fixture(scope="session")
def desk_tokenizer(toy_corpus):
    import time

    initial = build_tokenizer(DESK_TOKENIZER_CONFIG.model, seed=DESK_SEED)
    initial.fit_normalization(toy_corpus)
    initial_mse = reconstruction_mse(initial, toy_corpus)
    start = time.monotonic()
    model, log = train_tokenizer(toy_corpus, DESK_TOKENIZER_CONFIG)
    seconds = time.monotonic() - start
    from handmotion.tokenizer import fingerprint_state

    return {
        "model": model,
        "log": log,
        "initial_mse": initial_mse,
        "seconds": seconds,
        "fingerprint": fingerprint_state(model),
    }


@pytest.fixture(scope="session")
def lm_bundle(toy_corpus, desk_tokenizer):
    import time

    from handmotion.lm import train_three_stages

    start = time.monotonic()
    bundle = train_three_stages(toy_corpus, desk_tokenizer["model"], seed=DESK_SEED)
    bundle["seconds"] = time.monotonic() - start
    return bundle


@pytest.fixture(scope="session")
def desk_evaluator(toy_corpus):
    from handmotion.evaluation import EvaluatorTrainConfig, train_evaluator

    return train_evaluator(toy_corpus, EvaluatorTrainConfig(seed=DESK_SEED))
