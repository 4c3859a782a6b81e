from .model import (
    Codebook,
    ModalityAutoencoder,
    MotionTokenizer,
    TokenizerConfig,
    build_tokenizer,
    pad_to_multiple,
)
from .train import (
    TokenizerTrainConfig,
    TrainingLog,
    compression_study,
    corpus_variance,
    fingerprint_state,
    load_tokenizer,
    reconstruction_mse,
    save_tokenizer,
    train_tokenizer,
)

__all__ = [
    "Codebook",
    "ModalityAutoencoder",
    "MotionTokenizer",
    "TokenizerConfig",
    "TokenizerTrainConfig",
    "TrainingLog",
    "build_tokenizer",
    "compression_study",
    "corpus_variance",
    "fingerprint_state",
    "load_tokenizer",
    "pad_to_multiple",
    "reconstruction_mse",
    "save_tokenizer",
    "train_tokenizer",
]
