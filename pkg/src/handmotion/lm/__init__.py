from .generate import (
    SamplingConfig,
    caption_motion,
    caption_stream,
    generate,
    generate_batch,
    stream_to_text,
    text_to_motion,
)
from .gumbel import gumbel_softmax, sample_gumbel_noise
from .losses import (
    RefineWeights,
    collate_ids,
    lm_loss,
    modality_mask,
    motion_positions,
    refine_step,
    sequence_nll,
    slice_motion_logits,
    soft_decode,
)
from .model import LMConfig, Seq2SeqLM, build_lm
from .templates import (
    InstructionTemplate,
    TaskExample,
    TemplateLibrary,
    build_vocabulary,
    mask_stream,
    render_m2t,
    render_masked,
    render_t2m,
)
from .train import (
    StageConfig,
    StageLog,
    default_stage_configs,
    encode_corpus,
    load_lm,
    save_lm,
    soft_reconstruction_mse,
    split_records,
    train_lm,
    train_three_stages,
    validation_ce,
)

__all__ = [
    "InstructionTemplate",
    "LMConfig",
    "RefineWeights",
    "SamplingConfig",
    "Seq2SeqLM",
    "StageConfig",
    "StageLog",
    "TaskExample",
    "TemplateLibrary",
    "build_lm",
    "build_vocabulary",
    "caption_motion",
    "caption_stream",
    "collate_ids",
    "default_stage_configs",
    "encode_corpus",
    "generate",
    "generate_batch",
    "gumbel_softmax",
    "lm_loss",
    "load_lm",
    "mask_stream",
    "modality_mask",
    "motion_positions",
    "refine_step",
    "render_m2t",
    "render_masked",
    "render_t2m",
    "sample_gumbel_noise",
    "save_lm",
    "sequence_nll",
    "slice_motion_logits",
    "soft_decode",
    "soft_reconstruction_mse",
    "split_records",
    "stream_to_text",
    "text_to_motion",
    "train_lm",
    "train_three_stages",
    "validation_ce",
]
