from .clients import HttpClient, MockClient, ModelClient
from .lof import NgramHashEmbedder, filter_annotations, lof_scores
from .pipeline import (
    AnnotationReport,
    PipelineConfig,
    Transcript,
    VerificationResult,
    annotate_records,
    build_fine_caption,
    describe_record,
    stage1_annotate,
    stage2_refine,
    verify_annotation,
)
from .prompts import (
    ATOMIC_KEYS,
    AtomicPromptSet,
    ClosedVocabulary,
    default_prompts,
    default_vocabulary,
)

__all__ = [
    "ATOMIC_KEYS",
    "AnnotationReport",
    "AtomicPromptSet",
    "ClosedVocabulary",
    "HttpClient",
    "MockClient",
    "ModelClient",
    "NgramHashEmbedder",
    "PipelineConfig",
    "Transcript",
    "VerificationResult",
    "annotate_records",
    "build_fine_caption",
    "default_prompts",
    "default_vocabulary",
    "describe_record",
    "filter_annotations",
    "lof_scores",
    "stage1_annotate",
    "stage2_refine",
    "verify_annotation",
]
