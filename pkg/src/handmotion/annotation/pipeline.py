"""Two-stage caption annotation against a pluggable text-model client.

Stage 1 fans four atomic aspect prompts out concurrently and merges the
answers with a summarization prompt. Stage 2 grounds the summary in the
closed verb/noun vocabulary (hard validation with one re-query). Captions
are then verified by one more model pass and finally filtered for outliers
with LOF over caption embeddings.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from ..errors import (
    AnnotationClientError,
    ClientMalformedError,
    RefinementEmptyError,
    StageFailureError,
)
from ..records import SequenceRecord
from .clients import ModelClient
from .lof import NgramHashEmbedder, filter_annotations
from .prompts import ATOMIC_KEYS, AtomicPromptSet, ClosedVocabulary


@dataclass(frozen=True)
class PipelineConfig:
    max_retries: int = 2  # extra attempts after the first call
    verify_threshold: float = 0.5
    requery_budget: int = 1
    max_pairs: int = 3
    lof_k: int = 5
    lof_threshold: float = 1.5
    max_tokens: int = 256


@dataclass
class VerificationResult:
    accepted: bool
    score: float | None
    flagged: bool = False


@dataclass
class Transcript:
    """Audit log of every prompt/response exchanged for one record."""

    entries: list[dict] = field(default_factory=list)

    def add(self, stage: str, key: str, prompt: str, response: str, attempt: int):
        self.entries.append(
            {
                "stage": stage,
                "key": key,
                "prompt": prompt,
                "response": response,
                "attempt": attempt,
            }
        )


def _call_with_retry(
    client: ModelClient,
    prompt: str,
    descriptor: str,
    config: PipelineConfig,
    transcript: Transcript,
    stage: str,
    key: str,
) -> str:
    last_error: AnnotationClientError | None = None
    for attempt in range(config.max_retries + 1):
        try:
            response = client.complete(prompt, descriptor, config.max_tokens)
            transcript.add(stage, key, prompt, response, attempt)
            return response
        except AnnotationClientError as exc:
            transcript.add(stage, key, prompt, f"<error: {exc}>", attempt)
            last_error = exc
    raise StageFailureError(
        f"{stage}/{key} failed after {config.max_retries + 1} attempts: {last_error}",
        transcript=transcript.entries,
    )


def _parse_json_field(response: str, key: str):
    try:
        payload = json.loads(response)
        return payload[key]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ClientMalformedError(f"response lacks JSON field {key!r}: {response!r}") from exc


def stage1_annotate(
    input_descriptor: str,
    prompts: AtomicPromptSet,
    client: ModelClient,
    config: PipelineConfig | None = None,
    transcript: Transcript | None = None,
) -> tuple[str, Transcript]:
    """Parallel atomic prompts -> deterministic keyed join -> summary."""
    config = config or PipelineConfig()
    transcript = transcript if transcript is not None else Transcript()

    def run(key: str) -> tuple[str, Transcript]:
        # each worker logs into its own transcript; merged in key order below
        # so the audit log is independent of completion order
        local = Transcript()
        prompt = prompts.atomic[key].format(input=input_descriptor)
        response = _call_with_retry(
            client, prompt, input_descriptor, config, local, "stage1", key
        )
        return _parse_json_field(response, key), local

    workers = min(len(ATOMIC_KEYS), client.max_in_flight)
    answers = {}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {key: pool.submit(run, key) for key in ATOMIC_KEYS}
        partial_logs = {}
        errors = {}
        for key in ATOMIC_KEYS:
            try:
                answers[key], partial_logs[key] = futures[key].result()
            except StageFailureError as exc:
                errors[key] = exc
                partial_logs[key] = Transcript(entries=list(exc.transcript))
    for key in ATOMIC_KEYS:
        transcript.entries.extend(partial_logs[key].entries)
    if errors:
        key, exc = next(iter(sorted(errors.items())))
        raise StageFailureError(str(exc), transcript=transcript.entries)

    observations = "\n".join(f"{key}: {answers[key]}" for key in ATOMIC_KEYS)
    prompt = prompts.summarize.format(input=observations)
    response = _call_with_retry(
        client, prompt, input_descriptor, config, transcript, "stage1", "summarize"
    )
    summary = _parse_json_field(response, "summary")
    return str(summary), transcript


def build_fine_caption(pairs: list[tuple[str, str]]) -> str:
    body = " and ".join(f"{verb} the {noun}" for verb, noun in pairs)
    return f"The hands {body}."


def _parse_pairs(response: str) -> list[tuple[str, str]]:
    raw = _parse_json_field(response, "pairs")
    if not isinstance(raw, list):
        raise ClientMalformedError(f"'pairs' is not a list: {response!r}")
    pairs = []
    for item in raw:
        if not (isinstance(item, (list, tuple)) and len(item) == 2):
            raise ClientMalformedError(f"malformed pair entry: {item!r}")
        pairs.append((str(item[0]), str(item[1])))
    return pairs


def stage2_refine(
    high_caption: str,
    vocab: ClosedVocabulary,
    client: ModelClient,
    prompts: AtomicPromptSet,
    config: PipelineConfig | None = None,
    transcript: Transcript | None = None,
) -> tuple[str, list[tuple[str, str]], Transcript]:
    """Closed-vocabulary grounding with hard validation and one re-query."""
    config = config or PipelineConfig()
    transcript = transcript if transcript is not None else Transcript()
    prompt = prompts.refine.format(input=high_caption, vocabulary=vocab.rendered())

    response = _call_with_retry(
        client, prompt, high_caption, config, transcript, "stage2", "refine"
    )
    pairs = _parse_pairs(response)
    valid = [p for p in pairs if p in vocab]
    invalid = [p for p in pairs if p not in vocab]

    for _ in range(config.requery_budget):
        if not invalid:
            break
        retry_prompt = (
            prompt
            + "\nYour previous selection included pairs outside the allowed list"
            + f" ({', '.join('/'.join(p) for p in invalid)}). Choose only allowed pairs."
        )
        response = _call_with_retry(
            client, retry_prompt, high_caption, config, transcript, "stage2", "refine_requery"
        )
        pairs = _parse_pairs(response)
        valid.extend(p for p in pairs if p in vocab and p not in valid)
        invalid = [p for p in pairs if p not in vocab]

    valid = valid[: config.max_pairs]
    if not valid:
        raise RefinementEmptyError(
            f"no in-vocabulary pairs selected for caption {high_caption!r}"
        )
    return build_fine_caption(valid), valid, transcript


def verify_annotation(
    caption: str,
    input_descriptor: str,
    client: ModelClient,
    prompts: AtomicPromptSet,
    config: PipelineConfig | None = None,
    transcript: Transcript | None = None,
) -> VerificationResult:
    """Threshold accept/reject; if the client is down, keep but flag."""
    config = config or PipelineConfig()
    transcript = transcript if transcript is not None else Transcript()
    prompt = prompts.verify.format(input=input_descriptor, caption=caption)
    try:
        response = _call_with_retry(
            client, prompt, input_descriptor, config, transcript, "verify", "verify"
        )
        score = float(_parse_json_field(response, "score"))
    except (StageFailureError, ClientMalformedError, ValueError):
        return VerificationResult(accepted=True, score=None, flagged=True)
    return VerificationResult(accepted=score >= config.verify_threshold, score=score)


@dataclass
class AnnotationReport:
    annotated_ids: list[str]
    rejected: list[tuple[str, str]]  # (id, reason)
    flagged_ids: list[str]
    lof_scores: dict[str, float]
    transcripts: dict[str, list[dict]]


def describe_record(rec: SequenceRecord) -> str:
    """Textual stand-in for the clip content fed to the model client."""
    return f"egocentric clip ({rec.motion.frames} frames): {rec.caption_high}"


def annotate_records(
    records: list[SequenceRecord],
    client: ModelClient,
    prompts: AtomicPromptSet,
    vocab: ClosedVocabulary,
    config: PipelineConfig | None = None,
) -> tuple[list[SequenceRecord], AnnotationReport]:
    """Full pass: stage1 -> stage2 -> verification -> LOF outlier filter."""
    config = config or PipelineConfig()
    annotated: list[SequenceRecord] = []
    rejected: list[tuple[str, str]] = []
    flagged: list[str] = []
    transcripts: dict[str, list[dict]] = {}

    for rec in records:
        descriptor = describe_record(rec)
        transcript = Transcript()
        try:
            summary, _ = stage1_annotate(descriptor, prompts, client, config, transcript)
            fine, pairs, _ = stage2_refine(
                summary, vocab, client, prompts, config, transcript
            )
        except (StageFailureError, RefinementEmptyError, ClientMalformedError) as exc:
            transcripts[rec.id] = transcript.entries
            rejected.append((rec.id, f"{type(exc).__name__}"))
            continue
        verdict = verify_annotation(fine, descriptor, client, prompts, config, transcript)
        transcripts[rec.id] = transcript.entries
        if verdict.flagged:
            flagged.append(rec.id)
        elif not verdict.accepted:
            rejected.append((rec.id, "verification"))
            continue
        log = rec.filter_log + [
            ("verify", verdict.accepted, -1.0 if verdict.score is None else verdict.score)
        ]
        annotated.append(
            replace(rec, caption_high=summary, caption_fine=fine, filter_log=log)
        )

    kept, scores = filter_annotations(
        annotated,
        embedder=NgramHashEmbedder(),
        k=config.lof_k,
        lof_threshold=config.lof_threshold,
    )
    kept_ids = {r.id for r in kept}
    for rec in annotated:
        if rec.id not in kept_ids:
            rejected.append((rec.id, "lof"))
    rejected.sort(key=lambda pair: pair[0])
    return kept, AnnotationReport(
        annotated_ids=[r.id for r in kept],
        rejected=rejected,
        flagged_ids=sorted(flagged),
        lof_scores=scores,
        transcripts=transcripts,
    )
