"""Dataset-level evaluation runs for the generation and captioning tasks.

Each metric is reported as mean +- 95% half-width over bootstrap repeats
(pool/subset resampling per repeat, seeded). Reports carry the evaluator's
parameter fingerprint so numbers are tied to a pinned feature extractor.
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from ..lm.generate import SamplingConfig, generate_batch, stream_to_text
from ..lm.templates import TemplateLibrary, render_m2t, render_t2m
from ..codec import TokenStream, deinterleave, interleave, repair
from .metrics import bleu, diversity, kid, mm_dist, multimodality, r_precision, rouge_l
from .report import M2T_COLUMNS, T2M_COLUMNS, MetricReport, bootstrap_metric


def _generated_motions(records, model, tokenizer, vocab, sampling, caption_key):
    library = TemplateLibrary.default()
    template = library.pretrain["t2m"]
    sources = [
        render_t2m(getattr(rec, caption_key), TokenStream(ids=()), vocab, template).source
        for rec in records
    ]
    streams = generate_batch(sources, model, vocab, sampling, motion_grammar=True)
    motions = []
    for stream in streams:
        tokens = deinterleave(repair(stream, vocab), vocab)
        motions.append(tokenizer.decode(tokens, original_n=tokens.steps * tokenizer.downsample))
    return motions


def evaluate_t2m(
    records,
    model,
    tokenizer,
    vocab,
    evaluator,
    n_repeats: int = 20,
    seed: int = 0,
    limit: int = 48,
    mm_prompts: int = 4,
    mm_samples: int = 4,
    pool_size: int = 32,
) -> MetricReport:
    records = records[: max(limit, pool_size)]
    if len(records) < pool_size:
        raise ValidationError(f"need at least {pool_size} records to evaluate")
    motions = _generated_motions(
        records, model, tokenizer, vocab, SamplingConfig(greedy=True), "caption_fine"
    )
    pairs = [(m, rec.caption_fine) for m, rec in zip(motions, records)]
    gen_feats = np.asarray(evaluator.embed_motions(motions))
    gt_feats = np.asarray(evaluator.embed_motions([rec.motion for rec in records]))

    report = MetricReport(task="t2m", evaluator_fingerprint=evaluator.fingerprint())
    report.add(
        bootstrap_metric(
            lambda rng: r_precision(pairs, evaluator, pool_size=pool_size, rng=rng),
            n_repeats,
            seed,
            name="RP3",
        )
    )

    def resampled_mmd(rng):
        idx = rng.integers(0, len(pairs), size=len(pairs))
        return mm_dist([pairs[i] for i in idx], evaluator)

    report.add(bootstrap_metric(resampled_mmd, n_repeats, seed + 1, name="MMD"))

    def resampled_kid(rng):
        half = max(2, len(records) // 2)
        ia = rng.choice(len(records), size=half, replace=False)
        ib = rng.choice(len(records), size=half, replace=False)
        return kid(gen_feats[ia], gt_feats[ib])

    report.add(bootstrap_metric(resampled_kid, n_repeats, seed + 2, name="KID"))
    report.add(
        bootstrap_metric(
            lambda rng: diversity(gen_feats, n_pairs=300, rng=rng),
            n_repeats,
            seed + 3,
            name="Div",
        )
    )

    prompts = [rec.caption_fine for rec in records[:mm_prompts]]

    def mm_metric(rng):
        groups = []
        for p_i, prompt in enumerate(prompts):
            sampling = SamplingConfig(
                greedy=False,
                temperature=1.0,
                top_k=50,
                seed=int(rng.integers(1 << 31)),
            )
            repeats = _generated_motions(
                [records[p_i]] * mm_samples, model, tokenizer, vocab, sampling, "caption_fine"
            )
            groups.append(np.asarray(evaluator.embed_motions(repeats)))
        return multimodality(groups)

    report.add(bootstrap_metric(mm_metric, max(2, n_repeats // 4), seed + 4, name="MM"))
    report.extra["n_records"] = len(records)
    return report


def evaluate_m2t(
    records,
    model,
    tokenizer,
    vocab,
    evaluator,
    n_repeats: int = 20,
    seed: int = 0,
    limit: int = 48,
    pool_size: int = 32,
) -> MetricReport:
    records = records[: max(limit, pool_size)]
    if len(records) < pool_size:
        raise ValidationError(f"need at least {pool_size} records to evaluate")
    library = TemplateLibrary.default()
    template = library.pretrain["m2t"]
    sources = []
    for rec in records:
        stream = interleave(tokenizer.encode(rec.motion), vocab)
        sources.append(render_m2t("", stream, vocab, template).source)
    outputs = generate_batch(sources, model, vocab, SamplingConfig(greedy=True))
    captions = [stream_to_text(s, vocab) or "<empty>" for s in outputs]

    pairs = [(rec.motion, cap) for rec, cap in zip(records, captions)]
    report = MetricReport(task="m2t", evaluator_fingerprint=evaluator.fingerprint())
    report.add(
        bootstrap_metric(
            lambda rng: r_precision(pairs, evaluator, pool_size=pool_size, rng=rng),
            n_repeats,
            seed,
            name="RP3",
        )
    )

    refs = [rec.caption_fine for rec in records]

    def language_metric(fn):
        def run(rng):
            idx = rng.integers(0, len(records), size=len(records))
            return float(np.mean([fn(captions[i], refs[i]) for i in idx]))

        return run

    report.add(
        bootstrap_metric(
            language_metric(lambda c, r: bleu(c, r, n=4)), n_repeats, seed + 1, name="B4"
        )
    )
    report.add(
        bootstrap_metric(
            language_metric(lambda c, r: bleu(c, r, n=1)), n_repeats, seed + 2, name="B1"
        )
    )
    report.add(
        bootstrap_metric(language_metric(rouge_l), n_repeats, seed + 3, name="RG")
    )
    report.extra["n_records"] = len(records)
    report.extra["sample_captions"] = captions[:5]
    return report


def report_columns(task: str) -> list[str]:
    return T2M_COLUMNS if task == "t2m" else M2T_COLUMNS
