"""Command-line entry point wiring every subsystem together.

Configuration is layered: built-in defaults, then a JSON config file
(--config), then explicit flags. Secrets (annotation endpoint and key)
may come from HANDMOTION_ANNOTATION_ENDPOINT / HANDMOTION_ANNOTATION_KEY.
Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import env_secrets, load_config_file, write_provenance
from .errors import HandMotionError

FAMILY_CHOICES = ("json", "csv", "keypoints")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file with default flag values")
    parser.add_argument("--seed", type=int, default=0, help="global random seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="handmotion",
        description="Bimanual hand-motion data, tokenizer, language model, and metrics.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic captioned corpus")
    _add_common(p)
    p.add_argument("--num", type=int, default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("curate", help="run the cleaning filters over a dataset")
    _add_common(p)
    p.add_argument("--in", dest="inp", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--min-visibility", type=float, default=0.8)
    p.add_argument("--sg-window", type=int, default=7)
    p.add_argument("--sg-order", type=int, default=3)
    p.add_argument("--gauss-sigma", type=float, default=1.0)
    p.add_argument("--accel-top-k", type=int, default=3)
    p.add_argument("--accel-threshold-trans", type=float, default=25.0)
    p.add_argument("--accel-threshold-rot", type=float, default=40.0)
    p.add_argument("--accel-before-smoothing", action="store_true")

    p = sub.add_parser("annotate", help="two-stage caption annotation")
    _add_common(p)
    p.add_argument("--in", dest="inp", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--client", choices=("mock", "http"), default="mock")
    p.add_argument("--endpoint", default=None)
    p.add_argument("--api-key", default=None)
    p.add_argument("--prompts", default=None, help="prompt template JSON file")
    p.add_argument("--vocab", default=None, help="closed vocabulary JSON file")

    p = sub.add_parser("train-tokenizer", help="train the motion tokenizer")
    _add_common(p)
    p.add_argument("--data", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--codebook-size", type=int, default=4096)
    p.add_argument("--code-dim", type=int, default=64)
    p.add_argument("--downsample", type=int, default=8)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--beta", type=float, default=0.25)
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--crop", type=int, default=32)

    p = sub.add_parser("train-lm", help="train one language-model stage")
    _add_common(p)
    p.add_argument("--data", default=None)
    p.add_argument("--tokenizer", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--stage", choices=("pretrain", "refine", "instruct"), default=None)
    p.add_argument("--resume", default=None, help="checkpoint of the previous stage")
    p.add_argument("--preset", choices=("tiny", "small"), default="tiny")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=16)

    p = sub.add_parser("generate", help="text to motion")
    _add_common(p)
    p.add_argument("--text", default=None)
    p.add_argument("--tokenizer", default=None)
    p.add_argument("--lm", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--temperature", type=float, default=None, help="sample instead of greedy")
    p.add_argument("--top-k", type=int, default=50)
    p.add_argument("--max-len", type=int, default=96)
    p.add_argument("--symbols-out", default=None, help="also dump the token symbols as JSON")

    p = sub.add_parser("caption", help="motion to text")
    _add_common(p)
    p.add_argument("--motion", default=None)
    p.add_argument("--tokenizer", default=None)
    p.add_argument("--lm", default=None)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--out", default=None)

    p = sub.add_parser("evaluate", help="metric suite for t2m or m2t")
    _add_common(p)
    p.add_argument("--task", choices=("t2m", "m2t"), default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--tokenizer", default=None)
    p.add_argument("--lm", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--evaluator", default=None, help="evaluator checkpoint to reuse")
    p.add_argument("--evaluator-data", default=None, help="dataset to train the evaluator on")
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--limit", type=int, default=48)

    p = sub.add_parser("export", help="export a motion file")
    _add_common(p)
    p.add_argument("--motion", default=None)
    p.add_argument("--format", choices=FAMILY_CHOICES, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--fps", type=float, default=30.0)

    return parser


def _explicit_flags(argv: list[str]) -> set[str]:
    out = set()
    for token in argv:
        if token.startswith("--"):
            out.add(token[2:].split("=", 1)[0].replace("-", "_"))
    return out


def _resolve(args: argparse.Namespace, argv: list[str]) -> dict:
    resolved = vars(args).copy()
    if resolved.get("config"):
        file_values = load_config_file(resolved["config"])
        explicit = _explicit_flags(argv)
        for key, value in file_values.items():
            if key in resolved and key not in explicit:
                resolved[key] = value
    return resolved


def _load_models(ns):
    from .lm.train import load_lm_with_vocab
    from .tokenizer.train import load_tokenizer

    tokenizer, _ = load_tokenizer(ns["tokenizer"])
    model, vocab, _ = load_lm_with_vocab(ns["lm"])
    return tokenizer, model, vocab


def _cmd_gen_data(ns) -> int:
    from .datagen import generate_corpus
    from .dataset_io import write_dataset

    records = generate_corpus(ns["num"], ns["seed"])
    write_dataset(records, ns["out"])
    write_provenance(Path(ns["out"]), ns)
    print(f"wrote {len(records)} records to {ns['out']}")
    return 0


def _cmd_curate(ns) -> int:
    from .dataset_io import read_dataset, write_dataset
    from .filters import CurationConfig, curate

    records = read_dataset(ns["inp"])
    config = CurationConfig(
        min_visibility=ns["min_visibility"],
        sg_window=ns["sg_window"],
        sg_order=ns["sg_order"],
        gauss_sigma=ns["gauss_sigma"],
        accel_top_k=ns["accel_top_k"],
        accel_threshold_trans=ns["accel_threshold_trans"],
        accel_threshold_rot=ns["accel_threshold_rot"],
        accel_before_smoothing=ns["accel_before_smoothing"],
    )
    kept, report = curate(records, config)
    write_dataset(kept, ns["out"])
    out = Path(ns["out"])
    (out / "curation_report.json").write_text(
        json.dumps(
            {"kept": report.kept_ids, "rejected": report.rejected}, indent=2
        )
    )
    write_provenance(out, ns, {"input": ns["inp"]})
    print(f"kept {len(kept)}/{len(records)} records; rejected {len(report.rejected)}")
    return 0


def _cmd_annotate(ns) -> int:
    from .annotation import (
        AtomicPromptSet,
        ClosedVocabulary,
        HttpClient,
        MockClient,
        PipelineConfig,
        annotate_records,
        default_prompts,
        default_vocabulary,
    )
    from .dataset_io import read_dataset, write_dataset

    prompts = AtomicPromptSet.from_file(ns["prompts"]) if ns["prompts"] else default_prompts()
    vocab = ClosedVocabulary.from_file(ns["vocab"]) if ns["vocab"] else default_vocabulary()
    secrets = env_secrets()
    if ns["client"] == "http":
        endpoint = ns["endpoint"] or secrets.get("endpoint")
        if not endpoint:
            raise HandMotionError(
                "http client needs --endpoint or HANDMOTION_ANNOTATION_ENDPOINT"
            )
        client = HttpClient(endpoint, api_key=secrets.get("api_key") or ns["api_key"])
    else:
        client = MockClient(prompts, vocab, seed=ns["seed"])
    records = read_dataset(ns["inp"])
    annotated, report = annotate_records(records, client, prompts, vocab, PipelineConfig())
    write_dataset(annotated, ns["out"])
    out = Path(ns["out"])
    (out / "annotation_report.json").write_text(
        json.dumps(
            {
                "annotated": report.annotated_ids,
                "rejected": report.rejected,
                "flagged": report.flagged_ids,
                "lof_scores": report.lof_scores,
            },
            indent=2,
        )
    )
    (out / "annotation_transcripts.json").write_text(json.dumps(report.transcripts, indent=2))
    write_provenance(out, {k: v for k, v in ns.items() if k != "api_key"}, {"input": ns["inp"]})
    print(f"annotated {len(annotated)}/{len(records)} records with {client.name} client")
    return 0


def _cmd_train_tokenizer(ns) -> int:
    from .dataset_io import read_dataset
    from .records import corpus_fingerprint
    from .tokenizer import (
        TokenizerConfig,
        TokenizerTrainConfig,
        save_tokenizer,
        train_tokenizer,
    )

    records = read_dataset(ns["data"])
    config = TokenizerTrainConfig(
        model=TokenizerConfig(
            codebook_size=ns["codebook_size"],
            code_dim=ns["code_dim"],
            downsample=ns["downsample"],
            width=ns["width"],
            beta=ns["beta"],
        ),
        epochs=ns["epochs"],
        lr=ns["lr"],
        batch_size=ns["batch_size"],
        crop=ns["crop"],
        seed=ns["seed"],
    )
    model, log = train_tokenizer(records, config)
    out = Path(ns["out"])
    out.mkdir(parents=True, exist_ok=True)
    save_tokenizer(
        model, out / "tokenizer.npz", seed=ns["seed"], corpus_hash=corpus_fingerprint(records)
    )
    log.to_csv(out / "tokenizer_log.csv")
    write_provenance(out, ns, {"data": ns["data"]})
    status = "aborted (NaN)" if log.aborted else "done"
    print(f"tokenizer {status}: final loss {log.rows[-1]['loss']:.6f}" if log.rows else status)
    return 0


def _cmd_train_lm(ns) -> int:
    from .dataset_io import read_dataset
    from .lm import LMConfig, build_lm, build_vocabulary, default_stage_configs
    from .lm.train import load_lm_with_vocab, train_lm
    from .tokenizer.train import load_tokenizer

    records = read_dataset(ns["data"])
    tokenizer, _ = load_tokenizer(ns["tokenizer"])
    if ns["resume"]:
        model, vocab, _ = load_lm_with_vocab(ns["resume"])
    else:
        vocab = build_vocabulary(records, tokenizer.config.codebook_size)
        preset = LMConfig.small if ns["preset"] == "small" else LMConfig.tiny
        model = build_lm(preset(vocab.size), vocab.pad_id, seed=ns["seed"])
    base = default_stage_configs(ns["seed"])[ns["stage"]]
    overrides = {
        key: ns[key]
        for key in ("epochs", "lr", "alpha", "lam")
        if ns.get(key) is not None
    }
    overrides["batch_size"] = ns["batch_size"]
    from dataclasses import replace

    stage_config = replace(base, **overrides)
    model, log = train_lm(records, stage_config, model, tokenizer, vocab, checkpoint_dir=ns["out"])
    write_provenance(Path(ns["out"]), ns, {"data": ns["data"], "tokenizer": ns["tokenizer"]})
    status = "aborted (NaN)" if log.aborted else "done"
    last = log.rows[-1] if log.rows else {}
    print(f"stage {ns['stage']} {status}: val_ce {last.get('val_ce', float('nan')):.4f}")
    return 0


def _cmd_generate(ns) -> int:
    from .dataset_io import write_motion_file
    from .lm import SamplingConfig, text_to_motion
    from .motion import flatten

    tokenizer, model, vocab = _load_models(ns)
    sampling = SamplingConfig(
        greedy=ns["temperature"] is None,
        temperature=ns["temperature"] if ns["temperature"] is not None else 1.0,
        top_k=ns["top_k"],
        max_len=ns["max_len"],
        seed=ns["seed"],
    )
    motion, stream = text_to_motion(ns["text"], model, tokenizer, vocab, sampling)
    out = Path(ns["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    write_motion_file(out, flatten(motion))
    if ns["symbols_out"]:
        Path(ns["symbols_out"]).write_text(json.dumps(vocab.to_symbols(stream)))
    write_provenance(out, ns, {"tokenizer": ns["tokenizer"], "lm": ns["lm"]})
    print(f"wrote {motion.frames} frames ({(len(stream.ids) - 2) // 4} motion steps) to {out}")
    return 0


def _cmd_caption(ns) -> int:
    from .dataset_io import read_motion_file
    from .lm import SamplingConfig, caption_motion
    from .motion import unflatten

    tokenizer, model, vocab = _load_models(ns)
    motion = unflatten(read_motion_file(Path(ns["motion"])), fps=ns["fps"])
    text = caption_motion(motion, model, tokenizer, vocab, SamplingConfig(greedy=True))
    if ns["out"]:
        Path(ns["out"]).write_text(text + "\n")
    print(text)
    return 0


def _cmd_evaluate(ns) -> int:
    from .dataset_io import read_dataset
    from .evaluation import (
        EvaluatorTrainConfig,
        evaluate_m2t,
        evaluate_t2m,
        load_evaluator,
        report_columns,
        save_evaluator,
        train_evaluator,
    )

    records = read_dataset(ns["data"])
    tokenizer, model, vocab = _load_models(ns)
    out = Path(ns["out"])
    out.mkdir(parents=True, exist_ok=True)
    if ns["evaluator"]:
        evaluator = load_evaluator(ns["evaluator"])
    else:
        train_data = read_dataset(ns["evaluator_data"]) if ns["evaluator_data"] else records
        evaluator = train_evaluator(train_data, EvaluatorTrainConfig(seed=ns["seed"]))
        save_evaluator(evaluator, out / "evaluator.npz", seed=ns["seed"])
    run = evaluate_t2m if ns["task"] == "t2m" else evaluate_m2t
    report = run(
        records,
        model,
        tokenizer,
        vocab,
        evaluator,
        n_repeats=ns["repeats"],
        seed=ns["seed"],
        limit=ns["limit"],
    )
    report.to_json(out / f"report_{ns['task']}.json")
    report.to_csv(out / f"report_{ns['task']}.csv", columns=report_columns(ns["task"]))
    write_provenance(out, ns, {"data": ns["data"], "tokenizer": ns["tokenizer"], "lm": ns["lm"]})
    for name in report_columns(ns["task"]):
        if name in report.metrics:
            print(f"{name}: {report.metrics[name]}")
    return 0


def _cmd_export(ns) -> int:
    from .dataset_io import read_motion_file
    from .motion import default_skeleton, forward_kinematics, unflatten

    rows = read_motion_file(Path(ns["motion"]))
    motion = unflatten(rows, fps=ns["fps"])
    fmt = ns["format"]
    if fmt == "json":
        payload = {"fps": motion.fps, "frames": motion.frames, "rows": rows.tolist()}
        text = json.dumps(payload)
    elif fmt == "csv":
        header = ",".join(f"f{i:03d}" for i in range(rows.shape[1]))
        lines = [header] + [",".join(f"{v:.6g}" for v in row) for row in rows]
        text = "\n".join(lines) + "\n"
    else:
        skeleton = default_skeleton()
        payload = {
            "fps": motion.fps,
            "left": forward_kinematics(motion.left, skeleton).tolist(),
            "right": forward_kinematics(motion.right, skeleton).tolist(),
        }
        text = json.dumps(payload)
    if ns["out"]:
        Path(ns["out"]).write_text(text)
        print(f"exported {fmt} to {ns['out']}")
    else:
        print(text)
    return 0


_REQUIRED = {
    "gen-data": ("num", "out"),
    "curate": ("inp", "out"),
    "annotate": ("inp", "out"),
    "train-tokenizer": ("data", "out"),
    "train-lm": ("data", "tokenizer", "out", "stage"),
    "generate": ("text", "tokenizer", "lm", "out"),
    "caption": ("motion", "tokenizer", "lm"),
    "evaluate": ("task", "data", "tokenizer", "lm", "out"),
    "export": ("motion", "format"),
}


_HANDLERS = {
    "gen-data": _cmd_gen_data,
    "curate": _cmd_curate,
    "annotate": _cmd_annotate,
    "train-tokenizer": _cmd_train_tokenizer,
    "train-lm": _cmd_train_lm,
    "generate": _cmd_generate,
    "caption": _cmd_caption,
    "evaluate": _cmd_evaluate,
    "export": _cmd_export,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        ns = _resolve(args, argv)
        missing = [k for k in _REQUIRED[args.command] if ns.get(k) in (None, "")]
        if missing:
            flags = ", ".join("--" + m.replace("inp", "in").replace("_", "-") for m in missing)
            parser.error(f"{args.command}: missing required value(s): {flags}")
        np.random.seed(ns.get("seed", 0) % (2**32))
        return _HANDLERS[args.command](ns)
    except HandMotionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
