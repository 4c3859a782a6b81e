"""Prompt templates and the closed verb/noun vocabulary for annotation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..errors import ValidationError

ATOMIC_KEYS = ("hand_role", "action_object", "state_transition", "intent")


@dataclass(frozen=True)
class AtomicPromptSet:
    """Four aspect prompts plus summarization, refinement, and verification."""

    atomic: dict[str, str]
    summarize: str
    refine: str
    verify: str

    def __post_init__(self):
        if tuple(sorted(self.atomic)) != tuple(sorted(ATOMIC_KEYS)):
            raise ValidationError(f"atomic prompt keys must be exactly {ATOMIC_KEYS}")
        for name, template in self.all_templates().items():
            if "{input}" not in template:
                raise ValidationError(f"template {name!r} lacks the {{input}} placeholder")
        if "{vocabulary}" not in self.refine:
            raise ValidationError("refine template lacks the {vocabulary} placeholder")
        if "{caption}" not in self.verify:
            raise ValidationError("verify template lacks the {caption} placeholder")

    def all_templates(self) -> dict[str, str]:
        out = dict(self.atomic)
        out.update(summarize=self.summarize, refine=self.refine, verify=self.verify)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "AtomicPromptSet":
        return cls(
            atomic=dict(data["atomic"]),
            summarize=data["summarize"],
            refine=data["refine"],
            verify=data["verify"],
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "AtomicPromptSet":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def default_prompts() -> AtomicPromptSet:
    data = resources.files("handmotion.data").joinpath("prompts.json").read_text()
    return AtomicPromptSet.from_dict(json.loads(data))


@dataclass(frozen=True)
class ClosedVocabulary:
    """Named clusters of allowed (verb, noun) pairs."""

    clusters: dict[str, tuple[tuple[str, str], ...]]

    def __post_init__(self):
        seen = set()
        for name, pairs in self.clusters.items():
            if not pairs:
                raise ValidationError(f"cluster {name!r} is empty")
            for pair in pairs:
                if pair in seen:
                    raise ValidationError(f"duplicate pair {pair}")
                seen.add(pair)

    def pairs(self) -> list[tuple[str, str]]:
        out = []
        for name in sorted(self.clusters):
            out.extend(self.clusters[name])
        return out

    def __contains__(self, pair) -> bool:
        pair = (pair[0], pair[1])
        return any(pair in cluster for cluster in self.clusters.values())

    def rendered(self) -> str:
        return "\n".join(f"- {v} / {n}" for v, n in sorted(self.pairs()))

    @classmethod
    def from_dict(cls, data: dict) -> "ClosedVocabulary":
        return cls(
            clusters={
                name: tuple((v, n) for v, n in pairs) for name, pairs in data.items()
            }
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "ClosedVocabulary":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def default_vocabulary() -> ClosedVocabulary:
    data = resources.files("handmotion.data").joinpath("closed_vocab.json").read_text()
    return ClosedVocabulary.from_dict(json.loads(data))
