"""Text-model client interface with an offline mock and an HTTP backend."""

from __future__ import annotations

import json
import socket
import urllib.error
import urllib.request
import zlib
from abc import ABC, abstractmethod

from ..errors import (
    AnnotationClientError,
    ClientMalformedError,
    ClientRateLimitError,
    ClientTimeoutError,
)
from .prompts import ATOMIC_KEYS, AtomicPromptSet, ClosedVocabulary


class ModelClient(ABC):
    """A text model reachable as prompt -> string; safe for concurrent calls."""

    def __init__(self, name: str, timeout: float = 30.0, max_in_flight: int = 4):
        self.name = name
        self.timeout = timeout
        self.max_in_flight = max(1, int(max_in_flight))

    @abstractmethod
    def complete(self, prompt: str, input_descriptor: str, max_tokens: int = 256) -> str:
        """Return the model's raw text answer or raise a typed client error."""


def _stable_unit(seed: int, *parts: str) -> float:
    payload = (str(seed) + "\x00" + "\x00".join(parts)).encode()
    return zlib.crc32(payload) / 2**32


class MockClient(ModelClient):
    """Seeded template-filling responder: the whole pipeline runs offline.

    The mock recognizes which template a prompt was rendered from by its
    static prefix, mines verb/noun mentions from the descriptor against the
    closed vocabulary, and answers in the JSON shape each template requests.
    """

    def __init__(
        self,
        prompts: AtomicPromptSet | None = None,
        vocab: ClosedVocabulary | None = None,
        seed: int = 0,
        timeout: float = 10.0,
        max_in_flight: int = 4,
    ):
        super().__init__(name="mock", timeout=timeout, max_in_flight=max_in_flight)
        from .prompts import default_prompts, default_vocabulary

        self.prompts = prompts or default_prompts()
        self.vocab = vocab or default_vocabulary()
        self.seed = seed
        self._prefixes = sorted(
            (
                (template.split("{", 1)[0], key)
                for key, template in self.prompts.all_templates().items()
            ),
            key=lambda kv: -len(kv[0]),
        )

    def _identify(self, prompt: str) -> str:
        for prefix, key in self._prefixes:
            if prompt.startswith(prefix):
                return key
        raise ClientMalformedError("mock client does not recognize this prompt")

    def _mine_pair(self, text: str) -> tuple[str, str]:
        # prefer the pair whose verb is mentioned earliest in the text, with
        # full (verb, noun) matches ranked ahead of verb-only matches
        words = text.lower()
        full, partial = [], []
        for verb, noun in self.vocab.pairs():
            pos = words.find(verb)
            if pos < 0:
                continue
            (full if noun in words else partial).append((pos, verb, noun))
        for candidates in (full, partial):
            if candidates:
                _, verb, noun = min(candidates)
                return verb, noun
        for verb, noun in self.vocab.pairs():
            if noun in words:
                return verb, noun
        return "move", "hands"

    def complete(self, prompt: str, input_descriptor: str, max_tokens: int = 256) -> str:
        key = self._identify(prompt)
        verb, noun = self._mine_pair(input_descriptor or prompt)
        if key == "hand_role":
            u = _stable_unit(self.seed, "role", input_descriptor)
            role = (
                "The right hand leads while the left hand supports"
                if u < 0.5
                else "Both hands share the work, the right slightly leading"
            )
            return json.dumps({"hand_role": f"{role}."})
        if key == "action_object":
            return json.dumps({"action_object": f"The hands {verb} the {noun}."})
        if key == "state_transition":
            return json.dumps(
                {"state_transition": f"The {noun} shifts from rest into activity as the hands {verb} it, then settles."}
            )
        if key == "intent":
            return json.dumps({"intent": f"The person intends to {verb} the {noun}."})
        if key == "summarize":
            # the observations arrive inside the prompt as "key: sentence" lines
            lines = {}
            for line in prompt.splitlines():
                head, _, tail = line.partition(": ")
                if head in ATOMIC_KEYS and tail:
                    lines[head] = tail.strip()
            ordered = [lines[k] for k in ATOMIC_KEYS if k in lines]
            return json.dumps({"summary": " ".join(ordered)})
        if key == "refine":
            return json.dumps({"pairs": [[verb, noun]]})
        if key == "verify":
            caption = ""
            for line in prompt.splitlines():
                if line.startswith("Candidate description: "):
                    caption = line[len("Candidate description: ") :]
            cv, _ = self._mine_pair(caption)
            u = _stable_unit(self.seed, "verify", caption, input_descriptor)
            score = 0.7 + 0.3 * u if cv == verb else 0.3 * u
            return json.dumps({"score": round(score, 6)})
        raise ClientMalformedError(f"unhandled template {key!r}")


class HttpClient(ModelClient):
    """JSON-over-HTTP backend: POST {prompt, input_descriptor, max_tokens},
    expect {"text": "..."} back."""

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        timeout: float = 30.0,
        max_in_flight: int = 4,
    ):
        super().__init__(name="http", timeout=timeout, max_in_flight=max_in_flight)
        self.endpoint = endpoint
        self.api_key = api_key

    def complete(self, prompt: str, input_descriptor: str, max_tokens: int = 256) -> str:
        body = json.dumps(
            {"prompt": prompt, "input_descriptor": input_descriptor, "max_tokens": max_tokens}
        ).encode()
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        request = urllib.request.Request(self.endpoint, data=body, headers=headers)
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                raw = resp.read()
        except urllib.error.HTTPError as exc:
            if exc.code == 429:
                raise ClientRateLimitError(f"{self.endpoint} rate-limited") from exc
            raise AnnotationClientError(f"{self.endpoint} returned HTTP {exc.code}") from exc
        except (TimeoutError, socket.timeout) as exc:
            raise ClientTimeoutError(f"{self.endpoint} timed out") from exc
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, (TimeoutError, socket.timeout)):
                raise ClientTimeoutError(f"{self.endpoint} timed out") from exc
            raise AnnotationClientError(f"{self.endpoint} unreachable: {exc.reason}") from exc
        try:
            payload = json.loads(raw)
            text = payload["text"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ClientMalformedError(f"{self.endpoint} sent an unparsable reply") from exc
        if not isinstance(text, str):
            raise ClientMalformedError(f"{self.endpoint} sent a non-string 'text'")
        return text
