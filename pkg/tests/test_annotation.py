import http.server
import json
import threading
import time

import pytest

from handmotion.annotation import (
    ATOMIC_KEYS,
    AtomicPromptSet,
    ClosedVocabulary,
    HttpClient,
    MockClient,
    ModelClient,
    PipelineConfig,
    annotate_records,
    default_prompts,
    default_vocabulary,
    describe_record,
    stage1_annotate,
    stage2_refine,
    verify_annotation,
)
from handmotion.datagen import generate_corpus
from handmotion.errors import (
    AnnotationClientError,
    ClientMalformedError,
    ClientRateLimitError,
    ClientTimeoutError,
    RefinementEmptyError,
    StageFailureError,
    ValidationError,
)


class FlakyClient(ModelClient):
    """Delegates to a mock but fails the first `fails` calls matching a prefix."""

    def __init__(self, inner, prefix, fails):
        super().__init__(name="flaky", max_in_flight=inner.max_in_flight)
        self.inner = inner
        self.prefix = prefix
        self.remaining = fails
        self.lock = threading.Lock()

    def complete(self, prompt, input_descriptor, max_tokens=256):
        if prompt.startswith(self.prefix):
            with self.lock:
                if self.remaining > 0:
                    self.remaining -= 1
                    raise ClientTimeoutError("injected timeout")
        return self.inner.complete(prompt, input_descriptor, max_tokens)


class DelayedClient(ModelClient):
    """Delegates to a mock with per-template delays to shuffle completion order."""

    def __init__(self, inner, delays):
        super().__init__(name="delayed", max_in_flight=4)
        self.inner = inner
        self.delays = delays

    def complete(self, prompt, input_descriptor, max_tokens=256):
        for prefix, delay in self.delays.items():
            if prompt.startswith(prefix):
                time.sleep(delay)
        return self.inner.complete(prompt, input_descriptor, max_tokens)


class ScriptedRefine(ModelClient):
    """Pops canned refine responses; everything else delegates to the mock."""

    def __init__(self, responses):
        super().__init__(name="scripted")
        self.responses = list(responses)
        self.inner = MockClient()

    def complete(self, prompt, input_descriptor, max_tokens=256):
        if prompt.startswith("Ground this description"):
            return self.responses.pop(0)
        return self.inner.complete(prompt, input_descriptor, max_tokens)


class ScriptedVerify(ModelClient):
    def __init__(self, score=None, error=None):
        super().__init__(name="scripted-verify")
        self.score = score
        self.error = error

    def complete(self, prompt, input_descriptor, max_tokens=256):
        if self.error is not None:
            raise self.error
        return json.dumps({"score": self.score})


@pytest.fixture(scope="module")
def prompts():
    return default_prompts()


@pytest.fixture(scope="module")
def vocab():
    return default_vocabulary()


class TestPromptData:
    def test_templates_well_formed(self, prompts):
        assert set(prompts.atomic) == set(ATOMIC_KEYS)
        for template in prompts.all_templates().values():
            assert "{input}" in template

    def test_missing_placeholder_rejected(self, prompts):
        bad = dict(prompts.atomic)
        bad["intent"] = "no placeholder here"
        with pytest.raises(ValidationError):
            AtomicPromptSet(
                atomic=bad,
                summarize=prompts.summarize,
                refine=prompts.refine,
                verify=prompts.verify,
            )

    def test_vocab_rejects_empty_cluster(self):
        with pytest.raises(ValidationError):
            ClosedVocabulary(clusters={"empty": ()})

    def test_vocab_rejects_duplicates(self):
        with pytest.raises(ValidationError):
            ClosedVocabulary(
                clusters={"a": (("pour", "kettle"),), "b": (("pour", "kettle"),)}
            )


class TestStage1:
    def test_pour_descriptor_summary_merges_all_fields(self, prompts):
        client = MockClient(seed=3)
        summary, transcript = stage1_annotate(
            "a person pours water from a kettle into a cup", prompts, client
        )
        assert "pour" in summary.lower()
        # the summary merges all four atomic answers
        answers = {
            e["key"]: json.loads(e["response"])[e["key"]]
            for e in transcript.entries
            if e["key"] in ATOMIC_KEYS
        }
        for key in ATOMIC_KEYS:
            assert answers[key].rstrip(".") in summary

    def test_retry_transparency(self, prompts):
        descriptor = "a person wipes a table"
        base = MockClient(seed=1)
        clean_summary, _ = stage1_annotate(descriptor, prompts, base)
        prefix = prompts.atomic["action_object"].split("{", 1)[0]
        flaky = FlakyClient(MockClient(seed=1), prefix, fails=2)
        flaky_summary, transcript = stage1_annotate(
            descriptor, prompts, flaky, PipelineConfig(max_retries=2)
        )
        assert flaky_summary == clean_summary
        attempts = [e for e in transcript.entries if e["key"] == "action_object"]
        assert len(attempts) == 3  # two failures then one success

    def test_failure_after_retries_raises_with_partial_transcript(self, prompts):
        prefix = prompts.atomic["intent"].split("{", 1)[0]
        flaky = FlakyClient(MockClient(), prefix, fails=10)
        with pytest.raises(StageFailureError) as exc:
            stage1_annotate("a person knits", prompts, flaky, PipelineConfig(max_retries=1))
        keys = {e["key"] for e in exc.value.transcript}
        assert "hand_role" in keys  # other prompts still recorded

    def test_arrival_order_independence(self, prompts):
        descriptor = "a person claps both hands"
        baseline, base_t = stage1_annotate(descriptor, prompts, MockClient(seed=9))
        orders = [
            {"Examine the hands": 0.03},
            {"Infer the person's goal": 0.03, "Identify the action": 0.015},
            {"Describe the state change": 0.03},
        ]
        for delays in orders:
            client = DelayedClient(MockClient(seed=9), delays)
            summary, transcript = stage1_annotate(descriptor, prompts, client)
            assert summary == baseline
            assert [e["key"] for e in transcript.entries] == [
                e["key"] for e in base_t.entries
            ]


class TestStage2:
    def test_in_vocab_pair_accepted_verbatim(self, prompts, vocab):
        client = ScriptedRefine([json.dumps({"pairs": [["pour", "kettle"]]})])
        caption, pairs, _ = stage2_refine(
            "A person pours from a kettle.", vocab, client, prompts
        )
        assert pairs == [("pour", "kettle")]
        assert "pour the kettle" in caption

    def test_out_of_vocab_requeried_then_dropped(self, prompts, vocab):
        client = ScriptedRefine(
            [
                json.dumps({"pairs": [["levitate", "kettle"], ["pour", "kettle"]]}),
                json.dumps({"pairs": [["levitate", "kettle"]]}),
            ]
        )
        caption, pairs, transcript = stage2_refine(
            "A person pours from a kettle.", vocab, client, prompts
        )
        assert pairs == [("pour", "kettle")]
        assert not client.responses  # re-query consumed
        assert "levitate" not in caption

    def test_zero_valid_pairs_raises(self, prompts, vocab):
        client = ScriptedRefine(
            [
                json.dumps({"pairs": [["levitate", "kettle"]]}),
                json.dumps({"pairs": [["teleport", "jug"]]}),
            ]
        )
        with pytest.raises(RefinementEmptyError):
            stage2_refine("A person pours.", vocab, client, prompts)

    def test_single_pair_vocab_caption_contains_exactly_it(self, prompts):
        tiny = ClosedVocabulary(clusters={"only": (("wipe", "window"),)})
        client = ScriptedRefine([json.dumps({"pairs": [["wipe", "window"]]})])
        caption, pairs, _ = stage2_refine("Someone wipes.", tiny, client, prompts)
        assert pairs == [("wipe", "window")]
        assert caption == "The hands wipe the window."


class TestVerify:
    def test_high_score_accepts(self, prompts):
        res = verify_annotation("cap", "desc", ScriptedVerify(score=0.9), prompts)
        assert res.accepted and not res.flagged and res.score == 0.9

    def test_low_score_rejects(self, prompts):
        res = verify_annotation("cap", "desc", ScriptedVerify(score=0.2), prompts)
        assert not res.accepted and not res.flagged

    def test_client_down_keeps_flagged(self, prompts):
        res = verify_annotation(
            "cap",
            "desc",
            ScriptedVerify(error=ClientTimeoutError("down")),
            prompts,
            PipelineConfig(max_retries=0),
        )
        assert res.accepted and res.flagged and res.score is None


class TestFullPipeline:
    def run_once(self, seed=5, num=20):
        records = generate_corpus(num, seed=2)
        client = MockClient(seed=seed)
        kept, report = annotate_records(
            records, client, default_prompts(), default_vocabulary()
        )
        return kept, report

    def serialize(self, kept, report):
        return json.dumps(
            {
                "records": [
                    [r.id, r.caption_high, r.caption_fine, r.filter_log] for r in kept
                ],
                "rejected": report.rejected,
                "flagged": report.flagged_ids,
                "lof": report.lof_scores,
                "transcripts": report.transcripts,
            },
            sort_keys=True,
        ).encode()

    def test_deterministic_byte_identical(self):
        a = self.serialize(*self.run_once())
        b = self.serialize(*self.run_once())
        assert a == b

    def test_closed_vocabulary_soundness(self):
        vocab = default_vocabulary()
        kept, _ = self.run_once(num=40)
        assert kept, "pipeline dropped everything"
        for rec in kept:
            body = rec.caption_fine[len("The hands ") : -1]
            for clause in body.split(" and "):
                verb, _, noun = clause.partition(" the ")
                assert (verb, noun) in vocab

    def test_describe_record_mentions_caption(self):
        rec = generate_corpus(1, seed=0)[0]
        assert rec.caption_high in describe_record(rec)


class _Handler(http.server.BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        if self.path == "/rate":
            self.send_response(429)
            self.end_headers()
            return
        if self.path == "/bad":
            self.send_response(200)
            self.end_headers()
            self.wfile.write(b"not json")
            return
        reply = {"text": f"echo:{body['prompt'][:16]}:{body['input_descriptor'][:8]}"}
        payload = json.dumps(reply).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture(scope="module")
def http_server():
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


class TestHttpClient:
    def test_roundtrip(self, http_server):
        client = HttpClient(endpoint=http_server + "/ok", api_key="sekrit")
        out = client.complete("hello prompt", "descriptor", max_tokens=32)
        assert out == "echo:hello prompt:descript"

    def test_rate_limit_maps_to_typed_error(self, http_server):
        client = HttpClient(endpoint=http_server + "/rate")
        with pytest.raises(ClientRateLimitError):
            client.complete("p", "d")

    def test_malformed_reply_maps_to_typed_error(self, http_server):
        client = HttpClient(endpoint=http_server + "/bad")
        with pytest.raises(ClientMalformedError):
            client.complete("p", "d")

    def test_unreachable_maps_to_client_error(self):
        client = HttpClient(endpoint="http://127.0.0.1:9/none", timeout=0.5)
        with pytest.raises(AnnotationClientError):
            client.complete("p", "d")
