import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from handmotion.codec import (
    MotionTokens,
    TextTokenizer,
    TokenStream,
    Vocabulary,
    deinterleave,
    interleave,
    repair,
)
from handmotion.errors import CodecError, VocabularyError


@pytest.fixture(scope="module")
def vocab():
    tt = TextTokenizer.from_corpus(["wave the hands", "pour the kettle slowly"])
    return Vocabulary(tt, codebook_size=4096)


@pytest.fixture(scope="module")
def small_vocab():
    tt = TextTokenizer(["a", "b"])
    return Vocabulary(tt, codebook_size=8)


def make_tokens(rng, T, K):
    return MotionTokens(
        traj_l=rng.integers(0, K, T),
        pose_l=rng.integers(0, K, T),
        traj_r=rng.integers(0, K, T),
        pose_r=rng.integers(0, K, T),
    )


class TestTextTokenizer:
    def test_roundtrip_known_words(self):
        tt = TextTokenizer.from_corpus(["the cat sat on the mat"])
        ids = tt.encode("the cat sat")
        assert tt.decode(ids) == "the cat sat"

    def test_unknown_words_map_to_unk(self):
        tt = TextTokenizer.from_corpus(["hello world"])
        ids = tt.encode("hello unknown world")
        assert ids[1] == tt.unk_id

    def test_eos_terminates_decode(self):
        tt = TextTokenizer.from_corpus(["alpha beta"])
        ids = tt.encode("alpha", add_eos=True) + tt.encode("beta")
        assert tt.decode(ids) == "alpha"

    def test_fingerprint_stable_and_order_free(self):
        a = TextTokenizer.from_corpus(["b a c"])
        b = TextTokenizer.from_corpus(["c b a"])
        assert a.fingerprint() == b.fingerprint()


class TestVocabularyLayout:
    def test_block_layout(self, small_vocab):
        v = small_vocab
        assert v.kind(0) == "text"
        assert v.kind(v.traj_offset) == "motion"
        assert v.kind(v.som_id) == "special"
        assert v.size == v.text_size + 16 + 4
        assert v.pose_offset == v.traj_offset + 8

    def test_symbols_roundtrip(self, small_vocab):
        v = small_vocab
        for i in range(v.size):
            assert v.id_of_symbol(v.symbol(i)) == i

    def test_motion_symbols_render_with_stacked_index(self, small_vocab):
        v = small_vocab
        assert v.symbol(v.traj_id(3)) == "<motion_token3>"
        assert v.symbol(v.pose_id(3)) == f"<motion_token{8 + 3}>"

    def test_out_of_range_rejected(self, small_vocab):
        with pytest.raises(VocabularyError):
            small_vocab.kind(small_vocab.size)
        with pytest.raises(VocabularyError):
            small_vocab.traj_id(8)

    def test_fingerprint_depends_on_k(self):
        tt = TextTokenizer(["a"])
        assert Vocabulary(tt, 8).fingerprint() != Vocabulary(tt, 16).fingerprint()


class TestInterleave:
    def test_length_is_4t_plus_2(self, vocab):
        rng = np.random.default_rng(0)
        for T in [0, 1, 2, 5]:
            stream = interleave(make_tokens(rng, T, vocab.K), vocab)
            assert len(stream) == 4 * T + 2

    def test_stacking_rule_matches_offsets(self, vocab):
        tokens = MotionTokens(traj_l=[5], pose_l=[7], traj_r=[0], pose_r=[3])
        stream = interleave(tokens, vocab)
        motion_ids = [i - vocab.motion_offset for i in stream.ids[1:-1]]
        assert motion_ids == [5, 4096 + 7, 0, 4096 + 3]

    def test_roundtrip_random_streams(self, vocab):
        rng = np.random.default_rng(1)
        for _ in range(50):
            tokens = make_tokens(rng, int(rng.integers(0, 12)), vocab.K)
            assert deinterleave(interleave(tokens, vocab), vocab) == tokens

    def test_unequal_streams_rejected(self):
        with pytest.raises(CodecError):
            MotionTokens(traj_l=[1, 2], pose_l=[1], traj_r=[1, 2], pose_r=[1, 2])

    def test_out_of_codebook_rejected(self, small_vocab):
        tokens = MotionTokens(traj_l=[8], pose_l=[0], traj_r=[0], pose_r=[0])
        with pytest.raises(CodecError):
            interleave(tokens, small_vocab)


class TestDeinterleave:
    def test_empty_span(self, vocab):
        tokens = deinterleave(TokenStream((vocab.som_id, vocab.eom_id)), vocab)
        assert tokens.steps == 0

    def test_pose_id_in_traj_slot_cites_position(self, vocab):
        ids = (
            vocab.som_id,
            vocab.pose_id(1),  # wrong: traj slot
            vocab.pose_id(1),
            vocab.traj_id(0),
            vocab.pose_id(2),
            vocab.eom_id,
        )
        with pytest.raises(CodecError) as exc:
            deinterleave(TokenStream(ids), vocab)
        assert exc.value.position == 1

    def test_missing_eom_rejected(self, vocab):
        with pytest.raises(CodecError, match="eom"):
            deinterleave(TokenStream((vocab.som_id, vocab.traj_id(0))), vocab)

    def test_text_id_inside_span_rejected(self, vocab):
        ids = (vocab.som_id, 0, vocab.pose_id(0), vocab.traj_id(0), vocab.pose_id(0), vocab.eom_id)
        with pytest.raises(CodecError):
            deinterleave(TokenStream(ids), vocab)

    def test_partial_group_rejected(self, vocab):
        ids = (vocab.som_id, vocab.traj_id(0), vocab.pose_id(0), vocab.eom_id)
        with pytest.raises(CodecError, match="multiple of 4"):
            deinterleave(TokenStream(ids), vocab)


class TestRepair:
    def group(self, vocab, t=0):
        return (vocab.traj_id(t), vocab.pose_id(t), vocab.traj_id(t), vocab.pose_id(t))

    def test_appends_missing_eom(self, vocab):
        ids = (vocab.som_id, *self.group(vocab))
        fixed = repair(TokenStream(ids), vocab)
        assert fixed.ids == (*ids, vocab.eom_id)

    def test_drops_trailing_partial_group(self, vocab):
        ids = (vocab.som_id, *self.group(vocab), vocab.traj_id(1), vocab.pose_id(1), vocab.traj_id(1))
        fixed = repair(TokenStream(ids), vocab)
        assert fixed.ids == (vocab.som_id, *self.group(vocab), vocab.eom_id)

    def test_valid_stream_unchanged(self, vocab):
        rng = np.random.default_rng(2)
        stream = interleave(make_tokens(rng, 3, vocab.K), vocab)
        assert repair(stream, vocab).ids == stream.ids

    def test_truncates_at_first_violation(self, vocab):
        ids = (vocab.som_id, *self.group(vocab, 0), 2, *self.group(vocab, 1))
        fixed = repair(TokenStream(ids), vocab)
        assert fixed.ids == (vocab.som_id, *self.group(vocab, 0), vocab.eom_id)

    def test_garbage_yields_empty_span(self, vocab):
        fixed = repair([0, 1, 2, vocab.pad_id], vocab)
        assert fixed.ids == (vocab.som_id, vocab.eom_id)

    def test_headless_motion_gets_som(self, vocab):
        ids = self.group(vocab, 2)
        fixed = repair(list(ids), vocab)
        assert fixed.ids == (vocab.som_id, *ids, vocab.eom_id)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(min_value=-5, max_value=100), max_size=30))
    def test_repair_idempotent_and_decodable(self, raw_ids):
        tt = TextTokenizer(["a", "b"])
        vocab = Vocabulary(tt, codebook_size=8)
        fixed = repair(raw_ids, vocab)
        assert repair(fixed, vocab).ids == fixed.ids
        deinterleave(fixed, vocab)  # must not raise
