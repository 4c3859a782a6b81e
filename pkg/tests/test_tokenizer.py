import numpy as np
import pytest
import torch

from handmotion.codec import MotionTokens
from handmotion.datagen import generate_corpus
from handmotion.errors import EmptyInputError, ValidationError, VocabularyError
from handmotion.motion import flatten
from handmotion.tokenizer import (
    Codebook,
    ModalityAutoencoder,
    TokenizerConfig,
    TokenizerTrainConfig,
    build_tokenizer,
    fingerprint_state,
    load_tokenizer,
    pad_to_multiple,
    reconstruction_mse,
    save_tokenizer,
    train_tokenizer,
)


def exhaustive_nearest(latents, entries):
    """Oracle: explicit distances, first minimum wins."""
    out = []
    for row in latents:
        dists = [float(np.sum((row - e) ** 2)) for e in entries]
        best = 0
        for i, d in enumerate(dists):
            if d < dists[best]:
                best = i
        out.append(best)
    return np.array(out)


class TestCodebook:
    def test_matches_exhaustive_search_on_random_codebooks(self):
        rng = np.random.default_rng(0)
        for k in (4, 16, 64):
            torch.manual_seed(int(rng.integers(1 << 30)))
            cb = Codebook(k, 6)
            latents = torch.randn(100, 6)
            idx, quantized = cb.quantize(latents)
            oracle = exhaustive_nearest(
                latents.numpy().astype(np.float32),
                cb.entries.detach().numpy().astype(np.float32),
            )
            assert np.array_equal(idx.numpy(), oracle)
            assert torch.equal(quantized, cb.entries.detach()[idx])

    def test_known_assignment(self):
        cb = Codebook(2, 2)
        with torch.no_grad():
            cb.entries.copy_(torch.tensor([[0.0, 0.0], [1.0, 1.0]]))
        idx, _ = cb.quantize(torch.tensor([[0.9, 0.8]]))
        assert idx.item() == 1

    def test_tie_breaks_to_lowest_index(self):
        cb = Codebook(4, 2)
        with torch.no_grad():
            cb.entries.copy_(
                torch.tensor([[1.0, 0.0], [5.0, 5.0], [6.0, 6.0], [-1.0, 0.0]])
            )
        # (0, 0) is exactly equidistant from entries 0 and 3
        idx, _ = cb.quantize(torch.tensor([[0.0, 0.0]]))
        assert idx.item() == 0

    def test_entry_is_fixed_point(self):
        torch.manual_seed(3)
        cb = Codebook(8, 4)
        idx, quantized = cb.quantize(cb.entries.detach()[2:3].clone())
        assert idx.item() == 2
        assert torch.equal(quantized[0], cb.entries.detach()[2])

    def test_quantize_idempotent(self):
        torch.manual_seed(4)
        cb = Codebook(16, 5)
        latents = torch.randn(40, 5)
        idx1, q1 = cb.quantize(latents)
        idx2, q2 = cb.quantize(q1)
        assert torch.equal(idx1, idx2)
        assert torch.equal(q1, q2)

    def test_lookup_range_checked(self):
        cb = Codebook(4, 2)
        with pytest.raises(VocabularyError):
            cb.lookup(torch.tensor([4]))

    def test_nonfinite_latents_rejected(self):
        cb = Codebook(4, 2)
        with pytest.raises(ValidationError):
            cb.quantize(torch.tensor([[float("nan"), 0.0]]))


class TestPadding:
    def test_exact_multiple_untouched(self):
        x = np.arange(16, dtype=np.float32).reshape(8, 2)
        assert pad_to_multiple(x, 8) is x

    def test_pad_repeats_last_frame(self):
        x = np.arange(24, dtype=np.float32).reshape(12, 2)
        padded = pad_to_multiple(x, 8)
        assert padded.shape == (16, 2)
        assert np.array_equal(padded[12:], np.tile(x[-1], (4, 1)))

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            pad_to_multiple(np.zeros((0, 2), np.float32), 8)


@pytest.fixture(scope="module")
def tiny_model():
    cfg = TokenizerConfig(codebook_size=16, code_dim=8, downsample=8, width=16)
    return build_tokenizer(cfg, seed=5)


class TestEncodeDecode:
    def test_token_counts_follow_downsample(self, tiny_model):
        recs = generate_corpus(2, seed=1)
        m = recs[0].motion
        tokens = tiny_model.encode(m)
        expected_t = (m.frames + 7) // 8
        assert tokens.steps == expected_t
        assert tokens.original_n == m.frames

    def test_eight_frames_give_one_step(self, tiny_model):
        from handmotion.motion import unflatten

        m = unflatten(np.zeros((8, 198), np.float32))
        tokens = tiny_model.encode(m)
        assert tokens.steps == 1

    def test_twelve_frames_pad_to_sixteen(self, tiny_model):
        from handmotion.motion import unflatten

        m = unflatten(np.random.default_rng(0).normal(size=(12, 198)).astype(np.float32) * 0.01)
        tokens = tiny_model.encode(m)
        assert tokens.steps == 2
        assert tokens.original_n == 12

    def test_encode_deterministic(self, tiny_model):
        m = generate_corpus(1, seed=2)[0].motion
        a, b = tiny_model.encode(m), tiny_model.encode(m)
        assert a == b

    def test_decode_shape_contract(self, tiny_model):
        m = generate_corpus(1, seed=3)[0].motion
        out = tiny_model.decode(tiny_model.encode(m))
        assert out.frames == m.frames
        assert flatten(out).shape == flatten(m).shape

    def test_hand_swap_symmetry(self, tiny_model):
        m = generate_corpus(1, seed=4)[0].motion
        tokens = tiny_model.encode(m)
        swapped = tiny_model.encode(m.swapped())
        assert swapped == tokens.swapped_hands()
        out = tiny_model.decode(tokens)
        out_swapped = tiny_model.decode(tokens.swapped_hands())
        assert np.array_equal(
            out_swapped.left.trajectory, out.right.trajectory
        ) and np.array_equal(out_swapped.right.pose, out.left.pose)

    def test_out_of_range_token_rejected(self, tiny_model):
        tokens = MotionTokens(traj_l=[99], pose_l=[0], traj_r=[0], pose_r=[0])
        with pytest.raises(VocabularyError):
            tiny_model.decode(tokens, original_n=8)

    def test_empty_rejected(self, tiny_model):
        with pytest.raises(EmptyInputError):
            tiny_model.decode(
                MotionTokens(traj_l=[], pose_l=[], traj_r=[], pose_r=[]), original_n=0
            )


class TestLossStructure:
    def test_components_sum_to_loss(self, tiny_model):
        m = generate_corpus(1, seed=5)[0].motion
        parts = tiny_model.vq_loss(m)
        assert parts["loss"] == pytest.approx(
            parts["rec"] + parts["codebook"] + parts["commit"], rel=1e-6
        )

    def test_beta_zero_kills_commit(self):
        cfg = TokenizerConfig(codebook_size=8, code_dim=4, downsample=2, width=8, beta=0.0)
        model = build_tokenizer(cfg, seed=6)
        m = generate_corpus(1, seed=6)[0].motion
        parts = model.vq_loss(m)
        assert parts["commit"] == 0.0

    def test_zero_terms_when_latents_sit_on_entries(self):
        torch.manual_seed(7)
        cb = Codebook(6, 3)
        z = cb.entries.detach()[torch.tensor([0, 2, 4])].clone()
        idx, q = cb.quantize(z)
        assert torch.equal(idx, torch.tensor([0, 2, 4]))
        codebook_term = torch.mean((q - z.detach()) ** 2)
        commit_term = torch.mean((z - q.detach()) ** 2)
        assert codebook_term.item() == 0.0
        assert commit_term.item() == 0.0


def micro_autoencoder():
    """< 1k parameters, double precision, 2-frame inputs."""
    torch.manual_seed(9)
    ae = ModalityAutoencoder(channels=3, width=4, code_dim=3, downsample=2).double()
    cb = Codebook(4, 3).double()
    params = sum(p.numel() for p in ae.parameters()) + cb.entries.numel()
    assert params < 1000, params
    return ae, cb


def straight_through_loss(ae, cb, z, x, beta=0.25):
    idx, q = cb.quantize(z)
    st = z + (q - z).detach()
    recon = ae.decode(st)
    rec = torch.mean((recon - x) ** 2)
    codebook = torch.mean((q - z.detach()) ** 2)
    commit = beta * torch.mean((z - q.detach()) ** 2)
    return rec + codebook + commit, q


class TestStraightThroughGradient:
    def test_encoder_gradient_matches_fd_decomposition(self):
        """dL/d(encoder out) must equal the reconstruction gradient taken at
        the decoder input plus the commitment gradient, both estimated with
        central finite differences."""
        ae, cb = micro_autoencoder()
        beta = 0.25
        x = torch.randn(1, 2, 3, dtype=torch.float64, generator=torch.Generator().manual_seed(1))
        with torch.no_grad():
            z0 = ae.encode(x)
        z = z0.clone().requires_grad_(True)
        loss, q = straight_through_loss(ae, cb, z, x=x, beta=beta)
        loss.backward()
        autograd_grad = z.grad.detach().clone()

        h = 1e-6

        def rec_at(dec_in):
            return torch.mean((ae.decode(dec_in) - x) ** 2).item()

        fd_rec = torch.zeros_like(z0)
        base = q.detach().clone()
        flat = base.reshape(-1)
        fd_flat = fd_rec.reshape(-1)
        for i in range(flat.numel()):
            plus, minus = base.clone().reshape(-1), base.clone().reshape(-1)
            plus[i] += h
            minus[i] -= h
            fd_flat[i] = (
                rec_at(plus.reshape(base.shape)) - rec_at(minus.reshape(base.shape))
            ) / (2 * h)

        def commit_at(zz):
            return beta * torch.mean((zz - q.detach()) ** 2).item()

        fd_commit = torch.zeros_like(z0)
        zr = z0.reshape(-1)
        fc = fd_commit.reshape(-1)
        for i in range(zr.numel()):
            plus, minus = zr.clone(), zr.clone()
            plus[i] += h
            minus[i] -= h
            fc[i] = (commit_at(plus.reshape(z0.shape)) - commit_at(minus.reshape(z0.shape))) / (
                2 * h
            )

        expected = fd_rec + fd_commit
        rel = torch.norm(autograd_grad - expected) / torch.norm(expected)
        assert rel < 1e-4

    def test_perturbation_inside_cell_keeps_rec_value_constant(self):
        # the straight-through forward value only depends on the selected entry
        ae, cb = micro_autoencoder()
        x = torch.randn(1, 2, 3, dtype=torch.float64, generator=torch.Generator().manual_seed(2))
        with torch.no_grad():
            z0 = ae.encode(x)

        def rec_value(z):
            idx, q = cb.quantize(z)
            st = z + (q - z).detach()
            return idx, torch.mean((ae.decode(st) - x) ** 2).item()

        idx0, r0 = rec_value(z0)
        idx1, r1 = rec_value(z0 + 1e-7)
        assert torch.equal(idx0, idx1)
        assert r0 == pytest.approx(r1, abs=1e-12)


@pytest.fixture(scope="module")
def quick_corpus():
    return generate_corpus(40, seed=31)


class TestTraining:
    def quick_config(self, seed=0, epochs=4):
        return TokenizerTrainConfig(
            model=TokenizerConfig(codebook_size=32, code_dim=8, downsample=4, width=16),
            epochs=epochs,
            lr=2e-3,
            batch_size=16,
            crop=16,
            seed=seed,
        )

    def test_loss_decreases(self, quick_corpus):
        model, log = train_tokenizer(quick_corpus, self.quick_config(epochs=6))
        assert log.rows[-1]["rec"] < log.rows[0]["rec"]
        assert not log.aborted

    def test_same_seed_bitwise_identical(self, quick_corpus):
        m1, log1 = train_tokenizer(quick_corpus, self.quick_config(seed=3))
        m2, log2 = train_tokenizer(quick_corpus, self.quick_config(seed=3))
        assert abs(log1.final("loss") - log2.final("loss")) < 1e-6
        assert fingerprint_state(m1) == fingerprint_state(m2)

    def test_different_seed_differs(self, quick_corpus):
        m1, _ = train_tokenizer(quick_corpus, self.quick_config(seed=3))
        m2, _ = train_tokenizer(quick_corpus, self.quick_config(seed=4))
        assert fingerprint_state(m1) != fingerprint_state(m2)

    def test_checkpoint_roundtrip(self, quick_corpus, tmp_path):
        model, _ = train_tokenizer(quick_corpus, self.quick_config())
        path = tmp_path / "tok.npz"
        save_tokenizer(model, path, seed=0, corpus_hash="abc")
        loaded, meta = load_tokenizer(path)
        assert meta["corpus_hash"] == "abc"
        assert meta["config"]["codebook_size"] == 32
        assert fingerprint_state(loaded) == fingerprint_state(model)
        m = quick_corpus[0].motion
        assert loaded.encode(m) == model.encode(m)


class TestDeskScaleRun:
    def test_reconstruction_improves_tenfold(self, toy_corpus, desk_tokenizer):
        final = reconstruction_mse(desk_tokenizer["model"], toy_corpus)
        assert final <= 0.1 * desk_tokenizer["initial_mse"]

    def test_codebook_perplexity_above_one(self, desk_tokenizer):
        log = desk_tokenizer["log"]
        assert log.rows[-1]["perplexity_traj"] > 1.0
        assert log.rows[-1]["perplexity_pose"] > 1.0

    def test_log_persists_as_csv(self, desk_tokenizer, tmp_path):
        path = tmp_path / "log.csv"
        desk_tokenizer["log"].to_csv(path)
        header = path.read_text().splitlines()[0]
        assert "rec" in header and "perplexity_traj" in header
