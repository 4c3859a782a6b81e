import numpy as np
import pytest

from handmotion.annotation.lof import NgramHashEmbedder, filter_annotations, lof_scores
from handmotion.datagen import generate_corpus
from handmotion.errors import ValidationError


def lof_oracle(points, k):
    """Brute-force O(M^2) LOF with explicit loops; ties break by index."""
    points = np.asarray(points, dtype=np.float64)
    m = len(points)
    d = np.array(
        [[float(np.linalg.norm(points[i] - points[j])) for j in range(m)] for i in range(m)]
    )

    def neighbors(i):
        others = sorted((j for j in range(m) if j != i), key=lambda j: (d[i][j], j))
        return others[:k]

    nbrs = [neighbors(i) for i in range(m)]
    k_dist = [d[i][nbrs[i][-1]] for i in range(m)]

    def lrd(i):
        reach = [max(k_dist[o], d[i][o]) for o in nbrs[i]]
        return 1.0 / max(sum(reach) / k, 1e-12)

    dens = [lrd(i) for i in range(m)]
    return np.array([sum(dens[o] for o in nbrs[i]) / k / dens[i] for i in range(m)])


class TestLofScores:
    def test_matches_oracle_on_random_clouds(self):
        rng = np.random.default_rng(0)
        for m, f, k in [(20, 2, 3), (60, 5, 7), (200, 3, 10)]:
            pts = rng.normal(size=(m, f))
            impl = lof_scores(pts, k)
            oracle = lof_oracle(pts, k)
            assert np.max(np.abs(impl - oracle)) < 1e-9

    def test_matches_oracle_with_duplicates(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(30, 3))
        pts[7] = pts[3]
        pts[19] = pts[3]
        impl = lof_scores(pts, 4)
        oracle = lof_oracle(pts, 4)
        assert np.max(np.abs(impl - oracle)) < 1e-9

    def test_planted_outlier_uniquely_maximal(self):
        rng = np.random.default_rng(2)
        cluster = rng.normal(scale=0.05, size=(10, 2))
        pts = np.vstack([cluster, [[10.0, 10.0]]])
        scores = lof_scores(pts, 3)
        assert np.argmax(scores) == 10
        assert scores[10] > 1.5
        assert np.sum(scores == scores.max()) == 1

    def test_all_identical_points_score_one(self):
        pts = np.tile([1.5, -2.0, 0.25], (12, 1))
        scores = lof_scores(pts, 3)
        assert np.allclose(scores, 1.0)

    def test_uniform_grid_interior_near_one(self):
        xs, ys = np.meshgrid(np.arange(5.0), np.arange(5.0))
        pts = np.stack([xs.ravel(), ys.ravel()], axis=1)
        scores = lof_scores(pts, 3)
        oracle = lof_oracle(pts, 3)
        assert np.max(np.abs(scores - oracle)) < 1e-9
        interior = [i for i, (x, y) in enumerate(pts) if 1 <= x <= 3 and 1 <= y <= 3]
        assert np.all(np.abs(scores[interior] - 1.0) < 0.2)

    def test_bad_k_rejected(self):
        pts = np.zeros((5, 2))
        with pytest.raises(ValidationError):
            lof_scores(pts, 5)
        with pytest.raises(ValidationError):
            lof_scores(pts, 0)


class TestFilterAnnotations:
    def make_records(self, captions):
        recs = generate_corpus(len(captions), seed=0)
        for rec, cap in zip(recs, captions):
            rec.caption_fine = cap
        return recs

    def test_gibberish_caption_dropped(self):
        rng = np.random.default_rng(3)
        speeds = ["slowly", "steadily", "quickly"]
        captions = [
            f"the right hand tilts the kettle {speeds[i % 3]} to pour water"
            for i in range(30)
        ]
        captions.append("qzv xkjr wpl mnbt gzhqy rrkz vxp")
        recs = self.make_records(captions)
        kept, scores = filter_annotations(recs, k=5, lof_threshold=1.5)
        dropped = {r.id for r in recs} - {r.id for r in kept}
        assert dropped == {recs[-1].id}
        assert scores[recs[-1].id] == max(scores.values())

    def test_homogeneous_captions_all_kept(self):
        captions = [f"the hands wave slowly side to side take {i%4}" for i in range(20)]
        recs = self.make_records(captions)
        kept, _ = filter_annotations(recs, k=5, lof_threshold=1.5)
        assert len(kept) == len(recs)

    def test_infinite_threshold_is_identity(self):
        captions = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"]
        recs = self.make_records(captions)
        kept, _ = filter_annotations(recs, k=3, lof_threshold=float("inf"))
        assert [r.id for r in kept] == [r.id for r in recs]

    def test_too_few_records_no_op_with_warning(self):
        recs = self.make_records(["one", "two", "three"])
        with pytest.warns(UserWarning, match="skipped"):
            kept, scores = filter_annotations(recs, k=5)
        assert kept == recs
        assert scores == {}


def test_embedder_deterministic_and_normalized():
    emb = NgramHashEmbedder()
    a = emb("pour the kettle slowly")
    b = emb("pour the kettle slowly")
    assert np.array_equal(a, b)
    assert np.isclose(np.linalg.norm(a), 1.0)
    assert emb("").shape == (256,)
