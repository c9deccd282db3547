import numpy as np
import pytest

from dccaret_cli import datagen
from dccaret_cli import encoders
from dccaret_cli import retrieval
from dccaret_cli import trainer
from dccaret_cli.cca import fit_cca
from dccaret_cli.errors import (BoundsError, DegenerateVectorError, DimensionError, EmptyDatasetError, FormatError,
                                RangeError)


def _random_index(rng, m, h, ties=False):
    emb = rng.standard_normal((m, h))
    if ties:
        # duplicated rows and a coarse grid force exact distance ties
        emb = np.round(emb)
        emb[m // 2:] = emb[:m - m // 2]
    ids = rng.permutation(10 * m)[:m]
    return retrieval.SnippetIndex(ids, rng.integers(0, 20, m), rng.integers(0, 50, m), emb, 'image')


def _brute_force(index, q, k):
    d = index.distances(q)
    order = sorted(range(len(index)), key=lambda i: (d[i], index.snippet_ids[i]))[:k]
    return index.snippet_ids[order], d[order]


class TestCosineDistance:

    def test_values(self):
        assert retrieval.cosine_distance((1, 2, 3), (1, 2, 3)) == pytest.approx(0.0, abs=1e-15)
        assert retrieval.cosine_distance((1, 0), (0, 1)) == pytest.approx(1.0)
        assert retrieval.cosine_distance((1, 0), (-1, 0)) == pytest.approx(2.0)
        assert retrieval.cosine_distance((1, 2), (3, 6)) == pytest.approx(0.0, abs=1e-15)

    def test_zero_vector(self):
        with pytest.raises(DegenerateVectorError):
            retrieval.cosine_distance((0, 0), (1, 0))

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            retrieval.cosine_distance((1, 0), (1, 0, 0))


class TestQuery:

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for trial in range(100):
            m = int(rng.integers(1, 10001)) if trial % 10 == 0 else int(rng.integers(1, 400))
            index = _random_index(rng, m, 4, ties=trial % 2 == 1)
            q = rng.standard_normal(4)
            k = int(rng.integers(1, min(m, 20) + 1))
            result = retrieval.query(index, q, k)
            ids, dist = _brute_force(index, q, k)
            np.testing.assert_array_equal(result.snippet_ids, ids)
            np.testing.assert_array_equal(result.distances, dist)

    def test_stored_embedding_ranks_first(self, rng):
        index = _random_index(rng, 100, 6)
        result = retrieval.query(index, index.embeddings[17], 5, target_id=index.snippet_ids[17])
        assert result.snippet_ids[0] == index.snippet_ids[17]
        assert result.rank_of_target == 1

    def test_single_record(self, rng):
        index = retrieval.SnippetIndex([7], [0], [0], rng.standard_normal((1, 3)), 'audio')
        result = retrieval.query(index, rng.standard_normal(3), 1, target_id=7)
        assert list(result.snippet_ids) == [7] and result.rank_of_target == 1

    def test_distances_non_decreasing(self, rng):
        index = _random_index(rng, 500, 8)
        result = retrieval.query(index, rng.standard_normal(8), 50)
        assert np.all(np.diff(result.distances) >= 0)

    def test_positive_scaling_keeps_order(self, rng):
        index = _random_index(rng, 300, 5)
        q = rng.standard_normal(5)
        base = retrieval.query(index, q, 300).snippet_ids
        for c in (1e-3, 7.0, 1e4):
            np.testing.assert_array_equal(retrieval.query(index, c * q, 300).snippet_ids, base)

    def test_rank_of_target_with_ties(self):
        emb = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        index = retrieval.SnippetIndex([30, 10, 5, 20], [0, 0, 0, 0], [0, 1, 2, 3], emb, 'image')
        result = retrieval.query(index, [2.0, 0.0], 4, target_id=30)
        assert list(result.snippet_ids) == [10, 20, 30, 5]
        assert result.rank_of_target == 3

    def test_k_out_of_bounds(self, rng):
        index = _random_index(rng, 5, 3)
        with pytest.raises(BoundsError):
            retrieval.query(index, rng.standard_normal(3), 6)
        with pytest.raises(BoundsError):
            retrieval.query(index, rng.standard_normal(3), 0)

    def test_zero_query(self, rng):
        with pytest.raises(DegenerateVectorError):
            retrieval.query(_random_index(rng, 5, 3), np.zeros(3), 1)

    def test_zero_embedding_sits_at_distance_one(self):
        index = retrieval.SnippetIndex([0, 1], [0, 0], [0, 1], [[0.0, 0.0], [1.0, 0.0]], 'image')
        np.testing.assert_allclose(index.distances([-1.0, 0.0]), [1.0, 2.0])


class TestIndex:

    def test_immutable(self, rng):
        index = _random_index(rng, 10, 3)
        with pytest.raises(ValueError):
            index.embeddings[0, 0] = 1.0

    def test_unique_ids(self):
        with pytest.raises(RangeError):
            retrieval.SnippetIndex([1, 1], [0, 0], [0, 1], np.eye(2), 'image')

    def test_empty(self):
        with pytest.raises(EmptyDatasetError):
            retrieval.SnippetIndex([], [], [], np.zeros((0, 3)), 'image')

    def test_records(self, rng):
        index = _random_index(rng, 4, 2)
        rec = index.records[2]
        assert rec.snippet_id == index.snippet_ids[2]
        np.testing.assert_array_equal(rec.embedding, index.embeddings[2])

    def test_build_matches_per_sample_projection(self, untrained_checkpoint, small_snippets):
        idx = small_snippets.split_indices('test')
        ckpt = untrained_checkpoint
        index = retrieval.build_index(ckpt.encoder_x, ckpt.cca, small_snippets.view_x[idx],
                                      small_snippets.piece_ids[idx], small_snippets.positions[idx], 'image')
        assert len(index) == idx.size
        np.testing.assert_array_equal(index.snippet_ids, np.arange(idx.size))
        for i in (0, 7, idx.size - 1):
            single = ckpt.cca.project_x(ckpt.encoder_x.forward(small_snippets.view_x[idx[i]][None])[0])[0]
            np.testing.assert_allclose(index.embeddings[i], single, atol=1e-12)
        again = retrieval.build_index(ckpt.encoder_x, ckpt.cca, small_snippets.view_x[idx],
                                      small_snippets.piece_ids[idx], small_snippets.positions[idx], 'image')
        np.testing.assert_array_equal(again.embeddings, index.embeddings)

    def test_build_rejects_wrong_shape(self, untrained_checkpoint, small_snippets):
        ckpt = untrained_checkpoint
        with pytest.raises(DimensionError):
            retrieval.build_index(ckpt.encoder_x, ckpt.cca, small_snippets.view_y[:3], [0] * 3, [0] * 3, 'image')

    def test_file_round_trip(self, tmp_path, rng):
        index = _random_index(rng, 50, 4)
        fname = tmp_path / 'i.dcix'
        retrieval.save_index(index, fname)
        back = retrieval.load_index(fname)
        assert back.modality == 'image'
        np.testing.assert_array_equal(back.embeddings, index.embeddings)
        np.testing.assert_array_equal(back.snippet_ids, index.snippet_ids)
        assert retrieval.index_bytes(back) == fname.read_bytes()

    def test_file_layout(self, rng):
        index = _random_index(rng, 3, 2)
        data = retrieval.index_bytes(index)
        assert data[:4] == b'DCIX'
        assert len(data) == 4 + 2 + 4 + 4 + 1 + 3 * (3 * 8 + 2 * 8) + 4

    def test_damaged_file(self, tmp_path, rng):
        data = retrieval.index_bytes(_random_index(rng, 20, 3))
        flipped = bytearray(data)
        flipped[40] ^= 0x10
        for name, payload in {'flip': bytes(flipped), 'cut': data[:-9], 'short': data[:2]}.items():
            fname = tmp_path / name
            fname.write_bytes(payload)
            with pytest.raises(FormatError):
                retrieval.load_index(fname)


class TestMetrics:

    def test_recall(self):
        assert retrieval.recall_at_k((1, 3, 20), 5) == pytest.approx(66.67, abs=0.01)
        assert retrieval.recall_at_k((1, 1, 1), 1) == 100.0
        assert retrieval.recall_at_k((2, 3), 1) == 0.0

    def test_recall_monotone(self, rng):
        ranks = rng.integers(1, 100, 50)
        values = [retrieval.recall_at_k(ranks, k) for k in (1, 5, 10, 50, 100)]
        assert values == sorted(values) and values[-1] == 100.0

    def test_median_rank(self):
        assert retrieval.median_rank((1, 2, 3)) == 2
        assert retrieval.median_rank((1, 1, 1, 9)) == 1
        assert retrieval.median_rank((4, 1)) == 1
        assert retrieval.median_rank((5,)) == 5

    def test_empty(self):
        with pytest.raises(EmptyDatasetError):
            retrieval.median_rank([])
        with pytest.raises(EmptyDatasetError):
            retrieval.recall_at_k([], 1)

    def test_self_queries(self, rng):
        index = _random_index(rng, 200, 6)
        ranks = retrieval.rank_targets(index, index.embeddings, index.snippet_ids)
        assert retrieval.recall_at_k(ranks, 1) == 100.0 and retrieval.median_rank(ranks) == 1

    def test_relaxed_ranks(self):
        emb = np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0]])
        index = retrieval.SnippetIndex([0, 1, 2], [0, 0, 1], [0, 1, 0], emb, 'image')
        ranks, relaxed = retrieval.rank_targets(index, [[0.9, 0.1]], [0], tolerance=1)
        assert ranks[0] == 2 and relaxed[0] == 1
        ranks, relaxed = retrieval.rank_targets(index, [[0.9, 0.1]], [0], tolerance=0)
        assert relaxed[0] == 2


class TestEvaluate:

    def test_duplicate_views_are_perfect(self, duplicate_checkpoint, duplicate_snippets):
        for direction in retrieval.DIRECTIONS:
            report = retrieval.evaluate_retrieval(duplicate_checkpoint, duplicate_snippets, 'test', direction)
            assert report.r_at_1 == 100.0 and report.mr == 1
            assert report.m == duplicate_snippets.split_indices('test').size

    def test_limit_clips(self, untrained_checkpoint, small_snippets):
        report = retrieval.evaluate_retrieval(untrained_checkpoint, small_snippets, 'valid', 'sheet-to-audio',
                                              limit=10000)
        assert report.m == small_snippets.split_indices('valid').size
        report = retrieval.evaluate_retrieval(untrained_checkpoint, small_snippets, 'valid', 'sheet-to-audio',
                                              limit=10)
        assert report.m == 10 and 1 <= report.mr <= 10

    def test_relaxed_metrics_dominate(self, untrained_checkpoint, small_snippets):
        report = retrieval.evaluate_retrieval(untrained_checkpoint, small_snippets, 'test', 'audio-to-sheet',
                                              tolerance=2)
        assert report.relaxed['r_at_1'] >= report.r_at_1
        assert report.relaxed['mr'] <= report.mr
        line = retrieval.format_report(report)
        assert line.startswith('direction=audio-to-sheet r_at_1=') and 'relaxed_mr=' in line

    def test_metric_bounds(self, untrained_checkpoint, small_snippets):
        report = retrieval.evaluate_retrieval(untrained_checkpoint, small_snippets, 'test', 'audio-to-sheet')
        assert 0 <= report.r_at_1 <= report.r_at_5 <= report.r_at_10 <= 100
        assert 1 <= report.mr <= report.m

    def test_empty_split(self, untrained_checkpoint, small_snippets):
        ds = small_snippets.subset(small_snippets.split_indices('train'))
        with pytest.raises(EmptyDatasetError):
            retrieval.evaluate_retrieval(untrained_checkpoint, ds, 'test', 'audio-to-sheet')

    @pytest.mark.parametrize('seed', range(20))
    def test_untrained_model_is_at_chance(self, seed):
        """Independent views: the median target rank sits near M/2."""
        ds = datagen.gen_linear_gaussian(1250, 4, (0.0, 0.0, 0.0, 0.0), 8, 8, seed=seed,
                                         split_counts=(200, 50, 1000))
        cfg = trainer.TrainConfig(epochs=0, h=4, encoder_x='mlp', encoder_y='mlp', seed=seed)
        ckpt = trainer.train(ds, cfg)
        report = retrieval.evaluate_retrieval(ckpt, ds, 'test', 'audio-to-sheet', limit=1000)
        assert report.m == 1000
        assert 250 <= report.mr <= 750

    def test_format_report(self):
        report = retrieval.RetrievalReport('sheet-to-audio', 'test', 1000, 43.1, 89.1, 94.25, 2, np.ones(1))
        assert retrieval.format_report(report) == \
            'direction=sheet-to-audio r_at_1=43.10 r_at_5=89.10 r_at_10=94.25 mr=2 m=1000'


def test_encoders_feed_index(rng):
    """Any encoder/CCA pair with matching widths can build an index."""
    enc = encoders.init('mlp', (6,), 3, seed=0)
    fx = enc.encode(rng.standard_normal((40, 6)))
    model = fit_cca(fx, fx + 0.1 * rng.standard_normal(fx.shape))
    index = retrieval.build_index(enc, model, rng.standard_normal((10, 6)), np.zeros(10), np.arange(10), 'audio')
    assert index.modality == 'audio' and index.h == 3
