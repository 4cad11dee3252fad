import math
from collections import defaultdict

import numpy as np
import pytest

from app.core.descriptors import hamming_matrix, majority, perturb, random_descriptors
from app.core.errors import DuplicateFrameError, SnapshotError
from app.schemas.config import VocabConfig
from app.vocab.index import CandidateEntry, VocabIndex, normalize_scores
from app.vocab.snapshot import dump_index, load_index


def build(frames, cfg: VocabConfig = VocabConfig()) -> VocabIndex:
    index = VocabIndex(cfg)
    for frame_id, desc in enumerate(frames):
        index.insert_frame(frame_id, desc)
    return index


def oracle_scores(index: VocabIndex, query: np.ndarray, max_frame_id=None) -> dict[int, float]:
    """Linear scan over every word with the index's own scoring."""
    D = hamming_matrix(query, index.words)
    scores = defaultdict(float)
    n_frames = len(index.frames)
    for row in D:
        word = int(np.argmin(row))
        dist = int(row[word])
        if dist > index.cfg.max_query_distance:
            continue
        postings = index.inverted.postings(word)
        idf = math.log(n_frames / len(postings))
        sim = 1.0 - dist / index.bits
        for frame_id, count in postings.items():
            if max_frame_id is not None and frame_id > max_frame_id:
                continue
            scores[frame_id] += (count / index.frames[frame_id]) * idf * sim
    return dict(scores)


def oracle_ranking(index: VocabIndex, query: np.ndarray) -> list[tuple[int, float]]:
    ranked = sorted(oracle_scores(index, query).items(), key=lambda kv: (-kv[1], kv[0]))
    entries = normalize_scores(ranked[:index.cfg.max_results], index.cfg.prune_threshold)
    return [(e.frame_id, e.raw) for e in entries]


def noisy_copy(desc: np.ndarray, rng, n_bits: int) -> np.ndarray:
    return np.stack([perturb(d, rng, n_bits) for d in desc])


@pytest.fixture(scope="module")
def large_corpus():
    rng = np.random.default_rng(99)
    frames = [random_descriptors(rng, 100) for _ in range(100)]
    return frames, build(frames)


@pytest.fixture(scope="module")
def revisited_corpus():
    """The large corpus followed by noisy re-observations of every fifth frame."""
    rng = np.random.default_rng(97)
    frames = [random_descriptors(rng, 100) for _ in range(100)]
    frames += [noisy_copy(frames[f], rng, 6) for f in range(0, 100, 5)]
    return frames, build(frames)


class TestNormalizeScores:
    def test_min_max(self):
        out = normalize_scores([(1, 4.0), (2, 2.0), (3, 1.0)])
        np.testing.assert_allclose([e.normalized for e in out], [1.0, 1 / 3, 0.0])
        assert out[0] == CandidateEntry(1, 4.0, 1.0)

    def test_all_equal(self):
        out = normalize_scores([(1, 2.5), (2, 2.5)])
        assert [e.normalized for e in out] == [1.0, 1.0]

    def test_single_entry(self):
        assert normalize_scores([(9, 0.3)])[0].normalized == 1.0

    def test_pruning(self):
        out = normalize_scores([(1, 4.0), (2, 2.0), (3, 1.0)], prune_threshold=0.3)
        assert [e.frame_id for e in out] == [1, 2]

    def test_range(self, rng):
        raw = rng.uniform(0, 10, 50)
        out = normalize_scores(list(enumerate(raw)))
        values = [e.normalized for e in out]
        assert min(values) == 0.0
        assert max(values) == 1.0
        assert all(0.0 <= v <= 1.0 for v in values)

    def test_empty(self):
        assert normalize_scores([]) == []


class TestInsert:
    def test_first_frame_self_retrieval(self, rng):
        desc = random_descriptors(rng, 10)
        index = build([desc])
        assert index.n_words >= 1
        for d in desc:
            assert index.nearest_word(d).distance == 0
        result = index.query(desc)
        assert result[0].frame_id == 0
        assert result[0].normalized == 1.0

    def test_duplicate_frame(self, rng):
        index = build([random_descriptors(rng, 5)])
        with pytest.raises(DuplicateFrameError):
            index.insert_frame(0, random_descriptors(rng, 5))

    def test_empty_frame_is_registered(self, rng):
        index = build([random_descriptors(rng, 5)])
        before = index.inverted.total_postings()
        index.insert_frame(1, [])
        assert 1 in index
        assert index.frames[1] == 0
        assert index.inverted.total_postings() == before

    def test_close_descriptor_merges(self, rng):
        d = random_descriptors(rng, 1)
        index = build([d])
        index.insert_frame(1, perturb(d[0], rng, 10)[None, :])
        assert index.n_words == 1
        assert index.inverted.postings(0) == {0: 1, 1: 1}

    def test_far_descriptor_is_new_word(self, rng):
        d = random_descriptors(rng, 1)
        index = build([d])
        index.insert_frame(1, perturb(d[0], rng, 40)[None, :])
        assert index.n_words == 2

    def test_postings_count_descriptors(self, large_corpus):
        frames, index = large_corpus
        assert index.inverted.total_postings() == sum(len(f) for f in frames)
        assert all(f in index.frames for _, postings in index.inverted.items() for f in postings)

    def test_depth_bound(self, large_corpus):
        _, index = large_corpus
        cfg = index.cfg
        bound = math.ceil(math.log(10_000 / cfg.leaf_capacity, cfg.branching)) + 2
        assert index.depth() <= bound

    def test_every_word_reachable(self, large_corpus):
        _, index = large_corpus
        for word, d in enumerate(index.words):
            assert word in index.nodes[index.leaf_of(d)].words

    def test_leaves_respect_capacity(self, large_corpus):
        _, index = large_corpus
        assert all(len(n.words) <= index.cfg.leaf_capacity for n in index.nodes if n.is_leaf)


class TestTreeInvariants:
    def test_revisits_merge(self, revisited_corpus):
        frames, index = revisited_corpus
        assert len(index.member_frames) == sum(len(f) for f in frames)
        assert index.n_words < len(index.member_frames) - 500

    def test_every_descriptor_reaches_its_word(self, revisited_corpus):
        _, index = revisited_corpus
        for d, word in zip(index.members, index.member_words):
            assert word in index.nodes[index.leaf_of(d)].words

    def test_internal_centroids_are_child_majorities(self, revisited_corpus):
        _, index = revisited_corpus
        internal = [n for n in index.nodes if not n.is_leaf]
        assert len(internal) > 1
        for node in internal:
            children = np.stack([index.nodes[c].centroid for c in node.children])
            np.testing.assert_array_equal(node.child_centroids, children)
            np.testing.assert_array_equal(node.centroid, majority(children))

    def test_postings_follow_members(self, revisited_corpus):
        _, index = revisited_corpus
        expected = defaultdict(lambda: defaultdict(int))
        for frame_id, word in zip(index.member_frames, index.member_words):
            expected[word][frame_id] += 1
        assert {w: dict(p) for w, p in index.inverted.items()} == {w: dict(p) for w, p in expected.items()}

    def test_every_word_lives_in_one_leaf(self, revisited_corpus):
        _, index = revisited_corpus
        placed = sorted(w for n in index.nodes if n.is_leaf for w in n.words)
        assert placed == list(range(index.n_words))

    def test_rebuild_is_idempotent(self, revisited_corpus):
        _, index = revisited_corpus
        copy = load_index(dump_index(index))
        copy.rebuild()
        assert dump_index(copy) == dump_index(index)


class TestQuery:
    def test_empty_index(self, rng):
        assert len(VocabIndex().query(random_descriptors(rng, 3))) == 0

    def test_self_retrieval_every_frame(self):
        rng = np.random.default_rng(5)
        frames = [random_descriptors(rng, 40) for _ in range(50)]
        index = build(frames)
        for frame_id, desc in enumerate(frames):
            assert index.query(desc)[0].frame_id == frame_id

    def test_max_frame_id_gates_results(self):
        rng = np.random.default_rng(6)
        frames = [random_descriptors(rng, 30) for _ in range(10)]
        index = build(frames)
        result = index.query(frames[8], max_frame_id=5)
        assert all(e.frame_id <= 5 for e in result)

    def test_sorted_and_truncated(self, large_corpus):
        frames, index = large_corpus
        rng = np.random.default_rng(8)
        query = np.vstack([noisy_copy(frames[f][:20], rng, 8) for f in range(10)])
        result = index.query(query, max_results=5)
        assert len(result) <= 5
        raws = [e.raw for e in result]
        assert raws == sorted(raws, reverse=True)

    def test_exact_matches_oracle(self):
        rng = np.random.default_rng(11)
        cfg = VocabConfig(leaf_capacity=20, branching=4, prune_threshold=0.0)
        frames = [random_descriptors(rng, 25) for _ in range(20)]
        index = build(frames, cfg)
        assert index.depth() >= 2
        for _ in range(100):
            picks = rng.choice(20, size=3, replace=False)
            parts = [noisy_copy(frames[f][rng.choice(25, 8, replace=False)], rng, 12) for f in picks]
            parts.append(random_descriptors(rng, 5))
            query = np.vstack(parts)
            result = index.query(query, exact=True)
            assert [(e.frame_id, e.raw) for e in result] == oracle_ranking(index, query)

    def test_approximate_rank_one_agreement(self, large_corpus):
        frames, index = large_corpus
        rng = np.random.default_rng(12)
        agree = 0
        for _ in range(100):
            f = int(rng.integers(0, 100))
            query = noisy_copy(frames[f][:50], rng, 8)
            approx = index.query(query)
            oracle = oracle_ranking(index, query)
            if approx.entries and oracle and approx[0].frame_id == oracle[0][0]:
                agree += 1
        assert agree >= 90

    def test_far_descriptors_ignored(self, rng):
        d = random_descriptors(rng, 5)
        index = build([d, random_descriptors(rng, 5)])
        far = np.bitwise_not(d)
        assert index.score_frames(far) == {}


class TestSnapshot:
    def test_resave_identical(self, large_corpus, tmp_path):
        _, index = large_corpus
        path = tmp_path / "points.voc"
        index.save(path)
        loaded = VocabIndex.load(path)
        assert dump_index(loaded) == path.read_bytes()

    def test_loaded_index_answers_the_same(self, large_corpus):
        frames, index = large_corpus
        loaded = load_index(dump_index(index))
        rng = np.random.default_rng(13)
        query = noisy_copy(frames[3], rng, 8)
        assert loaded.query(query) == index.query(query)
        assert loaded.n_words == index.n_words
        assert loaded.frames == index.frames

    def test_truncated(self, rng):
        data = dump_index(build([random_descriptors(rng, 5)]))
        with pytest.raises(SnapshotError):
            load_index(data[:-3])

    def test_bad_magic(self):
        with pytest.raises(SnapshotError):
            load_index(b"NOTAVOCAB" + b"\x00" * 16)

    def test_trailing_bytes(self, rng):
        data = dump_index(build([random_descriptors(rng, 5)]))
        with pytest.raises(SnapshotError):
            load_index(data + b"\x00")
