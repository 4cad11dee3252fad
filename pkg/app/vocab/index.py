"""Incremental vocabulary of binary words with an inverted file.

Descriptors are routed down a hierarchical tree by greedy nearest-centroid
descent. A descriptor within ``merge_threshold`` bits of a word of the leaf
it reaches is merged into that word, otherwise it becomes a new word there.
Leaves holding more than ``leaf_capacity`` words are re-clustered into at
most ``branching`` children by k-majority. After a frame that split any
leaf the tree is rebuilt: internal centroids become the bitwise majority of
their children's centroids and every stored descriptor is routed again, so
the word holding its posting always sits in the leaf its descent reaches.
"""
import heapq
import logging
import math
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from app.core.descriptors import (
    DescriptorMatrix,
    as_descriptor_matrix,
    hamming_matrix,
    hamming_to_many,
    majority,
)
from app.core.errors import DuplicateFrameError
from app.schemas.config import VocabConfig

logger = logging.getLogger(__name__)

_MAX_REBUILD_PASSES = 8


@dataclass
class VocabNode:
    centroid: Optional[np.ndarray] = None
    children: list[int] = field(default_factory=list)
    words: list[int] = field(default_factory=list)
    child_centroids: Optional[np.ndarray] = None

    @property
    def is_leaf(self) -> bool:
        return not self.children


class InvertedFile:
    """word id -> {frame id: occurrences}"""

    def __init__(self):
        self._postings: dict[int, dict[int, int]] = {}

    def add(self, word: int, frame_id: int, count: int = 1) -> None:
        postings = self._postings.setdefault(word, {})
        postings[frame_id] = postings.get(frame_id, 0) + count

    def postings(self, word: int) -> dict[int, int]:
        return self._postings.get(word, {})

    def document_frequency(self, word: int) -> int:
        return len(self._postings.get(word, ()))

    def total_postings(self) -> int:
        return sum(sum(p.values()) for p in self._postings.values())

    def items(self):
        return self._postings.items()

    def __len__(self) -> int:
        return len(self._postings)


@dataclass(frozen=True)
class CandidateEntry:
    frame_id: int
    raw: float
    normalized: float


@dataclass(frozen=True)
class CandidateList:
    query_frame_id: int
    entries: tuple[CandidateEntry, ...] = ()

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i) -> CandidateEntry:
        return self.entries[i]

    @property
    def frame_ids(self) -> list[int]:
        return [e.frame_id for e in self.entries]


def normalize_scores(entries: Sequence[tuple[int, float]],
                     prune_threshold: float = 0.0) -> list[CandidateEntry]:
    """Min-max normalize raw scores, then drop entries below ``prune_threshold``.

    When every raw score is equal the normalized score is 1.0 for all entries.
    """
    if not entries:
        return []
    raws = [float(s) for _, s in entries]
    lo, hi = min(raws), max(raws)
    out = []
    for (frame_id, _), raw in zip(entries, raws):
        normalized = 1.0 if hi == lo else (raw - lo) / (hi - lo)
        if normalized >= prune_threshold:
            out.append(CandidateEntry(int(frame_id), raw, normalized))
    return out


@dataclass(frozen=True)
class WordHit:
    word: int
    distance: int


class VocabIndex:
    def __init__(self, cfg: VocabConfig = VocabConfig(), name: str = "vocab"):
        self.cfg = cfg
        self.name = name
        self.bits = cfg.descriptor_bits
        self.nodes: list[VocabNode] = [VocabNode()]
        self._words = np.zeros((64, self.bits // 8), dtype=np.uint8)
        self.n_words = 0
        # every inserted descriptor with its frame and the word holding its posting
        self._members = np.zeros((64, self.bits // 8), dtype=np.uint8)
        self.member_frames: list[int] = []
        self.member_words: list[int] = []
        self.inverted = InvertedFile()
        self.frames: dict[int, int] = {}
        self._lock = threading.RLock()

    @property
    def words(self) -> DescriptorMatrix:
        return self._words[:self.n_words]

    @property
    def members(self) -> DescriptorMatrix:
        return self._members[:len(self.member_frames)]

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def __contains__(self, frame_id: int) -> bool:
        return frame_id in self.frames

    @staticmethod
    def _append_row(rows: np.ndarray, n: int, descriptor: np.ndarray) -> np.ndarray:
        if n == len(rows):
            grown = np.zeros((2 * len(rows), rows.shape[1]), dtype=np.uint8)
            grown[:n] = rows[:n]
            rows = grown
        rows[n] = descriptor
        return rows

    def _add_word(self, descriptor: np.ndarray) -> int:
        self._words = self._append_row(self._words, self.n_words, descriptor)
        self.n_words += 1
        return self.n_words - 1

    def _add_member(self, descriptor: np.ndarray, frame_id: int, word: int) -> None:
        self._members = self._append_row(self._members, len(self.member_frames), descriptor)
        self.member_frames.append(frame_id)
        self.member_words.append(word)

    def _place(self, d: np.ndarray, leaf_id: int, frame_id: int) -> int:
        """Merge ``d`` into the closest word of ``leaf_id`` or open a new word there."""
        leaf = self.nodes[leaf_id]
        word = -1
        if leaf.words:
            dists = hamming_to_many(d, self._words[leaf.words])
            j = int(np.argmin(dists))
            if dists[j] <= self.cfg.merge_threshold:
                word = leaf.words[j]
        if word < 0:
            word = self._add_word(d)
            leaf.words.append(word)
        self.inverted.add(word, frame_id)
        return word

    def _route(self, descriptors: np.ndarray) -> np.ndarray:
        """Leaf reached by greedy descent for each row, computed level by level."""
        leaves = np.zeros(len(descriptors), dtype=np.int64)
        stack = [(0, np.arange(len(descriptors)))]
        while stack:
            node_id, rows = stack.pop()
            node = self.nodes[node_id]
            if node.is_leaf:
                leaves[rows] = node_id
                continue
            choice = np.argmin(hamming_matrix(descriptors[rows], node.child_centroids), axis=1)
            for c, child in enumerate(node.children):
                sub = rows[choice == c]
                if len(sub):
                    stack.append((child, sub))
        return leaves

    def _descend(self, d: np.ndarray, node_id: int = 0) -> int:
        node = self.nodes[node_id]
        while not node.is_leaf:
            dists = hamming_to_many(d, node.child_centroids)
            node_id = node.children[int(np.argmin(dists))]
            node = self.nodes[node_id]
        return node_id

    def leaf_of(self, d: np.ndarray) -> int:
        """Leaf reached by greedy nearest-centroid descent."""
        return self._descend(np.asarray(d, dtype=np.uint8))

    def nearest_word(self, d: np.ndarray, exact: Optional[bool] = None) -> Optional[WordHit]:
        """Best-bin-first search visiting 1 + ``backtracking`` leaves, or all of them when exact."""
        if self.n_words == 0:
            return None
        exact = self.cfg.exact if exact is None else exact
        budget = math.inf if exact else 1 + self.cfg.backtracking
        heap: list[tuple[int, int, int]] = [(0, 0, 0)]
        tiebreak = 1
        best_dist, best_word = math.inf, -1
        visited = 0
        while heap and visited < budget:
            _, _, node_id = heapq.heappop(heap)
            node = self.nodes[node_id]
            while not node.is_leaf:
                dists = hamming_to_many(d, node.child_centroids)
                order = np.argsort(dists, kind="stable")
                for c in order[1:]:
                    heapq.heappush(heap, (int(dists[c]), tiebreak, node.children[c]))
                    tiebreak += 1
                node_id = node.children[int(order[0])]
                node = self.nodes[node_id]
            visited += 1
            if not node.words:
                continue
            dists = hamming_to_many(d, self._words[node.words])
            j = int(np.argmin(dists))
            if (dists[j], node.words[j]) < (best_dist, best_word):
                best_dist, best_word = int(dists[j]), node.words[j]
        if best_word < 0:
            return None
        return WordHit(best_word, best_dist)

    def _k_majority(self, descriptors: np.ndarray, node_id: int) -> tuple[np.ndarray, np.ndarray]:
        k = min(self.cfg.branching, len(descriptors))
        rng = np.random.default_rng([self.cfg.seed, node_id])
        centroids = descriptors[np.sort(rng.choice(len(descriptors), size=k, replace=False))].copy()
        labels = np.argmin(hamming_matrix(descriptors, centroids), axis=1)
        for _ in range(self.cfg.kmajority_iterations):
            for c in range(k):
                members = descriptors[labels == c]
                if len(members):
                    centroids[c] = majority(members)
            new_labels = np.argmin(hamming_matrix(descriptors, centroids), axis=1)
            if np.array_equal(new_labels, labels):
                break
            labels = new_labels
        labels = np.argmin(hamming_matrix(descriptors, centroids), axis=1)
        return labels, centroids

    def _split(self, leaf_id: int) -> bool:
        leaf = self.nodes[leaf_id]
        word_ids = np.array(leaf.words)
        labels, centroids = self._k_majority(self._words[word_ids], leaf_id)
        groups = [c for c in range(len(centroids)) if np.any(labels == c)]
        if len(groups) < 2:
            return False
        children = []
        for c in groups:
            child = VocabNode(centroid=centroids[c].copy(), words=word_ids[labels == c].tolist())
            self.nodes.append(child)
            children.append(len(self.nodes) - 1)
        leaf.children = children
        leaf.child_centroids = np.stack([self.nodes[c].centroid for c in children])
        leaf.words = []
        logger.debug("%s: hoja %d dividida en %d hijos", self.name, leaf_id, len(children))
        return True

    def _refresh_centroids(self) -> None:
        # children are always appended after their parent
        for node in reversed(self.nodes):
            if node.is_leaf:
                continue
            node.child_centroids = np.stack([self.nodes[c].centroid for c in node.children])
            node.centroid = majority(node.child_centroids)

    def _reroute(self) -> None:
        members = self.members
        leaves = self._route(members)
        for node in self.nodes:
            node.words = []
        self.n_words = 0
        self.inverted = InvertedFile()
        for m, (d, frame_id) in enumerate(zip(members, self.member_frames)):
            self.member_words[m] = self._place(d, int(leaves[m]), frame_id)

    def rebuild(self) -> None:
        """Recompute internal centroids and route every stored descriptor again.

        Leaves left over capacity by the new routing are split and the pass
        repeats, up to ``_MAX_REBUILD_PASSES`` times.
        """
        with self._lock:
            for _ in range(_MAX_REBUILD_PASSES):
                self._refresh_centroids()
                self._reroute()
                full = [i for i, n in enumerate(self.nodes)
                        if n.is_leaf and len(n.words) > self.cfg.leaf_capacity]
                split = [self._split(i) for i in full]
                if not any(split):
                    return
            self._refresh_centroids()
            self._reroute()
            logger.debug("%s: reconstrucción detenida con hojas por encima de la capacidad", self.name)

    def insert_frame(self, frame_id: int, descriptors: Iterable) -> None:
        descriptors = as_descriptor_matrix(descriptors, self.bits)
        with self._lock:
            if frame_id in self.frames:
                raise DuplicateFrameError(frame_id)
            self.frames[frame_id] = len(descriptors)
            split = False
            for d in descriptors:
                leaf_id = self._descend(d)
                self._add_member(d, frame_id, self._place(d, leaf_id, frame_id))
                if len(self.nodes[leaf_id].words) > self.cfg.leaf_capacity:
                    split |= self._split(leaf_id)
            if split:
                self.rebuild()

    def score_frames(self, descriptors: Iterable, max_frame_id: Optional[int] = None,
                     exact: Optional[bool] = None) -> dict[int, float]:
        """Raw s_k per frame: Σ tf · idf · similarity over each query descriptor's nearest word."""
        descriptors = as_descriptor_matrix(descriptors, self.bits)
        scores: dict[int, float] = defaultdict(float)
        with self._lock:
            n_frames = len(self.frames)
            for d in descriptors:
                hit = self.nearest_word(d, exact)
                if hit is None or hit.distance > self.cfg.max_query_distance:
                    continue
                postings = self.inverted.postings(hit.word)
                idf = math.log(n_frames / len(postings))
                sim = 1.0 - hit.distance / self.bits
                for frame_id, count in postings.items():
                    if max_frame_id is not None and frame_id > max_frame_id:
                        continue
                    scores[frame_id] += (count / self.frames[frame_id]) * idf * sim
        return dict(scores)

    def query(self, descriptors: Iterable, max_results: Optional[int] = None,
              max_frame_id: Optional[int] = None, query_frame_id: int = -1,
              exact: Optional[bool] = None) -> CandidateList:
        scores = self.score_frames(descriptors, max_frame_id, exact)
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
        ranked = ranked[:max_results or self.cfg.max_results]
        entries = normalize_scores(ranked, self.cfg.prune_threshold)
        return CandidateList(query_frame_id, tuple(entries))

    def depth(self) -> int:
        """Edges from the root to the deepest leaf."""
        deepest = 0
        stack = [(0, 0)]
        while stack:
            node_id, level = stack.pop()
            deepest = max(deepest, level)
            stack.extend((c, level + 1) for c in self.nodes[node_id].children)
        return deepest

    def save(self, path: Path | str) -> None:
        from app.vocab.snapshot import dump_index

        Path(path).write_bytes(dump_index(self))

    @classmethod
    def load(cls, path: Path | str, name: str = "vocab") -> "VocabIndex":
        from app.vocab.snapshot import load_index

        return load_index(Path(path).read_bytes(), name=name)
