"""Quality phrase mining.

The flow bootstraps seed labels from frequent raw phrases intersected with a
lexicon, scores every counted n-gram with a class-balanced random forest
over statistic + semantic features, rectifies frequencies with POS-guided
phrasal segmentation (a candidate only counts where a maximum-score
segmentation actually chose it), and finally prunes incomplete candidates by
masking their boundary tokens and checking a masked-token predictor.  An
entropy+PMI unsupervised scorer is kept as the baseline.
"""
from __future__ import annotations

import hashlib
import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .corpus import (
    CorpusHandle,
    Gram,
    NGramTable,
    TokenizedSentence,
    count_ngrams,
    information_content,
    join_tokens,
    min_split_pmi,
    tfidf,
)
from .corpus import Lexicon

STATUS_RAW = "raw"
STATUS_RF_KEPT = "rf_kept"
STATUS_SEG_KEPT = "seg_kept"
STATUS_FINAL = "final"
STATUS_PRUNED = "pruned"


class PhraseMiningError(Exception):
    pass


class MaskedPredictionError(PhraseMiningError):
    def __init__(self, candidate: Gram, cause: Exception):
        super().__init__(f"masked prediction failed for {candidate!r}: {cause}")
        self.candidate = candidate


@dataclass
class PhraseCandidate:
    tokens: Gram
    frequency: int
    rectified_frequency: int = 0
    features: np.ndarray | None = None
    quality: float = 0.0
    status: str = STATUS_RAW

    @property
    def surface(self) -> str:
        return join_tokens(self.tokens)


@dataclass
class SeedPool:
    positives: set[Gram] = field(default_factory=set)
    negatives: set[Gram] = field(default_factory=set)

    def __post_init__(self) -> None:
        if self.positives & self.negatives:
            raise PhraseMiningError("seed pool positives and negatives overlap")


@dataclass
class Segmentation:
    sentence: TokenizedSentence
    segments: list[Gram]
    score: float


# --------------------------------------------------------------------------
# candidate generation


def extract_raw_phrases(corpus: CorpusHandle, max_len: int) -> list[Gram]:
    """Whole sentences of length <= max_len, one raw phrase per occurrence."""
    if max_len < 1:
        raise PhraseMiningError(f"max_len must be >= 1, got {max_len}")
    return [tuple(s.tokens) for s in corpus.sentences() if len(s.tokens) <= max_len]


def build_seed_pool(raw_phrases: Iterable[Gram], lexicon: Lexicon, min_freq: int) -> SeedPool:
    """Positive seeds: frequent raw phrases whose surface is a lexicon word."""
    if min_freq < 1:
        raise PhraseMiningError(f"min_freq must be >= 1, got {min_freq}")
    if len(lexicon) == 0:
        raise PhraseMiningError("cannot bootstrap seeds from an empty lexicon")
    freq = Counter(raw_phrases)
    positives = {g for g, c in freq.items() if c >= min_freq and join_tokens(g) in lexicon}
    return SeedPool(positives=positives)


def generate_candidates(table: NGramTable, min_count: int, max_len: int | None = None) -> list[PhraseCandidate]:
    """Every counted n-gram with 2 <= n <= max_len and count >= min_count."""
    if min_count < 1:
        raise PhraseMiningError(f"min_count must be >= 1, got {min_count}")
    top = table.max_n if max_len is None else min(max_len, table.max_n)
    out = []
    for n in range(2, top + 1):
        for gram, c in table.counts[n].items():
            if c >= min_count:
                out.append(PhraseCandidate(tokens=gram, frequency=c))
    out.sort(key=lambda c: c.tokens)
    return out


# --------------------------------------------------------------------------
# features


class HashEmbedder:
    """Static per-character embedding table seeded by hashing; d dims in [-1, 1]."""

    def __init__(self, dim: int = 16, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def vector(self, char: str) -> np.ndarray:
        vec = self._cache.get(char)
        if vec is None:
            values = []
            block = 0
            while len(values) < self.dim:
                digest = hashlib.blake2b(
                    f"{self.seed}:{block}:{char}".encode("utf-8"), digest_size=64
                ).digest()
                ints = struct.unpack("<16I", digest)
                values.extend(v / 0x7FFFFFFF - 1.0 for v in ints)
                block += 1
            vec = np.array(values[: self.dim])
            self._cache[char] = vec
        return vec

    def embed_mean(self, text: str) -> np.ndarray:
        if not text:
            return np.zeros(self.dim)
        return np.mean([self.vector(ch) for ch in text], axis=0)


class ZeroEmbedder:
    def __init__(self, dim: int = 16):
        self.dim = dim

    def embed_mean(self, text: str) -> np.ndarray:
        return np.zeros(self.dim)


def featurize(
    candidate: PhraseCandidate,
    table: NGramTable,
    embedder,
    entropies: Mapping[Gram, tuple[float, float]] | None = None,
) -> np.ndarray:
    """[frequency, tfidf, min-split PMI, information content, H_left, H_right]
    followed by the mean per-character embedding of the candidate surface."""
    g = candidate.tokens
    if entropies is not None and g in entropies:
        h_left, h_right = entropies[g]
    else:
        h_left, h_right = table.neighbor_entropies([g])[g]
    stats = [
        float(table.count(g)),
        tfidf(table, g),
        min_split_pmi(table, g),
        information_content(table, g),
        h_left,
        h_right,
    ]
    semantic = embedder.embed_mean("".join(g))
    vec = np.concatenate([np.array(stats), semantic])
    candidate.features = vec
    return vec


def unsupervised_score(candidate: PhraseCandidate | Gram, table: NGramTable) -> float:
    """Baseline scorer: worst-split PMI plus the weaker branching entropy."""
    g = candidate.tokens if isinstance(candidate, PhraseCandidate) else candidate
    h_left, h_right = table.neighbor_entropies([g])[g]
    return min_split_pmi(table, g) + min(h_left, h_right)


# --------------------------------------------------------------------------
# random forest


@dataclass
class _Node:
    vote: bool | None = None
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None

    def predict(self, x: np.ndarray) -> bool:
        node = self
        while node.vote is None:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.vote


@dataclass
class QualityForest:
    trees: list[_Node]
    k_per_class: int
    max_depth: int
    rng_seed: int


def _gini(pos: int, n: int) -> float:
    if n == 0:
        return 0.0
    p = pos / n
    return 2.0 * p * (1.0 - p)


def _best_split(X: np.ndarray, y: np.ndarray) -> tuple[float, int, float] | None:
    n = len(y)
    best: tuple[float, int, float] | None = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        pos_prefix = np.cumsum(y[order])
        total_pos = int(pos_prefix[-1])
        for i in range(n - 1):
            if xs[i] == xs[i + 1]:
                continue
            left_n = i + 1
            lp = int(pos_prefix[i])
            weighted = (
                left_n * _gini(lp, left_n) + (n - left_n) * _gini(total_pos - lp, n - left_n)
            ) / n
            key = (weighted, f, float((xs[i] + xs[i + 1]) / 2.0))
            if best is None or key < best:
                best = key
    return best


def _grow(X: np.ndarray, y: np.ndarray, depth: int, max_depth: int) -> _Node:
    pos = int(y.sum())
    if depth >= max_depth or pos == 0 or pos == len(y):
        return _Node(vote=pos * 2 > len(y))
    split = _best_split(X, y)
    if split is None:
        return _Node(vote=pos * 2 > len(y))
    _, f, thr = split
    mask = X[:, f] <= thr
    return _Node(
        feature=f,
        threshold=thr,
        left=_grow(X[mask], y[mask], depth + 1, max_depth),
        right=_grow(X[~mask], y[~mask], depth + 1, max_depth),
    )


def train_quality_forest(
    candidates: Sequence[PhraseCandidate],
    pool: SeedPool,
    k_per_class: int,
    n_trees: int,
    max_depth: int,
    seed: int,
) -> QualityForest:
    """Class-balanced bagging: each tree sees k positives and k negatives
    drawn with replacement; candidates not in the seed pool are negatives.

    Sampling indexes a canonically sorted candidate list, so the forest is
    invariant to the incoming candidate order for a fixed seed.
    """
    ordered = sorted(candidates, key=lambda c: c.tokens)
    if any(c.features is None for c in ordered):
        raise PhraseMiningError("candidates must be featurized before training")
    X = np.stack([c.features for c in ordered])
    y = np.array([1 if c.tokens in pool.positives else 0 for c in ordered])
    pos_idx = np.flatnonzero(y == 1)
    neg_idx = np.flatnonzero(y == 0)
    if len(pos_idx) == 0 or len(neg_idx) == 0:
        raise PhraseMiningError(
            f"forest training needs both classes: {len(pos_idx)} positives, {len(neg_idx)} negatives"
        )
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        take = np.concatenate([
            rng.choice(pos_idx, size=k_per_class, replace=True),
            rng.choice(neg_idx, size=k_per_class, replace=True),
        ])
        trees.append(_grow(X[take], y[take], 0, max_depth))
    return QualityForest(trees=trees, k_per_class=k_per_class, max_depth=max_depth, rng_seed=seed)


def score(forest: QualityForest, candidate: PhraseCandidate) -> float:
    """Fraction of trees voting positive."""
    if candidate.features is None:
        raise PhraseMiningError("candidate must be featurized before scoring")
    votes = sum(1 for t in forest.trees if t.predict(candidate.features))
    return votes / len(forest.trees)


# --------------------------------------------------------------------------
# POS-guided segmentation


class PosPrior:
    """Multiplicative prior per POS pattern; unlisted patterns weigh 1."""

    def __init__(self, weights: Mapping[tuple[str, ...], float] | None = None):
        self.weights = dict(weights or {})

    def __call__(self, pattern: tuple[str, ...]) -> float:
        return self.weights.get(pattern, 1.0)

    @classmethod
    def from_file(cls, path: str) -> "PosPrior":
        weights: dict[tuple[str, ...], float] = {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                pattern, weight = line.split("\t")
                weights[tuple(pattern.split())] = float(weight)
        return cls(weights)


UNIFORM_PRIOR = PosPrior()


def _as_sentence(sentence: TokenizedSentence | Sequence[str]) -> TokenizedSentence:
    if isinstance(sentence, TokenizedSentence):
        return sentence
    return TokenizedSentence(doc_id="adhoc", tokens=list(sentence))


def segment(
    sentence: TokenizedSentence | Sequence[str],
    quality_lookup: Callable[[Gram], float],
    pos_prior: PosPrior | None = None,
    max_seg_len: int = 6,
) -> Segmentation:
    """Maximum sum-of-log-score segmentation by dynamic programming.

    Ties prefer fewer segments, then leftmost-longest.  quality_lookup must
    return a score in (0, 1] for every tuple up to max_seg_len.
    """
    sent = _as_sentence(sentence)
    prior = pos_prior or UNIFORM_PRIOR
    toks = sent.tokens
    tags = sent.pos_tags if sent.pos_tags is not None else ["N"] * len(toks)
    L = len(toks)
    if L == 0:
        raise PhraseMiningError("cannot segment an empty sentence")

    # best[i]: (score, -n_segments, first_len) for the suffix starting at i;
    # scanning suffixes right-to-left makes the tie-break leftmost-longest.
    scores = [0.0] * (L + 1)
    negsegs = [0] * (L + 1)
    firstlen = [0] * (L + 1)
    for i in range(L - 1, -1, -1):
        best: tuple[float, int, int] | None = None
        for ln in range(1, min(max_seg_len, L - i) + 1):
            seg = tuple(toks[i:i + ln])
            q = quality_lookup(seg)
            if not 0.0 < q <= 1.0:
                raise PhraseMiningError(f"quality for {seg!r} must be in (0, 1], got {q}")
            w = math.log(q * prior(tuple(tags[i:i + ln])))
            cand = (w + scores[i + ln], negsegs[i + ln] - 1, ln)
            if best is None or cand > best:
                best = cand
        assert best is not None
        scores[i], negsegs[i], firstlen[i] = best

    segments = []
    i = 0
    while i < L:
        segments.append(tuple(toks[i:i + firstlen[i]]))
        i += firstlen[i]
    return Segmentation(sentence=sent, segments=segments, score=scores[0])


def quality_lookup_from(
    scores: Mapping[Gram, float], floor: float
) -> Callable[[Gram], float]:
    """Lookup for rectification: scored tuples are clamped to [floor, 1];
    unknown tuples score floor per token so an unscored run is never cheaper
    than its singletons and the DP always has a feasible path."""
    def lookup(gram: Gram) -> float:
        q = scores.get(gram)
        if q is not None:
            return min(1.0, max(q, floor))
        return floor ** len(gram) if len(gram) > 1 else floor
    return lookup


def rectify_frequencies(
    corpus: CorpusHandle,
    quality_lookup: Callable[[Gram], float],
    pos_prior: PosPrior | None = None,
    max_seg_len: int = 6,
    candidates: Iterable[Gram] | None = None,
) -> dict[Gram, int]:
    """Count how often each multi-token tuple is chosen as a segment.

    When `candidates` is given, sentences containing none of them are
    skipped; their chosen segments cannot equal a tracked candidate, so the
    tracked counts are unchanged.
    """
    by_first: dict[str, list[Gram]] | None = None
    if candidates is not None:
        by_first = {}
        for g in candidates:
            by_first.setdefault(g[0], []).append(g)

    rectified: Counter[Gram] = Counter()
    for sent in corpus.sentences():
        toks = sent.tokens
        if by_first is not None:
            found = False
            for i, tok in enumerate(toks):
                for g in by_first.get(tok, ()):
                    if tuple(toks[i:i + len(g)]) == g:
                        found = True
                        break
                if found:
                    break
            if not found:
                continue
        for seg in segment(sent, quality_lookup, pos_prior, max_seg_len).segments:
            if len(seg) > 1:
                rectified[seg] += 1
    return dict(rectified)


# --------------------------------------------------------------------------
# masked-token pruning


class NgramMaskedPredictor:
    """Masked-token predictor backed by corpus bigram counts.

    Ranks the whole vocabulary by descending bigram count with the adjacent
    context token, ties broken lexicographically; zero-count tokens follow in
    lexicographic order so a top-|V| query always contains everything.
    """

    def __init__(self, table: NGramTable):
        if table.max_n < 2:
            raise PhraseMiningError("masked predictor needs bigram counts")
        self.vocab = sorted(t for (t,) in table.counts[1])
        self._after: dict[str, Counter[str]] = {}
        self._before: dict[str, Counter[str]] = {}
        for (a, b), c in table.counts[2].items():
            self._after.setdefault(a, Counter())[b] += c
            self._before.setdefault(b, Counter())[a] += c
        self._cache: dict[tuple[str, str], list[str]] = {}

    @property
    def vocabulary_size(self) -> int:
        return len(self.vocab)

    def _ranked(self, context: str, side: str) -> list[str]:
        key = (context, side)
        ranked = self._cache.get(key)
        if ranked is None:
            tally = (self._before if side == "left" else self._after).get(context, Counter())
            nonzero = sorted(tally.items(), key=lambda kv: (-kv[1], kv[0]))
            ranked = [t for t, _ in nonzero]
            seen = set(ranked)
            ranked.extend(t for t in self.vocab if t not in seen)
            self._cache[key] = ranked
        return ranked

    def top_tokens(self, left: Gram, right: Gram, n: int) -> list[str]:
        if right:
            return self._ranked(right[0], "left")[:n]
        if left:
            return self._ranked(left[-1], "right")[:n]
        raise PhraseMiningError("masked prediction needs at least one context token")


def mlm_prune(candidate: PhraseCandidate | Gram, predictor, top_n: int) -> bool:
    """Keep a candidate only if the predictor recovers the masked first token
    (given the rest) and the masked last token (given the rest) in its top-n."""
    g = candidate.tokens if isinstance(candidate, PhraseCandidate) else candidate
    if len(g) < 2:
        raise PhraseMiningError(f"candidate must have length >= 2, got {g!r}")
    if top_n < 1:
        raise PhraseMiningError(f"top_n must be >= 1, got {top_n}")
    try:
        first_ok = g[0] in predictor.top_tokens((), g[1:], top_n)
        last_ok = g[-1] in predictor.top_tokens(g[:-1], (), top_n)
    except PhraseMiningError:
        raise
    except Exception as e:
        raise MaskedPredictionError(g, e) from e
    return first_ok and last_ok


# --------------------------------------------------------------------------
# the full pipeline


@dataclass
class MiningConfig:
    min_count: int = 3
    max_phrase_len: int = 6
    rf_threshold: float = 0.5
    rf_trees: int = 10
    rf_k: int = 100
    rf_depth: int = 4
    seg_floor: float = 0.1
    mlm_top_n: int = 1
    seed: int = 0
    rectified_min_count: int | None = None  # defaults to min_count


@dataclass
class MiningOutcome:
    candidates: list[PhraseCandidate]
    stage_sets: dict[str, set[Gram]]

    @property
    def final(self) -> list[PhraseCandidate]:
        return [c for c in self.candidates if c.status == STATUS_FINAL]

    def stage_counts(self) -> dict[str, int]:
        return {name: len(s) for name, s in self.stage_sets.items()}


class StageError(PhraseMiningError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage


def _run_stage(name: str, fn):
    try:
        return fn()
    except Exception as e:
        raise StageError(name, e) from e


def mine(
    corpus: CorpusHandle,
    lexicon: Lexicon,
    config: MiningConfig,
    embedder=None,
    predictor=None,
    pos_prior: PosPrior | None = None,
) -> MiningOutcome:
    """Run the whole mining flow; every stage can only remove candidates."""
    embedder = embedder or HashEmbedder(seed=config.seed)

    def seeds_stage():
        raw_phrases = extract_raw_phrases(corpus, config.max_phrase_len)
        return build_seed_pool(raw_phrases, lexicon, config.min_count)

    pool = _run_stage("seeds", seeds_stage)

    def candidates_stage():
        table = count_ngrams(corpus, config.max_phrase_len + 1)
        return table, generate_candidates(table, config.min_count, config.max_phrase_len)

    table, candidates = _run_stage("candidates", candidates_stage)

    def featurize_stage():
        entropies = table.neighbor_entropies([c.tokens for c in candidates])
        for c in candidates:
            featurize(c, table, embedder, entropies)

    _run_stage("featurize", featurize_stage)

    def forest_stage():
        forest = train_quality_forest(
            candidates, pool, config.rf_k, config.rf_trees, config.rf_depth, config.seed
        )
        for c in candidates:
            c.quality = score(forest, c)
            c.status = STATUS_RF_KEPT if c.quality >= config.rf_threshold else STATUS_PRUNED

    _run_stage("forest", forest_stage)
    rf_kept = [c for c in candidates if c.status == STATUS_RF_KEPT]

    def segmentation_stage():
        lookup = quality_lookup_from({c.tokens: c.quality for c in rf_kept}, config.seg_floor)
        rectified = rectify_frequencies(
            corpus, lookup, pos_prior, config.max_phrase_len,
            candidates=[c.tokens for c in rf_kept],
        )
        threshold = (
            config.min_count if config.rectified_min_count is None else config.rectified_min_count
        )
        for c in rf_kept:
            c.rectified_frequency = rectified.get(c.tokens, 0)
            c.status = STATUS_SEG_KEPT if c.rectified_frequency >= threshold else STATUS_PRUNED

    _run_stage("segmentation", segmentation_stage)
    seg_kept = [c for c in rf_kept if c.status == STATUS_SEG_KEPT]

    def mlm_stage():
        pred = predictor or NgramMaskedPredictor(table)
        for c in seg_kept:
            c.status = STATUS_FINAL if mlm_prune(c, pred, config.mlm_top_n) else STATUS_PRUNED

    _run_stage("mlm", mlm_stage)

    stage_sets = {
        STATUS_RAW: {c.tokens for c in candidates},
        STATUS_RF_KEPT: {c.tokens for c in rf_kept},
        STATUS_SEG_KEPT: {c.tokens for c in seg_kept},
        STATUS_FINAL: {c.tokens for c in candidates if c.status == STATUS_FINAL},
    }
    return MiningOutcome(candidates=candidates, stage_sets=stage_sets)
