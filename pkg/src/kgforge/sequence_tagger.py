"""Property-value sequence tagging.

Tokens are labeled with a BMES x property-type scheme.  Per-token features
fuse a contextual embedding with softword-position and typed-dictionary
one-hot blocks plus a small randomly initialized slot block; decoding is
Viterbi over emission + transition scores with invalid BMES transitions
pinned to -inf, so the output is always a well-formed span sequence.  The
trainer is an averaged structured perceptron, deterministic for a fixed
sample order; the contextual embedder is pluggable.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import Lexicon, TypedDictionary, join_tokens

NEG_INF = float("-inf")
SOFTWORD_LABELS = ("O", "B", "M", "E", "S")  # O slot reserved, tokens always get BMES


class TaggingError(Exception):
    pass


class LabelScheme:
    """BMES x type labels plus O; O is index 0, order fixed for indexing."""

    def __init__(self, property_types: Sequence[str]):
        if len(set(property_types)) != len(property_types):
            raise TaggingError("duplicate property types")
        self.property_types = list(property_types)
        self.labels = ["O"]
        for t in self.property_types:
            self.labels.extend(f"{pos}#{t}" for pos in "BMES")
        self.index = {lab: i for i, lab in enumerate(self.labels)}

    def __len__(self) -> int:
        return len(self.labels)

    @staticmethod
    def split(label: str) -> tuple[str, str | None]:
        if label == "O":
            return "O", None
        pos, typ = label.split("#", 1)
        return pos, typ

    def valid_transition(self, prev: str, cur: str) -> bool:
        p_pos, p_type = self.split(prev)
        c_pos, c_type = self.split(cur)
        if p_pos in ("B", "M"):
            return c_pos in ("M", "E") and c_type == p_type
        return c_pos in ("B", "S", "O")

    def valid_start(self, label: str) -> bool:
        return self.split(label)[0] in ("B", "S", "O")

    def valid_end(self, label: str) -> bool:
        return self.split(label)[0] in ("E", "S", "O")

    def transition_mask(self) -> np.ndarray:
        n = len(self.labels)
        mask = np.zeros((n, n), dtype=bool)
        for i, a in enumerate(self.labels):
            for j, b in enumerate(self.labels):
                mask[i, j] = self.valid_transition(a, b)
        return mask

    def validate_sequence(self, labels: Sequence[str]) -> None:
        for lab in labels:
            if lab not in self.index:
                raise TaggingError(f"label {lab!r} not in scheme")
        if not labels:
            return
        if not self.valid_start(labels[0]):
            raise TaggingError(f"invalid start label {labels[0]!r}")
        if not self.valid_end(labels[-1]):
            raise TaggingError(f"invalid end label {labels[-1]!r}")
        for a, b in zip(labels, labels[1:]):
            if not self.valid_transition(a, b):
                raise TaggingError(f"invalid transition {a!r} -> {b!r}")


@dataclass
class TagSample:
    tokens: list[str]
    gold: list[str]

    def check(self, scheme: LabelScheme) -> None:
        if len(self.tokens) != len(self.gold):
            raise TaggingError("tokens and gold label lengths differ")
        scheme.validate_sequence(self.gold)


# --------------------------------------------------------------------------
# feature fusion


def _maximal_match(tokens: Sequence[str], contains, max_span: int = 8):
    """Greedy leftmost-longest spans (start, end) whose surface satisfies
    `contains`; unmatched positions yield (i, i+1) singleton spans."""
    spans = []
    i = 0
    L = len(tokens)
    while i < L:
        matched = None
        for j in range(min(L, i + max_span), i, -1):
            if contains(join_tokens(tokens[i:j])):
                matched = (i, j)
                break
        if matched is None:
            matched = (i, i + 1)
        spans.append(matched)
        i = matched[1]
    return spans


def _bmes(width: int) -> list[str]:
    if width == 1:
        return ["S"]
    return ["B"] + ["M"] * (width - 2) + ["E"]


def softword_features(tokens: Sequence[str], lexicon: Lexicon) -> list[str]:
    """BMES position of each token within its lexicon softword; S outside."""
    out: list[str] = []
    for start, end in _maximal_match(tokens, lambda s: s in lexicon):
        out.extend(_bmes(end - start))
    return out


def dict_features(tokens: Sequence[str], dictionary: TypedDictionary) -> list[str]:
    """Typed BMES#type labels for maximal dictionary matches, O elsewhere."""
    out: list[str] = []
    for start, end in _maximal_match(tokens, lambda s: s in dictionary):
        typ = dictionary.get(join_tokens(tokens[start:end]))
        if typ is None:
            out.extend(["O"] * (end - start))
        else:
            out.extend(f"{pos}#{typ}" for pos in _bmes(end - start))
    return out


class HashedWindowEmbedder:
    """Deterministic contextual features from a hashed (prev, token, next) window."""

    def __init__(self, dim: int = 32, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, tuple[int, float]] = {}

    def _slot(self, feature: str) -> tuple[int, float]:
        hit = self._cache.get(feature)
        if hit is None:
            digest = hashlib.blake2b(f"{self.seed}:{feature}".encode("utf-8"), digest_size=8).digest()
            value = int.from_bytes(digest, "little")
            hit = (value % self.dim, 1.0 if (value >> 32) & 1 else -1.0)
            self._cache[feature] = hit
        return hit

    def embed_sentence(self, tokens: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(tokens), self.dim))
        for i, tok in enumerate(tokens):
            prev = tokens[i - 1] if i > 0 else "^"
            nxt = tokens[i + 1] if i + 1 < len(tokens) else "$"
            for feat in (f"t={tok}", f"p={prev}", f"n={nxt}", f"pt={prev}|{tok}", f"tn={tok}|{nxt}"):
                idx, sign = self._slot(feat)
                out[i, idx] += sign
        return out


@dataclass
class FusedFeatures:
    matrix: np.ndarray  # (n_tokens, dim_z + dim_e)
    dim_z: int
    softword_labels: list[str]
    dict_labels: list[str]


class FeatureExtractor:
    """Builds x_i = z_i ++ one-hot(softword) ++ one-hot(dict) ++ slot block."""

    def __init__(
        self,
        scheme: LabelScheme,
        embedder=None,
        lexicon: Lexicon | None = None,
        dictionary: TypedDictionary | None = None,
        slot_dim: int = 16,
        seed: int = 0,
    ):
        self.scheme = scheme
        self.embedder = embedder or HashedWindowEmbedder(seed=seed)
        self.lexicon = lexicon or Lexicon(set())
        self.dictionary = dictionary or TypedDictionary({})
        self.slot_dim = slot_dim
        self.seed = seed
        rng = np.random.default_rng(seed)
        self._soft_emb = {lab: rng.normal(size=slot_dim) for lab in SOFTWORD_LABELS}
        self._dict_emb = {lab: rng.normal(size=slot_dim) for lab in scheme.labels}

    @property
    def dim(self) -> int:
        return self.embedder.dim + len(SOFTWORD_LABELS) + len(self.scheme) + self.slot_dim

    def fuse(self, tokens: Sequence[str]) -> FusedFeatures:
        z = self.embedder.embed_sentence(tokens)
        if z.shape[0] != len(tokens):
            raise TaggingError(
                f"embedder returned {z.shape[0]} rows for {len(tokens)} tokens"
            )
        soft = softword_features(tokens, self.lexicon)
        dic = dict_features(tokens, self.dictionary)
        n_soft, n_dict = len(SOFTWORD_LABELS), len(self.scheme)
        rows = []
        for i in range(len(tokens)):
            soft_onehot = np.zeros(n_soft)
            soft_onehot[SOFTWORD_LABELS.index(soft[i])] = 1.0
            dict_onehot = np.zeros(n_dict)
            dict_onehot[self.scheme.index[dic[i]]] = 1.0
            slot = self._soft_emb[soft[i]] + self._dict_emb[dic[i]]
            rows.append(np.concatenate([z[i], soft_onehot, dict_onehot, slot]))
        return FusedFeatures(
            matrix=np.stack(rows) if rows else np.zeros((0, self.dim)),
            dim_z=z.shape[1] if z.ndim == 2 else self.embedder.dim,
            softword_labels=soft,
            dict_labels=dic,
        )


def fuse_features(tokens, embedder, lexicon, dictionary, scheme, slot_dim=16, seed=0) -> FusedFeatures:
    extractor = FeatureExtractor(scheme, embedder, lexicon, dictionary, slot_dim, seed)
    return extractor.fuse(tokens)


# --------------------------------------------------------------------------
# model, decoding, training


class TaggerModel:
    def __init__(self, scheme: LabelScheme, dim: int, seed: int = 0):
        self.scheme = scheme
        self.dim = dim
        self.seed = seed
        n = len(scheme)
        self.emissions = np.zeros((n, dim))
        self.transitions = np.zeros((n, n))
        self._mask = scheme.transition_mask()

    def masked_transitions(self) -> np.ndarray:
        return np.where(self._mask, self.transitions, NEG_INF)

    # persistence: load(save(m)) is byte-identical because serialization is
    # canonical (sorted keys, repr floats, -inf stored as null)

    def to_json(self) -> str:
        trans = [
            [None if not self._mask[i, j] else self.transitions[i, j] for j in range(len(self.scheme))]
            for i in range(len(self.scheme))
        ]
        return json.dumps(
            {
                "format": "kgforge-tagger v1",
                "property_types": self.scheme.property_types,
                "dim": self.dim,
                "seed": self.seed,
                "emissions": self.emissions.tolist(),
                "transitions": trans,
            },
            sort_keys=True,
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, text: str) -> "TaggerModel":
        data = json.loads(text)
        if data.get("format") != "kgforge-tagger v1":
            raise TaggingError(f"unsupported model format: {data.get('format')!r}")
        model = cls(LabelScheme(data["property_types"]), data["dim"], data["seed"])
        model.emissions = np.array(data["emissions"], dtype=float)
        model.transitions = np.array(
            [[0.0 if v is None else v for v in row] for row in data["transitions"]]
        )
        return model

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path: str) -> "TaggerModel":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(f.read())


def decode(model: TaggerModel, tokens: Sequence[str], features: FusedFeatures) -> list[str]:
    """Viterbi-optimal labels; ties break toward the lowest label index."""
    L = len(tokens)
    if L == 0:
        return []
    scheme = model.scheme
    n = len(scheme)
    emit = features.matrix @ model.emissions.T  # (L, n)
    trans = model.masked_transitions()
    start_ok = np.array([scheme.valid_start(lab) for lab in scheme.labels])
    end_ok = np.array([scheme.valid_end(lab) for lab in scheme.labels])

    delta = np.where(start_ok, emit[0], NEG_INF)
    back = np.zeros((L, n), dtype=int)
    for i in range(1, L):
        scores = delta[:, None] + trans  # scores[prev, cur]
        back[i] = np.argmax(scores, axis=0)  # first max = lowest prev index
        delta = scores[back[i], np.arange(n)] + emit[i]
    final = np.where(end_ok, delta, NEG_INF)
    best = int(np.argmax(final))
    path = [best]
    for i in range(L - 1, 0, -1):
        path.append(int(back[i][path[-1]]))
    return [scheme.labels[i] for i in reversed(path)]


def train(
    samples: Sequence[TagSample],
    scheme: LabelScheme,
    extractor: FeatureExtractor,
    epochs: int = 5,
    seed: int = 0,
) -> TaggerModel:
    """Averaged structured perceptron; deterministic for a fixed sample order."""
    if epochs < 1:
        raise TaggingError(f"epochs must be >= 1, got {epochs}")
    for idx, s in enumerate(samples):
        try:
            s.check(scheme)
        except TaggingError as e:
            raise TaggingError(f"sample {idx}: {e}") from e

    model = TaggerModel(scheme, extractor.dim, seed=seed)
    fused = [extractor.fuse(s.tokens) for s in samples]
    sum_e = np.zeros_like(model.emissions)
    sum_t = np.zeros_like(model.transitions)
    steps = 0
    for _ in range(epochs):
        for s, feats in zip(samples, fused):
            pred = decode(model, s.tokens, feats)
            if pred != s.gold:
                for i, (g, p) in enumerate(zip(s.gold, pred)):
                    if g != p:
                        gi, pi = scheme.index[g], scheme.index[p]
                        model.emissions[gi] += feats.matrix[i]
                        model.emissions[pi] -= feats.matrix[i]
                for (ga, gb), (pa, pb) in zip(
                    zip(s.gold, s.gold[1:]), zip(pred, pred[1:])
                ):
                    if (ga, gb) != (pa, pb):
                        model.transitions[scheme.index[ga], scheme.index[gb]] += 1.0
                        model.transitions[scheme.index[pa], scheme.index[pb]] -= 1.0
            sum_e += model.emissions
            sum_t += model.transitions
            steps += 1
    model.emissions = sum_e / steps
    model.transitions = sum_t / steps
    return model


# --------------------------------------------------------------------------
# entities and evaluation

Entity = tuple[str, str, tuple[int, int]]  # (surface, property_type, span)


def extract_entities(tokens: Sequence[str], labels: Sequence[str]) -> list[Entity]:
    """One entity per maximal B..E or S group; validates external label input."""
    if len(tokens) != len(labels):
        raise TaggingError("tokens and labels lengths differ")
    out: list[Entity] = []
    i = 0
    while i < len(labels):
        pos, typ = LabelScheme.split(labels[i])
        if pos == "S":
            out.append((join_tokens(tokens[i:i + 1]), typ, (i, i + 1)))
            i += 1
        elif pos == "B":
            j = i + 1
            while j < len(labels):
                p2, t2 = LabelScheme.split(labels[j])
                if t2 != typ or p2 not in ("M", "E"):
                    raise TaggingError(f"unclosed span at {i}: {labels[i]!r}..{labels[j]!r}")
                if p2 == "E":
                    break
                j += 1
            if j == len(labels):
                raise TaggingError(f"unclosed span at {i}")
            out.append((join_tokens(tokens[i:j + 1]), typ, (i, j + 1)))
            i = j + 1
        elif pos == "O":
            i += 1
        else:
            raise TaggingError(f"stray {labels[i]!r} at position {i}")
    return out


def entities_to_labels(n_tokens: int, entities: Iterable[Entity]) -> list[str]:
    labels = ["O"] * n_tokens
    for _, typ, (start, end) in entities:
        for pos, k in zip(_bmes(end - start), range(start, end)):
            labels[k] = f"{pos}#{typ}"
    return labels


def read_tag_samples_jsonl(path: str) -> list[TagSample]:
    """One JSON object per line: tokens (array) and labels (array)."""
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
                out.append(TagSample(tokens=list(data["tokens"]), gold=list(data["labels"])))
            except (ValueError, KeyError, TypeError) as e:
                raise TaggingError(f"{path}:{lineno}: bad training sample: {e}") from e
    return out


def write_tag_samples_jsonl(samples: Iterable[TagSample], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in samples:
            f.write(json.dumps({"tokens": s.tokens, "labels": s.gold},
                               sort_keys=True, ensure_ascii=False) + "\n")


@dataclass
class Tagger:
    """A trained model bundled with the extractor that featurized it."""

    model: TaggerModel
    extractor: FeatureExtractor

    def tag(self, tokens: Sequence[str]) -> list[str]:
        return decode(self.model, tokens, self.extractor.fuse(tokens))

    def entities(self, tokens: Sequence[str]) -> list[Entity]:
        return extract_entities(tokens, self.tag(tokens))


@dataclass
class DictionaryTagger:
    """Span tagging by typed-dictionary maximal match alone; the zero-training
    fallback used when no model file is configured."""

    dictionary: TypedDictionary

    def tag(self, tokens: Sequence[str]) -> list[str]:
        return dict_features(tokens, self.dictionary)

    def entities(self, tokens: Sequence[str]) -> list[Entity]:
        return extract_entities(tokens, self.tag(tokens))


def evaluate(
    model: TaggerModel, samples: Sequence[TagSample], extractor: FeatureExtractor
) -> tuple[float, float, float]:
    """Entity-level precision/recall/F1 with exact span+type matching."""
    if not samples:
        raise TaggingError("cannot evaluate on an empty sample set")
    tp = n_pred = n_gold = 0
    for s in samples:
        pred = decode(model, s.tokens, extractor.fuse(s.tokens))
        pred_ents = {(e[1], e[2]) for e in extract_entities(s.tokens, pred)}
        gold_ents = {(e[1], e[2]) for e in extract_entities(s.tokens, s.gold)}
        tp += len(pred_ents & gold_ents)
        n_pred += len(pred_ents)
        n_gold += len(gold_ents)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1
