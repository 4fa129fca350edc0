"""Relation extraction between two anchored concepts in a sentence.

The anchor spans are wrapped with "$" and "#" marker tokens, external triples
whose head matches an anchor are injected as branches with soft positions
that continue from the head's last token (main-sentence positions never
shift), and a pluggable classifier maps the injected sequence to a
probability that the target relation holds.  The default classifier is a
deterministic logistic model over hashed feature blocks, so any scorer
honoring the probability contract can replace it without changing callers.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import join_tokens, tokenize

RELATION_LABELS = ("cause", "need")
MARKER_SPAN1 = "$"
MARKER_SPAN2 = "#"


class RelationError(Exception):
    pass


@dataclass
class AnchorSentence:
    tokens: list[str]
    span1: tuple[int, int]
    span2: tuple[int, int]
    relation_label: str | None = None

    def __post_init__(self) -> None:
        for name, (a, b) in (("span1", self.span1), ("span2", self.span2)):
            if not (0 <= a < b <= len(self.tokens)):
                raise RelationError(f"{name} {a}..{b} out of bounds or empty")
        if self.span1[0] > self.span2[0]:
            self.span1, self.span2 = self.span2, self.span1
        if self.span1[1] > self.span2[0]:
            raise RelationError("anchor spans overlap")
        if self.relation_label is not None and self.relation_label not in RELATION_LABELS:
            raise RelationError(f"unknown relation label {self.relation_label!r}")

    @property
    def surface1(self) -> str:
        return join_tokens(self.tokens[self.span1[0]:self.span1[1]])

    @property
    def surface2(self) -> str:
        return join_tokens(self.tokens[self.span2[0]:self.span2[1]])


@dataclass
class MarkedSequence:
    tokens: list[str]
    original_index: list[int | None]  # None at marker positions
    span1: tuple[int, int]  # anchor token ranges in marked coordinates
    span2: tuple[int, int]
    source: AnchorSentence


def mark_anchors(sentence: AnchorSentence) -> MarkedSequence:
    """Insert "$" around span1 and "#" around span2, keeping an index map."""
    tokens: list[str] = []
    index: list[int | None] = []
    (s1, e1), (s2, e2) = sentence.span1, sentence.span2
    for i, tok in enumerate(sentence.tokens):
        if i == s1:
            tokens.append(MARKER_SPAN1)
            index.append(None)
        if i == s2:
            tokens.append(MARKER_SPAN2)
            index.append(None)
        tokens.append(tok)
        index.append(i)
        if i == e1 - 1:
            tokens.append(MARKER_SPAN1)
            index.append(None)
        if i == e2 - 1:
            tokens.append(MARKER_SPAN2)
            index.append(None)
    marked_span1 = (s1 + 1, e1 + 1)
    marked_span2 = (s2 + 3, e2 + 3)
    return MarkedSequence(tokens, index, marked_span1, marked_span2, sentence)


def strip_markers(marked: MarkedSequence) -> list[str]:
    return [t for t, i in zip(marked.tokens, marked.original_index) if i is not None]


@dataclass
class ExternalTriple:
    head: str
    relation: str
    tail: str


def query_triples(
    c1_surface: str, c2_surface: str, triples: Iterable[ExternalTriple]
) -> list[ExternalTriple]:
    """All triples headed by either anchor, in (relation, tail) order."""
    hits = [t for t in triples if t.head in (c1_surface, c2_surface)]
    hits.sort(key=lambda t: (t.relation, t.tail, t.head))
    return hits


@dataclass
class InjectedSequence:
    tokens: list[str]
    soft_positions: list[int]
    kinds: list[str]  # main | marker | relation | tail
    span1: tuple[int, int]  # anchor ranges in injected coordinates
    span2: tuple[int, int]
    source: AnchorSentence


def _tail_tokens(tail: str) -> list[str]:
    toks = [t for sent in tokenize(tail) for t in sent]
    return toks if toks else [tail]


def inject(marked: MarkedSequence, triples: Sequence[ExternalTriple]) -> InjectedSequence:
    """Append each triple's relation+tail tokens right after its head span.

    Main tokens keep their pre-injection positions; a branch's soft positions
    continue from its head's last token position + 1.
    """
    surface1 = join_tokens(marked.tokens[marked.span1[0]:marked.span1[1]])
    surface2 = join_tokens(marked.tokens[marked.span2[0]:marked.span2[1]])
    branches: dict[int, list[ExternalTriple]] = {}  # head span end -> triples
    for t in triples:
        if t.head == surface1:
            branches.setdefault(marked.span1[1], []).append(t)
        elif t.head == surface2:
            branches.setdefault(marked.span2[1], []).append(t)
        else:
            raise RelationError(f"triple head {t.head!r} matches no anchor")

    tokens: list[str] = []
    positions: list[int] = []
    kinds: list[str] = []
    span_map: dict[int, int] = {}
    for i, tok in enumerate(marked.tokens):
        span_map[i] = len(tokens)
        tokens.append(tok)
        positions.append(i)
        kinds.append("marker" if marked.original_index[i] is None else "main")
        for triple in branches.get(i + 1, ()):
            soft = i + 1
            tokens.append(triple.relation)
            positions.append(soft)
            kinds.append("relation")
            soft += 1
            for tail_tok in _tail_tokens(triple.tail):
                tokens.append(tail_tok)
                positions.append(soft)
                kinds.append("tail")
                soft += 1
    span_map[len(marked.tokens)] = len(tokens)

    def remap(span: tuple[int, int]) -> tuple[int, int]:
        return span_map[span[0]], span_map[span[0]] + (span[1] - span[0])

    return InjectedSequence(
        tokens=tokens,
        soft_positions=positions,
        kinds=kinds,
        span1=remap(marked.span1),
        span2=remap(marked.span2),
        source=marked.source,
    )


def strip_injection(injected: InjectedSequence) -> list[str]:
    """Drop markers and injected branches, recovering the original sentence."""
    return [t for t, k in zip(injected.tokens, injected.kinds) if k == "main"]


# --------------------------------------------------------------------------
# features and classifier

_BLOCK = 32  # hashed dims per feature block


def _hash_slot(seed: str, token: str) -> tuple[int, float]:
    digest = hashlib.blake2b(f"{seed}:{token}".encode("utf-8"), digest_size=8).digest()
    value = int.from_bytes(digest, "little")
    return value % _BLOCK, 1.0 if (value >> 33) & 1 else -1.0


def featurize_relation(injected: InjectedSequence) -> np.ndarray:
    """Deterministic blocks: between-anchor bag, anchor surfaces, injected
    tails, plus the normalized anchor distance."""
    src = injected.source
    between = np.zeros(_BLOCK)
    for tok, kind, pos in zip(injected.tokens, injected.kinds, range(len(injected.tokens))):
        if kind == "main" and injected.span1[1] <= pos < injected.span2[0]:
            idx, sign = _hash_slot("between", tok)
            between[idx] += sign
    anchors = np.zeros(_BLOCK)
    for surf in (src.surface1, src.surface2):
        idx, sign = _hash_slot("anchor", surf)
        anchors[idx] += sign
    tails = np.zeros(_BLOCK)
    for tok, kind in zip(injected.tokens, injected.kinds):
        if kind == "tail":
            idx, sign = _hash_slot("tail", tok)
            tails[idx] += sign
    distance = (src.span2[0] - src.span1[1]) / len(src.tokens)
    return np.concatenate([between, anchors, tails, [distance]])


FEATURE_DIM = 3 * _BLOCK + 1


@dataclass
class RelationSample:
    sentence: AnchorSentence
    label: int

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise RelationError(f"label must be 0 or 1, got {self.label!r}")


class RelationClassifier:
    """Logistic scorer over featurize_relation outputs; replaceable by any
    model that maps an injected sequence to a probability."""

    def __init__(self, seed: int = 0, weights: np.ndarray | None = None):
        self.seed = seed
        self.weights = np.zeros(FEATURE_DIM + 1) if weights is None else weights

    def probability(self, features: np.ndarray) -> float:
        z = float(features @ self.weights[:-1] + self.weights[-1])
        return 1.0 / (1.0 + math.exp(-z))

    def to_json(self) -> str:
        return json.dumps(
            {"format": "kgforge-relation v1", "seed": self.seed, "weights": self.weights.tolist()},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "RelationClassifier":
        data = json.loads(text)
        if data.get("format") != "kgforge-relation v1":
            raise RelationError(f"unsupported classifier format: {data.get('format')!r}")
        return cls(seed=data["seed"], weights=np.array(data["weights"], dtype=float))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path: str) -> "RelationClassifier":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(f.read())


def features_for(sentence: AnchorSentence, triples: Iterable[ExternalTriple]) -> np.ndarray:
    marked = mark_anchors(sentence)
    hits = query_triples(sentence.surface1, sentence.surface2, triples)
    return featurize_relation(inject(marked, hits))


def train_relation_classifier(
    samples: Sequence[RelationSample],
    triples: Iterable[ExternalTriple],
    seed: int = 0,
    iterations: int = 400,
    learning_rate: float = 0.5,
    l2: float = 1e-4,
) -> RelationClassifier:
    """Full-batch gradient descent on logistic loss; deterministic."""
    labels = {s.label for s in samples}
    if labels != {0, 1}:
        raise RelationError(f"training needs both labels, got {sorted(labels)}")
    triples = list(triples)
    X = np.stack([features_for(s.sentence, triples) for s in samples])
    X = np.hstack([X, np.ones((len(samples), 1))])
    y = np.array([s.label for s in samples], dtype=float)
    w = np.zeros(X.shape[1])
    for _ in range(iterations):
        p = 1.0 / (1.0 + np.exp(-(X @ w)))
        grad = X.T @ (p - y) / len(y) + l2 * w
        w -= learning_rate * grad
    return RelationClassifier(seed=seed, weights=w)


def predict(
    classifier: RelationClassifier,
    sentence: AnchorSentence,
    triples: Iterable[ExternalTriple],
) -> float:
    """Probability that the target relation holds between the two anchors."""
    return classifier.probability(features_for(sentence, triples))


# --------------------------------------------------------------------------
# labeled sample files


def write_samples_jsonl(samples: Sequence[RelationSample], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in samples:
            f.write(json.dumps({
                "tokens": s.sentence.tokens,
                "span1": list(s.sentence.span1),
                "span2": list(s.sentence.span2),
                "relation": s.sentence.relation_label,
                "label": s.label,
            }, ensure_ascii=False, sort_keys=True) + "\n")


def read_samples_jsonl(path: str) -> list[RelationSample]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                sentence = AnchorSentence(
                    tokens=list(obj["tokens"]),
                    span1=tuple(obj["span1"]),
                    span2=tuple(obj["span2"]),
                    relation_label=obj.get("relation"),
                )
                out.append(RelationSample(sentence=sentence, label=int(obj["label"])))
            except (KeyError, ValueError, TypeError) as e:
                raise RelationError(f"{path}:{lineno}: bad sample: {e}") from e
    return out
