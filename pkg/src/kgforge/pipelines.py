"""Mining pipelines and the human-in-the-loop annotation queue.

Four flows produce knowledge candidates: POI mining and user problem mining
over phrase-mining output, item property-value mining over QA pairs, and
relational mining over co-mention sentences.  Candidates above a score
threshold enter the annotation queue; only human-accepted tasks are written
to the knowledge graph, always with sentence evidence and the classifier
score attached.  Task identity is a content hash, so re-running a pipeline
over the same inputs enqueues nothing new.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Iterable, Sequence

import numpy as np

from . import phrase_mining as pm
from . import relation_extraction as rx
from .corpus import (
    CorpusHandle,
    Gram,
    Lexicon,
    is_punctuation_token,
    join_tokens,
    tokenize,
)
from .kg_store import ConceptNode, IPVRecord, KnowledgeGraph, Triple
from .sequence_tagger import Tagger

TASK_KINDS = ("phrase", "poi", "problem", "relation")
TASK_LABELS = ("accept", "reject")

DEFAULT_NEGATION_CUES = frozenset({"not", "no", "without", "never", "不", "没", "没有", "无", "非"})
DEFAULT_STOPWORDS = frozenset({"的", "了", "是", "和", "the", "a", "an", "of", "and", "is"})
_URL_RE = re.compile(r"^(https?|www)\b", re.IGNORECASE)


class PipelineError(Exception):
    pass


class UnknownTaskError(PipelineError):
    pass


class AlreadyLabeledError(PipelineError):
    """Relabeling without an explicit override."""


# --------------------------------------------------------------------------
# serialization templates


@dataclass
class SerializedSample:
    text: str
    kind: str


def _check_template_parts(*parts: str) -> None:
    for part in parts:
        if not part or not part.strip():
            raise PipelineError("template parts must be non-empty")
        if "[SEP]" in part or "[CLS]" in part:
            raise PipelineError(f"template part {part!r} contains a reserved delimiter")


def serialize_poi_sample(phrase: str, leaf_category: str) -> SerializedSample:
    """Phrase plus its leaf category as classifier input."""
    _check_template_parts(phrase, leaf_category)
    return SerializedSample(text=f"[CLS] {phrase} [SEP] {leaf_category} [SEP]", kind="poi")


def serialize_problem_sample(phrase: str, sentence: str) -> SerializedSample:
    """Phrase plus one sentence it occurs in."""
    _check_template_parts(phrase, sentence)
    return SerializedSample(text=f"[CLS] {phrase} [SEP] {sentence} [SEP]", kind="problem")


def parse_sample(text: str) -> tuple[str, str]:
    m = re.fullmatch(r"\[CLS\] (.+?) \[SEP\] (.+?) \[SEP\]", text)
    if m is None:
        raise PipelineError(f"not a serialized sample: {text!r}")
    return m.group(1), m.group(2)


# --------------------------------------------------------------------------
# pluggable sample classifiers


class ConstantScorer:
    def __init__(self, probability: float = 0.5):
        self.p = probability

    def probability(self, text: str) -> float:
        return self.p


class TextClassifier:
    """Logistic regression over hashed character n-grams (n = 1..3)."""

    DIM = 256

    def __init__(self, seed: int = 0, weights: np.ndarray | None = None):
        self.seed = seed
        self.weights = np.zeros(self.DIM + 1) if weights is None else weights

    def _features(self, text: str) -> np.ndarray:
        vec = np.zeros(self.DIM)
        for n in (1, 2, 3):
            for i in range(len(text) - n + 1):
                digest = hashlib.blake2b(
                    f"{self.seed}:{text[i:i + n]}".encode("utf-8"), digest_size=8
                ).digest()
                value = int.from_bytes(digest, "little")
                vec[value % self.DIM] += 1.0 if (value >> 33) & 1 else -1.0
        return vec

    def probability(self, text: str) -> float:
        z = float(self._features(text) @ self.weights[:-1] + self.weights[-1])
        return 1.0 / (1.0 + math.exp(-z))

    def train(self, texts: Sequence[str], labels: Sequence[int],
              iterations: int = 300, learning_rate: float = 0.3, l2: float = 1e-4) -> "TextClassifier":
        if set(labels) != {0, 1}:
            raise PipelineError(f"training needs both labels, got {sorted(set(labels))}")
        X = np.stack([self._features(t) for t in texts])
        X = np.hstack([X, np.ones((len(texts), 1))])
        y = np.array(labels, dtype=float)
        w = np.zeros(X.shape[1])
        for _ in range(iterations):
            p = 1.0 / (1.0 + np.exp(-(X @ w)))
            w -= learning_rate * (X.T @ (p - y) / len(y) + l2 * w)
        self.weights = w
        return self


# --------------------------------------------------------------------------
# annotation queue


def task_id_for(kind: str, payload: str, context: str) -> str:
    digest = hashlib.sha1(f"{kind}\x00{payload}\x00{context}".encode("utf-8")).hexdigest()
    return digest[:16]


@dataclass
class AnnotationTask:
    id: str
    kind: str
    payload: str
    context: str
    classifier_score: float
    label: str | None = None
    annotator: str | None = None
    labeled_at: str | None = None

    @property
    def status(self) -> str:
        return self.label or "pending"

    def to_dict(self) -> dict:
        return {
            "id": self.id, "kind": self.kind, "payload": self.payload,
            "context": self.context, "classifier_score": self.classifier_score,
            "label": self.label, "annotator": self.annotator, "labeled_at": self.labeled_at,
        }


class AnnotationQueue:
    """Content-addressed review tasks; first label wins unless overridden."""

    def __init__(self) -> None:
        self.tasks: dict[str, AnnotationTask] = {}

    def enqueue(self, kind: str, payload: str, context: str, classifier_score: float) -> AnnotationTask | None:
        """Add a task; returns None when the same candidate is already queued."""
        if kind not in TASK_KINDS:
            raise PipelineError(f"unknown task kind {kind!r}")
        tid = task_id_for(kind, payload, context)
        if tid in self.tasks:
            return None
        task = AnnotationTask(id=tid, kind=kind, payload=payload, context=context,
                              classifier_score=classifier_score)
        self.tasks[tid] = task
        return task

    def label(self, task_id: str, label: str, annotator: str | None = None,
              override: bool = False, when: str | None = None) -> AnnotationTask:
        task = self.tasks.get(task_id)
        if task is None:
            raise UnknownTaskError(f"unknown task id {task_id!r}")
        if label not in TASK_LABELS:
            raise PipelineError(f"label must be accept or reject, got {label!r}")
        if task.label is not None and not override:
            raise AlreadyLabeledError(f"task {task_id!r} already labeled {task.label!r}")
        task.label = label
        task.annotator = annotator
        task.labeled_at = when or datetime.now(timezone.utc).isoformat()
        return task

    def select(self, kind: str | None = None, status: str | None = None) -> list[AnnotationTask]:
        out = []
        for task in self.tasks.values():
            if kind is not None and task.kind != kind:
                continue
            if status is not None and task.status != status:
                continue
            out.append(task)
        out.sort(key=lambda t: t.id)
        return out

    def accepted(self, kind: str) -> list[AnnotationTask]:
        return self.select(kind=kind, status="accept")

    # ------------------------------------------------------------ files

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for task in self.select():
                f.write(json.dumps(task.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str) -> "AnnotationQueue":
        queue = cls()
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    data = json.loads(line)
                    task = AnnotationTask(**data)
                except (ValueError, TypeError) as e:
                    raise PipelineError(f"{path}:{lineno}: bad task record: {e}") from e
                queue.tasks[task.id] = task
        return queue


def queue_export(queue: AnnotationQueue, path: str, kind: str | None = None,
                 status: str | None = None, sample_rate: float | None = None,
                 seed: int = 0) -> int:
    """Write tasks as JSONL sorted by id; sample_rate draws a deterministic
    spot-check subset (None exports everything)."""
    tasks = queue.select(kind=kind, status=status)
    if sample_rate is not None:
        if not 0.0 < sample_rate <= 1.0:
            raise PipelineError(f"sample_rate must be in (0, 1], got {sample_rate}")
        keep = max(1, round(len(tasks) * sample_rate)) if tasks else 0
        rng = np.random.default_rng(seed)
        idx = sorted(rng.choice(len(tasks), size=keep, replace=False)) if tasks else []
        tasks = [tasks[i] for i in idx]
    with open(path, "w", encoding="utf-8") as f:
        for task in tasks:
            f.write(json.dumps({
                "id": task.id, "kind": task.kind, "payload": task.payload,
                "context": task.context, "classifier_score": task.classifier_score,
            }, sort_keys=True, ensure_ascii=False) + "\n")
    return len(tasks)


def queue_import(queue: AnnotationQueue, path: str) -> tuple[int, list[str]]:
    """Apply labels from JSONL lines {id, label, annotator, override?}.

    Bad lines are reported but do not block the rest; returns (applied, errors).
    """
    applied = 0
    errors: list[str] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except ValueError as e:
                errors.append(f"line {lineno}: invalid JSON: {e}")
                continue
            label = data.get("label")
            if label is None:
                continue  # unlabeled export lines round-trip as no-ops
            try:
                queue.label(
                    data["id"], label,
                    annotator=data.get("annotator"),
                    override=bool(data.get("override", False)),
                )
                applied += 1
            except (PipelineError, KeyError) as e:
                errors.append(f"line {lineno}: {e}")
    return applied, errors


def recycle_training_data(queue: AnnotationQueue, kind: str, path: str | None = None) -> list[dict]:
    """Labeled tasks as binary classifier training rows (accept=1, reject=0)."""
    rows = [
        {"text": t.payload, "label": 1 if t.label == "accept" else 0}
        for t in queue.select(kind=kind)
        if t.label is not None
    ]
    if path is not None:
        with open(path, "w", encoding="utf-8") as f:
            for row in rows:
                f.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
    return rows


# --------------------------------------------------------------------------
# shared pipeline pieces


def heuristic_candidate_filter(tokens: Gram, stopwords: frozenset[str] = DEFAULT_STOPWORDS) -> bool:
    """Drop URL-ish, all-numeric and pure-stopword candidates."""
    if any(_URL_RE.match(t) for t in tokens):
        return False
    if all(t.replace(".", "").isdigit() for t in tokens):
        return False
    if all(t in stopwords for t in tokens):
        return False
    return True


def polarity(sentence_tokens: Sequence[str], value_span: tuple[int, int],
             negation_lexicon: Iterable[str] | None = None, window: int = 4) -> str:
    """negative iff a negation cue sits within `window` tokens before the
    span with no sentence boundary in between."""
    start, end = value_span
    if not (0 <= start < end <= len(sentence_tokens)):
        raise PipelineError(f"value span {value_span} out of bounds")
    if window < 1:
        raise PipelineError(f"window must be >= 1, got {window}")
    cues = frozenset(negation_lexicon) if negation_lexicon is not None else DEFAULT_NEGATION_CUES
    for i in range(start - 1, max(-1, start - 1 - window), -1):
        token = sentence_tokens[i]
        if is_punctuation_token(token):
            break
        if token in cues:
            return "negative"
    return "positive"


@dataclass
class SynonymTable:
    """Per-property surface -> canonical surface maps; canonicals are fixed points."""

    tables: dict[str, dict[str, str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for prop, mapping in self.tables.items():
            for canonical in mapping.values():
                if mapping.get(canonical, canonical) != canonical:
                    raise PipelineError(
                        f"canonical {canonical!r} for property {prop!r} is not a fixed point"
                    )


def normalize_value(surface: str, property_name: str, synonyms: SynonymTable) -> str:
    return synonyms.tables.get(property_name, {}).get(surface, surface)


@dataclass
class GateDecision:
    accepted: bool
    reason: str


def cpv_quality_gate(extracted, cpv, freq: int, min_freq: int) -> GateDecision:
    """extracted: (item, property, value_id_or_None, polarity); cpv may be None."""
    item, prop, value_id, _polarity = extracted
    if cpv is None:
        return GateDecision(False, f"no CPV record for ({item}, {prop})")
    if cpv.enumerable:
        if value_id is not None and value_id in cpv.allowed_values:
            return GateDecision(True, "allowed value")
        return GateDecision(False, f"value {value_id!r} not in allowed set")
    if freq >= min_freq:
        return GateDecision(True, f"frequency {freq} >= {min_freq}")
    return GateDecision(False, f"frequency {freq} < {min_freq}")


@dataclass
class QAPair:
    question: str
    answer: str
    item_id: str | None = None
    relevant: bool = True

    def __post_init__(self) -> None:
        if not self.question.strip() or not self.answer.strip():
            raise PipelineError("QA pair sides must be non-empty")


# --------------------------------------------------------------------------
# phrase / POI / problem pipelines


@dataclass
class PhrasePipelineConfig:
    mining: pm.MiningConfig = field(default_factory=pm.MiningConfig)
    queue_threshold: float = 0.0
    default_category: str = "general"
    auto_accept_at: float = 1.01  # scores >= this skip review; off by default


AutoLabeler = Callable[[AnnotationTask], str | None]


def _doc_categories(corpus: CorpusHandle) -> dict[str, str | None]:
    return {
        d.id: (d.category_path[-1] if d.category_path else None)
        for d in corpus.documents
    }


def _first_occurrence(corpus: CorpusHandle, grams: set[Gram]):
    """gram -> (doc_id, sentence_index, sentence tokens) at first occurrence."""
    remaining = set(grams)
    found = {}
    by_first: dict[str, list[Gram]] = {}
    for g in grams:
        by_first.setdefault(g[0], []).append(g)
    for sent_idx, sent in enumerate(corpus.sentences()):
        if not remaining:
            break
        toks = sent.tokens
        for i, tok in enumerate(toks):
            for g in by_first.get(tok, ()):
                if g in remaining and tuple(toks[i:i + len(g)]) == g:
                    found[g] = (sent.doc_id, sent_idx, toks)
                    remaining.discard(g)
    return found


def _apply_labels(queue: AnnotationQueue, tasks: Iterable[AnnotationTask],
                  auto_labeler: AutoLabeler | None) -> None:
    if auto_labeler is None:
        return
    for task in tasks:
        decision = auto_labeler(task)
        if decision is not None:
            queue.label(task.id, decision, annotator="auto")


def _mined_phrase_candidates(corpus, lexicon, config: PhrasePipelineConfig):
    outcome = pm.mine(corpus, lexicon, config.mining)
    finals = [c for c in outcome.final if heuristic_candidate_filter(c.tokens)]
    occurrence = _first_occurrence(corpus, {c.tokens for c in finals})
    return outcome, finals, occurrence


def poi_pipeline(corpus: CorpusHandle, kg: KnowledgeGraph, queue: AnnotationQueue,
                 lexicon: Lexicon, config: PhrasePipelineConfig,
                 classifier=None, auto_labeler: AutoLabeler | None = None) -> list[Triple]:
    """Mine phrases, score serialized (phrase, leaf category) samples, queue
    candidates, and write accepted POIs as Category-has_poi triples."""
    classifier = classifier or ConstantScorer(0.5)
    _, finals, occurrence = pm._run_stage("mine", lambda: _mined_phrase_candidates(corpus, lexicon, config))
    categories = _doc_categories(corpus)
    new_tasks = []
    for cand in finals:
        hit = occurrence.get(cand.tokens)
        if hit is None:
            continue
        doc_id, sent_idx, _toks = hit
        leaf = categories.get(doc_id) or config.default_category
        sample = serialize_poi_sample(cand.surface, leaf)
        score = classifier.probability(sample.text)
        if score >= config.queue_threshold:
            task = queue.enqueue("poi", sample.text, leaf, score)
            if task is not None:
                if score >= config.auto_accept_at:
                    queue.label(task.id, "accept", annotator="auto-threshold")
                else:
                    new_tasks.append(task)
    _apply_labels(queue, new_tasks, auto_labeler)

    written = []
    for task in queue.accepted("poi"):
        phrase, leaf = parse_sample(task.payload)
        sentences = tokenize(phrase)
        hit = occurrence.get(tuple(sentences[0])) if sentences else None
        evidence = f"{hit[0]}#{hit[1]}" if hit else f"task:{task.id}"
        cat_id = kg.upsert_concept(ConceptNode(id=f"cat:{leaf}", kind="Category", surface=leaf))
        poi_id = kg.upsert_concept(ConceptNode(id=f"poi:{phrase}", kind="POI", surface=phrase))
        triple = Triple(head=cat_id, relation="has_poi", tail=poi_id,
                        provenance="mined", status="accepted",
                        evidence=evidence, classifier_score=task.classifier_score)
        kg.upsert_triple(triple)
        written.append(triple)
    return written


def problem_pipeline(chatlog_corpus: CorpusHandle, kg: KnowledgeGraph, queue: AnnotationQueue,
                     lexicon: Lexicon, config: PhrasePipelineConfig,
                     classifier=None, auto_labeler: AutoLabeler | None = None) -> list[Triple]:
    """Mine problem phrases from chatlog; context is the first sentence the
    phrase occurs in; accepted problems attach to the User concept."""
    classifier = classifier or ConstantScorer(0.5)
    _, finals, occurrence = pm._run_stage("mine", lambda: _mined_phrase_candidates(chatlog_corpus, lexicon, config))
    new_tasks = []
    for cand in finals:
        hit = occurrence.get(cand.tokens)
        if hit is None:
            continue  # no containing sentence, no d_p
        _doc, _idx, toks = hit
        sample = serialize_problem_sample(cand.surface, join_tokens(toks))
        score = classifier.probability(sample.text)
        if score >= config.queue_threshold:
            task = queue.enqueue("problem", sample.text, join_tokens(toks), score)
            if task is not None:
                if score >= config.auto_accept_at:
                    queue.label(task.id, "accept", annotator="auto-threshold")
                else:
                    new_tasks.append(task)
    _apply_labels(queue, new_tasks, auto_labeler)

    written = []
    user_id = kg.upsert_concept(ConceptNode(id="user", kind="User", surface="user"))
    for task in queue.accepted("problem"):
        phrase, sentence = parse_sample(task.payload)
        prob_id = kg.upsert_concept(ConceptNode(id=f"prob:{phrase}", kind="Problem", surface=phrase))
        triple = Triple(head=user_id, relation="has_problem", tail=prob_id,
                        provenance="mined", status="accepted",
                        evidence=sentence, classifier_score=task.classifier_score)
        kg.upsert_triple(triple)
        written.append(triple)
    return written


# --------------------------------------------------------------------------
# IPV pipeline


@dataclass
class IPVPipelineConfig:
    min_freq: int = 3
    polarity_window: int = 4
    negation_lexicon: frozenset[str] = DEFAULT_NEGATION_CUES
    denylist: frozenset[str] = frozenset({"发货", "物流", "快递", "退款", "shipping", "refund"})
    allowlist: frozenset[str] | None = None  # when set, a pair must mention one of these
    synonyms: SynonymTable = field(default_factory=SynonymTable)


def _qa_sentences(pair: QAPair) -> list[list[str]]:
    return [s for text in (pair.question, pair.answer) for s in tokenize(text)]


def ipv_pipeline(qa_pairs: Sequence[QAPair], tagger: Tagger, kg: KnowledgeGraph,
                 config: IPVPipelineConfig) -> list[IPVRecord]:
    """QA pairs -> NER spans -> polarity -> normalization -> CPV gate -> IPV."""
    def passes_filter(pair: QAPair) -> bool:
        text = pair.question + " " + pair.answer
        if any(term in text for term in config.denylist):
            return False
        if config.allowlist is not None and not any(term in text for term in config.allowlist):
            return False
        return True

    relevant = [p for p in qa_pairs if p.relevant and p.item_id is not None and passes_filter(p)]
    # first pass: extract mentions so non-enumerable gating can use frequencies
    mentions = []
    freq: Counter[tuple[str, str]] = Counter()
    for pair in relevant:
        for toks in _qa_sentences(pair):
            for surface, ptype, span in tagger.entities(toks):
                canonical = normalize_value(surface, ptype, config.synonyms)
                pol = polarity(toks, span, config.negation_lexicon, config.polarity_window)
                mentions.append((pair, ptype, canonical, pol))
                freq[(ptype, canonical)] += 1

    written: list[IPVRecord] = []
    seen: set[tuple[str, str, str]] = set()
    for pair, ptype, canonical, pol in mentions:
        item = kg.concepts.get(pair.item_id)
        if item is None or item.kind != "Item":
            continue
        prop = kg.find_by_surface("Property", ptype)
        if prop is None:
            continue
        value_node = kg.find_by_surface("Value", canonical)
        cpv = kg.cpv.get((item.category_scope, prop.id)) if item.category_scope else None
        decision = cpv_quality_gate(
            (item.id, prop.id, value_node.id if value_node else None, pol),
            cpv, freq[(ptype, canonical)], config.min_freq,
        )
        if not decision.accepted:
            continue
        if value_node is None:  # non-enumerable value passing on frequency
            value_node = kg.concepts[kg.upsert_concept(
                ConceptNode(id=f"val:{canonical}", kind="Value", surface=canonical)
            )]
        key = (item.id, prop.id, value_node.id)
        if key in seen:
            continue
        seen.add(key)
        record = IPVRecord(item=item.id, property=prop.id, value=value_node.id,
                           polarity=pol, provenance="mined", status="accepted")
        kg.upsert_ipv(record)
        written.append(record)
    return written


# --------------------------------------------------------------------------
# relation pipeline


@dataclass
class RelationPipelineConfig:
    relation: str = "cause"
    queue_threshold: float = 0.0


def find_mentions(tokens: Sequence[str], surfaces: dict[str, str]) -> list[tuple[int, int, str]]:
    """Leftmost-longest matches of any surface; returns (start, end, key)."""
    max_len = 8
    out = []
    i = 0
    while i < len(tokens):
        hit = None
        for j in range(min(len(tokens), i + max_len), i, -1):
            surf = join_tokens(tokens[i:j])
            if surf in surfaces:
                hit = (i, j, surfaces[surf])
                break
        if hit is None:
            i += 1
        else:
            out.append(hit)
            i = hit[1]
    return out


def relation_pipeline(content_corpus: CorpusHandle, kg: KnowledgeGraph, tagger: Tagger,
                      poi_dictionary: Lexicon, classifier: rx.RelationClassifier,
                      queue: AnnotationQueue, config: RelationPipelineConfig,
                      auto_labeler: AutoLabeler | None = None) -> list[Triple]:
    """Co-mention sentences -> anchored pairs -> classifier -> queue -> triples.

    cause: NER finds the property-value anchor, dictionary match the POI.
    need: problem surfaces from the store are matched instead of NER spans.
    """
    if config.relation not in ("cause", "need"):
        raise PipelineError(f"relation must be cause or need, got {config.relation!r}")
    poi_surfaces = {s: s for s in poi_dictionary.words}
    injection = kg.export_surface_triples()
    new_tasks = []
    # co-mention unit: natural sentences (weak punctuation does not split)
    natural = [
        (doc.id, toks)
        for doc in content_corpus.documents
        for toks in tokenize(doc.text, strong_only=True)
    ]
    for sent_idx, (doc_id, toks) in enumerate(natural):
        if config.relation == "cause":
            first_spans = [(sp[0], sp[1], surf) for surf, _t, sp in tagger.entities(toks)]
        else:
            problem_surfaces = {
                surf: kg.concepts[pid].surface
                for surf, pid in kg.surfaces_of_kind("Problem").items()
            }
            first_spans = find_mentions(toks, problem_surfaces)
        poi_spans = find_mentions(toks, poi_surfaces)
        for f_start, f_end, f_surface in first_spans:
            for p_start, p_end, p_surface in poi_spans:
                if f_end > p_start and p_end > f_start:
                    continue  # overlapping mention pair
                sentence = rx.AnchorSentence(
                    tokens=list(toks), span1=(f_start, f_end), span2=(p_start, p_end),
                    relation_label=config.relation,
                )
                score = rx.predict(classifier, sentence, injection)
                payload = json.dumps({
                    "tokens": list(toks), "span1": [f_start, f_end], "span2": [p_start, p_end],
                    "relation": config.relation,
                    "head_surface": join_tokens(toks[f_start:f_end]),
                    "tail_surface": join_tokens(toks[p_start:p_end]),
                }, ensure_ascii=False, sort_keys=True)
                context = f"{doc_id}#{sent_idx}:{join_tokens(toks)}"
                if score >= config.queue_threshold:
                    task = queue.enqueue("relation", payload, context, score)
                    if task is not None:
                        new_tasks.append(task)
    _apply_labels(queue, new_tasks, auto_labeler)

    written = []
    for task in queue.accepted("relation"):
        data = json.loads(task.payload)
        if data["relation"] != config.relation:
            continue
        head_surface, tail_surface = data["head_surface"], data["tail_surface"]
        if config.relation == "cause":
            head_node = kg.find_by_surface("Value", head_surface)
            if head_node is None:
                head_id = kg.upsert_concept(
                    ConceptNode(id=f"val:{head_surface}", kind="Value", surface=head_surface)
                )
            else:
                head_id = head_node.id
        else:
            head_node = kg.find_by_surface("Problem", head_surface)
            if head_node is None:
                head_id = kg.upsert_concept(
                    ConceptNode(id=f"prob:{head_surface}", kind="Problem", surface=head_surface)
                )
            else:
                head_id = head_node.id
        poi_node = kg.find_by_surface("POI", tail_surface)
        poi_id = poi_node.id if poi_node else kg.upsert_concept(
            ConceptNode(id=f"poi:{tail_surface}", kind="POI", surface=tail_surface)
        )
        triple = Triple(head=head_id, relation=config.relation, tail=poi_id,
                        provenance="mined", status="accepted",
                        evidence=task.context, classifier_score=task.classifier_score)
        kg.upsert_triple(triple)
        written.append(triple)
    return written
