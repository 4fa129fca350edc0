"""Corpus ingestion, tokenization and n-gram statistics.

Raw documents (chatlog turns, item detail pages, articles) are split into
sentences at punctuation, tokenized per character for CJK text and per
whitespace word otherwise, and counted into an :class:`NGramTable`.  The
table backs every statistic feature used by phrase mining: PMI, left/right
branching entropy, information content and tf-idf.  All logarithms are
natural.
"""
from __future__ import annotations

import json
import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

Gram = tuple[str, ...]

SOURCES = ("chatlog", "detail_page", "article", "baike")


class CorpusError(Exception):
    """Invalid corpus input (duplicate ids, empty corpus, bad JSONL)."""


class StatisticUndefinedError(CorpusError):
    """A statistic was requested for a gram with a zero count somewhere."""


@dataclass
class Document:
    id: str
    text: str
    source: str = "article"
    category_path: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusError("document id must be non-empty")
        if not self.text.strip():
            raise CorpusError(f"document {self.id!r} has empty text")
        if self.source not in SOURCES:
            raise CorpusError(f"document {self.id!r} has unknown source {self.source!r}")


@dataclass
class TokenizedSentence:
    doc_id: str
    tokens: list[str]
    pos_tags: list[str] | None = None

    def __post_init__(self) -> None:
        if not self.tokens:
            raise CorpusError("sentence must have at least one token")
        if self.pos_tags is not None and len(self.pos_tags) != len(self.tokens):
            raise CorpusError("pos_tags length must match tokens length")


@dataclass
class Lexicon:
    """A plain word list; surfaces may span several tokens (joined form)."""

    words: set[str]

    def __post_init__(self) -> None:
        if any(not w for w in self.words):
            raise CorpusError("lexicon must not contain empty strings")

    def __contains__(self, surface: str) -> bool:
        return surface in self.words

    def __len__(self) -> int:
        return len(self.words)


@dataclass
class TypedDictionary:
    """Surface strings mapped to a property-type label."""

    entries: dict[str, str]

    def __post_init__(self) -> None:
        if any(not s for s in self.entries):
            raise CorpusError("dictionary must not contain empty surfaces")

    def get(self, surface: str) -> str | None:
        return self.entries.get(surface)

    def __contains__(self, surface: str) -> bool:
        return surface in self.entries

    def __len__(self) -> int:
        return len(self.entries)


# --------------------------------------------------------------------------
# tokenization


def is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return (
        0x4E00 <= cp <= 0x9FFF
        or 0x3400 <= cp <= 0x4DBF
        or 0xF900 <= cp <= 0xFAFF
        or 0x3040 <= cp <= 0x30FF  # kana
    )


def _is_breaker(ch: str) -> bool:
    # Punctuation and symbols terminate sentences and are never tokens.
    return unicodedata.category(ch)[0] in ("P", "S")


def is_punctuation_token(token: str) -> bool:
    """True for tokens made entirely of sentence-breaking characters."""
    return bool(token) and all(_is_breaker(ch) for ch in token)


STRONG_TERMINATORS = frozenset("。．.!?！？;；…\n")


def tokenize(text: str, strong_only: bool = False) -> list[list[str]]:
    """Split text into sentences of tokens.

    Sentences are maximal punctuation-free runs.  CJK codepoints become
    single-character tokens; Latin/digit runs become whitespace-delimited
    word tokens; both rules apply within mixed text.  With strong_only,
    only full-stop-class punctuation ends a sentence and the rest merely
    separates words (relational mining reads whole natural sentences).
    """
    sentences: list[list[str]] = []
    current: list[str] = []
    word: list[str] = []

    def flush_word() -> None:
        if word:
            current.append("".join(word))
            word.clear()

    def flush_sentence() -> None:
        flush_word()
        if current:
            sentences.append(list(current))
            current.clear()

    for ch in text:
        if _is_breaker(ch):
            if strong_only and ch not in STRONG_TERMINATORS:
                flush_word()
            else:
                flush_sentence()
        elif ch.isspace():
            flush_word()
        elif is_cjk(ch):
            flush_word()
            current.append(ch)
        else:
            word.append(ch)
    flush_sentence()
    return sentences


def join_tokens(tokens: Iterable[str]) -> str:
    """Canonical surface form: space between tokens only at non-CJK joins."""
    toks = list(tokens)
    if not toks:
        return ""
    parts = [toks[0]]
    for prev, tok in zip(toks, toks[1:]):
        if not is_cjk(prev[-1]) and not is_cjk(tok[0]):
            parts.append(" ")
        parts.append(tok)
    return "".join(parts)


# Coarse closed-class table for the default POS tagger; everything else "N".
_CLOSED_CLASS = {
    "的": "U", "了": "U", "着": "U", "是": "V", "有": "V", "在": "P",
    "和": "C", "或": "C", "不": "D", "没": "D", "很": "D", "能": "V",
    "可以": "V", "吗": "U", "the": "T", "a": "T", "an": "T", "is": "V",
    "are": "V", "be": "V", "of": "P", "in": "P", "on": "P", "and": "C",
    "or": "C", "not": "D", "no": "D", "very": "D", "can": "V",
}


def closed_class_tagger(tokens: list[str]) -> list[str]:
    return [_CLOSED_CLASS.get(t, "N") for t in tokens]


@dataclass
class TokenizerConfig:
    pos_tagger: Callable[[list[str]], list[str]] | None = None
    intern_tokens: bool = True


class CorpusHandle:
    """Tokenized view of an ingested document set."""

    def __init__(self, documents: list[Document], sentences: list[TokenizedSentence]):
        self.documents = documents
        self._sentences = sentences
        self.n_docs = len(documents)

    def sentences(self) -> Iterator[TokenizedSentence]:
        return iter(self._sentences)

    def __len__(self) -> int:
        return len(self._sentences)

    def token_count(self) -> int:
        return sum(len(s.tokens) for s in self._sentences)

    def doc_by_id(self, doc_id: str) -> Document | None:
        for d in self.documents:
            if d.id == doc_id:
                return d
        return None


def ingest(documents: list[Document], tokenizer_config: TokenizerConfig | None = None) -> CorpusHandle:
    """Tokenize documents into a corpus handle.

    Rejects an empty document list and duplicate document ids.
    """
    if not documents:
        raise CorpusError("cannot ingest an empty corpus")
    cfg = tokenizer_config or TokenizerConfig()
    seen: set[str] = set()
    sentences: list[TokenizedSentence] = []
    interned: dict[str, str] = {}
    for doc in documents:
        if doc.id in seen:
            raise CorpusError(f"duplicate document id: {doc.id!r}")
        seen.add(doc.id)
        for toks in tokenize(doc.text):
            if cfg.intern_tokens:
                toks = [interned.setdefault(t, t) for t in toks]
            tags = cfg.pos_tagger(toks) if cfg.pos_tagger else None
            sentences.append(TokenizedSentence(doc.id, toks, tags))
    return CorpusHandle(documents, sentences)


def read_documents_jsonl(path: str) -> list[Document]:
    """Read one JSON document per line: id, text, source, category_path."""
    docs: list[Document] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"{path}:{lineno}: invalid JSON: {e}") from e
            try:
                docs.append(Document(
                    id=str(obj["id"]),
                    text=str(obj["text"]),
                    source=obj.get("source", "article"),
                    category_path=list(obj.get("category_path", [])),
                ))
            except KeyError as e:
                raise CorpusError(f"{path}:{lineno}: missing field {e}") from e
    return docs


# --------------------------------------------------------------------------
# n-gram statistics


class NGramTable:
    """Exact n-gram counts, totals and document frequencies, 1 <= n <= max_n.

    A finished table is immutable by convention and safe to share across
    threads; partial tables from document shards can be combined with
    :func:`merge_tables`.
    """

    def __init__(self, max_n: int, n_docs: int):
        if max_n < 1:
            raise CorpusError(f"max_n must be >= 1, got {max_n}")
        self.max_n = max_n
        self.n_docs = n_docs
        self.counts: dict[int, Counter[Gram]] = {n: Counter() for n in range(1, max_n + 1)}
        self.totals: dict[int, int] = {n: 0 for n in range(1, max_n + 1)}
        self.doc_freq: Counter[Gram] = Counter()

    def count(self, gram: Gram) -> int:
        n = len(gram)
        if n < 1 or n > self.max_n:
            return 0
        return self.counts[n].get(gram, 0)

    def probability(self, gram: Gram) -> float:
        c = self.count(gram)
        if c == 0:
            raise StatisticUndefinedError(f"gram {gram!r} has zero count")
        return c / self.totals[len(gram)]

    def grams(self, n: int) -> Iterable[Gram]:
        return self.counts[n].keys()

    def neighbor_entropies(self, grams: Iterable[Gram]) -> dict[Gram, tuple[float, float]]:
        """Left/right branching entropy for many grams in one pass per order.

        Neighbor distributions are read off the (n+1)-gram counts, which
        naturally excludes occurrences at sentence boundaries.  Every gram
        must satisfy len(gram) + 1 <= max_n.
        """
        by_n: dict[int, set[Gram]] = {}
        for g in grams:
            if len(g) + 1 > self.max_n:
                raise CorpusError(
                    f"entropy for {g!r} needs ({len(g) + 1})-gram counts; table max_n={self.max_n}"
                )
            by_n.setdefault(len(g), set()).add(g)
        left: dict[Gram, Counter[str]] = {}
        right: dict[Gram, Counter[str]] = {}
        for n, wanted in by_n.items():
            for bigger, c in self.counts[n + 1].items():
                head, tail = bigger[1:], bigger[:-1]
                if head in wanted:
                    left.setdefault(head, Counter())[bigger[0]] += c
                if tail in wanted:
                    right.setdefault(tail, Counter())[bigger[-1]] += c
        out: dict[Gram, tuple[float, float]] = {}
        for n, wanted in by_n.items():
            for g in wanted:
                if self.counts[n].get(g, 0) == 0:
                    raise StatisticUndefinedError(f"gram {g!r} has zero count")
                out[g] = (_entropy(left.get(g)), _entropy(right.get(g)))
        return out


def _entropy(tally: Counter[str] | None) -> float:
    if not tally:
        return 0.0
    total = sum(tally.values())
    return -sum((c / total) * math.log(c / total) for c in tally.values())


def count_ngrams(corpus: CorpusHandle, max_n: int) -> NGramTable:
    """Count every n-gram up to max_n; n-grams never cross sentence boundaries."""
    if max_n < 1:
        raise CorpusError(f"max_n must be >= 1, got {max_n}")
    table = NGramTable(max_n, corpus.n_docs)
    doc_grams: set[Gram] = set()
    current_doc: str | None = None
    closed_docs: set[str] = set()

    def flush_doc() -> None:
        if doc_grams:
            table.doc_freq.update(doc_grams)
            doc_grams.clear()

    for sent in corpus.sentences():
        if sent.doc_id != current_doc:
            # document frequencies require doc-grouped sentence order
            if sent.doc_id in closed_docs:
                raise CorpusError(f"sentences of document {sent.doc_id!r} are not contiguous")
            if current_doc is not None:
                closed_docs.add(current_doc)
            flush_doc()
            current_doc = sent.doc_id
        toks = sent.tokens
        L = len(toks)
        for n in range(1, min(max_n, L) + 1):
            counter = table.counts[n]
            if n == 1:
                grams: Iterable[Gram] = [(t,) for t in toks]
            else:
                grams = list(zip(*(toks[i:] for i in range(n))))
            counter.update(grams)
            table.totals[n] += L - n + 1
            doc_grams.update(grams)
    flush_doc()
    return table


def merge_tables(tables: list[NGramTable]) -> NGramTable:
    """Deterministic merge of shard tables: counts sum, max_n must agree.

    Shards must partition the documents, so document frequencies sum too.
    """
    if not tables:
        raise CorpusError("nothing to merge")
    max_n = tables[0].max_n
    if any(t.max_n != max_n for t in tables):
        raise CorpusError("cannot merge tables with different max_n")
    merged = NGramTable(max_n, sum(t.n_docs for t in tables))
    for t in tables:
        for n in range(1, max_n + 1):
            merged.counts[n].update(t.counts[n])
            merged.totals[n] += t.totals[n]
        merged.doc_freq.update(t.doc_freq)
    return merged


def pmi(table: NGramTable, gram: Gram, split: int = 1) -> float:
    """Pointwise mutual information of a gram split into two halves (nats)."""
    if not 0 < split < len(gram):
        raise CorpusError(f"split {split} out of range for gram of length {len(gram)}")
    p_full = table.probability(gram)
    p_left = table.probability(gram[:split])
    p_right = table.probability(gram[split:])
    return math.log(p_full / (p_left * p_right))


def min_split_pmi(table: NGramTable, gram: Gram) -> float:
    """Worst-split PMI; low values expose grams glued across a weak boundary."""
    return min(pmi(table, gram, s) for s in range(1, len(gram)))


def left_right_entropy(source: NGramTable | CorpusHandle, gram: Gram) -> tuple[float, float]:
    """Shannon entropy of the left/right neighbor distributions of a gram.

    Occurrences at a sentence boundary contribute no neighbor on that side.
    Accepts either an NGramTable (requires len(gram)+1 <= max_n) or a corpus
    handle, in which case neighbors are tallied directly from the sentences.
    """
    if isinstance(source, NGramTable):
        return source.neighbor_entropies([gram])[gram]
    n = len(gram)
    left: Counter[str] = Counter()
    right: Counter[str] = Counter()
    occurrences = 0
    for sent in source.sentences():
        toks = sent.tokens
        for i in range(len(toks) - n + 1):
            if tuple(toks[i:i + n]) == gram:
                occurrences += 1
                if i > 0:
                    left[toks[i - 1]] += 1
                if i + n < len(toks):
                    right[toks[i + n]] += 1
    if occurrences == 0:
        raise StatisticUndefinedError(f"gram {gram!r} does not occur")
    return _entropy(left), _entropy(right)


def information_content(table: NGramTable, gram: Gram) -> float:
    """Surprisal -ln p(gram) in nats."""
    return -math.log(table.probability(gram))


def tfidf(table: NGramTable, gram: Gram) -> float:
    """Corpus frequency times ln(n_docs / doc_freq)."""
    c = table.count(gram)
    if c == 0:
        raise StatisticUndefinedError(f"gram {gram!r} has zero count")
    if table.n_docs < 1:
        raise CorpusError("tfidf needs at least one document")
    return c * math.log(table.n_docs / table.doc_freq[gram])


def export_stats(table: NGramTable, path: str) -> None:
    """Write gram<TAB>n<TAB>count<TAB>doc_freq sorted by (n, gram)."""
    with open(path, "w", encoding="utf-8") as f:
        for n in range(1, table.max_n + 1):
            for gram in sorted(table.counts[n]):
                f.write(
                    f"{' '.join(gram)}\t{n}\t{table.counts[n][gram]}\t{table.doc_freq[gram]}\n"
                )
