"""Conversation applications over an accepted knowledge graph.

Query rewriting detects user problems in an utterance, follows need links to
POIs and emits a search-ready string plus item recall over the inverted
index.  Property QA resolves which property a question asks about and
answers from stored positive item property values.  Reason generation fills
slot templates from the item's best property value and its cause-linked
POIs.  All functions are pure over an immutable store snapshot.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .corpus import tokenize
from .corpus import _is_breaker as _is_breaker_char
from .kg_store import InvertedIndex, KGError, KnowledgeGraph, normalize_surface
from .pipelines import SynonymTable, normalize_value
from .sequence_tagger import Tagger


class AppError(Exception):
    pass


class NoReasoningPathError(AppError):
    code = "no_reasoning_path"


@dataclass
class RewriteResult:
    detected_problems: list[str]
    pois: list[str]
    category_hint: str | None
    rewritten_query: str


@dataclass
class PropertyAnswer:
    queried_property: str | None
    matched_values: list[str]
    verdict: str  # affirmative | negative | value_listing | unknown
    answer_text: str


@dataclass
class ReasonText:
    item: str
    slots: tuple[str, str, str, tuple[str, ...]]  # category, value, property, pois
    text: str


# --------------------------------------------------------------------------
# surface matching


def _gapped_match(text: str, surface: str, start: int, max_gap: int) -> int | None:
    """Match `surface` characters in order from text[start], allowing up to
    max_gap non-punctuation characters between consecutive ones.  Returns the
    end position (exclusive) or None."""
    if not surface or text[start] != surface[0]:
        return None
    pos = start + 1
    for ch in surface[1:]:
        gap = 0
        while pos < len(text) and text[pos] != ch:
            if _is_breaker_char(text[pos]) or gap >= max_gap:
                return None
            gap += 1
            pos += 1
        if pos >= len(text):
            return None
        pos += 1
    return pos


def find_surface_mentions(
    utterance: str, surfaces: dict[str, str], max_gap: int = 2
) -> list[tuple[int, int, str]]:
    """Maximal, non-overlapping (start, end, key) matches in textual order.

    surfaces maps normalized surface text to an arbitrary key.  At each
    position the longest matching surface wins; short character gaps are
    tolerated so colloquial insertions ("皮肤有点干") still hit "皮肤干".
    """
    text = normalize_surface(utterance)
    ordered = sorted(surfaces, key=lambda s: (-len(s), s))
    out: list[tuple[int, int, str]] = []
    i = 0
    while i < len(text):
        hit = None
        for surf in ordered:
            end = _gapped_match(text, surf, i, max_gap)
            if end is not None:
                hit = (i, end, surfaces[surf])
                break
        if hit is None:
            i += 1
        else:
            out.append(hit)
            i = hit[1]
    return out


# --------------------------------------------------------------------------
# shopping guide


def detect_problems(utterance: str, kg: KnowledgeGraph, max_gap: int = 2) -> list[str]:
    """Problem ids mentioned in the utterance, in textual order."""
    mentions = find_surface_mentions(utterance, kg.surfaces_of_kind("Problem"), max_gap)
    seen: list[str] = []
    for _s, _e, pid in mentions:
        if pid not in seen:
            seen.append(pid)
    return seen


def rewrite_query(utterance: str, kg: KnowledgeGraph, max_gap: int = 2) -> RewriteResult:
    """Rewrite a problem-describing utterance into need-POI search keywords."""
    problems = detect_problems(utterance, kg, max_gap)
    pois: set[str] = set()
    for pid in problems:
        for t in kg.triples.values():
            if t.relation == "need" and t.status == "accepted" and t.head == pid:
                pois.add(t.tail)
    poi_ids = sorted(pois)
    category_mentions = find_surface_mentions(utterance, kg.surfaces_of_kind("Category"), max_gap)
    category_hint = category_mentions[0][2] if category_mentions else None
    if poi_ids:
        parts = [kg.concepts[p].surface for p in poi_ids]
        if category_hint is not None:
            parts.append(kg.concepts[category_hint].surface)
        rewritten = " ".join(parts)
    else:
        rewritten = ""
    return RewriteResult(
        detected_problems=problems,
        pois=poi_ids,
        category_hint=category_hint,
        rewritten_query=rewritten,
    )


def recall_items(
    pois: Sequence[str],
    index: InvertedIndex,
    kg: KnowledgeGraph,
    category_filter: str | None = None,
    top_k: int = 10,
) -> list[str]:
    """Items ranked by matched-POI count desc, then ascending item id."""
    if top_k < 1:
        raise AppError(f"top_k must be >= 1, got {top_k}")
    counts: dict[str, int] = {}
    for poi in pois:
        for item in index.items_for(poi):
            if category_filter is not None:
                node = kg.concepts.get(item)
                if node is None or node.category_scope != category_filter:
                    continue
            counts[item] = counts.get(item, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [item for item, _ in ranked[:top_k]]


# --------------------------------------------------------------------------
# property QA


def _positive_values(kg: KnowledgeGraph, item: str, prop: str) -> list[str]:
    return [v for v, pol in kg.lookup_ipv(item, prop) if pol == "positive"]


def answer_property_question(
    question: str,
    item: str,
    tagger: Tagger,
    kg: KnowledgeGraph,
    synonyms: SynonymTable | None = None,
) -> PropertyAnswer:
    """Recognize property/value mentions, pick the queried property (the
    last-mentioned one wins), and answer from stored positive values."""
    if item not in kg.concepts:
        raise KGError(f"unknown item {item!r}")
    synonyms = synonyms or SynonymTable()

    # value mentions from NER, positioned by first occurrence in the question
    value_mentions: list[tuple[int, str, str]] = []  # (pos, property_id, value_surface)
    for sent in tokenize(question):
        for surface, ptype, _span in tagger.entities(sent):
            prop_node = kg.find_by_surface("Property", ptype)
            if prop_node is None:
                continue
            canonical = normalize_value(surface, ptype, synonyms)
            pos = question.find(surface)
            value_mentions.append((pos if pos >= 0 else 0, prop_node.id, canonical))
    property_mentions = [
        (start, pid) for start, _end, pid in
        find_surface_mentions(question, kg.surfaces_of_kind("Property"), max_gap=0)
    ]

    mentions = [(pos, pid, None) for pos, pid in property_mentions]
    mentions += [(pos, pid, canon) for pos, pid, canon in value_mentions]
    if not mentions:
        return PropertyAnswer(None, [], "unknown", "暂无相关属性信息")
    mentions.sort(key=lambda m: m[0])
    queried = mentions[-1][1]  # last-mentioned property
    prop_surface = kg.concepts[queried].surface
    stored = _positive_values(kg, item, queried)
    mentioned_value_ids = []
    for _pos, pid, canon in value_mentions:
        if pid != queried or canon is None:
            continue
        node = kg.find_by_surface("Value", canon)
        if node is not None:
            mentioned_value_ids.append(node.id)

    if not stored:
        return PropertyAnswer(queried, [], "unknown", f"暂无{prop_surface}信息")
    if mentioned_value_ids:
        matched = [v for v in mentioned_value_ids if v in stored]
        if matched:
            surfaces = "、".join(kg.concepts[v].surface for v in dict.fromkeys(matched))
            return PropertyAnswer(queried, list(dict.fromkeys(matched)), "affirmative",
                                  f"是的, {prop_surface}是{surfaces}")
        surfaces = "、".join(kg.concepts[v].surface for v in stored)
        return PropertyAnswer(queried, [], "negative", f"不是, {prop_surface}是{surfaces}")
    surfaces = "、".join(kg.concepts[v].surface for v in stored)
    return PropertyAnswer(queried, stored, "value_listing", f"{prop_surface}: {surfaces}")


# --------------------------------------------------------------------------
# recommendation reasons


DEFAULT_TEMPLATES = {
    1: "这件{category}有{value}的{property}, 带来{poi_1}的感觉",
    2: "这件{category}有{value}的{property}, 带来{poi_1}和{poi_2}的感觉",
    3: "这件{category}有{value}的{property}, 带来{poi_1}、{poi_2}和{poi_3}的感觉",
}

_REQUIRED_SLOTS = {
    1: ("{category}", "{value}", "{property}", "{poi_1}"),
    2: ("{category}", "{value}", "{property}", "{poi_1}", "{poi_2}"),
    3: ("{category}", "{value}", "{property}", "{poi_1}", "{poi_2}", "{poi_3}"),
}


@dataclass
class TemplateSet:
    templates: dict[int, str] = field(default_factory=lambda: dict(DEFAULT_TEMPLATES))

    def __post_init__(self) -> None:
        for arity in (1, 2, 3):
            template = self.templates.get(arity)
            if template is None:
                raise AppError(f"missing template for arity {arity}")
            for slot in _REQUIRED_SLOTS[arity]:
                if slot not in template:
                    raise AppError(f"arity-{arity} template lacks slot {slot}")

    @classmethod
    def from_file(cls, path: str) -> "TemplateSet":
        templates: dict[int, str] = {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                arity, template = line.split("\t", 1)
                templates[int(arity)] = template
        return cls(templates)

    def render(self, arity: int, **slots: str) -> str:
        return self.templates[min(arity, 3)].format(**slots)


def generate_reason(
    item: str, kg: KnowledgeGraph, template_set: TemplateSet | None = None
) -> ReasonText:
    """Pick the item's (property, value) with the most cause-linked POIs and
    realize a slot template; every slot surface appears verbatim."""
    templates = template_set or TemplateSet()
    node = kg.concepts.get(item)
    if node is None or node.kind != "Item":
        raise KGError(f"unknown item {item!r}")
    leaf = node.category_scope
    causes: dict[str, list[str]] = {}
    for t in kg.triples.values():
        if t.relation == "cause" and t.status == "accepted":
            scope = kg.concepts[t.head].category_scope
            if scope is None or scope == leaf:
                causes.setdefault(t.head, []).append(t.tail)
    candidates = []  # (-n_pois, property_id, value_id, pois)
    for record in kg.ipv.values():
        if record.item != item or record.status != "accepted" or record.polarity != "positive":
            continue
        pois = sorted(set(causes.get(record.value, ())))
        if pois:
            candidates.append((-len(pois), record.property, record.value, pois))
    if not candidates or leaf is None:
        raise NoReasoningPathError(f"item {item!r} has no property value with cause-linked POIs")
    candidates.sort()
    _n, prop_id, value_id, pois = candidates[0]
    poi_surfaces = tuple(kg.concepts[p].surface for p in pois[:3])
    slots = {
        "category": kg.concepts[leaf].surface,
        "value": kg.concepts[value_id].surface,
        "property": kg.concepts[prop_id].surface,
        "poi_1": poi_surfaces[0],
        "poi_2": poi_surfaces[1] if len(poi_surfaces) > 1 else "",
        "poi_3": poi_surfaces[2] if len(poi_surfaces) > 2 else "",
    }
    text = templates.render(len(poi_surfaces), **slots)
    return ReasonText(
        item=item,
        slots=(slots["category"], slots["value"], slots["property"], poi_surfaces),
        text=text,
    )
