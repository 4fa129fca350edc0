"""Three-layer domain knowledge graph store.

Concepts (users, problems, POIs, categories, properties, values, items,
scenarios) and provenance-carrying typed triples, plus the category-level
property schema (CPV), item property values (IPV) and the item-POI records
derived from them.  Relation-kind typing is enforced on every write, the
category hierarchy stays a forest, and persistence is canonical JSONL under
a versioned header so re-serialization is byte-stable.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Iterable

from .relation_extraction import ExternalTriple

KINDS = ("User", "Item", "Scenario", "Problem", "POI", "Category", "Property", "Value")
RELATIONS = ("need", "cause", "has_poi", "has_problem", "is_a", "preference")
PROVENANCES = ("imported", "mined", "derived")
STATUSES = ("candidate", "accepted", "rejected")
POLARITIES = ("positive", "negative")

RELATION_TYPING = {
    "need": {("Problem", "POI")},
    "cause": {("Value", "POI")},
    "has_poi": {("Category", "POI"), ("Item", "POI")},
    "has_problem": {("User", "Problem")},
    "preference": {("User", "POI")},
    "is_a": {("Item", "Category"), ("Category", "Category")},
}

FORMAT_HEADER = "kgforge-kg v1"


class KGError(Exception):
    pass


class DanglingEndpointError(KGError):
    pass


class KindMismatchError(KGError):
    pass


class UnknownItemError(KGError):
    pass


class CatalogError(KGError):
    pass


class VersionMismatchError(KGError):
    pass


class CorruptionError(KGError):
    pass


def normalize_surface(surface: str) -> str:
    return surface.strip().casefold()


@dataclass
class ConceptNode:
    id: str
    kind: str
    surface: str
    aliases: set[str] = field(default_factory=set)
    category_scope: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise KGError("concept id must be non-empty")
        if self.kind not in KINDS:
            raise KGError(f"unknown concept kind {self.kind!r}")
        if self.kind in ("POI", "Problem", "Value") and not self.surface.strip():
            raise KGError(f"{self.kind} node {self.id!r} needs a non-empty surface")
        self.aliases = set(self.aliases)


@dataclass
class Triple:
    head: str
    relation: str
    tail: str
    provenance: str = "mined"
    confidence: float = 1.0
    status: str = "candidate"
    evidence: str | None = None
    classifier_score: float | None = None

    def __post_init__(self) -> None:
        if self.relation not in RELATIONS:
            raise KGError(f"unknown relation {self.relation!r}")
        if self.provenance not in PROVENANCES:
            raise KGError(f"unknown provenance {self.provenance!r}")
        if self.status not in STATUSES:
            raise KGError(f"unknown status {self.status!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise KGError(f"confidence {self.confidence} outside [0, 1]")

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.head, self.relation, self.tail)


@dataclass
class CPVRecord:
    category: str
    property: str
    allowed_values: set[str] = field(default_factory=set)
    enumerable: bool = False

    def __post_init__(self) -> None:
        self.allowed_values = set(self.allowed_values)
        if self.enumerable and not self.allowed_values:
            raise KGError(
                f"enumerable CPV ({self.category}, {self.property}) needs allowed values"
            )


@dataclass
class IPVRecord:
    item: str
    property: str
    value: str
    polarity: str = "positive"
    provenance: str = "imported"
    status: str = "accepted"

    def __post_init__(self) -> None:
        if self.polarity not in POLARITIES:
            raise KGError(f"unknown polarity {self.polarity!r}")
        if self.provenance not in PROVENANCES:
            raise KGError(f"unknown provenance {self.provenance!r}")
        if self.status not in STATUSES:
            raise KGError(f"unknown status {self.status!r}")


@dataclass
class InvertedIndex:
    mapping: dict[str, list[str]] = field(default_factory=dict)

    def items_for(self, poi_id: str) -> list[str]:
        return self.mapping.get(poi_id, [])


class KnowledgeGraph:
    def __init__(self) -> None:
        self.concepts: dict[str, ConceptNode] = {}
        self.triples: dict[tuple[str, str, str], Triple] = {}
        self.cpv: dict[tuple[str, str], CPVRecord] = {}
        self.ipv: dict[tuple[str, str, str], IPVRecord] = {}
        self.ipv_poi: set[tuple[str, str, str, str]] = set()
        # (kind, normalized surface, scope) -> id, for write-time dedup
        self._identity: dict[tuple[str, str, str | None], str] = {}
        self._surface_cache: dict[str, dict[str, str]] | None = None

    @staticmethod
    def _identity_key(node: ConceptNode) -> tuple[str, str, str | None]:
        return (node.kind, normalize_surface(node.surface), node.category_scope)

    # ---------------------------------------------------------------- writes

    def upsert_concept(self, node: ConceptNode) -> str:
        existing = self.concepts.get(node.id)
        if existing is not None:
            if existing.kind != node.kind:
                raise KindMismatchError(
                    f"concept {node.id!r} is {existing.kind}, cannot become {node.kind}"
                )
            old_key = self._identity_key(existing)
            if self._identity.get(old_key) == existing.id:
                del self._identity[old_key]
            existing.surface = node.surface
            existing.aliases |= node.aliases
            existing.category_scope = node.category_scope
            self._identity.setdefault(self._identity_key(existing), existing.id)
            self._surface_cache = None
            return existing.id
        # dedup by normalized surface within (kind, scope); aliases route here
        twin_id = self._identity.get(self._identity_key(node))
        if twin_id is not None:
            self.concepts[twin_id].aliases |= node.aliases
            self._surface_cache = None
            return twin_id
        self.concepts[node.id] = node
        self._identity[self._identity_key(node)] = node.id
        self._surface_cache = None
        return node.id

    def upsert_triple(self, triple: Triple) -> str:
        head = self.concepts.get(triple.head)
        tail = self.concepts.get(triple.tail)
        if head is None or tail is None:
            missing = triple.head if head is None else triple.tail
            raise DanglingEndpointError(f"triple endpoint {missing!r} does not exist")
        if (head.kind, tail.kind) not in RELATION_TYPING[triple.relation]:
            raise KindMismatchError(
                f"{triple.relation} cannot link {head.kind} -> {tail.kind}"
            )
        if triple.relation == "is_a" and head.kind == "Category":
            self._check_category_parent(triple)
        self.triples[triple.key] = triple
        return "{1}:{0}:{2}".format(*triple.key)

    def _check_category_parent(self, triple: Triple) -> None:
        for (h, r, t) in self.triples:
            if r == "is_a" and h == triple.head and t != triple.tail:
                raise KGError(f"category {triple.head!r} already has a parent {t!r}")
        # adding head -> tail cycles iff head is reachable from tail
        seen = set()
        cur: str | None = triple.tail
        while cur is not None and cur not in seen:
            if cur == triple.head:
                raise KGError(
                    f"is_a {triple.head!r} -> {triple.tail!r} would create a category cycle"
                )
            seen.add(cur)
            cur = next(
                (t for (h, r, t) in self.triples if r == "is_a" and h == cur), None
            )

    def upsert_cpv(self, record: CPVRecord) -> None:
        self._require(record.category, "Category")
        self._require(record.property, "Property")
        for v in record.allowed_values:
            self._require(v, "Value")
        self.cpv[(record.category, record.property)] = record

    def upsert_ipv(self, record: IPVRecord) -> None:
        item = self._require(record.item, "Item")
        self._require(record.property, "Property")
        self._require(record.value, "Value")
        if item.category_scope is None or (item.category_scope, record.property) not in self.cpv:
            raise KGError(
                f"item {record.item!r} has no CPV schema for property {record.property!r}"
            )
        self.ipv[(record.item, record.property, record.value)] = record

    def _require(self, concept_id: str, kind: str) -> ConceptNode:
        node = self.concepts.get(concept_id)
        if node is None:
            raise DanglingEndpointError(f"concept {concept_id!r} does not exist")
        if node.kind != kind:
            raise KindMismatchError(f"concept {concept_id!r} is {node.kind}, expected {kind}")
        return node

    # ---------------------------------------------------------------- lookups

    def _surfaces(self) -> dict[str, dict[str, str]]:
        if self._surface_cache is None:
            cache: dict[str, dict[str, str]] = {k: {} for k in KINDS}
            for node in self.concepts.values():
                cache[node.kind].setdefault(normalize_surface(node.surface), node.id)
                for alias in node.aliases:
                    cache[node.kind].setdefault(normalize_surface(alias), node.id)
            self._surface_cache = cache
        return self._surface_cache

    def find_by_surface(self, kind: str, surface: str) -> ConceptNode | None:
        node_id = self._surfaces().get(kind, {}).get(normalize_surface(surface))
        return self.concepts.get(node_id) if node_id else None

    def surfaces_of_kind(self, kind: str) -> dict[str, str]:
        """normalized surface/alias -> concept id"""
        return dict(self._surfaces().get(kind, {}))

    def accepted_triples(self, relation: str | None = None) -> list[Triple]:
        out = [
            t for t in self.triples.values()
            if t.status == "accepted" and (relation is None or t.relation == relation)
        ]
        out.sort(key=lambda t: t.key)
        return out

    def query_need(self, problem_surface: str) -> list[ConceptNode]:
        problem = self.find_by_surface("Problem", problem_surface)
        if problem is None:
            return []
        pois = {
            t.tail for t in self.triples.values()
            if t.relation == "need" and t.status == "accepted" and t.head == problem.id
        }
        return [self.concepts[p] for p in sorted(pois)]

    def lookup_ipv(self, item: str, property_id: str) -> list[tuple[str, str]]:
        if item not in self.concepts:
            raise UnknownItemError(f"unknown item {item!r}")
        hits = [
            (r.value, r.polarity)
            for r in self.ipv.values()
            if r.item == item and r.property == property_id and r.status == "accepted"
        ]
        return sorted(hits)

    def properties_of_item(self, item: str) -> list[str]:
        if item not in self.concepts:
            raise UnknownItemError(f"unknown item {item!r}")
        return sorted({r.property for r in self.ipv.values() if r.item == item and r.status == "accepted"})

    # ---------------------------------------------------------------- derivations

    def inherit(self) -> list[Triple]:
        """Relational join: each positive accepted IPV meets each accepted
        cause triple whose head value matches and whose scope (the value
        node's category scope, None = unscoped) matches the item's leaf
        category.  Derives Item-has_poi triples plus I-PV-POI records."""
        causes: dict[str, list[tuple[str, str | None]]] = {}
        for t in self.triples.values():
            if t.relation == "cause" and t.status == "accepted":
                scope = self.concepts[t.head].category_scope
                causes.setdefault(t.head, []).append((t.tail, scope))
        derivations: list[tuple[str, str, str, str]] = []
        for record in self.ipv.values():
            if record.polarity != "positive" or record.status != "accepted":
                continue
            leaf = self.concepts[record.item].category_scope
            for poi, scope in causes.get(record.value, ()):
                if scope is None or scope == leaf:
                    derivations.append((record.item, record.property, record.value, poi))
        derived: list[Triple] = []
        for item, prop, value, poi in sorted(set(derivations)):
            triple = Triple(
                head=item, relation="has_poi", tail=poi,
                provenance="derived", confidence=1.0, status="accepted",
                evidence=f"ipv:{item}:{prop}:{value}",
            )
            self.upsert_triple(triple)
            self.ipv_poi.add((item, prop, value, poi))
            derived.append(triple)
        return derived

    def build_inverted_index(self) -> InvertedIndex:
        mapping: dict[str, set[str]] = {}
        for t in self.triples.values():
            if t.relation != "has_poi" or t.status != "accepted":
                continue
            if self.concepts[t.head].kind != "Item":
                continue
            mapping.setdefault(t.tail, set()).add(t.head)
        return InvertedIndex({poi: sorted(items) for poi, items in sorted(mapping.items())})

    def derive_preference(self, user: str, problems: Iterable[str]) -> list[Triple]:
        """Preference edges from the user to every need-POI of each problem."""
        self._require(user, "User")
        pois: set[str] = set()
        for problem_id in problems:
            node = self.concepts.get(problem_id)
            if node is None or node.kind != "Problem":
                continue
            for t in self.triples.values():
                if t.relation == "need" and t.status == "accepted" and t.head == node.id:
                    pois.add(t.tail)
        derived = []
        for poi in sorted(pois):
            triple = Triple(
                head=user, relation="preference", tail=poi,
                provenance="derived", status="accepted",
            )
            self.upsert_triple(triple)
            derived.append(triple)
        return derived

    def typed_value_dictionary(self):
        """Value surfaces/aliases mapped to their property's surface, drawn
        from CPV enumerations and stored IPVs; feeds dictionary tagging."""
        from .corpus import TypedDictionary

        pairs: list[tuple[str, str]] = []
        for (_cat, prop) in sorted(self.cpv):
            for v in sorted(self.cpv[(_cat, prop)].allowed_values):
                pairs.append((v, prop))
        for (item, prop, v) in sorted(self.ipv):
            pairs.append((v, prop))
        entries: dict[str, str] = {}
        for value_id, prop_id in pairs:
            value = self.concepts.get(value_id)
            prop = self.concepts.get(prop_id)
            if value is None or prop is None:
                continue
            for surf in [value.surface, *sorted(value.aliases)]:
                entries.setdefault(surf, prop.surface)
        return TypedDictionary(entries)

    def export_surface_triples(self) -> list[ExternalTriple]:
        """Accepted triples in surface form, for knowledge injection."""
        out = [
            ExternalTriple(
                head=self.concepts[t.head].surface,
                relation=t.relation,
                tail=self.concepts[t.tail].surface,
            )
            for t in self.accepted_triples()
        ]
        return out

    # ---------------------------------------------------------------- catalog

    def import_catalog(self, paths: Iterable[str]) -> dict[str, int]:
        """Load concept/cpv/ipv/triple JSONL records; any bad line rolls the
        whole import back and reports its line number."""
        staged = copy.deepcopy(self)
        counts = {"concept": 0, "cpv": 0, "ipv": 0, "triple": 0}
        for path in paths:
            with open(path, encoding="utf-8") as f:
                for lineno, line in enumerate(f, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        record = json.loads(line)
                        kind = record.pop("type")
                        staged._apply_record(kind, record)
                        counts[kind] += 1
                    except (KGError, KeyError, ValueError, TypeError) as e:
                        raise CatalogError(f"{path}:{lineno}: {e}") from e
        self.__dict__.update(staged.__dict__)
        return counts

    def _apply_record(self, kind: str, record: dict, dedup: bool = True) -> None:
        if kind == "concept":
            node = ConceptNode(
                id=record["id"], kind=record["kind"], surface=record["surface"],
                aliases=set(record.get("aliases", [])),
                category_scope=record.get("category_scope"),
            )
            if dedup:
                self.upsert_concept(node)
            else:
                # loading canonical records: insert literally, no surface merge
                if node.id in self.concepts:
                    raise CorruptionError(f"duplicate concept id {node.id!r}")
                self.concepts[node.id] = node
                self._identity.setdefault(self._identity_key(node), node.id)
                self._surface_cache = None
        elif kind == "cpv":
            self.upsert_cpv(CPVRecord(
                category=record["category"], property=record["property"],
                allowed_values=set(record.get("allowed_values", [])),
                enumerable=bool(record.get("enumerable", False)),
            ))
        elif kind == "ipv":
            self.upsert_ipv(IPVRecord(
                item=record["item"], property=record["property"], value=record["value"],
                polarity=record.get("polarity", "positive"),
                provenance=record.get("provenance", "imported"),
                status=record.get("status", "accepted"),
            ))
        elif kind == "triple":
            self.upsert_triple(Triple(
                head=record["head"], relation=record["relation"], tail=record["tail"],
                provenance=record.get("provenance", "imported"),
                confidence=float(record.get("confidence", 1.0)),
                status=record.get("status", "accepted"),
                evidence=record.get("evidence"),
                classifier_score=record.get("classifier_score"),
            ))
        else:
            raise CatalogError(f"unknown record type {kind!r}")

    # ---------------------------------------------------------------- stats & persistence

    def stats(self) -> dict[str, int]:
        counts = {
            "user": 0, "item": 0, "scenario": 0, "problem": 0,
            "poi": 0, "category": 0, "property": 0, "value": 0,
        }
        kind_key = {k: k.lower() for k in KINDS}
        for node in self.concepts.values():
            counts[kind_key[node.kind]] += 1
        counts["cpv"] = len(self.cpv)
        counts["ipv"] = sum(1 for r in self.ipv.values() if r.status == "accepted")
        for rel in RELATIONS:
            counts[rel] = sum(
                1 for t in self.triples.values()
                if t.relation == rel and t.status == "accepted"
            )
        counts["ipv_poi"] = len(self.ipv_poi)
        return counts

    def _records(self) -> Iterable[dict]:
        for node in sorted(self.concepts.values(), key=lambda n: (n.kind, n.id)):
            yield {
                "type": "concept", "id": node.id, "kind": node.kind,
                "surface": node.surface, "aliases": sorted(node.aliases),
                "category_scope": node.category_scope,
            }
        for (cat, prop) in sorted(self.cpv):
            r = self.cpv[(cat, prop)]
            yield {
                "type": "cpv", "category": cat, "property": prop,
                "allowed_values": sorted(r.allowed_values), "enumerable": r.enumerable,
            }
        for key in sorted(self.ipv):
            r = self.ipv[key]
            yield {
                "type": "ipv", "item": r.item, "property": r.property, "value": r.value,
                "polarity": r.polarity, "provenance": r.provenance, "status": r.status,
            }
        for (h, rel, t) in sorted(self.triples, key=lambda k: (k[1], k[0], k[2])):
            tr = self.triples[(h, rel, t)]
            yield {
                "type": "triple", "head": h, "relation": rel, "tail": t,
                "provenance": tr.provenance, "confidence": tr.confidence,
                "status": tr.status, "evidence": tr.evidence,
                "classifier_score": tr.classifier_score,
            }
        for (item, prop, value, poi) in sorted(self.ipv_poi):
            yield {
                "type": "ipv_poi", "item": item, "property": prop,
                "value": value, "poi": poi,
            }

    def persist(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(FORMAT_HEADER + "\n")
            for record in self._records():
                f.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str) -> "KnowledgeGraph":
        kg = cls()
        with open(path, encoding="utf-8") as f:
            header = f.readline().rstrip("\n")
            if header != FORMAT_HEADER:
                raise VersionMismatchError(
                    f"expected header {FORMAT_HEADER!r}, found {header!r}"
                )
            for lineno, line in enumerate(f, start=2):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                    kind = record.pop("type")
                except (ValueError, KeyError) as e:
                    raise CorruptionError(f"{path}:{lineno}: {e}") from e
                try:
                    if kind == "ipv_poi":
                        kg.ipv_poi.add(
                            (record["item"], record["property"], record["value"], record["poi"])
                        )
                    else:
                        kg._apply_record(kind, record, dedup=False)
                except (KGError, KeyError, ValueError, TypeError) as e:
                    raise CorruptionError(f"{path}:{lineno}: {e}") from e
        return kg

    def copy(self) -> "KnowledgeGraph":
        return copy.deepcopy(self)
