"""Shared fixtures: a small seeded ontology and random KG generators."""
import json
import random

from kgforge.kg_store import (
    ConceptNode,
    CPVRecord,
    IPVRecord,
    KnowledgeGraph,
    Triple,
)


def seed_catalog_records():
    """Beauty/clothing fixture: problems, POIs, need/cause links, two items."""
    return [
        {"type": "concept", "id": "user", "kind": "User", "surface": "user"},
        {"type": "concept", "id": "cat_cleanser", "kind": "Category", "surface": "洗面奶",
         "aliases": ["facial cleanser"]},
        {"type": "concept", "id": "cat_foam", "kind": "Category", "surface": "洁面泡沫",
         "aliases": ["cleansing foam"]},
        {"type": "concept", "id": "cat_sweater", "kind": "Category", "surface": "卫衣",
         "aliases": ["sweater"]},
        {"type": "concept", "id": "prob_dry_skin", "kind": "Problem", "surface": "皮肤干",
         "aliases": ["dry skin"]},
        {"type": "concept", "id": "prob_pimple", "kind": "Problem", "surface": "长痘痘",
         "aliases": ["pimple"]},
        {"type": "concept", "id": "poi_moisture", "kind": "POI", "surface": "保湿",
         "aliases": ["preserve moisture"]},
        {"type": "concept", "id": "poi_anti_acne", "kind": "POI", "surface": "清痘抑痘",
         "aliases": ["anti-acne"]},
        {"type": "concept", "id": "poi_cute", "kind": "POI", "surface": "可爱",
         "aliases": ["cute"]},
        {"type": "concept", "id": "poi_leisure", "kind": "POI", "surface": "休闲",
         "aliases": ["leisure"]},
        {"type": "concept", "id": "prop_ingredient", "kind": "Property", "surface": "成分",
         "aliases": ["ingredient"]},
        {"type": "concept", "id": "prop_target_users", "kind": "Property", "surface": "适用人群",
         "aliases": ["target users", "target_users"]},
        {"type": "concept", "id": "prop_style", "kind": "Property", "surface": "领子",
         "aliases": ["style"]},
        {"type": "concept", "id": "val_bisabolol", "kind": "Value", "surface": "红没药醇",
         "aliases": ["bisabolol"], "category_scope": "cat_foam"},
        {"type": "concept", "id": "val_hyaluronic", "kind": "Value", "surface": "玻尿酸",
         "aliases": ["hyaluronic acid"], "category_scope": "cat_foam"},
        {"type": "concept", "id": "val_pregnant", "kind": "Value", "surface": "孕妇",
         "aliases": ["pregnant women"]},
        {"type": "concept", "id": "val_round_neck", "kind": "Value", "surface": "圆领",
         "aliases": ["round neck"], "category_scope": "cat_sweater"},
        {"type": "concept", "id": "item_foam_1", "kind": "Item", "surface": "cleansing foam item",
         "category_scope": "cat_foam"},
        {"type": "concept", "id": "item_sweater_1", "kind": "Item", "surface": "sweater item",
         "category_scope": "cat_sweater"},
        {"type": "cpv", "category": "cat_foam", "property": "prop_ingredient",
         "allowed_values": ["val_bisabolol", "val_hyaluronic"], "enumerable": True},
        {"type": "cpv", "category": "cat_foam", "property": "prop_target_users",
         "allowed_values": ["val_pregnant"], "enumerable": True},
        {"type": "cpv", "category": "cat_sweater", "property": "prop_style",
         "allowed_values": ["val_round_neck"], "enumerable": True},
        {"type": "ipv", "item": "item_foam_1", "property": "prop_ingredient",
         "value": "val_bisabolol", "polarity": "positive"},
        {"type": "ipv", "item": "item_foam_1", "property": "prop_target_users",
         "value": "val_pregnant", "polarity": "positive"},
        {"type": "ipv", "item": "item_sweater_1", "property": "prop_style",
         "value": "val_round_neck", "polarity": "positive"},
        {"type": "triple", "head": "prob_dry_skin", "relation": "need", "tail": "poi_moisture",
         "provenance": "mined", "status": "accepted"},
        {"type": "triple", "head": "prob_pimple", "relation": "need", "tail": "poi_anti_acne",
         "provenance": "mined", "status": "accepted"},
        {"type": "triple", "head": "val_bisabolol", "relation": "cause", "tail": "poi_anti_acne",
         "provenance": "mined", "status": "accepted"},
        {"type": "triple", "head": "val_round_neck", "relation": "cause", "tail": "poi_cute",
         "provenance": "mined", "status": "accepted"},
        {"type": "triple", "head": "val_round_neck", "relation": "cause", "tail": "poi_leisure",
         "provenance": "mined", "status": "accepted"},
        {"type": "triple", "head": "user", "relation": "has_problem", "tail": "prob_dry_skin",
         "provenance": "mined", "status": "accepted"},
    ]


def write_catalog(path, records=None):
    with open(path, "w", encoding="utf-8") as f:
        for record in records or seed_catalog_records():
            f.write(json.dumps(record, ensure_ascii=False) + "\n")


def build_seed_kg() -> KnowledgeGraph:
    kg = KnowledgeGraph()
    for record in seed_catalog_records():
        data = dict(record)
        kg._apply_record(data.pop("type"), data)
    return kg


def random_kg(rng: random.Random, n_categories=3, n_items=20, n_values=10,
              n_pois=6, n_ipv=40, n_cause=12):
    """A random store plus the flat tuples an oracle can join independently."""
    kg = KnowledgeGraph()
    categories = [f"cat{i}" for i in range(n_categories)]
    for c in categories:
        kg.upsert_concept(ConceptNode(id=c, kind="Category", surface=f"category {c}"))
    kg.upsert_concept(ConceptNode(id="prop", kind="Property", surface="the property"))
    pois = [f"poi{i}" for i in range(n_pois)]
    for p in pois:
        kg.upsert_concept(ConceptNode(id=p, kind="POI", surface=f"poi surface {p}"))
    values = []
    for i in range(n_values):
        scope = rng.choice(categories + [None])
        v = f"val{i}"
        kg.upsert_concept(ConceptNode(id=v, kind="Value", surface=f"value {i}", category_scope=scope))
        values.append((v, scope))
    for c in categories:
        kg.upsert_cpv(CPVRecord(category=c, property="prop",
                                allowed_values={v for v, _ in values}, enumerable=True))
    item_category = {}
    for i in range(n_items):
        item = f"item{i}"
        cat = rng.choice(categories)
        kg.upsert_concept(ConceptNode(id=item, kind="Item", surface=f"item {i}", category_scope=cat))
        item_category[item] = cat

    ipv_tuples = []
    for _ in range(n_ipv):
        item = f"item{rng.randrange(n_items)}"
        value = f"val{rng.randrange(n_values)}"
        polarity = rng.choice(["positive", "positive", "negative"])
        status = rng.choice(["accepted", "accepted", "accepted", "candidate"])
        kg.upsert_ipv(IPVRecord(item=item, property="prop", value=value,
                                polarity=polarity, status=status))
    for (item, prop, value), r in kg.ipv.items():
        ipv_tuples.append((item, prop, value, r.polarity, r.status))

    for _ in range(n_cause):
        value = f"val{rng.randrange(n_values)}"
        poi = rng.choice(pois)
        status = rng.choice(["accepted", "accepted", "candidate", "rejected"])
        kg.upsert_triple(Triple(head=value, relation="cause", tail=poi,
                                provenance="mined", status=status))
    cause_tuples = [
        (h, t, tr.status, kg.concepts[h].category_scope)
        for (h, r, t), tr in kg.triples.items() if r == "cause"
    ]
    return kg, ipv_tuples, cause_tuples, item_category
