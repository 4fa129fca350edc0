import random

import numpy as np
import pytest

import oracles
from kgforge import relation_extraction as rx


SPANDEX = rx.AnchorSentence(tokens=["氨纶", "面料", "有", "弹力"], span1=(0, 2), span2=(3, 4))


# --------------------------------------------------------------------------
# anchors and markers


def test_mark_anchors_wraps_both_spans():
    marked = rx.mark_anchors(SPANDEX)
    assert marked.tokens == ["$", "氨纶", "面料", "$", "有", "#", "弹力", "#"]
    assert marked.tokens.count("$") == 2
    assert marked.tokens.count("#") == 2
    assert marked.original_index == [None, 0, 1, None, 2, None, 3, None]


def test_anchor_sentence_rejects_bad_spans():
    with pytest.raises(rx.RelationError):
        rx.AnchorSentence(["a", "b"], span1=(0, 0), span2=(1, 2))
    with pytest.raises(rx.RelationError):
        rx.AnchorSentence(["a", "b", "c"], span1=(0, 2), span2=(1, 3))
    with pytest.raises(rx.RelationError):
        rx.AnchorSentence(["a"], span1=(0, 1), span2=(0, 2))


def test_anchor_sentence_canonicalizes_span_order():
    s = rx.AnchorSentence(["a", "b", "c", "d"], span1=(3, 4), span2=(0, 1))
    assert s.span1 == (0, 1)
    assert s.span2 == (3, 4)


def test_strip_markers_roundtrip_random():
    rng = random.Random(0)
    for _ in range(200):
        n = rng.randint(3, 10)
        toks = [f"t{rng.randint(0, 5)}" for _ in range(n)]
        cut = sorted(rng.sample(range(n + 1), 4))
        if cut[0] == cut[1] or cut[2] == cut[3] or cut[1] > cut[2]:
            continue
        s = rx.AnchorSentence(toks, span1=(cut[0], cut[1]), span2=(cut[2], cut[3]))
        assert rx.strip_markers(rx.mark_anchors(s)) == toks


# --------------------------------------------------------------------------
# triple query and injection


KG_TRIPLES = [
    rx.ExternalTriple("氨纶面料", "characteristic", "弹性高"),
    rx.ExternalTriple("别的", "characteristic", "无关"),
]


def test_query_triples_matches_head():
    hits = rx.query_triples("氨纶面料", "有弹力", KG_TRIPLES)
    assert hits == [KG_TRIPLES[0]]


def test_query_triples_empty_kg():
    assert rx.query_triples("a", "b", []) == []


def test_query_triples_canonical_order():
    triples = [
        rx.ExternalTriple("h", "rel_b", "t1"),
        rx.ExternalTriple("h", "rel_a", "t2"),
        rx.ExternalTriple("h", "rel_a", "t1"),
    ]
    hits = rx.query_triples("h", "x", triples)
    assert [(t.relation, t.tail) for t in hits] == [("rel_a", "t1"), ("rel_a", "t2"), ("rel_b", "t1")]


def test_inject_soft_positions_branch_after_head():
    marked = rx.mark_anchors(SPANDEX)
    injected = rx.inject(marked, [KG_TRIPLES[0]])
    # branch hangs off 面料 (position 2); its soft positions continue from 3
    assert injected.tokens == ["$", "氨纶", "面料", "characteristic", "弹", "性", "高", "$", "有", "#", "弹力", "#"]
    assert injected.soft_positions == [0, 1, 2, 3, 4, 5, 6, 3, 4, 5, 6, 7]
    assert injected.kinds == [
        "marker", "main", "main", "relation", "tail", "tail", "tail",
        "marker", "main", "marker", "main", "marker",
    ]


def test_inject_empty_is_identity():
    marked = rx.mark_anchors(SPANDEX)
    injected = rx.inject(marked, [])
    assert injected.tokens == marked.tokens
    assert injected.soft_positions == list(range(len(marked.tokens)))


def test_inject_main_positions_invariant():
    marked = rx.mark_anchors(SPANDEX)
    base = rx.inject(marked, [])
    injected = rx.inject(marked, [KG_TRIPLES[0]])
    main_base = [(t, p) for t, p, k in zip(base.tokens, base.soft_positions, base.kinds) if k != "tail" and k != "relation"]
    main_inj = [(t, p) for t, p, k in zip(injected.tokens, injected.soft_positions, injected.kinds) if k in ("main", "marker")]
    assert main_base == main_inj


def test_inject_two_triples_same_head():
    marked = rx.mark_anchors(SPANDEX)
    triples = [
        rx.ExternalTriple("氨纶面料", "a_rel", "x y"),
        rx.ExternalTriple("氨纶面料", "b_rel", "z"),
    ]
    injected = rx.inject(marked, triples)
    # both branches follow 面料, each restarting at soft position 3
    assert injected.tokens[:9] == ["$", "氨纶", "面料", "a_rel", "x", "y", "b_rel", "z", "$"]
    assert injected.soft_positions[:9] == [0, 1, 2, 3, 4, 5, 3, 4, 3]
    assert rx.strip_injection(injected) == SPANDEX.tokens


def test_inject_rejects_unmatched_head():
    marked = rx.mark_anchors(SPANDEX)
    with pytest.raises(rx.RelationError, match="别的"):
        rx.inject(marked, [KG_TRIPLES[1]])


def test_strip_injection_roundtrip():
    rng = random.Random(1)
    for _ in range(100):
        toks = [f"t{rng.randint(0, 4)}" for _ in range(rng.randint(4, 9))]
        s = rx.AnchorSentence(toks, span1=(0, 2), span2=(3, len(toks)))
        triples = [rx.ExternalTriple(s.surface1, "rel", "tail tail")] * rng.randint(0, 2)
        injected = rx.inject(rx.mark_anchors(s), triples)
        assert rx.strip_injection(injected) == toks


# --------------------------------------------------------------------------
# features


def test_featurize_deterministic():
    injected = rx.inject(rx.mark_anchors(SPANDEX), [KG_TRIPLES[0]])
    assert np.array_equal(rx.featurize_relation(injected), rx.featurize_relation(injected))


def test_featurize_injection_changes_only_tail_block():
    marked = rx.mark_anchors(SPANDEX)
    with_branch = rx.featurize_relation(rx.inject(marked, [KG_TRIPLES[0]]))
    without = rx.featurize_relation(rx.inject(marked, []))
    tail_block = slice(2 * rx._BLOCK, 3 * rx._BLOCK)
    diff = with_branch != without
    assert diff[tail_block].any()
    diff[tail_block] = False
    assert not diff.any()


def test_featurize_distance_feature():
    s = rx.AnchorSentence(["a", "b", "c", "d", "e"], span1=(0, 1), span2=(3, 5))
    vec = rx.featurize_relation(rx.inject(rx.mark_anchors(s), []))
    assert vec[-1] == pytest.approx((3 - 1) / 5)


# --------------------------------------------------------------------------
# classifier


def separable_samples(rng, n=60):
    """The between-anchor token carries the label."""
    out = []
    for i in range(n):
        label = i % 2
        cue = "causes" if label else "near"
        toks = [f"h{i}", cue, f"p{i}"]
        s = rx.AnchorSentence(toks, span1=(0, 1), span2=(2, 3), relation_label="cause")
        out.append(rx.RelationSample(s, label))
    rng.shuffle(out)
    return out


def knowledge_dependent_samples(rng, offset, n=40):
    """Anchor surfaces are unique; the label is only visible in the kg tail."""
    samples, triples = [], []
    for i in range(n):
        label = i % 2
        head = f"mat{offset + i}"
        toks = [head, "made", "well", f"poi{offset + i}"]
        s = rx.AnchorSentence(toks, span1=(0, 1), span2=(3, 4), relation_label="cause")
        samples.append(rx.RelationSample(s, label))
        tail = "marker good" if label else "marker bad"
        triples.append(rx.ExternalTriple(head, "characteristic", tail))
    rng.shuffle(samples)
    return samples, triples


def test_train_separable_accuracy():
    rng = random.Random(0)
    samples = separable_samples(rng)
    clf = rx.train_relation_classifier(samples, [], seed=0)
    correct = sum(
        1 for s in samples if (rx.predict(clf, s.sentence, []) >= 0.5) == bool(s.label)
    )
    assert correct / len(samples) >= 0.99


def test_train_deterministic_given_seed():
    rng = random.Random(1)
    samples = separable_samples(rng)
    c1 = rx.train_relation_classifier(samples, [], seed=5)
    c2 = rx.train_relation_classifier(samples, [], seed=5)
    assert np.array_equal(c1.weights, c2.weights)


def test_train_rejects_single_class():
    rng = random.Random(2)
    samples = [s for s in separable_samples(rng) if s.label == 1]
    with pytest.raises(rx.RelationError):
        rx.train_relation_classifier(samples, [], seed=0)


def test_heldout_auc_on_separable_data():
    rng = random.Random(3)
    train = separable_samples(rng, n=60)
    held = separable_samples(rng, n=30)
    clf = rx.train_relation_classifier(train, [], seed=0)
    scores = [rx.predict(clf, s.sentence, []) for s in held]
    assert oracles.auc([s.label for s in held], scores) >= 0.95


def test_predict_probability_bounds():
    rng = random.Random(4)
    samples = separable_samples(rng)
    clf = rx.train_relation_classifier(samples, [], seed=0)
    for s in samples:
        assert 0.0 <= rx.predict(clf, s.sentence, []) <= 1.0


def test_predict_ignores_irrelevant_heads():
    rng = random.Random(5)
    samples = separable_samples(rng)
    clf = rx.train_relation_classifier(samples, [], seed=0)
    irrelevant = [rx.ExternalTriple("nobody", "rel", "tail")]
    for s in samples[:10]:
        assert rx.predict(clf, s.sentence, []) == rx.predict(clf, s.sentence, irrelevant)


def test_injection_improves_auc_on_knowledge_dependent_data():
    rng = random.Random(6)
    train, train_triples = knowledge_dependent_samples(rng, offset=0)
    held, held_triples = knowledge_dependent_samples(rng, offset=1000)
    labels = [s.label for s in held]

    with_inj = rx.train_relation_classifier(train, train_triples, seed=0)
    scores_with = [rx.predict(with_inj, s.sentence, held_triples) for s in held]
    without = rx.train_relation_classifier(train, [], seed=0)
    scores_without = [rx.predict(without, s.sentence, []) for s in held]

    auc_with = oracles.auc(labels, scores_with)
    auc_without = oracles.auc(labels, scores_without)
    assert auc_with > auc_without
    assert auc_with >= 0.95


def test_classifier_roundtrip_byte_stable(tmp_path):
    rng = random.Random(7)
    clf = rx.train_relation_classifier(separable_samples(rng), [], seed=9)
    p1, p2 = tmp_path / "c1.json", tmp_path / "c2.json"
    clf.save(str(p1))
    loaded = rx.RelationClassifier.load(str(p1))
    loaded.save(str(p2))
    assert p1.read_bytes() == p2.read_bytes()
    assert loaded.seed == 9


def test_samples_jsonl_roundtrip(tmp_path):
    rng = random.Random(8)
    samples = separable_samples(rng, n=6)
    path = tmp_path / "samples.jsonl"
    rx.write_samples_jsonl(samples, str(path))
    loaded = rx.read_samples_jsonl(str(path))
    assert [(s.sentence.tokens, s.sentence.span1, s.sentence.span2, s.label) for s in loaded] == [
        (s.sentence.tokens, s.sentence.span1, s.sentence.span2, s.label) for s in samples
    ]


def test_samples_jsonl_rejects_bad_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"tokens": ["a"], "span1": [0, 1]}\n', encoding="utf-8")
    with pytest.raises(rx.RelationError, match="1"):
        rx.read_samples_jsonl(str(path))
