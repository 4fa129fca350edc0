import json
import os

import pytest

from fixture_data import write_catalog
from kgforge.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("KGFORGE_CONFIG", raising=False)
    return tmp_path


def test_unknown_subcommand_exits_1(workdir, capsys):
    code, _out, err = run(capsys, "frobnicate")
    assert code == 1


def test_missing_required_arg_exits_1(workdir, capsys):
    code, _out, err = run(capsys, "rewrite", "--utterance", "hi")
    assert code == 1


def test_runtime_error_exits_2(workdir, capsys):
    code, _out, err = run(capsys, "ingest", "--input", "missing.jsonl")
    assert code == 2
    assert "error" in err


def test_kg_stats_on_empty_store(workdir, capsys):
    code, out, _ = run(capsys, "kg", "stats", "--kg", "kg.jsonl")
    assert code == 0
    stats = json.loads(out)
    assert all(v == 0 for v in stats.values())


def test_kg_import_and_stats(workdir, capsys):
    write_catalog("catalog.jsonl")
    code, out, _ = run(capsys, "kg", "import", "--kg", "kg.jsonl", "--catalog", "catalog.jsonl")
    assert code == 0
    counts = json.loads(out)
    assert counts["concept"] > 0
    code, out, _ = run(capsys, "kg", "stats", "--kg", "kg.jsonl")
    assert json.loads(out)["poi"] == 4


def test_ingest_reports_counts(workdir, capsys):
    write_jsonl("docs.jsonl", [
        {"id": "d1", "text": "保湿效果好。保湿", "source": "article", "category_path": []},
    ])
    code, out, _ = run(capsys, "ingest", "--input", "docs.jsonl", "--stats-out", "stats.tsv")
    assert code == 0
    report = json.loads(out)
    assert report["documents"] == 1
    assert report["sentences"] == 2
    assert os.path.exists("stats.tsv")


def test_mine_phrases_writes_candidates(workdir, capsys):
    rows = [{"id": f"d{i}", "text": "面料亲肤透气。亲肤。舒服," * 2 + "亲肤",
             "source": "detail_page", "category_path": ["clothing"]} for i in range(2)]
    write_jsonl("docs.jsonl", rows)
    with open("lexicon.txt", "w", encoding="utf-8") as f:
        f.write("亲肤\n")
    code, out, _ = run(capsys, "mine-phrases", "--input", "docs.jsonl",
                       "--lexicon", "lexicon.txt", "--output", "phrases.jsonl",
                       "--min-count", "2", "--max-phrase-len", "3",
                       "--rf-trees", "5", "--rf-k", "10", "--seed", "7")
    assert code == 0
    counts = json.loads(out)
    assert counts["final"] <= counts["seg_kept"] <= counts["rf_kept"] <= counts["raw"]
    lines = [json.loads(l) for l in open("phrases.jsonl", encoding="utf-8")]
    assert any(l["tokens"] == ["亲", "肤"] and l["status"] == "final" for l in lines)


def test_cli_deterministic_stdout(workdir, capsys):
    rows = [{"id": "d1", "text": "面料亲肤透气。面料亲肤透气。亲肤。亲肤", "source": "article",
             "category_path": []}]
    write_jsonl("docs.jsonl", rows)
    with open("lexicon.txt", "w", encoding="utf-8") as f:
        f.write("亲肤\n")
    argv = ["mine-phrases", "--input", "docs.jsonl", "--lexicon", "lexicon.txt",
            "--output", "phrases.jsonl", "--min-count", "2", "--max-phrase-len", "3",
            "--rf-trees", "4", "--rf-k", "8", "--seed", "3"]
    code1, out1, _ = run(capsys, *argv)
    bytes1 = open("phrases.jsonl", "rb").read()
    code2, out2, _ = run(capsys, *argv)
    assert (code1, code2) == (0, 0)
    assert out1 == out2
    assert open("phrases.jsonl", "rb").read() == bytes1


def test_config_file_supplies_defaults(workdir, capsys):
    write_catalog("catalog.jsonl")
    run(capsys, "kg", "import", "--kg", "kg.jsonl", "--catalog", "catalog.jsonl")
    with open("kgforge.conf", "w", encoding="utf-8") as f:
        f.write("min_count = 2\nseed = 9\n")
    rows = [{"id": "d1", "text": "面料亲肤透气。面料亲肤透气。亲肤。亲肤", "source": "article",
             "category_path": []}]
    write_jsonl("docs.jsonl", rows)
    with open("lexicon.txt", "w", encoding="utf-8") as f:
        f.write("亲肤\n")
    code, out, _ = run(capsys, "--config", "kgforge.conf", "mine-phrases",
                       "--input", "docs.jsonl", "--lexicon", "lexicon.txt",
                       "--output", "phrases.jsonl", "--rf-trees", "4", "--rf-k", "8")
    assert code == 0
    assert json.loads(out)["raw"] >= 1  # min_count=2 came from the config file


def test_queue_export_import_cycle(workdir, capsys):
    write_catalog("catalog.jsonl")
    run(capsys, "kg", "import", "--kg", "kg.jsonl", "--catalog", "catalog.jsonl")
    rows = [{"id": "d1", "text": "保湿補水很好。保湿補水很好。保湿。保湿", "source": "article",
             "category_path": ["美妆", "洗面奶"]}]
    write_jsonl("docs.jsonl", rows)
    with open("poi_lex.txt", "w", encoding="utf-8") as f:
        f.write("保湿\n")
    code, out, _ = run(capsys, "mine-poi", "--input", "docs.jsonl", "--lexicon", "poi_lex.txt",
                       "--kg", "kg.jsonl", "--queue", "queue.jsonl",
                       "--min-count", "2", "--max-phrase-len", "3",
                       "--rf-trees", "4", "--rf-k", "8", "--seed", "1")
    assert code == 0
    assert json.loads(out)["queued"] >= 1
    code, out, _ = run(capsys, "queue", "export", "--queue", "queue.jsonl", "--out", "tasks.jsonl")
    assert code == 0
    exported = [json.loads(l) for l in open("tasks.jsonl", encoding="utf-8")]
    labels = [{"id": t["id"], "label": "accept", "annotator": "cli"} for t in exported]
    write_jsonl("labels.jsonl", labels)
    code, out, _ = run(capsys, "queue", "import", "--queue", "queue.jsonl", "--labels", "labels.jsonl")
    assert code == 0
    assert json.loads(out)["applied"] == len(labels)
    # applying accepted tasks on re-run writes the POI triples
    code, out, _ = run(capsys, "mine-poi", "--input", "docs.jsonl", "--lexicon", "poi_lex.txt",
                       "--kg", "kg.jsonl", "--queue", "queue.jsonl",
                       "--min-count", "2", "--max-phrase-len", "3",
                       "--rf-trees", "4", "--rf-k", "8", "--seed", "1")
    assert json.loads(out)["written"] >= 1


def scripted_scenario(capsys, run_fn):
    """ingest -> mine -> auto-label -> inherit -> index -> rewrite/qa/reason."""
    write_catalog("catalog.jsonl")
    assert run_fn(capsys, "kg", "import", "--kg", "kg.jsonl", "--catalog", "catalog.jsonl")[0] == 0

    write_jsonl("articles.jsonl", [
        {"id": "a1", "text": "保湿补水效果好。保湿。面霜默认," * 2 + "保湿",
         "source": "article", "category_path": ["美妆", "洗面奶"]},
    ])
    write_jsonl("chatlog.jsonl", [
        {"id": "c1", "text": "我皮肤干怎么办。皮肤干。求推荐," * 2 + "皮肤干",
         "source": "chatlog", "category_path": []},
    ])
    write_jsonl("baike.jsonl", [
        {"id": "b1", "text": "皮肤干就要保湿。", "source": "baike", "category_path": []},
    ])
    with open("poi_lex.txt", "w", encoding="utf-8") as f:
        f.write("保湿\n")
    with open("prob_lex.txt", "w", encoding="utf-8") as f:
        f.write("皮肤干\n")

    mining = ["--min-count", "2", "--max-phrase-len", "3", "--rf-trees", "5",
              "--rf-k", "10", "--seed", "11"]
    assert run_fn(capsys, "ingest", "--input", "articles.jsonl")[0] == 0
    assert run_fn(capsys, "mine-poi", "--input", "articles.jsonl", "--lexicon", "poi_lex.txt",
                  "--kg", "kg.jsonl", "--queue", "queue.jsonl", "--auto-accept", *mining)[0] == 0
    assert run_fn(capsys, "mine-problems", "--input", "chatlog.jsonl", "--lexicon", "prob_lex.txt",
                  "--kg", "kg.jsonl", "--queue", "queue.jsonl", "--auto-accept", *mining)[0] == 0
    assert run_fn(capsys, "mine-relations", "--input", "baike.jsonl", "--kg", "kg.jsonl",
                  "--queue", "queue.jsonl", "--relation", "need", "--pois", "poi_lex.txt",
                  "--auto-accept", "--seed", "11")[0] == 0
    assert run_fn(capsys, "kg", "inherit", "--kg", "kg.jsonl")[0] == 0
    code, out, _ = run_fn(capsys, "kg", "index", "--kg", "kg.jsonl", "--out", "index.tsv")
    assert code == 0

    code, out, _ = run_fn(capsys, "rewrite", "--kg", "kg.jsonl",
                          "--utterance", "我的皮肤有点干, 适合什么洗面奶")
    assert code == 0
    rewrite = json.loads(out)

    code, out, _ = run_fn(capsys, "qa", "--kg", "kg.jsonl", "--item", "item_foam_1",
                          "--question", "孕妇能用吗")
    assert code == 0
    qa = json.loads(out)

    code, out, _ = run_fn(capsys, "reason", "--kg", "kg.jsonl", "--item", "item_sweater_1")
    assert code == 0
    reason = json.loads(out)
    return rewrite, qa, reason


def test_scripted_scenario_end_to_end(workdir, capsys):
    rewrite, qa, reason = scripted_scenario(capsys, run)
    assert "保湿" in rewrite["rewritten_query"]
    assert rewrite["category_hint"] is not None
    assert qa["verdict"] == "affirmative"
    for surface in ("圆领", "可爱", "休闲"):
        assert surface in reason["text"]


def test_scripted_scenario_deterministic(workdir, capsys):
    first = scripted_scenario(capsys, run)
    for name in ("kg.jsonl", "queue.jsonl", "index.tsv"):
        os.replace(name, name + ".bak")
    second = scripted_scenario(capsys, run)
    assert first == second
    assert open("kg.jsonl", "rb").read() == open("kg.jsonl.bak", "rb").read()
    assert open("index.tsv", "rb").read() == open("index.tsv.bak", "rb").read()


def test_env_var_config_fallback(workdir, capsys, monkeypatch):
    write_catalog("catalog.jsonl")
    run(capsys, "kg", "import", "--kg", "kg.jsonl", "--catalog", "catalog.jsonl")
    rows = [{"id": "d1", "text": "面料亲肤透气。面料亲肤透气。亲肤。亲肤", "source": "article",
             "category_path": []}]
    write_jsonl("docs.jsonl", rows)
    with open("lexicon.txt", "w", encoding="utf-8") as f:
        f.write("亲肤\n")
    with open("env.conf", "w", encoding="utf-8") as f:
        f.write("min_count = 2\n")
    monkeypatch.setenv("KGFORGE_CONFIG", "env.conf")
    code, out, _ = run(capsys, "mine-phrases", "--input", "docs.jsonl",
                       "--lexicon", "lexicon.txt", "--output", "phrases.jsonl",
                       "--rf-trees", "4", "--rf-k", "8", "--seed", "2")
    assert code == 0
    assert json.loads(out)["raw"] >= 1


def test_serve_without_paths_exits_1(workdir, capsys):
    code, _out, err = run(capsys, "serve")
    assert code == 1
    assert "serve needs" in err
