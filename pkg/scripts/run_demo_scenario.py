#!/usr/bin/env python3
"""End-to-end shopping-guide demo in a scratch directory.

Seeds the beauty/clothing catalog, mines a POI, a user problem and a need
link from tiny corpora with auto-accepted review tasks, runs inheritance and
indexing, then exercises the three applications: query rewriting for the
dry-skin utterance, property QA for the pregnant-women question, and a
recommendation reason for the sweater item.

Usage: python3 scripts/run_demo_scenario.py [workdir]
"""
import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))

from fixture_data import write_catalog  # noqa: E402
from kgforge.cli import main  # noqa: E402


def sh(*argv):
    print(f"$ kgforge {' '.join(argv)}")
    code = main(list(argv))
    if code != 0:
        raise SystemExit(f"command failed with exit code {code}")


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def run(workdir):
    os.makedirs(workdir, exist_ok=True)
    os.chdir(workdir)
    write_catalog("catalog.jsonl")
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
    open("poi_lex.txt", "w", encoding="utf-8").write("保湿\n")
    open("prob_lex.txt", "w", encoding="utf-8").write("皮肤干\n")

    mining = ["--min-count", "2", "--max-phrase-len", "3",
              "--rf-trees", "5", "--rf-k", "10", "--seed", "11"]
    sh("kg", "import", "--kg", "kg.jsonl", "--catalog", "catalog.jsonl")
    sh("ingest", "--input", "articles.jsonl", "--stats-out", "stats.tsv")
    sh("mine-poi", "--input", "articles.jsonl", "--lexicon", "poi_lex.txt",
       "--kg", "kg.jsonl", "--queue", "queue.jsonl", "--auto-accept", *mining)
    sh("mine-problems", "--input", "chatlog.jsonl", "--lexicon", "prob_lex.txt",
       "--kg", "kg.jsonl", "--queue", "queue.jsonl", "--auto-accept", *mining)
    sh("mine-relations", "--input", "baike.jsonl", "--kg", "kg.jsonl",
       "--queue", "queue.jsonl", "--relation", "need", "--pois", "poi_lex.txt",
       "--auto-accept", "--seed", "11")
    sh("kg", "inherit", "--kg", "kg.jsonl")
    sh("kg", "index", "--kg", "kg.jsonl", "--out", "index.tsv")
    sh("kg", "stats", "--kg", "kg.jsonl")
    sh("rewrite", "--kg", "kg.jsonl", "--utterance", "我的皮肤有点干, 适合什么洗面奶")
    sh("qa", "--kg", "kg.jsonl", "--item", "item_foam_1", "--question", "孕妇能用吗")
    sh("reason", "--kg", "kg.jsonl", "--item", "item_sweater_1")
    print(f"\nartifacts in {os.path.abspath(os.curdir)}")


if __name__ == "__main__":
    run(sys.argv[1] if len(sys.argv) > 1 else "demo_workdir")
