"""kgforge: build and serve a pre-sales e-commerce domain knowledge graph.

Pipeline stages: phrase mining over a tokenized corpus, property-value
sequence tagging, relational link classification, a typed triple store with
inheritance and an inverted index, human-in-the-loop annotation queues, and
three conversation applications (query rewriting, property QA, reason
generation).
"""

__version__ = "0.1.0"
