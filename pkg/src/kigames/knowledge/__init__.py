"""Affordance triples, memory of rewarded actions, and the per-episode knowledge graph."""
from .affordances import (
    AffordanceError, AffordanceStore, affordance_text, affordances_for, bundled_affordance_path, load_affordances,
)
from .extract import extract_triples
from .graph import KnowledgeGraph, kg_augment_affordances, kg_update
from .mca import McaBuffer, mca_record, mca_view
from .triples import RELATIONS, Triple, make_triple

__all__ = [
    "AffordanceError", "AffordanceStore", "KnowledgeGraph", "McaBuffer", "RELATIONS", "Triple",
    "affordance_text", "affordances_for", "bundled_affordance_path", "extract_triples", "kg_augment_affordances",
    "kg_update", "load_affordances", "make_triple", "mca_record", "mca_view",
]
