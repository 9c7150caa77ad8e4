"""Per-episode knowledge graph."""
from __future__ import annotations

from .triples import Triple


class KnowledgeGraph:
    """Additive entity/triple store; insertion order gives stable node indices."""

    def __init__(self, triples=()):
        self.entities = {}
        self.triples = {}
        self.update(triples)

    def __len__(self):
        return len(self.triples)

    def __contains__(self, item):
        return item in self.triples if isinstance(item, tuple) else item in self.entities

    def add_entity(self, name):
        if name not in self.entities:
            self.entities[name] = len(self.entities)
        return self.entities[name]

    def update(self, triples):
        for t in triples:
            t = Triple(*t)
            self.add_entity(t.subject)
            self.add_entity(t.object)
            self.triples.setdefault(t, None)
        return self

    def augment(self, store):
        """Merge the store's affordances for every entity currently in the graph."""
        for name in list(self.entities):
            self.update(store.lookup(name))
        return self

    def clear(self):
        self.entities.clear()
        self.triples.clear()

    def copy(self):
        return KnowledgeGraph(self.triples)

    @property
    def entity_names(self):
        return list(self.entities)

    def edges(self):
        """``(subject_index, object_index)`` for every triple, in insertion order."""
        return [(self.entities[t.subject], self.entities[t.object]) for t in self.triples]

    def dump(self):
        return "\n".join(sorted(str(t) for t in self.triples))


def kg_update(kg, triples):
    return kg.update(triples)


def kg_augment_affordances(kg, store):
    return kg.augment(store)
