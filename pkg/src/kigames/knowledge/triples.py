"""Triples over a closed relation vocabulary."""
from __future__ import annotations

from typing import NamedTuple

RELATIONS = ("hasA", "in", "capableOf", "usedFor", "connectedTo")
AFFORDANCE_RELATIONS = ("capableOf", "usedFor")


class Triple(NamedTuple):
    subject: str
    relation: str
    object: str

    def __str__(self):
        return f"{self.subject} {self.relation} {self.object}"


def make_triple(subject, relation, obj):
    """Build a canonical triple; raises ValueError for relations outside :data:`RELATIONS`."""
    if relation not in RELATIONS:
        raise ValueError(f"unknown relation {relation!r}; expected one of {', '.join(RELATIONS)}")
    subject, obj = subject.strip().lower(), obj.strip().lower()
    if not subject or not obj:
        raise ValueError("triple endpoints must be non-empty")
    return Triple(subject, relation, obj)
