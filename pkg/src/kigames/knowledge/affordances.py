"""Static affordance store (capableOf / usedFor triples) loaded from TSV."""
from __future__ import annotations

from pathlib import Path

from .triples import AFFORDANCE_RELATIONS, Triple, make_triple


class AffordanceError(ValueError):
    pass


class AffordanceStore:
    """Maps an entity name to its affordance triples.

    Lookups fall back to the entity's trailing words, so ``red box`` receives
    the entries of ``box`` rewritten with ``red box`` as subject.
    """

    def __init__(self, triples=()):
        self._by_subject = {}
        for t in triples:
            bucket = self._by_subject.setdefault(t.subject, [])
            if t not in bucket:
                bucket.append(t)

    def __len__(self):
        return sum(len(v) for v in self._by_subject.values())

    def __contains__(self, entity):
        return bool(self.lookup(entity))

    @property
    def lexicon(self):
        return sorted(self._by_subject)

    def triples(self):
        return [t for bucket in self._by_subject.values() for t in bucket]

    def lookup(self, entity):
        entity = entity.strip().lower()
        if entity in self._by_subject:
            return list(self._by_subject[entity])
        words = entity.split()
        for i in range(1, len(words)):
            head = " ".join(words[i:])
            if head in self._by_subject:
                return [Triple(entity, t.relation, t.object) for t in self._by_subject[head]]
        return []


def load_affordances(path=None):
    """Read ``subject<TAB>relation<TAB>object`` rows; ``#`` lines are comments."""
    path = Path(path) if path else bundled_affordance_path()
    triples, problems = [], []
    for no, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            problems.append(f"line {no}: expected 3 tab-separated columns, got {len(cols)}")
            continue
        if cols[1] not in AFFORDANCE_RELATIONS:
            problems.append(f"line {no}: unknown affordance relation {cols[1]!r}")
            continue
        triples.append(make_triple(*cols))
    if problems:
        raise AffordanceError(f"{path}: " + "; ".join(problems))
    return AffordanceStore(triples)


def bundled_affordance_path():
    return Path(__file__).resolve().parent.parent / "data" / "affordances.tsv"


def affordances_for(objects, store):
    """Union of the store's entries for ``objects``, deduplicated, in input order."""
    out, seen = [], set()
    for o in objects:
        for t in store.lookup(o):
            if t not in seen:
                seen.add(t)
                out.append(t)
    return out


def affordance_text(objects, store):
    """Affordances rendered as a sentence, for feeding into text channels."""
    triples = affordances_for(objects, store)
    return " ".join(f"{t.subject} {'is used for' if t.relation == 'usedFor' else 'is capable of'} {t.object}."
                    for t in triples)
