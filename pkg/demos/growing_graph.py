"""Watch the knowledge graph fill in while an episode is played, with and without affordances."""
from kigames.knowledge import KnowledgeGraph, extract_triples, load_affordances
from kigames.world import TextWorldEnv, load_bundled_world

spec = load_bundled_world()
store = load_affordances()
env = TextWorldEnv(spec)
r = env.reset("electricity", 0)
kg = KnowledgeGraph()
kg.update(extract_triples(f"{r.obv} {r.look} {r.inv}"))
print(f"start: {len(kg)} triples")
for action in env.engine.golden("electricity", 0):
    r = env.step(action)
    kg.update(extract_triples(f"{r.obv} {r.look} {r.inv}"))
    print(f"after {action!r}: {len(kg)} triples, {len(kg.entity_names)} entities")
kg.augment(store)
print(f"with affordances: {len(kg)} triples")
print(kg.dump())
