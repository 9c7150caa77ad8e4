"""Replay the golden sequence of every bundled task and print the score as it climbs."""
from kigames.world import TextWorldEnv, load_bundled_world

spec = load_bundled_world()
env = TextWorldEnv(spec)
for task in sorted(spec.tasks):
    r = env.reset(task, 0)
    print(f"== {task}: {r.desc}")
    for action in env.engine.golden(task, 0):
        r = env.step(action)
        print(f"  {action:<45} score {r.score:6.2f}")
    print(f"  done={r.done}")
