"""Pieces shared by the three agents: vocabulary, state texts, batched environments."""
from __future__ import annotations

import re

import numpy as np

from ..autodiff.text import Vocab
from ..knowledge.affordances import affordance_text
from ..world.engine import REFUSAL, TextWorldEnv

# Fixed phrases the engine can emit, so the closed vocabulary covers them.
ENGINE_PHRASES = [
    "This room is called the . In it, you see: - the agent - You also see: - A door to the (that is open)",
    "On the is: nothing. The is closed. (containing nothing) , which is on , which is off",
    "In your inventory, you see: nothing.", REFUSAL,
    "You move to the . You move the to the inventory. You drop the . You focus on the .",
    "You are already focusing on the . That is not what the task asks for; the task has ended.",
    "The is now open. The is now closed. The is now connected to the . The is now disconnected.",
    "The measures a temperature of degrees. It typically lives about years. It is connected to: nothing.",
    "what is used for? what is capable of? is used for is capable of",
]


def build_vocab(spec, store=None, extra_texts=()):
    """Closed vocabulary from the world's names, templates and task texts plus the affordance lexicon."""
    v = Vocab()
    for text in ENGINE_PHRASES:
        v.add_text(text)
    for name in list(spec.locations) + list(spec.objects):
        v.add_text(name)
    for o in spec.objects.values():
        v.add_text(o.props.get("description", ""))
    for t in spec.templates:
        v.add_text(t.pattern.replace("OBJ", " "))
    for task in spec.tasks.values():
        v.add_text(task.description)
        for var in task.variations.values():
            for value in var.vars.values():
                v.add_text(value)
    for i in range(0, 1001):
        v.add(str(i))
    if store is not None:
        for t in store.triples():
            v.add_text(f"{t.subject} {t.object}")
    for text in extra_texts:
        v.add_text(text)
    return v


def mentioned_objects(text, names):
    """Entity names occurring in ``text`` as whole words, in ``names`` order."""
    return [n for n in names if re.search(r"(?<![a-z])" + re.escape(n) + r"(?![a-z])", text)]


def observation_text(result):
    """Feedback followed by the free look at the current room."""
    if result.obv == result.look:
        return result.obv
    return f"{result.obv} {result.look}".strip()


def aff_text_for(result, store, names):
    return affordance_text(mentioned_objects(result.look + " " + result.inv, names), store) if store else ""


class EnvBatch:
    """A fixed number of environments stepped in lockstep.

    Episodes are drawn from ``episodes`` (``(task, variation)`` pairs) in a
    seeded shuffled cycle, so the whole batch is deterministic given ``seed``.
    """

    def __init__(self, make_env, episodes, n_envs, seed):
        self.envs = [make_env() for _ in range(n_envs)]
        self.episodes = list(episodes)
        self.rng = np.random.default_rng(seed)
        self.seed = seed
        self._queue = []
        self.current = [None] * n_envs
        self.results = [self._reset(i) for i in range(n_envs)]

    def __len__(self):
        return len(self.envs)

    def _next_episode(self):
        if not self._queue:
            order = self.rng.permutation(len(self.episodes))
            self._queue = [self.episodes[i] for i in order]
        return self._queue.pop()

    def _reset(self, i):
        task, var = self._next_episode()
        self.current[i] = (task, var)
        return self.envs[i].reset(task, var, self.seed)

    def step(self, actions, force_done=None):
        """Step every env; finished episodes are reset.

        Returns ``(results, finished)`` where ``results[i]`` is the post-step
        result (before any reset) and ``self.results`` holds the observations
        the agent sees next.
        """
        stepped, finished = [], []
        for i, (env, a) in enumerate(zip(self.envs, actions)):
            r = env.step(a)
            if force_done is not None and force_done[i] and not r.done:
                r.done = True
            stepped.append(r)
            finished.append(r.done)
            self.results[i] = self._reset(i) if r.done else r
        return stepped, finished


def make_world_env(spec):
    return lambda: TextWorldEnv(spec)
