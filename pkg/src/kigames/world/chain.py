"""Three-room chain used as a solvable sanity check for value-based agents.

Rooms 0 and 1 are ordinary; room 2 is the goal.  ``go right`` moves one room
toward the goal, ``go left`` moves one room back (staying put in room 0).
Reaching the goal is worth 100 points and ends the episode.
"""
from __future__ import annotations

import numpy as np

from .engine import StepResult
from .worldfile import MAX_STEPS

ACTIONS = ("go left", "go right")
N_STATES = 3
GOAL = 2
DESC = "Reach the goal room."


def chain_transition(s, a):
    """Next room and score points for action index ``a`` in room ``s``."""
    nxt = min(s + 1, GOAL) if a == 1 else max(s - 1, 0)
    return nxt, (100.0 if nxt == GOAL else 0.0)


def value_iteration(gamma=0.9, reward_scale=0.01, tol=1e-12):
    """Optimal Q over the non-terminal rooms, shape (2, 2) indexed [room, action]."""
    q = np.zeros((GOAL, len(ACTIONS)))
    while True:
        new = np.zeros_like(q)
        for s in range(GOAL):
            for a in range(len(ACTIONS)):
                nxt, pts = chain_transition(s, a)
                future = 0.0 if nxt == GOAL else gamma * q[nxt].max()
                new[s, a] = pts * reward_scale + future
        if np.max(np.abs(new - q)) < tol:
            return new
        q = new


class ChainEnv:
    """Text interface to the chain with the same reset/step surface as the world engine."""

    tasks = ("chain",)

    def __init__(self):
        self.room = 0
        self.steps = 0
        self.score = 0.0
        self.done = True

    def _look(self):
        return f"You are in room {self.room}."

    def _result(self, obv, reward):
        done = self.done
        return StepResult(
            obv=obv, inv="", desc=DESC, reward=reward, score=self.score,
            done=done, valid_actions=[] if done else list(ACTIONS),
            golden_next=None if done else "go right", look=self._look(), step=self.steps,
        )

    def reset(self, task_id="chain", variation=0, seed=0):
        if task_id != "chain":
            raise KeyError(f"unknown task {task_id!r}; known: ['chain']")
        self.room, self.steps, self.score, self.done = 0, 0, 0.0, False
        return self._result(self._look(), 0.0)

    def step(self, action):
        if self.done:
            raise RuntimeError("episode is finished; call reset")
        self.steps += 1
        reward = 0.0
        if action in ACTIONS:
            self.room, reward = chain_transition(self.room, ACTIONS.index(action))
            obv = self._look()
        else:
            obv = "You can't do that."
        self.score += reward
        self.done = self.room == GOAL or self.steps >= MAX_STEPS
        return self._result(obv, reward)
