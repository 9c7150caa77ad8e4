"""Memory of previously rewarded actions."""
from __future__ import annotations


class McaBuffer:
    def __init__(self):
        self.entries = []
        self.last_step = None

    def __len__(self):
        return len(self.entries)

    def record(self, step, action, reward_delta):
        """Append ``action`` when ``reward_delta`` is positive; steps must strictly increase."""
        if self.last_step is not None and step <= self.last_step:
            raise ValueError(f"step {step} is not after the last recorded step {self.last_step}")
        self.last_step = step
        if reward_delta > 0:
            self.entries.append((step, action))
        return self

    def view(self, window=None):
        if window is not None and window < 1:
            raise ValueError("window must be at least 1")
        actions = [a for _, a in self.entries]
        return actions if window is None else actions[-window:]

    def text(self, window=None):
        return ", ".join(self.view(window))

    def clear(self):
        self.entries.clear()
        self.last_step = None


def mca_record(buffer, step, action, reward_delta):
    return buffer.record(step, action, reward_delta)


def mca_view(buffer, window=None, joined=False):
    return buffer.text(window) if joined else buffer.view(window)
