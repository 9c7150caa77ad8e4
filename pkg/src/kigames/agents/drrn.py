"""Value-based text agent: per-channel GRU state encoder, separate action encoder, per-action Q head."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..autodiff import ops
from ..autodiff.nn import ParamStore, add_embedding, add_gru, add_linear, encode_unique
from ..autodiff.optim import Adam
from ..autodiff.tensor import Tape, Tensor
from ..knowledge.mca import McaBuffer
from .common import aff_text_for, observation_text

STATE_CHANNELS = ("obv", "desc", "inv")


@dataclass
class DrrnConfig:
    use_aff: bool = False
    use_mca: bool = False
    hidden: int = 128
    lr: float = 1e-4
    gamma: float = 0.9
    replay_capacity: int = 10_000
    batch_size: int = 32
    target_update: int = 100
    temp_start: float = 1.0
    temp_end: float = 0.1
    reward_scale: float = 0.01
    clip_norm: float = 5.0

    @property
    def channels(self):
        return STATE_CHANNELS + (("aff",) if self.use_aff else ()) + (("mca",) if self.use_mca else ())

    @property
    def variant(self):
        return {(False, False): "baseline", (True, False): "aff", (False, True): "mca", (True, True): "aff_mca"}[
            (self.use_aff, self.use_mca)]


def act(qs, mode, temperature=1.0, rng=None):
    """Pick an index: softmax sampling at ``temperature`` in train mode, first argmax in eval mode."""
    qs = np.asarray(qs, dtype=float)
    if qs.size == 0:
        raise ValueError("no actions to choose from")
    if mode == "eval" or qs.size == 1:
        return int(np.argmax(qs))
    z = qs / temperature
    p = np.exp(z - z.max())
    p /= p.sum()
    return int(rng.choice(qs.size, p=p))


@dataclass
class Transition:
    state: tuple            # token tuple per channel
    action: tuple
    reward: float
    next_state: tuple
    next_actions: tuple     # token tuples of the next valid actions
    done: bool


class ReplayBuffer:
    def __init__(self, capacity, seed=0):
        self.capacity = capacity
        self.items = []
        self.pos = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return len(self.items)

    def add(self, tr):
        if len(self.items) < self.capacity:
            self.items.append(tr)
        else:
            self.items[self.pos] = tr
        self.pos = (self.pos + 1) % self.capacity

    def sample(self, n):
        idx = self.rng.choice(len(self.items), size=min(n, len(self.items)), replace=False)
        return [self.items[i] for i in idx]


def init_params(vocab_size, config, rng):
    F = config.hidden
    p = ParamStore()
    add_embedding(p, rng, "embed", vocab_size, F)
    for ch in config.channels + ("act",):
        add_gru(p, rng, f"gru.{ch}", F, F)
    add_linear(p, rng, "q.hidden", (len(config.channels) + 1) * F, F)
    add_linear(p, rng, "q.out", F, 1)
    return p


class DrrnAgent:
    kind = "drrn"

    def __init__(self, vocab, config=None, seed=0, store=None, object_names=()):
        self.vocab = vocab
        self.config = config or DrrnConfig()
        self.rng = np.random.default_rng(seed)
        self.params = init_params(len(vocab), self.config, self.rng)
        self.target = self.params.copy()
        self.opt = Adam(self.params, lr=self.config.lr, clip_norm=self.config.clip_norm)
        self.replay = ReplayBuffer(self.config.replay_capacity, seed)
        self.store = store
        self.object_names = list(object_names)
        self.updates = 0
        self.log = []
        self._target_cache = ({}, {})

    # -- text ------------------------------------------------------------------

    def state_texts(self, result, mca):
        texts = {"obv": observation_text(result), "desc": result.desc, "inv": result.inv}
        if self.config.use_aff:
            texts["aff"] = aff_text_for(result, self.store, self.object_names)
        if self.config.use_mca:
            texts["mca"] = mca.text() if mca is not None else ""
        return texts

    def tokens(self, texts):
        missing = [c for c in self.config.channels if c not in texts]
        if missing:
            raise KeyError(f"missing text for channel(s) {missing} of the {self.config.variant} variant")
        return tuple(tuple(self.vocab.encode(texts[c])) for c in self.config.channels)

    # -- network ---------------------------------------------------------------

    def encode_states(self, states, params=None):
        """(B, C*F) concatenated channel encodings for token-tuple states."""
        p = params or self.params
        cols = []
        for ci, ch in enumerate(self.config.channels):
            cols.append(encode_unique(p["embed"], p.gru(f"gru.{ch}"), [list(s[ci]) for s in states]))
        return ops.concat(cols, axis=-1)

    def encode_actions(self, actions, params=None):
        p = params or self.params
        return encode_unique(p["embed"], p.gru("gru.act"), [list(a) for a in actions])

    def q_pairs(self, S, G, state_idx, action_idx, params=None):
        p = params or self.params
        rows = ops.concat([ops.take(S, np.asarray(state_idx)), ops.take(G, np.asarray(action_idx))], axis=-1)
        h = ops.relu(ops.linear(rows, p["q.hidden.W"], p["q.hidden.b"]))
        return ops.reshape(ops.linear(h, p["q.out.W"], p["q.out.b"]), (-1,))

    def q_values(self, state, actions, params=None):
        """Q for each action token tuple in ``actions`` at one token-tuple ``state``."""
        if not actions:
            raise ValueError("q_values needs at least one action")
        S = self.encode_states([state], params)
        uniq = list(dict.fromkeys(actions))
        G = self.encode_actions(uniq, params)
        pos = {a: i for i, a in enumerate(uniq)}
        return self.q_pairs(S, G, [0] * len(actions), [pos[a] for a in actions], params)

    def batch_q(self, states, action_lists, params=None):
        """Per-state Q arrays for many states at once (no gradient)."""
        S = self.encode_states(states, params)
        uniq = list(dict.fromkeys(a for acts in action_lists for a in acts))
        pos = {a: i for i, a in enumerate(uniq)}
        G = self.encode_actions(uniq, params)
        si = [i for i, acts in enumerate(action_lists) for _ in acts]
        ai = [pos[a] for acts in action_lists for a in acts]
        q = self.q_pairs(S, G, si, ai, params).data
        out, k = [], 0
        for acts in action_lists:
            out.append(q[k:k + len(acts)])
            k += len(acts)
        return out

    # -- learning --------------------------------------------------------------

    def _target_rows(self, items, which):
        """Target-network encodings, memoised until the next target refresh."""
        cache = self._target_cache[which]
        todo = [x for x in dict.fromkeys(items) if x not in cache]
        if todo:
            enc = self.encode_states(todo, self.target) if which == 0 else self.encode_actions(todo, self.target)
            for x, row in zip(todo, enc.data):
                cache[x] = row
        return Tensor(np.stack([cache[x] for x in items]))

    def td_targets(self, batch):
        cfg = self.config
        y = np.array([t.reward for t in batch], dtype=float)
        live = [i for i, t in enumerate(batch) if not t.done and t.next_actions]
        if live and cfg.gamma > 0:
            states = [batch[i].next_state for i in live]
            S = self._target_rows(states, 0)
            uniq = list(dict.fromkeys(a for i in live for a in batch[i].next_actions))
            G = self._target_rows(uniq, 1)
            pos = {a: k for k, a in enumerate(uniq)}
            si = [k for k, i in enumerate(live) for _ in batch[i].next_actions]
            ai = [pos[a] for i in live for a in batch[i].next_actions]
            q = self.q_pairs(S, G, si, ai, self.target).data
            k = 0
            for i in live:
                n = len(batch[i].next_actions)
                y[i] += cfg.gamma * q[k:k + n].max()
                k += n
        return y

    def td_update(self, batch):
        """One squared-TD-error Adam step; returns (loss, mean_q)."""
        if not batch:
            raise ValueError("empty batch")
        y = self.td_targets(batch)
        uniq = list(dict.fromkeys(t.action for t in batch))
        pos = {a: i for i, a in enumerate(uniq)}
        with Tape() as tape:
            S = self.encode_states([t.state for t in batch])
            G = self.encode_actions(uniq)
            q = self.q_pairs(S, G, list(range(len(batch))), [pos[t.action] for t in batch])
            loss = ops.mean(ops.square(ops.sub(q, y)))
        grads = tape.backward(loss, list(self.params))
        self.opt.step(grads)
        self.updates += 1
        if self.updates % self.config.target_update == 0:
            self.target.load_state_dict(self.params.state_dict())
            self._target_cache = ({}, {})
        row = (self.updates, float(loss.data), float(q.data.mean()))
        self.log.append(row)
        return row[1], row[2]

    def temperature(self, frac):
        c = self.config
        return c.temp_start + (c.temp_end - c.temp_start) * min(max(frac, 0.0), 1.0)

    def train(self, batch_envs, total_steps, on_episode=None):
        """Interact for ``total_steps`` environment steps, updating after every batch step."""
        n = len(batch_envs)
        mcas = [McaBuffer() for _ in range(n)]
        done_steps = 0
        while done_steps < total_steps:
            temp = self.temperature(done_steps / max(total_steps, 1))
            results = list(batch_envs.results)
            states = [self.tokens(self.state_texts(r, m)) for r, m in zip(results, mcas)]
            acts = [[tuple(self.vocab.encode(a)) for a in r.valid_actions] for r in results]
            qs = self.batch_q(states, acts)
            choice = [act(q, "train", temp, self.rng) for q in qs]
            actions = [r.valid_actions[c] for r, c in zip(results, choice)]
            stepped, finished = batch_envs.step(actions)
            for i, r in enumerate(stepped):
                mcas[i].record(r.step, actions[i], r.reward)
                nxt = self.tokens(self.state_texts(r, mcas[i]))
                self.replay.add(Transition(
                    states[i], acts[i][choice[i]], r.reward * self.config.reward_scale, nxt,
                    tuple(tuple(self.vocab.encode(a)) for a in r.valid_actions), r.done))
                if finished[i]:
                    if on_episode:
                        on_episode(r)
                    mcas[i] = McaBuffer()
            done_steps += n
            if len(self.replay) >= self.config.batch_size:
                self.td_update(self.replay.sample(self.config.batch_size))
        return self.log

    # -- acting ------------------------------------------------------------------

    def new_context(self):
        return McaBuffer()

    def choose_batch(self, contexts, results, rng, mode="eval"):
        states = [self.tokens(self.state_texts(r, m)) for r, m in zip(results, contexts)]
        acts = [[tuple(self.vocab.encode(a)) for a in r.valid_actions] for r in results]
        qs = self.batch_q(states, acts)
        return [r.valid_actions[act(q, mode, self.config.temp_end, rng)] for r, q in zip(results, qs)]

    def after_step(self, context, action, result):
        context.record(result.step, action, result.reward)

    def config_dict(self):
        return asdict(self.config)
