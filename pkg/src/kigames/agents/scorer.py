"""Multiple-choice action scorer: a GRU reads state, separator and action and emits one logit.

Trained with cross-entropy to pick the gold action among random distractors, optionally after a
question-answering warm-up on affordance triples; acts by nucleus (top-p) sampling over all valid
actions with a windowed memory of rewarded actions appended to the state.
"""
from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass

import numpy as np

from ..autodiff import ops
from ..autodiff.nn import ParamStore, add_embedding, add_gru, add_linear, encode_batch
from ..autodiff.optim import Adam
from ..autodiff.tensor import Tape
from ..knowledge.mca import McaBuffer


@dataclass
class ScorerConfig:
    embed: int = 64
    hidden: int = 128
    max_len: int = 256
    max_action_tokens: int = 16
    lr: float = 1e-3
    epochs: int = 3
    batch_size: int = 8
    n_distractors: int = 4
    repeats: int = 40
    max_detour: int = 3
    rename: bool = True
    top_p: float = 0.9
    mca_window: int = 5
    use_mca: bool = True
    aff_pretrain: bool = False
    pretrain_epochs: int = 100
    qa_distractors: int = 3
    clip_norm: float = 5.0

    @property
    def state_budget(self):
        return self.max_len - 1 - self.max_action_tokens


@dataclass
class ScorerExample:
    state: str
    candidates: list
    gold: int

    def to_json(self):
        return json.dumps({"state": self.state, "candidates": self.candidates, "gold": self.gold})

    @classmethod
    def from_json(cls, line):
        d = json.loads(line)
        return cls(d["state"], list(d["candidates"]), int(d["gold"]))


def build_training_example(state, valid_actions, gold_action, n, rng):
    """Gold plus up to ``n`` distinct distractors from the other valid actions, shuffled."""
    if gold_action not in valid_actions:
        raise ValueError(f"gold action {gold_action!r} is not among the valid actions")
    pool = [a for a in dict.fromkeys(valid_actions) if a != gold_action]
    k = min(n, len(pool))
    picks = [pool[i] for i in rng.choice(len(pool), size=k, replace=False)] if k else []
    cands = picks + [gold_action]
    order = rng.permutation(len(cands))
    cands = [cands[i] for i in order]
    return ScorerExample(state, cands, cands.index(gold_action))


def nucleus(scores, p):
    """Indices of the smallest highest-probability prefix whose mass reaches ``p`` (ties by index)."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must be in (0, 1], got {p}")
    probs = ops._softmax_np(np.asarray(scores, dtype=float))
    order = np.argsort(-probs, kind="stable")
    cum = np.cumsum(probs[order])
    k = int(np.searchsorted(cum, p - 1e-12)) + 1
    return order[:min(k, len(order))], probs


def select_action(scores, p, rng):
    """Sample from the renormalised softmax restricted to the top-p nucleus."""
    keep, probs = nucleus(scores, p)
    w = probs[keep] / probs[keep].sum()
    return int(keep[rng.choice(len(keep), p=w)])


def qa_items(store, n_distractors, rng):
    """One multiple-choice question per affordance triple."""
    triples = store.triples()
    answers = sorted({t.object for t in triples})
    true_for = {}
    for t in triples:
        true_for.setdefault((t.subject, t.relation), set()).add(t.object)
    items = []
    for t in triples:
        verb = "used for" if t.relation == "usedFor" else "capable of"
        question = f"what is {t.subject} {verb}?"
        pool = [a for a in answers if a not in true_for[(t.subject, t.relation)]]
        k = min(n_distractors, len(pool))
        picks = [pool[i] for i in rng.choice(len(pool), size=k, replace=False)] if k else []
        cands = picks + [t.object]
        order = rng.permutation(len(cands))
        cands = [cands[i] for i in order]
        items.append(ScorerExample(question, cands, cands.index(t.object)))
    return items


def init_params(vocab_size, config, rng):
    p = ParamStore()
    add_embedding(p, rng, "embed", vocab_size, config.embed)
    add_gru(p, rng, "gru", config.embed, config.hidden)
    add_linear(p, rng, "head.hidden", config.hidden, config.hidden)
    add_linear(p, rng, "head.out", config.hidden, 1)
    return p


class ScorerAgent:
    kind = "scorer"

    def __init__(self, vocab, config=None, seed=0):
        self.vocab = vocab
        self.config = config or ScorerConfig()
        self.rng = np.random.default_rng(seed)
        self.params = init_params(len(vocab), self.config, self.rng)
        self.opt = Adam(self.params, lr=self.config.lr, clip_norm=self.config.clip_norm)
        self.log = []
        self.schedule = None

    # -- encoding ----------------------------------------------------------------

    def state_ids(self, text):
        ids = self.vocab.encode(text)
        budget = self.config.state_budget
        return ids[-budget:] if len(ids) > budget else ids

    def action_ids(self, text):
        return [self.vocab.sep_id] + self.vocab.encode(text)[: self.config.max_action_tokens]

    def logits(self, states, candidate_lists, params=None):
        """Flat logits for every (state, candidate) pair; the state prefix is encoded once and shared."""
        p = params or self.params
        hs = encode_batch(p["embed"], p.gru("gru"), [self.state_ids(s) for s in states])
        owner = np.array([i for i, c in enumerate(candidate_lists) for _ in c], dtype=np.int64)
        acts = [self.action_ids(a) for c in candidate_lists for a in c]
        h = encode_batch(p["embed"], p.gru("gru"), acts, h0=ops.take(hs, owner))
        z = ops.tanh(ops.linear(h, p["head.hidden.W"], p["head.hidden.b"]))
        return ops.reshape(ops.linear(z, p["head.out.W"], p["head.out.b"]), (-1,))

    def score(self, state, action):
        return float(self.logits([state], [[action]]).data[0])

    def scores(self, state, actions):
        return self.logits([state], [list(actions)]).data.copy()

    def loss(self, examples):
        """Mean cross-entropy of each example's gold candidate."""
        flat = self.logits([e.state for e in examples], [e.candidates for e in examples])
        total, k = None, 0
        for e in examples:
            n = len(e.candidates)
            ce = ops.cross_entropy(ops.getitem(flat, slice(k, k + n)), e.gold)
            total = ce if total is None else ops.add(total, ce)
            k += n
        return ops.mul(total, 1.0 / len(examples))

    # -- training ----------------------------------------------------------------

    def train_step(self, examples):
        if self.schedule is not None:
            lr, total, done = self.schedule
            self.opt.lr = lr * (1.0 - done / total)
            self.schedule = (lr, total, done + 1)
        with Tape() as tape:
            loss = self.loss(examples)
        self.opt.step(tape.backward(loss, list(self.params)))
        return float(loss.data)

    def train_epoch(self, examples, rng=None):
        """One shuffled pass in minibatches; returns the example-weighted mean loss."""
        if not examples:
            raise ValueError("no training examples")
        rng = rng or self.rng
        order = rng.permutation(len(examples))
        bs = self.config.batch_size
        total = 0.0
        for i in range(0, len(order), bs):
            batch = [examples[j] for j in order[i:i + bs]]
            total += self.train_step(batch) * len(batch)
        mean = total / len(examples)
        self.log.append(mean)
        return mean

    def accuracy(self, examples):
        hits = 0
        for e in examples:
            hits += int(np.argmax(self.scores(e.state, e.candidates)) == e.gold)
        return hits / len(examples)

    def affordance_pretrain(self, store, epochs=None, rng=None):
        """Warm up on affordance questions, resampling distractors every epoch."""
        rng = rng or self.rng
        epochs = self.config.pretrain_epochs if epochs is None else epochs
        losses = []
        for _ in range(epochs):
            losses.append(self.train_epoch(qa_items(store, self.config.qa_distractors, rng), rng))
        return losses

    # -- acting ------------------------------------------------------------------

    def state_text(self, result, mca=None):
        parts = [result.desc, result.obv, result.inv]
        if self.config.use_mca and mca is not None:
            parts.append(mca.text(self.config.mca_window))
        return " ".join(x for x in parts if x)

    def new_context(self):
        return McaBuffer()

    def choose_batch(self, contexts, results, rng, mode="eval"):
        out = []
        for ctx, r in zip(contexts, results):
            s = self.scores(self.state_text(r, ctx), r.valid_actions)
            out.append(r.valid_actions[select_action(s, self.config.top_p, rng)])
        return out

    def after_step(self, context, action, result):
        context.record(result.step, action, result.reward)

    def config_dict(self):
        return asdict(self.config)


# Actions that never end an episode or move objects, used for short detours before a golden continuation.
DETOUR_PREFIXES = ("go to ", "look at ", "open ", "close ")


def name_groups(spec):
    """Portable objects grouped by kind; swapping names within a group keeps every task solvable."""
    groups = {}
    for name, o in spec.objects.items():
        if o.props.get("portable"):
            sig = tuple(bool(o.props.get(k)) for k in ("living", "electrical", "tool"))
            groups.setdefault(sig, []).append(name)
    return [g for g in groups.values() if len(g) > 1]


class Renamer:
    """Consistent substitution of object names inside a text, longest names first."""

    def __init__(self, mapping):
        self.mapping = {k: v for k, v in mapping.items() if k != v}
        names = sorted(self.mapping, key=len, reverse=True)
        self.pattern = re.compile(r"(?<![a-z])(" + "|".join(map(re.escape, names)) + r")(?![a-z])") if names else None

    def __call__(self, text):
        if self.pattern is None:
            return text
        return self.pattern.sub(lambda m: self.mapping[m.group(1)], text)

    @classmethod
    def random(cls, groups, rng):
        mapping = {}
        for g in groups:
            for src, i in zip(g, rng.permutation(len(g))):
                mapping[src] = g[i]
        return cls(mapping)


def trajectory_examples(env, agent, task, variation, n, rng, max_detour=0, renamer=None):
    """Examples along one golden run, optionally with a random detour of harmless actions.

    The detour starts at a random point of the run; afterwards the gold label is the
    engine's golden pointer, which first walks back to the room the sequence expects.
    """
    r = env.reset(task, variation)
    mca = McaBuffer()
    detour = int(rng.integers(0, max_detour + 1))
    # half of the detours leave from the start room, so the first look happens somewhere unfamiliar
    start = -1
    if detour:
        start = int(rng.integers(0, len(env.engine.golden(task, variation))))
    out = []
    taken = 0
    while not r.done:
        if taken == start:
            for _ in range(detour):
                moves = [a for a in r.valid_actions if a.startswith(DETOUR_PREFIXES)]
                if not moves:
                    break
                a = moves[int(rng.integers(len(moves)))]
                r = env.step(a)
                mca.record(r.step, a, r.reward)
            start = -1
            continue
        gold = r.golden_next
        if gold not in r.valid_actions:
            break
        ex = build_training_example(agent.state_text(r, mca), r.valid_actions, gold, n, rng)
        if renamer is not None:
            ex = ScorerExample(renamer(ex.state), [renamer(c) for c in ex.candidates], ex.gold)
        out.append(ex)
        r = env.step(gold)
        mca.record(r.step, gold, r.reward)
        taken += 1
    return out


def epoch_examples(env, agent, episodes, rng, groups=()):
    """One epoch of freshly sampled examples: ``repeats`` runs per training episode."""
    c = agent.config
    out = []
    for task, var in episodes:
        for k in range(c.repeats):
            detour = c.max_detour if k else 0
            ren = Renamer.random(groups, rng) if groups and k else None
            out += trajectory_examples(env, agent, task, var, c.n_distractors, rng, detour, ren)
    return out


def golden_examples(env, agent, episodes, n, rng):
    """Plain examples from replaying each golden sequence once."""
    out = []
    for task, var in episodes:
        out += trajectory_examples(env, agent, task, var, n, rng)
    return out


def write_examples(path, examples):
    with open(path, "w") as f:
        for e in examples:
            f.write(e.to_json() + "\n")


def read_examples(path):
    with open(path) as f:
        return [ScorerExample.from_json(line) for line in f if line.strip()]


def train_scorer(agent, env, episodes, store=None, rng=None, dump=None):
    """Optional affordance warm-up, then ``epochs`` passes with the learning rate decayed linearly to zero.

    ``dump`` names a file that receives every training example, one JSON record per line.
    """
    c = agent.config
    rng = rng or agent.rng
    if c.aff_pretrain:
        if store is None:
            raise ValueError("affordance pretraining needs an affordance store")
        agent.affordance_pretrain(store, rng=rng)
    groups = name_groups(env.spec) if c.rename else ()
    data = [epoch_examples(env, agent, episodes, rng, groups) for _ in range(c.epochs)]
    if dump is not None:
        write_examples(dump, [e for d in data for e in d])
    total = sum(-(-len(d) // c.batch_size) for d in data)
    agent.opt.lr = c.lr
    agent.schedule = (c.lr, total, 0)
    losses = [agent.train_epoch(d, rng) for d in data]
    agent.schedule = None
    agent.opt.lr = c.lr
    return losses


def golden_steps(engine_env, agent, episodes):
    """(state text, valid actions, gold action) along each golden sequence."""
    out = []
    for task, var in episodes:
        r = engine_env.reset(task, var)
        mca = McaBuffer()
        for action in engine_env.engine.golden(task, var):
            out.append((agent.state_text(r, mca), list(r.valid_actions), action))
            r = engine_env.step(action)
            mca.record(r.step, action, r.reward)
    return out


def run_episode(env, agent, task, variation, seed=0, p=None, rng=None):
    """Score every valid action, pick by top-p, step; returns (transcript, final score)."""
    rng = rng or np.random.default_rng(seed)
    p = agent.config.top_p if p is None else p
    r = env.reset(task, variation, seed)
    mca = McaBuffer()
    transcript = []
    while not r.done:
        state = agent.state_text(r, mca)
        scores = agent.scores(state, r.valid_actions)
        action = r.valid_actions[select_action(scores, p, rng)]
        r = env.step(action)
        mca.record(r.step, action, r.reward)
        transcript.append((action, r.reward, r.score, mca.text(agent.config.mca_window)))
    return transcript, r.score


__all__ = [
    "ScorerAgent", "ScorerConfig", "ScorerExample", "build_training_example", "golden_examples",
    "golden_steps", "name_groups", "nucleus", "qa_items", "read_examples", "Renamer", "run_episode",
    "select_action", "train_scorer", "trajectory_examples", "write_examples",
]
