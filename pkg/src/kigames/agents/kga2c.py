"""Knowledge-graph actor-critic: graph attention over the game-state graph, template and object heads,
auxiliary template/object/entropy losses, and golden-action (GT) or valid-action (VT) targets."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..autodiff import ops
from ..autodiff.nn import ParamStore, add_embedding, add_gru, add_linear, encode_unique, pad_batch, uniform
from ..autodiff.optim import Adam
from ..autodiff.tensor import DTYPE, ShapeError, Tape, Tensor
from ..knowledge.affordances import affordance_text
from ..knowledge.extract import extract_triples
from ..knowledge.graph import KnowledgeGraph
from ..knowledge.mca import McaBuffer
from ..world.engine import Engine
from .common import mentioned_objects

SCORE_BITS = 10
MAX_MAGNITUDE = 2 ** (SCORE_BITS - 1) - 1


def binary_score_encoding(score):
    """Sign bit followed by the 9-bit big-endian magnitude (clamped to 511) of an integer score."""
    s = int(score)
    mag = min(abs(s), MAX_MAGNITUDE)
    bits = [1 if s < 0 else 0] + [(mag >> (SCORE_BITS - 2 - i)) & 1 for i in range(SCORE_BITS - 1)]
    return np.array(bits, dtype=DTYPE)


def decode_score_bits(bits):
    bits = [int(b) for b in bits]
    mag = 0
    for b in bits[1:]:
        mag = mag * 2 + b
    return -mag if bits[0] else mag


@dataclass
class Kga2cConfig:
    target_mode: str = "GT"
    use_mca: bool = False
    aff_in_kg: bool = False
    use_gat: bool = True
    aff_in_obs: bool = False
    aff_channel: bool = False
    embed: int = 50
    hidden: int = 100
    heads: int = 4
    attn_slope: float = 0.2
    lr: float = 3e-3
    dropout: float = 0.2
    gamma: float = 0.9
    rollout: int = 8
    c_T: float = 0.1
    c_O: float = 0.1
    c_E: float = 0.1
    c_V: float = 0.5
    reward_scale: float = 0.01
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.target_mode not in ("GT", "VT"):
            raise ValueError(f"target_mode must be GT or VT, got {self.target_mode!r}")
        if self.hidden % self.heads:
            raise ValueError(f"hidden size {self.hidden} is not divisible by {self.heads} heads")

    @property
    def channels(self):
        return ("obv", "desc", "inv") + (("mca",) if self.use_mca else ()) + (("aff",) if self.aff_channel else ())

    @property
    def state_width(self):
        return self.hidden + len(self.channels) * self.hidden + SCORE_BITS


VARIANTS = {
    "baseline_VT": dict(target_mode="VT"),
    "baseline_GT": dict(),
    "GT_mca": dict(use_mca=True),
    "GT_aff": dict(aff_in_kg=True),
    "GT_aff_mca": dict(aff_in_kg=True, use_mca=True),
    "GT_noGAT": dict(use_gat=False),
    "GT_aff_obs": dict(aff_in_obs=True),
    "GT_aff_enc": dict(aff_channel=True),
}


def variant_config(name, **overrides):
    if name not in VARIANTS:
        raise KeyError(f"unknown KG-A2C variant {name!r}; known: {sorted(VARIANTS)}")
    return Kga2cConfig(**{**VARIANTS[name], **overrides})


def init_params(vocab_size, n_templates, config, rng):
    E, H, K = config.embed, config.hidden, config.heads
    p = ParamStore()
    add_embedding(p, rng, "embed", vocab_size, E)
    for ch in config.channels:
        add_gru(p, rng, f"gru.{ch}", E, H)
    p.add("gat.W", uniform(rng, (E, H), E))
    p.add("gat.a_src", uniform(rng, (K, H // K), H // K))
    p.add("gat.a_dst", uniform(rng, (K, H // K), H // K))
    add_linear(p, rng, "gat.out", H, H)
    add_linear(p, rng, "trunk", config.state_width, H)
    add_linear(p, rng, "template", H, n_templates)
    add_linear(p, rng, "value", H, 1)
    for k in range(2):
        p.add(f"obj{k}.query", uniform(rng, (H, H), H))
        p.add(f"obj{k}.template", uniform(rng, (n_templates, H), H))
        p.add(f"obj{k}.node", uniform(rng, (E, H), E))
        p.add(f"obj{k}.graph", uniform(rng, (H, H), H))
    return p


# -- graphs ------------------------------------------------------------------

@dataclass(frozen=True)
class GraphSnapshot:
    names: tuple
    edges: tuple

    @classmethod
    def of(cls, kg):
        return cls(tuple(kg.entity_names), tuple(dict.fromkeys(kg.edges())))


@dataclass
class GraphBatch:
    """Several graphs laid out block-diagonally over one node axis."""
    ids: np.ndarray
    token_weights: np.ndarray
    adjacency: np.ndarray
    pool: np.ndarray
    nonempty: np.ndarray
    offsets: list
    sizes: list

    @property
    def n_nodes(self):
        return int(self.ids.shape[0])


def graph_batch(graphs, vocab):
    tokens, offsets, sizes = [], [], []
    for g in graphs:
        offsets.append(len(tokens))
        sizes.append(len(g.names))
        tokens.extend(vocab.encode(n) or [vocab.unk_id] for n in g.names)
    ids, mask = pad_batch(tokens)
    counts = mask.sum(axis=1, keepdims=True)
    M = len(tokens)
    adj = np.eye(M, dtype=bool)
    pool = np.zeros((len(graphs), M))
    for gi, g in enumerate(graphs):
        o = offsets[gi]
        for a, b in g.edges:
            adj[o + a, o + b] = adj[o + b, o + a] = True
        if sizes[gi]:
            pool[gi, o:o + sizes[gi]] = 1.0 / sizes[gi]
    nonempty = np.array([[1.0 if n else 0.0] for n in sizes])
    return GraphBatch(ids, mask / np.maximum(counts, 1.0), adj, pool, nonempty, offsets, sizes)


def node_features(params, gb):
    """(M, E) mean of each entity name's token embeddings."""
    emb = ops.take(params["embed"], gb.ids)
    return ops.sum(ops.mul(emb, gb.token_weights[..., None]), axis=1)


def gat_nodes(params, gb, config):
    """Per-node multi-head attention outputs, heads concatenated: (M, H), plus per-head attention."""
    H, K = config.hidden, config.heads
    d = H // K
    X = node_features(params, gb)
    Wh = ops.matmul(X, params["gat.W"])
    M = gb.n_nodes
    heads, attn = [], []
    for k in range(K):
        Whk = ops.getitem(Wh, (slice(None), slice(k * d, (k + 1) * d)))
        a_src = ops.reshape(ops.getitem(params["gat.a_src"], k), (d, 1))
        a_dst = ops.reshape(ops.getitem(params["gat.a_dst"], k), (d, 1))
        e = ops.add(ops.matmul(Whk, a_src), ops.reshape(ops.matmul(Whk, a_dst), (1, M)))
        A = ops.softmax(ops.leaky_relu(e, config.attn_slope), axis=-1, mask=gb.adjacency)
        attn.append(A)
        heads.append(ops.leaky_relu(ops.matmul(A, Whk), config.attn_slope))
    return ops.concat(heads, axis=-1), attn


def encode_kg(params, gb, config, return_attention=False, nodes=None):
    """Multi-head graph attention per node, head-concatenated, mean-pooled per graph, then tanh(W x + b).

    Returns a (G, H) tensor (rows of empty graphs are zero) and, optionally, the per-head attention
    matrices over the block-diagonal node axis.
    """
    G = len(gb.sizes)
    if gb.n_nodes == 0:
        zero = Tensor(np.zeros((G, config.hidden)))
        return (zero, []) if return_attention else zero
    h, attn = nodes if nodes is not None else gat_nodes(params, gb, config)
    pooled = ops.matmul(gb.pool, h)
    g = ops.mul(ops.tanh(ops.linear(pooled, params["gat.out.W"], params["gat.out.b"])), gb.nonempty)
    return (g, attn) if return_attention else g


def fuse_state(g, o, b):
    """Concatenate graph, text and score encodings in that order."""
    g = g if isinstance(g, Tensor) else Tensor(g)
    if g.shape[:-1] != o.shape[:-1] or g.shape[:-1] != np.shape(b)[:-1]:
        raise ShapeError(f"cannot fuse state parts with shapes {g.shape}, {o.shape}, {np.shape(b)}")
    return ops.concat([g, o, Tensor(np.asarray(b, dtype=DTYPE))], axis=-1)


# -- forward -----------------------------------------------------------------

@dataclass
class StateInput:
    tokens: tuple          # token tuple per channel
    graph: GraphSnapshot
    score: float


@dataclass
class PolicyOutputs:
    template_logp: Tensor          # (B, T)
    object_logp: list              # per slot: (B, T, M) or None when no nodes
    value: Tensor                  # (B,)
    offsets: list                  # node offset of each state's graph
    sizes: list                    # node count of each state's graph
    graphs: list                   # GraphSnapshot per state
    state: Tensor = None           # (B, state_width)


def forward(params, config, vocab, inputs, rng=None):
    """Policy and value heads for a batch of states; dropout applies when ``rng`` is given."""
    B = len(inputs)
    uniq = list(dict.fromkeys(x.graph for x in inputs))
    gpos = {g: i for i, g in enumerate(uniq)}
    gb = graph_batch(uniq, vocab)
    cols = [encode_unique(params["embed"], params.gru(f"gru.{ch}"), [list(x.tokens[ci]) for x in inputs])
            for ci, ch in enumerate(config.channels)]
    o = ops.concat(cols, axis=-1)
    gidx = np.array([gpos[x.graph] for x in inputs], dtype=np.int64)
    nodes = gat_nodes(params, gb, config) if config.use_gat and gb.n_nodes else None
    if config.use_gat:
        g = ops.take(encode_kg(params, gb, config, nodes=nodes), gidx)
    else:
        g = Tensor(np.zeros((B, config.hidden)))
    bits = np.stack([binary_score_encoding(x.score) for x in inputs])
    S = fuse_state(g, o, bits)
    z = ops.relu(ops.linear(S, params["trunk.W"], params["trunk.b"]))
    if rng is not None and config.dropout > 0:
        z = ops.dropout(z, config.dropout, rng)
    tlog = ops.log_softmax(ops.linear(z, params["template.W"], params["template.b"]), axis=-1)
    value = ops.reshape(ops.linear(z, params["value.W"], params["value.b"]), (B,))
    offsets = [gb.offsets[gpos[x.graph]] for x in inputs]
    sizes = [gb.sizes[gpos[x.graph]] for x in inputs]
    olog = [None, None]
    if gb.n_nodes:
        X = node_features(params, gb)
        T = params["template.W"].shape[1]
        H = config.hidden
        mask = np.zeros((B, 1, gb.n_nodes), dtype=bool)
        for b in range(B):
            mask[b, 0, offsets[b]:offsets[b] + sizes[b]] = True
        for k in range(2):
            q = ops.tanh(ops.add(ops.reshape(ops.matmul(z, params[f"obj{k}.query"]), (B, 1, H)),
                                 params[f"obj{k}.template"]))
            keys = ops.matmul(X, params[f"obj{k}.node"])
            if nodes is not None:
                # graph context: an entity's neighbours (e.g. its affordances) shape how it is scored
                keys = ops.add(keys, ops.matmul(nodes[0], params[f"obj{k}.graph"]))
            logits = ops.matmul(q, ops.transpose(keys))
            olog[k] = ops.log_softmax(logits, axis=-1, mask=np.broadcast_to(mask, (B, T, gb.n_nodes)))
    return PolicyOutputs(tlog, olog, value, offsets, sizes, [x.graph for x in inputs], S)


# -- decoding ----------------------------------------------------------------

@dataclass
class ActionDecision:
    template: int
    objects: tuple          # local node indices
    action: str
    log_prob: float
    value: float
    fallback: bool = False


def fallback_template(templates):
    for i, t in enumerate(templates):
        if t.pattern == "look around":
            return i
    for i, t in enumerate(templates):
        if t.arity == 0:
            return i
    raise ValueError("no zero-slot template to fall back to")


def decode_action(outputs, b, templates, rng, greedy=False):
    """Sample (or take the mode of) a template, then each of its object slots from the state's graph."""
    tp = np.exp(outputs.template_logp.data[b])
    t = int(np.argmax(tp)) if greedy else int(rng.choice(len(tp), p=tp / tp.sum()))
    lp = float(outputs.template_logp.data[b, t])
    size, off = outputs.sizes[b], outputs.offsets[b]
    fallback = False
    if templates[t].arity and size == 0:
        t = fallback_template(templates)
        lp = float(outputs.template_logp.data[b, t])
        fallback = True
    objs = []
    for k in range(templates[t].arity):
        olp = outputs.object_logp[k].data[b, t, off:off + size]
        p = np.exp(olp)
        n = int(np.argmax(p)) if greedy else int(rng.choice(size, p=p / p.sum()))
        objs.append(n)
        lp += float(olp[n])
    names = outputs.graphs[b].names
    action = templates[t].fill([names[n] for n in objs])
    return ActionDecision(t, tuple(objs), action, lp, float(outputs.value.data[b]), fallback)


# -- targets and losses --------------------------------------------------------

@dataclass
class Targets:
    templates: set = field(default_factory=set)
    objects: dict = field(default_factory=dict)    # (template, slot) -> set of local nodes
    valid: list = field(default_factory=list)      # (template, local nodes) per valid action in the graph


def parse_in_graph(engine, action, names, cache=None):
    """``(template, local node tuple)`` for an action string, or None when unparseable."""
    key = (action, names)
    if cache is not None and key in cache:
        return cache[key]
    readings = engine.parse(action)
    out = None
    if readings:
        t, objs = readings[0]
        index = {n: i for i, n in enumerate(names)}
        out = (t, tuple(index.get(o) for o in objs))
    if cache is not None:
        cache[key] = out
    return out


def build_targets(engine, valid_actions, golden_action, mode, names, cache=None):
    if mode == "GT" and golden_action is None:
        raise ValueError("GT targets need a golden action")
    tg = Targets()
    marked = [golden_action] if mode == "GT" else list(valid_actions)
    for a in marked:
        parsed = parse_in_graph(engine, a, names, cache)
        if parsed is None:
            continue
        t, objs = parsed
        tg.templates.add(t)
        for k, n in enumerate(objs):
            bucket = tg.objects.setdefault((t, k), set())
            if n is not None:
                bucket.add(n)
    for a in valid_actions:
        parsed = parse_in_graph(engine, a, names, cache)
        if parsed is not None and all(n is not None for n in parsed[1]):
            tg.valid.append(parsed)
    return tg


def auxiliary_terms(outputs, targets, n_templates):
    """Template BCE, per-slot object BCE and valid-action negative entropy, batch-averaged.

    ``targets[b]`` is a :class:`Targets` or None (no template/object targets for that state).
    """
    B = len(targets)
    rows = [b for b in range(B) if targets[b] is not None and targets[b].templates]
    zero = Tensor(np.zeros(()))
    L_T = L_O = L_E = zero
    if rows:
        y = np.zeros((len(rows), n_templates))
        for i, b in enumerate(rows):
            y[i, list(targets[b].templates)] = 1.0
        probs = ops.exp(ops.getitem(outputs.template_logp, np.array(rows)))
        L_T = ops.binary_cross_entropy(probs, y)
    # object targets
    pieces = []
    for k in range(2):
        if outputs.object_logp[k] is None:
            continue
        bi, ti, ys, ws = [], [], [], []
        M = outputs.object_logp[k].shape[-1]
        for b in rows:
            pairs = [(t, nodes) for (t, kk), nodes in targets[b].objects.items() if kk == k]
            for t, nodes in pairs:
                size, off = outputs.sizes[b], outputs.offsets[b]
                if size == 0:
                    continue
                yrow = np.zeros(M)
                yrow[[off + n for n in nodes]] = 1.0
                wrow = np.zeros(M)
                wrow[off:off + size] = 1.0 / size
                bi.append(b)
                ti.append(t)
                ys.append(yrow)
                ws.append(wrow)
        if bi:
            pieces.append((k, np.array(bi), np.array(ti), np.stack(ys), np.stack(ws)))
    n_pairs = sum(len(p[1]) for p in pieces)
    for k, bi, ti, ys, ws in pieces:
        probs = ops.exp(ops.getitem(outputs.object_logp[k], (bi, ti)))
        term = ops.binary_cross_entropy(probs, ys, weights=ws / n_pairs)
        L_O = term if L_O is zero else ops.add(L_O, term)
    # entropy over valid actions
    ent_rows = [b for b in range(B) if targets[b] is not None and targets[b].valid]
    if ent_rows:
        flat_b, flat_t = [], []
        slot_idx = [[], []]
        for b in ent_rows:
            for t, nodes in targets[b].valid:
                flat_b.append(b)
                flat_t.append(t)
                for k in range(2):
                    slot_idx[k].append(outputs.offsets[b] + nodes[k] if k < len(nodes) else -1)
        flat_b, flat_t = np.array(flat_b), np.array(flat_t)
        lpa = ops.getitem(outputs.template_logp, (flat_b, flat_t))
        for k in range(2):
            idx = np.array(slot_idx[k])
            use = idx >= 0
            if use.any():
                g = ops.getitem(outputs.object_logp[k], (flat_b[use], flat_t[use], idx[use]))
                lpa = ops.add(lpa, _scatter(g, np.where(use)[0], len(idx)))
        Vmax = max(len(targets[b].valid) for b in ent_rows)
        index = np.zeros((len(ent_rows), Vmax), dtype=np.int64)
        mask = np.zeros((len(ent_rows), Vmax), dtype=bool)
        k = 0
        for r, b in enumerate(ent_rows):
            n = len(targets[b].valid)
            index[r, :n] = np.arange(k, k + n)
            mask[r, :n] = True
            k += n
        padded = ops.getitem(lpa, index)
        renorm = ops.log_softmax(padded, axis=-1, mask=mask)
        L_E = ops.mul(ops.negative_entropy(renorm, mask), 1.0 / len(ent_rows))
    return L_T, L_O, L_E


def _scatter(values, positions, n):
    return values if len(positions) == n else ops.scatter(values, positions, n)


def auxiliary_losses(outputs, valid_actions, golden_action, mode, engine, b=0):
    """(L_T, L_O, L_E) for state ``b`` of ``outputs`` alone."""
    names = outputs.graphs[b].names
    tg = build_targets(engine, valid_actions, golden_action, mode, names)
    sub = PolicyOutputs(
        ops.getitem(outputs.template_logp, slice(b, b + 1)),
        [None if o is None else ops.getitem(o, slice(b, b + 1)) for o in outputs.object_logp],
        ops.getitem(outputs.value, slice(b, b + 1)),
        [outputs.offsets[b]], [outputs.sizes[b]], [outputs.graphs[b]],
    )
    return auxiliary_terms(sub, [tg], outputs.template_logp.shape[-1])


def chosen_log_probs(outputs, decisions):
    B = len(decisions)
    bidx = np.arange(B)
    tidx = np.array([d.template for d in decisions])
    lp = ops.getitem(outputs.template_logp, (bidx, tidx))
    for k in range(2):
        rows = [b for b, d in enumerate(decisions) if len(d.objects) > k]
        if not rows:
            continue
        nodes = np.array([outputs.offsets[b] + decisions[b].objects[k] for b in rows])
        g = ops.getitem(outputs.object_logp[k], (np.array(rows), tidx[rows], nodes))
        lp = ops.add(lp, _scatter(g, np.array(rows), B))
    return lp


# -- agent ---------------------------------------------------------------------

@dataclass
class EpisodeContext:
    kg: KnowledgeGraph = field(default_factory=KnowledgeGraph)
    mca: McaBuffer = field(default_factory=McaBuffer)
    started: bool = False


class Kga2cAgent:
    kind = "kga2c"

    def __init__(self, vocab, spec, config=None, seed=0, store=None):
        self.vocab = vocab
        self.spec = spec
        self.engine = Engine(spec)
        self.templates = spec.templates
        self.config = config or Kga2cConfig()
        if (self.config.aff_in_kg or self.config.aff_in_obs or self.config.aff_channel) and store is None:
            raise ValueError("affordance variants need an affordance store")
        self.store = store
        self.object_names = list(spec.objects)
        self.rng = np.random.default_rng(seed)
        self.params = init_params(len(vocab), len(self.templates), self.config, self.rng)
        self.opt = Adam(self.params, lr=self.config.lr, clip_norm=self.config.clip_norm)
        self.updates = 0
        self.log = []
        self._parse_cache = {}

    @property
    def ends_on_invalid(self):
        return self.config.target_mode == "VT"

    # -- per-episode state -------------------------------------------------------

    def new_context(self):
        return EpisodeContext()

    def _observe(self, ctx, result):
        ctx.kg.update(extract_triples(f"{result.obv} {result.look} {result.inv}"))
        if self.config.aff_in_kg:
            ctx.kg.augment(self.store)

    def state_input(self, ctx, result):
        if not ctx.started:
            self._observe(ctx, result)
            ctx.started = True
        # room contents reach this agent through the graph, so the text channel is the feedback alone
        obv = result.obv
        aff = ""
        if self.config.aff_in_obs or self.config.aff_channel:
            aff = affordance_text(mentioned_objects(result.look + " " + result.inv, self.object_names), self.store)
        if self.config.aff_in_obs and aff:
            obv = f"{obv} {aff}"
        texts = {"obv": obv, "desc": result.desc, "inv": result.inv, "mca": ctx.mca.text(), "aff": aff}
        tokens = tuple(tuple(self.vocab.encode(texts[ch])) for ch in self.config.channels)
        return StateInput(tokens, GraphSnapshot.of(ctx.kg), result.score)

    def after_step(self, ctx, action, result):
        ctx.mca.record(result.step, action, result.reward)
        self._observe(ctx, result)

    def choose_batch(self, contexts, results, rng, mode="eval"):
        inputs = [self.state_input(c, r) for c, r in zip(contexts, results)]
        out = forward(self.params, self.config, self.vocab, inputs)
        return [decode_action(out, b, self.templates, rng).action for b in range(len(inputs))]

    # -- learning ----------------------------------------------------------------

    def targets_for(self, result, graph):
        golden = result.golden_next
        if self.config.target_mode == "GT" and golden is None:
            return Targets(valid=build_targets(self.engine, result.valid_actions, None, "VT", graph.names,
                                               self._parse_cache).valid)
        return build_targets(self.engine, result.valid_actions, golden, self.config.target_mode, graph.names,
                             self._parse_cache)

    def a2c_update(self, inputs, decisions, returns, targets):
        """One Adam step on PG + value + auxiliary losses; returns the loss components."""
        c = self.config
        with Tape() as tape:
            out = forward(self.params, c, self.vocab, inputs, rng=self.rng)
            lp = chosen_log_probs(out, decisions)
            adv = returns - out.value.data
            pg = ops.mul(ops.mean(ops.mul(lp, adv)), -1.0)
            vl = ops.mean(ops.square(ops.sub(out.value, returns)))
            L_T, L_O, L_E = auxiliary_terms(out, targets, len(self.templates))
            total = pg + vl * c.c_V + L_T * c.c_T + L_O * c.c_O + L_E * c.c_E
        grads = tape.backward(total, list(self.params))
        self.opt.step(grads)
        self.updates += 1
        return tuple(float(x.data) for x in (pg, vl, L_T, L_O, L_E, total))

    def train(self, batch_envs, total_steps, on_episode=None):
        """A2C with ``rollout``-step returns over a lockstep environment batch."""
        c = self.config
        n = len(batch_envs)
        contexts = [self.new_context() for _ in range(n)]
        done_steps = 0
        finished_scores = []
        while done_steps < total_steps:
            steps = []
            for _ in range(c.rollout):
                results = list(batch_envs.results)
                inputs = [self.state_input(ctx, r) for ctx, r in zip(contexts, results)]
                out = forward(self.params, c, self.vocab, inputs)
                decisions = [decode_action(out, b, self.templates, self.rng) for b in range(n)]
                tg = [self.targets_for(r, x.graph) for r, x in zip(results, inputs)]
                actions = [d.action for d in decisions]
                invalid = [self.ends_on_invalid and a not in r.valid_actions for a, r in zip(actions, results)]
                stepped, finished = batch_envs.step(actions, force_done=invalid)
                for i, r in enumerate(stepped):
                    if finished[i]:
                        finished_scores.append(r.score)
                        if on_episode:
                            on_episode(r)
                        contexts[i] = self.new_context()
                    else:
                        self.after_step(contexts[i], actions[i], r)
                steps.append((inputs, decisions, [r.reward * c.reward_scale for r in stepped], finished, tg))
                done_steps += n
                if done_steps >= total_steps:
                    break
            # bootstrap from the states the batch now sits in
            boot_inputs = [self.state_input(ctx, r) for ctx, r in zip(contexts, batch_envs.results)]
            R = forward(self.params, c, self.vocab, boot_inputs).value.data.copy()
            all_inputs, all_dec, all_ret, all_tg = [], [], [], []
            for inputs, decisions, rewards, finished, tg in reversed(steps):
                R = np.array([rw + (0.0 if f else c.gamma * R_i) for rw, f, R_i in zip(rewards, finished, R)])
                all_inputs[:0] = inputs
                all_dec[:0] = decisions
                all_ret[:0] = list(R)
                all_tg[:0] = tg
            losses = self.a2c_update(all_inputs, all_dec, np.array(all_ret), all_tg)
            score = float(np.mean(finished_scores[-20:])) if finished_scores else 0.0
            self.log.append((self.updates,) + losses[:5] + (score,))
        return self.log

    def config_dict(self):
        return asdict(self.config)
