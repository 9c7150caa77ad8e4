import math

import numpy as np
import pytest

from kigames.agents import kga2c as K
from kigames.autodiff.gradcheck import check_gradients
from kigames.autodiff.tensor import ShapeError, Tensor
from kigames.knowledge import KnowledgeGraph
from kigames.world.engine import Engine
from oracles import score_bits


def graph(names, edges=()):
    return K.GraphSnapshot(tuple(names), tuple(edges))


def small_config(**kw):
    return K.Kga2cConfig(**{"embed": 6, "hidden": 8, "heads": 2, "dropout": 0.0, **kw})


@pytest.fixture
def agent(vocab, spec):
    return K.Kga2cAgent(vocab, spec, K.Kga2cConfig(dropout=0.0), seed=1)


def state(agent, names=("apple", "red box", "fridge"), edges=((0, 2),), score=0, texts=None):
    texts = texts or {"obv": "you see an apple", "desc": "find a food", "inv": "", "mca": "", "aff": ""}
    tokens = tuple(tuple(agent.vocab.encode(texts[c])) for c in agent.config.channels)
    return K.StateInput(tokens, graph(names, edges), score)


# -- graph attention -------------------------------------------------------------

def test_single_node_attends_to_itself(agent):
    gb = K.graph_batch([graph(["apple"])], agent.vocab)
    g, attn = K.encode_kg(agent.params, gb, agent.config, return_attention=True)
    assert g.shape == (1, 100)
    assert len(attn) == 4
    for A in attn:
        assert A.data.shape == (1, 1) and A.data[0, 0] == 1.0


def test_attention_rows_sum_to_one(agent):
    gs = [graph(["apple", "red box", "fridge", "kitchen"], ((0, 1), (1, 2), (2, 3))), graph(["dog", "bee"], ((0, 1),))]
    gb = K.graph_batch(gs, agent.vocab)
    _, attn = K.encode_kg(agent.params, gb, agent.config, return_attention=True)
    for A in attn:
        np.testing.assert_allclose(A.data.sum(axis=1), 1.0, atol=1e-10)
        # no attention leaks across graphs or along missing edges
        assert np.all(A.data[~gb.adjacency] == 0)


def test_empty_graph_is_zero(agent):
    gb = K.graph_batch([graph([])], agent.vocab)
    g = K.encode_kg(agent.params, gb, agent.config)
    assert g.shape == (1, 100) and np.all(g.data == 0)
    mixed = K.graph_batch([graph([]), graph(["apple"])], agent.vocab)
    g = K.encode_kg(agent.params, mixed, agent.config)
    assert np.all(g.data[0] == 0) and np.any(g.data[1] != 0)


def test_gat_gradients_match_finite_differences(vocab):
    cfg = small_config()
    params = K.init_params(len(vocab), 3, cfg, np.random.default_rng(0))
    gb = K.graph_batch([graph(["apple", "red box", "fridge"], ((0, 1), (1, 2)))], vocab)
    from kigames.autodiff import ops
    tensors = [params[n] for n in ("gat.W", "gat.a_src", "gat.a_dst", "gat.out.W", "gat.out.b")]
    err = check_gradients(lambda: ops.sum(K.encode_kg(params, gb, cfg)), tensors)
    assert err < 1e-4


# -- inputs, score bits, fusion --------------------------------------------------

@pytest.mark.parametrize("variant,width", [("baseline_GT", 300), ("GT_mca", 400), ("GT_aff_enc", 400)])
def test_text_width(vocab, spec, store, variant, width):
    ag = K.Kga2cAgent(vocab, spec, K.variant_config(variant), store=store)
    out = K.forward(ag.params, ag.config, vocab, [state(ag)])
    assert out.state.shape == (1, 100 + width + 10)


def test_empty_mca_channel_is_zero(vocab, spec):
    ag = K.Kga2cAgent(vocab, spec, K.variant_config("GT_mca"))
    out = K.forward(ag.params, ag.config, vocab, [state(ag)])
    assert np.all(out.state.data[0, 400:500] == 0)


@pytest.mark.parametrize("score,bits", [
    (5, [0, 0, 0, 0, 0, 0, 0, 1, 0, 1]),
    (-3, [1, 0, 0, 0, 0, 0, 0, 0, 1, 1]),
    (0, [0] * 10),
])
def test_score_bits_examples(score, bits):
    assert K.binary_score_encoding(score).tolist() == bits


def test_score_bits_clamp_and_roundtrip():
    for s in range(-600, 601):
        b = K.binary_score_encoding(s)
        assert b.tolist() == score_bits(s)
        assert K.decode_score_bits(b) == max(-511, min(511, s))


def test_fuse_order_and_width():
    g = Tensor(np.full((1, 100), 1.0))
    o = Tensor(np.full((1, 300), 2.0))
    b = np.full((1, 10), 3.0)
    S = K.fuse_state(g, o, b).data
    assert S.shape == (1, 410)
    assert np.all(S[0, :100] == 1) and np.all(S[0, 100:400] == 2) and np.all(S[0, 400:] == 3)
    with pytest.raises(ShapeError):
        K.fuse_state(g, Tensor(np.zeros((2, 300))), b)


def test_no_gat_zeroes_graph_part(vocab, spec):
    ag = K.Kga2cAgent(vocab, spec, K.variant_config("GT_noGAT"))
    out = K.forward(ag.params, ag.config, vocab, [state(ag)])
    assert out.state.shape == (1, 410)
    assert np.all(out.state.data[0, :100] == 0)


# -- decoding --------------------------------------------------------------------

def test_sampled_objects_stay_in_graph(agent):
    names = ("apple", "red box", "fridge")
    outs = K.forward(agent.params, agent.config, agent.vocab, [state(agent, names)])
    rng = np.random.default_rng(0)
    for _ in range(200):
        d = K.decode_action(outs, 0, agent.templates, rng)
        assert len(d.objects) == agent.templates[d.template].arity
        assert all(0 <= n < len(names) for n in d.objects)
        if agent.templates[d.template].arity == 0:
            assert d.objects == ()


def test_empty_graph_falls_back_to_look_around(agent):
    outs = K.forward(agent.params, agent.config, agent.vocab, [state(agent, (), ())])
    rng = np.random.default_rng(0)
    seen = {K.decode_action(outs, 0, agent.templates, rng).action for _ in range(100)}
    assert seen <= {"look around"}
    assert any(K.decode_action(outs, 0, agent.templates, rng).fallback for _ in range(50))


def test_two_slot_fill_parses_back(spec):
    engine = Engine(spec)
    (t,) = [i for i, tp in enumerate(spec.templates) if tp.pattern == "move OBJ to OBJ"]
    action = spec.templates[t].fill(["apple", "red box"])
    assert action == "move apple to red box"
    assert (t, ("apple", "red box")) in engine.parse(action)
    assert K.parse_in_graph(engine, action, ("red box", "apple")) == (t, (1, 0))


# -- auxiliary losses ------------------------------------------------------------

def one_hot_outputs(template_logp, names, object_logp=None):
    T = template_logp.shape[-1]
    M = len(names)
    olog = object_logp or [Tensor(np.full((1, T, M), -math.log(M))) for _ in range(2)]
    return K.PolicyOutputs(Tensor(template_logp), olog, Tensor(np.zeros(1)), [0], [M], [graph(names)])


def test_uniform_over_four_valid_actions(spec):
    T = len(spec.templates)
    names = ("apple", "chocolate", "butter", "thermometer")
    (focus,) = [i for i, tp in enumerate(spec.templates) if tp.pattern == "focus on OBJ"]
    logp = np.full((1, T), -30.0)
    logp[0, focus] = 0.0
    outs = one_hot_outputs(logp, names)
    tg = K.Targets(templates={focus}, valid=[(focus, (i,)) for i in range(4)])
    _, _, L_E = K.auxiliary_terms(outs, [tg], T)
    assert float(L_E.data) == pytest.approx(math.log(1 / 4), abs=1e-9)


def test_concentrated_policy_has_zero_entropy_term(spec):
    T = len(spec.templates)
    (look,) = [i for i, tp in enumerate(spec.templates) if tp.pattern == "look around"]
    logp = np.full((1, T), -1e3)
    logp[0, look] = 0.0
    outs = one_hot_outputs(logp, ("apple",))
    tg = K.Targets(templates={look}, valid=[(look, ())])
    L_T, _, L_E = K.auxiliary_terms(outs, [tg], T)
    assert float(L_E.data) == 0.0
    assert float(L_T.data) == pytest.approx(0.0, abs=1e-9)


def test_gt_marks_only_golden(spec):
    engine = Engine(spec)
    names = ("thermometer", "apple", "red box")
    valid = ["focus on thermometer", "focus on apple", "pick up apple", "look around"]
    tg = K.build_targets(engine, valid, "focus on thermometer", "GT", names)
    (focus,) = [i for i, tp in enumerate(spec.templates) if tp.pattern == "focus on OBJ"]
    assert tg.templates == {focus}
    assert tg.objects == {(focus, 0): {0}}
    vt = K.build_targets(engine, valid, None, "VT", names)
    assert len(vt.templates) == 3
    assert vt.objects[(focus, 0)] == {0, 1}
    marked_vt = sum(1 for a in valid if engine.parse(a))
    assert marked_vt == len(valid) and len(tg.valid) == len(valid)


def test_gt_without_golden_raises(spec):
    with pytest.raises(ValueError):
        K.build_targets(Engine(spec), ["look around"], None, "GT", ())


def test_auxiliary_losses_from_outputs(agent):
    outs = K.forward(agent.params, agent.config, agent.vocab, [state(agent, ("thermometer", "apple"), ())])
    L_T, L_O, L_E = K.auxiliary_losses(outs, ["focus on thermometer", "focus on apple"], "focus on thermometer",
                                       "GT", agent.engine)
    assert float(L_T.data) > 0 and float(L_O.data) > 0
    assert -math.log(2) - 1e-9 <= float(L_E.data) <= 0


# -- actor-critic update ---------------------------------------------------------

def test_zero_advantage_leaves_policy_gradient_zero(vocab, spec):
    from kigames.autodiff import ops
    from kigames.autodiff.tensor import Tape
    ag = K.Kga2cAgent(vocab, spec, small_config(), seed=2)
    inputs = [state(ag)]
    with Tape() as tape:
        out = K.forward(ag.params, ag.config, vocab, inputs)
        d = K.decode_action(out, 0, ag.templates, np.random.default_rng(0))
        lp = K.chosen_log_probs(out, [d])
        adv = out.value.data - out.value.data
        pg = ops.mul(ops.mean(ops.mul(lp, adv)), -1.0)
    grads = tape.backward(pg, [ag.params["template.W"], ag.params["obj0.query"]])
    assert all(np.all(g == 0) for g in grads.values())


def test_value_reaches_constant_return(vocab, spec):
    ag = K.Kga2cAgent(vocab, spec, small_config(c_T=0, c_O=0, c_E=0, lr=1e-2), seed=2)
    inputs = [state(ag)]
    out = K.forward(ag.params, ag.config, vocab, inputs)
    d = K.decode_action(out, 0, ag.templates, np.random.default_rng(0))
    returns = np.array([0.5])
    for _ in range(300):
        ag.a2c_update(inputs, [d], returns, [None])
    v = K.forward(ag.params, ag.config, vocab, inputs).value.data[0]
    assert abs(v - 0.5) < 1e-2


def test_combined_loss_gradients(vocab, spec):
    from kigames.autodiff import ops
    cfg = small_config()
    ag = K.Kga2cAgent(vocab, spec, cfg, seed=4)
    inputs = [state(ag, ("thermometer", "apple"), ((0, 1),), score=5)]
    out = K.forward(ag.params, cfg, vocab, inputs)
    d = K.decode_action(out, 0, ag.templates, np.random.default_rng(1))
    tg = K.build_targets(ag.engine, ["focus on thermometer", "focus on apple", "look around"],
                         "focus on thermometer", "GT", inputs[0].graph.names)
    returns = np.array([0.3])
    adv = returns - out.value.data   # the advantage is a constant under differentiation

    def total():
        o = K.forward(ag.params, cfg, vocab, inputs)
        lp = K.chosen_log_probs(o, [d])
        pg = ops.mul(ops.mean(ops.mul(lp, adv)), -1.0)
        vl = ops.mean(ops.square(ops.sub(o.value, returns)))
        L_T, L_O, L_E = K.auxiliary_terms(o, [tg], len(ag.templates))
        return pg + vl * cfg.c_V + L_T * cfg.c_T + L_O * cfg.c_O + L_E * cfg.c_E

    names = ["trunk.W", "template.W", "value.W", "obj0.query", "obj0.node", "obj0.graph", "gat.W", "gat.a_src"]
    assert check_gradients(total, [ag.params[n] for n in names]) < 1e-4


def test_affordances_enlarge_entity_support(store):
    kg = KnowledgeGraph()
    kg.update([("you", "have", "apple"), ("apple", "in", "kitchen")])
    before = set(kg.entity_names)
    kg.augment(store)
    assert before <= set(kg.entity_names)


def test_variant_table():
    assert set(K.VARIANTS) >= {"baseline_VT", "baseline_GT", "GT_mca", "GT_aff", "GT_aff_mca", "GT_noGAT"}
    with pytest.raises(KeyError):
        K.variant_config("nope")
    with pytest.raises(ValueError):
        K.Kga2cConfig(target_mode="XX")
