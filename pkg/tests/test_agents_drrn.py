import numpy as np
import pytest

from kigames.agents.drrn import DrrnAgent, DrrnConfig, ReplayBuffer, Transition, act


def make_agent(vocab, **kw):
    return DrrnAgent(vocab, DrrnConfig(**kw), seed=3)


def texts(agent, obv="you see a fridge", desc="this room is called the kitchen", inv="an apple"):
    t = {"obv": obv, "desc": desc, "inv": inv, "aff": "apple is used for eating", "mca": "open fridge"}
    return agent.tokens(t)


@pytest.mark.parametrize("aff,mca,width", [(False, False, 384), (True, False, 512), (False, True, 512), (True, True, 640)])
def test_state_width_tracks_channels(vocab, aff, mca, width):
    ag = make_agent(vocab, use_aff=aff, use_mca=mca)
    assert ag.encode_states([texts(ag)]).data.shape == (1, width)
    assert ag.params["q.hidden.W"].data.shape[0] == width + 128


def test_empty_texts_encode_to_zero(vocab):
    ag = make_agent(vocab, use_aff=True, use_mca=True)
    empty = ag.tokens({c: "" for c in ag.config.channels})
    assert np.all(ag.encode_states([empty]).data == 0)


def test_missing_channel_is_an_error(vocab):
    ag = make_agent(vocab, use_aff=True)
    with pytest.raises(KeyError, match="aff"):
        ag.tokens({"obv": "", "desc": "", "inv": ""})


def test_zero_params_give_zero_q(vocab):
    ag = make_agent(vocab)
    for t in ag.params:
        t.data[...] = 0
    acts = [tuple(vocab.encode(a)) for a in ("open fridge", "look around")]
    assert np.all(ag.q_values(texts(ag), acts).data == 0)


def test_q_follows_action_permutation(vocab):
    ag = make_agent(vocab)
    names = ["open fridge", "look around", "go to hallway", "pick up apple", "focus on apple"]
    acts = [tuple(vocab.encode(a)) for a in names]
    q = ag.q_values(texts(ag), acts).data
    perm = np.random.default_rng(1).permutation(len(acts))
    qp = ag.q_values(texts(ag), [acts[i] for i in perm]).data
    np.testing.assert_allclose(qp, q[perm], atol=1e-12)
    # dropping an action leaves the others untouched
    np.testing.assert_allclose(ag.q_values(texts(ag), acts[1:]).data, q[1:], atol=1e-12)


def test_empty_action_list_raises(vocab):
    ag = make_agent(vocab)
    with pytest.raises(ValueError):
        ag.q_values(texts(ag), [])


def test_act_tie_and_single():
    assert act([0.5, 0.5, 0.5], "eval") == 0
    assert act([2.0], "eval") == 0
    assert act([2.0], "train", 1.0, np.random.default_rng(0)) == 0
    with pytest.raises(ValueError):
        act([], "eval")


def test_act_train_frequencies_match_softmax():
    qs = np.array([1.0, 0.2, -0.5, 0.7])
    temp = 0.5
    p = np.exp(qs / temp)
    p /= p.sum()
    rng = np.random.default_rng(0)
    draws = np.array([act(qs, "train", temp, rng) for _ in range(100_000)])
    freq = np.bincount(draws, minlength=4) / draws.size
    assert np.max(np.abs(freq - p)) < 0.01


def transition(ag, reward, done, next_actions=("look around",)):
    s = texts(ag)
    return Transition(s, tuple(ag.vocab.encode("open fridge")), reward, texts(ag, obv="the fridge is open"),
                      tuple(tuple(ag.vocab.encode(a)) for a in next_actions), done)


def test_terminal_target_is_reward(vocab):
    ag = make_agent(vocab)
    y = ag.td_targets([transition(ag, 0.3, True), transition(ag, -0.1, False, ())])
    np.testing.assert_array_equal(y, [0.3, -0.1])


def test_gamma_zero_target_is_reward(vocab):
    ag = make_agent(vocab, gamma=0.0)
    y = ag.td_targets([transition(ag, 0.25, False), transition(ag, 0.0, False)])
    np.testing.assert_array_equal(y, [0.25, 0.0])


def test_bootstrap_uses_target_max(vocab):
    ag = make_agent(vocab, gamma=0.9)
    tr = transition(ag, 0.1, False, ("look around", "open fridge"))
    q = ag.q_values(tr.next_state, list(tr.next_actions), ag.target).data
    np.testing.assert_allclose(ag.td_targets([tr]), [0.1 + 0.9 * q.max()])


def test_update_moves_params_not_target(vocab):
    ag = make_agent(vocab, target_update=3)
    before = ag.target.state_dict()
    batch = [transition(ag, 1.0, True)]
    loss0, _ = ag.td_update(batch)
    after = ag.target.state_dict()
    assert all(np.array_equal(before[k], after[k]) for k in before)
    assert any(not np.array_equal(ag.params.state_dict()[k], before[k]) for k in before)
    ag.td_update(batch)
    ag.td_update(batch)
    refreshed = ag.target.state_dict()
    assert all(np.array_equal(refreshed[k], ag.params.state_dict()[k]) for k in refreshed)
    assert len(ag.log) == 3 and ag.log[-1][0] == 3


def test_repeated_update_fits_terminal_reward(vocab):
    ag = make_agent(vocab, lr=1e-3)
    batch = [transition(ag, 0.5, True)]
    losses = [ag.td_update(batch)[0] for _ in range(200)]
    assert losses[-1] < 1e-3 < losses[0]


def test_replay_sampling_reproducible():
    a, b = ReplayBuffer(5, seed=4), ReplayBuffer(5, seed=4)
    for i in range(8):
        a.add(i)
        b.add(i)
    assert len(a) == 5
    assert sorted(a.items) == [3, 4, 5, 6, 7]
    assert a.sample(3) == b.sample(3)


def test_temperature_anneals(vocab):
    ag = make_agent(vocab)
    assert ag.temperature(0.0) == 1.0
    assert ag.temperature(1.0) == pytest.approx(0.1)
    assert ag.temperature(2.0) == pytest.approx(0.1)
