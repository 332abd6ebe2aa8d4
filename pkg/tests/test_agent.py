import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybris.agent import (Adam, NonFiniteGradient, NormalizerState, PPOAgent, PPOConfig,
                          actor_objective, clip, critic_loss, gae_advantages, head_entropy,
                          init_policy, init_value, load_checkpoint, normalize, policy_forward,
                          rho_from_bucket, sample_and_logprob, save_checkpoint, value_forward)
from hybris.env import HEAD_SIZES


def heads(N):
    return tuple(HEAD_SIZES) * N


def test_dimensions_full_scale():
    rng = np.random.default_rng(0)
    J, N = 2, 20
    state_dim = J * N + N + J + 1
    assert state_dim == 63
    pol = init_policy(state_dim, heads(N), 16, rng)
    assert pol.net["W2"].shape[1] == 14 * N == 280
    probs = policy_forward(pol, rng.standard_normal(state_dim))
    assert len(probs) == 3 * N
    for p in probs:
        assert np.all((p > 0) & (p < 1))
        assert abs(p.sum() - 1.0) < 1e-9
    with pytest.raises(ValueError):
        policy_forward(pol, np.zeros(62))


def test_zero_weights_uniform():
    rng = np.random.default_rng(1)
    pol = init_policy(5, heads(2), 8, rng)
    for k in pol.net:
        pol.net[k][...] = 0.0
    for p, size in zip(policy_forward(pol, rng.standard_normal((3, 5))), heads(2)):
        np.testing.assert_allclose(p, 1.0 / size)
    ent = head_entropy(policy_forward(pol, np.zeros(5)))
    assert ent[0] == pytest.approx(2 * math.log(2) + 2 * math.log(2) + 2 * math.log(10))


def test_joint_logprob():
    probs = [np.array([[0.5, 0.5]]), np.array([[0.9, 0.1]])]
    a, lp = sample_and_logprob(probs, None, greedy=True)
    assert a[0].tolist() == [0, 0] and lp[0] == pytest.approx(math.log(0.45))
    rng = np.random.default_rng(2)
    for _ in range(50):
        a, lp = sample_and_logprob(probs, rng)
        expect = math.log(probs[0][0, a[0, 0]]) + math.log(probs[1][0, a[0, 1]])
        assert lp[0] == pytest.approx(expect, rel=1e-15)
    # chosen probabilities 0.5 and 0.1
    rng = np.random.default_rng(0)
    seen = False
    for _ in range(200):
        a, lp = sample_and_logprob(probs, rng)
        if a[0, 1] == 1:
            assert lp[0] == pytest.approx(math.log(0.05), rel=1e-14)
            seen = True
    assert seen


def test_sampling_deterministic_and_frequencies():
    probs = [np.tile([0.2, 0.8], (20_000, 1)), np.tile([0.1] * 10, (20_000, 1))]
    a1, l1 = sample_and_logprob(probs, np.random.default_rng(9))
    a2, l2 = sample_and_logprob(probs, np.random.default_rng(9))
    np.testing.assert_array_equal(a1, a2)
    np.testing.assert_array_equal(l1, l2)
    assert np.mean(a1[:, 0] == 1) == pytest.approx(0.8, abs=0.015)
    assert set(np.unique(a1[:, 1])) == set(range(10))


def test_rho_buckets():
    assert rho_from_bucket(9) == 100.0
    np.testing.assert_array_equal(rho_from_bucket(np.arange(10)), np.arange(10, 101, 10))


def test_gae_examples():
    adv, ret = gae_advantages([2.0], [0.5], [0.0], gamma=0.0, lam=0.95)
    assert adv[0] == 1.5 and ret[0] == 2.0
    r = np.array([1.0, -2.0, 3.0])
    v = np.array([0.5, 0.1, -0.4])
    adv, _ = gae_advantages(r, v, np.array([9.0, 9.0, 9.0]), gamma=0.0, lam=0.95)
    np.testing.assert_array_equal(adv, r - v)
    # gamma 0.9, lambda 1, two steps, terminal after the second
    r, v, nv = np.array([1.0, 2.0]), np.array([0.3, 0.7]), np.array([0.7, 0.0])
    d0 = r[0] + 0.9 * nv[0] - v[0]
    d1 = r[1] + 0.9 * 0.0 - v[1]
    adv, ret = gae_advantages(r, v, nv, gamma=0.9, lam=1.0, dones=[0, 1])
    assert adv[0] == pytest.approx(d0 + 0.9 * d1)
    assert adv[1] == pytest.approx(d1)
    np.testing.assert_allclose(ret, adv + v)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-10, 10), st.floats(-10, 10)), min_size=1, max_size=20))
def test_gae_gamma_zero_collapse(pairs):
    r, v = np.array(pairs).T
    adv, _ = gae_advantages(r, v, np.ones_like(r) * 123.0, gamma=0.0, lam=0.7)
    np.testing.assert_array_equal(adv, r - v)


def test_clip_examples():
    assert clip(1.5, 0.2) == pytest.approx(1.2)
    assert clip(0.7, 0.2) == pytest.approx(0.8)
    assert clip(1.0, 0.2) == 1.0


def _tiny(rng, N=2, state_dim=4, hidden=8):
    pol = init_policy(state_dim, heads(N), hidden, rng)
    val = init_value(state_dim, hidden, rng)
    for net in (pol.net, val.net):  # larger weights so the check is not trivially flat
        for k in net:
            net[k] += 0.3 * rng.standard_normal(net[k].shape)
    return pol, val


def _fd_check(f, params, grads, rng, n_coords=40, h=1e-6):
    worst = 0.0
    for k, w in params.items():
        for flat in rng.choice(w.size, size=min(n_coords, w.size), replace=False):
            i = np.unravel_index(flat, w.shape)
            old = w[i]
            w[i] = old + h
            fp = f()
            w[i] = old - h
            fm = f()
            w[i] = old
            fd = (fp - fm) / (2 * h)
            an = grads[k][i]
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-6))
    return worst


@pytest.mark.parametrize("c2", [0.0, 0.5])
def test_actor_gradient_fd(c2):
    rng = np.random.default_rng(4)
    pol, _ = _tiny(rng)
    B = 100
    s = rng.standard_normal((B, 4))
    actions, old = sample_and_logprob(policy_forward(pol, s), rng)
    old = old + rng.normal(0, 0.1, B)  # ratios away from 1, some clipped
    adv = rng.standard_normal(B)
    obj, grads, _ = actor_objective(pol, s, actions, old, adv, 0.2, c2)
    f = lambda: actor_objective(pol, s, actions, old, adv, 0.2, c2)[0]
    assert _fd_check(f, pol.net, grads, rng) < 1e-4


def test_entropy_gradient_fd():
    # entropy term alone: zero advantages leave only c2 * H
    rng = np.random.default_rng(6)
    pol, _ = _tiny(rng)
    s = rng.standard_normal((100, 4))
    actions, old = sample_and_logprob(policy_forward(pol, s), rng)
    adv = np.zeros(100)
    obj, grads, _ = actor_objective(pol, s, actions, old, adv, 0.2, 1.0)
    assert obj == pytest.approx(np.mean(head_entropy(policy_forward(pol, s))))
    f = lambda: actor_objective(pol, s, actions, old, adv, 0.2, 1.0)[0]
    assert _fd_check(f, pol.net, grads, rng) < 1e-4


def test_critic_gradient_fd():
    rng = np.random.default_rng(7)
    _, val = _tiny(rng)
    s = rng.standard_normal((100, 4))
    y = rng.standard_normal(100)
    loss, grads = critic_loss(val, s, y)
    assert loss == pytest.approx(0.5 * np.mean((value_forward(val, s) - y) ** 2))
    f = lambda: critic_loss(val, s, y)[0]
    assert _fd_check(f, val.net, grads, rng) < 1e-4


def test_ratio_one_gives_policy_gradient():
    rng = np.random.default_rng(8)
    pol, _ = _tiny(rng)
    s = rng.standard_normal((50, 4))
    actions, logp = sample_and_logprob(policy_forward(pol, s), rng)
    adv = rng.standard_normal(50)
    obj, g_clip, diag = actor_objective(pol, s, actions, logp, adv, 0.2, 0.0)
    assert diag["ratio"] == pytest.approx(1.0) and diag["clip_frac"] == 0.0
    # plain policy gradient mean(A * logp) has the same gradient at ratio 1
    _, g_big, _ = actor_objective(pol, s, actions, logp, adv, 1e9, 0.0)
    for k in g_clip:
        np.testing.assert_allclose(g_clip[k], g_big[k], rtol=1e-12, atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(ratio=st.floats(0.0, 5.0), adv=st.floats(-5, 5), eps=st.floats(0.01, 0.5))
def test_clip_bound(ratio, adv, eps):
    surr = min(ratio * adv, clip(ratio, eps) * adv)
    assert surr <= ratio * adv + 1e-12
    if adv > 0 and ratio > 1 + eps:
        assert surr == pytest.approx((1 + eps) * adv)


def test_normalizer_examples():
    st_ = NormalizerState.fresh(1)
    x = np.array([3.5])
    np.testing.assert_array_equal(normalize(x, st_, update=False), x)
    for v in (1.0, 2.0, 3.0):
        normalize(np.array([v]), st_, update=True)
    assert st_.count == 3
    assert normalize(np.array([2.0]), st_, update=False)[0] == pytest.approx(0.0)
    assert st_.var[0] == pytest.approx(2.0 / 3.0)
    c = NormalizerState.fresh(2)
    out = [normalize(np.array([4.0, -1.0]), c, update=True) for _ in range(50)]
    np.testing.assert_allclose(out[-1], 0.0, atol=1e-12)
    assert np.all(c.var >= 0)


def test_normalizer_matches_numpy():
    rng = np.random.default_rng(3)
    data = rng.normal(5.0, 3.0, (500, 4))
    st_ = NormalizerState.fresh(4)
    normalize(data, st_, update=True)
    np.testing.assert_allclose(st_.mean, data.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(st_.var, data.var(axis=0), rtol=1e-10)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_gradient_aborts():
    rng = np.random.default_rng(0)
    agent = PPOAgent(4, heads(1), PPOConfig(hidden=8), rng)
    before = {k: v.copy() for k, v in agent.policy.net.items()}
    s = rng.standard_normal((8, 4))
    v_before = {k: v.copy() for k, v in agent.value.net.items()}
    a = np.zeros((8, 3), int)
    with pytest.raises(NonFiniteGradient):
        agent.ppo_update(s, a, np.zeros(8), np.full(8, np.nan), np.zeros(8))
    with pytest.raises(NonFiniteGradient):
        agent.ppo_update(s, a, np.zeros(8), np.ones(8), np.full(8, np.inf))
    bad = s.copy()
    bad[0, 0] = np.nan
    with pytest.raises(NonFiniteGradient):
        agent.ppo_update(bad, a, np.zeros(8), np.ones(8), np.zeros(8))
    for k in before:
        np.testing.assert_array_equal(agent.policy.net[k], before[k])
    for k in v_before:
        np.testing.assert_array_equal(agent.value.net[k], v_before[k])


def test_heads_stay_valid_after_updates():
    rng = np.random.default_rng(1)
    agent = PPOAgent(4, heads(2), PPOConfig(hidden=16, optimizer="adam", lr_actor=1e-2), rng)
    for _ in range(20):
        s = rng.standard_normal((32, 4))
        st_, a, lp, v = agent.act(s, rng)
        agent.ppo_update(st_, a, lp, rng.standard_normal(32), rng.standard_normal(32))
    for p in policy_forward(agent.policy, rng.standard_normal((10, 4))):
        assert np.all(np.isfinite(p))
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    agent = PPOAgent(5, heads(2), PPOConfig(hidden=8, optimizer="adam"), rng)
    s = rng.standard_normal((16, 5))
    st_, a, lp, v = agent.act(s, rng)
    agent.ppo_update(st_, a, lp, rng.standard_normal(16), rng.standard_normal(16))
    path = tmp_path / "ck.bin"
    save_checkpoint(path, agent, 7, "abc", {"note": 1})
    raw = path.read_bytes()
    assert raw[:8] == b"HYBRISCK"
    back, header = load_checkpoint(path)
    assert header["step"] == 7 and header["config_hash"] == "abc" and header["meta"] == {"note": 1}
    for k in agent.policy.net:
        np.testing.assert_array_equal(back.policy.net[k], agent.policy.net[k])
    np.testing.assert_array_equal(back.norm.mean, agent.norm.mean)
    assert back.norm.count == agent.norm.count
    assert isinstance(back.opt_pi, Adam) and back.opt_pi.t == agent.opt_pi.t
    # identical continuation
    x = rng.standard_normal((4, 5))
    args = (rng.standard_normal(4), rng.standard_normal(4))
    for ag in (agent, back):
        st_, a, lp, _ = ag.act(x, np.random.default_rng(1), update_norm=False)
        ag.ppo_update(st_, a, lp, *args)
    for k in agent.policy.net:
        np.testing.assert_array_equal(back.policy.net[k], agent.policy.net[k])
    path.write_bytes(b"NOTACKPT" + raw[8:])
    with pytest.raises(ValueError):
        load_checkpoint(path)
