import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from broadcast_stability.channel import CHANNEL_I, CHANNEL_II, ChannelModel2x2, CollisionChannelNxM
from broadcast_stability.reception_chain import DegenerateChainError, alpha
from broadcast_stability.service_rates import (
    beta,
    mu_backlogged_2x2,
    mu_backlogged_2x2_expectation,
    mu_collision,
    mu_empty_2x2,
    rates_fn,
    service_rates,
    success_probs_2x2,
)
from oracles import mpr_rate_oracle

unit = st.floats(0.0, 1.0)


@st.composite
def mpr_channels(draw):
    qs = [[draw(st.floats(0.05, 1.0)) for _ in range(2)] for _ in range(2)]
    qj = [[draw(st.floats(0.0, qs[n][m])) for m in range(2)] for n in range(2)]
    return ChannelModel2x2(q_solo=qs, q_joint=qj)


def test_channel_i_full_power():
    assert mu_backlogged_2x2(CHANNEL_I, [1.0, 0.0], 0) == pytest.approx(0.546535, abs=1e-6)
    assert mu_backlogged_2x2_expectation(CHANNEL_I, [1.0, 0.0], 0) == pytest.approx(0.546535, abs=1e-6)


def test_channel_ii_success_probs():
    s = success_probs_2x2(CHANNEL_II, 0.5, 0)
    assert (s.tau, s.phi, s.sigma) == pytest.approx((0.34, 0.65, 0.5))


def test_collision_example():
    c = CollisionChannelNxM(2, 2, (0.7, 0.7))
    assert mu_collision(c, [0.5, 0.5], 0) == pytest.approx(0.5 * 0.5 * alpha(2, 0.7))
    assert mu_collision(c, [0.5, 0.5], 0) == pytest.approx(0.1421875, abs=1e-10)
    assert mu_collision(c, [0.5, 0.5], 0, {0}) == pytest.approx(0.5 * alpha(2, 0.7))


def test_beta_requires_membership():
    assert beta([0.3, 0.3, 0.3], 0, {0, 1, 2}) == pytest.approx(0.3 * 0.49)
    with pytest.raises(ValueError):
        beta([0.3, 0.3], 0, {1})


def test_degenerate_destination():
    c = ChannelModel2x2(((0.5, 0.0), (0.5, 0.5)), ((0.0, 0.0), (0.0, 0.0)))
    with pytest.raises(DegenerateChainError):
        mu_backlogged_2x2(c, [0.5, 0.5], 0)
    mb, _ = rates_fn(c)(np.array([0.5, 0.5]))
    assert mb[0] == 0.0


@given(mpr_channels(), unit, unit, st.sampled_from([0, 1]))
def test_closed_form_matches_expectation_and_chain(c, p1, p2, n):
    p = [p1, p2]
    s = success_probs_2x2(c, p[1 - n], n)
    if s.phi < 1e-4 or s.sigma < 1e-4:
        return
    mu = mu_backlogged_2x2(c, p, n)
    assert mu == pytest.approx(mu_backlogged_2x2_expectation(c, p, n), abs=1e-10)
    if p[n] > 1e-3:
        assert mu == pytest.approx(mpr_rate_oracle(c, p, n), abs=1e-8)


@given(mpr_channels(), unit, unit)
def test_backlogged_below_empty(c, p1, p2):
    f = rates_fn(c)
    mb, me = f(np.array([p1, p2]))
    assert np.all(mb <= me + 1e-12)
    assert np.all((mb >= 0) & (me <= 1 + 1e-12))


@given(mpr_channels(), unit, unit)
def test_vectorised_matches_scalar_mpr(c, p1, p2):
    s0, s1 = success_probs_2x2(c, p2, 0), success_probs_2x2(c, p1, 1)
    if min(s0.phi, s0.sigma, s1.phi, s1.sigma) < 1e-4:
        return
    mb, me = rates_fn(c)(np.array([p1, p2]))
    r = service_rates(c, [p1, p2])
    np.testing.assert_allclose(mb, r.mu_b, atol=1e-12)
    np.testing.assert_allclose(me, r.mu_e, atol=1e-12)
    assert me[0] == pytest.approx(mu_empty_2x2(c, [p1, p2], 0))


@given(st.integers(1, 6), st.integers(1, 12), st.data())
def test_vectorised_matches_scalar_collision(n, m, data):
    q = tuple(data.draw(st.floats(0.05, 1.0)) for _ in range(n))
    p = [data.draw(unit) for _ in range(n)]
    c = CollisionChannelNxM(n, m, q)
    mb, me = rates_fn(c)(np.array(p))
    r = service_rates(c, p)
    np.testing.assert_allclose(mb, r.mu_b, atol=1e-12)
    np.testing.assert_allclose(me, r.mu_e, atol=1e-12)
    assert np.all(mb <= me + 1e-15)


def test_batched_shapes():
    P = np.random.default_rng(0).random((7, 5, 2))
    mb, me = rates_fn(CHANNEL_II)(P)
    assert mb.shape == me.shape == (7, 5, 2)


def test_perfect_channel_is_aloha():
    c = ChannelModel2x2(((1, 1), (1, 1)), ((0, 0), (0, 0)))
    r = service_rates(c, [0.3, 0.6])
    np.testing.assert_allclose(r.mu_b, [0.3 * 0.4, 0.6 * 0.7])
    np.testing.assert_allclose(r.mu_e, [0.3, 0.6])
