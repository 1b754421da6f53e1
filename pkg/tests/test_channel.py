import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from grantfree.channel import (QuadratureSpec, decode_batch, decode_rb, p1_closed, p1_limit,
                               p1_numeric, success_prob_given_k)
from grantfree.errors import QuadratureError
from grantfree.params import ChannelParams

MU_GRID = [0.25, 0.5, 1.0, 2.0, 10 ** 0.4, 4.0]
RHO_GRID = [1e2, 1e4, 10 ** 5.2]


def test_success_given_k_default_channel(ch):
    assert success_prob_given_k(0, ch) == pytest.approx(math.exp(-ch.mu / ch.rho), rel=1e-15)
    assert success_prob_given_k(0, ch) == pytest.approx(0.9999841, abs=1e-7)
    # independent value: exp(-mu/rho) / (mu + 1) at mu = 10^0.4, rho = 10^5.2
    assert success_prob_given_k(1, ch) == pytest.approx(0.2847427, abs=5e-7)


def test_success_given_k_noiseless_single_packet():
    assert success_prob_given_k(0, ChannelParams.ideal(3.0)) == 1.0


def test_success_given_k_rejects_negative(ch):
    with pytest.raises(ValueError):
        success_prob_given_k(-1, ch)


@given(k=st.integers(0, 30), mu=st.floats(0.05, 20), rho=st.floats(1.0, 1e9))
def test_success_given_k_geometric_in_k(k, mu, rho):
    ch = ChannelParams.from_linear(mu, rho)
    assert success_prob_given_k(k, ch) == pytest.approx(success_prob_given_k(0, ch) / (mu + 1) ** k, rel=1e-12)
    assert success_prob_given_k(k + 1, ch) < success_prob_given_k(k, ch)


@given(mu=st.floats(0.05, 10), rho=st.floats(1.0, 1e9), k=st.integers(0, 5))
def test_success_given_k_decreasing_in_mu(mu, rho, k):
    a = success_prob_given_k(k, ChannelParams.from_linear(mu, rho))
    b = success_prob_given_k(k, ChannelParams.from_linear(mu * 1.01, rho))
    assert b < a


@pytest.mark.parametrize("mu", MU_GRID)
@pytest.mark.parametrize("rho", RHO_GRID)
def test_p1_closed_matches_quadrature(mu, rho):
    ch = ChannelParams.from_linear(mu, rho)
    assert abs(p1_closed(ch) - p1_numeric(ch, QuadratureSpec(tol=1e-10))) <= 1e-8


def test_p1_default_channel_value(ch):
    assert p1_closed(ch) == pytest.approx(0.6019, abs=1e-4)


def test_p1_numeric_mu2_high_snr():
    # 30-digit reference; the 1/rho correction keeps it 1.5e-6 above the limit 0.5
    assert p1_numeric(ChannelParams.from_linear(2.0, 1e6)) == pytest.approx(0.500001499997000, abs=1e-9)


@pytest.mark.parametrize("mu,limit", [(0.5, 0.0), (1.0, 0.0), (2.0, 0.5), (4.0, 0.75)])
def test_p1_limits(mu, limit):
    assert p1_limit(mu) == limit
    assert abs(p1_closed(ChannelParams.from_linear(mu, 1e8)) - limit) <= 1e-5


def test_p1_branches_agree_at_mu_one():
    for rho in (10.0, 1e3, 1e6):
        lo = p1_closed(ChannelParams.from_linear(1 - 1e-9, rho))
        hi = p1_closed(ChannelParams.from_linear(1 + 1e-9, rho))
        assert lo == pytest.approx(hi, abs=1e-7)


@given(mu=st.floats(0.05, 20), rho=st.floats(1.0, 1e10))
def test_p1_in_unit_interval(mu, rho):
    p = p1_closed(ChannelParams.from_linear(mu, rho))
    assert 0.0 <= p < 1.0


def test_p1_continuous_in_rho():
    ch = [ChannelParams.from_linear(2.512, r) for r in (1e5, 1e5 * (1 + 1e-9))]
    assert abs(p1_closed(ch[0]) - p1_closed(ch[1])) < 1e-9


def test_p1_numeric_reports_failure():
    with pytest.raises(QuadratureError):
        p1_numeric(ChannelParams.from_linear(2.0, 1e2), QuadratureSpec(tol=1e-30, limit=2))


def test_p1_monte_carlo(ch):
    # p1 = Pr{both fail | pair} / Pr{tagged fails | pair}
    rng = np.random.default_rng(11)
    f = rng.exponential(size=(2_000_000, 2))
    ok = decode_batch(f, ch)
    tagged_fail = ~ok[:, 0]
    both = tagged_fail & ~ok[:, 1]
    est = both.sum() / tagged_fail.sum()
    se = math.sqrt(est * (1 - est) / tagged_fail.sum())
    assert abs(est - p1_closed(ch)) < 4 * se


def test_decode_single_packet_noiseless():
    assert decode_rb([0.3], ChannelParams.ideal(2.0)).tolist() == [0]


def test_decode_empty():
    assert decode_rb([], ChannelParams.ideal(2.0)).size == 0


def test_decode_two_equal_fades_mu_below_one():
    assert decode_rb([1.0, 1.0], ChannelParams.ideal(0.8)).tolist() == [0, 1]


@given(st.lists(st.floats(1e-6, 50), min_size=2, max_size=8), st.floats(1.0001, 20))
def test_decode_noiseless_mu_above_one_at_most_one(fades, mu):
    assert len(decode_rb(fades, ChannelParams.ideal(mu))) <= 1


def test_decode_rb_matches_batch(ch):
    rng = np.random.default_rng(5)
    f = rng.exponential(size=(200, 3))
    batch = decode_batch(f, ch)
    for row, b in zip(f, batch):
        assert decode_rb(row, ch).tolist() == np.flatnonzero(b).tolist()


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_monte_carlo_failure_probability(ch, k):
    rng = np.random.default_rng(100 + k)
    n = 1_000_000
    fails = ~decode_batch(rng.exponential(size=(n, k + 1)), ch)[:, 0]
    p = 1.0 - success_prob_given_k(k, ch)
    se = math.sqrt(p * (1 - p) / n)
    assert abs(fails.mean() - p) <= 3 * max(se, 1.0 / n)
