import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from grantfree.attempt import (cascade_step, collider_given_failure, ideal_limit, limiting_probabilities,
                               single_pass_cascade, solve_full_chain, success_prob)
from grantfree.channel import p1_closed
from grantfree.errors import NoFixedPoint, TruncationWarning
from grantfree.params import ChannelParams, SystemParams

DENSE = SystemParams(100, 48, 10.0)


def test_cascade_zero_prev_returns_gf(ch):
    assert cascade_step(0.0, 0.37, DENSE, ch) == 0.37


def test_cascade_ideal_channel_mu2():
    # noiseless, mu = 2: one collider fails w.p. 1/2 and returns in lockstep
    ch = ChannelParams.ideal(2.0)
    sys = SystemParams(50, 10, 1.0)
    g_f = 0.2
    # without noise every failure is a collision, so Pr{one collider | fail} = 1
    assert collider_given_failure(g_f, sys, ch) == pytest.approx(1.0, rel=1e-14)
    assert cascade_step(g_f, g_f, sys, ch) == pytest.approx((1 - 1 / 49) * g_f + 0.5, rel=1e-14)


def test_cascade_rejects_negative(ch):
    with pytest.raises(ValueError):
        cascade_step(-0.1, 0.1, DENSE, ch)


def test_cascade_fixed_point_dense_load(ch):
    sol = solve_full_chain(DENSE, ch)
    g = sol.g_f
    for _ in range(200):
        g = cascade_step(g, sol.g_f, DENSE, ch)
    assert abs(cascade_step(g, sol.g_f, DENSE, ch) - g) < 1e-10
    assert abs(sol.g_r[-1] - g) < 1e-10


def test_perfect_channel_limit():
    ch = ChannelParams.ideal(1e-9)
    sys = SystemParams(30, 10 ** 9, 20.0)
    sol = solve_full_chain(sys, ch)
    lam = sys.lambda_tti
    assert sol.p_f == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(sol.p_r, 1.0, atol=1e-9)
    assert sol.alpha == pytest.approx(4 * lam, rel=1e-7)
    assert sol.g_f == pytest.approx(29 * lam, rel=1e-7)


def test_full_chain_invariants(ch):
    sys = SystemParams(20, 20, 10.0)
    sol = solve_full_chain(sys, ch)
    assert sol.g_f == pytest.approx(sol.alpha * 19 / 4, rel=1e-15)
    assert sol.f_tilde == sol.pi_f / 2
    assert sol.alpha == pytest.approx(sys.lambda_tti / sol.f_tilde, rel=1e-15)
    total = 2 * (sol.pi_f + sol.pi_r.sum()) + sol.tail_mass
    assert 1 - 1e-12 <= total <= 1 + 1e-12
    assert sol.g_r[0] >= sol.g_f
    assert sol.residual <= 1e-12
    assert sol.p_f == pytest.approx(success_prob(sol.g_f, sys, ch), abs=1e-12)


def test_equilibrium_equations_close(ch):
    """Stationary equations of the F / W_F / R_i / W_Ri embedded chain."""
    sol = solve_full_chain(DENSE, ch)
    pf, pr, pi_f, pi_r = sol.p_f, sol.p_r, sol.pi_f, sol.pi_r
    # W states mirror their transmit states
    pi_wf, pi_wr = pi_f, pi_r
    assert abs(pi_r[0] - (1 - pf) * pi_wf) <= 1e-12
    assert np.max(np.abs(pi_r[1:] - (1 - pr[:-1]) * pi_wr[:-1])) <= 1e-12
    # flow back into F: first-attempt successes, retransmission successes, and the closed tail
    tail_r = (1 - pr[-1]) * pi_wr[-1] / pr[-1]
    inflow = pf * pi_wf + np.sum(pr * pi_wr) + pr[-1] * tail_r
    assert abs(pi_f - inflow) <= 1e-12


def test_transmitters_per_tti(ch):
    sys = SystemParams(20, 20, 10.0)
    sol = solve_full_chain(sys, ch)
    assert sol.transmitters_per_tti(20) == pytest.approx(sol.g_f * 20 / 19, rel=1e-14)


@pytest.mark.parametrize("mu_db", [2.0, 4.0, 6.0])
def test_cascade_flat_dense_load(mu_db):
    ch = ChannelParams(sinr_threshold_db=mu_db)
    sol = solve_full_chain(DENSE, ch)
    spread = np.max(np.abs(sol.g_r - sol.g_r[0]))
    assert sol.g_r[0] > sol.g_f
    assert spread < 0.2 * (sol.g_r[0] - sol.g_f)


def test_single_pass_vs_joint(ch):
    sol = solve_full_chain(DENSE, ch)
    once = single_pass_cascade(sol.g_f, DENSE, ch, 25)
    assert np.allclose(once, sol.g_r, atol=1e-10)


@pytest.mark.parametrize("n", [3, 10, 100])
@pytest.mark.parametrize("mu", [0.5, 2.0, 4.0])
def test_ideal_limit_closed_form(n, mu):
    sys = SystemParams(n, 48, 10.0)
    g_f, g_r = ideal_limit(sys, mu)
    p1 = 0.0 if mu <= 1 else 1 - 1 / mu
    assert g_r == (1 - 1 / (n - 1)) * g_f + p1


def test_ideal_limit_n3_mu4():
    g_f, g_r = ideal_limit(SystemParams(3, 48, 10.0), 4.0)
    assert g_r == pytest.approx(g_f / 2 + 0.75, rel=1e-15)


def test_ideal_limit_large_n_increment():
    g_f, g_r = ideal_limit(SystemParams(2000, 4000, 1.0), 2.0)
    assert g_r - g_f == pytest.approx(0.5, abs=2e-3)


def test_ideal_cascade_rounds_identical():
    # at rho = inf every retransmission round sees the same attempt rate
    ch = ChannelParams.ideal(2.0)
    sol = solve_full_chain(SystemParams(100, 48, 10.0), ch)
    g_r = single_pass_cascade(sol.g_f, SystemParams(100, 48, 10.0), ch, 10)
    assert np.all(g_r == g_r[0])


def test_overload_raises(ch):
    with pytest.raises(NoFixedPoint):
        solve_full_chain(SystemParams(400, 1, 500.0), ch)


def test_bad_arguments(ch):
    with pytest.raises(ValueError):
        solve_full_chain(DENSE, ch, i_max=0)
    with pytest.raises(ValueError):
        ideal_limit(DENSE, 0.0)


def test_truncation_warning(ch):
    with pytest.warns(TruncationWarning):
        solve_full_chain(SystemParams(60, 2, 30.0), ch, i_max=2)


def test_limiting_probabilities_sum_to_one():
    pi_f, pi_r, tail = limiting_probabilities(0.7, np.array([0.4, 0.5, 0.6]))
    assert 2 * (pi_f + pi_r.sum()) + tail == pytest.approx(1.0, abs=1e-15)


@given(lam=st.floats(0.5, 30.0))
def test_gf_nondecreasing_in_lambda(lam):
    ch = ChannelParams()
    a = solve_full_chain(SystemParams(40, 20, lam), ch).g_f
    b = solve_full_chain(SystemParams(40, 20, lam * 1.05), ch).g_f
    assert b >= a


@given(n=st.integers(2, 200), b=st.integers(1, 100), lam=st.floats(0.0, 20.0))
def test_success_probability_in_unit_interval(n, b, lam):
    ch = ChannelParams()
    sys = SystemParams(n, b, lam)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            sol = solve_full_chain(sys, ch)
    except NoFixedPoint:
        return
    assert 0 < sol.p_f <= 1 and np.all((sol.p_r > 0) & (sol.p_r <= 1))
    assert 0 <= sol.alpha <= 1
