"""Attempt rates of the full retransmission Markov chain.

An HOL packet alternates a 1-TTI transmission state with a 3-TTI wait
(first transmission F, then retransmissions R_1, R_2, ...). The attempt
rate seen in the first transmission is G_F; a UE that collided with the
tagged UE and also failed retransmits in lockstep with it, which inflates
the attempt rates G_{R_i} seen in retransmissions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .channel import p1_closed, p1_limit
from .errors import NoFixedPoint, TruncationWarning
from .params import ChannelParams, SystemParams

DAMPING = 0.5
MAX_ITER = 100_000


def success_prob(g: float, sys: SystemParams, ch: ChannelParams) -> float:
    """Success probability of a transmission that sees attempt rate ``g``."""
    return ch.no_noise_success * (1.0 - ch.capture_factor * g / sys.n_rbs)


def collider_given_failure(g: float, sys: SystemParams, ch: ChannelParams) -> float:
    """Pr{exactly one collider | tagged transmission failed} at attempt rate ``g``."""
    x = g / sys.n_rbs
    if x == 0.0:
        return 0.0
    e = ch.no_noise_success
    num = x * (1.0 - e / (ch.mu + 1.0))
    # 1 - e(1 - c x), with 1 - e kept exact for large SNR
    den = -math.expm1(-ch.mu / ch.rho) + e * ch.capture_factor * x
    return num / den


def cascade_step(g_prev: float, g_f: float, sys: SystemParams, ch: ChannelParams,
                 p1: float | None = None) -> float:
    """Attempt rate of retransmission i from that of round i-1.

    Background UEs keep attempting at rate G_F, less the one slot taken by
    a collider; a collider that also failed returns with probability p1.
    """
    if g_prev < 0 or g_f < 0:
        raise ValueError("attempt rates must be non-negative")
    if p1 is None:
        p1 = p1_closed(ch)
    s = collider_given_failure(g_prev, sys, ch)
    return (1.0 - s / (sys.n_ues - 1)) * g_f + p1 * s


def single_pass_cascade(g_f: float, sys: SystemParams, ch: ChannelParams, i_max: int = 25) -> np.ndarray:
    """G_{R_1..R_imax} from a fixed G_F without re-solving the chain."""
    p1 = p1_closed(ch)
    out = np.empty(i_max)
    g = g_f
    for i in range(i_max):
        g = cascade_step(g, g_f, sys, ch, p1)
        out[i] = g
    return out


@dataclass(frozen=True)
class FullChainSolution:
    g_f: float
    g_r: np.ndarray
    p_f: float
    p_r: np.ndarray
    alpha: float
    pi_f: float
    pi_r: np.ndarray
    f_tilde: float
    residual: float
    iterations: int
    tail_mass: float

    @property
    def pi_wf(self) -> float:
        return self.pi_f

    @property
    def pi_wr(self) -> np.ndarray:
        return self.pi_r

    @property
    def r_tilde(self) -> np.ndarray:
        return self.pi_r / 2.0

    def transmitters_per_tti(self, n_ues: int) -> float:
        """Unconditional mean number of transmitting UEs per TTI (N alpha / 4)."""
        return n_ues * self.alpha / 4.0


def limiting_probabilities(p_f: float, p_r: np.ndarray):
    """Stationary probabilities of F and R_i (each equal to its wait state).

    The tail beyond ``len(p_r)`` is closed geometrically with the last p_R.
    Returns (pi_f, pi_r, tail_mass) where tail_mass is the truncated mass of
    all R_i/W_{R_i} states beyond the last one kept.
    """
    surv = (1.0 - p_f) * np.concatenate(([1.0], np.cumprod(1.0 - p_r)))
    # surv[i-1] = (1-p_F) prod_{j<i} (1-p_Rj), for i = 1..I+1
    kept = surv[:-1].sum()
    last = p_r[-1] if len(p_r) else 1.0
    tail = surv[-1] / last if last > 0 else math.inf
    norm = 2.0 * (1.0 + kept + tail)
    pi_f = 1.0 / norm
    pi_r = surv[:-1] / norm
    return pi_f, pi_r, 2.0 * tail / norm


def solve_full_chain(sys: SystemParams, ch: ChannelParams, i_max: int = 25, tol: float = 1e-12,
                     damping: float = DAMPING, max_iter: int = MAX_ITER) -> FullChainSolution:
    """Joint fixed point of limiting probabilities, alpha, G_F and the G_{R_i} cascade."""
    if i_max < 1 or tol <= 0:
        raise ValueError("i_max >= 1 and tol > 0 required")
    lam = sys.lambda_tti
    n1 = sys.n_ues - 1
    p1 = p1_closed(ch)
    g_f = n1 * lam
    g_r = np.full(i_max, g_f)
    residual = math.inf
    for it in range(1, max_iter + 1):
        p_f = success_prob(g_f, sys, ch)
        p_r = np.array([success_prob(g, sys, ch) for g in g_r])
        if not (0.0 < p_f <= 1.0 and np.all((p_r > 0.0) & (p_r <= 1.0))):
            raise NoFixedPoint(f"success probability left (0,1] at iteration {it}")
        pi_f, _, _ = limiting_probabilities(p_f, p_r)
        alpha = 2.0 * lam / pi_f
        if alpha > 1.0:
            raise NoFixedPoint(f"non-empty probability {alpha:.4g} > 1: offered load too high")
        new_gf = n1 * alpha / 4.0
        new_gr = np.empty(i_max)
        g = new_gf
        for i in range(i_max):
            g = cascade_step(g, new_gf, sys, ch, p1)
            new_gr[i] = g
        residual = max(abs(new_gf - g_f), float(np.max(np.abs(new_gr - g_r))))
        if not math.isfinite(residual):
            raise NoFixedPoint("iteration diverged")
        if residual <= tol:
            g_f, g_r = new_gf, new_gr
            break
        g_f = damping * g_f + (1.0 - damping) * new_gf
        g_r = damping * g_r + (1.0 - damping) * new_gr
    else:
        raise NoFixedPoint(f"no convergence in {max_iter} iterations (residual {residual:g})")

    p_f = success_prob(g_f, sys, ch)
    p_r = np.array([success_prob(g, sys, ch) for g in g_r])
    pi_f, pi_r, tail = limiting_probabilities(p_f, p_r)
    if tail > 1e-12:
        warnings.warn(f"mass beyond {i_max} retransmissions is {tail:.3g}", TruncationWarning, stacklevel=2)
    f_tilde = pi_f / 2.0
    # alpha = lambda / f_tilde holds exactly at the returned point
    alpha = lam / f_tilde
    return FullChainSolution(
        g_f=n1 * alpha / 4.0, g_r=g_r, p_f=p_f, p_r=p_r, alpha=alpha, pi_f=pi_f, pi_r=pi_r,
        f_tilde=f_tilde, residual=residual, iterations=it, tail_mass=tail,
    )


def ideal_limit(sys: SystemParams, mu: float):
    """Noiseless attempt rates (G_F*, G_R*); identical for every retransmission round.

    G_F* is the full-chain fixed point on the noiseless channel. Returns the
    common retransmission rate (1 - 1/(N-1)) G_F* + p1*.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    ch = ChannelParams.ideal(mu)
    sol = solve_full_chain(sys, ch)
    g_f = sol.g_f
    g_r = (1.0 - 1.0 / (sys.n_ues - 1)) * g_f + p1_limit(mu)
    return g_f, g_r
