"""Fading, capture and SINR probabilities.

Every packet on an RB is decoded independently (capture), treating the
other packets on that RB as noise. Channel gains are i.i.d. Exp(1) per
transmission, redrawn on every attempt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import QuadratureError
from .params import ChannelParams


def success_prob_given_k(k: int, ch: ChannelParams) -> float:
    """Probability that a packet sharing its RB with ``k`` others is decoded."""
    if k < 0:
        raise ValueError("k must be >= 0")
    return ch.no_noise_success / (ch.mu + 1.0) ** k


def p1_closed(ch: ChannelParams) -> float:
    """Probability that the single colliding UE also fails, given the tagged UE failed.

    Written with ``expm1`` so the large-SNR regime (where numerator and
    denominator both lose their leading terms) keeps full precision.
    """
    mu = ch.mu
    em = math.expm1(-mu / ch.rho)
    den = mu - em
    if mu < 1.0:
        emb = math.expm1(-2.0 * mu / ((1.0 - mu) * ch.rho))
        return (-2.0 * em + (1.0 - mu) * emb) / den
    return (mu - 1.0 - 2.0 * em) / den


def p1_limit(mu: float) -> float:
    """Noiseless limit of :func:`p1_closed`."""
    return 0.0 if mu <= 1.0 else 1.0 - 1.0 / mu


@dataclass(frozen=True)
class QuadratureSpec:
    tol: float = 1e-10
    # exp(-gamma) < 1e-16 beyond this
    gamma_max: float = 40.0
    limit: int = 200


def _pair_failure_mass(mu: float, delta: float, q: QuadratureSpec) -> float:
    """Integral of exp(-g1-g2) over {g1 <= mu(delta+g2), g2 <= mu(delta+g1)}."""

    def inner(g2):
        lo = max(0.0, g2 / mu - delta)
        hi = mu * (delta + g2)
        if hi <= lo:
            return 0.0
        val, err = integrate.quad(lambda g1: math.exp(-g1 - g2), lo, hi,
                                  epsabs=q.tol * 1e-2, epsrel=1e-13, limit=q.limit)
        if err > q.tol:
            raise QuadratureError(f"inner quadrature error {err:g} at g2={g2:g}")
        return val

    if mu < 1.0:
        g2_max = mu * delta / (1.0 - mu) if delta > 0 else 0.0
    else:
        g2_max = q.gamma_max
    if g2_max <= 0.0:
        return 0.0
    kink = mu * delta
    points = [kink] if 0.0 < kink < g2_max else None
    val, err = integrate.quad(inner, 0.0, g2_max, points=points,
                              epsabs=q.tol * 1e-1, epsrel=1e-13, limit=q.limit)
    if err > q.tol:
        raise QuadratureError(f"outer quadrature error {err:g} exceeds {q.tol:g}")
    return val


def p1_numeric(ch: ChannelParams, quadrature_spec: QuadratureSpec | None = None) -> float:
    """Independent evaluation of ``p1`` by adaptive double quadrature.

    Pr{both fail | one collider} / Pr{tagged fails | one collider}.
    """
    q = quadrature_spec or QuadratureSpec()
    joint = _pair_failure_mass(ch.mu, ch.noise_to_signal, q)
    return joint / (1.0 - success_prob_given_k(1, ch))


def decode_rb(fades, ch: ChannelParams) -> np.ndarray:
    """Indices of packets on one RB that are decoded.

    ``fades`` are the Exp(1) channel gains of the packets sharing the RB.
    Under full power control every packet has mean received power P_bar,
    so SINR_j = fade_j / (1/rho + sum_{i != j} fade_i).
    """
    f = np.asarray(fades, dtype=float)
    if f.size == 0:
        return np.empty(0, dtype=int)
    interference = f.sum() - f
    # a lone packet on a noiseless channel has infinite SINR
    with np.errstate(divide="ignore"):
        sinr = f / (ch.noise_to_signal + interference)
    return np.flatnonzero(sinr >= ch.mu)


def decode_batch(fades: np.ndarray, ch: ChannelParams) -> np.ndarray:
    """Vectorised :func:`decode_rb` over the rows of a (trials, k) array."""
    f = np.asarray(fades, dtype=float)
    interference = f.sum(axis=-1, keepdims=True) - f
    return f >= ch.mu * (ch.noise_to_signal + interference)
