"""System and channel parameter sets.

All unit conversions happen here: dBm/dB inputs become linear ratios and
packets/s become packets/TTI. Everything downstream works in TTIs and
linear units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError

TTIS_PER_SECOND = 7000.0
TTI_SECONDS = 1.0 / TTIS_PER_SECOND


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    """Rayleigh block-fading channel with full path-loss power control.

    ``rho`` is the mean received SNR and ``mu`` the linear SINR threshold.
    """

    noise_power_dbm: float = -112.0
    mean_rx_power_dbm: float = -60.0
    sinr_threshold_db: float = 4.0
    rho: float = field(init=False)
    mu: float = field(init=False)

    def __post_init__(self):
        for name in ("mean_rx_power_dbm", "sinr_threshold_db"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        # -inf noise is the ideal (noiseless) channel
        if math.isnan(self.noise_power_dbm) or self.noise_power_dbm == math.inf:
            raise ConfigError("noise_power_dbm must be finite or -inf")
        object.__setattr__(self, "rho", db_to_linear(self.mean_rx_power_dbm - self.noise_power_dbm))
        object.__setattr__(self, "mu", db_to_linear(self.sinr_threshold_db))

    @classmethod
    def from_linear(cls, mu: float, rho: float) -> "ChannelParams":
        """Build from linear threshold and mean SNR (noise fixed at 0 dBm)."""
        if not (mu > 0 and rho > 0):
            raise ConfigError("mu and rho must be positive")
        ch = cls(
            noise_power_dbm=0.0 if math.isfinite(rho) else -math.inf,
            mean_rx_power_dbm=10.0 * math.log10(rho) if math.isfinite(rho) else 0.0,
            sinr_threshold_db=10.0 * math.log10(mu),
        )
        # keep the caller's linear values bit-exact
        object.__setattr__(ch, "rho", float(rho))
        object.__setattr__(ch, "mu", float(mu))
        return ch

    @classmethod
    def ideal(cls, mu: float) -> "ChannelParams":
        """Noiseless channel: failures come from collisions only."""
        if not mu > 0:
            raise ConfigError("mu must be positive")
        return cls.from_linear(mu, math.inf)

    @property
    def noise_to_signal(self) -> float:
        """sigma^2 / P_bar, i.e. 1/rho."""
        return 1.0 / self.rho

    @property
    def no_noise_success(self) -> float:
        """exp(-mu/rho): success probability of an interference-free packet."""
        return math.exp(-self.mu / self.rho)

    @property
    def capture_factor(self) -> float:
        """mu/(mu+1), the per-interferer failure weight."""
        return self.mu / (self.mu + 1.0)


@dataclass(frozen=True)
class SystemParams:
    """Cell population, RB budget and per-UE Poisson arrival rate."""

    n_ues: int
    n_rbs: int
    lambda_per_s: float
    # kept as a rate so lambda_tti = lambda / rate is a single rounding
    ttis_per_second: float = TTIS_PER_SECOND

    def __post_init__(self):
        if int(self.n_ues) != self.n_ues or self.n_ues < 2:
            raise ConfigError(f"n_ues must be an integer >= 2, got {self.n_ues}")
        if int(self.n_rbs) != self.n_rbs or self.n_rbs < 1:
            raise ConfigError(f"n_rbs must be an integer >= 1, got {self.n_rbs}")
        if not (self.lambda_per_s >= 0 and math.isfinite(self.lambda_per_s)):
            raise ConfigError(f"lambda_per_s must be finite and >= 0, got {self.lambda_per_s}")
        if not (self.ttis_per_second > 0 and math.isfinite(self.ttis_per_second)):
            raise ConfigError("ttis_per_second must be positive and finite")
        if self.lambda_tti >= 0.25:
            raise ConfigError(f"lambda per TTI {self.lambda_tti:g} >= 1/4: no service law can keep up")

    @property
    def lambda_tti(self) -> float:
        """Per-UE arrival rate in packets per TTI."""
        return self.lambda_per_s / self.ttis_per_second

    @property
    def tti_seconds(self) -> float:
        return 1.0 / self.ttis_per_second

    def tti_to_ms(self, t):
        return t * 1e3 / self.ttis_per_second

    def with_rbs(self, n_rbs: int) -> "SystemParams":
        return SystemParams(self.n_ues, n_rbs, self.lambda_per_s, self.ttis_per_second)

    def with_ues(self, n_ues: int) -> "SystemParams":
        return SystemParams(n_ues, self.n_rbs, self.lambda_per_s, self.ttis_per_second)
