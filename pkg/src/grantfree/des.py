"""Slotted discrete-event simulator of reactive grant-free access.

Per TTI, every UE with a head-of-line packet due picks an RB uniformly at
random and transmits with a fresh Exp(1) fade; each packet on an RB is
decoded on its own SINR. A failed packet is resent exactly 4 TTIs after the
previous attempt started, indefinitely. Success is registered 2 TTIs after
the transmission TTI starts; the next packet may start 4 TTIs after it.

The heavy lifting lives in :mod:`grantfree._kernel`; this module handles
configuration, seeding, replication and statistics.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernel as K
from .delay import DelayDistribution, OUTAGE_THRESHOLD_TTI
from .errors import ConfigError, EmptyStats, InsufficientSamples, TableMiss
from .params import ChannelParams, SystemParams

HIST_STEP = 0.01
HIST_MAX_TTI = 200.0
ROUNDS = 32
DEFAULT_WARMUP = 100_000


@dataclass(frozen=True)
class DynamicConfig:
    """UE churn: each UE leaves w.p. ``p_leave_per_tti`` per TTI and
    Poisson((2 n_bar - N_t) p_leave) UEs join; B follows ``b_star_table``."""

    p_leave_per_tti: float
    n_bar: int
    b_star_table: dict

    def __post_init__(self):
        if not 0.0 <= self.p_leave_per_tti < 1.0:
            raise ConfigError("p_leave_per_tti must lie in [0, 1)")
        if int(self.n_bar) != self.n_bar or self.n_bar < 2:
            raise ConfigError("n_bar must be an integer >= 2")
        if self.n_bar not in self.b_star_table or self.b_star_table[self.n_bar] is None:
            raise TableMiss(f"table has no entry for n_bar={self.n_bar}")

    def table_array(self) -> np.ndarray:
        top = max(self.b_star_table) + 1
        arr = np.full(top, -1, np.int64)
        for n, b in self.b_star_table.items():
            if b is not None:
                arr[int(n)] = int(b)
        return arr


@dataclass(frozen=True)
class SimConfig:
    sys: SystemParams
    ch: ChannelParams
    horizon_ttis: int
    warmup_ttis: int = DEFAULT_WARMUP
    seed: int = 0
    dynamic: DynamicConfig | None = None
    record_limit: int = 0
    late_tti: float = OUTAGE_THRESHOLD_TTI

    def __post_init__(self):
        if int(self.horizon_ttis) != self.horizon_ttis or int(self.warmup_ttis) != self.warmup_ttis:
            raise ConfigError("horizon and warm-up must be integers")
        if not self.horizon_ttis > self.warmup_ttis >= 0:
            raise ConfigError("need horizon_ttis > warmup_ttis >= 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.record_limit < 0:
            raise ConfigError("record_limit must be >= 0")


@dataclass
class SimStats:
    """Mergeable counters of one or more replications.

    ``hist[j]`` counts delays in (j h, (j+1) h]; ``overflow`` counts the
    rest. Round ``r`` counters refer to the r-th attempt of a packet
    (0 = first transmission); the last round collects all later ones.
    """

    hist: np.ndarray
    hist_step: float
    overflow: int
    n_delivered: int
    n_arrived: int
    n_queued_end: int
    n_churned: int
    n_late: int
    attempts: np.ndarray
    successes: np.ndarray
    others: np.ndarray
    others_sq: np.ndarray
    rb_counts: np.ndarray
    churn_log: np.ndarray
    records: np.ndarray
    max_delay: float
    tx_ttis: int = 0
    joins: int = 0
    leaves: int = 0
    measured_ttis: int = 0
    seeds: list = field(default_factory=list)

    @property
    def n_success(self) -> int:
        return self.n_delivered

    @property
    def empirical_g(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.others / self.attempts

    @property
    def outage(self) -> float:
        if self.n_delivered == 0:
            raise EmptyStats("no delivered packets")
        return self.n_late / self.n_delivered

    def outage_ci(self, level: float = 0.99):
        """Wilson score interval for the late fraction."""
        from scipy.stats import norm

        n = self.n_delivered
        if n == 0:
            raise EmptyStats("no delivered packets")
        z = norm.ppf(0.5 + level / 2.0)
        p = self.n_late / n
        den = 1.0 + z * z / n
        mid = (p + z * z / (2 * n)) / den
        half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
        return max(0.0, mid - half), min(1.0, mid + half)

    def merge(self, other: "SimStats") -> "SimStats":
        if self.hist_step != other.hist_step or len(self.hist) != len(other.hist):
            raise ValueError("histograms are not compatible")
        nb = max(len(self.rb_counts), len(other.rb_counts))
        rb = np.zeros(nb, np.int64)
        rb[: len(self.rb_counts)] += self.rb_counts
        rb[: len(other.rb_counts)] += other.rb_counts
        return SimStats(
            hist=self.hist + other.hist,
            hist_step=self.hist_step,
            overflow=self.overflow + other.overflow,
            n_delivered=self.n_delivered + other.n_delivered,
            n_arrived=self.n_arrived + other.n_arrived,
            n_queued_end=self.n_queued_end + other.n_queued_end,
            n_churned=self.n_churned + other.n_churned,
            n_late=self.n_late + other.n_late,
            attempts=self.attempts + other.attempts,
            successes=self.successes + other.successes,
            others=self.others + other.others,
            others_sq=self.others_sq + other.others_sq,
            rb_counts=rb,
            churn_log=np.concatenate((self.churn_log, other.churn_log)),
            records=np.concatenate((self.records, other.records)),
            max_delay=max(self.max_delay, other.max_delay),
            tx_ttis=self.tx_ttis + other.tx_ttis,
            joins=self.joins + other.joins,
            leaves=self.leaves + other.leaves,
            measured_ttis=self.measured_ttis + other.measured_ttis,
            seeds=self.seeds + other.seeds,
        )

    def summary(self) -> dict:
        out = {
            "n_delivered": self.n_delivered,
            "n_arrived": self.n_arrived,
            "n_queued_end": self.n_queued_end,
            "n_churned": self.n_churned,
            "n_late": self.n_late,
            "max_delay_tti": self.max_delay,
            "measured_ttis": self.measured_ttis,
            "seeds": self.seeds,
        }
        if self.n_delivered:
            lo, hi = self.outage_ci()
            out.update(outage_1ms=self.outage, outage_ci99=[lo, hi])
        used = self.attempts > 0
        out["attempts_by_round"] = self.attempts[used].tolist()
        out["successes_by_round"] = self.successes[used].tolist()
        out["empirical_g"] = self.empirical_g[used].tolist()
        if self.leaves or self.joins:
            out.update(joins=self.joins, leaves=self.leaves)
        return out

    def write_histogram(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_lo_tti", "count"])
            for j in np.flatnonzero(self.hist):
                w.writerow([f"{j * self.hist_step:.6g}", int(self.hist[j])])
            if self.overflow:
                w.writerow([f"{len(self.hist) * self.hist_step:.6g}", self.overflow])

    def write_churn_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tti", "n_ues", "n_rbs"])
            w.writerows(self.churn_log.tolist())

    def write_raw(self, path) -> None:
        """Per-packet delays (TTIs) of the recorded packets, one per line."""
        d = self.delays()
        with open(path, "w", newline="") as fh:
            fh.write("delay_tti\n")
            for x in d:
                fh.write(f"{x!r}\n")

    def delays(self) -> np.ndarray:
        r = self.records
        return r[:, 2] + 2.0 - r[:, 0] if len(r) else np.empty(0)


def _stats_from_kernel(out, seed: int, measured: int) -> SimStats:
    (hist, counters, attempts, successes, others, others_sq, rb_counts,
     churn_log, records, max_delay, err, err_n) = out
    if err == K.ERR_TABLE_MISS:
        raise TableMiss(f"population reached N={err_n}, which the B* table does not cover")
    return SimStats(
        hist=hist, hist_step=HIST_STEP, overflow=int(counters[K.C_OVERFLOW]),
        n_delivered=int(counters[K.C_DELIVERED]), n_arrived=int(counters[K.C_ARRIVED]),
        n_queued_end=int(counters[K.C_QUEUED_END]), n_churned=int(counters[K.C_CHURNED]),
        n_late=int(counters[K.C_LATE]), attempts=attempts, successes=successes,
        others=others, others_sq=others_sq, rb_counts=rb_counts,
        churn_log=np.ascontiguousarray(churn_log), records=np.ascontiguousarray(records),
        max_delay=float(max_delay), tx_ttis=int(counters[K.C_TX_TTIS]),
        joins=int(counters[K.C_JOINS]), leaves=int(counters[K.C_LEAVES]),
        measured_ttis=measured, seeds=[seed],
    )


def _run_one(config: SimConfig) -> SimStats:
    sys, ch = config.sys, config.ch
    if config.dynamic is not None and config.dynamic.p_leave_per_tti > 0:
        dyn = config.dynamic
        n0, p_leave, n_bar, table = dyn.n_bar, dyn.p_leave_per_tti, dyn.n_bar, dyn.table_array()
    else:
        n0, p_leave, n_bar = sys.n_ues, 0.0, sys.n_ues
        if config.dynamic is not None:
            n0 = n_bar = config.dynamic.n_bar
            table = config.dynamic.table_array()
        else:
            table = np.full(n0 + 1, -1, np.int64)
            table[n0] = sys.n_rbs
    out = K.simulate(
        int(n0), float(sys.lambda_tti), float(ch.noise_to_signal), float(ch.mu),
        int(config.horizon_ttis), int(config.warmup_ttis), np.uint64(config.seed),
        float(p_leave), int(n_bar), table, int(round(HIST_MAX_TTI / HIST_STEP)), HIST_STEP,
        ROUNDS, int(config.record_limit), float(config.late_tti),
    )
    return _stats_from_kernel(out, config.seed, config.horizon_ttis - config.warmup_ttis)


def run(config: SimConfig) -> SimStats:
    """One replication with the configured seed. Deterministic per seed."""
    if config.dynamic is not None and config.dynamic.p_leave_per_tti > 0:
        raise ConfigError("config has churn; use run_dynamic")
    return _run_one(config)


def run_dynamic(config: SimConfig) -> SimStats:
    """One replication of the churn scenario; B follows the table as N_t changes."""
    if config.dynamic is None:
        raise ConfigError("run_dynamic needs a DynamicConfig")
    return _run_one(config)


def replication_seeds(seed: int, n: int) -> list:
    """Independent 64-bit seeds for ``n`` replications derived from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


def run_replications(config: SimConfig, replications: int = 1, workers: int | None = None) -> SimStats:
    """Independent replications (seeds spawned from ``config.seed``), merged in seed order."""
    if replications < 1:
        raise ConfigError("replications must be >= 1")
    configs = [replace(config, seed=s) for s in replication_seeds(config.seed, replications)]
    workers = min(replications, workers or os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_run_one, configs))
    else:
        parts = [_run_one(c) for c in configs]
    total = parts[0]
    for p in parts[1:]:
        total = total.merge(p)
    return total


def horizon_for_packets(packets: float, n_ues: int, lambda_tti: float, warmup: int) -> int:
    """Horizon whose expected delivered count exceeds ``packets`` by 10 sd."""
    if lambda_tti <= 0:
        raise ConfigError("cannot target a packet count with zero arrival rate")
    mean_rate = n_ues * lambda_tti
    need = packets + 10.0 * math.sqrt(packets) + 10.0
    return warmup + int(math.ceil(need / mean_rate))


def empirical_ccdf(stats: SimStats, grid_step: float = HIST_STEP) -> DelayDistribution:
    """Right-continuous empirical CCDF Pr{D > t} on t = 0, grid_step, ..."""
    n = stats.n_delivered
    if n == 0:
        raise EmptyStats("no delivered packets")
    ratio = grid_step / stats.hist_step
    k = int(round(ratio))
    if k < 1 or abs(k - ratio) > 1e-9:
        raise ValueError("grid_step must be a multiple of the histogram bin width")
    # bins are (j h, (j+1) h], so everything from bin j upwards exceeds j h
    tail = np.concatenate((np.cumsum(stats.hist[::-1])[::-1], [0])) + stats.overflow
    ccdf = tail[::k] / n
    return DelayDistribution(grid_step, ccdf.astype(float), (), "empirical", 0.0, {"n": n})


@dataclass(frozen=True)
class AttemptRates:
    rounds: np.ndarray
    g: np.ndarray
    g_se: np.ndarray
    p_success: np.ndarray
    p_se: np.ndarray
    events: np.ndarray


def measure_attempt_rates(stats: SimStats, rounds=None, min_events: int = 100) -> AttemptRates:
    """Per-round mean number of other transmitters seen by a transmission,
    and per-round success fraction."""
    if rounds is None:
        rounds = np.flatnonzero(stats.attempts >= min_events)
        if len(rounds) == 0:
            raise InsufficientSamples("no round has enough transmissions")
    rounds = np.asarray(rounds, dtype=int)
    n = stats.attempts[rounds]
    if np.any(n < min_events):
        bad = rounds[n < min_events].tolist()
        raise InsufficientSamples(f"rounds {bad} have fewer than {min_events} transmissions")
    n = n.astype(float)
    g = stats.others[rounds] / n
    var = np.maximum(stats.others_sq[rounds] / n - g * g, 0.0)
    p = stats.successes[rounds] / n
    return AttemptRates(rounds, g, np.sqrt(var / n), p, np.sqrt(p * (1 - p) / n), n.astype(np.int64))
