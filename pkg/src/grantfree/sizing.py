"""RB dimensioning: the smallest B that keeps Pr{D > threshold} under a target."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

from .delay import (OUTAGE_THRESHOLD_TTI, delay_distribution, delay_no_1pr, delay_no_queue,
                    outage, solve_simplified)
from .errors import ConfigError, Infeasible, ModelError
from .params import ChannelParams, SystemParams

MODELS = ("full", "no_1pr", "no_queue", "simulation")


@dataclass(frozen=True)
class SizingSpec:
    model: str = "full"
    outage_target: float = 1e-5
    threshold_tti: float = OUTAGE_THRESHOLD_TTI
    b_init: int = 1
    b_step: int = 8
    b_max: int = 500
    grid_step: float = 0.01
    # simulation-backed sizing only
    seed: int = 0
    sim_chunk_packets: float = 1e7
    sim_max_packets: float = 1e9
    sim_confidence: float = 0.99

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}")
        if not 0.0 < self.outage_target < 1.0:
            raise ConfigError("outage_target must lie in (0, 1)")
        if self.b_step < 1 or self.b_init < 1 or self.b_max < self.b_init:
            raise ConfigError("need b_step >= 1 and 1 <= b_init <= b_max")
        if self.threshold_tti < 0:
            raise ConfigError("threshold must be >= 0")


@dataclass(frozen=True)
class Evaluation:
    b: int
    outage: float
    meets: bool
    note: str = ""


@dataclass
class SizingResult:
    n_ues: int
    model: str
    b_star: int | None
    outage_at_b_star: float | None
    reason: str = ""
    evaluations: list = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.b_star is not None


def _analytic_outage(sys: SystemParams, ch: ChannelParams, spec: SizingSpec) -> float:
    t_max = spec.threshold_tti + 1.0
    if spec.model == "no_1pr":
        dist = delay_no_1pr(sys, ch, spec.grid_step, t_max=t_max)
    else:
        sol = solve_simplified(sys, ch)
        if spec.model == "no_queue":
            dist = delay_no_queue(sol, spec.grid_step, t_max=t_max)
        else:
            dist = delay_distribution(sol, sys, spec.grid_step, t_max=t_max)
    return outage(dist, spec.threshold_tti)


def _simulated_outage(sys: SystemParams, ch: ChannelParams, spec: SizingSpec):
    """Sequential sampling until the CI for the late fraction excludes the target."""
    from .des import SimConfig, horizon_for_packets, run

    warm = 100_000
    chunk_h = horizon_for_packets(spec.sim_chunk_packets, sys.n_ues, sys.lambda_tti, 0)
    total = None
    k = 0
    while True:
        seed = (spec.seed * 1_000_003 + sys.n_rbs * 7919 + k) % 2 ** 64
        st = run(SimConfig(sys, ch, warm + chunk_h, warm, seed=seed))
        total = st if total is None else total.merge(st)
        k += 1
        if total.n_delivered == 0:
            if total.n_arrived > 0:
                return 1.0, False, "nothing delivered; B saturated"
            continue
        lo, hi = total.outage_ci(spec.sim_confidence)
        if hi < spec.outage_target:
            return total.outage, True, f"CI [{lo:.3g}, {hi:.3g}] below target"
        if lo > spec.outage_target:
            return total.outage, False, f"CI [{lo:.3g}, {hi:.3g}] above target"
        if total.n_delivered >= spec.sim_max_packets:
            p = total.outage
            return p, p <= spec.outage_target, f"inconclusive at {total.n_delivered} packets; point estimate used"


def _evaluate(sys: SystemParams, ch: ChannelParams, spec: SizingSpec, b: int) -> Evaluation:
    s = sys.with_rbs(b)
    try:
        if spec.model == "simulation":
            p, meets, note = _simulated_outage(s, ch, spec)
            return Evaluation(b, p, meets, note)
        p = _analytic_outage(s, ch, spec)
    except ModelError as exc:
        return Evaluation(b, math.nan, False, exc.code)
    return Evaluation(b, p, p <= spec.outage_target)


def find_b_star(sys: SystemParams, ch: ChannelParams, spec: SizingSpec) -> SizingResult:
    """Smallest B in [b_init, b_max] meeting the outage target.

    Coarse ascent by ``b_step``, then bisection of the last bracket. A B at
    which the model has no valid answer counts as not meeting the target.
    Raises :class:`Infeasible` when even ``b_max`` fails.
    """
    evals: dict = {}

    def ev(b):
        if b not in evals:
            evals[b] = _evaluate(sys, ch, spec, b)
        return evals[b]

    lo = None
    b = spec.b_init
    while True:
        if ev(b).meets:
            break
        lo = b
        if b == spec.b_max:
            last = ev(b)
            err = Infeasible(
                f"no B <= {spec.b_max} meets outage {spec.outage_target:g} for N={sys.n_ues} "
                f"(outage at b_max: {last.outage:.3g}{', ' + last.note if last.note else ''})")
            err.result = SizingResult(sys.n_ues, spec.model, None, None, str(err),
                                      sorted(evals.values(), key=lambda e: e.b))
            raise err
        b = min(b + spec.b_step, spec.b_max)
    hi = b
    if lo is not None:
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ev(mid).meets:
                hi = mid
            else:
                lo = mid
    # minimality check; bisection is only valid if outage is monotone in B
    if hi > spec.b_init and ev(hi - 1).meets:
        warnings.warn("outage not monotone in B; falling back to a linear scan", RuntimeWarning, stacklevel=2)
        hi = next(b for b in range(spec.b_init, hi + 1) if ev(b).meets)
    return SizingResult(sys.n_ues, spec.model, hi, ev(hi).outage, "",
                        sorted(evals.values(), key=lambda e: e.b))


def _size_one(args):
    sys, ch, spec = args
    try:
        return find_b_star(sys, ch, spec)
    except Infeasible as exc:
        return exc.result


def b_star_table(n_range, sys: SystemParams, ch: ChannelParams, spec: SizingSpec,
                 workers: int = 1) -> list:
    """``find_b_star`` for every N in ``n_range``; infeasible entries kept with a reason."""
    n_list = [int(n) for n in n_range]
    if not n_list:
        raise ConfigError("n_range is empty")
    jobs = [(sys.with_ues(n), ch, spec) for n in n_list]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_size_one, jobs))
    return [_size_one(j) for j in jobs]


def table_mapping(rows) -> dict:
    """N -> B* (None where infeasible)."""
    return {r.n_ues: r.b_star for r in rows}


def write_table(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n_ues", "b_star", "model", "outage_at_b_star", "reason"])
        for r in rows:
            w.writerow([r.n_ues, "" if r.b_star is None else r.b_star, r.model,
                        "" if r.outage_at_b_star is None else repr(r.outage_at_b_star), r.reason])
