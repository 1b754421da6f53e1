"""User-plane delay of the simplified (four-state) model.

Each UE is an M/G/1 queue whose service time X is the time from becoming
head-of-line to finishing ACK processing, on the lattice {4, 8, 12, ...}.
The user-plane delay is D = A + W + X - 2 with A ~ U(0, 1) the alignment
delay and W the M/G/1 waiting time.

W is built by the geometric equilibrium expansion: W = sum_{j<=K} Xe_j with
Pr{K = k} = (1 - r) r^k, r = lambda * E[X], and Xe the stationary-excess
law of X. For lattice X the excess law is 4 (J + U) with J on the integers,
so conditional on K = k every delay component is a lattice shift plus
4 * IrwinHall(k) (+ U for the alignment). Those sums of uniforms are
cardinal B-splines, evaluated here with the Cox-de Boor recurrence on the
output grid. Grid values are exact up to rounding; the only approximation
is truncating K where r^(K+1) < 1e-17.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .attempt import cascade_step, success_prob
from .channel import p1_closed
from .errors import GridTooCoarse, NoFixedPoint, NoRealRoot, Unstable
from .params import ChannelParams, SystemParams

DEFAULT_GRID_STEP = 0.01
OUTAGE_THRESHOLD_TTI = 7.0
_K_TAIL = 1e-17
# auto-horizon stop; the mixture sum has a rounding floor near 1e-15
_T_TAIL = 1e-13


@dataclass(frozen=True)
class SimplifiedSolution:
    alpha_hat: float
    g_f_hat: float
    g_r_hat: float
    p_f_hat: float
    p_r_hat: float
    residual: float
    lambda_tti: float
    iterations: int = 0
    label: str = "full"

    @property
    def mean_service(self) -> float:
        return 4.0 * (1.0 + self.p_r_hat - self.p_f_hat) / self.p_r_hat

    @property
    def utilization(self) -> float:
        return self.lambda_tti * self.mean_service

    def summary(self) -> dict:
        return {
            "p_f_hat": self.p_f_hat,
            "p_r_hat": self.p_r_hat,
            "alpha_hat": self.alpha_hat,
            "g_f_hat": self.g_f_hat,
            "g_r_hat": self.g_r_hat,
            "mean_service_tti": self.mean_service,
        }


def solve_simplified(sys: SystemParams, ch: ChannelParams, tol: float = 1e-12, *,
                     ignore_1pr: bool = False, damping: float = 0.5,
                     max_iter: int = 100_000) -> SimplifiedSolution:
    """Fixed point of (alpha, G_F, G_R, p_F, p_R) for the four-state chain.

    With ``ignore_1pr`` the retransmission attempt rate is pinned to G_F
    (and p1 to 0), which forces p_R = p_F.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    lam = sys.lambda_tti
    n1 = sys.n_ues - 1
    p1 = 0.0 if ignore_1pr else p1_closed(ch)
    g_f = n1 * lam
    g_r = g_f
    state = None
    residual = math.inf
    for it in range(1, max_iter + 1):
        p_f = success_prob(g_f, sys, ch)
        p_r = success_prob(g_r, sys, ch)
        if not (0.0 < p_r <= 1.0 and 0.0 < p_f <= 1.0):
            raise NoFixedPoint(f"success probability left (0,1] at iteration {it}")
        alpha = 4.0 * (1.0 + p_r - p_f) * lam / p_r
        if alpha > 1.0:
            raise NoFixedPoint(f"non-empty probability {alpha:.4g} > 1: offered load too high")
        new_gf = n1 * alpha / 4.0
        new_gr = new_gf if ignore_1pr else cascade_step(new_gf, new_gf, sys, ch, p1)
        new_state = np.array([alpha, new_gf, new_gr, p_f, p_r])
        if state is not None:
            residual = float(np.max(np.abs(new_state - state)))
            if not math.isfinite(residual):
                raise NoFixedPoint("iteration diverged")
            if residual <= tol:
                break
        state = new_state
        g_f = damping * g_f + (1.0 - damping) * new_gf
        g_r = damping * g_r + (1.0 - damping) * new_gr
    else:
        raise NoFixedPoint(f"no convergence in {max_iter} iterations (residual {residual:g})")

    p_f = success_prob(new_gf, sys, ch)
    p_r = success_prob(new_gr, sys, ch)
    alpha = 4.0 * (1.0 + p_r - p_f) * lam / p_r
    sol = SimplifiedSolution(alpha, n1 * alpha / 4.0, new_gr, p_f, p_r, residual, lam, it,
                             "no_1pr" if ignore_1pr else "full")
    if sol.utilization >= 1.0:
        raise Unstable(f"queue utilization {sol.utilization:.4g} >= 1")
    return sol


def no_1pr_solution(sys: SystemParams, ch: ChannelParams) -> SimplifiedSolution:
    """Closed-form single success probability when 1-pR is ignored (quadratic root)."""
    lam = sys.lambda_tti
    e = ch.no_noise_success
    disc = 1.0 - 4.0 * (sys.n_ues - 1) * ch.capture_factor * lam / (e * sys.n_rbs)
    if disc < 0:
        raise NoRealRoot(f"discriminant {disc:.4g} < 0: load too high for the no-1pR model")
    p = 0.5 * e * (1.0 + math.sqrt(disc))
    alpha = 4.0 * lam / p
    g = (sys.n_ues - 1) * alpha / 4.0
    sol = SimplifiedSolution(alpha, g, g, p, p, 0.0, lam, 0, "no_1pr")
    if sol.utilization >= 1.0:
        raise Unstable(f"queue utilization {sol.utilization:.4g} >= 1")
    return sol


@dataclass(frozen=True)
class ServiceTimeDist:
    """Service time on the lattice {4, 8, ...}; ``pmf[m]`` is Pr{X = 4m}."""

    pmf: np.ndarray
    mean: float
    truncated: float = 0.0

    @property
    def values(self) -> np.ndarray:
        return 4.0 * np.arange(len(self.pmf))

    def as_dict(self) -> dict:
        return {4 * m: float(p) for m, p in enumerate(self.pmf) if p > 0}


def _service_lattice(p_f: float, p_r: float, m_max: int) -> np.ndarray:
    m = np.arange(m_max + 1)
    pmf = np.zeros(m_max + 1)
    if m_max >= 1:
        pmf[1] = p_f
    if m_max >= 2:
        i = m[2:] - 1
        pmf[2:] = (1.0 - p_f) * (1.0 - p_r) ** (i - 1) * p_r
    return pmf


def service_pmf(sol: SimplifiedSolution, eps_trunc: float = 1e-15) -> ServiceTimeDist:
    p_f, p_r = sol.p_f_hat, sol.p_r_hat
    # Pr{X > 4m} = (1 - p_F)(1 - p_R)^(m-1) for m >= 1
    m_max = 1
    while (1.0 - p_f) * (1.0 - p_r) ** (m_max - 1) >= eps_trunc and m_max < 100_000:
        m_max += 1
    pmf = _service_lattice(p_f, p_r, m_max)
    return ServiceTimeDist(pmf, sol.mean_service, max(0.0, 1.0 - pmf.sum()))


@dataclass(frozen=True)
class DelayDistribution:
    """A delay law tabulated on t = 0, h, 2h, ... as a right-continuous CCDF.

    ``atoms`` lists (location, mass) pairs of the point masses, which the
    grid CCDF alone cannot distinguish from steep slopes.
    """

    grid_step: float
    ccdf: np.ndarray
    atoms: tuple = ()
    label: str = "full"
    truncation_error: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self.ccdf)) * self.grid_step

    @property
    def t_max(self) -> float:
        return (len(self.ccdf) - 1) * self.grid_step

    def ccdf_at(self, t):
        """CCDF at arbitrary t, linearly interpolated between grid points."""
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self.t, self.ccdf, left=1.0, right=self.ccdf[-1])
        out = np.where(t < 0, 1.0, out)
        return float(out) if out.ndim == 0 else out

    def mean(self) -> float:
        """E[D] = integral of the CCDF (trapezoid on the grid)."""
        c = self.ccdf
        return float(self.grid_step * (c.sum() - 0.5 * (c[0] + c[-1])))

    def write_csv(self, path, ttis_per_second: float) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_tti", "t_ms", "ccdf"])
            for t, c in zip(self.t, self.ccdf):
                w.writerow([f"{t:.6g}", f"{t * 1e3 / ttis_per_second:.6g}", repr(float(c))])


def outage(dist: DelayDistribution, threshold_tti: float = OUTAGE_THRESHOLD_TTI) -> float:
    """Pr{D > threshold}."""
    if threshold_tti < 0:
        raise ValueError("threshold must be >= 0")
    return float(dist.ccdf_at(threshold_tti))


# ---------------------------------------------------------------- grid engine

def _cells_per_tti(grid_step: float) -> int:
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    if grid_step > 0.1:
        raise GridTooCoarse(f"grid_step {grid_step} > 0.1 TTI")
    r = round(1.0 / grid_step)
    if abs(r * grid_step - 1.0) > 1e-9:
        raise ValueError(f"grid_step must divide one TTI exactly, got {grid_step}")
    return r


class _UniformSums:
    """Upper tails of 4*IrwinHall(k) (+ U) on a grid of r cells per TTI.

    In x = z/4 units the grid has 4r cells per unit, so the IrwinHall(k)
    density (cardinal B-spline of order k) is computed exactly at grid
    points by Cox-de Boor; its CDF and second integral follow from
    stride-4r cumulative sums.
    """

    def __init__(self, r: int):
        self.r = r
        self.q = 4 * r
        self._bspl = {1: np.concatenate((np.ones(self.q), [0.0]))}

    def bspline(self, n: int) -> np.ndarray:
        """Order-n cardinal B-spline on x in [0, n], indices 0..n*q."""
        if n not in self._bspl:
            prev = self.bspline(n - 1)
            q = self.q
            x = np.arange(n * q + 1) / q
            a = np.zeros(n * q + 1)
            a[: len(prev)] = prev
            b = np.zeros(n * q + 1)
            b[q: q + len(prev)] = prev
            self._bspl[n] = (x * a + (n - x) * b) / (n - 1)
        return self._bspl[n]

    def _stride_cumsum(self, m: np.ndarray, size: int) -> np.ndarray:
        q = self.q
        padded = np.zeros(-(-size // q) * q)
        n = min(len(m), size)
        padded[:n] = m[:n]
        return np.cumsum(padded.reshape(-1, q), axis=0).ravel()[:size]

    def cdf(self, k: int, align: bool) -> np.ndarray:
        """CDF of Y = 4*IH(k) + align*U at z-grid indices 0..(4k+align)*r."""
        r = self.r
        size = (4 * k + int(align)) * r + 1
        if k == 0:
            return np.minimum(np.arange(size) / r, 1.0) if align else np.ones(1)
        if not align:
            return self._stride_cumsum(self.bspline(k + 1), size)
        g = self._stride_cumsum(self.bspline(k + 2), size)
        h = self._stride_cumsum(g, size)
        shifted = np.concatenate((np.zeros(r), h[:-r]))
        return np.clip(4.0 * (h - shifted), 0.0, 1.0)

    def upper_tail(self, k: int, align: bool) -> np.ndarray:
        """Pr{Y > z} at z-grid indices 0..(4k+align)*r, via symmetry of Y."""
        c = self.cdf(k, align)
        if k == 0 and not align:
            return np.zeros(1)
        # Y is symmetric about its midpoint, so Pr{Y > z} = Pr{Y < top - z}
        return c[::-1].copy()


def _lattice_conv(a: np.ndarray, b: np.ndarray, m_max: int) -> np.ndarray:
    return np.convolve(a, b)[: m_max + 1]


def _mixture_ccdf(service: np.ndarray | None, excess: np.ndarray, rho_q: float, *,
                  align: bool, shift_cells: int, n_cells: int, r: int):
    """CCDF on t-grid indices 0..n_cells-1 of

        lattice(L_K [+ X/4]) * 4 + 4*IH(K) [+ U] - shift

    with K geometric(rho_q). Returns (ccdf, truncation_error).
    """
    step4 = 4 * r
    m_max = (n_cells + shift_cells) // step4 + 2
    if rho_q > 0:
        k_max = max(1, math.ceil(math.log(_K_TAIL) / math.log(rho_q)))
    else:
        k_max = 0
    sums = _UniformSums(r)
    ccdf = np.zeros(n_cells)
    lk = np.zeros(m_max + 1)
    lk[0] = 1.0
    total_w = 0.0
    idx = np.arange(n_cells)
    for k in range(k_max + 1):
        w = (1.0 - rho_q) * rho_q ** k
        if k > 0:
            lk = _lattice_conv(lk, excess, m_max)
        lat = lk if service is None else _lattice_conv(lk, service, m_max)
        tail = sums.upper_tail(k, align)
        top = len(tail) - 1
        contrib = np.zeros(n_cells)
        cum = np.cumsum(lat)
        for m in range(m_max + 1):
            if lat[m] == 0.0:
                continue
            z = idx + shift_cells - m * step4
            # z < 0: whole mass of this lattice point lies above t
            inside = (z >= 0) & (z <= top)
            contrib[z < 0] += lat[m]
            contrib[inside] += lat[m] * tail[z[inside]]
        # lattice mass beyond m_max sits entirely above the grid
        contrib += max(0.0, 1.0 - cum[-1])
        ccdf += w * contrib
        total_w += w
    return np.minimum(ccdf, 1.0), max(0.0, 1.0 - total_w)


def _excess_lattice(service: np.ndarray, mean: float) -> np.ndarray:
    """Pr{J = j} = 4 Pr{X > 4j} / E[X]."""
    surv = np.clip(1.0 - np.cumsum(service), 0.0, None)
    return 4.0 * surv / mean


def _service_for(sol: SimplifiedSolution, m_max: int) -> np.ndarray:
    return _service_lattice(sol.p_f_hat, sol.p_r_hat, m_max)


def _build(sol: SimplifiedSolution, lam: float, grid_step: float, *, kind: str,
           t_max: float | None, label: str) -> DelayDistribution:
    r = _cells_per_tti(grid_step)
    mean_x = sol.mean_service
    rho_q = lam * mean_x
    if rho_q >= 1.0:
        raise Unstable(f"queue utilization {rho_q:.4g} >= 1")
    align = kind in ("delay",)
    shift = -2 if kind == "delay" else 0
    with_service = kind in ("delay", "sojourn")

    horizon = t_max if t_max is not None else 40.0
    while True:
        n_cells = int(round(horizon * r)) + 1
        m_max = (n_cells + 2 * r) // (4 * r) + 2
        service = _service_for(sol, m_max + 1)
        excess = _excess_lattice(service, mean_x)
        ccdf, trunc = _mixture_ccdf(service if with_service else None, excess, rho_q,
                                    align=align, shift_cells=-shift * r, n_cells=n_cells, r=r)
        if t_max is not None or ccdf[-1] < _T_TAIL or horizon >= 4000:
            break
        horizon *= 2

    if kind == "delay":
        # D >= 2 surely; pin the head to exactly 1 against rounding in the mixture weights
        ccdf[: 2 * r + 1] = 1.0
    atoms: list = []
    if kind == "waiting":
        atoms.append((0.0, 1.0 - rho_q))
    elif kind == "sojourn":
        atoms.extend((4.0 * m, (1.0 - rho_q) * p) for m, p in enumerate(service) if p > 0)
    return DelayDistribution(grid_step, ccdf, tuple(atoms), label, trunc,
                             {"rho_q": rho_q, "mean_service": mean_x})


def delay_distribution(sol: SimplifiedSolution, sys: SystemParams,
                       grid_step: float = DEFAULT_GRID_STEP, t_max: float | None = None) -> DelayDistribution:
    """Law of D = A + W + X - 2 with the 1-pR service law."""
    return _build(sol, sys.lambda_tti, grid_step, kind="delay", t_max=t_max, label=sol.label)


def delay_no_1pr(sys: SystemParams, ch: ChannelParams, grid_step: float = DEFAULT_GRID_STEP,
                 t_max: float | None = None) -> DelayDistribution:
    """Delay law when every attempt succeeds with the same probability p~."""
    sol = no_1pr_solution(sys, ch)
    return _build(sol, sys.lambda_tti, grid_step, kind="delay", t_max=t_max, label="no_1pr")


def delay_no_queue(sol: SimplifiedSolution, grid_step: float = DEFAULT_GRID_STEP,
                   t_max: float | None = None) -> DelayDistribution:
    """Law of A + X - 2: the arriving packet always finds an empty UE."""
    return _build(sol, 0.0, grid_step, kind="delay", t_max=t_max, label="no_queue")


def waiting_distribution(sol: SimplifiedSolution, sys: SystemParams,
                         grid_step: float = DEFAULT_GRID_STEP, t_max: float | None = None) -> DelayDistribution:
    """M/G/1 waiting time W (atom 1 - rho at zero)."""
    return _build(sol, sys.lambda_tti, grid_step, kind="waiting", t_max=t_max, label="waiting")


def sojourn_distribution(sol: SimplifiedSolution, sys: SystemParams,
                         grid_step: float = DEFAULT_GRID_STEP, t_max: float | None = None) -> DelayDistribution:
    """Sojourn time V = W + X."""
    return _build(sol, sys.lambda_tti, grid_step, kind="sojourn", t_max=t_max, label="sojourn")


def pk_mean_wait(sol: SimplifiedSolution, lam: float) -> float:
    """Pollaczek-Khinchine mean waiting time lambda E[X^2] / (2 (1 - rho))."""
    svc = service_pmf(sol, 1e-18)
    ex2 = float(np.sum(svc.values ** 2 * svc.pmf))
    return lam * ex2 / (2.0 * (1.0 - lam * svc.mean))


def service_transform(sol: SimplifiedSolution, s: float) -> float:
    """E[exp(-s X)] in closed form."""
    p_f, p_r = sol.p_f_hat, sol.p_r_hat
    return p_f * math.exp(-4 * s) + (1 - p_f) * p_r * math.exp(-8 * s) / (1 - (1 - p_r) * math.exp(-4 * s))


def sojourn_transform(sol: SimplifiedSolution, lam: float, s: float) -> float:
    """P-K transform of the sojourn time V."""
    x = service_transform(sol, s)
    return (1 - lam * sol.mean_service) * s * x / (s - lam + lam * x)


def delay_transform(sol: SimplifiedSolution, lam: float, s: float) -> float:
    """E[exp(-s D)] = A(s) V(s) e^{2s}."""
    return (math.exp(2 * s) - math.exp(s)) / s * sojourn_transform(sol, lam, s)
