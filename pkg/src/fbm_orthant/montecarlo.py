"""Simulation estimates of ``P(u)`` and their comparison with the asymptotics.

By self-similarity ``{B_H(ut)} = u^H {B_H(t)}`` in law, so

    P(u) = P(exists t >= 0: A B_H(t) > (nu + mu t) v),   v = u^(1-H),

and all simulation happens in this rescaled time, where the most likely
crossing sits near ``t0`` whatever ``u`` is. Paths are drawn on a uniform
fine grid; the crossing event is checked on every ``refine``-th point plus
every fine point of the window ``|t - t0| <= window_mult * t0 / v``.

Importance sampling shifts the path law by the conditional mean given
``X(s) = b_tilde(s) v``, i.e. ``h(t) = r(t, s) / s^{2H} * b_tilde(s) v`` with
``r`` the scalar fBm covariance. The likelihood ratio of this rank-one
Cameron-Martin shift only involves the path value at ``s``:

    dQ_s/dP = exp(theta_s' X(s) - v^2 g(s) / 2),   theta_s = w(s) v / s^{2H}.

A single shift at ``t0`` gives heavy-tailed weights (paths crossing away
from ``t0`` are rare under Q but not under P), so by default the sampler is
an equal mixture of shifts centred at nodes ``s_j`` spread around ``t0``,
weighted by ``1 / mean_j dQ_j/dP``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp, ndtr

from .critical import CriticalPoint, find_t0
from .qp import solve_qp
from .fbm import fbm_cov, fbm_paths
from .model import ModelSpec
from .rng import StreamFactory, chunks, run_chunks

logger = logging.getLogger(__name__)

METHODS = ("crude", "mean-shift-IS")
HORIZON_MULT = 4.0
GRID_N = 4096
REFINE = 4
WINDOW_MULT = 3.0
SHIFTS = 20
MIN_ESS = 10.0
CHUNK_FLOATS = 1 << 22


class MonteCarloError(RuntimeError):
    pass


@dataclass(frozen=True)
class MCEstimate:
    u: float
    p: float
    stderr: float
    method: str
    horizon: float
    grid_n: int
    refine: int
    n_samples: int
    seed: int
    n_hits: int = 0
    ess: float = math.nan
    flags: tuple[str, ...] = ()
    shifts: int = 0

    @property
    def rel_stderr(self) -> float:
        return self.stderr / self.p if self.p > 0 else math.inf

    def to_dict(self) -> dict:
        out = asdict(self)
        out["flags"] = list(self.flags)
        return out


@dataclass(frozen=True)
class SimulationGrid:
    """Fine grid ``k * step`` (``k = 1..n_fine``) and the monitored subset."""

    step: float
    n_fine: int
    monitor: np.ndarray
    t0_index: int

    @property
    def times(self) -> np.ndarray:
        return self.step * (self.monitor + 1)


def simulation_grid(t0: float, v: float, horizon_mult: float = HORIZON_MULT, grid_n: int = GRID_N,
                    refine: int = REFINE, window_mult: float = WINDOW_MULT) -> SimulationGrid:
    """Grid with ``t0`` on a fine node; coarse spacing ``horizon / grid_n``."""
    if horizon_mult <= 1:
        raise MonteCarloError("horizon_mult must exceed 1")
    if grid_n < 1 or refine < 1:
        raise MonteCarloError("grid_n and refine must be positive")
    k0 = max(1, round(grid_n * refine / horizon_mult))
    step = t0 / k0
    n_fine = int(math.ceil(horizon_mult * k0))
    k = np.arange(1, n_fine + 1)
    half = window_mult * t0 / max(v, 1e-300)
    keep = (k % refine == 0) | (np.abs(k * step - t0) <= half) | (k == k0)
    return SimulationGrid(step=step, n_fine=n_fine, monitor=np.flatnonzero(keep), t0_index=k0 - 1)


def _chunk_size(n_points: int, d: int) -> int:
    return int(max(16, min(4096, CHUNK_FLOATS // (n_points * d))))


def _grid_paths(H: float, grid: SimulationGrid, rng, size: int) -> np.ndarray:
    """Standard fBm at the monitored times, shape ``(size, len(monitor))``.

    For H = 1/2 the increments are independent, so only the monitored
    points are drawn; otherwise the whole fine grid is synthesised.
    """
    if H == 0.5:
        dt = np.diff(grid.times, prepend=0.0)
        return np.cumsum(rng.standard_normal((size, dt.size)) * np.sqrt(dt), axis=1)
    return fbm_paths(H, grid.n_fine, grid.step, rng, size)[:, grid.monitor]


def shift_nodes(grid: SimulationGrid, t0: float, v: float, g_dd: float,
                shifts: int = SHIFTS) -> np.ndarray:
    """Positions in ``grid.monitor`` of the IS centres.

    Under ``P`` the crossing time concentrates around ``t0`` with spread
    ``sqrt(2 / g'') / v``; the centres cover three of those on each side.
    """
    k0 = int(np.searchsorted(grid.monitor, grid.t0_index))
    if shifts == 0:
        return np.array([k0])
    vv = max(v, 1e-300)
    spread = 3 * math.sqrt(2 / g_dd) / vv if g_dd > 0 and math.isfinite(g_dd) else t0 / vv
    target = t0 + np.arange(-shifts, shifts + 1) * spread / shifts
    target = target[target > 0]
    times = grid.times
    idx = np.abs(times[None, :] - target[:, None]).argmin(axis=1)
    return np.unique(np.append(idx, k0))


def _weighted_stats(x: np.ndarray) -> tuple[float, float]:
    n = x.shape[0]
    mean = float(np.sum(x) / n)
    if n < 2:
        return mean, math.nan
    var = float(np.sum((x - mean) ** 2) / (n - 1))
    return mean, math.sqrt(var / n)


def estimate_p(model: ModelSpec, u: float, horizon_mult: float = HORIZON_MULT, grid_n: int = GRID_N,
               n_samples: int = 10_000, method: str = "mean-shift-IS", seed: int = 0,
               threads: int = 1, refine: int = REFINE, window_mult: float = WINDOW_MULT,
               cp: CriticalPoint | None = None, shifts: int = SHIFTS) -> MCEstimate:
    """Estimate ``P(u)`` on a discrete grid (so a slight underestimate).

    ``shifts`` sets the IS mixture to ``2 * shifts + 1`` centres; 0 keeps
    the single shift at ``t0``.
    """
    if method not in METHODS:
        raise MonteCarloError(f"unknown method {method!r}; choose from {METHODS}")
    if u < 0:
        raise MonteCarloError("u must be non-negative")
    if n_samples < 2:
        raise MonteCarloError("need at least two samples")
    cp = cp if cp is not None else find_t0(model)
    H, d, t0 = model.H, model.d, cp.t0
    v = float(u) ** (1 - H)
    grid = simulation_grid(t0, v, horizon_mult, grid_n, refine, window_mult)
    t = grid.times
    thr = (model.nu[:, None] + model.mu[:, None] * t[None, :]) * v
    F = model.mixing_factor()
    is_ = method == "mean-shift-IS"
    if is_:
        if shifts < 0:
            raise MonteCarloError("shifts must be non-negative")
        nodes = shift_nodes(grid, t0, v, cp.g_dd, shifts)
        centres = t[nodes]
        sols = [solve_qp(model.Sigma, model.b(s)) for s in centres]
        s2h = centres ** (2 * H)
        b_t = np.array([sol.b_tilde for sol in sols])
        # shift_j(t) in every coordinate, shape (J, d, n_monitor)
        shift = (fbm_cov(H, t[None, :], centres[:, None]) / s2h[:, None])[:, None, :] \
            * (b_t * v)[:, :, None]
        theta = np.array([sol.w for sol in sols]) * v / s2h[:, None]
        log_norm = 0.5 * v * v * np.array([sol.value for sol in sols]) / s2h
    streams = StreamFactory(seed, "montecarlo")

    def work(k, size):
        rng = streams("paths", k)
        B = _grid_paths(H, grid, rng, size * F.shape[1]).reshape(size, F.shape[1], -1)
        X = np.einsum("dm,smn->sdn", F, B)
        if is_:
            comp = streams("component", k).integers(0, nodes.size, size)
            X += shift[comp]
        hit = np.any(np.all(X > thr[None], axis=1), axis=1)
        if not is_:
            return hit.astype(float)
        # log dQ_j/dP for every centre j, then the balance-heuristic weight
        logq = np.einsum("sdj,jd->sj", X[:, :, nodes], theta) - log_norm[None, :]
        logw = math.log(nodes.size) - logsumexp(logq, axis=1)
        return np.where(hit, np.exp(logw), 0.0)

    n_points = grid.monitor.size if H == 0.5 else grid.n_fine
    jobs = chunks(n_samples, _chunk_size(n_points, F.shape[1]))
    vals = np.concatenate(run_chunks(work, jobs, threads))
    p, se = _weighted_stats(vals)
    n_hits = int(np.count_nonzero(vals))
    flags = []
    ess = math.nan
    if is_:
        s2 = float(np.sum(vals**2))
        ess = float(np.sum(vals) ** 2 / s2) if s2 > 0 else 0.0
        if ess < MIN_ESS:
            flags.append("degenerate-weights")
            logger.warning("importance weights degenerate at u=%g (ESS %.1f)", u, ess)
    if n_hits == 0:
        flags.append("no-hits")
    return MCEstimate(
        u=float(u), p=p, stderr=se, method=method, horizon=horizon_mult * t0, grid_n=grid_n,
        refine=refine, n_samples=n_samples, seed=seed, n_hits=n_hits, ess=ess, flags=tuple(flags),
        shifts=shifts if is_ else 0,
    )


def brownian_crossing(mu: float, a: float, T: float = math.inf) -> float:
    """``P(sup_{s <= T} (W(s) - mu s) > a)`` for standard Brownian ``W``."""
    if math.isinf(T):
        return math.exp(-2 * mu * a)
    r = math.sqrt(T)
    return float(ndtr(-(a + mu * T) / r) + math.exp(-2 * mu * a) * ndtr(-(a - mu * T) / r))


@dataclass(frozen=True)
class MCConfig:
    horizon_mult: float = HORIZON_MULT
    grid_n: int = GRID_N
    n_samples: int = 10_000
    method: str = "mean-shift-IS"
    seed: int = 0
    threads: int = 1
    refine: int = REFINE
    window_mult: float = WINDOW_MULT
    shifts: int = SHIFTS


@dataclass
class ComparisonRow:
    u: float
    p_hat: float
    stderr: float
    asym: float
    log_rate: float
    target: float
    ratio: float
    flags: tuple = field(default=())


COLUMNS = ("u", "p_hat", "stderr", "asym", "log_rate", "target", "ratio", "flags")


def compare_asymptotics(model: ModelSpec, u_list, asym=None, mc_config: MCConfig | None = None,
                        cp: CriticalPoint | None = None) -> list[ComparisonRow]:
    """Simulated ``P(u)`` next to the asymptotic formula and the log-rate target ``g(t0)/2``.

    ``asym`` may be ``None`` (e.g. for H = 1/2), in which case the
    ``asym`` and ``ratio`` columns are NaN. Every ``u`` reuses the same
    random streams, so the columns move together.
    """
    u_list = [float(x) for x in u_list]
    if not u_list:
        raise MonteCarloError("u_list is empty")
    if any(b <= a for a, b in zip(u_list, u_list[1:])):
        raise MonteCarloError("u_list must be strictly increasing")
    cfg = mc_config or MCConfig()
    cp = cp if cp is not None else find_t0(model)
    target = cp.g_value / 2
    rows = []
    for u in u_list:
        est = estimate_p(model, u, cfg.horizon_mult, cfg.grid_n, cfg.n_samples, cfg.method,
                         cfg.seed, cfg.threads, cfg.refine, cfg.window_mult, cp=cp,
                         shifts=cfg.shifts)
        a = float(asym.evaluate(u)) if asym is not None else math.nan
        lr = -math.log(est.p) / u ** (2 * (1 - model.H)) if est.p > 0 and u > 0 else math.nan
        ratio = est.p / a if a > 0 else math.nan
        rows.append(ComparisonRow(u, est.p, est.stderr, a, lr, target, ratio, est.flags))
    return rows


def rows_to_csv(rows, columns=COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        rec = r if isinstance(r, dict) else asdict(r)
        writer.writerow([_fmt(rec.get(c)) for c in columns])
    return buf.getvalue()


def _fmt(x):
    if isinstance(x, (tuple, list)):
        return ";".join(map(str, x))
    if isinstance(x, float):
        return repr(x)
    return "" if x is None else str(x)
