"""The rate function ``g(t)``, its minimiser ``t0`` and the index partition at ``t0``.

``g(t) = t^{-2H} min_{v >= nu + mu t} v' Sigma^-1 v``. On each stretch where
the essential set ``I(t)`` is constant, ``g`` coincides with the rational
function ``g_I(t) = (q_mm t^2 + 2 q_nm t + q_nn) / t^{2H}`` whose derivative
has a single positive root, available in closed form.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize_scalar

from .model import ModelSpec
from .qp import CERT_TOL, QpSolution, solve_qp

logger = logging.getLogger(__name__)

T_TOL = 1e-12
CLASS_TOL = 1e-9
CASE_TOL = 1e-7
MAX_FIXED_POINT_ROUNDS = 64
# Offsets used to certify a local minimum; g(t0 +- h) - g(t0) ~ g'' h^2 / 2
# must stay above double rounding, so h cannot shrink to t_tol * t0.
CERT_REL_STEP = 1e-4
T_MIN, T_MAX = 1e-12, 1e12


class CriticalPointError(RuntimeError):
    pass


class UnsupportedCaseError(ValueError):
    """H = 1/2: the Brownian case is covered by a different (prior) result."""


class Case(str, enum.Enum):
    I = "CaseI"
    II = "CaseII"


@dataclass(frozen=True)
class QuadForms:
    mm: float
    nm: float
    nn: float


def quad_forms(model: ModelSpec, I) -> QuadForms:
    idx = np.asarray(I)
    fac = cho_factor(model.Sigma[np.ix_(idx, idx)], lower=True)
    mu_I, nu_I = model.mu[idx], model.nu[idx]
    s_mu = cho_solve(fac, mu_I)
    s_nu = cho_solve(fac, nu_I)
    return QuadForms(mm=float(mu_I @ s_mu), nm=float(nu_I @ s_mu), nn=float(nu_I @ s_nu))


def g_of_t(model: ModelSpec, t: float) -> tuple[float, tuple[int, ...]]:
    """Value of ``g`` at ``t`` and the certified essential set ``I(t)``."""
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    sol = solve_qp(model.Sigma, model.b(t))
    return sol.value / t ** (2 * model.H), sol.I


def g_I_derivatives(model: ModelSpec, I, t: float) -> tuple[float, float, float]:
    """``(g_I, g_I', g_I'')`` at ``t`` from the closed forms."""
    q = quad_forms(model, I)
    H = model.H
    N = q.mm * t * t + 2 * q.nm * t + q.nn
    dN = 2 * q.mm * t + 2 * q.nm
    ddN = 2 * q.mm
    g = N / t ** (2 * H)
    g1 = (2 * q.mm * (1 - H) * t * t + 2 * (1 - 2 * H) * q.nm * t - 2 * H * q.nn) / t ** (2 * H + 1)
    g2 = (
        ddN / t ** (2 * H)
        - 4 * H * dN / t ** (2 * H + 1)
        + 2 * H * (2 * H + 1) * N / t ** (2 * H + 2)
    )
    return g, g1, g2


def g_dd_at_root(model: ModelSpec, I, t0: float) -> float:
    """Curvature of ``g_I`` at a root of ``g_I'`` in its simplified form."""
    q = quad_forms(model, I)
    H = model.H
    return (4 * q.mm * (1 - H) * t0 + 2 * (1 - 2 * H) * q.nm) / t0 ** (2 * H + 1)


def stationary_point(model: ModelSpec, I) -> float:
    """Positive root of ``g_I'``; ``inf`` if ``g_I`` has none."""
    q = quad_forms(model, I)
    H = model.H
    A = 2 * q.mm * (1 - H)
    B = 2 * (1 - 2 * H) * q.nm
    C = -2 * H * q.nn
    if A <= 0:
        return float(-C / B) if B > 0 else np.inf
    disc = B * B - 4 * A * C
    root = np.sqrt(max(disc, 0.0))
    # cancellation-free branch of the quadratic formula
    if B >= 0:
        return float(-2 * C / (B + root)) if B + root > 0 else np.inf
    return float((-B + root) / (2 * A))


@dataclass(frozen=True)
class CriticalPoint:
    t0: float
    I: tuple[int, ...]
    K: tuple[int, ...]
    J: tuple[int, ...]
    b: np.ndarray
    b_tilde: np.ndarray
    w: np.ndarray
    g_value: float
    g_dd: float
    g_dd_plus: float
    g_dd_minus: float
    I_plus: tuple[int, ...]
    I_minus: tuple[int, ...]
    zeta_prime_I: np.ndarray
    case: Case | None
    method: str = "fixed-point"
    flags: tuple[str, ...] = field(default=())

    @property
    def w_I(self) -> np.ndarray:
        return self.w[list(self.I)]

    @property
    def b_I(self) -> np.ndarray:
        return self.b[list(self.I)]

    @property
    def is_switch_point(self) -> bool:
        return self.I_plus != self.I_minus


def _scalar_start(model: ModelSpec) -> float:
    H = model.H
    sel = (model.mu > 0) & (model.nu > 0)
    cands = H * model.nu[sel] / ((1 - H) * model.mu[sel])
    return float(np.median(cands))


def _fixed_point(model: ModelSpec, t: float, t_tol: float):
    I_prev = None
    for _ in range(MAX_FIXED_POINT_ROUNDS):
        I = solve_qp(model.Sigma, model.b(t)).I
        t_new = stationary_point(model, I)
        if not np.isfinite(t_new) or t_new <= 0:
            return None
        converged = I == I_prev and abs(t_new - t) <= t_tol * t
        t, I_prev = t_new, I
        if converged:
            return t
    return None


def _g(model, t):
    return g_of_t(model, t)[0]


def _bracket(model: ModelSpec, t: float):
    lo, hi = t / 2, 2 * t
    g_mid = _g(model, t)
    while _g(model, lo) <= g_mid:
        t, g_mid, lo = lo, _g(model, lo), lo / 2
        if lo < T_MIN:
            raise CriticalPointError("bracket expansion reached the lower limit 1e-12")
    while _g(model, hi) <= g_mid:
        t, g_mid, hi = hi, _g(model, hi), hi * 2
        if hi > T_MAX:
            raise CriticalPointError("bracket expansion reached the upper limit 1e12")
    return lo, t, hi


def _golden(model: ModelSpec, t_start: float) -> float:
    lo, mid, hi = _bracket(model, t_start)
    res = minimize_scalar(
        lambda s: _g(model, np.exp(s)),
        bracket=(np.log(lo), np.log(mid), np.log(hi)),
        method="golden",
        tol=1e-10,
    )
    t_g = float(np.exp(res.x))
    # polish with the closed-form root of each nearby regime
    best_t, best_g = t_g, _g(model, t_g)
    sets = {g_of_t(model, t_g * f)[1] for f in (1 - 1e-6, 1.0, 1 + 1e-6)}
    for I in sets:
        r = stationary_point(model, I)
        if np.isfinite(r) and r > 0:
            g_r = _g(model, r)
            if g_r <= best_g:
                best_t, best_g = r, g_r
    return best_t


def _is_local_min(model: ModelSpec, t: float) -> bool:
    g0 = _g(model, t)
    h = CERT_REL_STEP * t
    slack = 1e-13 * abs(g0)
    return _g(model, t - h) >= g0 - slack and _g(model, t + h) >= g0 - slack


def _scan_min(model: ModelSpec, t: float, n: int = 241):
    grid = t * np.logspace(-3, 3, n)
    vals = np.array([_g(model, s) for s in grid])
    k = int(np.argmin(vals))
    return grid[k], vals[k]


def classify_indices(model: ModelSpec, t0: float, class_tol: float = CLASS_TOL):
    """Split ``{0..d-1}`` into essential ``I``, weakly essential ``K`` and unessential ``J``."""
    sol = solve_qp(model.Sigma, model.b(t0))
    return _classify(sol, model.b(t0), class_tol)


def _classify(sol: QpSolution, b: np.ndarray, class_tol: float):
    K, J = [], []
    for j in sol.complement:
        if abs(sol.b_tilde[j] - b[j]) <= class_tol * (1.0 + abs(b[j])):
            K.append(j)
        else:
            J.append(j)
    return sol.I, tuple(K), tuple(J)


def zeta_prime(model: ModelSpec, t: float) -> np.ndarray:
    H = model.H
    return (model.mu * t**H - H * t ** (H - 1) * model.b(t)) / t ** (2 * H)


def detect_case(model: ModelSpec, cp: CriticalPoint, case_tol: float = CASE_TOL) -> Case:
    """Which of the two asymptotic regimes applies at ``cp``."""
    H = model.H
    if H == 0.5:
        raise UnsupportedCaseError(
            "H = 1/2 is the Brownian case; its exact asymptotics follow from the "
            "Brownian multidimensional ruin result, not from this fBm formula"
        )
    if H < 0.5:
        return Case.I
    idx = list(cp.I)
    nu_I, mu_I = model.nu[idx], model.mu[idx]
    gap = np.abs(H * nu_I - (1 - H) * cp.t0 * mu_I)
    scale = H * np.abs(nu_I) + (1 - H) * cp.t0 * np.abs(mu_I) + 1.0
    return Case.I if np.all(gap <= case_tol * scale) else Case.II


def find_t0(model: ModelSpec, t_tol: float = T_TOL, class_tol: float = CLASS_TOL,
            case_tol: float = CASE_TOL, force_case: Case | str | None = None) -> CriticalPoint:
    """Locate the unique minimiser of ``g`` and assemble the :class:`CriticalPoint`."""
    t_init = _scalar_start(model)
    method = "fixed-point"
    t0 = _fixed_point(model, t_init, t_tol)
    if t0 is None or not _is_local_min(model, t0):
        logger.info("fixed-point iteration did not certify; falling back to golden section")
        method = "golden-section"
        t0 = _golden(model, t_init)
    t_scan, g_scan = _scan_min(model, t0)
    if g_scan < _g(model, t0) * (1 - 1e-10):
        logger.warning("grid scan found a lower value of g; restarting golden section there")
        method = "golden-section"
        t0 = _golden(model, t_scan)
    if not _is_local_min(model, t0):
        raise CriticalPointError(f"t0 = {t0!r} failed local-minimum certification")

    b = model.b(t0)
    sol = solve_qp(model.Sigma, b, CERT_TOL)
    I, K, J = _classify(sol, b, class_tol)
    eps = 1e-7 * t0
    I_plus = g_of_t(model, t0 + eps)[1]
    I_minus = g_of_t(model, t0 - eps)[1]
    g_dd = g_dd_at_root(model, I, t0)
    g_dd_plus = g_I_derivatives(model, I_plus, t0)[2]
    g_dd_minus = g_I_derivatives(model, I_minus, t0)[2]
    flags = []
    if sol.boundary:
        flags.append("qp-boundary")
    if I_plus != I_minus:
        flags.append("switch-point")
    if not np.isclose(g_dd_plus, g_dd_minus, rtol=1e-8):
        flags.append("one-sided-curvatures-differ")
    cp = CriticalPoint(
        t0=t0, I=I, K=K, J=J, b=b, b_tilde=sol.b_tilde, w=sol.w,
        g_value=sol.value / t0 ** (2 * model.H), g_dd=g_dd,
        g_dd_plus=g_dd_plus, g_dd_minus=g_dd_minus,
        I_plus=I_plus, I_minus=I_minus,
        zeta_prime_I=zeta_prime(model, t0)[list(I)],
        case=None, method=method, flags=tuple(flags),
    )
    if force_case is not None:
        case = Case(force_case)
        flags.append("case-forced")
        logger.warning("case forced to %s", case.value)
    elif model.H == 0.5:
        case = None
    else:
        case = detect_case(model, cp, case_tol)
    return replace(cp, case=case, flags=tuple(flags))
