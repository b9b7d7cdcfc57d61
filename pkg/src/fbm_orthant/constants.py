"""Constants of the exact asymptotics and their assembly.

``P(u) ~ C * u**gamma * exp(-rate * u**(2(1-H)))`` where ``rate = g(t0)/2``
and ``C``/``gamma`` depend on which regime :func:`critical.detect_case`
reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import integrate
from scipy.linalg import cho_factor, cho_solve
from scipy.special import erfc, ndtr, ndtri
from scipy.stats import qmc

from .critical import CASE_TOL, Case, CriticalPoint
from .model import ModelSpec

MVN_MAX_DIM = 6
QMC_POINTS = 2**13
QMC_SHIFTS = 8
QUAD_EPSABS = 1e-12
QUAD_EPSREL = 1e-10
ENVELOPE_TAIL = 1e-14


class ConstantsError(RuntimeError):
    pass


class MissingPickandsError(ValueError):
    pass


# ---------------------------------------------------------------------------
# multivariate normal CDF
# ---------------------------------------------------------------------------

def _bvn_cdf(a: float, b: float, rho: float) -> float:
    """P(Z1 < a, Z2 < b) for standard margins and correlation ``rho``."""
    if rho >= 1.0:
        return float(ndtr(min(a, b)))
    if rho <= -1.0:
        return float(max(0.0, ndtr(a) + ndtr(b) - 1.0))
    if abs(rho) < 0.95 and np.isfinite(a) and np.isfinite(b):
        # Plackett: d/dr Phi2(a, b; r) = phi2(a, b; r)
        def dens(r):
            s = 1.0 - r * r
            return math.exp(-(a * a - 2 * r * a * b + b * b) / (2 * s)) / math.sqrt(s)

        val, _ = integrate.quad(dens, 0.0, rho, epsabs=1e-15, epsrel=1e-13, limit=200)
        return float(ndtr(a) * ndtr(b) + val / (2 * math.pi))
    s = math.sqrt(1.0 - rho * rho)

    def cond(x):
        return math.exp(-0.5 * x * x) * ndtr((b - rho * x) / s)

    if not np.isfinite(a):
        return float(ndtr(b)) if a > 0 else 0.0
    val, _ = integrate.quad(cond, -np.inf, a, epsabs=1e-15, epsrel=1e-13, limit=400)
    return float(val / math.sqrt(2 * math.pi))


def _genz(cov: np.ndarray, upper: np.ndarray, n_points: int, n_shifts: int, seed: int):
    """Separation-of-variables integrand averaged over scrambled Sobol sets."""
    sd = np.sqrt(np.diag(cov))
    order = np.argsort(upper / sd)
    cov = cov[np.ix_(order, order)]
    upper = upper[order]
    L = np.linalg.cholesky(cov)
    k = upper.shape[0]
    tiny = 1e-300
    means = np.empty(n_shifts)
    for s in range(n_shifts):
        w = qmc.Sobol(k - 1, scramble=True, seed=np.random.default_rng([seed, s])).random(n_points)
        e = np.full(n_points, ndtr(upper[0] / L[0, 0]))
        f = e.copy()
        y = np.empty((n_points, k - 1))
        for i in range(1, k):
            y[:, i - 1] = ndtri(np.clip(w[:, i - 1] * e, tiny, 1 - 1e-16))
            e = ndtr((upper[i] - y[:, :i] @ L[i, :i]) / L[i, i])
            f *= e
        means[s] = f.mean()
    return float(means.mean()), float(means.std(ddof=1) / math.sqrt(n_shifts))


def mvn_cdf(cov, upper, n_points: int = QMC_POINTS, n_shifts: int = QMC_SHIFTS,
            seed: int = 0) -> tuple[float, float]:
    """``P(Z < upper)`` for ``Z ~ N(0, cov)``; returns ``(probability, error estimate)``.

    Exact up to quadrature error for ``k <= 2``; randomized QMC for ``k >= 3``.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    k = upper.shape[0]
    if cov.shape != (k, k):
        raise ConstantsError(f"cov shape {cov.shape} does not match upper of length {k}")
    if k > MVN_MAX_DIM:
        raise ConstantsError(f"mvn_cdf supports k <= {MVN_MAX_DIM}, got {k}")
    if np.any(upper == -np.inf):
        return 0.0, 0.0
    keep = np.isfinite(upper)
    if not np.all(keep):
        if not np.any(keep):
            return 1.0, 0.0
        return mvn_cdf(cov[np.ix_(keep, keep)], upper[keep], n_points, n_shifts, seed)
    sd = np.sqrt(np.diag(cov))
    if np.any(sd <= 0):
        raise ConstantsError("cov has a non-positive variance")
    if k == 1:
        return float(ndtr(upper[0] / sd[0])), 0.0
    if k == 2:
        rho = float(np.clip(cov[0, 1] / (sd[0] * sd[1]), -1.0, 1.0))
        return _bvn_cdf(upper[0] / sd[0], upper[1] / sd[1], rho), 1e-14
    eig = np.linalg.eigvalsh(0.5 * (cov + cov.T))
    if eig[0] <= 1e-12 * eig[-1]:
        raise ConstantsError("cov is not positive definite")
    return _genz(cov, upper, n_points, n_shifts, seed)


# ---------------------------------------------------------------------------
# C_K
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CkValue:
    value: float
    M: float
    error: float
    branch: str


@dataclass(frozen=True)
class _CkParts:
    norm: float
    g_dd: float
    cov_Y: np.ndarray | None
    slope: np.ndarray | None


def _ck_parts(model: ModelSpec, cp: CriticalPoint) -> _CkParts:
    H, t0 = model.H, cp.t0
    I = np.asarray(cp.I)
    S_II = model.Sigma[np.ix_(I, I)]
    L = np.linalg.cholesky(S_II)
    log_det = 2.0 * np.sum(np.log(np.diag(L)))
    log_norm = -0.5 * (len(I) * math.log(2 * math.pi * t0 ** (2 * H)) + log_det)
    if cp.g_dd <= 0:
        raise ConstantsError(f"curvature g''_I(t0) = {cp.g_dd} is not positive")
    if not cp.K:
        return _CkParts(math.exp(log_norm), cp.g_dd, None, None)
    K = np.asarray(cp.K)
    fac = cho_factor(S_II, lower=True)
    S_KI = model.Sigma[np.ix_(K, I)]
    cov_Y = model.Sigma[np.ix_(K, K)] - S_KI @ cho_solve(fac, S_KI.T)
    cov_Y = 0.5 * (cov_Y + cov_Y.T)
    slope = (model.mu[K] - S_KI @ cho_solve(fac, model.mu[I])) / t0**H
    return _CkParts(math.exp(log_norm), cp.g_dd, cov_Y, slope)


def _envelope_tail(a: float, M: float) -> float:
    return math.sqrt(math.pi / a) * float(erfc(M * math.sqrt(a)))


def c_K(model: ModelSpec, cp: CriticalPoint, M: float = np.inf) -> CkValue:
    """The Gaussian-integral constant; ``M`` truncates the ``y`` integral to ``[-M, M]``."""
    parts = _ck_parts(model, cp)
    a = parts.g_dd / 4.0
    if parts.cov_Y is None:
        if np.isinf(M):
            val = math.sqrt(4 * math.pi / parts.g_dd) * parts.norm
            return CkValue(val, np.inf, 0.0, "K-empty")
        val = parts.norm * math.sqrt(math.pi / a) * float(math.erf(M * math.sqrt(a)))
        return CkValue(val, M, 0.0, "K-empty")

    cov_Y, slope = parts.cov_Y, parts.slope
    k = slope.shape[0]

    def integrand(y):
        return math.exp(-a * y * y) * mvn_cdf(cov_Y, slope * y)[0]

    def integrate_to(m):
        if k <= 2:
            val, err = integrate.quad(integrand, -m, m, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL,
                                      limit=500)
            return val, err
        # randomized integrand: fixed Gauss-Legendre nodes instead of adaptivity
        x, wts = np.polynomial.legendre.leggauss(96)
        vals = np.array([integrand(m * xi) for xi in x])
        return float(m * wts @ vals), 1e-6 * m

    if np.isinf(M):
        m = 8.0 / math.sqrt(a)
        for _ in range(20):
            val, err = integrate_to(m)
            if _envelope_tail(a, m) <= ENVELOPE_TAIL * val:
                break
            m *= 1.5
        else:
            raise ConstantsError("could not find a truncation point for the C_K integral")
        return CkValue(parts.norm * val, m, parts.norm * err, "K-nonempty")
    val, err = integrate_to(M)
    return CkValue(parts.norm * val, M, parts.norm * err, "K-nonempty")


# ---------------------------------------------------------------------------
# regime-specific pieces
# ---------------------------------------------------------------------------

def negative_part_sum(model: ModelSpec, cp: CriticalPoint) -> float:
    idx = list(cp.I)
    w, mu, b = cp.w[idx], model.mu[idx], cp.b[idx]
    terms = w * mu - (model.H / cp.t0) * w * b
    return float(np.sum(np.maximum(0.0, -terms)))


def case_ii_prefactor(model: ModelSpec, cp: CriticalPoint, tol: float = CASE_TOL) -> float:
    """``t0^{2H(|I|-1)} / prod(w_I) * sum_i (w_i mu_i - H/t0 w_i b_i)_-``."""
    idx = list(cp.I)
    w, mu, b = cp.w[idx], model.mu[idx], cp.b[idx]
    s = negative_part_sum(model, cp)
    scale = float(np.sum(np.abs(w * mu)) + np.sum(np.abs(model.H / cp.t0 * w * b)))
    if s <= tol * scale:
        raise ConstantsError(
            "sum of negative parts vanishes: the instance sits on the regime boundary "
            "(likely misclassified as the second case)"
        )
    log_pref = 2 * model.H * (len(idx) - 1) * math.log(cp.t0) - float(np.sum(np.log(w)))
    return math.exp(log_pref) * s


def case_ii_pickands_T(model: ModelSpec, cp: CriticalPoint, T: float) -> float:
    """Closed-form short-interval constant of the second regime at horizon ``T``."""
    idx = list(cp.I)
    t2h = cp.t0 ** (2 * model.H)
    base = t2h ** len(idx) / float(np.prod(cp.w[idx]))
    return base * (1.0 + T / t2h * negative_part_sum(model, cp))


def exponent(case: Case, n_essential: int, H: float) -> float:
    if Case(case) is Case.I:
        return -n_essential * (1 - H) + 1 / H + H - 2
    return -n_essential * (1 - H) + 1 - H


@dataclass(frozen=True)
class AsymptoticResult:
    C: float
    gamma: float
    rate: float
    H: float
    case: Case
    components: dict[str, Any] = field(default_factory=dict)

    def evaluate(self, u):
        """Asymptotic approximation of ``P(u)``."""
        u = np.asarray(u, dtype=float)
        return self.C * u**self.gamma * np.exp(-self.rate * u ** (2 * (1 - self.H)))

    def log_evaluate(self, u):
        u = np.asarray(u, dtype=float)
        return math.log(self.C) + self.gamma * np.log(u) - self.rate * u ** (2 * (1 - self.H))

    def to_dict(self) -> dict[str, Any]:
        return {
            "C": self.C,
            "gamma": self.gamma,
            "rate": self.rate,
            "case": self.case.value,
            "components": self.components,
        }


def assemble_asymptotics(model: ModelSpec, cp: CriticalPoint, pickands=None,
                         ck: CkValue | None = None) -> AsymptoticResult:
    """Combine the critical point, ``C_K`` and (first regime) the Pickands constant.

    ``pickands`` may be a :class:`~fbm_orthant.pickands.PickandsEstimate` or a
    plain float; it is required in the first regime and ignored otherwise.
    """
    if cp.case is None:
        raise ConstantsError("critical point has no regime tag (H = 1/2?)")
    ck = ck if ck is not None else c_K(model, cp)
    n_I = len(cp.I)
    gamma = exponent(cp.case, n_I, model.H)
    components: dict[str, Any] = {
        "C_K": ck.value,
        "C_K_error": ck.error,
        "C_K_truncation": ck.M,
        "C_K_branch": ck.branch,
    }
    if cp.case is Case.I:
        if pickands is None:
            raise MissingPickandsError("the first regime needs a Pickands constant estimate")
        h_val = float(getattr(pickands, "value", pickands))
        h_se = getattr(pickands, "stderr", None)
        components["pickands"] = h_val
        if h_se is not None:
            components["pickands_stderr"] = float(h_se)
            components["pickands_ci95"] = [h_val - 1.96 * h_se, h_val + 1.96 * h_se]
        C = h_val * ck.value
    else:
        pref = case_ii_prefactor(model, cp)
        components["negative_part_sum"] = negative_part_sum(model, cp)
        components["prefactor"] = pref
        components["t0_power_over_prod_w"] = pref / negative_part_sum(model, cp)
        C = pref * ck.value
    return AsymptoticResult(C=C, gamma=gamma, rate=cp.g_value / 2.0, H=model.H,
                            case=cp.case, components=components)
