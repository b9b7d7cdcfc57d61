"""Quadratic program ``min x' Sigma^-1 x  s.t.  x >= b`` by certified subset enumeration.

The minimiser is characterised by a unique non-empty index set ``I`` with

    w_I = Sigma_II^-1 b_I > 0,    Sigma_{I^c I} Sigma_II^-1 b_I >= b_{I^c},

so scanning subsets in increasing size and returning the first one that
passes both checks yields the exact solution. Index sets are 0-based tuples
throughout the library.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterator

import numpy as np
from scipy.linalg import cho_factor, cho_solve

CERT_TOL = 1e-9
MAX_DIM = 15


class QPError(ValueError):
    pass


@dataclass(frozen=True)
class QpSolution:
    b_tilde: np.ndarray
    I: tuple[int, ...]
    w: np.ndarray
    value: float
    boundary: bool = False

    @property
    def complement(self) -> tuple[int, ...]:
        return tuple(j for j in range(self.b_tilde.shape[0]) if j not in self.I)


def _check_inputs(Sigma, b):
    Sigma = np.asarray(Sigma, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    d = b.shape[0]
    if Sigma.shape != (d, d):
        raise QPError(f"Sigma shape {Sigma.shape} does not match b of length {d}")
    if d > MAX_DIM:
        raise QPError(f"subset enumeration is capped at d <= {MAX_DIM}, got d = {d}")
    if not np.any(b > 0):
        raise QPError("all b_i <= 0: the minimum is 0 at x = 0 (degenerate problem)")
    return Sigma, b


def _subsets(d: int) -> Iterator[tuple[int, ...]]:
    for k in range(1, d + 1):
        yield from combinations(range(d), k)


def _candidate(Sigma, b, I, tol):
    """Return (passes, boundary, w_I, b_tilde) for one index set."""
    idx = np.asarray(I)
    S_II = Sigma[np.ix_(idx, idx)]
    try:
        fac = cho_factor(S_II, lower=True)
    except np.linalg.LinAlgError:
        return False, False, None, None
    w_I = cho_solve(fac, b[idx])
    if np.any(w_I < -tol):
        return False, False, None, None
    b_tilde = Sigma[:, idx] @ w_I
    b_tilde[idx] = b[idx]
    comp = np.setdiff1d(np.arange(b.shape[0]), idx)
    slack = b_tilde[comp] - b[comp]
    if np.any(slack < -tol):
        return False, False, None, None
    boundary = bool(np.any(w_I <= tol) or np.any(np.abs(slack) <= tol))
    return True, boundary, w_I, b_tilde


def solve_qp(Sigma, b, cert_tol: float = CERT_TOL) -> QpSolution:
    """Solve the orthant-constrained quadratic program exactly.

    Raises :class:`QPError` when every ``b_i <= 0`` or when no subset passes
    certification (numerical breakdown).
    """
    Sigma, b = _check_inputs(Sigma, b)
    d = b.shape[0]
    for I in _subsets(d):
        ok, boundary, w_I, b_tilde = _candidate(Sigma, b, I, cert_tol)
        if not ok:
            continue
        w = np.zeros(d)
        w[list(I)] = w_I
        value = float(b[list(I)] @ w_I)
        return QpSolution(b_tilde=b_tilde, I=I, w=w, value=value, boundary=boundary)
    raise QPError("no index set passed certification (numerical failure)")


def certified_subsets(Sigma, b, cert_tol: float = CERT_TOL) -> list[tuple[int, ...]]:
    """All index sets passing certification; length 1 except on ties."""
    Sigma, b = _check_inputs(Sigma, b)
    return [I for I in _subsets(b.shape[0]) if _candidate(Sigma, b, I, cert_tol)[0]]


def qp_oracle(Sigma, b, n_starts: int = 8, max_iter: int = 20000, tol: float = 1e-14,
              seed: int = 0) -> float:
    """Projected-gradient minimum of ``x' Sigma^-1 x`` over ``x >= b``.

    Brute-force reference used only for verification; independent of the
    subset enumeration above.
    """
    Sigma = np.asarray(Sigma, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    P = np.linalg.inv(Sigma)
    P = 0.5 * (P + P.T)
    step = 1.0 / (2.0 * np.linalg.eigvalsh(P)[-1])
    rng = np.random.default_rng(seed)
    scale = max(1.0, float(np.max(np.abs(b))))
    best = np.inf
    for k in range(n_starts):
        x = np.maximum(b, 0.0) if k == 0 else b + scale * rng.exponential(size=b.shape)
        y, t = x.copy(), 1.0
        f_old = np.inf
        for _ in range(max_iter):
            # accelerated projected gradient (FISTA)
            x_new = np.maximum(y - step * 2.0 * (P @ y), b)
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            x, t = x_new, t_new
            f = float(x @ P @ x)
            if abs(f_old - f) <= tol * max(1.0, f):
                break
            f_old = f
        best = min(best, float(x @ P @ x))
    return best
