"""Exact fractional Brownian motion on uniform grids via circulant embedding.

The increments of ``B_H`` on a unit grid form fractional Gaussian noise with
autocovariance ``gamma(k) = (|k+1|^2H + |k-1|^2H - 2|k|^2H) / 2``. Embedding
that Toeplitz covariance in a circulant of size ``2m`` (``m`` a power of two,
``m >= n``) diagonalises it by FFT; one complex Gaussian vector then yields
two independent exact samples (real and imaginary parts).
"""

from __future__ import annotations

import csv
import logging
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

EIG_TOL = 1e-8
CHOLESKY_MAX_N = 4096
_MAGIC = b"FBMPATH1"
_HEADER = struct.Struct("<8sddqqq")  # magic, H, dt, n, n_paths, seed


class FbmError(ValueError):
    pass


def fgn_autocov(H: float, k) -> np.ndarray:
    k = np.abs(np.asarray(k, dtype=float))
    return 0.5 * ((k + 1) ** (2 * H) + np.abs(k - 1) ** (2 * H) - 2 * k ** (2 * H))


def fbm_cov(H: float, t, s) -> np.ndarray:
    t, s = np.asarray(t, dtype=float), np.asarray(s, dtype=float)
    return 0.5 * (t ** (2 * H) + s ** (2 * H) - np.abs(t - s) ** (2 * H))


@lru_cache(maxsize=64)
def circulant_eigenvalues(H: float, m: int) -> np.ndarray:
    """Eigenvalues of the ``2m`` circulant embedding of fGn covariance."""
    gam = fgn_autocov(H, np.arange(m + 1))
    row = np.concatenate([gam, gam[-2:0:-1]])
    lam = np.fft.fft(row).real
    lam.setflags(write=False)
    return lam


@lru_cache(maxsize=16)
def _cholesky_factor(H: float, n: int) -> np.ndarray:
    idx = np.arange(n)
    cov = fgn_autocov(H, idx[:, None] - idx[None, :])
    return np.linalg.cholesky(cov)


def _embedding_size(n: int) -> int:
    return 1 << max(0, int(np.ceil(np.log2(max(n, 1)))))


def _embedding_scale(H: float, n: int):
    """sqrt(eigenvalues / 2m), or None when the embedding is not valid."""
    m = _embedding_size(n)
    lam = circulant_eigenvalues(H, m)
    floor = -EIG_TOL * lam.max()
    if lam.min() < floor:
        return None
    if lam.min() < 0:
        logger.warning("clamping %d slightly negative circulant eigenvalues", int((lam < 0).sum()))
        lam = np.maximum(lam, 0.0)
    return np.sqrt(lam / (2 * m))


def fgn(H: float, n: int, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    """``size`` independent unit-step fGn sequences of length ``n``, shape ``(size, n)``."""
    if not 0 < H < 1:
        raise FbmError(f"H must lie in (0, 1), got {H}")
    if n < 1:
        raise FbmError("n must be at least 1")
    if H == 0.5:
        return rng.standard_normal((size, n))
    scale = _embedding_scale(H, n)
    if scale is None:
        if n > CHOLESKY_MAX_N:
            raise FbmError(f"circulant embedding failed and n = {n} is too large for Cholesky")
        L = _cholesky_factor(H, n)
        return rng.standard_normal((size, n)) @ L.T
    pairs = (size + 1) // 2
    M = scale.shape[0]
    z = rng.standard_normal((pairs, M)) + 1j * rng.standard_normal((pairs, M))
    w = np.fft.fft(scale * z, axis=1)[:, :n]
    out = np.empty((2 * pairs, n))
    out[0::2] = w.real
    out[1::2] = w.imag
    return out[:size]


def fbm_paths(H: float, n: int, dt: float, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    """Values ``B_H(k dt)``, ``k = 1..n``, for ``size`` paths; shape ``(size, n)``."""
    if dt <= 0:
        raise FbmError("dt must be positive")
    return np.cumsum(fgn(H, n, rng, size), axis=1) * dt**H


def correlated_fbm_paths(H: float, D, n: int, dt: float, rng: np.random.Generator,
                         size: int = 1) -> np.ndarray:
    """``D @ B_H`` for ``m`` independent fBms; returns shape ``(size, d, n)``."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    m = D.shape[1]
    B = fbm_paths(H, n, dt, rng, size * m).reshape(size, m, n)
    return np.einsum("dm,smn->sdn", D, B)


@dataclass(frozen=True)
class FbmPath:
    H: float
    dt: float
    values: np.ndarray
    seed: int | None = None
    stream: tuple = ()

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(1, self.n + 1)


def sample_fbm(H: float, n: int, dt: float, rng: np.random.Generator, seed=None, stream=()) -> FbmPath:
    values = fbm_paths(H, n, dt, rng, 1)[0]
    values.setflags(write=False)
    return FbmPath(H=H, dt=dt, values=values, seed=seed, stream=tuple(stream))


def sample_correlated_fbm(H: float, D, n: int, dt: float, rng: np.random.Generator) -> np.ndarray:
    """One draw of ``D @ B_H`` on the grid, shape ``(d, n)``."""
    return correlated_fbm_paths(H, D, n, dt, rng, 1)[0]


def save_paths(path, H: float, dt: float, values, seed: int = 0) -> None:
    """Binary dump: fixed header then float64 little-endian, one path per row."""
    values = np.atleast_2d(np.asarray(values, dtype="<f8"))
    n_paths, n = values.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, float(H), float(dt), n, n_paths, int(seed)))
        fh.write(values.tobytes(order="C"))


def load_paths(path):
    """Inverse of :func:`save_paths`; returns ``(H, dt, seed, values)``."""
    raw = Path(path).read_bytes()
    magic, H, dt, n, n_paths, seed = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise FbmError(f"{path}: not an fBm path file")
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n_paths, n)
    return H, dt, seed, values


def save_paths_csv(path, dt: float, values) -> None:
    values = np.atleast_2d(values)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"path{k}" for k in range(values.shape[0])])
        for k in range(values.shape[1]):
            writer.writerow([repr((k + 1) * dt)] + [repr(float(v)) for v in values[:, k]])
