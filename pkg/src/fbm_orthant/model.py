"""Problem instance for the drifted, correlated fBm orthant-entry problem."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

logger = logging.getLogger(__name__)

COND_TOL = 1e-12


class ModelError(ValueError):
    """Invalid problem instance."""


def check_vector(x, name: str, d: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ModelError(f"{name} must be a vector, got shape {arr.shape}")
    if d is not None and arr.shape[0] != d:
        raise ModelError(f"{name} has length {arr.shape[0]}, expected {d}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} contains non-finite entries")
    return arr


def check_square(x, name: str, d: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ModelError(f"{name} must be a square matrix, got shape {arr.shape}")
    if d is not None and arr.shape[0] != d:
        raise ModelError(f"{name} is {arr.shape[0]}x{arr.shape[0]}, expected {d}x{d}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} contains non-finite entries")
    return arr


def check_spd(sigma: np.ndarray, cond_tol: float = COND_TOL) -> np.ndarray:
    """Symmetrize ``sigma`` and verify it is numerically positive definite."""
    sym = 0.5 * (sigma + sigma.T)
    eig = np.linalg.eigvalsh(sym)
    if eig[-1] <= 0 or eig[0] <= cond_tol * eig[-1]:
        raise ModelError(
            f"Sigma is not positive definite (eigenvalues {eig.min():.6g} .. {eig.max():.6g})"
        )
    return sym


def check_hurst(H: float) -> float:
    H = float(H)
    if not 0.0 < H < 1.0:
        raise ModelError(f"H must lie in (0, 1), got {H}")
    return H


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Validated instance ``(H, Sigma or A, mu, nu)``.

    ``Sigma`` is always populated (derived as ``A @ A.T`` when a mixing matrix
    is supplied). Arrays are made read-only after validation.
    """

    H: float
    Sigma: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    A: np.ndarray | None = None
    cond_tol: float = field(default=COND_TOL, repr=False)

    def __post_init__(self):
        H = check_hurst(self.H)
        mu = check_vector(self.mu, "mu")
        d = mu.shape[0]
        nu = check_vector(self.nu, "nu", d)
        A = None
        if self.A is not None:
            A = check_square(self.A, "A", d)
            if abs(np.linalg.det(A)) == 0.0:
                raise ModelError("A is singular")
            sigma = A @ A.T
        else:
            sigma = check_square(self.Sigma, "Sigma", d)
        sigma = check_spd(sigma, self.cond_tol)
        if not np.any((mu > 0) & (nu > 0)):
            raise ModelError("need at least one index i with mu_i > 0 and nu_i > 0")
        for arr in (sigma, mu, nu) + ((A,) if A is not None else ()):
            arr.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "Sigma", sigma)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "A", A)
        if H == 0.5:
            logger.warning("H = 1/2: only the simulation paths support the Brownian case")

    @classmethod
    def from_mixing(cls, H, A, mu, nu) -> "ModelSpec":
        return cls(H=H, Sigma=None, mu=mu, nu=nu, A=A)

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    @property
    def is_brownian(self) -> bool:
        return self.H == 0.5

    def mixing_factor(self) -> np.ndarray:
        """A matrix ``F`` with ``F @ F.T == Sigma`` (``A`` if given, else Cholesky)."""
        if self.A is not None:
            return self.A
        return np.linalg.cholesky(self.Sigma)

    def b(self, t: float) -> np.ndarray:
        return self.nu + self.mu * t

    def scaled(self, c: float) -> "ModelSpec":
        """Same model with ``mu`` and ``nu`` multiplied by ``c``."""
        return ModelSpec(H=self.H, Sigma=self.Sigma, mu=c * self.mu, nu=c * self.nu)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"H": self.H, "mu": self.mu.tolist(), "nu": self.nu.tolist()}
        if self.A is not None:
            out["A"] = self.A.tolist()
        else:
            out["Sigma"] = self.Sigma.tolist()
        return out

    def __eq__(self, other):
        if not isinstance(other, ModelSpec):
            return NotImplemented
        same_a = (self.A is None and other.A is None) or (
            self.A is not None and other.A is not None and np.array_equal(self.A, other.A)
        )
        return (
            self.H == other.H
            and same_a
            and np.array_equal(self.Sigma, other.Sigma)
            and np.array_equal(self.mu, other.mu)
            and np.array_equal(self.nu, other.nu)
        )

    __hash__ = None


def model_from_mapping(doc: Mapping[str, Any]) -> ModelSpec:
    missing = [k for k in ("H", "mu", "nu") if k not in doc]
    if missing:
        raise ModelError(f"config is missing keys: {', '.join(missing)}")
    has_a, has_sigma = "A" in doc, "Sigma" in doc
    if has_a == has_sigma:
        raise ModelError("config must supply exactly one of 'A' or 'Sigma'")
    if has_a:
        return ModelSpec.from_mixing(doc["H"], doc["A"], doc["mu"], doc["nu"])
    return ModelSpec(H=doc["H"], Sigma=doc["Sigma"], mu=doc["mu"], nu=doc["nu"])


def load_model(config_text: str) -> ModelSpec:
    """Parse a JSON config document into a validated :class:`ModelSpec`."""
    try:
        doc = json.loads(config_text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelError("config must be a JSON object")
    return model_from_mapping(doc)


def dump_model(model: ModelSpec) -> str:
    return json.dumps(model.to_dict())
