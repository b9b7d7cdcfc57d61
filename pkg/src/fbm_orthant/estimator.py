"""Estimator-style facade over the functional core.

There is no training data here: ``fit`` computes the analytic objects of
the model given through the constructor, and ``predict`` maps levels ``u``
to the asymptotic probability. The parameter handling (``get_params``,
``set_params``, ``clone``) comes from scikit-learn.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .constants import assemble_asymptotics, c_K
from .critical import CASE_TOL, Case, find_t0
from .model import ModelSpec
from .montecarlo import estimate_p
from .pickands import DEFAULT_GRID, estimate_pickands


class OrthantAsymptotics(BaseEstimator):
    """Asymptotic ``P(u)`` for the drifted, correlated fBm orthant problem.

    Example::

        est = OrthantAsymptotics(H=0.75, Sigma=np.eye(2), mu=[1, 0.5], nu=[1, 2]).fit()
        est.predict([10.0, 20.0])
    """

    def __init__(self, H=0.25, Sigma=None, mu=None, nu=None, A=None, case_tol=CASE_TOL,
                 force_case=None, pickands_samples=10_000, pickands_T_grid=(1, 2, 4, 8, 16, 32),
                 pickands_grid=DEFAULT_GRID, seed=0, threads=1):
        self.H = H
        self.Sigma = Sigma
        self.mu = mu
        self.nu = nu
        self.A = A
        self.case_tol = case_tol
        self.force_case = force_case
        self.pickands_samples = pickands_samples
        self.pickands_T_grid = pickands_T_grid
        self.pickands_grid = pickands_grid
        self.seed = seed
        self.threads = threads

    def _model(self) -> ModelSpec:
        if self.A is not None:
            return ModelSpec.from_mixing(self.H, self.A, self.mu, self.nu)
        return ModelSpec(H=self.H, Sigma=self.Sigma, mu=self.mu, nu=self.nu)

    def fit(self, X=None, y=None):
        """Solve for ``t0``, the index sets and the constants. ``X``/``y`` are ignored."""
        self.model_ = self._model()
        self.critical_point_ = find_t0(self.model_, case_tol=self.case_tol,
                                       force_case=self.force_case)
        self.ck_ = c_K(self.model_, self.critical_point_)
        self.pickands_ = None
        if self.critical_point_.case is Case.I:
            self.pickands_ = estimate_pickands(
                self.model_, self.critical_point_, T_grid=self.pickands_T_grid,
                n_samples=self.pickands_samples, seed=self.seed,
                grid_points=self.pickands_grid, threads=self.threads,
            )
        self.result_ = assemble_asymptotics(self.model_, self.critical_point_, self.pickands_, self.ck_)
        return self

    def predict(self, u):
        """Asymptotic approximation ``C u^gamma exp(-rate u^{2(1-H)})``."""
        return self.result_.evaluate(np.asarray(u, dtype=float))

    def simulate(self, u, **mc_kw):
        """Monte Carlo estimate of ``P(u)`` for the fitted model."""
        mc_kw.setdefault("seed", self.seed)
        mc_kw.setdefault("threads", self.threads)
        return estimate_p(self.model_, u, cp=self.critical_point_, **mc_kw)
