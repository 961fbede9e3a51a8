"""scikit-learn style wrapper around the causal estimator."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .phase_space import DistributionField, PhasePoint, check_on_shell
from .process import SimConfig, estimate_f
from .rng import CounterRNG

__all__ = ["CausalReconstructor"]


class CausalReconstructor(BaseEstimator):
    """Reconstruct f on the future of a hypersurface from its values on it.

    ``fit`` takes the data on the hypersurface (a DistributionField) and
    ``predict`` takes phase points as rows ``(m0..m3, mdot0..mdot3)``. Each
    row uses its own RNG stream, ``stream0 + row``, so predictions do not
    depend on how X is split into calls.
    """

    def __init__(self, chart=None, background=None, kernel=None, hypersurface=None, n_paths=1000,
                 sim=None, seed=0, stream0=0):
        self.chart = chart
        self.background = background
        self.kernel = kernel
        self.hypersurface = hypersurface
        self.n_paths = n_paths
        self.sim = sim
        self.seed = seed
        self.stream0 = stream0

    def fit(self, X, y=None):
        if not isinstance(X, DistributionField):
            raise TypeError("fit expects the initial data as a DistributionField")
        for name in ("chart", "background", "kernel", "hypersurface"):
            if getattr(self, name) is None:
                raise ValueError(f"{name} must be set before fit")
        self.f_initial_ = X
        self.sim_ = self.sim if self.sim is not None else SimConfig(seed=self.seed)
        return self

    def predict(self, X, return_std=False):
        if not hasattr(self, "f_initial_"):
            raise NotFittedError("call fit with the initial data first")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[-1] != 8:
            raise ValueError("rows must be (m0..m3, mdot0..mdot3)")
        check_on_shell(self.chart, X[:, :4], X[:, 4:])
        est = np.empty(X.shape[0])
        se = np.empty(X.shape[0])
        for i, row in enumerate(X):
            rng = CounterRNG(self.seed, self.stream0 + i)
            r = estimate_f(self.chart, PhasePoint(row[:4], row[4:]), self.background, self.kernel,
                           self.hypersurface, self.f_initial_, int(self.n_paths), self.sim_, rng)
            est[i], se[i] = r.estimate, r.stderr
        return (est, se) if return_std else est
