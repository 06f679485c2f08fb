"""Estimator-style front end for the transport-map sampler.

Wraps lattice construction, map initialization, and reverse-KL training in a
scikit-learn-shaped object: `fit` trains the map (no data is involved; the
target is the Boltzmann distribution of the configured couplings),
`transform`/`inverse_transform` move between base variables and field
configurations, `sample` draws fields, and `score_samples` evaluates the
model log-density.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .lattice import LatticeGeometry, PhiFourParams
from .training import TrainConfig, train
from .transport import (make_triangular_map, map_forward, map_inverse, map_n_params,
                        model_logdensity)

__all__ = ["TriangularMapSampler"]


class TriangularMapSampler(BaseEstimator):
    """Triangular transport-map sampler for the 2D phi^4 Boltzmann distribution.

    Parameters mirror the experiment configuration: lattice size and
    couplings select the target, ordering/neighborhood_order/mode fix the
    map's sparsity structure, and the training block controls reverse-KL
    optimization. `fit` ignores X and y: the estimator is generative and
    trains against the analytic action, not against samples.

    Attributes (after fit)
    ----------------------
    map_ : the trained TriangularMap
    record_ : per-epoch TrainRecord (loss, learning rate, ESS trace)
    geom_ : lattice geometry; n_params_ : trainable parameter count
    """

    def __init__(self, L=8, D=2, m0_sq=-4.0, lambda0=8.0, ordering="checkerboard",
                 neighborhood_order=2, mode="sparse", hidden=(64, 64, 64), quad_q=15,
                 epochs=3000, batch_size=256, lr=1e-3, lr_min=1e-6, weight_decay=1e-5,
                 clip_norm=10.0, ess_every=50, ess_batch=1024, random_state=0):
        self.L = L
        self.D = D
        self.m0_sq = m0_sq
        self.lambda0 = lambda0
        self.ordering = ordering
        self.neighborhood_order = neighborhood_order
        self.mode = mode
        self.hidden = hidden
        self.quad_q = quad_q
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.lr_min = lr_min
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.ess_every = ess_every
        self.ess_batch = ess_batch
        self.random_state = random_state

    def _validate_batch(self, X, name):
        X = check_array(X, dtype=np.float64, ensure_2d=True)
        if X.shape[1] != self.geom_.N:
            raise ValueError(f"{name} has {X.shape[1]} columns, lattice has "
                             f"{self.geom_.N} sites")
        return X

    def fit(self, X=None, y=None):
        """Train the map by reverse-KL minimization; X and y are ignored."""
        self.geom_ = LatticeGeometry(L=self.L, D=self.D)
        self.params_ = PhiFourParams(m0_sq=self.m0_sq, lambda0=self.lambda0)
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=self.random_state, spawn_key=(1,)))
        self.map_ = make_triangular_map(
            self.geom_, ordering_name=self.ordering,
            neighborhood_order=self.neighborhood_order, mode=self.mode,
            hidden=self.hidden, quad_q=self.quad_q, rng=rng)
        self.n_params_ = map_n_params(self.map_)
        self.record_ = train(
            self.map_, self.params_,
            TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                        lr_min=self.lr_min, weight_decay=self.weight_decay,
                        clip_norm=self.clip_norm, seed=self.random_state,
                        ess_every=self.ess_every, ess_batch=self.ess_batch))
        return self

    def transform(self, Z):
        """Push base variables (label order) to field configurations (site order)."""
        check_is_fitted(self, "map_")
        Z = self._validate_batch(Z, "Z")
        return map_forward(self.map_, Z).phi

    def inverse_transform(self, X):
        """Recover base variables from field configurations."""
        check_is_fitted(self, "map_")
        X = self._validate_batch(X, "X")
        return map_inverse(self.map_, X)

    def sample(self, n_samples=1, random_state=None):
        """Draw field configurations from the fitted map."""
        check_is_fitted(self, "map_")
        if n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        seed = self.random_state if random_state is None else random_state
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((n_samples, self.geom_.N))
        return map_forward(self.map_, z).phi

    def score_samples(self, X):
        """Model log-density log p(phi) of each row, by inverting the map."""
        check_is_fitted(self, "map_")
        X = self._validate_batch(X, "X")
        z = map_inverse(self.map_, X)
        logdet = map_forward(self.map_, z).logdet
        return model_logdensity(self.map_, z, logdet)

    def score(self, X, y=None):
        """Mean model log-density over the rows of X."""
        return float(np.mean(self.score_samples(X)))
