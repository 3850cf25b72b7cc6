"""Sequential Bayesian Hilbert occupancy map.

A fixed grid of hinge points defines squared-exponential kernel
features; occupancy is a Bayesian logistic regression over those
features with an independent (diagonal) Gaussian weight posterior.
Each sensing batch is absorbed with a variational EM step in which the
previous posterior acts as the prior, so precision only accumulates.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import kernels
from .errors import NumericalError


@dataclass(frozen=True)
class HingeGrid:
    """Fixed kernel anchors: hinge coordinates (M, 3) and length-scale gamma."""

    hinges: np.ndarray
    gamma: float

    def __post_init__(self):
        hinges = np.ascontiguousarray(self.hinges, dtype=np.float64)
        if hinges.ndim != 2 or hinges.shape[1] != 3 or hinges.shape[0] < 1:
            raise ValueError("hinges must be a non-empty (M, 3) array")
        if not np.isfinite(hinges).all():
            raise ValueError("hinges contain non-finite coordinates")
        if not (self.gamma > 0):
            raise ValueError("gamma must be positive")
        object.__setattr__(self, "hinges", hinges)

    @property
    def size(self):
        return self.hinges.shape[0]

    @classmethod
    def regular(cls, bounds, shape=(17, 17, 10), gamma=5.0):
        """Regular lattice of prod(shape) hinges spanning the bounds box."""
        lo, hi = np.asarray(bounds, dtype=np.float64)
        axes = [np.linspace(lo[k], hi[k], shape[k]) for k in range(3)]
        mesh = np.meshgrid(*axes, indexing="ij")
        hinges = np.stack([m.reshape(-1) for m in mesh], axis=1)
        return cls(hinges=hinges, gamma=gamma)

    def features(self, points):
        """Feature rows Psi for an (n, 3) array of query points."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return kernels.rbf_features(points, self.hinges, self.gamma)


def feature_vector(x, grid):
    """Kernel feature vector of a single 3D point: entries exp(-gamma d^2)."""
    return grid.features(np.asarray(x, dtype=np.float64).reshape(1, 3))[0]


@dataclass(frozen=True)
class WeightPosterior:
    """Diagonal Gaussian over feature weights: mean mu and variance sigma, both (M,)."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.ascontiguousarray(self.mu, dtype=np.float64)
        sigma = np.ascontiguousarray(self.sigma, dtype=np.float64)
        if mu.ndim != 1 or mu.shape != sigma.shape:
            raise ValueError("mu and sigma must be 1-D arrays of equal length")
        if not (np.isfinite(mu).all() and np.isfinite(sigma).all()):
            raise NumericalError("posterior contains non-finite values")
        if not (sigma > 0).all():
            raise ValueError("all posterior variances must be positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def size(self):
        return self.mu.shape[0]


@dataclass(frozen=True)
class OccupancyEstimate:
    probability: float
    latent_mean: float
    latent_variance: float


def init_posterior(m, prior_variance):
    """Uninformed start: zero mean, prior_variance on every weight."""
    if m < 1:
        raise ValueError("need at least one weight")
    if not (prior_variance > 0):
        raise ValueError("prior_variance must be positive")
    return WeightPosterior(
        mu=np.zeros(m), sigma=np.full(m, float(prior_variance))
    )


def update_arrays(posterior, points, labels, grid, *, em_tol=1e-3, em_max_iter=3):
    """Absorb labeled points into the posterior (sequential Bayes step)."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if points.shape[0] == 0:
        raise ValueError("update requires a non-empty batch")
    if points.shape[0] != labels.shape[0]:
        raise ValueError("points and labels disagree in length")
    if posterior.size != grid.size:
        raise ValueError(
            f"posterior has {posterior.size} weights but grid has {grid.size} hinges"
        )
    phi = grid.features(points)
    mu, sigma, _ = kernels.em_fit(
        phi, labels, posterior.mu, posterior.sigma, em_tol, em_max_iter
    )
    if not (np.isfinite(mu).all() and np.isfinite(sigma).all()):
        raise NumericalError("EM update produced non-finite posterior values")
    # Precision only accumulates; the clamp removes last-ulp rounding noise.
    sigma = np.minimum(sigma, posterior.sigma)
    return WeightPosterior(mu=mu, sigma=sigma)


def update(posterior, reading, grid, *, em_tol=1e-3, em_max_iter=3):
    """Absorb one sensor reading into the posterior."""
    if reading.n == 0:
        raise ValueError("cannot update from an empty reading")
    return update_arrays(
        posterior,
        reading.points,
        reading.occupied,
        grid,
        em_tol=em_tol,
        em_max_iter=em_max_iter,
    )


def query_arrays(posterior, grid, points, features=None):
    """Batch occupancy query.

    Returns (probability, latent_mean, latent_variance) arrays. The
    predictive probability moderates the latent mean by the latent
    variance, sigma(m / sqrt(1 + pi s^2 / 8)), so unexplored regions
    stay near 1/2 instead of saturating.
    """
    if features is None:
        features = grid.features(points)
    # einsum keeps the per-row reduction order independent of batch
    # size, so batched queries match single-point queries exactly.
    mean = np.einsum("ij,j->i", features, posterior.mu)
    var = np.einsum("ij,ij,j->i", features, features, posterior.sigma)
    var = np.maximum(var, 0.0)
    prob = expit(mean / np.sqrt(1.0 + (np.pi / 8.0) * var))
    return prob, mean, var


def query(posterior, grid, x):
    """Occupancy estimate at a single 3D point."""
    prob, mean, var = query_arrays(
        posterior, grid, np.asarray(x, dtype=np.float64).reshape(1, 3)
    )
    return OccupancyEstimate(
        probability=float(prob[0]),
        latent_mean=float(mean[0]),
        latent_variance=float(var[0]),
    )


def query_grid(posterior, grid, eval_points):
    """Element-wise query over a list of points, order preserving."""
    eval_points = np.atleast_2d(np.asarray(eval_points, dtype=np.float64))
    prob, mean, var = query_arrays(posterior, grid, eval_points)
    return [
        OccupancyEstimate(float(p), float(m), float(v))
        for p, m, v in zip(prob, mean, var)
    ]


POSTERIOR_FORMAT = "subscan-posterior/1"


def save_posterior(path, grid, posterior):
    """Snapshot hinges, gamma, mu, sigma to JSON for replay and plotting."""
    payload = {
        "format": POSTERIOR_FORMAT,
        "gamma": grid.gamma,
        "hinges": grid.hinges.tolist(),
        "mu": posterior.mu.tolist(),
        "sigma": posterior.sigma.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_posterior(path):
    with open(path) as fh:
        payload = json.load(fh)
    grid = HingeGrid(
        hinges=np.asarray(payload["hinges"], dtype=np.float64),
        gamma=float(payload["gamma"]),
    )
    posterior = WeightPosterior(
        mu=np.asarray(payload["mu"], dtype=np.float64),
        sigma=np.asarray(payload["sigma"], dtype=np.float64),
    )
    if posterior.size != grid.size:
        raise NumericalError("posterior snapshot is inconsistent with its hinge grid")
    return grid, posterior
