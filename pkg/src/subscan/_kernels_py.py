"""NumPy implementations of the numeric hot paths.

`subscan._core` (Cython) provides compiled equivalents of these two
kernels; `subscan.kernels` picks the backend at import time. Both
backends implement the exact same recurrences, so results agree to
floating-point reduction order.
"""

import numpy as np

BACKEND_NAME = "python"

# Chunk size for the pairwise feature matrix. Keeps the (chunk, M, 3)
# difference temporary at ~18 MB for M = 2890.
_CHUNK = 256


def sigmoid_lambda(xi):
    """Variational curvature weight: (sigmoid(xi) - 1/2) / (2 xi).

    Evaluated as tanh(xi/2) / (4 xi), which is the same function in a
    cancellation-free form; the xi -> 0 limit is 1/8. Even in xi.
    """
    xi = np.asarray(xi, dtype=np.float64)
    out = np.full(xi.shape, 0.125)
    big = np.abs(xi) > 1e-6
    xb = xi[big]
    out[big] = np.tanh(0.5 * xb) / (4.0 * xb)
    return out


def rbf_features(points, centers, gamma):
    """Squared-exponential feature matrix exp(-gamma * ||p - c||^2).

    points: (n, 3), centers: (M, 3) -> (n, M) with entries in (0, 1].
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    n = points.shape[0]
    m = centers.shape[0]
    out = np.empty((n, m), dtype=np.float64)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        diff = points[start:stop, None, :] - centers[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        block = out[start:stop]
        np.exp(-gamma * d2, out=block)
        # flush the subnormal tail so backends agree bitwise and later
        # arithmetic never hits denormal stalls
        block[gamma * d2 > 700.0] = 0.0
    return out


def em_fit(phi, y, mu0, sigma0, tol, max_iter):
    """One sequential Bayes step for diagonal-Gaussian logistic weights.

    Starting from the prior (mu0, sigma0) and a batch of feature rows
    phi with binary targets y, iterates the variational EM recurrence:

      E: prec_j  = 1/sigma0_j + 2 sum_i lambda(xi_i) phi_ij^2
         mu_j    = sigma_j * (mu0_j / sigma0_j + sum_i (y_i - 1/2) phi_ij)
      M: xi_i^2  = sum_j phi_ij^2 sigma_j + (sum_j phi_ij mu_j)^2

    until max |delta xi| < tol or max_iter passes. xi starts at zero
    (the tightest bound, lambda = 1/8), which keeps the first step
    regularized even under a diffuse prior; warm-starting xi from a
    high-variance incoming posterior makes lambda vanish and the mean
    update degenerate. Returns (mu, sigma, iterations_used).
    """
    phi = np.ascontiguousarray(phi, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    mu0 = np.ascontiguousarray(mu0, dtype=np.float64)
    sigma0 = np.ascontiguousarray(sigma0, dtype=np.float64)

    phi2 = phi * phi
    # Linear term of the mean update; constant across EM iterations.
    b = mu0 / sigma0 + phi.T @ (y - 0.5)
    xi = np.zeros(phi.shape[0])

    mu = mu0
    sigma = sigma0
    iters = 0
    for iters in range(1, max_iter + 1):
        lam = sigmoid_lambda(xi)
        prec = 1.0 / sigma0 + 2.0 * (phi2.T @ lam)
        sigma = 1.0 / prec
        mu = sigma * b
        xi_new = np.sqrt(phi2 @ sigma + (phi @ mu) ** 2)
        delta = float(np.max(np.abs(xi_new - xi)))
        xi = xi_new
        if delta < tol:
            break
    return mu, sigma, iters
