"""Backend selection for the numeric hot paths.

The compiled extension (subscan._core) is preferred when importable;
the NumPy kernels are the fallback. The SUBSCAN_BACKEND environment
variable ("compiled", "python", or "auto") forces a choice at import
time, and use_backend() switches at runtime. Results of both backends
agree to floating-point reduction order, not bit-for-bit; campaign
manifests record which backend produced a run.
"""

import os

from . import _kernels_py
from .errors import ConfigError

try:
    from . import _core
except ImportError:
    _core = None

_BACKENDS = {"python": _kernels_py}
if _core is not None:
    _BACKENDS["compiled"] = _core

_active = None


def available_backends():
    return sorted(_BACKENDS)


def active_backend():
    return _active.BACKEND_NAME


def use_backend(name):
    """Select the kernel backend: 'compiled', 'python', or 'auto'."""
    global _active
    if name in (None, "auto"):
        _active = _BACKENDS.get("compiled", _kernels_py)
        return
    if name not in _BACKENDS:
        raise ConfigError(
            f"kernel backend {name!r} not available; have {available_backends()}"
        )
    _active = _BACKENDS[name]


use_backend(os.environ.get("SUBSCAN_BACKEND", "auto"))


def rbf_features(points, centers, gamma):
    return _active.rbf_features(points, centers, gamma)


def em_fit(phi, y, mu0, sigma0, tol, max_iter):
    return _active.em_fit(phi, y, mu0, sigma0, tol, max_iter)


# The lambda weight is cheap; always served by the NumPy implementation.
sigmoid_lambda = _kernels_py.sigmoid_lambda
