import numpy as np
import pytest

from subscan import _kernels_py, kernels
from subscan.errors import ConfigError

HAVE_COMPILED = "compiled" in kernels.available_backends()

needs_compiled = pytest.mark.skipif(
    not HAVE_COMPILED, reason="compiled extension not built"
)


def random_problem(rng, n=80, m=40):
    pts = rng.normal(size=(n, 3))
    centers = rng.normal(size=(m, 3))
    phi = _kernels_py.rbf_features(pts, centers, 3.0)
    y = rng.integers(0, 2, size=n).astype(float)
    mu0 = rng.normal(size=m) * 0.1
    sigma0 = rng.uniform(0.5, 50.0, size=m)
    return pts, centers, phi, y, mu0, sigma0


class TestBackendDispatch:
    def test_active_backend_is_listed(self):
        assert kernels.active_backend() in kernels.available_backends()

    def test_switch_to_python_and_back(self):
        before = kernels.active_backend()
        try:
            kernels.use_backend("python")
            assert kernels.active_backend() == "python"
            kernels.use_backend("auto")
            if HAVE_COMPILED:
                assert kernels.active_backend() == "compiled"
        finally:
            kernels.use_backend(before)

    def test_unknown_backend_rejected(self):
        with pytest.raises(ConfigError):
            kernels.use_backend("fortran")


@needs_compiled
class TestBackendAgreement:
    def test_rbf_features_agree(self):
        from subscan import _core

        rng = np.random.default_rng(0)
        pts, centers, *_ = random_problem(rng, n=600, m=97)
        a = _kernels_py.rbf_features(pts, centers, 5.0)
        b = _core.rbf_features(pts, centers, 5.0)
        # denormal-range exp() may differ in the last ulp between libm
        # and NumPy's vectorized implementation
        np.testing.assert_allclose(a, b, rtol=5e-11, atol=1e-300)

    def test_em_fit_agrees(self):
        from subscan import _core

        rng = np.random.default_rng(1)
        for _ in range(10):
            _, _, phi, y, mu0, sigma0 = random_problem(rng)
            mu_a, sig_a, it_a = _kernels_py.em_fit(phi, y, mu0, sigma0, 1e-3, 3)
            mu_b, sig_b, it_b = _core.em_fit(phi, y, mu0, sigma0, 1e-3, 3)
            assert it_a == it_b
            np.testing.assert_allclose(mu_a, mu_b, rtol=1e-9, atol=1e-12)
            np.testing.assert_allclose(sig_a, sig_b, rtol=1e-9, atol=1e-12)

    def test_em_iteration_count_honors_cap(self):
        from subscan import _core

        rng = np.random.default_rng(2)
        _, _, phi, y, mu0, sigma0 = random_problem(rng)
        for cap in (1, 2, 5):
            _, _, iters = _core.em_fit(phi, y, mu0, sigma0, 1e-12, cap)
            assert iters == cap

    def test_em_converges_before_cap_on_tight_tolerance(self):
        from subscan import _core

        # single point at a single center: xi settles quickly
        phi = np.array([[1.0]])
        y = np.array([1.0])
        _, _, iters = _core.em_fit(phi, y, np.zeros(1), np.ones(1), 1e-1, 50)
        assert iters < 50
