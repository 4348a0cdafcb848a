"""Parity between the compiled kernels and the numpy fallback."""

import numpy as np
import pytest

from herdnet.autodiff import kernels
from herdnet.autodiff.kernels import available_backends, kernels_numpy

cython_available = "cython" in available_backends()
needs_cython = pytest.mark.skipif(not cython_available, reason="compiled kernels not built")


def _speedups():
    from herdnet.autodiff import _speedups
    return _speedups


@needs_cython
class TestBackendParity:
    @pytest.mark.parametrize("b,c,o,wp,stride", [
        (1, 1, 1, 3, 1), (2, 3, 4, 12, 1), (3, 5, 2, 11, 2), (4, 8, 8, 52, 1),
    ])
    def test_forward_close(self, rng, b, c, o, wp, stride):
        xp = np.ascontiguousarray(rng.uniform(-1, 1, (b, c, wp)))
        w = np.ascontiguousarray(rng.uniform(-1, 1, (o, c, 3)))
        y_np = kernels_numpy.conv1x3_fwd(xp, w, stride)
        y_cy = np.asarray(_speedups().conv1x3_fwd(xp, w, stride))
        assert y_np.shape == y_cy.shape
        assert np.max(np.abs(y_np - y_cy)) < 1e-12

    @pytest.mark.parametrize("stride", [1, 2])
    def test_backward_close(self, rng, stride):
        b, c, o, wp = 3, 4, 5, 13
        wout = (wp - 3) // stride + 1
        xp = np.ascontiguousarray(rng.uniform(-1, 1, (b, c, wp)))
        w = np.ascontiguousarray(rng.uniform(-1, 1, (o, c, 3)))
        gy = np.ascontiguousarray(rng.uniform(-1, 1, (b, o, wout)))
        gx_np = kernels_numpy.conv1x3_bwd_input(gy, w, stride, wp)
        gx_cy = np.asarray(_speedups().conv1x3_bwd_input(gy, w, stride, wp))
        gw_np = kernels_numpy.conv1x3_bwd_weight(gy, xp, stride)
        gw_cy = np.asarray(_speedups().conv1x3_bwd_weight(gy, xp, stride))
        assert np.max(np.abs(gx_np - gx_cy)) < 1e-12
        assert np.max(np.abs(gw_np - gw_cy)) < 1e-12


class TestBackendSelection:
    def test_set_backend_switches_and_restores(self):
        original = kernels.BACKEND
        try:
            kernels.set_backend("numpy")
            assert kernels.BACKEND == "numpy"
            assert kernels.conv1x3_fwd is kernels_numpy.conv1x3_fwd
            if cython_available:
                kernels.set_backend("cython")
                assert kernels.BACKEND == "cython"
        finally:
            kernels.set_backend(original)

    def test_unknown_backend_rejected(self):
        with pytest.raises(ValueError, match="unknown kernel backend"):
            kernels.set_backend("fortran")

    @needs_cython
    def test_model_forward_matches_across_backends(self, rng):
        from herdnet.model import build_model
        from conftest import tiny_model_cfg

        model = build_model(tiny_model_cfg(), seed=5)
        model.eval()
        x = rng.uniform(-1, 1, (4, 3, 1, 12))
        original = kernels.BACKEND
        try:
            kernels.set_backend("cython")
            out_cy = model.forward({0: x}, update_stats=False)[0].data
            kernels.set_backend("numpy")
            out_np = model.forward({0: x}, update_stats=False)[0].data
        finally:
            kernels.set_backend(original)
        assert np.max(np.abs(out_cy - out_np)) < 1e-10
