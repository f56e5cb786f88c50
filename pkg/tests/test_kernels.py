import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ossimm import kernels
from ossimm.physics import SequenceParams

from oracles import bloch_stepper

SEQ = SequenceParams()


@pytest.mark.parametrize("backend", ["numba", "numpy"])
def test_bloch_matches_oracle(backend):
    phases = SEQ.phase_schedule
    got = kernels.bloch_phase_cycled([2.5, -11.0], 1.4, 0.0926, SEQ.tr_s, SEQ.te_s, SEQ.flip_rad,
                                     phases, 40, 12, backend)
    for row, f in zip(got, (2.5, -11.0)):
        ref = bloch_stepper(1.4, 0.0926, f, SEQ.tr_s, SEQ.te_s, SEQ.flip_rad, SEQ.n_c, 40, 12)
        np.testing.assert_allclose(row, ref, rtol=0, atol=1e-13)


def test_bloch_empty_frequency_list():
    out = kernels.bloch_phase_cycled([], 1.4, 0.09, 0.015, 0.0027, 0.17, [0.0], 5, 3)
    assert out.shape == (0, 3)


def _direct_nudft(img, kx, ky):
    ny, nx = img.shape
    out = np.zeros(kx.size, dtype=complex)
    for s in range(kx.size):
        for y in range(ny):
            for x in range(nx):
                out[s] += img[y, x] * np.exp(-2j * np.pi * (kx[s] * x / nx + ky[s] * y / ny))
    return out / np.sqrt(ny * nx)


@pytest.mark.parametrize("backend", ["numba", "numpy"])
def test_nudft_matches_direct_sum(backend):
    rng = np.random.default_rng(0)
    img = rng.standard_normal((5, 7)) + 1j * rng.standard_normal((5, 7))
    kx, ky = rng.uniform(-3, 3, 9), rng.uniform(-2, 2, 9)
    np.testing.assert_allclose(kernels.nudft_forward(img, kx, ky, backend),
                               _direct_nudft(img, kx, ky), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), ny=st.integers(1, 8), nx=st.integers(1, 8),
       ns=st.integers(1, 20), backend=st.sampled_from(["numba", "numpy"]))
def test_nudft_adjoint_identity(seed, ny, nx, ns, backend):
    rng = np.random.default_rng(seed)
    img = rng.standard_normal((ny, nx)) + 1j * rng.standard_normal((ny, nx))
    d = rng.standard_normal(ns) + 1j * rng.standard_normal(ns)
    kx, ky = rng.uniform(-nx / 2, nx / 2, ns), rng.uniform(-ny / 2, ny / 2, ns)
    lhs = np.vdot(kernels.nudft_forward(img, kx, ky, backend), d)
    rhs = np.vdot(img, kernels.nudft_adjoint(d, kx, ky, (ny, nx), backend))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))
