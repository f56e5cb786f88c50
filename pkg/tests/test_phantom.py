import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ossimm import analysis
from ossimm.encode import SamplingPattern, synthetic_sensitivities, variable_density_masks
from ossimm.manifold import VoxelParams, cauchy_grid, voxel_signal
from ossimm.phantom import (
    LATTICE_CAUCHY_K,
    LATTICE_F_MAX_HZ,
    HrfSpec,
    PhantomSeries,
    PhantomSpec,
    Region,
    TaskSpec,
    acquire,
    add_noise,
    complex_noise,
    f0_shift,
    f0_timecourse,
    generate_series,
    hrf_kernel,
    noise_sigma_for_tsnr,
    reference_waveform,
    shape_mask,
    t2p_timecourse,
)
from ossimm.physics import SequenceParams

SEQ = SequenceParams()


class TestHrf:
    def test_peak_and_undershoot(self):
        dt = 0.01
        h = hrf_kernel(HrfSpec(), dt)
        assert h[0] == 0.0
        assert np.argmax(h) * dt == pytest.approx(6.0, abs=dt)
        assert h.max() == pytest.approx(1.0)
        assert h.min() < 0
        assert np.argmin(h) * dt > 10.0

    def test_invalid_dt(self):
        with pytest.raises(ValueError):
            hrf_kernel(HrfSpec(), 0.0)


class TestTask:
    def test_frames_and_boxcar(self):
        task = TaskSpec()
        assert task.duration_s == 70.0
        assert task.n_frames == 467
        box = task.boxcar()
        t = task.times()
        assert np.all(box[t < 10.0] == 0)
        assert box[np.searchsorted(t, 10.0)] == 1
        assert np.all(box[(t > 20.05) & (t < 29.95)] == 0)
        assert box.sum() == pytest.approx(3 * 10.0 / 0.15, abs=3)

    def test_reference(self):
        task = TaskSpec()
        ref = reference_waveform(task)
        assert ref.max() == pytest.approx(1.0)
        assert np.all(ref[task.times() < 10.0] == 0)
        # delayed response: still low 1 s after onset
        assert ref[np.searchsorted(task.times(), 11.0)] < 0.2

    def test_invalid(self):
        with pytest.raises(ValueError):
            TaskSpec(block_s=0.0)


class TestShapes:
    def test_disk_ring_rect(self):
        disk = shape_mask({"type": "disk", "center": [2, 2], "radius": 1.0}, 5, 5)
        assert disk.sum() == 5
        ring = shape_mask({"type": "ring", "center": [2, 2], "inner": 0.5, "outer": 1.0}, 5, 5)
        assert ring.sum() == 4
        rect = shape_mask({"type": "rect", "rows": [1, 3], "cols": [0, 2]}, 5, 5)
        assert rect.sum() == 4 and rect[1, 0] and not rect[3, 0]

    def test_intersection(self):
        a = {"type": "rect", "rows": [0, 3], "cols": [0, 5]}
        b = {"type": "rect", "rows": [2, 5], "cols": [0, 5]}
        assert shape_mask({"type": "and", "shapes": [a, b]}, 5, 5).sum() == 5

    def test_unknown(self):
        with pytest.raises(ValueError):
            shape_mask({"type": "star"}, 4, 4)


class TestSpec:
    def test_defaults(self):
        spec = PhantomSpec()
        assert spec.roi.sum() == 36
        assert np.all(spec.support[spec.roi])
        lab = spec.labels()
        assert set(np.unique(lab)) == {-1, 0, 1, 2, 3, 4}
        assert np.all(lab[spec.roi] == 1)

    def test_roi_outside_support(self):
        with pytest.raises(ValueError):
            PhantomSpec(activation_roi={"type": "rect", "rows": [0, 2], "cols": [0, 2]})

    def test_nonfinite_tsnr(self):
        with pytest.raises(ValueError):
            PhantomSpec(tsnr_db=float("inf"))

    def test_round_trip(self):
        spec = PhantomSpec(regions=(Region({"type": "disk", "center": [5, 5], "radius": 4},
                                           25.0, 0.44, 0.5 - 0.5j),),
                           ny=10, nx=10, activation_roi={"type": "rect", "rows": [4, 6],
                                                         "cols": [4, 6]})
        back = PhantomSpec.from_dict(spec.to_dict())
        assert back == spec


class TestDynamics:
    def test_t2p_course(self):
        spec = PhantomSpec()
        tc = t2p_timecourse(spec, 0.07)
        assert tc.min() == pytest.approx(0.07 + 0.0154 * reference_waveform(spec.task).min())
        assert tc.max() == pytest.approx(0.07 + 0.0154)

    def test_f0_drift_and_respiration(self):
        t = np.array([0.0, 60.0])
        assert f0_shift(t, 0.0, 1.0) == pytest.approx([0.0, 1.0])
        assert f0_shift(1.05, 0.0, 0.0, 0.5, 4.2) == pytest.approx(0.5)
        course = f0_timecourse(PhantomSpec(drift_hz_per_min=0.0))
        assert np.max(np.abs(course)) == pytest.approx(0.5, abs=1e-3)


@pytest.fixture(scope="module")
def series():
    return generate_series(PhantomSpec(), SEQ, n_frames=3)


class TestSeries:
    def test_shapes(self, series):
        assert series.images.shape == (3, 1600, 10)
        assert series.t2p_s.shape == (3, 1600)
        assert np.all(series.images[:, ~series.support] == 0)

    def test_voxel_matches_direct_sum(self, series):
        spec = PhantomSpec()
        for v in (np.flatnonzero(spec.roi)[0], np.flatnonzero(spec.labels() == 4)[0]):
            t = 2
            t2p = series.t2p_s[t, v]
            ref = voxel_signal(SEQ, VoxelParams(series.t1_s[v], series.t2_s[v], t2p,
                                                series.f0_hz[t, v], series.m0[v]),
                               cauchy_grid(t2p, LATTICE_CAUCHY_K, LATTICE_F_MAX_HZ))
            np.testing.assert_allclose(series.images[t, v], ref, rtol=1e-9, atol=1e-13)

    def test_truth_r2star(self, series):
        spec = PhantomSpec()
        lab = spec.labels()
        r2 = series.r2star_hz[0]
        assert r2[lab == 3] == pytest.approx(24.0)
        assert np.all(r2[~series.support] == 0)

    def test_deterministic(self, series):
        again = generate_series(PhantomSpec(), SEQ, n_frames=3)
        assert np.array_equal(again.images, series.images)

    def test_round_trip(self, series):
        back = PhantomSeries.from_arrays(series.to_arrays())
        assert np.array_equal(back.images, series.images)
        assert back.shape == series.shape

    def test_backends_agree(self, series):
        b = generate_series(PhantomSpec(), SEQ, n_frames=3, backend="numpy")
        np.testing.assert_allclose(b.images, series.images, rtol=0, atol=1e-13)


def test_percent_change_at_plateau():
    # no drift or respiration: the ROI change is then purely the T2' effect
    spec = PhantomSpec(drift_hz_per_min=0.0, resp_amp_hz=0.0)
    s = generate_series(spec, SEQ)
    comb = analysis.combine_fast_time(s.images)
    v = np.flatnonzero(s.roi)[0]
    rest = comb[s.reference == 0, v].mean()
    plateau = comb[s.reference > 0.99, v].mean()
    change = 100 * (plateau - rest) / rest
    assert 1.5 <= change <= 2.5


class TestNoise:
    def test_complex_noise_moments(self):
        n = complex_noise((200_000,), 0.3, np.random.default_rng(0))
        assert np.mean(np.abs(n) ** 2) == pytest.approx(0.09, rel=0.02)
        assert abs(np.mean(n.real * n.imag)) < 1e-3

    def test_tsnr_calibration(self):
        # constant signal, image noise, 2-norm combination, tSNR definition of the analysis
        rng = np.random.default_rng(1)
        base = rng.uniform(0.3, 1.0, (200, 1)) * np.exp(1j * rng.uniform(0, 6, (200, 10)))
        frames = np.repeat(base[None], 400, axis=0)
        support = np.ones(200, dtype=bool)
        sigma = noise_sigma_for_tsnr(frames, support, 38.0)
        noisy = np.stack([add_noise(f, sigma, 3, t) for t, f in enumerate(frames)])
        comb = analysis.combine_fast_time(noisy)
        tsnr = analysis.tsnr_map(comb.T, np.zeros(400))
        assert np.mean(20 * np.log10(tsnr)) == pytest.approx(38.0, abs=0.5)

    def test_coil_noise_independent(self):
        sens = synthetic_sensitivities((20, 20), 2)
        pat = SamplingPattern.cartesian(np.ones((25, 20, 20), dtype=bool))
        y = acquire(np.zeros((400, 25)), sens, pat, 1.0, seed=4, frame=0).samples
        assert y.shape[1] >= 10_000
        c = np.corrcoef(np.vstack([y[0].real, y[1].real]))[0, 1]
        assert abs(c) < 0.05

    def test_streams(self):
        x = np.zeros((4, 3), dtype=complex)
        assert np.array_equal(add_noise(x, 1.0, 0, 5), add_noise(x, 1.0, 0, 5))
        assert not np.array_equal(add_noise(x, 1.0, 0, 5), add_noise(x, 1.0, 0, 6))
        assert np.array_equal(add_noise(x + 1, 0.0, 0, 0), x + 1)

    def test_sigma_rejects_empty_voxels(self):
        with pytest.raises(ValueError):
            noise_sigma_for_tsnr(np.zeros((2, 4, 3)), np.ones(4, dtype=bool), 38.0)

    def test_kspace_noise_level(self):
        sens = synthetic_sensitivities((16, 16), 4)
        pat = SamplingPattern.cartesian(variable_density_masks((16, 16), 10, 4.0, seed=0))
        y = acquire(np.zeros((256, 10)), sens, pat, 0.2, seed=0, frame=1)
        assert np.mean(np.abs(y.samples) ** 2) == pytest.approx(0.04, rel=0.1)
        assert y.noise_sigma == 0.2


@settings(max_examples=20, deadline=None)
@given(t=st.floats(0, 600), drift=st.floats(-5, 5), amp=st.floats(0, 2))
def test_f0_shift_bounds(t, drift, amp):
    f = f0_shift(t, 0.0, drift, amp, 4.2)
    assert abs(f - drift * t / 60) <= amp + 1e-9
