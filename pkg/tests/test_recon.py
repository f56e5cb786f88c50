import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ossimm.encode import EncodingOp, KSpaceData, SamplingPattern, synthetic_sensitivities
from ossimm.encode import variable_density_masks
from ossimm.manifold import DictionaryGrid, build_dictionary, uniform_grid
from ossimm.physics import SequenceParams
from ossimm.recon import (
    LowRankConfig,
    OssimmConfig,
    SweepError,
    auto_alpha,
    auto_beta,
    conjugate_gradient,
    data_shared_init,
    numerical_rank,
    pogm_restart,
    reconstruct_cgsense,
    reconstruct_lowrank,
    reconstruct_ossimm,
    svt,
)

from oracles import dense_operator, svt_full

SEQ = SequenceParams()
SHAPE = (12, 12)


@pytest.fixture(scope="module")
def d3():
    grid = DictionaryGrid([0.0926], uniform_grid(12.0, 38.0, 0.5), uniform_grid(-1.1, 1.1, 0.22))
    return build_dictionary(SEQ, grid, 3637, 199.98)


@pytest.fixture(scope="module")
def problem(d3):
    """Manifold-consistent truth, 4-coil 4x undersampling, light noise."""
    rng = np.random.default_rng(11)
    n = SHAPE[0] * SHAPE[1]
    rows = rng.integers(0, len(d3), n)
    m0 = rng.uniform(0.5, 1.0, n) * np.exp(1j * rng.uniform(-np.pi, np.pi, n))
    truth = m0[:, None] * d3.atoms[rows] * d3.norms[rows, None]
    sens = synthetic_sensitivities(SHAPE, 4)
    pat = SamplingPattern.cartesian(variable_density_masks(SHAPE, 10, accel=4.0, seed=2))
    op = EncodingOp(sens, pat)
    clean = op.forward(truth)
    sigma = 1e-3
    noise = sigma / np.sqrt(2) * (rng.standard_normal(clean.shape)
                                  + 1j * rng.standard_normal(clean.shape))
    return truth, KSpaceData(clean + noise, pat, sigma), sens, op


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestCG:
    def test_solves_spd(self):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
        a = m.conj().T @ m + np.eye(6)
        b = rng.standard_normal(6) + 0j
        x, res = conjugate_gradient(lambda v: a @ v, b, np.zeros(6), 6)
        np.testing.assert_allclose(a @ x, b, atol=1e-9)
        assert res[0] == pytest.approx(np.linalg.norm(b))

    def test_zero_rhs_stops(self):
        x, res = conjugate_gradient(lambda v: v, np.zeros(3), np.zeros(3), 5)
        assert res.size == 1 and np.all(x == 0)


class TestSVT:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), m=st.integers(2, 12), n=st.integers(2, 12),
           tau=st.floats(0.0, 3.0))
    def test_matches_full_svd(self, seed, m, n, tau):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
        got, s = svt(x, tau)
        np.testing.assert_allclose(got, svt_full(x, tau), atol=1e-10)
        assert np.all(s >= 0)

    def test_rank(self):
        x = np.outer(np.arange(1, 5), np.ones(3)) + 0j
        assert numerical_rank(x) == 1
        assert numerical_rank(np.zeros((3, 3))) == 0


def test_auto_beta_arithmetic():
    beta = auto_beta(2.0, 15.0)
    assert beta == pytest.approx(4.0 / 28.0)
    assert (4.0 + 2 * beta) / (2 * beta) == pytest.approx(15.0)
    with pytest.raises(ValueError):
        auto_beta(1.0, 1.0)
    with pytest.raises(ValueError):
        auto_beta(0.0, 15.0)


def test_auto_beta_dense_condition_number():
    sens = synthetic_sensitivities((6, 6), 2)
    pat = SamplingPattern.cartesian(variable_density_masks((6, 6), 2, accel=2.0, seed=0))
    op = EncodingOp(sens, pat)
    a = dense_operator(op.forward, op.image_shape)
    s = np.linalg.svd(a, compute_uv=False)
    beta = auto_beta(op.spectral_norm(), 15.0)
    # rank-deficient A: smallest eigenvalue of A'A + 2 beta I is 2 beta
    eig = np.linalg.eigvalsh(a.conj().T @ a + 2 * beta * np.eye(a.shape[1]))
    assert eig[-1] / eig[0] == pytest.approx(15.0, rel=1e-3)
    assert eig[-1] == pytest.approx(s[0] ** 2 + 2 * beta, rel=1e-3)


class TestOssimm:
    def test_recovers_and_decreases(self, problem, d3):
        truth, y, sens, op = problem
        res = reconstruct_ossimm(y, sens, d3, OssimmConfig(n_outer=6, n_cg=2))
        assert np.all(np.diff(res.cost_trace) <= 1e-12 * res.cost_trace[0])
        cg = reconstruct_cgsense(y, sens)
        assert _rel(res.x_hat, truth) < 0.7 * _rel(cg.x_hat, truth)
        longer = reconstruct_ossimm(y, sens, d3, OssimmConfig(n_outer=12, n_cg=2))
        assert _rel(longer.x_hat, truth) < _rel(res.x_hat, truth)
        assert "sigma_a" in res.info and res.info["beta"] > 0

    def test_global_phase_invariance(self, problem, d3):
        truth, y, sens, _ = problem
        c = np.exp(0.7j)
        cfg = OssimmConfig(beta=0.03, n_outer=3)
        a = reconstruct_ossimm(y, sens, d3, cfg)
        b = reconstruct_ossimm(KSpaceData(c * y.samples, y.pattern), sens, d3, cfg)
        np.testing.assert_allclose(b.x_hat, c * a.x_hat, atol=1e-9)
        np.testing.assert_array_equal(a.maps.atom_index, b.maps.atom_index)

    def test_frame_count_mismatch(self, problem):
        _, y, sens, _ = problem
        grid = DictionaryGrid([0.0926], [20.0], [0.0])
        d = build_dictionary(SequenceParams(n_c=8, n_warmup_tr=672), grid, 101, 50.0)
        with pytest.raises(ValueError):
            reconstruct_ossimm(y, sens, d)


class TestLowRank:
    def test_alpha_zero_reaches_least_squares(self):
        rng = np.random.default_rng(8)
        sens = synthetic_sensitivities((6, 6), 2)
        pat = SamplingPattern.cartesian(variable_density_masks((6, 6), 3, accel=2.0, seed=4))
        op = EncodingOp(sens, pat)
        y = KSpaceData(rng.standard_normal((2, pat.total)) + 0j, pat)
        a = dense_operator(op.forward, op.image_shape)
        xs = np.linalg.lstsq(a, y.samples.ravel(), rcond=None)[0]
        f_star = 0.5 * np.linalg.norm(a @ xs - y.samples.ravel()) ** 2
        f0 = 0.5 * np.linalg.norm(y.samples) ** 2
        n = 300
        lr = reconstruct_lowrank(y, sens, LowRankConfig(alpha=0.0, n_pogm=n))
        f_lr = 0.5 * np.linalg.norm(op.forward(lr.x_hat) - y.samples) ** 2
        lip = op.spectral_norm() ** 2
        assert f_lr - f_star <= 2 * lip * np.linalg.norm(xs) ** 2 / (n + 1) ** 2
        cg = reconstruct_cgsense(y, sens, lam=0.0, n_iters=100)
        f_cg = 0.5 * np.linalg.norm(op.forward(cg.x_hat) - y.samples) ** 2
        assert f_cg - f_star <= 1e-9 * (f0 - f_star)

    def test_monotone_trace(self, problem):
        _, y, sens, _ = problem
        res = reconstruct_lowrank(y, sens, LowRankConfig(alpha=0.05, n_pogm=30))
        assert np.all(np.diff(res.cost_trace) <= 1e-12 * res.cost_trace[0])

    def test_huge_alpha_gives_zero(self, problem):
        _, y, sens, _ = problem
        res = reconstruct_lowrank(y, sens, LowRankConfig(alpha=1e6, n_pogm=3))
        assert np.all(res.x_hat == 0) and res.info["rank"] == 0

    def test_auto_alpha_rank(self, problem):
        _, y, sens, _ = problem
        res = reconstruct_lowrank(y, sens, LowRankConfig(rank_target=4))
        assert 3 <= res.info["rank"] <= 5

    def test_sweep_error_on_zero_data(self, problem):
        _, y, sens, _ = problem
        z = KSpaceData(np.zeros_like(y.samples), y.pattern)
        with pytest.raises(SweepError) as err:
            auto_alpha(z, sens, LowRankConfig())
        assert err.value.trace

    def test_pogm_identity_data_term(self):
        # with f = 1/2 ||x - b||^2 the minimizer of f + alpha ||x||_* is svt(b, alpha)
        b = np.random.default_rng(0).standard_normal((5, 4)) + 0j
        x, trace, _ = pogm_restart(np.zeros_like(b),
                                   lambda v: (0.5 * np.linalg.norm(v - b) ** 2, v - b),
                                   0.3, 1.0, 60)
        xs = svt_full(b, 0.3)
        f_star = 0.5 * np.linalg.norm(xs - b) ** 2 + 0.3 * np.linalg.svd(xs, compute_uv=False).sum()
        # accelerated worst-case rate from x0 = 0 with L = 1
        assert trace[-1] - f_star <= 2 * np.linalg.norm(xs) ** 2 / 61**2
        assert trace[-1] >= f_star - 1e-12
        assert np.all(np.diff(trace) <= 1e-12)


class TestCgSense:
    def test_residual_decreases(self, problem):
        _, y, sens, _ = problem
        res = reconstruct_cgsense(y, sens, n_iters=19)
        r = res.info["residual_norms"]
        assert r[-1] < 1e-2 * r[0]
        assert res.info["lambda"] > 0

    def test_lambda_to_infinity(self, problem):
        _, y, sens, _ = problem
        res = reconstruct_cgsense(y, sens, lam=1e12, n_iters=5)
        assert np.linalg.norm(res.x_hat) < 1e-9

    def test_invalid(self, problem):
        _, y, sens, _ = problem
        with pytest.raises(ValueError):
            reconstruct_cgsense(y, sens, lam=-1.0)
        with pytest.raises(ValueError):
            reconstruct_cgsense(y, sens, n_iters=0)


class TestDataShared:
    def test_identical_sets_match_adjoint(self, problem):
        _, y, sens, op = problem
        np.testing.assert_allclose(data_shared_init([y, y, y], sens), op.adjoint(y.samples),
                                   atol=1e-12)

    def test_pooling_densifies(self, d3):
        rng = np.random.default_rng(5)
        sens = synthetic_sensitivities(SHAPE, 2)
        x = rng.standard_normal((144, 10)) + 0j
        window = []
        for s in range(4):
            pat = SamplingPattern.cartesian(
                variable_density_masks(SHAPE, 10, accel=4.0, seed=1, set_index=s))
            window.append(KSpaceData(EncodingOp(sens, pat).forward(x), pat))
        pooled = data_shared_init(window, sens)
        single = EncodingOp(sens, window[0].pattern).adjoint(window[0].samples)
        assert _rel(pooled, x) < _rel(single, x)

    def test_nonuniform_duplicates_averaged(self):
        sens = synthetic_sensitivities((4, 4), 1)
        coords = [np.array([[0.5, 0.0], [1.0, 1.0]])] * 2
        pat = SamplingPattern.nonuniform(coords, (4, 4))
        y = KSpaceData(np.ones((1, 4)), pat)
        np.testing.assert_allclose(data_shared_init([y, y], sens),
                                   EncodingOp(sens, pat).adjoint(y.samples), atol=1e-12)

    def test_empty_window(self, problem):
        with pytest.raises(ValueError):
            data_shared_init([], problem[2])
