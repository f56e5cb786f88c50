"""Series-level stages shared by the CLI and the end-to-end tests.

Each function is a pure function of its inputs and seeds.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import analysis, encode, phantom
from .encode import SamplingPattern, SensitivityMaps
from .manifold import Dictionary
from .quantify import quantify_image
from .recon import (
    LowRankConfig,
    OssimmConfig,
    auto_alpha,
    auto_beta,
    data_shared_init,
    reconstruct_cgsense,
    reconstruct_lowrank,
    reconstruct_ossimm,
)

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# sampling and acquisition
# --------------------------------------------------------------------------


def signed_coords(mask: np.ndarray) -> np.ndarray:
    """(kx, ky) in cycles/FOV of the true entries of an unshifted mask."""
    ny, nx = mask.shape
    ky, kx = np.nonzero(mask)
    kx = np.where(kx >= (nx + 1) // 2, kx - nx, kx)
    ky = np.where(ky >= (ny + 1) // 2, ky - ny, ky)
    return np.stack([kx, ky], axis=1).astype(np.float64)


def make_patterns(shape, n_c: int, n_sets: int, accel: float = 12.0, seed: int = 0,
                  kind: str = "cartesian", jitter: float = 0.5, **density) -> list:
    """One sampling pattern per slow-time set.

    ``nonuniform`` patterns take the Cartesian draw and jitter every sample
    uniformly by up to ``jitter`` cycles/FOV along each axis.
    """
    out = []
    for s in range(n_sets):
        masks = encode.variable_density_masks(shape, n_c, accel, seed=seed, set_index=s,
                                              **density)
        if kind == "cartesian":
            out.append(SamplingPattern.cartesian(masks))
            continue
        if kind != "nonuniform":
            raise ValueError(f"unknown sampling kind {kind!r}")
        coords = []
        for t in range(n_c):
            c = signed_coords(masks[t])
            rng = np.random.default_rng([seed, s, t, 1])
            coords.append(c + rng.uniform(-jitter, jitter, size=c.shape))
        out.append(SamplingPattern.nonuniform(coords, shape))
    return out


def acquire_series(images, sens: SensitivityMaps, patterns, sigma: float, seed: int,
                   backend: str | None = None) -> list:
    """k-space data for every set; set ``s`` uses noise stream (seed, 1, s)."""
    return [phantom.acquire(images[s], sens, patterns[s], sigma, seed, s, backend)
            for s in range(len(patterns))]


# --------------------------------------------------------------------------
# reconstruction
# --------------------------------------------------------------------------


def initial_image(data: list, sens: SensitivityMaps, s: int, init: str, window: int = 10):
    if init == "zero":
        return None
    if init == "adjoint":
        return encode.adjoint(data[s].samples, sens, data[s].pattern)
    if init == "datashared":
        w0 = (s // window) * window
        return data_shared_init(data[w0:w0 + window], sens)
    raise ValueError(f"unknown init {init!r}")


@dataclass
class SeriesRecon:
    method: str
    x: np.ndarray                      # [T, N, n_c]
    costs: list
    params: dict = field(default_factory=dict)
    maps: list | None = None           # per-set QuantMaps (OSSIMM only)


def reconstruct_series(data: list, sens: SensitivityMaps, method: str, d: Dictionary | None = None,
                       ossimm: OssimmConfig | None = None, lowrank: LowRankConfig | None = None,
                       lam: float | None = None, n_cg_sense: int = 19, init: str = "datashared",
                       window: int = 10, sigma_a: float | None = None,
                       sets=None) -> SeriesRecon:
    """Reconstruct every set independently.

    Automatic parameters (beta, alpha, lambda) are chosen once from set 0
    and reused for all sets, so every set solves the same problem.
    """
    n_sets = len(data)
    sets = range(n_sets) if sets is None else sets
    if sigma_a is None:
        sigma_a = encode.EncodingOp(sens, data[0].pattern).spectral_norm()
    params = {"sigma_a": sigma_a, "init": init}
    ossimm = ossimm or OssimmConfig()
    lowrank = lowrank or LowRankConfig()
    if method == "ossimm":
        if d is None:
            raise ValueError("OSSIMM needs a dictionary")
        beta = ossimm.beta if ossimm.beta is not None else auto_beta(sigma_a, ossimm.kappa_target)
        cfg = OssimmConfig(beta, ossimm.n_outer, ossimm.n_cg, ossimm.kappa_target)
        params["beta"] = beta
        log.info("ossimm: beta = %.6g, sigma(A) = %.6g", beta, sigma_a)
    elif method == "lr":
        alpha = lowrank.alpha
        if alpha is None:
            x0 = initial_image(data, sens, 0, init, window)
            alpha = auto_alpha(data[0], sens, lowrank, x0, sigma_a=sigma_a)
        cfg = LowRankConfig(alpha, lowrank.n_pogm, lowrank.rank_target)
        params["alpha"] = alpha
        log.info("lr: alpha = %.6g, sigma(A) = %.6g", alpha, sigma_a)
    elif method == "cgsense":
        lam = 1e-3 * sigma_a**2 if lam is None else lam
        params["lambda"] = lam
        log.info("cgsense: lambda = %.6g, sigma(A) = %.6g", lam, sigma_a)
    else:
        raise ValueError(f"unknown method {method!r}")

    n_vox = sens.shape[0] * sens.shape[1]
    x = np.zeros((len(sets), n_vox, data[0].pattern.n_frames), dtype=np.complex128)
    costs, maps = [], []
    for i, s in enumerate(sets):
        x0 = initial_image(data, sens, s, init, window)
        if method == "ossimm":
            res = reconstruct_ossimm(data[s], sens, d, cfg, x0, sigma_a)
            maps.append(res.maps)
        elif method == "lr":
            res = reconstruct_lowrank(data[s], sens, cfg, x0, sigma_a)
        else:
            res = reconstruct_cgsense(data[s], sens, lam, n_cg_sense, x0, sigma_a)
        if not np.all(np.isfinite(res.x_hat)):
            raise FloatingPointError(f"{method} produced non-finite values in set {s}")
        x[i] = res.x_hat
        costs.append(np.asarray(res.cost_trace))
    return SeriesRecon(method, x, costs, params, maps if method == "ossimm" else None)


# --------------------------------------------------------------------------
# quantification
# --------------------------------------------------------------------------

MAP_FIELDS = ("m0", "r2star_hz", "t2p_s", "t2_s", "f0_hz", "residual", "atom_index")


def stack_maps(maps: list) -> dict:
    return {f: np.stack([getattr(m, f) for m in maps]) for f in MAP_FIELDS}


def quantify_series(x, d: Dictionary, stride: int = 1):
    """VARPRO maps of every ``stride``-th set. Returns (frame indices, stacked maps)."""
    frames = np.arange(0, x.shape[0], stride)
    maps = [quantify_image(x[t], d) for t in frames]
    return frames, stack_maps(maps)


def maps_from_recon(rec: SeriesRecon, stride: int = 1):
    frames = np.arange(0, rec.x.shape[0], stride)
    return frames, stack_maps([rec.maps[t] for t in frames])


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------


def n_discard(task: phantom.TaskSpec, n_frames: int, cfg: analysis.AnalysisConfig) -> int:
    """Frames dropped before activation analysis: the rest period and first block."""
    if not cfg.discard_first_block:
        return 0
    n = int(round((task.rest_s + task.block_s) / task.frame_period_s))
    return max(0, min(n, n_frames - (cfg.n_dct + 3)))


def evaluate(truth: phantom.PhantomSeries, x, frames, maps: dict | None,
             task: phantom.TaskSpec, cfg: analysis.AnalysisConfig = analysis.AnalysisConfig()):
    """Metrics of one method against phantom truth.

    ``x`` is [T, N, n_c]; ``maps`` holds [len(frames), N] arrays or None.
    """
    t_n = x.shape[0]
    support = truth.support
    comb = analysis.combine_fast_time(x)                      # [T, N]
    comb_true = analysis.combine_fast_time(truth.images[:t_n])
    ref = truth.reference[:t_n]
    nd = n_discard(task, t_n, cfg)
    out = {"nrmse": analysis.nrmse(comb, comb_true), "n_discard": nd}
    arrays = {"combined_mean": comb.mean(axis=0)}

    series, ref_d = analysis.preprocess(comb.T, ref, nd, cfg.n_dct)
    act = analysis.activation_map(series, ref_d, cfg.corr_threshold, mask=support)
    out["n_activated"] = int(act.active.sum())
    out["n_activated_roi"] = int(act.active[truth.roi].sum())
    out["dice"] = analysis.dice(act.active, truth.roi)
    arrays["corr"] = act.r
    arrays["active"] = act.active

    tsnr = analysis.tsnr_map(comb[nd:].T, ref[nd:], cfg.n_dct)
    arrays["tsnr"] = tsnr
    vals = tsnr[support]
    vals = vals[np.isfinite(vals)]
    out["mean_tsnr"] = float(vals.mean()) if vals.size else math.inf

    if maps is not None:
        true_r2 = truth.r2star_hz[:t_n][frames]
        sig = comb_true.mean(axis=0)
        base = analysis.r2s_masks(true_r2, sig[None, :].repeat(len(frames), 0), cfg, False)
        extra = analysis.r2s_masks(true_r2, sig[None, :].repeat(len(frames), 0), cfg, True)
        base &= support
        extra &= support
        est = maps["r2star_hz"]
        out["rmse_hz"] = analysis.r2s_rmse(est, true_r2, base)
        out["rmse_masked_hz"] = analysis.r2s_rmse(est, true_r2, extra)
        mean_est, mean_true = est.mean(axis=0), true_r2.mean(axis=0)
        out["rmse_mean_map_hz"] = analysis.r2s_rmse(mean_est, mean_true, extra.all(axis=0))
        arrays["r2star_mean"] = mean_est
        if len(frames) == t_n:
            nd_q = n_discard(task, len(frames), cfg)
            mag_act, r2_act = analysis.dynamic_quant_activation(
                maps["m0"], est, ref, cfg.te_eff_s, cfg.corr_threshold, truth.roi, support,
                nd_q, cfg.n_dct)
            out["dq_mag_r_roi"] = float(mag_act.r[truth.roi].mean())
            out["dq_r2s_r_roi"] = float(r2_act.r[truth.roi].mean())
            out["dq_mag_n_roi"] = mag_act.count
            out["dq_r2s_n_roi"] = r2_act.count
            arrays["dq_mag_active"] = mag_act.active
            arrays["dq_r2s_active"] = r2_act.active
    return out, arrays
