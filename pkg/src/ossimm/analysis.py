"""fMRI-style evaluation: fast-time combination, DCT detrending, activation,
tSNR, dynamic quantification, and masked R2* error."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class AnalysisConfig:
    corr_threshold: float = 0.45
    n_dct: int = 4
    te_eff_s: float = 0.0175
    signal_mask_frac: float = 0.10
    r2s_mask_max_hz: float = 50.0
    r2s_range_hz: tuple = (12.0, 38.0)
    discard_first_block: bool = True

    def __post_init__(self):
        if not 0 < self.corr_threshold < 1:
            raise ValueError("corr_threshold must be in (0, 1)")
        if self.n_dct < 1:
            raise ValueError("n_dct must be >= 1")
        object.__setattr__(self, "r2s_range_hz", tuple(float(v) for v in self.r2s_range_hz))


def combine_fast_time(x) -> np.ndarray:
    """2-norm across the last (fast-time) axis."""
    return np.linalg.norm(np.asarray(x), axis=-1)


def dct_basis(n_time: int, n_dct: int) -> np.ndarray:
    """Orthonormal DCT-II columns k = 0..n_dct-1, shape [n_time, n_dct]."""
    t = np.arange(n_time)
    k = np.arange(n_dct)
    b = np.cos(np.pi * k[None, :] * (2 * t[:, None] + 1) / (2 * n_time))
    return b / np.linalg.norm(b, axis=0)


def detrend_dct(tc, n_dct: int = 4, keep_mean: bool = False) -> np.ndarray:
    """Remove the projection onto the first ``n_dct`` DCT bases (time is the last axis).

    ``keep_mean=True`` adds the k = 0 (mean) component back.
    """
    tc = np.asarray(tc, dtype=np.float64)
    n = tc.shape[-1]
    if n <= n_dct:
        raise ValueError(f"series length {n} must exceed n_dct = {n_dct}")
    b = dct_basis(n, n_dct)
    resid = tc - (tc @ b) @ b.T
    if keep_mean:
        resid = resid + tc.mean(axis=-1, keepdims=True)
    return resid


def pearson(series, reference) -> np.ndarray:
    """Pearson r of each row of ``series`` against ``reference``; constant rows give 0."""
    s = np.atleast_2d(np.asarray(series, dtype=np.float64))
    r = np.asarray(reference, dtype=np.float64)
    if s.shape[-1] < 3:
        raise ValueError("need at least 3 time points")
    rc = r - r.mean()
    if not np.any(rc):
        raise ValueError("reference is constant")
    sc = s - s.mean(axis=-1, keepdims=True)
    num = sc @ rc
    den = np.linalg.norm(sc, axis=-1) * np.linalg.norm(rc)
    out = np.zeros(s.shape[0])
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return np.clip(out, -1.0, 1.0)


@dataclass
class Activation:
    r: np.ndarray
    active: np.ndarray
    count: int


def activation_map(series, reference, threshold: float = 0.45, roi=None, sign: int = 1,
                   mask=None) -> Activation:
    """Correlation map; activated where ``sign * r > threshold``.

    ``series`` is [N x T]. ``count`` counts activated voxels inside ``roi``
    (all voxels when omitted). ``mask`` restricts activation to a support.
    """
    r = pearson(series, reference)
    active = sign * r > threshold
    if mask is not None:
        active &= np.asarray(mask, dtype=bool)
    count = int(active.sum() if roi is None else active[np.asarray(roi, dtype=bool)].sum())
    return Activation(r, active, count)


def tsnr_map(series, task_regressor, n_dct: int = 4) -> np.ndarray:
    """mean / std of the residual after removing DCT trends (incl. mean) and the task.

    Voxels with zero residual std get ``inf``.
    """
    s = np.atleast_2d(np.asarray(series, dtype=np.float64))
    n = s.shape[-1]
    if n < 3:
        raise ValueError("need at least 3 time points")
    design = np.column_stack([dct_basis(n, n_dct), np.asarray(task_regressor, dtype=np.float64)])
    coef, *_ = np.linalg.lstsq(design, s.T, rcond=None)
    resid = s - (design @ coef).T
    sd = resid.std(axis=-1)
    mean = s.mean(axis=-1)
    out = np.full(s.shape[0], np.inf)
    # residuals below round-off of the signal count as exactly zero
    ok = sd > 1e-12 * np.maximum(np.abs(mean), np.finfo(float).tiny)
    out[ok] = mean[ok] / sd[ok]
    return out


def dice(a, b) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    tot = a.sum() + b.sum()
    return 1.0 if tot == 0 else 2.0 * float(np.sum(a & b)) / float(tot)


def preprocess(series, reference, n_discard: int, n_dct: int):
    """Drop leading frames and DCT-detrend series ([N x T]) and reference."""
    s = np.asarray(series, dtype=np.float64)[..., n_discard:]
    r = np.asarray(reference, dtype=np.float64)[n_discard:]
    return detrend_dct(s, n_dct), detrend_dct(r, n_dct)


def dynamic_quant_activation(m0, r2star_hz, reference, te_eff_s: float = 0.0175,
                             threshold: float = 0.45, roi=None, mask=None, n_discard: int = 0,
                             n_dct: int = 4):
    """Activation from ``|m0| exp(-R2* TE_eff)`` (positive) and from R2* (negative).

    ``m0`` and ``r2star_hz`` are [T x N]. Returns (magnitude, r2star) activations.
    """
    mag = np.abs(np.asarray(m0)) * np.exp(-np.asarray(r2star_hz) * te_eff_s)
    s1, ref = preprocess(mag.T, reference, n_discard, n_dct)
    s2, _ = preprocess(np.asarray(r2star_hz, dtype=np.float64).T, reference, n_discard, n_dct)
    return (activation_map(s1, ref, threshold, roi, +1, mask),
            activation_map(s2, ref, threshold, roi, -1, mask))


def r2s_masks(truth_r2s, signal, cfg: AnalysisConfig = AnalysisConfig(), additional=True):
    """Signal > frac * max, reference R2* < max_hz, and optionally the range mask."""
    truth_r2s = np.asarray(truth_r2s)
    signal = np.asarray(signal, dtype=np.float64)
    m = (signal > cfg.signal_mask_frac * signal.max()) & (truth_r2s < cfg.r2s_mask_max_hz)
    if additional:
        lo, hi = cfg.r2s_range_hz
        m &= (truth_r2s > lo - 1e-9) & (truth_r2s < hi + 1e-9)
    return m


def r2s_rmse(est, ref, mask=None) -> float:
    est = np.asarray(est, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch {est.shape} vs {ref.shape}")
    m = np.ones(est.shape, dtype=bool) if mask is None else np.broadcast_to(mask, est.shape)
    if not m.any():
        raise ValueError("empty mask")
    d = est[m] - ref[m]
    return float(np.sqrt(np.mean(d * d)))


def nrmse(x, ref) -> float:
    return float(np.linalg.norm(np.asarray(x) - ref) / np.linalg.norm(ref))


# --------------------------------------------------------------------------
# outputs
# --------------------------------------------------------------------------

METRIC_COLUMNS = ("method", "rmse_hz", "rmse_masked_hz", "n_activated", "mean_tsnr")


def write_csv(path, rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, newline="")
    return text


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def to_pgm(img, path=None, binary: bool = True, lo=None, hi=None) -> bytes:
    """8-bit grayscale PGM (P5, or P2 when ``binary`` is False)."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("PGM render needs a 2D map")
    finite = a[np.isfinite(a)]
    lo = (finite.min() if finite.size else 0.0) if lo is None else lo
    hi = (finite.max() if finite.size else 1.0) if hi is None else hi
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    q = np.clip(np.nan_to_num((a - lo) * scale, nan=0.0, posinf=255, neginf=0), 0, 255)
    q = np.rint(q).astype(np.uint8)
    ny, nx = q.shape
    if binary:
        out = f"P5\n{nx} {ny}\n255\n".encode() + q.tobytes()
    else:
        lines = "\n".join(" ".join(str(v) for v in row) for row in q)
        out = f"P2\n{nx} {ny}\n255\n{lines}\n".encode()
    if path is not None:
        Path(path).write_bytes(out)
    return out
