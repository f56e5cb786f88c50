"""Synthetic ground truth: parameter maps, task-driven T2' dynamics, f0
drift and respiration, OSSI image series, and calibrated noise.

Truth signals are exact Cauchy Riemann sums. Every voxel's isochromat
frequencies ``f0_region + g(t) + offset_i`` lie on one lattice per frame,
anchored at the global shift ``g(t)``, provided the per-region f0 values
are integer multiples of the Cauchy spacing. Region f0 values are snapped
to that spacing when the series is generated, and the snapped values are
what the truth maps report.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import encode
from .encode import KSpaceData, SamplingPattern, SensitivityMaps
from .manifold import (
    REFERENCE_T2_S,
    cauchy_offsets,
    cauchy_weights,
    lattice_signals,
    t2p_from_r2star,
)
from .physics import SequenceParams

# Commensurate Cauchy settings: spacing 0.11 Hz divides the 0.22 Hz f0 grid.
LATTICE_CAUCHY_K = 3637
LATTICE_F_MAX_HZ = 199.98


# --------------------------------------------------------------------------
# task and HRF
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HrfSpec:
    """Double-gamma HRF, each gamma parameterized by its mode and dispersion."""

    peak_delay_s: float = 6.0
    undershoot_delay_s: float = 16.0
    peak_disp_s: float = 1.0
    undershoot_disp_s: float = 1.0
    undershoot_ratio: float = 1.0 / 6.0
    length_s: float = 32.0


def _gamma_mode(t, delay, disp):
    shape = delay / disp
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(shape * np.log(t[pos] / delay) - (t[pos] - delay) / disp)
    return out


def hrf_kernel(spec: HrfSpec = HrfSpec(), dt_s: float = 0.15) -> np.ndarray:
    """Sampled double-gamma kernel on ``[0, length_s)``, peak-normalized to 1."""
    if not dt_s > 0:
        raise ValueError("dt_s must be positive")
    t = np.arange(0.0, spec.length_s, dt_s)
    h = (_gamma_mode(t, spec.peak_delay_s, spec.peak_disp_s)
         - spec.undershoot_ratio * _gamma_mode(t, spec.undershoot_delay_s, spec.undershoot_disp_s))
    return h / h.max()


@dataclass(frozen=True)
class TaskSpec:
    rest_s: float = 10.0
    block_s: float = 10.0
    n_cycles: int = 3
    frame_period_s: float = 0.15

    def __post_init__(self):
        if min(self.rest_s, self.block_s, self.frame_period_s) <= 0 or self.n_cycles < 1:
            raise ValueError("task timings and cycle count must be positive")

    @property
    def duration_s(self) -> float:
        return self.rest_s + 2 * self.block_s * self.n_cycles

    @property
    def n_frames(self) -> int:
        return int(round(self.duration_s / self.frame_period_s))

    def times(self) -> np.ndarray:
        return np.arange(self.n_frames) * self.frame_period_s

    def boxcar(self) -> np.ndarray:
        t = self.times() - self.rest_s
        on = (t >= 0) & (np.mod(t, 2 * self.block_s) < self.block_s - 1e-9)
        return on.astype(np.float64)


def reference_waveform(task: TaskSpec, hrf: HrfSpec = HrfSpec()) -> np.ndarray:
    """Boxcar convolved with the HRF, scaled to a maximum of 1."""
    box = task.boxcar()
    conv = np.convolve(box, hrf_kernel(hrf, task.frame_period_s))[: box.size]
    peak = conv.max()
    return conv / peak if peak > 0 else conv


# --------------------------------------------------------------------------
# phantom description
# --------------------------------------------------------------------------


def shape_mask(desc: dict, ny: int, nx: int) -> np.ndarray:
    """Boolean [ny, nx] mask of a shape descriptor.

    Descriptors: ``{"type": "disk", "center": [y, x], "radius": r}``,
    ``{"type": "ring", "center": [y, x], "inner": r0, "outer": r1}`` (r0 < d <= r1),
    ``{"type": "rect", "rows": [y0, y1], "cols": [x0, x1]}`` (half-open),
    ``{"type": "and", "shapes": [...]}`` (intersection).
    """
    yy, xx = np.mgrid[0:ny, 0:nx]
    kind = desc.get("type")
    if kind in ("disk", "ring"):
        cy, cx = desc["center"]
        d = np.hypot(yy - cy, xx - cx)
        if kind == "disk":
            return d <= desc["radius"]
        return (d > desc["inner"]) & (d <= desc["outer"])
    if kind == "and":
        out = np.ones((ny, nx), dtype=bool)
        for sub in desc["shapes"]:
            out &= shape_mask(sub, ny, nx)
        return out
    if kind == "rect":
        (y0, y1), (x0, x1) = desc["rows"], desc["cols"]
        return (yy >= y0) & (yy < y1) & (xx >= x0) & (xx < x1)
    raise ValueError(f"unknown shape type {kind!r}")


@dataclass(frozen=True)
class Region:
    shape: dict
    r2star_hz: float
    f0_hz: float = 0.0
    m0: complex = 1.0
    t2_s: float = REFERENCE_T2_S
    t1_s: float = 1.4

    def t2p_s(self) -> float:
        return float(t2p_from_r2star(self.r2star_hz, self.t2_s))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["m0"] = [complex(self.m0).real, complex(self.m0).imag]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Region":
        d = dict(d)
        m0 = d.pop("m0", 1.0)
        if isinstance(m0, (list, tuple)):
            m0 = complex(m0[0], m0[1])
        return cls(m0=complex(m0), **d)


def _default_regions() -> tuple:
    c = [19.5, 19.5]
    inner = {"type": "disk", "center": c, "radius": 16.0}

    def quadrant(rows, cols):
        return {"type": "and", "shapes": [inner, {"type": "rect", "rows": rows, "cols": cols}]}

    return (
        # edge ring with R2* beyond the dictionary range
        Region({"type": "disk", "center": c, "radius": 18.0}, r2star_hz=45.0, f0_hz=2.2, m0=0.6),
        Region(inner, r2star_hz=20.0, f0_hz=0.0, m0=1.0),
        Region(quadrant([0, 20], [0, 20]), r2star_hz=16.0, f0_hz=-1.1, m0=0.9),
        Region(quadrant([0, 20], [20, 40]), r2star_hz=24.0, f0_hz=1.1, m0=0.8),
        Region(quadrant([20, 40], [0, 20]), r2star_hz=30.0, f0_hz=-2.2, m0=0.7),
    )


@dataclass(frozen=True)
class PhantomSpec:
    """Parameter maps and dynamics of a synthetic OSSI fMRI phantom.

    Regions are painted in order, each later one overwriting earlier ones,
    but only inside the first region (the support). The activation ROI
    modulates T2' of the region it falls in.
    """

    ny: int = 40
    nx: int = 40
    regions: tuple = field(default_factory=_default_regions)
    activation_roi: dict = field(
        default_factory=lambda: {"type": "rect", "rows": [24, 30], "cols": [24, 30]})
    delta_t2p_s: float = 0.0154
    task: TaskSpec = TaskSpec()
    hrf: HrfSpec = HrfSpec()
    base_f0_hz: float = 0.0
    drift_hz_per_min: float = 1.0
    resp_amp_hz: float = 0.5
    resp_period_s: float = 4.2
    tsnr_db: float = 38.0
    seed: int = 0

    def __post_init__(self):
        if not math.isfinite(self.tsnr_db):
            raise ValueError("tsnr_db must be finite")
        if len(self.regions) == 0:
            raise ValueError("at least one region (the support) is required")
        regions = tuple(r if isinstance(r, Region) else Region.from_dict(r) for r in self.regions)
        object.__setattr__(self, "regions", regions)
        if not np.all(self.support[self.roi]):
            raise ValueError("activation ROI must lie inside the support")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def support(self) -> np.ndarray:
        return shape_mask(self.regions[0].shape, self.ny, self.nx).ravel()

    @property
    def roi(self) -> np.ndarray:
        return shape_mask(self.activation_roi, self.ny, self.nx).ravel()

    def labels(self) -> np.ndarray:
        """Region index per voxel (-1 outside the support)."""
        support = self.support
        lab = np.full(self.ny * self.nx, -1, dtype=np.int64)
        for i, reg in enumerate(self.regions):
            lab[shape_mask(reg.shape, self.ny, self.nx).ravel() & support] = i
        return lab

    def to_dict(self) -> dict:
        return {
            "ny": self.ny, "nx": self.nx,
            "regions": [r.to_dict() for r in self.regions],
            "activation_roi": self.activation_roi,
            "delta_t2p_s": self.delta_t2p_s,
            "task": asdict(self.task), "hrf": asdict(self.hrf),
            "base_f0_hz": self.base_f0_hz, "drift_hz_per_min": self.drift_hz_per_min,
            "resp_amp_hz": self.resp_amp_hz, "resp_period_s": self.resp_period_s,
            "tsnr_db": self.tsnr_db, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        d = dict(d)
        if "task" in d:
            d["task"] = TaskSpec(**d["task"])
        if "hrf" in d:
            d["hrf"] = HrfSpec(**d["hrf"])
        if "regions" in d:
            d["regions"] = tuple(Region.from_dict(r) for r in d["regions"])
        return cls(**d)


# --------------------------------------------------------------------------
# dynamics
# --------------------------------------------------------------------------


def t2p_timecourse(spec: PhantomSpec, baseline_t2p_s: float) -> np.ndarray:
    """T2'(t) = baseline + delta * reference waveform, per frame."""
    return baseline_t2p_s + spec.delta_t2p_s * reference_waveform(spec.task, spec.hrf)


def f0_shift(t_s, base_hz: float = 0.0, drift_hz_per_min: float = 0.0, resp_amp_hz: float = 0.0,
             resp_period_s: float = 4.2):
    t = np.asarray(t_s, dtype=np.float64)
    out = base_hz + drift_hz_per_min / 60.0 * t
    if resp_amp_hz != 0:
        out = out + resp_amp_hz * np.sin(2 * np.pi * t / resp_period_s)
    return out


def f0_timecourse(spec: PhantomSpec) -> np.ndarray:
    """Global f0 offset per frame from drift plus respiration."""
    return f0_shift(spec.task.times(), spec.base_f0_hz, spec.drift_hz_per_min,
                    spec.resp_amp_hz, spec.resp_period_s)


# --------------------------------------------------------------------------
# series generation
# --------------------------------------------------------------------------


@dataclass
class PhantomSeries:
    """Noiseless truth. ``images`` is [n_frames, N, n_c]; maps are [n_frames, N]."""

    images: np.ndarray
    m0: np.ndarray
    t1_s: np.ndarray
    t2_s: np.ndarray
    t2p_s: np.ndarray
    f0_hz: np.ndarray
    support: np.ndarray
    roi: np.ndarray
    reference: np.ndarray
    times_s: np.ndarray
    shape: tuple

    @property
    def n_frames(self) -> int:
        return self.images.shape[0]

    @property
    def r2star_hz(self) -> np.ndarray:
        out = np.zeros_like(self.t2p_s)
        s = self.support
        out[:, s] = 1.0 / self.t2_s[s] + 1.0 / self.t2p_s[:, s]
        return out

    def frame(self, t: int) -> np.ndarray:
        return self.images[t]

    def to_arrays(self) -> dict:
        return {
            "images": self.images, "m0": self.m0, "t1_s": self.t1_s, "t2_s": self.t2_s,
            "t2p_s": self.t2p_s, "f0_hz": self.f0_hz, "r2star_hz": self.r2star_hz,
            "support": self.support, "roi": self.roi, "reference": self.reference,
            "times_s": self.times_s, "shape": np.asarray(self.shape, dtype=np.int64),
        }

    @classmethod
    def from_arrays(cls, a: dict) -> "PhantomSeries":
        return cls(a["images"], a["m0"], a["t1_s"], a["t2_s"], a["t2p_s"], a["f0_hz"],
                   a["support"].astype(bool), a["roi"].astype(bool), a["reference"],
                   a["times_s"], tuple(int(v) for v in a["shape"]))


def generate_series(spec: PhantomSpec, seq: SequenceParams = SequenceParams(),
                    cauchy_k: int = LATTICE_CAUCHY_K, f_max_hz: float = LATTICE_F_MAX_HZ,
                    n_frames: int | None = None, backend: str | None = None) -> PhantomSeries:
    """Ground-truth OSSI image series and parameter maps for every frame.

    ``n_frames`` truncates the task timeline (useful for quick runs).
    """
    offsets = cauchy_offsets(cauchy_k, f_max_hz)
    delta = float(offsets[1] - offsets[0])
    labels = spec.labels()
    support, roi = spec.support, spec.roi
    n_vox = labels.size
    nt = spec.task.n_frames if n_frames is None else min(int(n_frames), spec.task.n_frames)
    times = spec.task.times()[:nt]
    shift = f0_timecourse(spec)[:nt]
    ref = reference_waveform(spec.task, spec.hrf)[:nt]

    regs = spec.regions
    steps = np.array([int(round(r.f0_hz / delta)) for r in regs], dtype=np.int64)
    f0_reg = steps * delta
    # voxel classes: (region, activated)
    cls_of = np.full(n_vox, -1, dtype=np.int64)
    classes = []
    for i in range(len(regs)):
        for act in (False, True):
            sel = (labels == i) & (roi == act)
            if sel.any():
                cls_of[sel] = len(classes)
                classes.append((i, act))

    m0 = np.zeros(n_vox, dtype=np.complex128)
    t1 = np.zeros(n_vox)
    t2 = np.zeros(n_vox)
    for i, r in enumerate(regs):
        sel = labels == i
        m0[sel], t1[sel], t2[sel] = complex(r.m0), r.t1_s, r.t2_s
    base_t2p = np.array([r.t2p_s() for r in regs])

    images = np.zeros((nt, n_vox, seq.n_c), dtype=np.complex128)
    t2p = np.zeros((nt, n_vox))
    f0 = np.zeros((nt, n_vox))
    groups = sorted({(regs[i].t1_s, regs[i].t2_s) for i, _ in classes})
    lo, hi = int(steps.min()), int(steps.max())
    n_lat = hi - lo + cauchy_k
    for t in range(nt):
        for t1g, t2g in groups:
            lat = lattice_signals(seq, t1g, t2g, shift[t] + lo * delta - f_max_hz, delta, n_lat,
                                  backend).view(np.float64)
            for c, (i, act) in enumerate(classes):
                if (regs[i].t1_s, regs[i].t2_s) != (t1g, t2g):
                    continue
                tp = base_t2p[i] + (spec.delta_t2p_s * ref[t] if act else 0.0)
                w = cauchy_weights(np.array([tp]), offsets)[0]
                m = int(steps[i] - lo)
                sig = (w @ lat[m:m + cauchy_k]).view(np.complex128)
                sel = cls_of == c
                images[t, sel] = m0[sel, None] * sig[None, :]
                t2p[t, sel] = tp
                f0[t, sel] = f0_reg[i] + shift[t]
    return PhantomSeries(images, m0, t1, t2, t2p, f0, support, roi & support, ref, times,
                         spec.shape)


# --------------------------------------------------------------------------
# noise and acquisition
# --------------------------------------------------------------------------


def noise_sigma_for_tsnr(series_images: np.ndarray, support: np.ndarray, tsnr_db: float) -> float:
    """Complex noise std giving the target tSNR on average over the support.

    With per-entry complex noise of variance sigma^2, the 2-norm-combined
    voxel magnitude fluctuates with std ~ sigma / sqrt(2). Per voxel
    tSNR ~ sqrt(2) * mean||v|| / sigma; sigma is chosen so that the mean
    over support voxels of that value in dB equals ``tsnr_db``.
    """
    imgs = np.asarray(series_images)
    if imgs.ndim == 2:
        imgs = imgs[None]
    mag = np.linalg.norm(imgs, axis=-1).mean(axis=0)[support]
    if mag.size == 0 or np.any(mag <= 0):
        raise ValueError("support contains voxels without signal")
    level = float(np.mean(20.0 * np.log10(np.sqrt(2.0) * mag)))
    return 10.0 ** ((level - tsnr_db) / 20.0)


def complex_noise(shape, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Circular complex Gaussian with E|n|^2 = sigma^2."""
    s = sigma / math.sqrt(2.0)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def add_noise(x, sigma: float, seed: int, frame: int) -> np.ndarray:
    """Image-domain noise for one frame, from the stream (seed, 0, frame)."""
    x = np.asarray(x, dtype=np.complex128)
    if sigma == 0:
        return x.copy()
    return x + complex_noise(x.shape, sigma, np.random.default_rng([seed, 0, frame]))


def acquire(x, sens: SensitivityMaps, pattern: SamplingPattern, sigma: float, seed: int,
            frame: int, backend: str | None = None) -> KSpaceData:
    """Sample one frame set ``x`` ([N x n_c]) and add k-space noise.

    With the orthonormal DFT and unit root-sum-of-squares coils, k-space
    noise of std ``sigma`` matches image noise of the same std.
    """
    y = encode.forward(x, sens, pattern, backend)
    if sigma > 0:
        y = y + complex_noise(y.shape, sigma, np.random.default_rng([seed, 1, frame]))
    return KSpaceData(y, pattern, sigma)
