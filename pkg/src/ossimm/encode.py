"""Multi-coil, per-frame undersampled Fourier encoding.

Image frame sets are ``[N x n_frames]`` with ``N = ny * nx`` in row-major
order. Samples of all frames are concatenated frame by frame into one
``[n_coils x total]`` array; within a Cartesian frame they follow
row-major order of the (unshifted, DC at [0, 0]) k-space mask.

Both paths are orthonormal: Cartesian uses the unitary 2D DFT, and the
nonuniform path evaluates ``sum_r x(r) exp(-i 2 pi (kx x / nx + ky y / ny))
/ sqrt(N)`` exactly, so integer coordinates reproduce the Cartesian result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels


@dataclass(frozen=True, eq=False)
class SamplingPattern:
    shape: tuple[int, int]
    masks: np.ndarray | None = None
    coords: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if (self.masks is None) == (self.coords is None):
            raise ValueError("give exactly one of masks or coords")
        if self.masks is not None:
            masks = np.asarray(self.masks, dtype=bool)
            if masks.ndim != 3 or masks.shape[1:] != self.shape:
                raise ValueError(f"masks must be [n_frames, {self.shape[0]}, {self.shape[1]}], "
                                 f"got {masks.shape}")
            object.__setattr__(self, "masks", masks)
        else:
            coords = tuple(np.asarray(c, dtype=np.float64).reshape(-1, 2) for c in self.coords)
            object.__setattr__(self, "coords", coords)
        if np.any(self.counts < 1):
            raise ValueError("every frame needs at least one sample")

    @classmethod
    def cartesian(cls, masks) -> "SamplingPattern":
        masks = np.asarray(masks, dtype=bool)
        return cls(masks.shape[1:], masks=masks)

    @classmethod
    def nonuniform(cls, coords, shape) -> "SamplingPattern":
        return cls(shape, coords=tuple(coords))

    @property
    def is_cartesian(self) -> bool:
        return self.masks is not None

    @property
    def n_frames(self) -> int:
        return self.masks.shape[0] if self.is_cartesian else len(self.coords)

    @property
    def counts(self) -> np.ndarray:
        if self.is_cartesian:
            return self.masks.reshape(self.masks.shape[0], -1).sum(axis=1)
        return np.array([c.shape[0] for c in self.coords], dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.counts)])

    def frame_slice(self, t: int) -> slice:
        off = self.offsets
        return slice(int(off[t]), int(off[t + 1]))


@dataclass(frozen=True, eq=False)
class SensitivityMaps:
    maps: np.ndarray

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=np.complex128)
        if maps.ndim != 3:
            raise ValueError("maps must be [n_coils, ny, nx]")
        object.__setattr__(self, "maps", maps)

    @property
    def n_coils(self) -> int:
        return self.maps.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.maps.shape[1:]

    def rss(self) -> np.ndarray:
        return np.sqrt(np.sum(np.abs(self.maps) ** 2, axis=0))


@dataclass(eq=False)
class KSpaceData:
    samples: np.ndarray
    pattern: SamplingPattern
    noise_sigma: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 2 or self.samples.shape[1] != self.pattern.total:
            raise ValueError(f"samples must be [n_coils, {self.pattern.total}], "
                             f"got {self.samples.shape}")

    def frame(self, t: int) -> np.ndarray:
        return self.samples[:, self.pattern.frame_slice(t)]


def _check(x, sens: SensitivityMaps, pattern: SamplingPattern):
    ny, nx = pattern.shape
    if sens.shape != pattern.shape:
        raise ValueError(f"sensitivity shape {sens.shape} != pattern shape {pattern.shape}")
    if x is not None and (x.ndim != 2 or x.shape != (ny * nx, pattern.n_frames)):
        raise ValueError(f"image must be [{ny * nx} x {pattern.n_frames}], got {x.shape}")


def forward(x, sens: SensitivityMaps, pattern: SamplingPattern, backend=None) -> np.ndarray:
    """Per-frame samples of the coil-weighted Fourier transform of ``x``."""
    x = np.asarray(x, dtype=np.complex128)
    _check(x, sens, pattern)
    ny, nx = pattern.shape
    img = x.T.reshape(pattern.n_frames, ny, nx)
    coil_img = sens.maps[:, None] * img[None]
    if pattern.is_cartesian:
        k = np.fft.fft2(coil_img, norm="ortho")
        return k[:, pattern.masks]
    out = np.empty((sens.n_coils, pattern.total), dtype=np.complex128)
    for t, kc in enumerate(pattern.coords):
        sl = pattern.frame_slice(t)
        for c in range(sens.n_coils):
            out[c, sl] = kernels.nudft_forward(coil_img[c, t], kc[:, 0], kc[:, 1], backend)
    return out


def adjoint(y, sens: SensitivityMaps, pattern: SamplingPattern, backend=None) -> np.ndarray:
    """Exact adjoint of :func:`forward`; returns ``[N x n_frames]``."""
    y = np.asarray(y.samples if isinstance(y, KSpaceData) else y, dtype=np.complex128)
    _check(None, sens, pattern)
    if y.shape != (sens.n_coils, pattern.total):
        raise ValueError(f"data must be [{sens.n_coils}, {pattern.total}], got {y.shape}")
    ny, nx = pattern.shape
    nf = pattern.n_frames
    if pattern.is_cartesian:
        full = np.zeros((sens.n_coils, nf, ny, nx), dtype=np.complex128)
        full[:, pattern.masks] = y
        coil_img = np.fft.ifft2(full, norm="ortho")
    else:
        coil_img = np.empty((sens.n_coils, nf, ny, nx), dtype=np.complex128)
        for t, kc in enumerate(pattern.coords):
            sl = pattern.frame_slice(t)
            for c in range(sens.n_coils):
                coil_img[c, t] = kernels.nudft_adjoint(y[c, sl], kc[:, 0], kc[:, 1], (ny, nx),
                                                       backend)
    img = np.sum(sens.maps.conj()[:, None] * coil_img, axis=0)
    return img.reshape(nf, ny * nx).T.copy()


@dataclass(eq=False)
class EncodingOp:
    """Bound forward model ``A`` for one frame set."""

    sens: SensitivityMaps
    pattern: SamplingPattern
    backend: str | None = None
    _sigma: dict = field(default_factory=dict, repr=False)

    def forward(self, x):
        return forward(x, self.sens, self.pattern, self.backend)

    def adjoint(self, y):
        return adjoint(y, self.sens, self.pattern, self.backend)

    def normal(self, x):
        return self.adjoint(self.forward(x))

    @property
    def image_shape(self) -> tuple[int, int]:
        ny, nx = self.pattern.shape
        return (ny * nx, self.pattern.n_frames)

    def spectral_norm(self, n_iters: int = 300, seed: int = 0) -> float:
        key = (n_iters, seed)
        if key not in self._sigma:
            self._sigma[key] = spectral_norm(self.sens, self.pattern, n_iters, seed, self.backend)
        return self._sigma[key]


def spectral_norm(sens: SensitivityMaps, pattern: SamplingPattern, n_iters: int = 300,
                  seed: int = 0, backend=None) -> float:
    """Largest singular value of ``A`` by power iteration on ``A'A``.

    The estimate is the square root of the final Rayleigh quotient. With
    unit root-sum-of-squares coils the top of the spectrum is clustered near
    1, so the default budget is generous.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    ny, nx = pattern.shape
    rng = np.random.default_rng(seed)
    shape = (ny * nx, pattern.n_frames)
    x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    x /= np.linalg.norm(x)
    rq = 0.0
    for _ in range(n_iters):
        z = adjoint(forward(x, sens, pattern, backend), sens, pattern, backend)
        rq = float(np.vdot(x, z).real)
        nz = np.linalg.norm(z)
        if nz == 0:
            return 0.0
        x = z / nz
    return math.sqrt(max(rq, 0.0))


# --------------------------------------------------------------------------
# synthetic sensitivities and sampling
# --------------------------------------------------------------------------


def synthetic_sensitivities(shape, n_coils: int = 4, width: float = 0.8,
                            distance: float = 1.2) -> SensitivityMaps:
    """Gaussian-bump coils around the FOV, scaled to unit root-sum-of-squares.

    Coil ``c`` sits at angle ``a = 2 pi c / n_coils`` and distance ``distance``
    (FOV half-widths) from the centre, with magnitude
    ``exp(-|r - r_c|^2 / (2 width^2))`` and phase ``a + (pi/2)(x cos a + y sin a)``
    on normalized coordinates ``x, y`` in [-1, 1].
    """
    ny, nx = shape
    yy, xx = np.meshgrid(np.linspace(-1, 1, ny), np.linspace(-1, 1, nx), indexing="ij")
    maps = np.empty((n_coils, ny, nx), dtype=np.complex128)
    for c in range(n_coils):
        a = 2 * np.pi * c / n_coils
        cy, cx = distance * np.sin(a), distance * np.cos(a)
        mag = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width**2))
        maps[c] = mag * np.exp(1j * (a + 0.5 * np.pi * (xx * np.cos(a) + yy * np.sin(a))))
    maps /= np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return SensitivityMaps(maps)


def kspace_radius(shape) -> np.ndarray:
    ny, nx = shape
    ky = np.fft.fftfreq(ny) * ny
    kx = np.fft.fftfreq(nx) * nx
    return np.sqrt(ky[:, None] ** 2 + kx[None, :] ** 2)


def variable_density_mask(shape, budget: int, rng: np.random.Generator,
                          center_radius: float = 2.0, power: float = 5.0,
                          scale: float = 8.0) -> np.ndarray:
    """One random Cartesian point mask with a fully sampled centre.

    Outside the centre, locations are drawn without replacement with
    probability proportional to ``(1 + r / scale) ** -power``.
    """
    r = kspace_radius(shape)
    mask = r <= center_radius
    need = budget - int(mask.sum())
    if need > 0:
        cand = np.flatnonzero(~mask)
        p = (1.0 + r.ravel()[cand] / scale) ** (-power)
        pick = rng.choice(cand, size=min(need, cand.size), replace=False, p=p / p.sum())
        mask.ravel()[pick] = True
    return mask


def variable_density_masks(shape, n_frames: int, accel: float = 12.0, seed: int = 0,
                           set_index: int = 0, **kwargs) -> np.ndarray:
    """``[n_frames, ny, nx]`` masks, each with ``ceil(N / accel)`` samples.

    Every frame draws from its own stream seeded by (seed, set_index, frame),
    so masks vary across fast and slow time and are reproducible.
    """
    ny, nx = shape
    budget = math.ceil(ny * nx / accel)
    out = np.empty((n_frames, ny, nx), dtype=bool)
    for t in range(n_frames):
        rng = np.random.default_rng([seed, set_index, t])
        out[t] = variable_density_mask(shape, budget, rng, **kwargs)
    return out
