"""T2'-weighted voxel signals and the discrete OSSI manifold (dictionary).

A voxel is a Cauchy-weighted Riemann sum of isochromats spread around the
central off-resonance. The dictionary evaluates that sum for every
(T2, T2', f0) grid triple. When the f0 grid steps are integer multiples of
the Cauchy offset spacing, all atoms of one T2 share a single lattice of
isochromat signals and each atom is a weighted window over it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .physics import SequenceParams, simulate_isochromats

# grid and Riemann-sum defaults
DEFAULT_CAUCHY_K = 4000
DEFAULT_F_MAX_HZ = 200.0
REFERENCE_T2_S = 0.0926
DEFAULT_T1_S = 1.4


@dataclass(frozen=True)
class VoxelParams:
    t1_s: float
    t2_s: float
    t2p_s: float
    f0_hz: float = 0.0
    m0: complex = 1.0

    def __post_init__(self):
        if min(self.t1_s, self.t2_s, self.t2p_s) <= 0:
            raise ValueError("time constants must be positive")
        if not math.isfinite(self.r2star_hz):
            raise ValueError("R2* must be finite")

    @property
    def r2star_hz(self) -> float:
        return 1.0 / self.t2_s + 1.0 / self.t2p_s


def t2p_from_r2star(r2star_hz, t2_s):
    """T2' such that 1/T2 + 1/T2' equals R2*; raises when R2* <= 1/T2."""
    r2star_hz = np.asarray(r2star_hz, dtype=np.float64)
    r2p = r2star_hz - 1.0 / t2_s
    if np.any(r2p <= 0):
        bad = float(np.atleast_1d(r2star_hz)[np.atleast_1d(r2p) <= 0][0])
        raise ValueError(f"R2* = {bad} Hz is not above 1/T2 = {1.0 / t2_s:.6g} Hz "
                         f"(T2 = {t2_s} s): T2' would be non-positive")
    return 1.0 / r2p


@dataclass(frozen=True)
class CauchyGrid:
    f_offsets_hz: np.ndarray
    weights: np.ndarray

    @property
    def k(self) -> int:
        return self.f_offsets_hz.shape[0]

    @property
    def spacing_hz(self) -> float:
        if self.k < 2:
            return 0.0
        return float(self.f_offsets_hz[1] - self.f_offsets_hz[0])


def cauchy_gamma(t2p_s: float) -> float:
    """Scale parameter (Hz) of the Lorentzian line for a given T2'."""
    return 1.0 / (2.0 * math.pi * t2p_s)


def cauchy_density(f_hz, gamma_hz):
    f_hz = np.asarray(f_hz, dtype=np.float64)
    return gamma_hz / (math.pi * (gamma_hz**2 + f_hz**2))


def cauchy_offsets(k: int = DEFAULT_CAUCHY_K, f_max_hz: float = DEFAULT_F_MAX_HZ) -> np.ndarray:
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if not f_max_hz > 0:
        raise ValueError("f_max_hz must be positive")
    return np.linspace(-f_max_hz, f_max_hz, k)


def cauchy_weights(t2p_s, offsets_hz) -> np.ndarray:
    """Renormalized Cauchy weights, shape ``[len(t2p_s), len(offsets)]``."""
    t2p = np.atleast_1d(np.asarray(t2p_s, dtype=np.float64))
    if np.any(~(t2p > 0)):
        raise ValueError("t2p_s must be positive")
    gamma = 1.0 / (2.0 * math.pi * t2p)
    raw = gamma[:, None] / (math.pi * (gamma[:, None] ** 2 + offsets_hz[None, :] ** 2))
    return raw / raw.sum(axis=1, keepdims=True)


def cauchy_grid(t2p_s: float, k: int = DEFAULT_CAUCHY_K,
                f_max_hz: float = DEFAULT_F_MAX_HZ) -> CauchyGrid:
    if not t2p_s > 0:
        raise ValueError(f"t2p_s must be positive, got {t2p_s}")
    offsets = cauchy_offsets(k, f_max_hz)
    return CauchyGrid(offsets, cauchy_weights(t2p_s, offsets)[0])


def voxel_signal(seq: SequenceParams, vox: VoxelParams, grid: CauchyGrid,
                 backend: str | None = None) -> np.ndarray:
    """``m0 * sum_i w_i phi(f0 + f_i)`` over the Cauchy grid."""
    iso = simulate_isochromats(seq, vox.t1_s, vox.t2_s, vox.f0_hz + grid.f_offsets_hz,
                               backend=backend)
    return complex(vox.m0) * (grid.weights @ iso)


# --------------------------------------------------------------------------
# grids
# --------------------------------------------------------------------------


def uniform_grid(lo: float, hi: float, step: float) -> np.ndarray:
    """Inclusive ``lo:step:hi`` grid (endpoint kept when it lies on the grid)."""
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def default_f0_grid(lo: float = -33.3, hi: float = 33.3, step: float = 0.22) -> np.ndarray:
    """Half-open ``[lo, hi)`` f0 grid; 303 points for the defaults."""
    n = int(math.ceil((hi - lo) / step - 1e-9))
    return lo + step * np.arange(n)


def window(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    values = np.asarray(values)
    return values[(values >= lo - 1e-9) & (values <= hi + 1e-9)]


@dataclass(frozen=True)
class DictionaryGrid:
    """Parameter grid of the manifold.

    ``reference_t2_s`` selects how R2* values become T2' values. ``None``
    converts per (T2, R2*) pair, so every atom has exactly the tabulated
    R2*. A number fixes one T2' grid, converted at that reference T2, and
    shares it across all T2 values (the 4D layout).
    """

    t2_values_s: np.ndarray
    r2star_values_hz: np.ndarray
    f0_values_hz: np.ndarray
    fixed_t1_s: float = DEFAULT_T1_S
    reference_t2_s: float | None = None

    def __post_init__(self):
        for name in ("t2_values_s", "r2star_values_hz", "f0_values_hz"):
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64))
            object.__setattr__(self, name, v)
            if v.size == 0:
                raise ValueError(f"{name} is empty")
            if np.any(np.diff(v) <= 0):
                raise ValueError(f"{name} must be strictly increasing")
        if np.any(self.t2_values_s <= 0) or np.any(self.t2_values_s > self.fixed_t1_s):
            raise ValueError("T2 values must lie in (0, T1]")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.t2_values_s.size, self.r2star_values_hz.size, self.f0_values_hz.size)

    def t2p_values(self, t2_s: float) -> np.ndarray:
        ref = t2_s if self.reference_t2_s is None else self.reference_t2_s
        return t2p_from_r2star(self.r2star_values_hz, ref)


def default_grid(t2_values_s=None, f0_window_hz=None, reference_t2_s: float | None = None,
                 t1_s: float = DEFAULT_T1_S) -> DictionaryGrid:
    t2 = uniform_grid(0.040, 0.150, 0.001) if t2_values_s is None else t2_values_s
    f0 = default_f0_grid()
    if f0_window_hz is not None:
        f0 = window(f0, *f0_window_hz)
    return DictionaryGrid(t2, uniform_grid(12.0, 38.0, 0.1), f0, t1_s, reference_t2_s)


# --------------------------------------------------------------------------
# dictionary
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Unit-norm atoms (rows), ordered T2-major, then T2'/R2*, then f0."""

    atoms: np.ndarray
    norms: np.ndarray
    t2_s: np.ndarray
    t2p_s: np.ndarray
    f0_hz: np.ndarray
    grid_shape: tuple[int, int, int]
    seq: SequenceParams = field(default_factory=SequenceParams)
    t1_s: float = DEFAULT_T1_S

    def __len__(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_c(self) -> int:
        return self.atoms.shape[1]

    @cached_property
    def r2star_hz(self) -> np.ndarray:
        return 1.0 / self.t2_s + 1.0 / self.t2p_s

    @cached_property
    def atoms_h(self) -> np.ndarray:
        """Conjugate transpose, cached for matching."""
        return np.ascontiguousarray(self.atoms.conj().T)

    def theta_index(self, row: int) -> tuple[int, int, int]:
        return tuple(int(i) for i in np.unravel_index(row, self.grid_shape))

    def unnormalized(self, row: int) -> np.ndarray:
        return self.norms[row] * self.atoms[row]

    def _take(self, rows: np.ndarray, shape) -> "Dictionary":
        return Dictionary(self.atoms[rows], self.norms[rows], self.t2_s[rows],
                          self.t2p_s[rows], self.f0_hz[rows], shape, self.seq, self.t1_s)

    def _cube(self, values):
        return np.asarray(values).reshape(self.grid_shape)

    @property
    def t2_grid(self) -> np.ndarray:
        return self._cube(self.t2_s)[:, 0, 0]

    def at_t2(self, t2_s: float) -> "Dictionary":
        """3D sub-dictionary at the grid T2 nearest to ``t2_s``."""
        i = int(np.argmin(np.abs(self.t2_grid - t2_s)))
        rows = np.arange(len(self)).reshape(self.grid_shape)[i].ravel()
        return self._take(rows, (1,) + self.grid_shape[1:])

    def at_t2p(self, t2p_s: float) -> "Dictionary":
        """Sub-dictionary (T2 x f0) at the T2' index nearest to ``t2p_s``.

        Requires a shared T2' grid (all T2 blocks use the same T2' values).
        """
        t2p = self._cube(self.t2p_s)[:, :, 0]
        if not np.allclose(t2p, t2p[0:1], rtol=1e-12, atol=0):
            raise ValueError("T2' grid differs across T2; build with reference_t2_s set")
        j = int(np.argmin(np.abs(t2p[0] - t2p_s)))
        rows = np.arange(len(self)).reshape(self.grid_shape)[:, j, :].ravel()
        return self._take(rows, (self.grid_shape[0], 1, self.grid_shape[2]))

    def to_arrays(self) -> dict:
        return {
            "atoms": self.atoms,
            "norms": self.norms,
            "t2_s": self.t2_s,
            "t2p_s": self.t2p_s,
            "r2star_hz": self.r2star_hz,
            "f0_hz": self.f0_hz,
            "grid_shape": np.asarray(self.grid_shape, dtype=np.int64),
        }

    @classmethod
    def from_arrays(cls, arrays: dict, seq: SequenceParams, t1_s: float) -> "Dictionary":
        shape = tuple(int(v) for v in arrays["grid_shape"])
        return cls(arrays["atoms"], arrays["norms"], arrays["t2_s"], arrays["t2p_s"],
                   arrays["f0_hz"], shape, seq, t1_s)


def _lattice_steps(f0_values: np.ndarray, spacing: float):
    """Integer lattice steps of f0 values relative to the first, or None."""
    if f0_values.size == 1:
        return np.zeros(1, dtype=np.int64)
    rel = (f0_values - f0_values[0]) / spacing
    steps = np.rint(rel)
    if np.max(np.abs(rel - steps)) > 1e-6:
        return None
    return steps.astype(np.int64)


def lattice_signals(seq: SequenceParams, t1_s: float, t2_s: float, f_start_hz: float,
                    spacing_hz: float, n: int, backend: str | None = None) -> np.ndarray:
    """Isochromat signals at ``f_start + spacing * q`` for q in [0, n)."""
    freqs = f_start_hz + spacing_hz * np.arange(n)
    return simulate_isochromats(seq, t1_s, t2_s, freqs, backend=backend)


def _atoms_one_t2(seq, t1_s, t2_s, t2p_values, f0_values, offsets, backend, block=32):
    """Unnormalized atoms ``[n_t2p, n_f0, n_c]`` for one T2."""
    k = offsets.size
    weights = cauchy_weights(t2p_values, offsets)
    n_r, n_f, n_c = t2p_values.size, f0_values.size, seq.n_c
    out = np.empty((n_r, n_f, n_c), dtype=np.complex128)
    spacing = float(offsets[1] - offsets[0])
    steps = _lattice_steps(f0_values, spacing)
    if steps is not None:
        # every f0 + offset falls on one shared lattice
        lat = lattice_signals(seq, t1_s, t2_s, f0_values[0] + offsets[0], spacing,
                              int(steps[-1]) + k, backend)
        lat_r = lat.view(np.float64)  # [Q, 2 n_c]
        for j, m in enumerate(steps):
            out[:, j, :] = (weights @ lat_r[m:m + k]).view(np.complex128)
        return out
    for j0 in range(0, n_f, block):
        fs = f0_values[j0:j0 + block]
        sig = simulate_isochromats(seq, t1_s, t2_s, (fs[:, None] + offsets[None, :]).ravel(),
                                   backend=backend).reshape(fs.size, k, n_c)
        for jj in range(fs.size):
            out[:, j0 + jj, :] = (weights @ sig[jj].view(np.float64)).view(np.complex128)
    return out


def build_dictionary(seq: SequenceParams, grid: DictionaryGrid, cauchy_k: int = DEFAULT_CAUCHY_K,
                     f_max_hz: float = DEFAULT_F_MAX_HZ, backend: str | None = None) -> Dictionary:
    """Atoms for every (T2, R2*, f0) in ``grid`` with m0 = 1, unit-normalized."""
    offsets = cauchy_offsets(cauchy_k, f_max_hz)
    n_t2, n_r, n_f = grid.shape
    # validate every pair before any simulation
    t2p_all = [grid.t2p_values(t2) for t2 in grid.t2_values_s]
    raw = np.empty((n_t2, n_r, n_f, seq.n_c), dtype=np.complex128)
    for i, t2 in enumerate(grid.t2_values_s):
        raw[i] = _atoms_one_t2(seq, grid.fixed_t1_s, float(t2), t2p_all[i], grid.f0_values_hz,
                               offsets, backend)
    raw = raw.reshape(-1, seq.n_c)
    norms = np.linalg.norm(raw, axis=1)
    if np.any(norms <= 0):
        raise ValueError("zero-norm atom (flip angle 0?)")
    atoms = raw / norms[:, None]
    t2 = np.repeat(grid.t2_values_s, n_r * n_f)
    t2p = np.repeat(np.stack(t2p_all).ravel(), n_f)
    f0 = np.tile(grid.f0_values_hz, n_t2 * n_r)
    return Dictionary(atoms, norms, t2, t2p, f0, grid.shape, seq, grid.fixed_t1_s)
