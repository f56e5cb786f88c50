"""Voxel-wise variable projection against a dictionary.

With unit-norm atoms ``u``, the VARPRO criterion ``|Phi' v|^2 / ||Phi||^2``
is ``|<u, v>|^2``; the winning atom's amplitude is ``<u, v> / norm`` and
the manifold projection of ``v`` is ``<u, v> u``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifold import Dictionary

_CHUNK = 32


@dataclass(frozen=True)
class VoxelEstimate:
    m0_hat: complex
    t2p_hat_s: float
    f0_hat_hz: float
    t2_hat_s: float
    r2star_hat_hz: float
    residual: float
    atom_index: int
    degenerate: bool = False


@dataclass
class QuantMaps:
    """Per-voxel estimates for N voxels (flattened image order)."""

    m0: np.ndarray
    t2p_s: np.ndarray
    f0_hz: np.ndarray
    t2_s: np.ndarray
    r2star_hz: np.ndarray
    residual: np.ndarray
    atom_index: np.ndarray
    degenerate: np.ndarray

    def __len__(self) -> int:
        return self.m0.shape[0]

    def voxel(self, n: int) -> VoxelEstimate:
        return VoxelEstimate(complex(self.m0[n]), float(self.t2p_s[n]), float(self.f0_hz[n]),
                             float(self.t2_s[n]), float(self.r2star_hz[n]),
                             float(self.residual[n]), int(self.atom_index[n]),
                             bool(self.degenerate[n]))

    def to_arrays(self, prefix: str = "") -> dict:
        return {prefix + k: getattr(self, k) for k in (
            "m0", "t2p_s", "f0_hz", "t2_s", "r2star_hz", "residual", "atom_index", "degenerate")}

    @classmethod
    def from_arrays(cls, arrays: dict, prefix: str = "") -> "QuantMaps":
        fields = ("m0", "t2p_s", "f0_hz", "t2_s", "r2star_hz", "residual", "atom_index",
                  "degenerate")
        vals = {k: np.asarray(arrays[prefix + k]) for k in fields}
        vals["degenerate"] = vals["degenerate"].astype(bool)
        vals["atom_index"] = vals["atom_index"].astype(np.int64)
        return cls(**vals)


def _best_atoms(x: np.ndarray, d: Dictionary):
    """argmax_j |<u_j, v>|^2 per row of x, and the winning correlation."""
    n = x.shape[0]
    idx = np.empty(n, dtype=np.int64)
    corr = np.empty(n, dtype=np.complex128)
    ah = d.atoms_h
    for s in range(0, n, _CHUNK):
        c = x[s:s + _CHUNK] @ ah
        p = c.real**2 + c.imag**2
        # np.argmax returns the first maximum: ties go to the lowest atom index
        j = np.argmax(p, axis=1)
        idx[s:s + _CHUNK] = j
        corr[s:s + _CHUNK] = c[np.arange(j.size), j]
    return idx, corr


def project(x, d: Dictionary):
    """Manifold projection ``m0_hat * Phi(theta_hat)`` of each row, plus the maps."""
    x = np.ascontiguousarray(x, dtype=np.complex128)
    if x.ndim != 2 or x.shape[1] != d.n_c:
        raise ValueError(f"expected [N x {d.n_c}] input, got shape {x.shape}")
    if len(d) == 0:
        raise ValueError("empty dictionary")
    idx, corr = _best_atoms(x, d)
    degenerate = ~np.any(x != 0, axis=1)
    idx[degenerate] = 0
    corr[degenerate] = 0.0
    proj = corr[:, None] * d.atoms[idx]
    residual = np.linalg.norm(x - proj, axis=1)
    maps = QuantMaps(
        m0=corr / d.norms[idx],
        t2p_s=d.t2p_s[idx],
        f0_hz=d.f0_hz[idx],
        t2_s=d.t2_s[idx],
        r2star_hz=d.r2star_hz[idx],
        residual=residual,
        atom_index=idx,
        degenerate=degenerate,
    )
    return proj, maps


def quantify_image(x, d: Dictionary) -> QuantMaps:
    """Independent VARPRO fit of every row of ``x`` ([N x n_c])."""
    return project(x, d)[1]


def varpro_match(v, d: Dictionary) -> VoxelEstimate:
    v = np.asarray(v, dtype=np.complex128).reshape(1, -1)
    return quantify_image(v, d).voxel(0)


def regularizer_value(v, d: Dictionary) -> float:
    """Squared distance from ``v`` to its best dictionary fit ``m0 * Phi``."""
    return varpro_match(v, d).residual ** 2
