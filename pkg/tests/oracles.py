"""Reference implementations written independently of the package code.

They favour obviousness over speed: explicit 3x3 matrices, Python loops,
dense operator matrices.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np


def rf_phase(n: int, n_c: int) -> float:
    # exact rational reduction of n^2 / n_c modulo 2, then times pi
    frac = Fraction(n * n, n_c) % 2
    return float(np.pi * frac)


def rot_z(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_x(alpha: float) -> np.ndarray:
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def free(t: float, t1: float, t2: float, f0: float):
    """Affine map M -> A M + b over a free interval of length t."""
    e1, e2 = np.exp(-t / t1), np.exp(-t / t2)
    a = np.diag([e2, e2, e1]) @ rot_z(-2 * np.pi * f0 * t)
    return a, np.array([0.0, 0.0, 1.0 - e1])


def bloch_stepper(t1, t2, f0, tr, te, flip, n_c, n_warm, n_rec, m0=1.0 + 0j):
    a_te, b_te = free(te, t1, t2, f0)
    a_rest, b_rest = free(tr - te, t1, t2, f0)
    m = np.array([0.0, 0.0, 1.0])
    out = []
    for n in range(n_warm + n_rec):
        phi = rf_phase(n, n_c)
        m = rot_z(phi) @ rot_x(flip) @ rot_z(-phi) @ m
        m = a_te @ m + b_te
        if n >= n_warm:
            out.append((m[0] + 1j * m[1]) * np.exp(-1j * phi))
        m = a_rest @ m + b_rest
    return complex(m0) * np.array(out)


def naive_voxel_signal(t1, t2, f0, offsets, weights, tr, te, flip, n_c, n_warm, m0=1.0):
    total = np.zeros(n_c, dtype=np.complex128)
    for f, w in zip(offsets, weights):
        total += w * bloch_stepper(t1, t2, f0 + f, tr, te, flip, n_c, n_warm, n_c)
    return m0 * total


def dense_operator(apply, in_shape, dtype=np.complex128) -> np.ndarray:
    """Column-by-column matrix of a linear map."""
    n = int(np.prod(in_shape))
    cols = []
    for j in range(n):
        e = np.zeros(n, dtype=dtype)
        e[j] = 1.0
        cols.append(np.asarray(apply(e.reshape(in_shape))).ravel())
    return np.stack(cols, axis=1)


def brute_force_ls(v, raw_atoms):
    """min over atoms of ||v - c phi||^2 with per-atom least-squares c."""
    best = (np.inf, -1, 0j)
    for j, phi in enumerate(raw_atoms):
        c = np.vdot(phi, v) / np.vdot(phi, phi)
        r = np.linalg.norm(v - c * phi) ** 2
        if r < best[0]:
            best = (r, j, c)
    return best


def svt_full(x, thresh):
    u, s, vh = np.linalg.svd(x, full_matrices=True)
    k = s.size
    s2 = np.maximum(s - thresh, 0)
    return u[:, :k] @ np.diag(s2) @ vh[:k, :]


def cauchy_mass(gamma, f_max, n=200001):
    """Trapezoid integral of the Cauchy density over [-f_max, f_max]."""
    f = np.linspace(-f_max, f_max, n)
    p = gamma / (np.pi * (gamma**2 + f**2))
    return float(np.sum((p[1:] + p[:-1]) * np.diff(f)) / 2)
