"""Hot inner loops, each with a numba and a numpy implementation.

The two implementations perform the same floating-point operations in the
same order per element; they agree to rounding (not necessarily bitwise,
since numba may contract multiply-adds).
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import njit, resolve_backend

TWO_PI = 2.0 * math.pi


# --------------------------------------------------------------------------
# Bloch stepping of many isochromats through a phase-cycled steady state
# --------------------------------------------------------------------------


@njit
def _bloch_numba(freqs, t1, t2, tr, te, flip, cph, sph, n_warm, n_rec):
    nf = freqs.shape[0]
    period = cph.shape[0]
    out = np.empty((nf, n_rec), dtype=np.complex128)
    ca = math.cos(flip)
    sa = math.sin(flip)
    e1a = math.exp(-te / t1)
    e2a = math.exp(-te / t2)
    e1b = math.exp(-(tr - te) / t1)
    e2b = math.exp(-(tr - te) / t2)
    for k in range(nf):
        pa = -TWO_PI * freqs[k] * te
        pb = -TWO_PI * freqs[k] * (tr - te)
        cta = math.cos(pa)
        sta = math.sin(pa)
        ctb = math.cos(pb)
        stb = math.sin(pb)
        mx = 0.0
        my = 0.0
        mz = 1.0
        for n in range(n_warm + n_rec):
            p = n % period
            cp = cph[p]
            sp = sph[p]
            # rotation by flip about the transverse axis at angle phi(n)
            x = cp * mx + sp * my
            y = -sp * mx + cp * my
            y2 = ca * y - sa * mz
            z2 = sa * y + ca * mz
            mx = cp * x - sp * y2
            my = sp * x + cp * y2
            mz = z2
            # free precession + relaxation until TE
            x = e2a * (cta * mx - sta * my)
            y = e2a * (sta * mx + cta * my)
            mz = e1a * mz + (1.0 - e1a)
            mx = x
            my = y
            if n >= n_warm:
                out[k, n - n_warm] = complex(mx * cp + my * sp, my * cp - mx * sp)
            # remainder of the TR
            x = e2b * (ctb * mx - stb * my)
            y = e2b * (stb * mx + ctb * my)
            mz = e1b * mz + (1.0 - e1b)
            mx = x
            my = y
    return out


def _bloch_numpy(freqs, t1, t2, tr, te, flip, cph, sph, n_warm, n_rec):
    freqs = np.asarray(freqs, dtype=np.float64)
    period = cph.shape[0]
    out = np.empty((freqs.shape[0], n_rec), dtype=np.complex128)
    ca, sa = math.cos(flip), math.sin(flip)
    e1a, e2a = math.exp(-te / t1), math.exp(-te / t2)
    e1b, e2b = math.exp(-(tr - te) / t1), math.exp(-(tr - te) / t2)
    pa = -TWO_PI * freqs * te
    pb = -TWO_PI * freqs * (tr - te)
    cta, sta = np.cos(pa), np.sin(pa)
    ctb, stb = np.cos(pb), np.sin(pb)
    mx = np.zeros_like(freqs)
    my = np.zeros_like(freqs)
    mz = np.ones_like(freqs)
    for n in range(n_warm + n_rec):
        p = n % period
        cp, sp = cph[p], sph[p]
        x = cp * mx + sp * my
        y = -sp * mx + cp * my
        y2 = ca * y - sa * mz
        z2 = sa * y + ca * mz
        mx = cp * x - sp * y2
        my = sp * x + cp * y2
        mz = z2
        x = e2a * (cta * mx - sta * my)
        y = e2a * (sta * mx + cta * my)
        mz = e1a * mz + (1.0 - e1a)
        mx, my = x, y
        if n >= n_warm:
            j = n - n_warm
            out[:, j].real = mx * cp + my * sp
            out[:, j].imag = my * cp - mx * sp
        x = e2b * (ctb * mx - stb * my)
        y = e2b * (stb * mx + ctb * my)
        mz = e1b * mz + (1.0 - e1b)
        mx, my = x, y
    return out


def bloch_phase_cycled(freqs, t1, t2, tr, te, flip, phases, n_warm, n_rec, backend=None):
    """Unit-m0 receiver-demodulated transverse signal at TE for each frequency.

    ``phases`` is one period of the RF phase schedule; TR ``n`` uses
    ``phases[n % len(phases)]``. Returns ``[len(freqs), n_rec]`` complex.
    """
    freqs = np.ascontiguousarray(freqs, dtype=np.float64).reshape(-1)
    phases = np.asarray(phases, dtype=np.float64)
    cph = np.ascontiguousarray(np.cos(phases))
    sph = np.ascontiguousarray(np.sin(phases))
    args = (freqs, float(t1), float(t2), float(tr), float(te), float(flip), cph, sph,
            int(n_warm), int(n_rec))
    if resolve_backend(backend) == "numba":
        return _bloch_numba(*args)
    return _bloch_numpy(*args)


# --------------------------------------------------------------------------
# Exact nonuniform DFT (separable phasors), orthonormal scaling
# --------------------------------------------------------------------------


@njit
def _nudft_forward_numba(img, kx, ky):
    ny, nx = img.shape
    ns = kx.shape[0]
    scale = 1.0 / math.sqrt(ny * nx)
    out = np.empty(ns, dtype=np.complex128)
    ex = np.empty(nx, dtype=np.complex128)
    for s in range(ns):
        for ix in range(nx):
            a = -TWO_PI * kx[s] * ix / nx
            ex[ix] = complex(math.cos(a), math.sin(a))
        acc = 0.0j
        for iy in range(ny):
            a = -TWO_PI * ky[s] * iy / ny
            ey = complex(math.cos(a), math.sin(a))
            row = 0.0j
            for ix in range(nx):
                row += ex[ix] * img[iy, ix]
            acc += ey * row
        out[s] = acc * scale
    return out


@njit
def _nudft_adjoint_numba(data, kx, ky, ny, nx):
    ns = kx.shape[0]
    scale = 1.0 / math.sqrt(ny * nx)
    img = np.zeros((ny, nx), dtype=np.complex128)
    ex = np.empty(nx, dtype=np.complex128)
    for s in range(ns):
        d = data[s] * scale
        for ix in range(nx):
            a = TWO_PI * kx[s] * ix / nx
            ex[ix] = complex(math.cos(a), math.sin(a))
        for iy in range(ny):
            a = TWO_PI * ky[s] * iy / ny
            w = complex(math.cos(a), math.sin(a)) * d
            for ix in range(nx):
                img[iy, ix] += w * ex[ix]
    return img


def _phasors(k, n):
    return np.exp(-1j * TWO_PI * np.outer(k, np.arange(n)) / n)


def _nudft_forward_numpy(img, kx, ky):
    ny, nx = img.shape
    ex = _phasors(kx, nx)
    ey = _phasors(ky, ny)
    return np.einsum("sy,yx,sx->s", ey, img, ex) / math.sqrt(ny * nx)


def _nudft_adjoint_numpy(data, kx, ky, ny, nx):
    ex = _phasors(kx, nx).conj()
    ey = _phasors(ky, ny).conj()
    return (ey.T @ (data[:, None] * ex)) / math.sqrt(ny * nx)


def nudft_forward(img, kx, ky, backend=None):
    """Samples of ``sum_r img(r) exp(-i 2 pi k.r)`` at (kx, ky) in cycles/FOV."""
    img = np.ascontiguousarray(img, dtype=np.complex128)
    kx = np.ascontiguousarray(kx, dtype=np.float64)
    ky = np.ascontiguousarray(ky, dtype=np.float64)
    if resolve_backend(backend) == "numba":
        return _nudft_forward_numba(img, kx, ky)
    return _nudft_forward_numpy(img, kx, ky)


def nudft_adjoint(data, kx, ky, shape, backend=None):
    data = np.ascontiguousarray(data, dtype=np.complex128)
    kx = np.ascontiguousarray(kx, dtype=np.float64)
    ky = np.ascontiguousarray(ky, dtype=np.float64)
    ny, nx = shape
    if resolve_backend(backend) == "numba":
        return _nudft_adjoint_numba(data, kx, ky, int(ny), int(nx))
    return _nudft_adjoint_numpy(data, kx, ky, int(ny), int(nx))
