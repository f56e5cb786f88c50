"""Reconstructors for one slow-time set of ``n_c`` fast-time images.

* OSSIMM: alternate a voxel-wise manifold projection with a few CG steps on
  ``1/2 ||A X - y||^2 + beta ||X - M||_F^2``.
* Low rank: POGM on ``1/2 ||A X - y||^2 + alpha ||X||_*`` with function-value
  restart.
* cgSENSE: CG on ``(A'A + lambda I) X = A'y``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .encode import EncodingOp, KSpaceData, SamplingPattern, SensitivityMaps
from .manifold import Dictionary
from .quantify import QuantMaps, project

log = logging.getLogger(__name__)

RANK_CUTOFF = 1e-3


@dataclass
class OssimmConfig:
    beta: float | None = None  # None: auto_beta from sigma(A) and kappa_target
    n_outer: int = 4
    n_cg: int = 2
    kappa_target: float = 15.0

    def __post_init__(self):
        if self.n_outer < 1 or self.n_cg < 1:
            raise ValueError("n_outer and n_cg must be >= 1")
        if not self.kappa_target > 1:
            raise ValueError("kappa_target must exceed 1")
        if self.beta is not None and self.beta < 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")


@dataclass
class LowRankConfig:
    alpha: float | None = None  # None: auto_alpha sweep toward rank_target
    n_pogm: int = 15
    rank_target: int = 4

    def __post_init__(self):
        if self.n_pogm < 1:
            raise ValueError("n_pogm must be >= 1")
        if self.alpha is not None and self.alpha < 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")


@dataclass
class ReconResult:
    x_hat: np.ndarray
    cost_trace: np.ndarray
    maps: QuantMaps | None = None
    info: dict = field(default_factory=dict)


class SweepError(RuntimeError):
    """Regularization sweep could not bracket its target."""

    def __init__(self, msg, trace):
        super().__init__(f"{msg}; sweep trace (alpha, rank): {trace}")
        self.trace = trace


def _op(y: KSpaceData, sens: SensitivityMaps) -> EncodingOp:
    return EncodingOp(sens, y.pattern)


def _start(x0, op: EncodingOp):
    if x0 is None:
        return np.zeros(op.image_shape, dtype=np.complex128)
    x0 = np.array(x0, dtype=np.complex128)
    if x0.shape != op.image_shape:
        raise ValueError(f"x0 must be {op.image_shape}, got {x0.shape}")
    return x0


def _vdot(a, b) -> float:
    return float(np.vdot(a, b).real)


def conjugate_gradient(normal: Callable, b, x0, n_iters: int, callback: Callable | None = None,
                       rtol: float = 1e-12):
    """Plain CG for a Hermitian positive (semi)definite operator.

    Returns the iterate and the residual norms ``||b - normal(x_k)||``
    (including k = 0), from the recursively updated residual. ``callback``
    sees every iterate, the starting point included. Iteration stops once
    the residual falls below ``rtol * ||b||``; past that point a singular
    operator would amplify rounding in its null space.
    """
    x = np.array(x0, dtype=np.complex128)
    r = b - normal(x)
    p = r.copy()
    rr = _vdot(r, r)
    history = [math.sqrt(rr)]
    stop = (rtol * float(np.linalg.norm(b))) ** 2
    if callback is not None:
        callback(x)
    for _ in range(n_iters):
        if rr <= stop:
            break
        q = normal(p)
        pq = _vdot(p, q)
        if pq <= 0.0:
            break
        a = rr / pq
        x += a * p
        r -= a * q
        rr_new = _vdot(r, r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        history.append(math.sqrt(rr))
        if callback is not None:
            callback(x)
    return x, np.asarray(history)


def auto_beta(sigma_a: float, kappa_target: float) -> float:
    """beta giving surrogate condition number (sigma^2 + 2 beta) / (2 beta) = kappa."""
    if not sigma_a > 0:
        raise ValueError("sigma_a must be positive")
    if not kappa_target > 1:
        raise ValueError(f"kappa_target must exceed 1, got {kappa_target}")
    return sigma_a**2 / (2.0 * (kappa_target - 1.0))


def reconstruct_ossimm(y: KSpaceData, sens: SensitivityMaps, d: Dictionary,
                       cfg: OssimmConfig | None = None, x0=None,
                       sigma_a: float | None = None) -> ReconResult:
    cfg = cfg or OssimmConfig()
    op = _op(y, sens)
    if op.pattern.n_frames != d.n_c:
        raise ValueError(f"pattern has {op.pattern.n_frames} frames, dictionary n_c={d.n_c}")
    info = {}
    beta = cfg.beta
    if beta is None:
        sigma_a = op.spectral_norm() if sigma_a is None else sigma_a
        beta = auto_beta(sigma_a, cfg.kappa_target)
        info["sigma_a"] = sigma_a
        log.info("auto beta = %.6g from sigma(A) = %.6g, kappa = %g",
                 beta, sigma_a, cfg.kappa_target)
    if beta < 0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    info["beta"] = beta
    x = _start(x0, op)
    aty = op.adjoint(y.samples)

    def normal(v):
        return op.normal(v) + (2.0 * beta) * v

    def cost(v, maps):
        r = op.forward(v) - y.samples
        return 0.5 * _vdot(r, r) + beta * float(np.sum(maps.residual**2))

    costs = []
    for _ in range(cfg.n_outer):
        proj, maps = project(x, d)
        costs.append(cost(x, maps))
        x, _ = conjugate_gradient(normal, aty + (2.0 * beta) * proj, x, cfg.n_cg)
    _, maps = project(x, d)
    costs.append(cost(x, maps))
    return ReconResult(x, np.asarray(costs), maps, info)


# --------------------------------------------------------------------------
# low rank
# --------------------------------------------------------------------------


def svt(x, thresh: float):
    """Singular-value soft thresholding (prox of ``thresh * ||.||_*``).

    Returns the result and its singular values.
    """
    u, s, vh = np.linalg.svd(x, full_matrices=False)
    s = np.maximum(s - thresh, 0.0)
    return (u * s) @ vh, s


def numerical_rank(x, rel: float = RANK_CUTOFF) -> int:
    s = np.linalg.svd(x, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rel * s[0]))


def pogm_restart(x0, data_term: Callable, alpha: float, lip: float, n_iters: int):
    """POGM for ``f + alpha ||.||_*`` with function-value restart.

    ``data_term(x)`` returns ``(f(x), grad f(x))``. When a POGM step would
    raise the composite cost, momentum is reset and the step is replaced by a
    proximal-gradient step from the previous iterate, so the recorded cost
    never increases.
    """
    x_old = np.array(x0, dtype=np.complex128)
    f_old, g_old = data_term(x_old)
    cost_old = f_old + alpha * float(np.linalg.svd(x_old, compute_uv=False).sum())
    u_old = z_old = x_old
    t_old, zeta_old = 1.0, 1.0
    trace = [cost_old]
    restarts = 0
    for it in range(1, n_iters + 1):
        u_new = x_old - g_old / lip
        root = 8.0 if it == n_iters else 4.0
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + root * t_old**2))
        b = (t_old - 1.0) / t_new
        g = t_old / t_new
        z_new = (u_new + b * (u_new - u_old) + g * (u_new - x_old)
                 - b * (x_old - z_old) / (lip * zeta_old))
        zeta_new = (1.0 + b + g) / lip
        x_new, s = svt(z_new, alpha * zeta_new)
        f_new, g_new = data_term(x_new)
        cost_new = f_new + alpha * float(s.sum())
        if cost_new > cost_old:
            restarts += 1
            x_new, s = svt(u_new, alpha / lip)
            f_new, g_new = data_term(x_new)
            cost_new = f_new + alpha * float(s.sum())
            t_new, zeta_new = 1.0, 1.0 / lip
            z_new = x_new
        u_old, z_old, x_old = u_new, z_new, x_new
        t_old, zeta_old = t_new, zeta_new
        f_old, g_old, cost_old = f_new, g_new, cost_new
        trace.append(cost_new)
    return x_old, np.asarray(trace), restarts


def _lowrank_with(op: EncodingOp, y: KSpaceData, alpha: float, n_pogm: int, lip: float, x0):
    def data_term(v):
        r = op.forward(v) - y.samples
        return 0.5 * _vdot(r, r), op.adjoint(r)

    return pogm_restart(x0, data_term, alpha, lip, n_pogm)


def reconstruct_lowrank(y: KSpaceData, sens: SensitivityMaps, cfg: LowRankConfig | None = None,
                        x0=None, sigma_a: float | None = None) -> ReconResult:
    cfg = cfg or LowRankConfig()
    op = _op(y, sens)
    sigma_a = op.spectral_norm() if sigma_a is None else sigma_a
    lip = sigma_a**2
    x0 = _start(x0, op)
    info = {"sigma_a": sigma_a}
    alpha = cfg.alpha
    if alpha is None:
        alpha = auto_alpha(y, sens, cfg, x0, sigma_a=sigma_a)
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    x, trace, restarts = _lowrank_with(op, y, alpha, cfg.n_pogm, lip, x0)
    info.update(alpha=alpha, restarts=restarts, rank=numerical_rank(x))
    return ReconResult(x, trace, None, info)


def auto_alpha(y: KSpaceData, sens: SensitivityMaps, cfg: LowRankConfig | None = None, x0=None,
               sigma_a: float | None = None, max_iter: int = 40) -> float:
    """Bisect alpha (log scale) until the numerical rank is rank_target +/- 1."""
    cfg = cfg or LowRankConfig()
    op = _op(y, sens)
    if not 1 <= cfg.rank_target <= op.pattern.n_frames:
        raise ValueError(f"rank_target must be in [1, {op.pattern.n_frames}]")
    sigma_a = op.spectral_norm() if sigma_a is None else sigma_a
    lip = sigma_a**2
    x0 = _start(x0, op)
    trace = []

    def rank_at(alpha):
        x, _, _ = _lowrank_with(op, y, alpha, cfg.n_pogm, lip, x0)
        r = numerical_rank(x)
        trace.append((float(alpha), r))
        return r

    aty = op.adjoint(y.samples)
    s_top = max(np.linalg.svd(aty, compute_uv=False)[0],
                lip * np.linalg.svd(x0, compute_uv=False)[0])
    hi = 2.0 * s_top if s_top > 0 else 1.0
    for _ in range(20):
        if rank_at(hi) == 0:
            break
        hi *= 4.0
    else:
        raise SweepError("could not reach rank 0", trace)
    lo = hi * 1e-8
    r_lo = rank_at(lo)
    if abs(r_lo - cfg.rank_target) <= 1:
        return lo
    if r_lo < cfg.rank_target:
        raise SweepError(f"rank {r_lo} at the smallest alpha is below target "
                         f"{cfg.rank_target}", trace)
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        r = rank_at(mid)
        if abs(r - cfg.rank_target) <= 1:
            log.info("auto alpha = %.6g (rank %d)", mid, r)
            return mid
        if r > cfg.rank_target:
            lo = mid
        else:
            hi = mid
    raise SweepError(f"no alpha with rank {cfg.rank_target} +/- 1", trace)


# --------------------------------------------------------------------------
# cgSENSE and initialization
# --------------------------------------------------------------------------


def reconstruct_cgsense(y: KSpaceData, sens: SensitivityMaps, lam: float | None = None,
                        n_iters: int = 19, x0=None, sigma_a: float | None = None) -> ReconResult:
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    op = _op(y, sens)
    info = {}
    if lam is None:
        sigma_a = op.spectral_norm() if sigma_a is None else sigma_a
        lam = 1e-3 * sigma_a**2
        info["sigma_a"] = sigma_a
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    info["lambda"] = lam
    x = _start(x0, op)
    costs = []

    def normal(v):
        return op.normal(v) + lam * v

    def record(v):
        r = op.forward(v) - y.samples
        costs.append(0.5 * _vdot(r, r) + 0.5 * lam * _vdot(v, v))

    x, res = conjugate_gradient(normal, op.adjoint(y.samples), x, n_iters, record)
    info["residual_norms"] = res
    return ReconResult(x, np.asarray(costs), None, info)


def data_shared_init(window: Sequence[KSpaceData], sens: SensitivityMaps) -> np.ndarray:
    """Densified initial images from pooling k-space across slow-time sets.

    For each fast-time index, samples of that frame from every set in the
    window are pooled; repeated k-locations are averaged (weight 1/count)
    and the pooled frame is reconstructed by the adjoint.
    """
    if len(window) == 0:
        raise ValueError("data-shared window is empty")
    pat0 = window[0].pattern
    nf = pat0.n_frames
    if any(w.pattern.n_frames != nf or w.pattern.shape != pat0.shape for w in window):
        raise ValueError("window sets differ in frame count or image shape")
    if pat0.is_cartesian:
        ny, nx = pat0.shape
        acc = np.zeros((sens.n_coils, nf, ny, nx), dtype=np.complex128)
        count = np.zeros((nf, ny, nx), dtype=np.int64)
        for w in window:
            full = np.zeros_like(acc)
            full[:, w.pattern.masks] = w.samples
            acc += full
            count += w.pattern.masks
        pooled = count > 0
        if not np.all(pooled.reshape(nf, -1).any(axis=1)):
            raise ValueError("empty pooled frame")
        pattern = SamplingPattern.cartesian(pooled)
        data = acc[:, pooled] / count[pooled]
        return EncodingOp(sens, pattern).adjoint(data)
    coords, chunks = [], []
    for t in range(nf):
        kc = np.concatenate([w.pattern.coords[t] for w in window])
        yc = np.concatenate([w.frame(t) for w in window], axis=1)
        if kc.shape[0] == 0:
            raise ValueError("empty pooled frame")
        _, inv, cnt = np.unique(np.round(kc, 9), axis=0, return_inverse=True,
                                return_counts=True)
        coords.append(kc)
        chunks.append(yc / cnt[inv.reshape(-1)])
    pattern = SamplingPattern.nonuniform(coords, pat0.shape)
    return EncodingOp(sens, pattern).adjoint(np.concatenate(chunks, axis=1))
