"""Single-isochromat OSSI steady state.

Magnetization is a real 3-vector started at equilibrium ``(0, 0, 1)`` and
stepped through ``n_warmup_tr`` TRs before recording. Each TR applies an
instantaneous RF rotation about the transverse axis at the quadratic phase
``pi n^2 / n_c``, relaxes/precesses until TE, records the demodulated
transverse component, and relaxes for the rest of the TR. Precession uses
``M_xy(t) = M_xy(0) exp(-t/T2) exp(-i 2 pi f t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True)
class SequenceParams:
    tr_s: float = 0.015
    te_s: float = 0.0027
    flip_rad: float = math.radians(10.0)
    n_c: int = 10
    n_warmup_tr: int = 670

    def __post_init__(self):
        for name in ("tr_s", "te_s", "flip_rad"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not 0.0 < self.te_s < self.tr_s:
            raise ValueError(f"need 0 < te_s < tr_s, got te_s={self.te_s}, tr_s={self.tr_s}")
        # flip 0 is allowed: it is the no-excitation limit
        if not 0.0 <= self.flip_rad < math.pi:
            raise ValueError(f"flip_rad must be in [0, pi), got {self.flip_rad}")
        if int(self.n_c) != self.n_c or self.n_c < 2:
            raise ValueError(f"n_c must be an integer >= 2, got {self.n_c}")
        if int(self.n_warmup_tr) != self.n_warmup_tr or self.n_warmup_tr < 1:
            raise ValueError("n_warmup_tr must be a positive integer")
        if self.n_warmup_tr % self.n_c:
            raise ValueError(
                f"n_warmup_tr ({self.n_warmup_tr}) must be a multiple of n_c ({self.n_c})"
            )

    @property
    def frame_period_s(self) -> float:
        return self.n_c * self.tr_s

    @property
    def phase_schedule(self) -> np.ndarray:
        """One full period of RF phases (length n_c, or 2 n_c for odd n_c)."""
        period = self.n_c if self.n_c % 2 == 0 else 2 * self.n_c
        return np.array([quadratic_phase(n, self.n_c) for n in range(period)])

    def to_dict(self) -> dict:
        return {
            "tr_s": self.tr_s,
            "te_s": self.te_s,
            "flip_rad": self.flip_rad,
            "n_c": self.n_c,
            "n_warmup_tr": self.n_warmup_tr,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SequenceParams":
        d = dict(d)
        if "flip_deg" in d:
            d["flip_rad"] = math.radians(d.pop("flip_deg"))
        return cls(**d)


def warmup_for(tr_s: float, n_c: int, seconds: float = 10.0) -> int:
    """Smallest multiple of ``n_c`` covering ``seconds`` of warm-up."""
    n = math.ceil(seconds / tr_s - 1e-9)
    return n_c * math.ceil(n / n_c)


@dataclass(frozen=True)
class IsochromatParams:
    t1_s: float
    t2_s: float
    f0_hz: float = 0.0
    m0: complex = 1.0

    def __post_init__(self):
        vals = (self.t1_s, self.t2_s, self.f0_hz, complex(self.m0).real, complex(self.m0).imag)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("isochromat parameters must be finite")
        if self.t1_s <= 0 or self.t2_s <= 0:
            raise ValueError("t1_s and t2_s must be positive")
        if self.t2_s > self.t1_s:
            raise ValueError(f"t2_s ({self.t2_s}) must not exceed t1_s ({self.t1_s})")


def quadratic_phase(n: int, n_c: int) -> float:
    """RF phase ``pi n^2 / n_c`` reduced to [0, 2 pi)."""
    if n_c < 2:
        raise ValueError(f"n_c must be >= 2, got {n_c}")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    # exact integer reduction: pi n^2 / n_c mod 2 pi == pi (n^2 mod 2 n_c) / n_c
    return math.pi * ((n * n) % (2 * n_c)) / n_c


def simulate_isochromats(seq: SequenceParams, t1_s: float, t2_s: float, freqs_hz,
                         n_periods: int = 1, backend: str | None = None) -> np.ndarray:
    """Unit-m0 OSSI signals for many off-resonance frequencies at once.

    Returns ``[len(freqs_hz), n_periods * n_c]``.
    """
    if not (t1_s > 0 and t2_s > 0):
        raise ValueError("t1_s and t2_s must be positive")
    freqs = np.asarray(freqs_hz, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(freqs)):
        raise ValueError("off-resonance frequencies must be finite")
    return kernels.bloch_phase_cycled(
        freqs, t1_s, t2_s, seq.tr_s, seq.te_s, seq.flip_rad, seq.phase_schedule,
        seq.n_warmup_tr, n_periods * seq.n_c, backend=backend,
    )


def simulate_isochromat(seq: SequenceParams, iso: IsochromatParams, n_periods: int = 1,
                        backend: str | None = None) -> np.ndarray:
    """Fast-time signal (length ``n_periods * n_c``) of one isochromat."""
    s = simulate_isochromats(seq, iso.t1_s, iso.t2_s, [iso.f0_hz], n_periods, backend)[0]
    return complex(iso.m0) * s
