"""Time the numba and numpy implementations of each hot kernel.

    python benchmarks/bench_kernels.py [--repeat N]

The first numba call (compilation) is excluded. Results go to stdout as a
small table; nothing is written to disk.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ossimm import kernels
from ossimm._accel import HAVE_NUMBA
from ossimm.physics import SequenceParams


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    seq = SequenceParams()
    freqs = np.linspace(-200, 200, 4000)
    phases = seq.phase_schedule
    rng = np.random.default_rng(0)
    img = rng.standard_normal((40, 40)) + 1j * rng.standard_normal((40, 40))
    kx, ky = rng.uniform(-20, 20, 134), rng.uniform(-20, 20, 134)
    data = rng.standard_normal(134) + 1j * rng.standard_normal(134)

    def bloch(backend):
        return lambda: kernels.bloch_phase_cycled(freqs, 1.4, 0.0926, seq.tr_s, seq.te_s,
                                                  seq.flip_rad, phases, seq.n_warmup_tr,
                                                  seq.n_c, backend)

    return {
        "bloch 4000 isochromats": bloch,
        "nudft forward 40x40, 134 samples": lambda b: lambda: kernels.nudft_forward(img, kx, ky, b),
        "nudft adjoint 40x40, 134 samples":
            lambda b: lambda: kernels.nudft_adjoint(data, kx, ky, (40, 40), b),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    backends = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]
    print(f"{'kernel':38s}" + "".join(f"{b:>12s}" for b in backends) + f"{'speedup':>10s}")
    for name, make in cases().items():
        row = {}
        for b in backends:
            fn = make(b)
            fn()  # warm-up, includes numba compilation
            row[b] = _best(fn, args.repeat)
        speed = row["numpy"] / row["numba"] if "numba" in row else float("nan")
        print(f"{name:38s}" + "".join(f"{row[b] * 1e3:10.2f}ms" for b in backends)
              + f"{speed:9.1f}x")


if __name__ == "__main__":
    main()
