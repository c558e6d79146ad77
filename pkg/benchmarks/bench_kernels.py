"""Compare the compiled and pure-numpy batch simulators.

Usage::

    python3 benchmarks/bench_kernels.py [--n 10000] [--repeat 3]

Runs a surface-style campaign batch through both kernels, reports wall time
per path and the largest disagreement between them.
"""

import argparse
import time

import numpy as np

from hirul import _kernels
from hirul.cell import CellParams
from hirul.montecarlo import _initial_states, sample_inputs
from hirul.presets import sampling_preset


def _inputs(n, seed):
    spec = sampling_preset("fig3", seed, n_samples=n)
    s = sample_inputs(spec, np.arange(n))
    params = CellParams()
    cap, _ = _initial_states(s["initial_efc"], params)
    return (np.zeros(n), cap, s["initial_efc"], s["soc_min"], s["soc_max"], s["i_charge"], s["i_discharge"]), params.kernel_vector()


def _time(fn, args, p, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args, p)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=10000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=1)
    a = ap.parse_args(argv)

    args, p = _inputs(a.n, a.seed)
    t_np, (f_np, i_np) = _time(_kernels.simulate_batch_numpy, args, p, a.repeat)
    print(f"numpy  : {t_np:8.3f} s for {a.n} scenarios")
    if not _kernels.HAVE_NUMBA:
        print("numba  : unavailable (or disabled via HIRUL_DISABLE_NUMBA)")
        return
    _kernels.simulate_batch_numba(*(x[:2] for x in args), p)  # compile outside the timing
    t_nb, (f_nb, i_nb) = _time(_kernels.simulate_batch_numba, args, p, a.repeat)
    print(f"numba  : {t_nb:8.3f} s for {a.n} scenarios  (speed-up x{t_np / t_nb:.1f})")
    rel = np.max(np.abs(f_nb[:, 4] - f_np[:, 4]) / f_np[:, 4])
    print(f"max relative RUL difference: {rel:.3e}; half-cycle counts equal: {np.array_equal(i_nb, i_np)}")


if __name__ == "__main__":
    main()
