import os
import subprocess
import sys

import numpy as np
import pytest

from hirul import _kernels
from hirul._accel import HAVE_NUMBA
from hirul.cell import CellParams
from hirul.montecarlo import _initial_states, sample_inputs
from hirul.presets import sampling_preset

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed or disabled")


def _batch(n, seed=11):
    params = CellParams()
    s = sample_inputs(sampling_preset("fig5", seed, n_samples=n), np.arange(n))
    cap, _ = _initial_states(s["initial_efc"], params)
    args = (np.zeros(n), cap, s["initial_efc"], s["soc_min"], s["soc_max"], s["i_charge"], s["i_discharge"])
    return args, params.kernel_vector()


class TestBackends:
    @needs_numba
    def test_numba_matches_numpy(self):
        args, p = _batch(300)
        f_nb, i_nb = _kernels.simulate_batch_numba(*args, p)
        f_np, i_np = _kernels.simulate_batch_numpy(*args, p)
        np.testing.assert_array_equal(i_nb, i_np)
        np.testing.assert_allclose(f_nb, f_np, rtol=1e-12, atol=0)

    def test_numpy_statuses(self):
        p = CellParams().kernel_vector()
        f, i = _kernels.simulate_batch_numpy(
            [0.0, 0.0], [2.3, 1.84], [0.0, 1000.0], [0.0, 0.0], [1.0, 1.0], [2.3, 2.3], [2.3, 2.3], p)
        assert list(i[:, 0]) == [_kernels.STATUS_OK, _kernels.STATUS_DEAD]
        assert i[1, 1] == 0
        assert f[1, 4] == 0.0

    def test_numpy_runaway(self):
        p = CellParams(rate_coefficient=-20.0).kernel_vector()
        f, i = _kernels.simulate_batch_numpy([0.0], [2.3], [0.0], [0.0], [1.0], [11.5], [11.5], p)
        assert i[0, 0] == _kernels.STATUS_NONTERMINATING
        assert f[0, 3] > _kernels.GUARD_FACTOR * 1000

    @pytest.mark.parametrize("cap,expected", [(2.3, 0.010), (2.07, 0.015), (1.84, 0.020), (1.5, 0.020), (2.5, 0.010)])
    def test_resistance_clamped(self, cap, expected):
        p = CellParams().kernel_vector()
        assert _kernels.resistance_from_capacity(cap, p) == pytest.approx(expected)
        assert _kernels._resistance_np(np.array([cap]), p)[0] == pytest.approx(expected)


@pytest.mark.parametrize("flag,expected", [("1", "False"), ("", str(HAVE_NUMBA))])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, HIRUL_DISABLE_NUMBA=flag)
    code = (
        "from hirul._accel import HAVE_NUMBA; from hirul.cell import *;"
        "p=CellParams(); r=simulate_to_eol(fresh_state(p), p, OperatingLimits(0,1,2.3,2.3));"
        "print(HAVE_NUMBA, repr(r.final_state.efc))"
    )
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    have, efc = out.stdout.split()
    assert have == expected
    assert float(efc) == pytest.approx(1000.27, abs=0.01)
