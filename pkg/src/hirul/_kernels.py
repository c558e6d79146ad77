"""Hot loops of the cycle-aging simulation.

Two implementations of the batch simulator exist:

* ``simulate_batch_numba`` runs one compiled event loop per scenario;
* ``simulate_batch_numpy`` advances every live scenario by one half-cycle per
  numpy step (lock-step over the batch).

They implement the same arithmetic and agree to floating-point rounding.
``simulate_batch`` picks one according to :mod:`hirul._accel`.

Cell parameters travel as a flat float64 vector (see the ``P_*`` indices) so
the kernels stay free of Python objects.
"""

import math

import numpy as np

from ._accel import HAVE_NUMBA, njit

P_CNOM = 0
P_RBOL = 1
P_REOL = 2
P_EOLFRAC = 3
P_RATED = 4
P_KRATE = 5
P_KSOC = 6
P_DODEXP = 7
N_PARAMS = 8

STATUS_OK = 0
STATUS_DEAD = 1
STATUS_NONTERMINATING = 2

# guard: 10x the rated life in equivalent full cycles
GUARD_FACTOR = 10.0


@njit(cache=True, nogil=True)
def _fade(soc, cap, target, current, s_dod, s_rate, p):
    """Capacity after one half-cycle, plus its throughput (EFC) and duration (h)."""
    c_nom = p[P_CNOM]
    dsoc = abs(target - soc)
    dt = dsoc * cap / current
    d_efc = dsoc * cap / (2.0 * c_nom)
    s_soc = 1.0 + p[P_KSOC] * (0.5 * (soc + target) - 0.5)
    loss = c_nom * (1.0 - p[P_EOLFRAC]) / p[P_RATED] * d_efc * s_dod * s_rate * s_soc
    return cap - loss, d_efc, dt


@njit(cache=True, nogil=True)
def half_cycle(soc, cap, efc, elapsed, target, current, p):
    """Advance one constant-current half-cycle from ``soc`` to ``target``.

    Returns ``(soc, cap, res, efc, elapsed)`` after the move. Degradation is
    applied once, at the end of the half-cycle, using the capacity held at its
    start for both the duration and the throughput.
    """
    s_dod = abs(target - soc) ** p[P_DODEXP]
    s_rate = math.exp(p[P_KRATE] * (current / p[P_CNOM] - 1.0))
    cap, d_efc, dt = _fade(soc, cap, target, current, s_dod, s_rate, p)
    return target, cap, resistance_from_capacity(cap, p), efc + d_efc, elapsed + dt


@njit(cache=True, nogil=True)
def resistance_from_capacity(cap, p):
    c_nom = p[P_CNOM]
    frac = (c_nom - cap) / ((1.0 - p[P_EOLFRAC]) * c_nom)
    res = p[P_RBOL] + (p[P_REOL] - p[P_RBOL]) * frac
    if res < p[P_RBOL]:
        res = p[P_RBOL]
    elif res > p[P_REOL]:
        res = p[P_REOL]
    return res


@njit(cache=True, nogil=True)
def simulate_one(soc, cap, efc, soc_min, soc_max, i_ch, i_dis, p):
    """Cycle between ``soc_min`` and ``soc_max`` until capacity hits end of life.

    Returns ``(status, soc, cap, res, efc, elapsed, n_half)``.
    """
    c_nom = p[P_CNOM]
    eol = p[P_EOLFRAC]
    guard = GUARD_FACTOR * p[P_RATED]
    res = resistance_from_capacity(cap, p)
    elapsed = 0.0
    n_half = 0
    if cap / c_nom <= eol:
        return STATUS_DEAD, soc, cap, res, efc, elapsed, n_half
    charging = soc < soc_max
    # stress factors that stay fixed once the cell cycles the full window
    rate_ch = math.exp(p[P_KRATE] * (i_ch / c_nom - 1.0))
    rate_dis = math.exp(p[P_KRATE] * (i_dis / c_nom - 1.0))
    dod_window = (soc_max - soc_min) ** p[P_DODEXP]
    while True:
        target = soc_max if charging else soc_min
        if n_half == 0:
            s_dod = abs(target - soc) ** p[P_DODEXP]
        else:
            s_dod = dod_window
        if charging:
            cap, d_efc, dt = _fade(soc, cap, target, i_ch, s_dod, rate_ch, p)
        else:
            cap, d_efc, dt = _fade(soc, cap, target, i_dis, s_dod, rate_dis, p)
        soc = target
        efc += d_efc
        elapsed += dt
        n_half += 1
        if cap / c_nom <= eol:
            return STATUS_OK, soc, cap, resistance_from_capacity(cap, p), efc, elapsed, n_half
        if efc > guard:
            return STATUS_NONTERMINATING, soc, cap, resistance_from_capacity(cap, p), efc, elapsed, n_half
        charging = not charging


@njit(cache=True, nogil=True)
def _simulate_batch_compiled(soc, cap, efc, soc_min, soc_max, i_ch, i_dis, p, out_f, out_i):
    for k in range(soc.shape[0]):
        st, s, c, r, e, t, n = simulate_one(soc[k], cap[k], efc[k], soc_min[k], soc_max[k], i_ch[k], i_dis[k], p)
        out_f[k, 0] = s
        out_f[k, 1] = c
        out_f[k, 2] = r
        out_f[k, 3] = e
        out_f[k, 4] = t
        out_i[k, 0] = st
        out_i[k, 1] = n


def _alloc(n):
    return np.empty((n, 5), dtype=np.float64), np.empty((n, 2), dtype=np.int64)


def simulate_batch_numba(soc, cap, efc, soc_min, soc_max, i_ch, i_dis, p):
    """Compiled per-scenario loop. Columns of the float output: soc, cap, res, efc, elapsed."""
    if not HAVE_NUMBA:
        raise RuntimeError("numba is unavailable or disabled")
    args = [np.ascontiguousarray(a, dtype=np.float64) for a in (soc, cap, efc, soc_min, soc_max, i_ch, i_dis)]
    out_f, out_i = _alloc(args[0].shape[0])
    _simulate_batch_compiled(*args, np.ascontiguousarray(p, dtype=np.float64), out_f, out_i)
    return out_f, out_i


def _resistance_np(cap, p):
    c_nom = p[P_CNOM]
    frac = (c_nom - cap) / ((1.0 - p[P_EOLFRAC]) * c_nom)
    return np.clip(p[P_RBOL] + (p[P_REOL] - p[P_RBOL]) * frac, p[P_RBOL], p[P_REOL])


def simulate_batch_numpy(soc, cap, efc, soc_min, soc_max, i_ch, i_dis, p):
    """Lock-step vectorized simulation; same contract as :func:`simulate_batch_numba`."""
    p = np.asarray(p, dtype=np.float64)
    soc = np.array(soc, dtype=np.float64)
    cap = np.array(cap, dtype=np.float64)
    efc = np.array(efc, dtype=np.float64)
    soc_min = np.asarray(soc_min, dtype=np.float64)
    soc_max = np.asarray(soc_max, dtype=np.float64)
    i_ch = np.asarray(i_ch, dtype=np.float64)
    i_dis = np.asarray(i_dis, dtype=np.float64)
    n = soc.shape[0]
    c_nom = p[P_CNOM]
    eol = p[P_EOLFRAC]
    guard = GUARD_FACTOR * p[P_RATED]
    k_loss = c_nom * (1.0 - eol) / p[P_RATED]

    out_f, out_i = _alloc(n)
    elapsed = np.zeros(n)
    n_half = np.zeros(n, dtype=np.int64)
    res = _resistance_np(cap, p)

    dead = cap / c_nom <= eol
    out_f[dead] = np.column_stack([soc[dead], cap[dead], res[dead], efc[dead], elapsed[dead]])
    out_i[dead, 0] = STATUS_DEAD
    out_i[dead, 1] = 0

    idx = np.flatnonzero(~dead)
    soc, cap, efc, elapsed, n_half = soc[idx], cap[idx], efc[idx], elapsed[idx], n_half[idx]
    lo, hi, ich, idis = soc_min[idx], soc_max[idx], i_ch[idx], i_dis[idx]
    charging = soc < hi

    while idx.size:
        target = np.where(charging, hi, lo)
        current = np.where(charging, ich, idis)
        dsoc = np.abs(target - soc)
        dt = dsoc * cap / current
        d_efc = dsoc * cap / (2.0 * c_nom)
        s_dod = dsoc ** p[P_DODEXP]
        s_rate = np.exp(p[P_KRATE] * (current / c_nom - 1.0))
        s_soc = 1.0 + p[P_KSOC] * (0.5 * (soc + target) - 0.5)
        cap = cap - k_loss * d_efc * s_dod * s_rate * s_soc
        soc = target
        efc = efc + d_efc
        elapsed = elapsed + dt
        n_half += 1

        done = cap / c_nom <= eol
        runaway = ~done & (efc > guard)
        fin = done | runaway
        if fin.any():
            k = idx[fin]
            out_f[k, 0] = soc[fin]
            out_f[k, 1] = cap[fin]
            out_f[k, 2] = _resistance_np(cap[fin], p)
            out_f[k, 3] = efc[fin]
            out_f[k, 4] = elapsed[fin]
            out_i[k, 0] = np.where(done[fin], STATUS_OK, STATUS_NONTERMINATING)
            out_i[k, 1] = n_half[fin]
            keep = ~fin
            idx = idx[keep]
            soc, cap, efc, elapsed, n_half = soc[keep], cap[keep], efc[keep], elapsed[keep], n_half[keep]
            lo, hi, ich, idis, charging = lo[keep], hi[keep], ich[keep], idis[keep], charging[keep]
        charging = ~charging
    return out_f, out_i


def simulate_batch(soc, cap, efc, soc_min, soc_max, i_ch, i_dis, p):
    if HAVE_NUMBA:
        return simulate_batch_numba(soc, cap, efc, soc_min, soc_max, i_ch, i_dis, p)
    return simulate_batch_numpy(soc, cap, efc, soc_min, soc_max, i_ch, i_dis, p)
