"""Newton-Raphson AC power flow in polar coordinates."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .case import (
    BR_B, BR_R, BR_STATUS, BR_X, BS, BUS_I, BUS_TYPE, F_BUS, GEN_BUS, GEN_STATUS, GS, PD, PG, PQ, PV,
    QD, QG, QMAX, QMIN, REF, SHIFT, T_BUS, TAP, VA, VG, VM,
)
from .errors import Diverged, SingularJacobian

logger = logging.getLogger(__name__)


def branch_admittances(case):
    """``(Ybus, Yf, Yt)`` as dense complex arrays (p.u.).

    ``Yf @ V`` and ``Yt @ V`` give branch currents injected at the from and
    to ends.
    """
    nb, nl = case.n_bus, case.n_branch
    idx = case.id_to_index()
    br = case.branch
    on = br[:, BR_STATUS] > 0
    ys = np.zeros(nl, dtype=complex)
    ys[on] = 1.0 / (br[on, BR_R] + 1j * br[on, BR_X])
    bc = np.where(on, br[:, BR_B], 0.0)
    tap = np.where(br[:, TAP] != 0, br[:, TAP], 1.0) * np.exp(1j * np.pi / 180.0 * br[:, SHIFT])
    ytt = ys + 0.5j * bc
    yff = ytt / (tap * np.conj(tap))
    yft = -ys / np.conj(tap)
    ytf = -ys / tap

    f = np.array([idx[int(b)] for b in br[:, F_BUS]], dtype=int)
    t = np.array([idx[int(b)] for b in br[:, T_BUS]], dtype=int)
    rows = np.arange(nl)
    Yf = np.zeros((nl, nb), dtype=complex)
    Yt = np.zeros((nl, nb), dtype=complex)
    np.add.at(Yf, (rows, f), yff)
    np.add.at(Yf, (rows, t), yft)
    np.add.at(Yt, (rows, f), ytf)
    np.add.at(Yt, (rows, t), ytt)
    Cf = np.zeros((nl, nb))
    Ct = np.zeros((nl, nb))
    Cf[rows, f] = 1.0
    Ct[rows, t] = 1.0
    ysh = (case.bus[:, GS] + 1j * case.bus[:, BS]) / case.base_mva
    Ybus = Cf.T @ Yf + Ct.T @ Yt + np.diag(ysh)
    return Ybus, Yf, Yt


def build_ybus(case):
    """Bus admittance matrix (sparse CSR, p.u.) from the pi branch model with taps, shifts and shunts."""
    return sp.csr_matrix(branch_admittances(case)[0])


def branch_endpoints(case):
    idx = case.id_to_index()
    f = np.array([idx[int(b)] for b in case.branch[:, F_BUS]], dtype=int)
    t = np.array([idx[int(b)] for b in case.branch[:, T_BUS]], dtype=int)
    return f, t


def gen_incidence(case):
    """Bus-by-generator incidence (in-service generators only)."""
    idx = case.id_to_index()
    C = np.zeros((case.n_bus, case.n_gen))
    for k, b in enumerate(case.gen[:, GEN_BUS]):
        if case.gen[k, GEN_STATUS] > 0:
            C[idx[int(b)], k] = 1.0
    return C


def battery_incidence(case):
    idx = case.id_to_index()
    C = np.zeros((case.n_bus, len(case.batteries)))
    for k, d in enumerate(case.batteries):
        C[idx[int(d.bus)], k] = 1.0
    return C


def battery_injection_pu(case):
    """Net battery injection per bus in p.u. (kW / 1000 / baseMVA)."""
    if not case.batteries:
        return np.zeros(case.n_bus)
    p = np.array([d.p_b_kw for d in case.batteries]) / 1000.0 / case.base_mva
    return battery_incidence(case) @ p


def make_sbus(case, pg=None, qg=None):
    """Specified complex injection per bus (p.u.)."""
    pg = case.gen[:, PG] if pg is None else pg
    qg = case.gen[:, QG] if qg is None else qg
    Cg = gen_incidence(case)
    s = Cg @ (pg + 1j * qg) - (case.bus[:, PD] + 1j * case.bus[:, QD])
    return s / case.base_mva + battery_injection_pu(case)


def dsbus_dv(Ybus, V):
    """Partial derivatives of bus injections with respect to angle and magnitude."""
    I = Ybus @ V
    Vn = V / np.abs(V)
    dS_dVm = np.diag(V) @ np.conj(Ybus @ np.diag(Vn)) + np.diag(np.conj(I) * Vn)
    dS_dVa = 1j * np.diag(V) @ np.conj(np.diag(I) - Ybus @ np.diag(V))
    return dS_dVa, dS_dVm


def mismatch(Ybus, V, sbus, pv, pq):
    mis = V * np.conj(Ybus @ V) - sbus
    return np.concatenate([mis[pv].real, mis[pq].real, mis[pq].imag])


def jacobian(Ybus, V, pv, pq):
    """Analytic Jacobian of :func:`mismatch` w.r.t. ``[Va[pv], Va[pq], Vm[pq]]``."""
    dS_dVa, dS_dVm = dsbus_dv(Ybus, V)
    pvpq = np.concatenate([pv, pq])
    return np.block([
        [dS_dVa[np.ix_(pvpq, pvpq)].real, dS_dVm[np.ix_(pvpq, pq)].real],
        [dS_dVa[np.ix_(pq, pvpq)].imag, dS_dVm[np.ix_(pq, pq)].imag],
    ])


@dataclass
class PowerFlowSolution:
    """Converged operating point; flows in MW/MVAr, angles in radians."""

    bus_ids: np.ndarray
    vm: np.ndarray
    va: np.ndarray
    pf: np.ndarray
    qf: np.ndarray
    pt: np.ndarray
    qt: np.ndarray
    pg: np.ndarray
    qg: np.ndarray
    slack_p: float
    slack_q: float
    iterations: int
    max_mismatch: float
    converged: bool = True

    @property
    def voltage(self):
        return self.vm * np.exp(1j * self.va)

    def bus_csv(self, comment=None):
        buf = io.StringIO()
        if comment:
            buf.write(f"# {comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bus", "vm_pu", "va_rad"])
        for b, m, a in zip(self.bus_ids, self.vm, self.va):
            w.writerow([int(b), repr(float(m)), repr(float(a))])
        return buf.getvalue()

    def branch_csv(self, comment=None):
        buf = io.StringIO()
        if comment:
            buf.write(f"# {comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["branch", "pf_mw", "qf_mvar", "pt_mw", "qt_mvar"])
        for k, row in enumerate(zip(self.pf, self.qf, self.pt, self.qt)):
            w.writerow([k + 1] + [repr(float(v)) for v in row])
        return buf.getvalue()


def _newton(Ybus, V, sbus, pv, pq, tol, max_iter):
    """Returns ``(V, evaluations, max_mismatch, converged)``.

    The count includes the evaluation at the starting point, so a start that
    already satisfies the tolerance reports one.
    """
    pvpq = np.concatenate([pv, pq])
    npvpq = pvpq.size
    Va, Vm = np.angle(V), np.abs(V)
    F = mismatch(Ybus, V, sbus, pv, pq)
    norm = np.max(np.abs(F)) if F.size else 0.0
    evals = 1
    while norm > tol and evals <= max_iter:
        J = jacobian(Ybus, V, pv, pq)
        try:
            dx = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            raise SingularJacobian("power-flow Jacobian is singular") from None
        if not np.all(np.isfinite(dx)):
            raise SingularJacobian("power-flow Jacobian is singular")
        Va[pvpq] += dx[:npvpq]
        Vm[pq] += dx[npvpq:]
        V = Vm * np.exp(1j * Va)
        F = mismatch(Ybus, V, sbus, pv, pq)
        norm = np.max(np.abs(F))
        evals += 1
    return V, evals, norm, norm <= tol


def _bus_types(case):
    t = case.bus[:, BUS_TYPE].astype(int).copy()
    # PV buses without an in-service generator act as PQ buses
    has_gen = gen_incidence(case).sum(axis=1) > 0
    t[(t == PV) & ~has_gen] = PQ
    return t


def initial_voltage(case, flat_start=True):
    """Start vector: flat angles and unit magnitudes at load buses; generator set-points elsewhere."""
    if flat_start:
        vm = np.ones(case.n_bus)
        va = np.zeros(case.n_bus)
    else:
        vm = case.bus[:, VM].copy()
        va = np.deg2rad(case.bus[:, VA] - case.bus[case.ref_index, VA])
    idx = case.id_to_index()
    types = _bus_types(case)
    for k in range(case.n_gen):
        if case.gen[k, GEN_STATUS] > 0:
            b = idx[int(case.gen[k, GEN_BUS])]
            if types[b] in (PV, REF):
                vm[b] = case.gen[k, VG]
    return vm * np.exp(1j * va)


def solve_powerflow(case, tol=1e-8, max_iter=20, flat_start=True, enforce_q_limits=False):
    """Solve the AC power flow.

    Parameters
    ----------
    tol : float
        Max absolute P/Q mismatch in p.u.
    max_iter : int
        Newton step cap.
    enforce_q_limits : bool
        Convert PV buses that violate generator Q limits to PQ and re-solve.

    Raises
    ------
    Diverged
        Step cap reached; carries the final mismatch.
    SingularJacobian
    """
    Ybus, Yf, Yt = branch_admittances(case)
    types = _bus_types(case)
    ref = case.ref_index
    V = initial_voltage(case, flat_start)
    qg = case.gen[:, QG].copy()
    fixed_q = np.zeros(case.n_gen, dtype=bool)
    total_evals = 0
    Cg = gen_incidence(case)
    while True:
        pv = np.flatnonzero(types == PV)
        pq = np.flatnonzero((types == PQ) | (types == 4))
        sbus = make_sbus(case, qg=qg)
        V, evals, norm, ok = _newton(Ybus, V, sbus, pv, pq, tol, max_iter)
        total_evals += evals
        if not ok:
            raise Diverged(f"no convergence in {max_iter} iterations (mismatch {norm:.3e} p.u.)",
                           mismatch=norm, iterations=total_evals)
        pg, qg_new = _gen_output(case, Ybus, V, Cg, ref, types, fixed_q, qg)
        if not enforce_q_limits:
            qg = qg_new
            break
        on = case.gen[:, GEN_STATUS] > 0
        gen_bus = np.array([case.id_to_index()[int(b)] for b in case.gen[:, GEN_BUS]])
        over = on & ~fixed_q & (qg_new > case.gen[:, QMAX] + 1e-9) & (types[gen_bus] == PV)
        under = on & ~fixed_q & (qg_new < case.gen[:, QMIN] - 1e-9) & (types[gen_bus] == PV)
        if not (over.any() or under.any()):
            qg = qg_new
            break
        qg = qg_new.copy()
        qg[over] = case.gen[over, QMAX]
        qg[under] = case.gen[under, QMIN]
        fixed_q |= over | under
        for k in np.flatnonzero(over | under):
            types[gen_bus[k]] = PQ
        logger.debug("switched %d PV bus(es) to PQ on Q limits", int((over | under).sum()))

    f, t = branch_endpoints(case)
    sf = V[f] * np.conj(Yf @ V) * case.base_mva
    st = V[t] * np.conj(Yt @ V) * case.base_mva
    s_ref = (V[ref] * np.conj(Ybus[ref] @ V)) * case.base_mva
    s_ref = s_ref + case.bus[ref, PD] + 1j * case.bus[ref, QD] - battery_injection_pu(case)[ref] * case.base_mva
    return PowerFlowSolution(
        bus_ids=case.bus[:, BUS_I].astype(int), vm=np.abs(V), va=np.angle(V),
        pf=sf.real, qf=sf.imag, pt=st.real, qt=st.imag, pg=pg, qg=qg,
        slack_p=float(s_ref.real), slack_q=float(s_ref.imag),
        iterations=total_evals, max_mismatch=float(norm), converged=True,
    )


def _gen_output(case, Ybus, V, Cg, ref, types, fixed_q, qg_prev):
    """Generator P/Q implied by the solved voltages.

    The slack generators absorb the P balance; Q at voltage-controlled buses
    is split evenly among the bus's generators.
    """
    base = case.base_mva
    s_inj = V * np.conj(Ybus @ V) * base
    s_inj = s_inj + case.bus[:, PD] + 1j * case.bus[:, QD] - battery_injection_pu(case) * base
    pg = case.gen[:, PG].copy()
    qg = qg_prev.copy()
    on = case.gen[:, GEN_STATUS] > 0
    for b in range(case.n_bus):
        gens = np.flatnonzero((Cg[b] > 0) & on)
        if gens.size == 0:
            continue
        if b == ref:
            pg[gens] = s_inj[b].real / gens.size
        if types[b] in (PV, REF):
            free = gens[~fixed_q[gens]]
            if free.size:
                qg[free] = (s_inj[b].imag - qg[gens[fixed_q[gens]]].sum()) / free.size
    qg[~on] = 0.0
    pg[~on] = 0.0
    return pg, qg
