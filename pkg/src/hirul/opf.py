"""AC optimal power flow with battery injections, solved by a primal-dual interior-point method.

Decision vector (all p.u. on ``base_mva``, angles in radians)::

    x = [Va (nb), Vm (nb), Pg (ng), Qg (ng), Pb (nbat)]

Equalities are the nodal P and Q balances plus any variable whose bounds
coincide (the reference angle, idle batteries). Inequalities are squared
apparent-power limits at both branch ends and the remaining finite variable
bounds. Batteries inject active power only and carry no cost.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .case import (
    BUS_I, GEN_BUS, GEN_STATUS, MODEL, NCOST, COST, PD, PMAX, PMIN, POLYNOMIAL, QD, QMAX, QMIN,
    RATE_A, BR_STATUS, VA, VMAX, VMIN, attach_batteries,
)
from .errors import MissingConstraints, OpfInfeasible, ParamError, SingularKkt
from .powerflow import branch_admittances, branch_endpoints, battery_incidence, dsbus_dv, gen_incidence

logger = logging.getLogger(__name__)

CASE1 = "case1"
CASE2 = "case2"
STEP_TO_BOUNDARY = 0.99995
CENTERING = 0.1
ALPHA_MIN = 1e-8


# ---------------------------------------------------------------- derivatives

def dsbr_dv(Ybr, Cbr, V):
    """Branch-end complex power and its derivatives w.r.t. angle and magnitude."""
    Ibr = Ybr @ V
    Vbr = Cbr @ V
    Vn = V / np.abs(V)
    S = Vbr * np.conj(Ibr)
    dS_dVa = 1j * (np.conj(Ibr)[:, None] * Cbr * V[None, :] - Vbr[:, None] * np.conj(Ybr * V[None, :]))
    dS_dVm = Vbr[:, None] * np.conj(Ybr * Vn[None, :]) + np.conj(Ibr)[:, None] * Cbr * Vn[None, :]
    return S, dS_dVa, dS_dVm


def d2sbus_dv2(Ybus, V, lam):
    """Second derivatives of ``lam . S(V)`` (complex) in ``(Va, Vm)`` blocks."""
    Ibus = Ybus @ V
    A = np.diag(lam * V)
    B = Ybus * V[None, :]
    C = A @ np.conj(B)
    D = Ybus.conj().T * V[None, :]
    E = np.diag(np.conj(V)) @ (D * lam[None, :] - np.diag(D @ lam))
    F = C - A * np.conj(Ibus)[None, :]
    G = np.diag(1.0 / np.abs(V))
    Gaa = E + F
    Gva = 1j * G @ (E - F)
    Gav = Gva.T
    Gvv = G @ (C + C.T) @ G
    return Gaa, Gav, Gva, Gvv


def d2sbr_dv2(Cbr, Ybr, V, lam):
    """Second derivatives of ``lam . S_br(V)`` (complex)."""
    A = Ybr.conj().T @ (lam[:, None] * Cbr)
    B = np.diag(np.conj(V)) @ A @ np.diag(V)
    D = np.diag((A @ V) * np.conj(V))
    E = np.diag((A.T @ np.conj(V)) * V)
    F = B + B.T
    G = np.diag(1.0 / np.abs(V))
    Haa = F - D - E
    Hva = 1j * G @ (B - B.T - D + E)
    Hav = Hva.T
    Hvv = G @ F @ G
    return Haa, Hav, Hva, Hvv


def d2asbr_dv2(dS_dVa, dS_dVm, S, Cbr, Ybr, V, lam):
    """Second derivatives of ``lam . |S_br|^2`` (real)."""
    Saa, Sav, Sva, Svv = d2sbr_dv2(Cbr, Ybr, V, np.conj(S) * lam)
    L = lam[:, None]
    Haa = 2 * np.real(Saa + dS_dVa.T @ (L * np.conj(dS_dVa)))
    Hva = 2 * np.real(Sva + dS_dVm.T @ (L * np.conj(dS_dVa)))
    Hav = 2 * np.real(Sav + dS_dVa.T @ (L * np.conj(dS_dVm)))
    Hvv = 2 * np.real(Svv + dS_dVm.T @ (L * np.conj(dS_dVm)))
    return Haa, Hav, Hva, Hvv


# ---------------------------------------------------------------- problem

@dataclass
class OpfProblem:
    """Network, battery set and variable bounds for one OPF instance.

    ``pb_bounds_kw`` holds ``(lower, upper)`` per battery, discharge positive.
    """

    network: object
    mode: str
    pb_bounds_kw: list
    cost_scale: float = 1.0
    labels: list = field(default_factory=list)

    @property
    def batteries(self):
        return self.network.batteries

    def layout(self):
        nb, ng, nbat = self.network.n_bus, self.network.n_gen, len(self.batteries)
        return _Layout(nb, ng, nbat)

    def bounds(self):
        """Lower and upper bounds of the decision vector."""
        case = self.network
        lay = self.layout()
        base = case.base_mva
        lb = np.full(lay.n, -np.inf)
        ub = np.full(lay.n, np.inf)
        ref = case.ref_index
        va_ref = math.radians(case.bus[ref, VA])
        lb[lay.va.start + ref] = ub[lay.va.start + ref] = va_ref
        lb[lay.vm] = case.bus[:, VMIN]
        ub[lay.vm] = case.bus[:, VMAX]
        on = case.gen[:, GEN_STATUS] > 0
        lb[lay.pg] = np.where(on, case.gen[:, PMIN], 0.0) / base
        ub[lay.pg] = np.where(on, case.gen[:, PMAX], 0.0) / base
        lb[lay.qg] = np.where(on, case.gen[:, QMIN], 0.0) / base
        ub[lay.qg] = np.where(on, case.gen[:, QMAX], 0.0) / base
        for k, (lo, hi) in enumerate(self.pb_bounds_kw):
            lb[lay.pb.start + k] = lo / 1000.0 / base
            ub[lay.pb.start + k] = hi / 1000.0 / base
        return lb, ub


@dataclass(frozen=True)
class _Layout:
    nb: int
    ng: int
    nbat: int

    @property
    def va(self):
        return slice(0, self.nb)

    @property
    def vm(self):
        return slice(self.nb, 2 * self.nb)

    @property
    def pg(self):
        return slice(2 * self.nb, 2 * self.nb + self.ng)

    @property
    def qg(self):
        return slice(2 * self.nb + self.ng, 2 * self.nb + 2 * self.ng)

    @property
    def pb(self):
        s = 2 * self.nb + 2 * self.ng
        return slice(s, s + self.nbat)

    @property
    def n(self):
        return 2 * self.nb + 2 * self.ng + self.nbat


def _variable_names(case):
    names = [f"va:bus {int(b)}" for b in case.bus[:, BUS_I]]
    names += [f"vm:bus {int(b)}" for b in case.bus[:, BUS_I]]
    names += [f"pg:gen {k + 1} (bus {int(b)})" for k, b in enumerate(case.gen[:, GEN_BUS])]
    names += [f"qg:gen {k + 1} (bus {int(b)})" for k, b in enumerate(case.gen[:, GEN_BUS])]
    names += [f"pb:battery bus {d.bus}" for d in case.batteries]
    return names


def build_problem(case, batteries, mode=CASE1, cost_scale=1.0):
    """OPF instance for conventional (``case1``) or health-constrained (``case2``) operation.

    Case 1 bounds battery power by each device's nameplate rating. Case 2
    uses the box-derived constraints and lowers the battery-bus voltage limit
    to ``min(case limit, v_bus_max_pu)``.

    Raises
    ------
    MissingConstraints
        Case 2 requested for a device without constraints.
    """
    if mode not in (CASE1, CASE2):
        raise ParamError(f"mode must be {CASE1!r} or {CASE2!r}")
    batteries = list(batteries)
    bounds = []
    for d in batteries:
        c = d.nameplate if mode == CASE1 else d.constraints
        if c is None:
            if mode == CASE2:
                raise MissingConstraints(f"battery at bus {d.bus} has no box constraints")
            bounds.append((-math.inf, math.inf))
            continue
        bounds.append((-c.p_ch_max_kw, c.p_disc_max_kw))
    net = attach_batteries(case.replace(batteries=()), batteries, tighten_voltage=(mode == CASE2))
    return OpfProblem(network=net, mode=mode, pb_bounds_kw=bounds, cost_scale=cost_scale,
                      labels=_variable_names(net))


def _poly_cost(case, pg_pu):
    """Total cost ($/h) and its first/second derivatives w.r.t. Pg in p.u."""
    base = case.base_mva
    p = pg_pu * base
    f = 0.0
    df = np.zeros_like(p)
    d2f = np.zeros_like(p)
    for k, row in enumerate(case.gencost):
        if case.gen[k, GEN_STATUS] <= 0:
            continue
        if row[MODEL] != POLYNOMIAL:
            raise ParamError("only polynomial generator costs are supported")
        c = row[COST:COST + int(row[NCOST])]
        f += np.polyval(c, p[k])
        if c.size > 1:
            df[k] = base * np.polyval(np.polyder(c), p[k])
        if c.size > 2:
            d2f[k] = base * base * np.polyval(np.polyder(c, 2), p[k])
    return float(f), df, d2f


class _Model:
    """Objective and constraint evaluation for one :class:`OpfProblem`."""

    def __init__(self, problem):
        self.problem = problem
        case = problem.network
        self.case = case
        self.lay = problem.layout()
        self.Ybus, Yf, Yt = branch_admittances(case)
        f, t = branch_endpoints(case)
        nl, nb = case.n_branch, case.n_bus
        Cf = np.zeros((nl, nb))
        Ct = np.zeros((nl, nb))
        Cf[np.arange(nl), f] = 1.0
        Ct[np.arange(nl), t] = 1.0
        lim = np.flatnonzero((case.branch[:, RATE_A] > 0) & (case.branch[:, BR_STATUS] > 0))
        self.lim = lim
        self.Yf, self.Yt, self.Cf, self.Ct = Yf[lim], Yt[lim], Cf[lim], Ct[lim]
        self.flow_max2 = (case.branch[lim, RATE_A] / case.base_mva) ** 2
        self.Cg = gen_incidence(case)
        self.Cb = battery_incidence(case)
        self.sd = (case.bus[:, PD] + 1j * case.bus[:, QD]) / case.base_mva

        lb, ub = problem.bounds()
        self.lb, self.ub = lb, ub
        self.fixed = np.flatnonzero(lb == ub)
        self.upper = np.flatnonzero(np.isfinite(ub) & (lb != ub))
        self.lower = np.flatnonzero(np.isfinite(lb) & (lb != ub))
        nfix, n = self.fixed.size, self.lay.n
        self.A_fix = np.zeros((nfix, n))
        self.A_fix[np.arange(nfix), self.fixed] = 1.0
        nu, nlo = self.upper.size, self.lower.size
        self.A_ub = np.zeros((nu, n))
        self.A_ub[np.arange(nu), self.upper] = 1.0
        self.A_lb = np.zeros((nlo, n))
        self.A_lb[np.arange(nlo), self.lower] = -1.0
        self.n_eq = 2 * nb + nfix
        self.n_iq = 2 * lim.size + nu + nlo

    def voltage(self, x):
        return x[self.lay.vm] * np.exp(1j * x[self.lay.va])

    def cost(self, x):
        f, df, d2f = _poly_cost(self.case, x[self.lay.pg])
        s = self.problem.cost_scale
        grad = np.zeros(self.lay.n)
        grad[self.lay.pg] = df
        hess = np.zeros(self.lay.n)
        hess[self.lay.pg] = d2f
        return s * f, s * grad, s * hess

    def constraints(self, x):
        """``(g, Jg, h, Jh)`` with Jacobians shaped (constraints, variables)."""
        lay = self.lay
        V = self.voltage(x)
        nb = lay.nb
        inj = self.Cg @ (x[lay.pg] + 1j * x[lay.qg]) - self.sd + self.Cb @ x[lay.pb]
        mis = V * np.conj(self.Ybus @ V) - inj
        dS_dVa, dS_dVm = dsbus_dv(self.Ybus, V)
        Jp = np.zeros((nb, lay.n))
        Jq = np.zeros((nb, lay.n))
        Jp[:, lay.va], Jp[:, lay.vm] = dS_dVa.real, dS_dVm.real
        Jq[:, lay.va], Jq[:, lay.vm] = dS_dVa.imag, dS_dVm.imag
        Jp[:, lay.pg] = -self.Cg
        Jq[:, lay.qg] = -self.Cg
        Jp[:, lay.pb] = -self.Cb
        g = np.concatenate([mis.real, mis.imag, x[self.fixed] - self.lb[self.fixed]])
        Jg = np.vstack([Jp, Jq, self.A_fix])

        hs, Js = [], []
        for Ybr, Cbr in ((self.Yf, self.Cf), (self.Yt, self.Ct)):
            S, dVa, dVm = dsbr_dv(Ybr, Cbr, V)
            hs.append(np.abs(S) ** 2 - self.flow_max2)
            J = np.zeros((S.size, lay.n))
            J[:, lay.va] = 2 * (S.real[:, None] * dVa.real + S.imag[:, None] * dVa.imag)
            J[:, lay.vm] = 2 * (S.real[:, None] * dVm.real + S.imag[:, None] * dVm.imag)
            Js.append(J)
        hs.append(x[self.upper] - self.ub[self.upper])
        hs.append(self.lb[self.lower] - x[self.lower])
        Js += [self.A_ub, self.A_lb]
        return g, Jg, np.concatenate(hs), np.vstack(Js)

    def lagrangian_hessian(self, x, lam, mu):
        lay = self.lay
        nb = lay.nb
        V = self.voltage(x)
        _, _, d2f = self.cost(x)
        H = np.diag(d2f)
        lp, lq = lam[:nb], lam[nb:2 * nb]
        Pa = d2sbus_dv2(self.Ybus, V, lp)
        Qa = d2sbus_dv2(self.Ybus, V, lq)
        blk = np.block([[Pa[0], Pa[1]], [Pa[2], Pa[3]]]).real + np.block([[Qa[0], Qa[1]], [Qa[2], Qa[3]]]).imag
        nl = self.lim.size
        for k, (Ybr, Cbr) in enumerate(((self.Yf, self.Cf), (self.Yt, self.Ct))):
            m = mu[k * nl:(k + 1) * nl]
            if nl == 0:
                continue
            S, dVa, dVm = dsbr_dv(Ybr, Cbr, V)
            Haa, Hav, Hva, Hvv = d2asbr_dv2(dVa, dVm, S, Cbr, Ybr, V, m)
            blk = blk + np.block([[Haa, Hav], [Hva, Hvv]])
        H[:2 * nb, :2 * nb] += blk
        return H

    def initial_point(self):
        lb = np.where(np.isfinite(self.lb), self.lb, -1e10)
        ub = np.where(np.isfinite(self.ub), self.ub, 1e10)
        x0 = 0.5 * (lb + ub)
        only_lb = np.isfinite(self.lb) & ~np.isfinite(self.ub)
        only_ub = ~np.isfinite(self.lb) & np.isfinite(self.ub)
        x0[only_lb] = self.lb[only_lb] + 1.0
        x0[only_ub] = self.ub[only_ub] - 1.0
        ref = self.case.ref_index
        x0[self.lay.va] = self.lb[self.lay.va.start + ref]
        return x0

    def inequality_names(self):
        names = _variable_names(self.case)
        out = [f"flow_from:branch {k + 1}" for k in self.lim] + [f"flow_to:branch {k + 1}" for k in self.lim]
        out += [f"max {names[i]}" for i in self.upper] + [f"min {names[i]}" for i in self.lower]
        return out


# ---------------------------------------------------------------- solver

@dataclass
class OpfSolution:
    """Dispatch in MW/MVAr/kW, voltages in p.u./radians, cost in $/h."""

    converged: bool
    iterations: int
    objective: float
    pg: np.ndarray
    qg: np.ndarray
    pb_kw: np.ndarray
    vm: np.ndarray
    va: np.ndarray
    bus_ids: np.ndarray
    battery_buses: list
    lam: np.ndarray
    mu: np.ndarray
    h: np.ndarray
    kkt_residual: float
    feas_residual: float
    max_mismatch: float
    binding: list
    mode: str = CASE1
    conditions: dict = field(default_factory=dict)

    def battery_vm(self):
        idx = {int(b): k for k, b in enumerate(self.bus_ids)}
        return np.array([self.vm[idx[b]] for b in self.battery_buses])

    def complementarity(self):
        """Largest ``|mu_i h_i|`` over inequalities."""
        return float(np.max(np.abs(self.mu * self.h))) if self.h.size else 0.0

    def to_dict(self):
        return {
            "mode": self.mode,
            "converged": self.converged,
            "iterations": self.iterations,
            "objective": self.objective,
            "pg_mw": self.pg.tolist(),
            "qg_mvar": self.qg.tolist(),
            "battery_buses": list(self.battery_buses),
            "pb_kw": self.pb_kw.tolist(),
            "bus_ids": [int(b) for b in self.bus_ids],
            "vm_pu": self.vm.tolist(),
            "va_rad": self.va.tolist(),
            "kkt_residual": self.kkt_residual,
            "feas_residual": self.feas_residual,
            "max_mismatch": self.max_mismatch,
            "complementarity": self.complementarity(),
            "binding": list(self.binding),
            "conditions": self.conditions,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def bus_csv(self, comment=None):
        return _table_csv(["bus", "vm_pu", "va_rad"],
                          [[int(b), repr(float(m)), repr(float(a))] for b, m, a in zip(self.bus_ids, self.vm, self.va)],
                          comment)

    def gen_csv(self, comment=None):
        return _table_csv(["gen", "pg_mw", "qg_mvar"],
                          [[k + 1, repr(float(p)), repr(float(q))] for k, (p, q) in enumerate(zip(self.pg, self.qg))],
                          comment)


def _table_csv(header, rows, comment=None):
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def solve_opf(problem, tol=1e-6, max_iter=150, comp_tol=None):
    """Primal-dual interior-point solve of ``problem``.

    Converges when the scaled feasibility, gradient, complementarity and
    cost-change measures all fall below ``tol`` (``comp_tol`` overrides the
    complementarity threshold). Hitting ``max_iter`` returns the last
    iterate with ``converged=False``.

    Raises
    ------
    SingularKkt
        The Newton system could not be solved.
    OpfInfeasible
        Iterates diverged or steps collapsed.
    """
    comp_tol = tol if comp_tol is None else comp_tol
    m = _Model(problem)
    x = m.initial_point()
    f, df, _ = m.cost(x)
    g, Jg, h, Jh = m.constraints(x)
    niq, neq = m.n_iq, m.n_eq

    gamma = 1.0
    z = np.ones(niq)
    k = h < -1.0
    z[k] = -h[k]
    mu = np.ones(niq)
    k = gamma / z > 1.0
    mu[k] = gamma / z[k]
    lam = np.zeros(neq)

    def conditions(x, z, lam, mu, g, h, Lx, f, f_prev):
        maxh = max(0.0, float(h.max())) if h.size else 0.0
        feas = max(float(np.max(np.abs(g))) if g.size else 0.0, maxh) / (
            1 + max(float(np.max(np.abs(x))), float(np.max(z)) if z.size else 0.0))
        grad = float(np.max(np.abs(Lx))) / (1 + max(float(np.max(np.abs(lam))) if lam.size else 0.0,
                                                    float(np.max(mu)) if mu.size else 0.0))
        comp = float(z @ mu) / (1 + float(np.max(np.abs(x))))
        cost = abs(f - f_prev) / (1 + abs(f_prev))
        return {"feas": feas, "grad": grad, "comp": comp, "cost": cost}

    Lx = df + Jg.T @ lam + Jh.T @ mu
    cond = conditions(x, z, lam, mu, g, h, Lx, f, f)
    it = 0
    converged = False
    while True:
        if cond["feas"] < tol and cond["grad"] < tol and cond["comp"] < comp_tol and cond["cost"] < tol and it > 0:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        H = m.lagrangian_hessian(x, lam, mu)
        zinv = 1.0 / z
        M = H + Jh.T @ ((mu * zinv)[:, None] * Jh)
        N = Lx + Jh.T @ (zinv * (mu * h + gamma))
        n = x.size
        K = np.zeros((n + neq, n + neq))
        K[:n, :n] = M
        K[:n, n:] = Jg.T
        K[n:, :n] = Jg
        rhs = -np.concatenate([N, g])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            raise SingularKkt(f"KKT system singular at iteration {it}") from None
        if not np.all(np.isfinite(sol)):
            raise SingularKkt(f"KKT system singular at iteration {it}")
        dx, dlam = sol[:n], sol[n:]
        dz = -h - z - Jh @ dx
        dmu = -mu + zinv * (gamma - mu * dz)

        neg = dz < 0
        alpha_p = min(STEP_TO_BOUNDARY * float(np.min(z[neg] / -dz[neg])), 1.0) if neg.any() else 1.0
        neg = dmu < 0
        alpha_d = min(STEP_TO_BOUNDARY * float(np.min(mu[neg] / -dmu[neg])), 1.0) if neg.any() else 1.0

        x = x + alpha_p * dx
        z = z + alpha_p * dz
        lam = lam + alpha_d * dlam
        mu = mu + alpha_d * dmu
        if niq:
            gamma = CENTERING * float(z @ mu) / niq

        f_prev = f
        f, df, _ = m.cost(x)
        g, Jg, h, Jh = m.constraints(x)
        Lx = df + Jg.T @ lam + Jh.T @ mu
        cond = conditions(x, z, lam, mu, g, h, Lx, f, f_prev)
        logger.debug("ipm %3d  feas %.2e grad %.2e comp %.2e cost %.2e", it, *cond.values())
        if not np.all(np.isfinite(x)) or alpha_p < ALPHA_MIN or alpha_d < ALPHA_MIN or \
                (niq and (gamma < np.finfo(float).eps or gamma > 1 / np.finfo(float).eps)):
            raise OpfInfeasible(f"interior-point iterates diverged at iteration {it}")

    s = problem.cost_scale
    lay = m.lay
    case = problem.network
    base = case.base_mva
    mu_nat = mu / s
    names = m.inequality_names()
    active = np.flatnonzero((h > -1e-5) & (mu_nat > 1e-6))
    return OpfSolution(
        converged=converged,
        iterations=it,
        objective=f / s,
        pg=x[lay.pg] * base,
        qg=x[lay.qg] * base,
        pb_kw=x[lay.pb] * base * 1000.0,
        vm=x[lay.vm].copy(),
        va=x[lay.va].copy(),
        bus_ids=case.bus[:, BUS_I].astype(int),
        battery_buses=[int(d.bus) for d in case.batteries],
        lam=lam[:2 * lay.nb] / s,
        mu=mu_nat,
        h=h,
        kkt_residual=max(cond["grad"], cond["comp"]),
        feas_residual=cond["feas"],
        max_mismatch=float(np.max(np.abs(g[:2 * lay.nb]))),
        binding=[names[i] for i in active],
        mode=problem.mode,
        conditions=cond,
    )


def dispatched_case(problem, solution):
    """The problem's network with batteries set to the solved injections."""
    bats = tuple(replace(d, p_b_kw=float(p)) for d, p in zip(problem.batteries, solution.pb_kw))
    return problem.network.replace(batteries=bats)


# ---------------------------------------------------------------- post checks

def _pack_current(kw, device, params):
    return kw * 1000.0 / (device.n_cells * params.nominal_voltage)


def verify_rul(solution, batteries, params, soc_max_range=(0.0, 1.0)):
    """Realized RUL (hours) of each battery cycled at its dispatched power.

    The discharge current follows from the dispatch; the charge current and
    upper voltage come from the bounds in force for the solution's mode.
    Batteries that do not discharge get ``inf``.
    """
    from .cell import OperatingLimits, simulate_to_eol, soc_for_voltage, state_from_efc

    out = []
    for d, p_kw in zip(batteries, solution.pb_kw):
        bounds = d.constraints if solution.mode == CASE2 else d.nameplate
        if p_kw <= 1e-9 or bounds is None or bounds.p_ch_max_kw <= 0:
            out.append(math.inf)
            continue
        i_dis = _pack_current(p_kw, d, params)
        i_ch = _pack_current(bounds.p_ch_max_kw, d, params)
        if math.isfinite(bounds.v_bus_max_pu):
            soc_max = soc_for_voltage(bounds.v_bus_max_pu * params.nominal_voltage, i_ch, params,
                                      bounds=soc_max_range)
        else:
            soc_max = soc_max_range[1]
        limits = OperatingLimits(soc_min=0.0, soc_max=soc_max, i_charge=i_ch, i_discharge=i_dis)
        out.append(simulate_to_eol(state_from_efc(d.initial_efc, params), params, limits).rul_hours)
    return out


COMPARISON_COLUMNS = ("quantity", "case1", "case2")


def comparison_rows(sol1, sol2, batteries, rul1, rul2):
    """Rows of the two-case table: cost, battery power, battery voltage (with bound) and realized RUL."""
    rows = [("cost_usd_per_h", sol1.objective, sol2.objective)]
    vm1, vm2 = sol1.battery_vm(), sol2.battery_vm()
    for k, d in enumerate(batteries):
        rows.append((f"bess_power_kw_bus{d.bus}", sol1.pb_kw[k], sol2.pb_kw[k]))
    for k, d in enumerate(batteries):
        vb = d.constraints.v_bus_max_pu if d.constraints is not None else math.inf
        rows.append((f"bess_voltage_pu_bus{d.bus}", vm1[k], vm2[k]))
        rows.append((f"bess_voltage_bound_pu_bus{d.bus}", math.nan, vb))
    for k, d in enumerate(batteries):
        rows.append((f"rul_hours_bus{d.bus}", rul1[k], rul2[k]))
    return rows


def comparison_csv(rows, comment=None):
    return _table_csv(list(COMPARISON_COLUMNS), [[q, repr(float(a)), repr(float(b))] for q, a, b in rows], comment)
