"""Independent reference computations used by the tests.

Each oracle reaches its answer by a different route than the package code
(closed forms, brute force, numerical quadrature).
"""

import math

import numpy as np
from scipy import integrate


def geometric_eol(params, soc_min, soc_max, i_charge, i_discharge, capacity):
    """RUL and throughput of window cycling starting at ``soc_min``, via per-direction decay ratios.

    Every half-cycle removes a fixed fraction of the capacity it starts with,
    so capacity decays geometrically with one ratio per direction.
    """
    c = params.nominal_capacity
    dod = soc_max - soc_min
    mean = 0.5 * (soc_max + soc_min)
    s_soc = 1.0 + params.soc_coefficient * (mean - 0.5)
    per_efc = (1.0 - params.eol_capacity_fraction) / params.rated_life_efc

    def ratio(current):
        s_rate = math.exp(params.rate_coefficient * (current / c - 1.0))
        return 1.0 - per_efc * dod / 2.0 * dod**params.dod_exponent * s_rate * s_soc

    r_ch, r_dis = ratio(i_charge), ratio(i_discharge)
    cap, hours, efc, n = capacity, 0.0, 0.0, 0
    limit = params.eol_capacity_fraction * c
    while cap > limit:
        current, r = (i_charge, r_ch) if n % 2 == 0 else (i_discharge, r_dis)
        hours += dod * cap / current
        efc += dod * cap / (2.0 * c)
        cap *= r
        n += 1
    return hours, efc, n


def reference_cycling_efc(params):
    """EFC to end of life at 1C and full depth, closed form of a geometric series."""
    r = 1.0 - (1.0 - params.eol_capacity_fraction) / (2.0 * params.rated_life_efc)
    n = math.ceil(math.log(params.eol_capacity_fraction) / math.log(r))
    return (1.0 - r**n) / (1.0 - r) / 2.0


def t_cdf_quadrature(t, df):
    """Student-t CDF by trapezoid integration of the density from 0 to ``t``."""
    norm = math.gamma((df + 1) / 2) / (math.sqrt(df * math.pi) * math.gamma(df / 2))
    x = np.linspace(0.0, abs(t), 200001)
    dens = norm * (1.0 + x * x / df) ** (-(df + 1) / 2)
    half = integrate.trapezoid(dens, x)
    return 0.5 + half if t >= 0 else 0.5 - half


def pearson_by_hand(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def brute_force_dispatch(case, gen=1, step=1e-3, pmax_pu=None):
    """Cheapest linear-cost dispatch by scanning one generator's output in p.u. steps.

    The slack generator covers the rest; dispatches where it would run
    outside its limits are discarded.
    """
    from hirul.case import COST, PG, PMAX, PMIN
    from hirul.powerflow import solve_powerflow

    base = case.base_mva
    top = case.gen[gen, PMAX] / base if pmax_pu is None else pmax_pu
    slack_gen = 0
    best = (math.inf, None, None)
    for pg in np.arange(0.0, top + 1e-12, step):
        g = case.gen.copy()
        g[gen, PG] = pg * base
        sol = solve_powerflow(case.replace(gen=g))
        p_slack = sol.slack_p
        if not case.gen[slack_gen, PMIN] <= p_slack <= case.gen[slack_gen, PMAX]:
            continue
        cost = case.gencost[slack_gen, COST] * p_slack + case.gencost[gen, COST] * pg * base
        if cost < best[0]:
            best = (cost, pg, p_slack)
    return best


def two_bus_angle_pv(p_load, x):
    """Receiving-end angle with both ends held at 1 p.u.: sin(delta) = P x."""
    return -math.asin(p_load * x)


def two_bus_angle_pq(p_load, x):
    """Receiving-end angle of a lossless line feeding a unity power factor load.

    With no reactive load V2 = cos(delta), so P = sin(2 delta) / (2 x).
    """
    return -0.5 * math.asin(2.0 * p_load * x)


def finite_difference_jacobian(fun, x, h=1e-6):
    f0 = fun(x)
    J = np.zeros((f0.size, x.size))
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        J[:, k] = (fun(x + e) - fun(x - e)) / (2 * h)
    return J
