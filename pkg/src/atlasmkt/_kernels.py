"""Compiled inner loop for path simulation.

One kernel call advances the state over a block of steps, accumulating every
registered statistic in place.  The caller owns chunking (checkpoint grid),
noise generation, and error reporting; the kernel stays allocation-free.

Rank bookkeeping relies on the permutation from the previous step being
nearly sorted, so a single insertion pass per step costs O(n + swaps).
"""

from __future__ import annotations

import numpy as np
from numba import njit

# status codes returned by run_chunk
OK = 0
ERR_NONFINITE = 1
ERR_WEIGHTS = 2

# portfolio rule codes (kept in sync with portfolio.KIND_CODES)
K_MARKET = 0
K_EQUAL = 1
K_DIVERSITY = 2
K_RESTRICTED_MARKET = 3
K_RESTRICTED_EQUAL = 4
K_RESTRICTED_DIVERSITY = 5
K_ATLAS_STAR = 6
K_EFFICIENT = 7

WEIGHT_SUM_TOL = 1e-12


@njit(cache=True, nogil=True)
def resort(y, perm, rank_of):
    """Insertion-sort perm for the current y; ties keep the lower name first."""
    n = y.shape[0]
    for k in range(1, n):
        name = perm[k]
        yk = y[name]
        jj = k - 1
        while jj >= 0:
            other = perm[jj]
            yo = y[other]
            if yk > yo or (yk == yo and name < other):
                perm[jj + 1] = other
                jj -= 1
            else:
                break
        perm[jj + 1] = name
    for k in range(n):
        rank_of[perm[k]] = k


@njit(cache=True, nogil=True)
def run_chunk(
    y,
    perm,
    rank_of,
    rank_prev,
    step0,
    nsteps,
    noise,
    dt,
    sqrt_dt,
    gamma,
    g,
    sigma,
    sigma2,
    burn_step,
    occ,
    track_perms,
    perm_occ,
    fact,
    gap_sum,
    gap_band,
    eps,
    hist,
    hist_over,
    inv_binw,
    cross,
    nw_sum,
    rw_sum,
    func_p,
    func_sum,
    rkind,
    rp,
    rconstw,
    logz,
    g_int,
    gs_int,
    b_int,
    s2_int,
    mu,
    pw,
    dy,
    edy,
    resid_max,
):
    n = y.shape[0]
    nbounds = n - 1
    nb = hist.shape[1]
    nrules = rkind.shape[0]
    nf = func_p.shape[0]
    for j in range(nsteps):
        abs_step = step0 + j
        measured = abs_step >= burn_step

        # market weights at the incoming state, max-shifted for overflow safety
        ymax = y[0]
        for i in range(1, n):
            if y[i] > ymax:
                ymax = y[i]
        ssum = 0.0
        for i in range(n):
            mu[i] = np.exp(y[i] - ymax)
            ssum += mu[i]
        for i in range(n):
            mu[i] /= ssum

        if measured:
            for k in range(n):
                occ[perm[k], k] += dt
            if track_perms:
                code = 0
                for a in range(n):
                    pa = perm[a]
                    c = 0
                    for b in range(a + 1, n):
                        if perm[b] < pa:
                            c += 1
                    code += c * fact[n - 1 - a]
                perm_occ[code] += dt
            for b in range(nbounds):
                x = y[perm[b]] - y[perm[b + 1]]
                gap_sum[b] += x * dt
                if x < eps[b]:
                    gap_band[b] += dt
                ib = int(x * inv_binw)
                if ib < nb:
                    hist[b, ib] += dt
                else:
                    hist_over[b] += dt
            for i in range(n):
                nw_sum[i] += mu[i] * dt
            for k in range(n):
                rw_sum[k] += mu[perm[k]] * dt
            for q in range(nf):
                p = func_p[q]
                fv = 0.0
                for i in range(n):
                    fv += mu[i] ** p
                func_sum[q] += fv * dt

        # state increments; coefficients frozen at the incoming rank
        sum_dy = 0.0
        for i in range(n):
            k = rank_of[i]
            d = g[k] * dt + gamma * dt + sigma[k] * sqrt_dt * noise[j, i]
            dy[i] = d
            edy[i] = np.exp(d)
            sum_dy += d
        rhs = n * gamma * dt
        for k in range(n):
            rhs += sigma[k] * sqrt_dt * noise[j, perm[k]]
        r = abs(sum_dy - rhs)
        if r > resid_max[0]:
            resid_max[0] = r

        # portfolio rules evaluated at the incoming state
        for q in range(nrules):
            kind = rkind[q]
            if kind == K_MARKET:
                for i in range(n):
                    pw[i] = mu[i]
            elif kind == K_EQUAL:
                w = 1.0 / n
                for i in range(n):
                    pw[i] = w
            elif kind == K_DIVERSITY:
                p = rp[q]
                s = 0.0
                for i in range(n):
                    pw[i] = mu[i] ** p
                    s += pw[i]
                for i in range(n):
                    pw[i] /= s
            elif kind == K_RESTRICTED_MARKET:
                last = perm[n - 1]
                s = 1.0 - mu[last]
                for i in range(n):
                    pw[i] = mu[i] / s
                pw[last] = 0.0
            elif kind == K_RESTRICTED_EQUAL:
                w = 1.0 / (n - 1)
                for i in range(n):
                    pw[i] = w
                pw[perm[n - 1]] = 0.0
            elif kind == K_RESTRICTED_DIVERSITY:
                p = rp[q]
                for i in range(n):
                    pw[i] = mu[i] ** p
                pw[perm[n - 1]] = 0.0
                s = 0.0
                for i in range(n):
                    s += pw[i]
                for i in range(n):
                    pw[i] /= s
            elif kind == K_ATLAS_STAR:
                for i in range(n):
                    pw[i] = 0.0
                pw[perm[n - 1]] = 1.0
            else:
                for k in range(n):
                    pw[perm[k]] = rconstw[q, k]

            s = 0.0
            bad = False
            for i in range(n):
                if pw[i] < 0.0:
                    bad = True
                s += pw[i]
            if bad or abs(s - 1.0) > WEIGHT_SUM_TOL:
                return ERR_WEIGHTS, abs_step

            gpi = 0.0
            gstar = 0.0
            bpi = 0.0
            s2pi = 0.0
            zrel = 0.0
            for k in range(n):
                w = pw[perm[k]]
                gpi += w * g[k]
                gstar += w * (1.0 - w) * sigma2[k]
                bpi += w * (gamma + g[k] + 0.5 * sigma2[k])
                s2pi += w * w * sigma2[k]
            gstar *= 0.5
            for i in range(n):
                zrel += pw[i] * edy[i]
            g_int[q] += (gamma + gpi + gstar) * dt
            gs_int[q] += gstar * dt
            b_int[q] += bpi * dt
            s2_int[q] += s2pi * dt
            logz[q] += np.log(zrel)

        # advance the state
        ok = True
        for i in range(n):
            y[i] += dy[i]
            if not np.isfinite(y[i]):
                ok = False
        if not ok:
            return ERR_NONFINITE, abs_step

        for i in range(n):
            rank_prev[i] = rank_of[i]
        resort(y, perm, rank_of)
        if measured:
            for i in range(n):
                r1 = rank_of[i]
                r0 = rank_prev[i]
                if r1 > r0:
                    for b in range(r0, r1):
                        cross[b] += 1

    return OK, step0 + nsteps
