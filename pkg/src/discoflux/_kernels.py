"""Jitted inner loops: Fenwick-tree primitives and the event-driven dynamics.

Everything here is numba-compiled and operates on plain arrays; the Python
wrappers in :mod:`fenwick`, :mod:`zrp_core` and :mod:`coupling` own state,
random-number blocks and error handling.  Random numbers are consumed from
pre-drawn uniform blocks so the streams stay counter-based and reproducible.

Status codes returned by the run kernels:
  0  reached the time target (or went quiescent, which advances to the target)
  1  uniform block exhausted (caller refills and resumes)
  2  event budget reached
  3  sitewise order violated while check_order was on (coupling only)
"""

import math

import numpy as np
from numba import njit

STATUS_DONE = 0
STATUS_NEED_RANDOMS = 1
STATUS_BUDGET = 2
STATUS_ORDER_BROKEN = 3


@njit(cache=True, nogil=True)
def fw_add(tree, i, delta):
    """Add delta to leaf i (1-based)."""
    n = tree.size - 1
    j = i
    while j <= n:
        tree[j] += delta
        j += j & (-j)


@njit(cache=True, nogil=True)
def fw_prefix(tree, i):
    """Sum of leaves 1..i."""
    s = 0.0
    j = i
    while j > 0:
        s += tree[j]
        j -= j & (-j)
    return s


@njit(cache=True, nogil=True)
def fw_build(tree, leaves):
    """Rebuild the tree from a leaf array; returns the total weight."""
    n = leaves.size
    total = 0.0
    for i in range(n + 1):
        tree[i] = 0.0
    for i in range(1, n + 1):
        tree[i] += leaves[i - 1]
        j = i + (i & (-i))
        if j <= n:
            tree[j] += tree[i]
        total += leaves[i - 1]
    return total


@njit(cache=True, nogil=True)
def fw_find(tree, n, r):
    """Smallest 1-based index with prefix sum strictly greater than r."""
    j = 0
    mask = 1
    while (mask << 1) <= n:
        mask <<= 1
    while mask > 0:
        k = j + mask
        if k <= n and tree[k] <= r:
            j = k
            r -= tree[k]
        mask >>= 1
    return j + 1


@njit(cache=True, nogil=True)
def _pick_site(tree, leaves, n, r):
    """fw_find with a guard against float-edge hits on zero-weight leaves."""
    u = fw_find(tree, n, r) - 1
    if u >= n:
        u = n - 1
    if leaves[u] <= 0.0:
        for k in range(1, n + 1):
            w = (u + k) % n
            if leaves[w] > 0.0:
                return w
    return u


@njit(cache=True, nogil=True)
def zrp_weights(eta, lam, gtab, leaves):
    total = 0.0
    for i in range(eta.size):
        w = lam[i] * gtab[eta[i]]
        leaves[i] = w
        total += w
    return total


@njit(cache=True, nogil=True)
def zrp_run(eta, lam, gtab, tree, leaves, total_w, disp, disp_cdf, speed_factor,
            t, t_target, u01, max_events, rebuild_period, events_since_rebuild):
    """Advance the zero range process until t_target, budget, or block end.

    Returns (t, total_w, events, events_since_rebuild, used, status, last_dt).
    """
    n = eta.size
    many_disp = disp.size > 1
    idx = 0
    events = 0
    last_dt = math.inf
    status = STATUS_DONE
    while t < t_target:
        if events >= max_events:
            status = STATUS_BUDGET
            break
        if total_w <= 0.0:
            t = t_target
            break
        if idx + 3 > u01.size:
            status = STATUS_NEED_RANDOMS
            break
        dt = -math.log1p(-u01[idx]) / (speed_factor * total_w)
        idx += 1
        last_dt = dt
        if t + dt >= t_target:
            t = t_target
            break
        t += dt
        r = u01[idx] * total_w
        idx += 1
        u = _pick_site(tree, leaves, n, r)
        if many_disp:
            z = disp[np.searchsorted(disp_cdf, u01[idx], side="right")]
            idx += 1
        else:
            z = disp[0]
        v = (u + z) % n
        eta[u] -= 1
        eta[v] += 1
        du = lam[u] * gtab[eta[u]] - leaves[u]
        leaves[u] += du
        fw_add(tree, u + 1, du)
        dv = lam[v] * gtab[eta[v]] - leaves[v]
        leaves[v] += dv
        fw_add(tree, v + 1, dv)
        total_w += du + dv
        events += 1
        events_since_rebuild += 1
        if events_since_rebuild >= rebuild_period:
            total_w = zrp_weights(eta, lam, gtab, leaves)
            fw_build(tree, leaves)
            events_since_rebuild = 0
    return t, total_w, events, events_since_rebuild, idx, status, last_dt


@njit(cache=True, nogil=True)
def coupled_weights(eta, xi, lam, gtab, leavesJ, leavesE, leavesX):
    tJ = 0.0
    tE = 0.0
    tX = 0.0
    for i in range(eta.size):
        ge = gtab[eta[i]]
        gx = gtab[xi[i]]
        lo = ge if ge < gx else gx
        leavesJ[i] = lam[i] * lo
        leavesE[i] = lam[i] * (ge - gx) if ge > gx else 0.0
        leavesX[i] = lam[i] * (gx - ge) if gx > ge else 0.0
        tJ += leavesJ[i]
        tE += leavesE[i]
        tX += leavesX[i]
    return tJ, tE, tX


@njit(cache=True, nogil=True)
def _coupled_touch(eta, xi, lam, gtab, treeJ, treeE, treeX,
                   leavesJ, leavesE, leavesX, i):
    """Refresh all three channel weights at site i; returns the total deltas."""
    ge = gtab[eta[i]]
    gx = gtab[xi[i]]
    lo = ge if ge < gx else gx
    wJ = lam[i] * lo
    wE = lam[i] * (ge - gx) if ge > gx else 0.0
    wX = lam[i] * (gx - ge) if gx > ge else 0.0
    dJ = wJ - leavesJ[i]
    dE = wE - leavesE[i]
    dX = wX - leavesX[i]
    leavesJ[i] = wJ
    leavesE[i] = wE
    leavesX[i] = wX
    fw_add(treeJ, i + 1, dJ)
    fw_add(treeE, i + 1, dE)
    fw_add(treeX, i + 1, dX)
    return dJ, dE, dX


@njit(cache=True, nogil=True)
def coupled_run(eta, xi, lam, gtab, treeJ, treeE, treeX, leavesJ, leavesE, leavesX,
                tJ, tE, tX, disp, disp_cdf, speed_factor, t, t_target, u01,
                max_events, rebuild_period, events_since_rebuild, check_order):
    """Advance the basic coupling (joint / eta-excess / xi-excess channels).

    Returns (t, tJ, tE, tX, events, events_since_rebuild, used, status,
    last_dt, violation_site).
    """
    n = eta.size
    many_disp = disp.size > 1
    idx = 0
    events = 0
    last_dt = math.inf
    status = STATUS_DONE
    viol = -1
    while t < t_target:
        if events >= max_events:
            status = STATUS_BUDGET
            break
        total_w = tJ + tE + tX
        if total_w <= 0.0:
            t = t_target
            break
        if idx + 3 > u01.size:
            status = STATUS_NEED_RANDOMS
            break
        dt = -math.log1p(-u01[idx]) / (speed_factor * total_w)
        idx += 1
        last_dt = dt
        if t + dt >= t_target:
            t = t_target
            break
        t += dt
        r = u01[idx] * total_w
        idx += 1
        if r < tJ:
            channel = 0
            u = _pick_site(treeJ, leavesJ, n, r)
        elif r < tJ + tE:
            channel = 1
            u = _pick_site(treeE, leavesE, n, r - tJ)
        else:
            channel = 2
            u = _pick_site(treeX, leavesX, n, r - tJ - tE)
        if many_disp:
            z = disp[np.searchsorted(disp_cdf, u01[idx], side="right")]
            idx += 1
        else:
            z = disp[0]
        v = (u + z) % n
        if channel == 0:
            eta[u] -= 1
            eta[v] += 1
            xi[u] -= 1
            xi[v] += 1
        elif channel == 1:
            eta[u] -= 1
            eta[v] += 1
        else:
            xi[u] -= 1
            xi[v] += 1
        dJ, dE, dX = _coupled_touch(eta, xi, lam, gtab, treeJ, treeE, treeX,
                                    leavesJ, leavesE, leavesX, u)
        tJ += dJ
        tE += dE
        tX += dX
        dJ, dE, dX = _coupled_touch(eta, xi, lam, gtab, treeJ, treeE, treeX,
                                    leavesJ, leavesE, leavesX, v)
        tJ += dJ
        tE += dE
        tX += dX
        events += 1
        events_since_rebuild += 1
        if check_order and (eta[u] > xi[u] or eta[v] > xi[v]):
            status = STATUS_ORDER_BROKEN
            viol = u if eta[u] > xi[u] else v
            break
        if events_since_rebuild >= rebuild_period:
            tJ, tE, tX = coupled_weights(eta, xi, lam, gtab, leavesJ, leavesE, leavesX)
            fw_build(treeJ, leavesJ)
            fw_build(treeE, leavesE)
            fw_build(treeX, leavesX)
            events_since_rebuild = 0
    return t, tJ, tE, tX, events, events_since_rebuild, idx, status, last_dt, viol
