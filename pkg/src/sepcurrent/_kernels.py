"""Event kernels for the exclusion process with boundary reservoirs.

All state lives in flat numpy arrays so the same code runs compiled or as
plain Python (see ``_accel``). Site index ``i = x + N`` for ``x in [-N, N]``;
bond ``b`` joins sites ``b`` and ``b + 1``.

Active-bond bookkeeping: ``act[:meta[0]]`` lists the discrepant bonds,
``pos[b]`` is the slot of bond ``b`` in ``act`` or -1. ``meta[1]`` caches
the particle count.

Every attempted event consumes exactly two uniforms from the clock buffer:
one for the holding time, one for the channel/bond choice. The overshooting
event at a horizon is discarded after its uniforms are consumed.
"""

import math

import numpy as np

from ._accel import njit

EXCHANGE = 0
BIRTH = 1
DEATH = 2
BIRTH_ABORTED = 3
DEATH_ABORTED = 4

# run status codes
DONE = 0
NEED_UNIFORMS = 1
EVENT_LIMIT = 2
ORDER_VIOLATION = 3
MIRROR_VIOLATION = 4


@njit(inline="always")
def bond_insert(act, pos, meta, b):
    if pos[b] < 0:
        n = meta[0]
        act[n] = b
        pos[b] = n
        meta[0] = n + 1


@njit(inline="always")
def bond_remove(act, pos, meta, b):
    p = pos[b]
    if p >= 0:
        n = meta[0] - 1
        last = act[n]
        act[p] = last
        pos[last] = p
        pos[b] = -1
        meta[0] = n


@njit(inline="always")
def bond_refresh(occ, act, pos, meta, b):
    if b < 0 or b >= occ.shape[0] - 1:
        return
    if occ[b] != occ[b + 1]:
        bond_insert(act, pos, meta, b)
    else:
        bond_remove(act, pos, meta, b)


@njit
def rebuild_bonds(occ, act, pos, meta):
    pos[:] = -1
    meta[0] = 0
    meta[1] = 0
    for i in range(occ.shape[0]):
        meta[1] += occ[i]
    for b in range(occ.shape[0] - 1):
        if occ[b] != occ[b + 1]:
            bond_insert(act, pos, meta, b)


@njit(inline="always")
def exchange(occ, act, pos, meta, b):
    """Swap the endpoints of bond b. Returns +1/-1 for a particle moving
    right/left, 0 if the bond was not discrepant."""
    left = occ[b]
    right = occ[b + 1]
    if left == right:
        return 0
    occ[b] = right
    occ[b + 1] = left
    bond_refresh(occ, act, pos, meta, b - 1)
    bond_refresh(occ, act, pos, meta, b + 1)
    if left == 1:
        return 1
    return -1


@njit(inline="always")
def birth(occ, act, pos, meta, K):
    """Fill the rightmost empty site of the right boundary block; -1 if full."""
    n = occ.shape[0]
    for i in range(n - 1, n - 1 - K, -1):
        if occ[i] == 0:
            occ[i] = 1
            meta[1] += 1
            bond_refresh(occ, act, pos, meta, i - 1)
            bond_refresh(occ, act, pos, meta, i)
            return i
    return -1


@njit(inline="always")
def death(occ, act, pos, meta, K):
    """Empty the leftmost occupied site of the left boundary block; -1 if empty."""
    for i in range(K):
        if occ[i] == 1:
            occ[i] = 0
            meta[1] -= 1
            bond_refresh(occ, act, pos, meta, i - 1)
            bond_refresh(occ, act, pos, meta, i)
            return i
    return -1


@njit(nogil=True)
def run_until(occ, act, pos, meta, N, K, j, buf, ib, t, t_end, max_events,
              integ, last, crossings, tup, tval, tint, tlast, tflag, counts, info):
    """Advance the single-configuration chain from time t towards t_end.

    Returns (status, t, ib). ``info`` receives (kind, site, dt) of the last
    applied event. Bond and tally updates are written out inline: helper
    calls taking arrays cost refcount traffic on every event.
    """
    hop = 0.5 * N * N
    feed = 0.5 * N * j
    n_buf = buf.shape[0]
    n_sites = occ.shape[0]
    n_bonds = n_sites - 1
    has_tuples = tup.shape[0] > 0
    n_done = 0
    while True:
        if n_done >= max_events:
            return EVENT_LIMIT, t, ib
        if ib + 2 > n_buf:
            return NEED_UNIFORMS, t, ib
        rate = meta[0] * hop + 2.0 * feed
        dt = -math.log(1.0 - buf[ib]) / rate
        v = buf[ib + 1] * rate
        ib += 2
        if t + dt > t_end:
            return DONE, t_end, ib
        t += dt
        i = -1
        if v < 2.0 * feed:
            if v < feed:
                for s in range(n_sites - 1, n_sites - 1 - K, -1):
                    if occ[s] == 0:
                        i = s
                        break
                if i >= 0:
                    occ[i] = 1
                    meta[1] += 1
                    kind = BIRTH
                else:
                    kind = BIRTH_ABORTED
            else:
                for s in range(K):
                    if occ[s] == 1:
                        i = s
                        break
                if i >= 0:
                    occ[i] = 0
                    meta[1] -= 1
                    integ[i] += t - last[i]
                    kind = DEATH
                else:
                    kind = DEATH_ABORTED
            if i >= 0:
                last[i] = t
            c1 = i - 1
            c2 = i
            hi_site = i
        else:
            k = int((v - 2.0 * feed) / hop)
            if k >= meta[0]:
                k = meta[0] - 1
            i = act[k]
            left = occ[i]
            occ[i] = occ[i + 1]
            occ[i + 1] = left
            if left == 1:
                crossings[i] += 1
                integ[i] += t - last[i]
            else:
                crossings[i] -= 1
                integ[i + 1] += t - last[i + 1]
            last[i] = t
            last[i + 1] = t
            kind = EXCHANGE
            c1 = i - 1
            c2 = i + 1
            hi_site = i + 1
        if i >= 0:
            for c in (c1, c2):
                if c >= 0 and c < n_bonds:
                    if occ[c] != occ[c + 1]:
                        if pos[c] < 0:
                            m = meta[0]
                            act[m] = c
                            pos[c] = m
                            meta[0] = m + 1
                    else:
                        p = pos[c]
                        if p >= 0:
                            m = meta[0] - 1
                            moved = act[m]
                            act[p] = moved
                            pos[moved] = p
                            pos[c] = -1
                            meta[0] = m
            if has_tuples and (tflag[i] != 0 or tflag[hi_site] != 0):
                _update_tuples(occ, t, tup, tval, tint, tlast)
        counts[kind] += 1
        info[0] = kind
        info[1] = i
        info[2] = dt
        n_done += 1


@njit
def _update_tuples(occ, t, tup, tval, tint, tlast):
    for q in range(tup.shape[0]):
        v = 1
        for m in range(tup.shape[1]):
            s = tup[q, m]
            if s >= 0:
                v *= occ[s]
        if v != tval[q]:
            tint[q] += tval[q] * (t - tlast[q])
            tlast[q] = t
            tval[q] = v


@njit(nogil=True)
def coupled_run(occ2, act2, pos2, meta2, act_u, pos_u, meta_u, N, K, j,
                buf, ib, t, t_end, max_events, info):
    """Basic coupling of two ordered configurations, row 0 below row 1.

    One exchange clock runs on the union of both discrepant-bond sets; the
    sampled bond is swapped in both rows (a no-op where it is not
    discrepant). Birth and death clocks are shared. ``info`` receives
    (kind_0, site_0, kind_1, site_1, dt).
    """
    hop = 0.5 * N * N
    feed = 0.5 * N * j
    n_buf = buf.shape[0]
    n_sites = occ2.shape[1]
    n_bonds = n_sites - 1
    changed = np.empty((2, 2), dtype=np.int64)
    n_changed = np.zeros(2, dtype=np.int64)
    sides_birth = np.zeros(2, dtype=np.int64)
    n_done = 0
    while True:
        if n_done >= max_events:
            return EVENT_LIMIT, t, ib
        if ib + 2 > n_buf:
            return NEED_UNIFORMS, t, ib
        rate = meta_u[0] * hop + 2.0 * feed
        dt = -math.log(1.0 - buf[ib]) / rate
        v = buf[ib + 1] * rate
        ib += 2
        if t + dt > t_end:
            return DONE, t_end, ib
        t += dt
        if v < 2.0 * feed:
            flag = 1 if v < feed else 0
            sides_birth[0] = flag
            sides_birth[1] = flag
            for s in range(2):
                i = -1
                if sides_birth[s] == 1:
                    for x in range(n_sites - 1, n_sites - 1 - K, -1):
                        if occ2[s, x] == 0:
                            i = x
                            break
                    if i >= 0:
                        occ2[s, i] = 1
                        meta2[s, 1] += 1
                else:
                    for x in range(K):
                        if occ2[s, x] == 1:
                            i = x
                            break
                    if i >= 0:
                        occ2[s, i] = 0
                        meta2[s, 1] -= 1
                changed[s, 0] = i
                n_changed[s] = 1 if i >= 0 else 0
            for s in range(2):
                if flag == 1:
                    info[2 * s] = BIRTH if n_changed[s] else BIRTH_ABORTED
                else:
                    info[2 * s] = DEATH if n_changed[s] else DEATH_ABORTED
                info[2 * s + 1] = changed[s, 0]
        else:
            k = int((v - 2.0 * feed) / hop)
            if k >= meta_u[0]:
                k = meta_u[0] - 1
            b = act_u[k]
            for s in range(2):
                left = occ2[s, b]
                if left != occ2[s, b + 1]:
                    occ2[s, b] = occ2[s, b + 1]
                    occ2[s, b + 1] = left
                    changed[s, 0] = b
                    changed[s, 1] = b + 1
                    n_changed[s] = 2
                else:
                    n_changed[s] = 0
                info[2 * s] = EXCHANGE
                info[2 * s + 1] = b
        for s in range(2):
            for q in range(n_changed[s]):
                site = changed[s, q]
                for c in (site - 1, site):
                    if c >= 0 and c < n_bonds:
                        if occ2[s, c] != occ2[s, c + 1]:
                            if pos2[s, c] < 0:
                                m = meta2[s, 0]
                                act2[s, m] = c
                                pos2[s, c] = m
                                meta2[s, 0] = m + 1
                        else:
                            p = pos2[s, c]
                            if p >= 0:
                                m = meta2[s, 0] - 1
                                moved = act2[s, m]
                                act2[s, p] = moved
                                pos2[s, moved] = p
                                pos2[s, c] = -1
                                meta2[s, 0] = m
        for s in range(2):
            for q in range(n_changed[s]):
                site = changed[s, q]
                if occ2[0, site] > occ2[1, site]:
                    return ORDER_VIOLATION, t, ib
                for c in (site - 1, site):
                    if c >= 0 and c < n_bonds:
                        if pos2[0, c] >= 0 or pos2[1, c] >= 0:
                            if pos_u[c] < 0:
                                m = meta_u[0]
                                act_u[m] = c
                                pos_u[c] = m
                                meta_u[0] = m + 1
                        else:
                            p = pos_u[c]
                            if p >= 0:
                                m = meta_u[0] - 1
                                moved = act_u[m]
                                act_u[p] = moved
                                pos_u[moved] = p
                                pos_u[c] = -1
                                meta_u[0] = m
        info[4] = dt
        n_done += 1


@njit(nogil=True)
def mirror_run(occ2, act2, pos2, meta2, N, K, j, buf, ib, t, t_end, checks):
    """Evolve row 0 with a Harris clock stream and row 1 with its mirror.

    Every bond carries its own exchange clock (a null event when the bond is
    not discrepant); bond b of row 0 is paired with bond 2N-1-b of row 1 and
    the birth clock of row 0 with the death clock of row 1. After each event
    ``occ2[0, i] == 1 - occ2[1, 2N - i]`` is checked at every touched site.
    ``checks[0]`` counts events, ``checks[1]`` site comparisons.
    """
    hop = 0.5 * N * N
    feed = 0.5 * N * j
    n_buf = buf.shape[0]
    n_sites = occ2.shape[1]
    n_bonds = n_sites - 1
    top = n_bonds
    rate = n_bonds * hop + 2.0 * feed
    changed = np.empty((2, 2), dtype=np.int64)
    n_changed = np.zeros(2, dtype=np.int64)
    sides_birth = np.zeros(2, dtype=np.int64)
    while True:
        if ib + 2 > n_buf:
            return NEED_UNIFORMS, t, ib
        dt = -math.log(1.0 - buf[ib]) / rate
        v = buf[ib + 1] * rate
        ib += 2
        if t + dt > t_end:
            return DONE, t_end, ib
        t += dt
        if v < 2.0 * feed:
            sides_birth[0] = 1 if v < feed else 0
            sides_birth[1] = 1 - sides_birth[0]
            for s in range(2):
                i = -1
                if sides_birth[s] == 1:
                    for x in range(n_sites - 1, n_sites - 1 - K, -1):
                        if occ2[s, x] == 0:
                            i = x
                            break
                    if i >= 0:
                        occ2[s, i] = 1
                        meta2[s, 1] += 1
                else:
                    for x in range(K):
                        if occ2[s, x] == 1:
                            i = x
                            break
                    if i >= 0:
                        occ2[s, i] = 0
                        meta2[s, 1] -= 1
                changed[s, 0] = i
                n_changed[s] = 1 if i >= 0 else 0
        else:
            k = int((v - 2.0 * feed) / hop)
            if k >= n_bonds:
                k = n_bonds - 1
            for s in range(2):
                b = k if s == 0 else n_bonds - 1 - k
                left = occ2[s, b]
                if left != occ2[s, b + 1]:
                    occ2[s, b] = occ2[s, b + 1]
                    occ2[s, b + 1] = left
                    changed[s, 0] = b
                    changed[s, 1] = b + 1
                    n_changed[s] = 2
                else:
                    n_changed[s] = 0
        for s in range(2):
            for q in range(n_changed[s]):
                site = changed[s, q]
                for c in (site - 1, site):
                    if c >= 0 and c < n_bonds:
                        if occ2[s, c] != occ2[s, c + 1]:
                            if pos2[s, c] < 0:
                                m = meta2[s, 0]
                                act2[s, m] = c
                                pos2[s, c] = m
                                meta2[s, 0] = m + 1
                        else:
                            p = pos2[s, c]
                            if p >= 0:
                                m = meta2[s, 0] - 1
                                moved = act2[s, m]
                                act2[s, p] = moved
                                pos2[s, moved] = p
                                pos2[s, c] = -1
                                meta2[s, 0] = m
        checks[0] += 1
        for s in range(2):
            for q in range(n_changed[s]):
                i = changed[s, q]
                checks[1] += 1
                if occ2[s, i] != 1 - occ2[1 - s, top - i]:
                    return MIRROR_VIOLATION, t, ib
        if n_changed[0] != n_changed[1]:
            return MIRROR_VIOLATION, t, ib


@njit
def flush_tally(occ, t, integ, last, tval, tint, tlast):
    for i in range(occ.shape[0]):
        integ[i] += occ[i] * (t - last[i])
        last[i] = t
    for q in range(tval.shape[0]):
        tint[q] += tval[q] * (t - tlast[q])
        tlast[q] = t


def empty_tuples(n_sites):
    """Placeholder tuple-tracking arrays when no k-point products are wanted."""
    return (
        np.full((0, 1), -1, dtype=np.int64),
        np.zeros(0, dtype=np.int64),
        np.zeros(0, dtype=np.float64),
        np.zeros(0, dtype=np.float64),
        np.zeros(n_sites, dtype=np.int8),
    )
