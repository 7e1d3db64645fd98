"""Compiled per-groomer simulation loop.

Mirrors :class:`groomsim.model.GroomerState` operation for operation so the
two paths produce bit-identical traces from the same uniform stream.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def run_groomer(u, q, steps, r0, alpha, beta, pool, tol):
    """Simulate one groomer for ``steps`` steps.

    ``u`` is the groomer's uniform stream; every action consumes two values
    (branch draw, partner draw). ``pool < 0`` means an unbounded groomee pool.

    Returns (strengths, trace_step, trace_partner, trace_increment,
    spent_per_step, actions_per_step).
    """
    per_step = int(np.floor(r0 / beta)) + 2
    cap = steps * per_step
    max_partners = cap if pool < 0 else min(pool, cap)
    d = np.zeros(max_partners)
    excluded = np.zeros(max_partners, dtype=np.bool_)
    touched = np.empty(per_step, np.int64)

    tr_step = np.empty(cap, np.int64)
    tr_partner = np.empty(cap, np.int64)
    tr_inc = np.empty(cap)
    spent = np.zeros(steps)
    actions = np.zeros(steps, np.int64)

    n = 0
    k = 0
    ui = 0
    for t in range(1, steps + 1):
        R = r0
        nt = 0
        while R > 0.0:
            x = u[ui]
            y = u[ui + 1]
            ui += 2
            can_new = pool < 0 or n < pool
            total = 0.0
            for j in range(n):
                if not excluded[j]:
                    total += d[j]
            can_reinforce = total > 0.0
            if not can_new and not can_reinforce:
                break

            if (x < q and can_new) or not can_reinforce:
                j = n
                n += 1
                c = beta
            else:
                threshold = y * total
                acc = 0.0
                j = -1
                for jj in range(n):
                    if not excluded[jj]:
                        acc += d[jj]
                        j = jj
                        if acc > threshold:
                            break
                c = alpha * d[j] / t + beta

            if R < c - tol:
                inc = R / c
                pay = R
            else:
                inc = 1.0
                pay = c
            d[j] += inc
            R -= pay
            if R < tol:
                R = 0.0
            excluded[j] = True
            touched[nt] = j
            nt += 1

            tr_step[k] = t
            tr_partner[k] = j
            tr_inc[k] = inc
            k += 1
            spent[t - 1] += pay
            actions[t - 1] += 1
        for s in range(nt):
            excluded[touched[s]] = False
    return d[:n].copy(), tr_step[:k].copy(), tr_partner[:k].copy(), tr_inc[:k].copy(), spent, actions
