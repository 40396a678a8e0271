"""Independent reference models used by the tests.

Nothing here imports the code under test.
"""

from __future__ import annotations

import numpy as np

NOT_ARRIVED, WAITING, ACTIVE, DONE = 0, 1, 2, 3


def fixed_step_completions(cores, speed, memory, workers, arrival_step, ops, mem, cont,
                           dt=1e-5, max_steps=10_000_000):
    """Integrate the processor-sharing admission model on a fixed time grid.

    Batched over instances (rows). Arrivals are given as integer step indices
    so they fall exactly on the grid. Within a step, arrivals are registered,
    waiting tasks are examined in arrival order (free worker needed; memory
    shortfall blocks everything behind), then active tasks are served at
    ``speed * min(1, cores / n_active)`` for ``dt``. A task finishing inside
    a step gets its exact crossing time, and for the rest of that step the
    survivors are served at the rate implied by the smaller active set.

    Padding slots are marked with ``ops < 0``. Returns completion times (nan
    for padding).
    """
    cores = np.asarray(cores, float)
    speed = np.asarray(speed, float)
    memory = np.asarray(memory, float)
    workers = np.asarray(workers, int)
    arrival_step = np.asarray(arrival_step, np.int64)
    ops = np.asarray(ops, float)
    mem = np.asarray(mem, float)
    cont = np.asarray(cont, int)
    n, m = ops.shape
    rows = np.arange(n)

    # process slots in arrival order (stable on ties)
    order = np.argsort(arrival_step, axis=1, kind="stable")
    arrival_step = np.take_along_axis(arrival_step, order, 1)
    ops = np.take_along_axis(ops, order, 1)
    mem = np.take_along_axis(mem, order, 1)
    cont = np.take_along_axis(cont, order, 1)

    valid = ops >= 0
    state = np.where(valid, NOT_ARRIVED, DONE)
    remaining = np.where(valid, ops, 0.0)
    completion = np.full((n, m), np.nan)
    n_cont = workers.shape[1]

    step = 0
    while (state != DONE).any():
        if step > max_steps:
            raise RuntimeError("integrator did not terminate")
        if not ((state == ACTIVE) | (state == WAITING)).any():
            step = max(step, int(arrival_step[state == NOT_ARRIVED].min()))
        t = step * dt
        arriving = (state == NOT_ARRIVED) & (arrival_step <= step)
        state[arriving] = WAITING
        if (state == WAITING).any():
            active = state == ACTIVE
            busy = np.zeros((n, n_cont), int)
            for c in range(n_cont):
                busy[:, c] = (active & (cont == c)).sum(1)
            used = np.where(active, mem, 0.0).sum(1)
            blocked = np.zeros(n, bool)
            for j in range(m):
                cand = (state[:, j] == WAITING) & ~blocked
                has_worker = busy[rows, cont[:, j]] < workers[rows, cont[:, j]]
                cand &= has_worker
                fits = used + mem[:, j] <= memory
                blocked |= cand & ~fits
                go = cand & fits
                state[go, j] = ACTIVE
                busy[rows[go], cont[go, j]] += 1
                used = used + np.where(go, mem[:, j], 0.0)
        # zero-op tasks complete on activation
        instant = (state == ACTIVE) & (remaining <= 0)
        completion[instant] = t
        state[instant] = DONE

        # serve [t, t + dt], splitting the step at in-step completions
        left = np.full(n, dt)
        for _ in range(m + 1):
            active = state == ACTIVE
            n_act = active.sum(1)
            live = (n_act > 0) & (left > 0)
            if not live.any():
                break
            rate = speed * np.minimum(1.0, cores / np.maximum(n_act, 1))
            need = np.where(active, remaining / rate[:, None], np.inf)
            first = need.min(1)
            span = np.where(live, np.minimum(first, left), 0.0)
            remaining = np.where(active, remaining - rate[:, None] * span[:, None], remaining)
            finishing = active & live[:, None] & (need <= span[:, None] * (1 + 1e-12))
            start = t + dt - left
            completion = np.where(finishing, start[:, None] + need, completion)
            state[finishing] = DONE
            remaining[finishing] = 0.0
            left = left - span
        step += 1

    out = np.full((n, m), np.nan)
    np.put_along_axis(out, order, completion, 1)
    return out
