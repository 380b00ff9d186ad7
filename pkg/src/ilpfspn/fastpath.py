"""Fused, numba-compiled run loop for :class:`~ilpfspn.pipeline.PipelineNet`.

This is the same net driven by the same event rules as the generic kernel,
flattened into one compiled function.  It draws from the same four numpy
Generators in the same order, performs the same floating-point operations in
the same order, and coalesces idle ticks the same way, so its results match
the reference engine field for field.  Tracing and observers are only
available on the reference engine.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .kernel import EPS, ConsistencyError, SimulationError, stream_generator
from .pipeline import CONSERVATION_TOL, STREAMS, ConservationError, SimConfig

INF = math.inf
MAX_ZERO_LENGTH_THRESHOLDS = 64

OK, EVENT_CAP, CYCLE_CAP, MISSED_THRESHOLD, THRESHOLD_LOOP, CONSERVATION, NO_SETTLE = range(7)

# indices into the integer result vector
(R_CYCLES, R_BRANCHES, R_MISPRED, R_STALL, R_CONSUMERS, R_VMIS, R_REEXEC, R_REJECTED,
 R_EVENTS, R_THRESHOLDS, R_STATUS, R_PLACE) = range(12)


@njit(cache=True)
def _stage(lv, fetching, W, cap, pass_through):
    x_ic = lv[0]
    x_ib = lv[1]
    x_rs = lv[2]
    x_rob = lv[3]
    x_rr = lv[4]
    x_ex = lv[5]
    ok = True
    if not pass_through:
        c = min(W, x_ex)
        i = min(W, x_rs, cap - x_ex + c)
        s = min(W, x_ib, cap - x_rs + i, cap - x_rob + c, cap - x_rr + c)
        f = min(W, x_ic, cap - x_ib + s) if fetching else 0.0
    else:
        f = min(W, x_ic) if fetching else 0.0
        s = W
        i = W
        c = W
        settled = False
        for _ in range(16):
            s1 = min(s, x_ib + f)
            i1 = min(i, x_rs + s1)
            c1 = min(c, x_ex + i1)
            i1 = min(i1, cap - x_ex + c1)
            s1 = min(s1, cap - x_rs + i1, cap - x_rob + c1, cap - x_rr + c1)
            f1 = min(f, cap - x_ib + s1)
            if f1 == f and s1 == s and i1 == i and c1 == c:
                settled = True
                break
            f = f1
            s = s1
            i = i1
            c = c1
        ok = settled
    if not f > 0.0:
        f = 0.0
    if not s > 0.0:
        s = 0.0
    if not i > 0.0:
        i = 0.0
    if not c > 0.0:
        c = 0.0
    return f, s, i, c, ok


@njit(cache=True)
def _threshold(lv, rt, caps, now, next_tick):
    best = INF
    where = -1
    for k in range(7):
        rate = rt[k]
        if rate < 0.0:
            level = lv[k]
            dt = level / -rate if level > EPS else 0.0
        elif rate > 0.0:
            cap = caps[k]
            if cap == INF:
                continue
            level = lv[k]
            dt = (cap - level) / rate if level < cap - EPS else 0.0
        else:
            continue
        if dt < best:
            best = dt
            where = k
    t = now + best
    if where < 0 or t >= next_tick - EPS:
        return INF, -1
    return t, where


@njit(cache=True)
def _advance(lv, rt, caps, dt):
    # returns the offending place index on a missed threshold, else -1
    for k in range(7):
        x = lv[k] + rt[k] * dt
        if x < EPS or x > caps[k] - EPS:
            if x < EPS:
                if x < -EPS:
                    return k
                x = 0.0
            else:
                if x > caps[k] + EPS:
                    return k
                x = caps[k]
        lv[k] = x
    return -1


@njit(cache=True)
def _jump(lv, caps):
    # one unit EX -> RS; False when it would leave either range
    src = lv[5]
    dst = lv[2]
    if src + EPS < 1.0 or dst + 1.0 > caps[2] + EPS:
        return False
    src = src - 1.0
    dst = dst + 1.0
    if src < EPS:
        src = 0.0
    if dst > caps[2] - EPS:
        dst = caps[2]
    lv[5] = src
    lv[2] = dst
    return True


@njit(cache=True)
def _set_net(rt, f, s, i, c):
    out_rs = s - c
    rt[0] = -f
    rt[1] = f - s
    rt[2] = s - i
    rt[3] = out_rs
    rt[4] = out_rs
    rt[5] = i - c
    rt[6] = c


@njit(cache=True)
def _simulate(W, V, lambda_i, mu_i, p_bmis, p_vmis, C_BR, cap, pass_through, defer,
              g_bt, g_bo, g_ct, g_co, max_events, max_cycles, cons_tol):
    res = np.zeros(12, dtype=np.int64)
    lv = np.zeros(7)
    rt = np.zeros(7)
    caps = np.array([INF, cap, cap, cap, cap, cap, INF])
    lv[0] = V
    w_bpc = 1.0 - p_bmis
    w_bmis = p_bmis
    b_total = w_bpc + w_bmis
    w_vpc = 1.0 - p_vmis
    w_vmis = p_vmis
    v_total = w_vpc + w_vmis

    now = 0.0
    cycle = 0
    next_tick = 1.0
    seq = 0
    absorbed = False
    fetch_token = 1
    bmis = 0
    resolved = 0
    steady = False
    zero_hits = 0
    last_thr = -1.0
    events = 0
    thresholds = 0
    branches = 0
    mispred = 0
    stall = 0
    consumers = 0
    vmis = 0
    reexec = 0
    rejected = 0
    pending = 0

    t_thr = INF
    p_thr = -1
    t_br = INF
    s_br = 0
    t_co = INF
    s_co = 0
    lam = 0.0
    mu = 0.0
    status = OK

    # initial rates and timers
    f, s, i, c, ok = _stage(lv, fetch_token == 1, W, cap, pass_through)
    _set_net(rt, f, s, i, c)
    t_thr, p_thr = _threshold(lv, rt, caps, now, next_tick)
    if p_thr >= 0:
        seq += 1
    nl = lambda_i * f / W
    nm = mu_i * i / W
    if nl != lam or (nl > 0.0 and t_br == INF):
        lam = nl
        if nl == 0.0:
            t_br = INF
        else:
            t_br = now + (-math.log(1.0 - g_bt.random()) / nl + 0.0)
            s_br = seq
            seq += 1
    if nm != mu or (nm > 0.0 and t_co == INF):
        mu = nm
        if nm == 0.0:
            t_co = INF
        else:
            t_co = now + (-math.log(1.0 - g_ct.random()) / nm + 0.0)
            s_co = seq
            seq += 1

    while not absorbed:
        if events >= max_events:
            status = EVENT_CAP
            break
        if cycle > max_cycles:
            status = CYCLE_CAP
            break

        # earliest queue entry by (time, kind, seq), as the heap orders it
        head = INF
        which = -1
        head_seq = 0
        if t_thr < INF:
            head = t_thr
            which = 0
        if t_br < INF and (t_br < head or (t_br == head and which == -1)):
            head = t_br
            which = 1
            head_seq = s_br
        if t_co < INF and (t_co < head or (t_co == head and which != 0 and (which == -1 or s_co < head_seq))):
            head = t_co
            which = 2
            head_seq = s_co

        # coalesce idle ticks
        if steady:
            room = (lv[0] - f) / f - (next_tick - now)
            if room >= 0.0:
                k = int(room) + 1
                if head != INF:
                    k = min(k, int(math.ceil((head - next_tick) / 1.0)))
                if k > 0:
                    last = next_tick + (k - 1) * 1.0
                    bad = _advance(lv, rt, caps, last - now)
                    if bad >= 0:
                        status = MISSED_THRESHOLD
                        res[R_PLACE] = bad
                        break
                    now = last
                    cycle += k
                    next_tick = last + 1.0
                    events += k
                    continue

        events += 1
        if which >= 0 and head <= next_tick:
            bad = _advance(lv, rt, caps, head - now) if head > now else -1
            if bad >= 0:
                status = MISSED_THRESHOLD
                res[R_PLACE] = bad
                break
            now = head
            if which == 0:
                t_thr = INF
                thresholds += 1
                if now == last_thr:
                    zero_hits += 1
                    if zero_hits > MAX_ZERO_LENGTH_THRESHOLDS:
                        status = THRESHOLD_LOOP
                        res[R_PLACE] = p_thr
                        break
                else:
                    zero_hits = 0
                    last_thr = now
                steady = False
                f, s, i, c, ok = _stage(lv, fetch_token == 1, W, cap, pass_through)
                if not ok:
                    status = NO_SETTLE
                    break
                _set_net(rt, f, s, i, c)
                t_thr, p_thr = _threshold(lv, rt, caps, now, next_tick)
                if p_thr >= 0:
                    seq += 1
                nl = lambda_i * f / W
                nm = mu_i * i / W
                if nl != lam or (nl > 0.0 and t_br == INF):
                    lam = nl
                    if nl == 0.0:
                        t_br = INF
                    else:
                        t_br = now + (-math.log(1.0 - g_bt.random()) / nl + 0.0)
                        s_br = seq
                        seq += 1
                if nm != mu or (nm > 0.0 and t_co == INF):
                    mu = nm
                    if nm == 0.0:
                        t_co = INF
                    else:
                        t_co = now + (-math.log(1.0 - g_ct.random()) / nm + 0.0)
                        s_co = seq
                        seq += 1
            elif which == 1:
                t_br = INF
                branches += 1
                u = g_bo.random()
                if w_bpc > 0.0 and u < w_bpc / b_total:
                    t_br = now + (-math.log(1.0 - g_bt.random()) / lam + 0.0)
                    s_br = seq
                    seq += 1
                else:
                    mispred += 1
                    fetch_token = 0
                    bmis = C_BR
                    steady = False
                    f = 0.0
                    _set_net(rt, f, s, i, c)
                    t_thr, p_thr = _threshold(lv, rt, caps, now, next_tick)
                    if p_thr >= 0:
                        seq += 1
                    lam = 0.0
                    nm = mu_i * i / W
                    if nm != mu or (nm > 0.0 and t_co == INF):
                        mu = nm
                        if nm == 0.0:
                            t_co = INF
                        else:
                            t_co = now + (-math.log(1.0 - g_ct.random()) / nm + 0.0)
                            s_co = seq
                            seq += 1
            else:
                t_co = INF
                consumers += 1
                u = g_co.random()
                if not (w_vpc > 0.0 and u < w_vpc / v_total):
                    vmis += 1
                    if defer:
                        pending += 1
                    elif _jump(lv, caps):
                        t_thr, p_thr = _threshold(lv, rt, caps, now, next_tick)
                        if p_thr >= 0:
                            seq += 1
                        reexec += 1
                        steady = False
                    else:
                        rejected += 1
                if mu == 0.0:
                    t_co = INF
                else:
                    t_co = now + (-math.log(1.0 - g_ct.random()) / mu + 0.0)
                    s_co = seq
                    seq += 1
        else:
            bad = _advance(lv, rt, caps, next_tick - now) if next_tick > now else -1
            if bad >= 0:
                status = MISSED_THRESHOLD
                res[R_PLACE] = bad
                break
            now = next_tick
            cycle += 1
            next_tick = now + 1.0
            if bmis > 0:
                bmis -= 1
                resolved += 1
                stall += 1
                if bmis == 0 and resolved == C_BR:
                    fetch_token = 1
                    resolved = 0
            f, s, i, c, ok = _stage(lv, fetch_token == 1, W, cap, pass_through)
            if not ok:
                status = NO_SETTLE
                break
            _set_net(rt, f, s, i, c)
            t_thr, p_thr = _threshold(lv, rt, caps, now, next_tick)
            if p_thr >= 0:
                seq += 1
            nl = lambda_i * f / W
            nm = mu_i * i / W
            if nl != lam or (nl > 0.0 and t_br == INF):
                lam = nl
                if nl == 0.0:
                    t_br = INF
                else:
                    t_br = now + (-math.log(1.0 - g_bt.random()) / nl + 0.0)
                    s_br = seq
                    seq += 1
            if nm != mu or (nm > 0.0 and t_co == INF):
                mu = nm
                if nm == 0.0:
                    t_co = INF
                else:
                    t_co = now + (-math.log(1.0 - g_ct.random()) / nm + 0.0)
                    s_co = seq
                    seq += 1
            steady = f > 0.0 and f == s and s == i and i == c and bmis == 0
            if (lv[0] <= EPS and lv[1] <= EPS and lv[2] <= EPS and lv[5] <= EPS
                    and bmis == 0 and resolved == 0):
                if abs(lv[6] - V) > cons_tol:
                    status = CONSERVATION
                    break
                absorbed = True
                rejected += pending
                pending = 0

        # deferred re-executions fire as soon as the jump fits
        while pending > 0 and not absorbed and _jump(lv, caps):
            t_thr, p_thr = _threshold(lv, rt, caps, now, next_tick)
            if p_thr >= 0:
                seq += 1
            pending -= 1
            reexec += 1
            steady = False

    res[R_CYCLES] = cycle
    res[R_BRANCHES] = branches
    res[R_MISPRED] = mispred
    res[R_STALL] = stall
    res[R_CONSUMERS] = consumers
    res[R_VMIS] = vmis
    res[R_REEXEC] = reexec
    res[R_REJECTED] = rejected
    res[R_EVENTS] = events
    res[R_THRESHOLDS] = thresholds
    res[R_STATUS] = status
    return res, lv


def simulate_fused(config: SimConfig, max_events: int, max_cycles: int):
    """Run ``config`` to absorption; returns (integer counters, final levels)."""
    gens = [stream_generator(config.seed, name) for name in STREAMS]
    V = float(config.V)
    res, levels = _simulate(
        float(config.W), V, float(config.lambda_i), float(config.mu_i),
        float(config.p_bmis), float(config.p_vmis), int(config.C_BR), config.capacity,
        bool(config.pass_through), bool(config.defer_reexecution), gens[0], gens[1], gens[2], gens[3],
        int(max_events), int(max_cycles), CONSERVATION_TOL * max(1.0, V / 1e6),
    )
    status = int(res[R_STATUS])
    if status == EVENT_CAP:
        raise SimulationError(f"event cap {max_events} reached")
    if status == CYCLE_CAP:
        raise SimulationError(f"cycle cap {max_cycles} exceeded")
    if status == MISSED_THRESHOLD:
        raise ConsistencyError(f"place {int(res[R_PLACE])} left its range (missed threshold)")
    if status == THRESHOLD_LOOP:
        raise ConsistencyError(f"threshold loop on place {int(res[R_PLACE])}")
    if status == CONSERVATION:
        raise ConservationError(f"absorbed with P_REG={levels[6]!r}, expected V={V!r}")
    if status == NO_SETTLE:
        raise SimulationError("pass-through rate iteration did not settle")
    return res, levels
