"""Independent reference values, written without importing the package."""

import math


def deterministic_cycles(W, V, cap=None):
    """Cycle count of the branch-free, consumer-free pipeline by direct recurrence.

    Each tick recomputes the four stage rates from the levels (downstream
    first, outflow never above the current level) and the cycle then moves
    that much fluid.  Absorption is the first tick at which every place but
    the register file is empty.
    """
    cap = 2 * W if cap is None else cap
    ic, ib, rs, ex, reg = float(V), 0.0, 0.0, 0.0, 0.0
    cycles = 0
    while True:
        commit = min(W, ex)
        initiate = min(W, rs, cap - ex + commit)
        rob = rs + ex
        issue = min(W, ib, cap - rs + initiate, cap - rob + commit)
        fetch = min(W, ic, cap - ib + issue)
        ic -= fetch
        ib += fetch - issue
        rs += issue - initiate
        ex += initiate - commit
        reg += commit
        cycles += 1
        if max(ic, ib, rs, ex) <= 1e-9:
            return cycles


def closed_form_cycles(W, V):
    # fill depth of three stages in front of commit
    return math.ceil(V / W) + 3


def renewal_ipc(lambda_i, p_bmis, C_BR):
    # scalar machine: fetch for an Exp(lambda_i * p_bmis) time, then stall C_BR cycles
    return 1.0 / (1.0 + lambda_i * p_bmis * C_BR)


def vp_bound(W, mu_i):
    return W / (W - mu_i)
