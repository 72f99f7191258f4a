"""Compiled hot paths: frame sampling, SIC peeling, density-evolution sweep.

Randomness is counter-based: every frame derives its own splitmix64 stream
from (seed, absolute frame index), so results are bit-identical no matter
how replications are chunked across workers.
"""

import numpy as np
from numba import njit

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_FRAME_STRIDE = np.uint64(0xD2B74407B1CE6E93)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(inline="always")
def _mix64(z):
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(inline="always")
def _frame_state(seed, index):
    return _mix64(seed ^ (np.uint64(index) * _FRAME_STRIDE))


@njit(inline="always")
def _next_u01(state):
    state = state + _GAMMA
    z = _mix64(state)
    return state, np.float64(z >> _S11) * _INV53


@njit(nogil=True, cache=True)
def _sic_fixpoint(deg, slots, erased, n_users, n_slots,
                  slot_count, slot_sum, pending, pending_flag, decoded):
    """Peel to fixpoint; parallel-pass schedule. Returns the pass count.

    A slot decodes when it holds exactly one un-cancelled replica and that
    replica is not erased; all replicas of users decoded in a pass are
    removed before the next pass. Erased replicas keep interfering until
    their user is decoded elsewhere.
    """
    for s in range(n_slots):
        slot_count[s] = 0
        slot_sum[s] = 0
    for u in range(n_users):
        decoded[u] = 0
        for t in range(deg[u]):
            s = slots[u, t]
            slot_count[s] += 1
            slot_sum[s] += u
    iterations = 0
    while True:
        n_new = 0
        for s in range(n_slots):
            if slot_count[s] == 1:
                u = slot_sum[s]
                if decoded[u] == 0 and pending_flag[u] == 0:
                    for t in range(deg[u]):
                        if slots[u, t] == s:
                            if erased[u, t] == 0:
                                pending[n_new] = u
                                pending_flag[u] = 1
                                n_new += 1
                            break
        if n_new == 0:
            break
        iterations += 1
        for k in range(n_new):
            u = pending[k]
            pending_flag[u] = 0
            decoded[u] = 1
            for t in range(deg[u]):
                s = slots[u, t]
                slot_count[s] -= 1
                slot_sum[s] -= u
    return iterations


@njit(nogil=True, cache=True)
def sic_on_placements(deg, slots, erased, n_slots):
    """Run SIC on explicit placements. Returns (decoded flags, passes)."""
    n_users = deg.shape[0]
    slot_count = np.empty(n_slots, np.int64)
    slot_sum = np.empty(n_slots, np.int64)
    pending = np.empty(max(n_users, 1), np.int64)
    pending_flag = np.zeros(max(n_users, 1), np.uint8)
    decoded = np.empty(n_users, np.uint8)
    iterations = _sic_fixpoint(deg, slots, erased, n_users, n_slots,
                               slot_count, slot_sum, pending, pending_flag, decoded)
    return decoded, iterations


@njit(nogil=True, cache=True)
def simulate_profile_frames(probs, n_slots, p, seed, frame_offset, frames,
                            decoded_out, iters_out):
    """Simulate independent frames for a (possibly mixed) strategy profile.

    probs: (users, d_max) per-user degree probabilities, rows sum to 1.
    decoded_out: (frames, users) uint8, filled per frame.
    """
    n_users, d_max = probs.shape
    perm = np.empty(n_slots, np.int64)
    slots = np.empty((max(n_users, 1), max(d_max, 1)), np.int64)
    erased = np.empty((max(n_users, 1), max(d_max, 1)), np.uint8)
    deg = np.empty(max(n_users, 1), np.int64)
    slot_count = np.empty(n_slots, np.int64)
    slot_sum = np.empty(n_slots, np.int64)
    pending = np.empty(max(n_users, 1), np.int64)
    pending_flag = np.zeros(max(n_users, 1), np.uint8)
    for i in range(n_slots):
        perm[i] = i
    for f in range(frames):
        state = _frame_state(seed, frame_offset + f)
        for u in range(n_users):
            state, x = _next_u01(state)
            d = 1
            acc = probs[u, 0]
            while x >= acc and d < d_max:
                acc += probs[u, d]
                d += 1
            deg[u] = d
            for t in range(d):
                state, y = _next_u01(state)
                j = t + int(y * (n_slots - t))
                if j >= n_slots:
                    j = n_slots - 1
                tmp = perm[t]
                perm[t] = perm[j]
                perm[j] = tmp
                slots[u, t] = perm[t]
                state, e = _next_u01(state)
                erased[u, t] = 0 if e < p else 1
        iters_out[f] = _sic_fixpoint(deg, slots, erased, n_users, n_slots,
                                     slot_count, slot_sum, pending, pending_flag,
                                     decoded_out[f])


@njit(nogil=True, cache=True)
def evaluate_candidate_frames(degrees, user, cand_max, n_slots, p, seed,
                              frame_offset, frames, success_out):
    """Best-reply candidate evaluation with common random numbers.

    All users except `user` keep their pure degree from `degrees`. The
    updated user's replica slots are drawn once per frame as a shuffled
    prefix of length cand_max; candidate degree k+1 transmits the first
    k+1 entries, so candidates share placements and erasure draws.
    success_out: (frames, cand_max) uint8 decode flag of `user`.
    """
    n_users = degrees.shape[0]
    d_max = cand_max
    for u in range(n_users):
        if degrees[u] > d_max:
            d_max = degrees[u]
    perm = np.empty(n_slots, np.int64)
    slots = np.empty((n_users, d_max), np.int64)
    erased = np.empty((n_users, d_max), np.uint8)
    deg = np.empty(n_users, np.int64)
    slot_count = np.empty(n_slots, np.int64)
    slot_sum = np.empty(n_slots, np.int64)
    pending = np.empty(n_users, np.int64)
    pending_flag = np.zeros(n_users, np.uint8)
    decoded = np.empty(n_users, np.uint8)
    for i in range(n_slots):
        perm[i] = i
    for f in range(frames):
        state = _frame_state(seed, frame_offset + f)
        for u in range(n_users):
            d = cand_max if u == user else degrees[u]
            deg[u] = d
            for t in range(d):
                state, y = _next_u01(state)
                j = t + int(y * (n_slots - t))
                if j >= n_slots:
                    j = n_slots - 1
                tmp = perm[t]
                perm[t] = perm[j]
                perm[j] = tmp
                slots[u, t] = perm[t]
                state, e = _next_u01(state)
                erased[u, t] = 0 if e < p else 1
        for k in range(cand_max):
            deg[user] = k + 1
            _sic_fixpoint(deg, slots, erased, n_users, n_slots,
                          slot_count, slot_sum, pending, pending_flag, decoded)
            success_out[f, k] = decoded[user]


@njit(nogil=True, cache=True)
def plr_fixed_point_grid(probs, g_grid, tol, max_iter,
                         plr_out, rho_out, iters_out, conv_out):
    """Unresolved-edge recursion per load value; writes PLR and limit state."""
    d_max = probs.shape[0]
    avg_deg = 0.0
    for d in range(1, d_max + 1):
        avg_deg += d * probs[d - 1]
    for gi in range(g_grid.shape[0]):
        load = g_grid[gi]
        q = 1.0
        converged = False
        it = 0
        for i in range(max_iter):
            rho = 1.0 - np.exp(-q * load * avg_deg)
            num = 0.0
            xp = 1.0
            for d in range(1, d_max + 1):
                num += d * probs[d - 1] * xp
                xp *= rho
            q_next = num / avg_deg
            it = i + 1
            if abs(q_next - q) < tol:
                q = q_next
                converged = True
                break
            q = q_next
        rho = 1.0 - np.exp(-q * load * avg_deg)
        plr = 0.0
        xp = rho
        for d in range(1, d_max + 1):
            plr += probs[d - 1] * xp
            xp *= rho
        plr_out[gi] = plr
        rho_out[gi] = rho
        iters_out[gi] = it
        conv_out[gi] = 1 if converged else 0
