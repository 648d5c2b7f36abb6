"""Compiled update loop.

Companies live in the first ``n`` rows of fixed-capacity arrays; removing a
company moves the last row into the hole. Every company carries cached sums
over all other live companies (sum J, sum max(J,0), sum max(-J,0), sum C)
plus the number of strictly positive and strictly negative J terms,
updated in O(N) on each birth and death so that a capital update is O(1).

``state`` is an int64 vector ``[n, resources, iteration, next_id, births, deaths]``.
``coef`` is a float64 vector indexed by the ``C_*`` constants below.
"""

import math

import numpy as np
from numba import njit

S_N, S_RES, S_ITER, S_NEXT_ID, S_BIRTHS, S_DEATHS = 0, 1, 2, 3, 4, 5
STATE_SIZE = 6

(C_A1, C_A2, C_A3, C_CG, C_CL, C_BT, C_IT, C_PINV, C_XI,
 C_DEDUCT, C_RING, C_HALF_WIDTH, C_EPS_COMP, C_EPS_RES) = range(14)
COEF_SIZE = 14

EPS_COMP = 1e-12
# Stand-in for R in N/R when the resource pool is empty.
EPS_RES = 0.5

NONE, DIED, SPAWNED = 0, 1, 2


@njit(cache=True)
def pair_j(gated, b, c, pa, pb, T):
    """J(a, b) straight from coordinates."""
    L = b.shape[0]
    total = 0.0
    for i in range(L):
        s = 0
        for j in range(L):
            s += b[i, j] * pa[j] + c[i, j] * pb[j]
        total += gated[i, s % T]
    return total / math.sqrt(L)


@njit(cache=True)
def pair_c(b, pa, pb, T, xi, ring):
    """C(a, b) straight from coordinates."""
    L = b.shape[0]
    half = T // 2
    dsum = 0.0
    for i in range(L):
        s = 0
        for j in range(L):
            d = pa[j] - pb[j]
            if ring:
                d = (d + half) % T - half
            s += b[i, j] * d
        if ring:
            s = s % T
            dsum += min(s, T - s)
        else:
            dsum += abs(s)
    return math.exp(-dsum / (L * xi))


# The hot loops work on per-company partial sums: aidx[a, i] = (b[i] . pos[a]) mod T
# and bidx[a, i] = (c[i] . pos[a]) mod T, so the trait-i index of the pair (a, k)
# is (aidx[a, i] + bidx[k, i]) mod T. In ring mode the competition separation of
# trait i is the ring distance of aidx[a, i] - aidx[k, i].


@njit(cache=True)
def partial_indices(b, c, p, T, aout, bout):
    L = b.shape[0]
    for i in range(L):
        sa = 0
        sb = 0
        for j in range(L):
            sa += b[i, j] * p[j]
            sb += c[i, j] * p[j]
        aout[i] = sa % T
        bout[i] = sb % T


@njit(cache=True)
def fast_j(gated, aidx, bidx, a, k, T, inv_sqrt_l):
    L = aidx.shape[1]
    total = 0.0
    for i in range(L):
        s = aidx[a, i] + bidx[k, i]
        if s >= T:
            s -= T
        total += gated[i, s]
    return total * inv_sqrt_l


@njit(cache=True)
def fast_c(b, pos, aidx, a, k, T, xi, ring, ctable):
    if not ring:
        return pair_c(b, pos[a], pos[k], T, xi, False)
    L = aidx.shape[1]
    dsum = 0
    for i in range(L):
        d = aidx[a, i] - aidx[k, i]
        if d < 0:
            d += T
        if T - d < d:
            d = T - d
        dsum += d
    return ctable[dsum]


def competition_table(L, T, xi):
    """exp(-dsum / (L xi)) for every integer total separation 0 .. L*T/2."""
    return np.exp(-np.arange(L * (T // 2) + 1) / (L * xi))


@njit(cache=True)
def recompute_caches(co, kn, n, coef):
    pos, aidx, bidx, capital, birth, ids, jsum, jplus, jminus, csum, npos, nneg = co
    gated, b, c, ctable = kn
    T = gated.shape[1]
    xi = coef[C_XI]
    ring = coef[C_RING] != 0.0
    L = b.shape[0]
    inv = 1.0 / math.sqrt(L)
    for a in range(n):
        partial_indices(b, c, pos[a], T, aidx[a], bidx[a])
    for a in range(n):
        jsum[a] = 0.0
        jplus[a] = 0.0
        jminus[a] = 0.0
        csum[a] = 0.0
        npos[a] = 0
        nneg[a] = 0
    for a in range(n):
        for k in range(n):
            if k == a:
                continue
            v = fast_j(gated, aidx, bidx, a, k, T, inv)
            jsum[a] += v
            if v > 0:
                jplus[a] += v
                npos[a] += 1
            elif v < 0:
                jminus[a] -= v
                nneg[a] += 1
            csum[a] += fast_c(b, pos, aidx, a, k, T, xi, ring, ctable)


@njit(cache=True)
def brute_sums(pos, a, n, gated, b, c, T, xi, ring):
    """(sum J, sum J+, sum J-, sum C) for row ``a`` from coordinates only, no caches."""
    js = 0.0
    jp = 0.0
    jm = 0.0
    cs = 0.0
    for k in range(n):
        if k == a:
            continue
        v = pair_j(gated, b, c, pos[a], pos[k], T)
        js += v
        if v > 0:
            jp += v
        else:
            jm -= v
        cs += pair_c(b, pos[a], pos[k], T, xi, ring)
    return js, jp, jm, cs


@njit(cache=True)
def weight_from_sums(js, cs, n, res, coef):
    first = 0.0
    if cs >= coef[C_EPS_COMP]:
        first = coef[C_A1] * js / cs
    r = float(res) if res > 0 else coef[C_EPS_RES]
    return first - coef[C_A2] * cs - coef[C_A3] * n / r


@njit(cache=True)
def _fold(co, kn, coef, m, n, sign):
    """Add (sign=+1) or subtract (sign=-1) company ``m``'s pair terms to rows 0..n-1, m excluded.

    Returns m's own sums (J, J+, J-, C) and the counts of its positive and
    negative terms over those rows. A sum whose term count drops to zero is
    reset to exactly 0, so that rounding residue never survives the removal
    of the last contributing partner.
    """
    pos, aidx, bidx, capital, birth, ids, jsum, jplus, jminus, csum, npos, nneg = co
    gated, b, c, ctable = kn
    T = gated.shape[1]
    L = aidx.shape[1]
    inv = 1.0 / math.sqrt(L)
    ring = coef[C_RING] != 0.0
    xi = coef[C_XI]
    js = 0.0
    jp = 0.0
    jm = 0.0
    cs = 0.0
    mp = 0
    mn = 0
    isign = 1 if sign > 0 else -1
    for k in range(n):
        if k == m:
            continue
        w = 0.0
        v = 0.0
        for i in range(L):
            s = aidx[k, i] + bidx[m, i]
            if s >= T:
                s -= T
            w += gated[i, s]
            s = aidx[m, i] + bidx[k, i]
            if s >= T:
                s -= T
            v += gated[i, s]
        w *= inv
        v *= inv
        if ring:
            dsum = 0
            for i in range(L):
                d = aidx[m, i] - aidx[k, i]
                if d < 0:
                    d += T
                if T - d < d:
                    d = T - d
                dsum += d
            cc = ctable[dsum]
        else:
            cc = pair_c(b, pos[m], pos[k], T, xi, False)
        jsum[k] += sign * w
        if w > 0:
            jplus[k] += sign * w
            npos[k] += isign
            if npos[k] == 0:
                jplus[k] = 0.0
        elif w < 0:
            jminus[k] -= sign * w
            nneg[k] += isign
            if nneg[k] == 0:
                jminus[k] = 0.0
        if npos[k] == 0 and nneg[k] == 0:
            jsum[k] = 0.0
        csum[k] += sign * cc
        js += v
        if v > 0:
            jp += v
            mp += 1
        elif v < 0:
            jm -= v
            mn += 1
        cs += cc
    return js, jp, jm, cs, mp, mn


@njit(cache=True)
def insert_company(co, kn, state, coef, new_pos, new_capital):
    """Append a company at row n and fold it into every cache. Returns the row."""
    pos, aidx, bidx, capital, birth, ids, jsum, jplus, jminus, csum, npos, nneg = co
    gated, b, c, ctable = kn
    n = state[S_N]
    for j in range(pos.shape[1]):
        pos[n, j] = new_pos[j]
    partial_indices(b, c, pos[n], gated.shape[1], aidx[n], bidx[n])
    capital[n] = new_capital
    birth[n] = state[S_ITER]
    ids[n] = state[S_NEXT_ID]
    js, jp, jm, cs, mp, mn = _fold(co, kn, coef, n, n, 1.0)
    jsum[n] = js
    jplus[n] = jp
    jminus[n] = jm
    csum[n] = cs
    npos[n] = mp
    nneg[n] = mn
    state[S_N] = n + 1
    state[S_RES] -= 1
    state[S_NEXT_ID] += 1
    return n


@njit(cache=True)
def delete_company(co, kn, state, coef, a):
    """Remove row ``a``, return its resource unit, and move the last row into it."""
    pos, aidx, bidx, capital, birth, ids, jsum, jplus, jminus, csum, npos, nneg = co
    n = state[S_N]
    _fold(co, kn, coef, a, n, -1.0)
    last = n - 1
    if a != last:
        for j in range(pos.shape[1]):
            pos[a, j] = pos[last, j]
            aidx[a, j] = aidx[last, j]
            bidx[a, j] = bidx[last, j]
        capital[a] = capital[last]
        birth[a] = birth[last]
        ids[a] = ids[last]
        jsum[a] = jsum[last]
        jplus[a] = jplus[last]
        jminus[a] = jminus[last]
        csum[a] = csum[last]
        npos[a] = npos[last]
        nneg[a] = nneg[last]
    if last == 1:
        # a lone company has no partners at all
        jsum[0] = 0.0
        csum[0] = 0.0
    state[S_N] = last
    state[S_RES] += 1


@njit(cache=True)
def try_spawn(rng, co, kn, state, coef, a):
    """Investment step for founder row ``a``. Returns the child's row or -1."""
    pos = co[0]
    capital = co[3]
    T = kn[0].shape[1]
    if rng.random() >= coef[C_PINV]:
        return -1
    if state[S_RES] < 1:
        return -1
    hw = int(coef[C_HALF_WIDTH])
    L = pos.shape[1]
    child = np.empty(L, dtype=np.int64)
    for j in range(L):
        child[j] = (pos[a, j] + rng.integers(-hw, hw + 1)) % T
    stake = 0.1 * capital[a]
    if coef[C_DEDUCT] != 0.0:
        capital[a] -= stake
    return insert_company(co, kn, state, coef, child, stake)


@njit(cache=True)
def update_once(rng, co, kn, state, coef, check, dev):
    """One stochastic capital update of a uniformly chosen company.

    With ``check`` set, the cached sums of the chosen company are compared
    with a from-scratch recomputation from coordinates; the largest relative
    deviations of H and of sum |J| are kept in ``dev``.
    """
    pos, aidx, bidx, capital, birth, ids, jsum, jplus, jminus, csum, npos, nneg = co
    gated, b, c, ctable = kn
    n = state[S_N]
    if n == 0:
        return NONE
    a = rng.integers(0, n)
    h = weight_from_sums(jsum[a], csum[a], n, state[S_RES], coef)
    if check:
        js, jp, jm, cs = brute_sums(pos, a, n, gated, b, c, gated.shape[1], coef[C_XI], coef[C_RING] != 0.0)
        h_ref = weight_from_sums(js, cs, n, state[S_RES], coef)
        rel = abs(h - h_ref) / max(abs(h_ref), 1e-300)
        if rel > dev[0]:
            dev[0] = rel
        tot_ref = jp + jm
        tot = jplus[a] + jminus[a]
        rel = abs(tot - tot_ref) / max(tot_ref, 1e-300)
        if rel > dev[1]:
            dev[1] = rel
    p_gain = 1.0 / (1.0 + math.exp(-h))
    jtot = jplus[a] + jminus[a]
    if rng.random() < p_gain:
        if jtot > 0.0:
            capital[a] *= 1.0 + coef[C_CG] * jplus[a] / jtot
    else:
        if jtot > 0.0:
            capital[a] *= 1.0 - coef[C_CL] * jminus[a] / jtot
    if capital[a] < coef[C_BT]:
        delete_company(co, kn, state, coef, a)
        state[S_DEATHS] += 1
        return DIED
    if capital[a] > coef[C_IT]:
        if try_spawn(rng, co, kn, state, coef, a) >= 0:
            state[S_BIRTHS] += 1
            return SPAWNED
    return NONE


@njit(cache=True)
def run_iteration(rng, co, kn, state, coef, check, dev):
    """N(t) updates with N(t) frozen at the start; returns (births, deaths, gdp)."""
    state[S_BIRTHS] = 0
    state[S_DEATHS] = 0
    k = state[S_N]
    for _ in range(k):
        if state[S_N] == 0:
            break
        update_once(rng, co, kn, state, coef, check, dev)
    state[S_ITER] += 1
    capital = co[3]
    gdp = 0.0
    for a in range(state[S_N]):
        gdp += capital[a]
    return state[S_BIRTHS], state[S_DEATHS], gdp
