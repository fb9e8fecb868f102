"""Inner loops of the stabilisers and analysers.

Every kernel works on flat C-ordered views of the box arrays and on the
flat-index offsets of the 2d directions. A kernel never topples a site on the
outermost box layer (``edge``); it returns ``GROW`` instead and the caller
enlarges the box and calls again.

Sequential kernels (FIFO, random order, waves, avalanches) are written once
in numba-compatible Python: the numba backend compiles them, the numpy backend
runs the same source interpreted. Data-parallel kernels (sweeps, synchronous
steps, Jacobi iteration, burning) have separate vectorised numpy versions.
"""
import numpy as np

from ._backend import njit

OK = 0
GROW = 1
PARITY = 2
OVERFLOW = 3
BUSTED = 4


# --- bulk FIFO stabilisation ------------------------------------------------

def _fifo_bulk(H, T, D, offs, c, hmax, edge):
    N = H.size
    nd = offs.size
    queue = np.empty(N, dtype=np.int64)
    inq = np.zeros(N, dtype=np.uint8)
    head = 0
    cnt = 0
    for p in range(N):
        if H[p] > hmax:
            queue[cnt] = p
            inq[p] = 1
            cnt += 1
    topplings = 0
    pops = 0
    while cnt > 0:
        p = queue[head]
        head += 1
        if head == N:
            head = 0
        cnt -= 1
        inq[p] = 0
        hp = H[p]
        if hp <= hmax:
            continue
        if edge[p]:
            return GROW, topplings, pops
        pops += 1
        k = hp // c
        tot = k * c
        H[p] = hp - tot
        T[p] += k
        topplings += k
        full = tot // nd
        rem = tot - full * nd
        d0 = np.int64(D[p])
        for i in range(nd):
            amt = full
            if (i - d0 - 1) % nd < rem:
                amt += 1
            if amt > 0:
                q = p + offs[i]
                H[q] += amt
                if H[q] > hmax and inq[q] == 0:
                    tail = head + cnt
                    if tail >= N:
                        tail -= N
                    queue[tail] = q
                    inq[q] = 1
                    cnt += 1
        D[p] = (d0 + tot) % nd
    return OK, topplings, pops


fifo_bulk_jit = njit(_fifo_bulk)


def _fifo_sp(H, T, offs, hmax, edge):
    """FIFO bulk toppling specialised to c = 2d, where every neighbour gets
    the same share and D never changes."""
    N = H.size
    nd = offs.size
    queue = np.empty(N, dtype=np.int64)
    inq = np.zeros(N, dtype=np.uint8)
    head = 0
    cnt = 0
    for p in range(N):
        if H[p] > hmax:
            queue[cnt] = p
            inq[p] = 1
            cnt += 1
    topplings = 0
    pops = 0
    while cnt > 0:
        p = queue[head]
        head += 1
        if head == N:
            head = 0
        cnt -= 1
        inq[p] = 0
        hp = H[p]
        if hp <= hmax:
            continue
        if edge[p]:
            return GROW, topplings, pops
        pops += 1
        k = hp // nd
        H[p] = hp - k * nd
        T[p] += k
        topplings += k
        for i in range(nd):
            q = p + offs[i]
            hq = H[q] + k
            H[q] = hq
            if hq > hmax and inq[q] == 0:
                tail = head + cnt
                if tail >= N:
                    tail -= N
                queue[tail] = q
                inq[q] = 1
                cnt += 1
    return OK, topplings, pops


fifo_sp_jit = njit(_fifo_sp)


def _shift_add(dst, src, vec, scale=1):
    """dst[x + vec] += scale * src[x] for x, x + vec both in the box."""
    d = dst.ndim
    a = [slice(None)] * d
    b = [slice(None)] * d
    for k in range(d):
        if vec[k] > 0:
            a[k], b[k] = slice(1, None), slice(0, -1)
        elif vec[k] < 0:
            a[k], b[k] = slice(0, -1), slice(1, None)
    if scale == 1:
        dst[tuple(a)] += src[tuple(b)]
    else:
        dst[tuple(a)] += scale * src[tuple(b)]


def sweep_bulk_numpy(H, T, D, table, c, hmax, edge):
    """Parallel-update fallback: every unstable site topples H // c times per
    sweep. This is a legal toppling order, so it reaches the same final
    configuration as the FIFO kernel."""
    nd = len(table)
    edge = edge.reshape(H.shape).astype(bool)
    topplings = 0
    sweeps = 0
    while True:
        unstable = H > hmax
        if not unstable.any():
            return OK, topplings, sweeps
        if (unstable & edge).any():
            return GROW, topplings, sweeps
        k = np.where(unstable, H // c, 0)
        tot = k * c
        H -= tot
        T += k
        topplings += int(k.sum())
        sweeps += 1
        if c == nd:
            for v in table:
                _shift_add(H, k, v)
        else:
            d0 = D.astype(np.int64)
            full = tot // nd
            rem = tot - full * nd
            for i, v in enumerate(table):
                amt = full + (((i - d0 - 1) % nd) < rem)
                _shift_add(H, amt, v)
            D[...] = (d0 + tot) % nd


# --- single-toppling reference orders ---------------------------------------

def _single_random(H, T, D, offs, c, hmax, edge, seed):
    """One toppling at a time at a uniformly chosen unstable site."""
    np.random.seed(seed)
    N = H.size
    nd = offs.size
    lst = np.empty(N, dtype=np.int64)
    pos = np.full(N, -1, dtype=np.int64)
    m = 0
    for p in range(N):
        if H[p] > hmax:
            lst[m] = p
            pos[p] = m
            m += 1
    topplings = 0
    while m > 0:
        j = np.random.randint(0, m)
        p = lst[j]
        if edge[p]:
            return GROW, topplings
        d0 = np.int64(D[p])
        H[p] -= c
        T[p] += 1
        D[p] = (d0 + c) % nd
        topplings += 1
        if H[p] <= hmax:
            last = lst[m - 1]
            lst[j] = last
            pos[last] = j
            pos[p] = -1
            m -= 1
        for s in range(1, c + 1):
            q = p + offs[(d0 + s) % nd]
            H[q] += 1
            if H[q] > hmax and pos[q] < 0:
                lst[m] = q
                pos[q] = m
                m += 1
    return OK, topplings


single_random_jit = njit(_single_random)


def _single_fifo(H, T, D, offs, c, hmax, edge):
    N = H.size
    nd = offs.size
    queue = np.empty(N, dtype=np.int64)
    inq = np.zeros(N, dtype=np.uint8)
    head = 0
    cnt = 0
    for p in range(N):
        if H[p] > hmax:
            queue[cnt] = p
            inq[p] = 1
            cnt += 1
    topplings = 0
    while cnt > 0:
        p = queue[head]
        head = (head + 1) % N
        cnt -= 1
        inq[p] = 0
        if H[p] <= hmax:
            continue
        if edge[p]:
            return GROW, topplings
        d0 = np.int64(D[p])
        H[p] -= c
        T[p] += 1
        D[p] = (d0 + c) % nd
        topplings += 1
        for s in range(1, c + 1):
            q = p + offs[(d0 + s) % nd]
            H[q] += 1
            if H[q] > hmax and inq[q] == 0:
                queue[(head + cnt) % N] = q
                inq[q] = 1
                cnt += 1
        if H[p] > hmax and inq[p] == 0:
            queue[(head + cnt) % N] = p
            inq[p] = 1
            cnt += 1
    return OK, topplings


single_fifo_jit = njit(_single_fifo)


# --- waves (SP only: D is untouched since c = 2d) ---------------------------

def _one_wave(H, T, offs, hmax, edge, p0, buf):
    """Topple p0 once, then every other site that becomes unstable, never p0
    again. Toppled sites are appended to ``buf``; on GROW or OVERFLOW the
    wave is undone so the caller can retry on a larger box."""
    N = H.size
    nd = offs.size
    queue = np.empty(N, dtype=np.int64)
    inq = np.zeros(N, dtype=np.uint8)
    head = 0
    cnt = 0
    count = 0
    status = OK
    if edge[p0]:
        return GROW, 0
    H[p0] -= nd
    T[p0] += 1
    buf[0] = p0
    count = 1
    for i in range(nd):
        q = p0 + offs[i]
        H[q] += 1
        if q != p0 and H[q] > hmax and inq[q] == 0:
            queue[(head + cnt) % N] = q
            inq[q] = 1
            cnt += 1
    while cnt > 0:
        p = queue[head]
        head = (head + 1) % N
        cnt -= 1
        inq[p] = 0
        if p == p0 or H[p] <= hmax:
            continue
        if edge[p]:
            status = GROW
            break
        if count == buf.size:
            status = OVERFLOW
            break
        H[p] -= nd
        T[p] += 1
        buf[count] = p
        count += 1
        for i in range(nd):
            q = p + offs[i]
            H[q] += 1
            if q != p0 and H[q] > hmax and inq[q] == 0:
                queue[(head + cnt) % N] = q
                inq[q] = 1
                cnt += 1
    if status != OK:
        for j in range(count):
            p = buf[j]
            H[p] += nd
            T[p] -= 1
            for i in range(nd):
                H[p + offs[i]] -= 1
        return status, 0
    return OK, count


one_wave_jit = njit(_one_wave)


# --- synchronous (Le Borgne-Rossin) steps, SP only ---------------------------

def _sync_steps(H, T, offs, hmax, edge, parity, front, nfront, stamp, step0, max_steps):
    """Advance up to ``max_steps`` steps. ``front[:nfront]`` holds the
    unstable sites, which must all share one parity class."""
    nd = offs.size
    nxt = np.empty_like(front)
    steps = 0
    topplings = 0
    while nfront > 0 and steps < max_steps:
        par = parity[front[0]]
        for j in range(nfront):
            p = front[j]
            if parity[p] != par:
                return PARITY, nfront, steps, topplings
            if edge[p]:
                return GROW, nfront, steps, topplings
        for j in range(nfront):
            p = front[j]
            k = H[p] // nd
            H[p] -= k * nd
            T[p] += k
            topplings += k
            for i in range(nd):
                H[p + offs[i]] += k
        steps += 1
        tag = step0 + steps
        m = 0
        for j in range(nfront):
            p = front[j]
            for i in range(nd):
                q = p + offs[i]
                if H[q] > hmax and stamp[q] != tag:
                    stamp[q] = tag
                    nxt[m] = q
                    m += 1
        for j in range(m):
            front[j] = nxt[j]
        nfront = m
    return OK, nfront, steps, topplings


sync_steps_jit = njit(_sync_steps)


def sync_step_numpy(H, T, table, hmax, edge, parity):
    """One synchronous step on the full box; returns (status, topplings)."""
    nd = len(table)
    unstable = H > hmax
    if not unstable.any():
        return OK, 0
    par = parity.reshape(H.shape)[unstable]
    if par.min() != par.max():
        return PARITY, 0
    if (unstable & edge.reshape(H.shape).astype(bool)).any():
        return GROW, 0
    k = np.where(unstable, H // nd, 0)
    H -= nd * k
    T += k
    for v in table:
        _shift_add(H, k, v)
    return OK, int(k.sum())


# --- toppling-function fixed point (Jacobi sweeps) ---------------------------

def _jacobi(H0, T, offs, nd, edge, near_edge, max_sweeps):
    """Iterate T <- max(floor((H0 + sum_nbrs T) / 2d), 0) in full sweeps
    until a sweep changes nothing. Sites on the outer layer stay at zero;
    GROW is returned as soon as a site next to it becomes positive."""
    N = T.size
    Tn = T.copy()
    sweeps = 0
    while sweeps < max_sweeps:
        changed = False
        grow = False
        for p in range(N):
            if edge[p]:
                continue
            s = H0[p]
            for i in range(nd):
                s += T[p + offs[i]]
            v = s // nd
            if v < 0:
                v = 0
            if v != T[p]:
                changed = True
            Tn[p] = v
            if v > 0 and near_edge[p]:
                grow = True
        for p in range(N):
            T[p] = Tn[p]
        sweeps += 1
        if grow:
            return GROW, sweeps
        if not changed:
            return OK, sweeps
    return BUSTED, sweeps


jacobi_jit = njit(_jacobi)


def jacobi_numpy(H0, T, table, nd, edge, near_edge, max_sweeps):
    edge = edge.reshape(T.shape).astype(bool)
    near_edge = near_edge.reshape(T.shape).astype(bool)
    sweeps = 0
    S = np.empty_like(T)
    while sweeps < max_sweeps:
        S[...] = H0
        for v in table:
            _shift_add(S, T, -np.asarray(v))
        new = np.maximum(S // nd, 0)
        new[edge] = 0
        sweeps += 1
        changed = not np.array_equal(new, T)
        T[...] = new
        if (new[near_edge] > 0).any():
            return GROW, sweeps
        if not changed:
            return OK, sweeps
    return BUSTED, sweeps


# --- untoppling avalanche (c = 1) ---------------------------------------------

def _avalanche(H, T, D, offs, p, chain):
    """Untopple p, then keep untoppling whichever site just lost a particle
    while it has T > 0 and H < 0. Returns (status, length, end site)."""
    nd = offs.size
    L = 0
    while True:
        if L == chain.size:
            return OVERFLOW, L, p
        T[p] -= 1
        H[p] += 1
        dd = (np.int64(D[p]) - 1) % nd
        D[p] = dd
        q = p + offs[(dd + 1) % nd]
        H[q] -= 1
        chain[L] = p
        L += 1
        if T[q] > 0 and H[q] < 0:
            p = q
        else:
            return OK, L, q


avalanche_jit = njit(_avalanche)


# --- burning test --------------------------------------------------------------

def _burn(H, member, offs, burnt):
    """Worklist burning: an unburnt member burns once H is at least its
    number of unburnt member neighbours. Marks ``burnt`` (zeroed by the
    caller) and returns the count burnt."""
    N = H.size
    nd = offs.size
    need = np.zeros(N, dtype=np.int64)
    stack = np.empty(N, dtype=np.int64)
    top = 0
    for p in range(N):
        if member[p]:
            c = 0
            for i in range(nd):
                if member[p + offs[i]]:
                    c += 1
            need[p] = c
            if H[p] >= c:
                burnt[p] = 1
                stack[top] = p
                top += 1
    total = 0
    while top > 0:
        top -= 1
        p = stack[top]
        total += 1
        for i in range(nd):
            q = p + offs[i]
            if member[q] and burnt[q] == 0:
                need[q] -= 1
                if H[q] >= need[q]:
                    burnt[q] = 1
                    stack[top] = q
                    top += 1
    return total


burn_jit = njit(_burn)


def burn_numpy(H, member, table):
    """Round-based burning: all currently burnable members burn together.
    Returns the boolean mask of members left unburnt."""
    unburnt = member.astype(bool)
    while True:
        cnt = np.zeros(H.shape, dtype=np.int64)
        for v in table:
            _shift_add(cnt, unburnt.astype(np.int64), -np.asarray(v))
        burnable = unburnt & (H >= cnt)
        if not burnable.any():
            return unburnt
        unburnt &= ~burnable


# --- odometer repair for warm-started sandpiles (c = 2d) ---------------------
#
# State is a candidate odometer w = T with H = H0 + (sum of neighbour T) -
# 2d T. "Relief" untopples sites with T > 0 and H < 0 just far enough to make
# H >= 0; "descent" removes one toppling from every site of the largest
# forbidden subconfiguration inside supp(T), which the burning test exposes.

def _relieve(H, T, offs, queue, inq, cnt):
    """Untopple deficient sites reachable from ``queue[:cnt]`` (a ring
    buffer of size H.size). Returns the number of untopplings."""
    N = H.size
    nd = offs.size
    head = 0
    un = 0
    while cnt > 0:
        p = queue[head]
        head += 1
        if head == N:
            head = 0
        cnt -= 1
        inq[p] = 0
        if T[p] <= 0 or H[p] >= 0:
            continue
        k = (nd - 1 - H[p]) // nd
        if k > T[p]:
            k = T[p]
        T[p] -= k
        H[p] += k * nd
        un += k
        for i in range(nd):
            q = p + offs[i]
            hq = H[q] - k
            H[q] = hq
            if hq < 0 and T[q] > 0 and inq[q] == 0:
                tail = head + cnt
                if tail >= N:
                    tail -= N
                queue[tail] = q
                inq[q] = 1
                cnt += 1
    return un


def _relieve_all(H, T, offs):
    N = H.size
    queue = np.empty(N, dtype=np.int64)
    inq = np.zeros(N, dtype=np.uint8)
    cnt = 0
    for p in range(N):
        if T[p] > 0 and H[p] < 0:
            queue[cnt] = p
            inq[p] = 1
            cnt += 1
    return relieve_jit(H, T, offs, queue, inq, cnt)


relieve_jit = njit(_relieve)
relieve_all_jit = njit(_relieve_all)


def _descend(H, T, offs, max_rounds):
    """Repeat: burn supp(T); stop if everything burns, else lower T by one on
    the unburnt set and relieve the deficits this creates.

    Returns (status, rounds, lowered, untopplings). Starting from a fixed
    point at or above the least one, every round stays at or above it.
    """
    N = H.size
    nd = offs.size
    member = np.zeros(N, dtype=np.uint8)
    burnt = np.zeros(N, dtype=np.uint8)
    queue = np.empty(N, dtype=np.int64)
    inq = np.zeros(N, dtype=np.uint8)
    rounds = 0
    lowered = 0
    un = 0
    while rounds < max_rounds:
        m = 0
        for p in range(N):
            member[p] = 1 if T[p] > 0 else 0
            burnt[p] = 0
            m += member[p]
        if burn_jit(H, member, offs, burnt) == m:
            return OK, rounds, lowered, un
        rounds += 1
        cnt = 0
        for p in range(N):
            if member[p] == 1 and burnt[p] == 0:
                T[p] -= 1
                H[p] += nd
                lowered += 1
                for i in range(nd):
                    H[p + offs[i]] -= 1
        for p in range(N):
            if member[p] == 1 and burnt[p] == 0:
                for i in range(nd):
                    q = p + offs[i]
                    if H[q] < 0 and T[q] > 0 and inq[q] == 0:
                        queue[cnt] = q
                        inq[q] = 1
                        cnt += 1
        un += relieve_jit(H, T, offs, queue, inq, cnt)
    return BUSTED, rounds, lowered, un


descend_jit = njit(_descend)


def relieve_numpy(H, T, table):
    """Parallel relief: all deficient sites untopple together, repeated."""
    nd = len(table)
    un = 0
    while True:
        bad = (T > 0) & (H < 0)
        if not bad.any():
            return un
        k = np.where(bad, np.minimum((nd - 1 - H) // nd, T), 0)
        T -= k
        H += nd * k
        for v in table:
            _shift_add(H, k, v, -1)
        un += int(k.sum())


def descend_numpy(H, T, table, max_rounds):
    nd = len(table)
    rounds = lowered = un = 0
    while rounds < max_rounds:
        U = burn_numpy(H, T > 0, table)
        if not U.any():
            return OK, rounds, lowered, un
        rounds += 1
        U = U.astype(T.dtype)
        T -= U
        H += nd * U
        for v in table:
            _shift_add(H, U, v, -1)
        lowered += int(U.sum())
        un += relieve_numpy(H, T, table)
    return BUSTED, rounds, lowered, un


# --- odometer repair for warm-started rotor routers (c = 1) --------------------
#
# A site's last toppling sent one particle along its current direction D.
# "Relief" undoes last topplings of sites with T > 0 and H < 0, one at a time.
# "Descent" removes the last toppling from every site of the largest set U of
# toppled sites that stays stable when lowered together: every member must
# get a particle back from another member, so U is the union of all cycles of
# the last-exit arrows.

def _untopple_rotor(H, T, D, offs, p):
    nd = offs.size
    T[p] -= 1
    H[p] += 1
    q = p + offs[D[p]]
    H[q] -= 1
    D[p] = (np.int64(D[p]) - 1) % nd
    return q


def _rotor_relieve(H, T, D, offs, queue, inq, cnt):
    """Like :func:`_relieve` with single untopplings that keep D in step."""
    N = H.size
    head = 0
    un = 0
    while cnt > 0:
        p = queue[head]
        head += 1
        if head == N:
            head = 0
        cnt -= 1
        inq[p] = 0
        while T[p] > 0 and H[p] < 0:
            q = untopple_rotor_jit(H, T, D, offs, p)
            un += 1
            if H[q] < 0 and T[q] > 0 and inq[q] == 0:
                tail = head + cnt
                if tail >= N:
                    tail -= N
                queue[tail] = q
                inq[q] = 1
                cnt += 1
    return un


def _rotor_relieve_all(H, T, D, offs):
    N = H.size
    queue = np.empty(N, dtype=np.int64)
    inq = np.zeros(N, dtype=np.uint8)
    cnt = 0
    for p in range(N):
        if T[p] > 0 and H[p] < 0:
            queue[cnt] = p
            inq[p] = 1
            cnt += 1
    return rotor_relieve_jit(H, T, D, offs, queue, inq, cnt)


def _rotor_removable(H, T, D, offs, keep):
    """Mark in ``keep`` the largest set of toppled sites whose last
    topplings can be undone together without an unstable site; returns
    its size."""
    N = H.size
    recv = np.zeros(N, dtype=np.int64)
    stack = np.empty(N, dtype=np.int64)
    m = 0
    for p in range(N):
        keep[p] = 0
        if T[p] > 0:
            keep[p] = 1
            m += 1
    for p in range(N):
        if keep[p]:
            recv[p + offs[D[p]]] += 1
    top = 0
    for p in range(N):
        if keep[p] and recv[p] < H[p] + 1:
            keep[p] = 0
            stack[top] = p
            top += 1
    while top > 0:
        top -= 1
        p = stack[top]
        m -= 1
        q = p + offs[D[p]]
        recv[q] -= 1
        if keep[q] and recv[q] < H[q] + 1:
            keep[q] = 0
            stack[top] = q
            top += 1
    return m


def _rotor_descend(H, T, D, offs, max_rounds):
    """Rotor counterpart of :func:`_descend`. Returns (status, rounds,
    lowered, untopplings); on OK nothing is left to remove."""
    N = H.size
    keep = np.zeros(N, dtype=np.uint8)
    queue = np.empty(N, dtype=np.int64)
    inq = np.zeros(N, dtype=np.uint8)
    rounds = 0
    lowered = 0
    un = 0
    while rounds < max_rounds:
        m = rotor_removable_jit(H, T, D, offs, keep)
        if m == 0:
            return OK, rounds, lowered, un
        rounds += 1
        lowered += m
        cnt = 0
        for p in range(N):
            if keep[p]:
                q = untopple_rotor_jit(H, T, D, offs, p)
                for r in (p, q):
                    if H[r] < 0 and T[r] > 0 and inq[r] == 0:
                        queue[cnt] = r
                        inq[r] = 1
                        cnt += 1
        un += rotor_relieve_jit(H, T, D, offs, queue, inq, cnt)
    return BUSTED, rounds, lowered, un


untopple_rotor_jit = njit(_untopple_rotor)
rotor_relieve_jit = njit(_rotor_relieve)
rotor_relieve_all_jit = njit(_rotor_relieve_all)
rotor_removable_jit = njit(_rotor_removable)
rotor_descend_jit = njit(_rotor_descend)
