"""Arithmetic kernels shared by the compiled and the wide-integer backends.

Everything here sticks to the subset of Python that numba compiles. The
module is loaded twice by :mod:`isoclass._backend`: once with every function
wrapped in ``numba.njit`` (residues held in int64) and once as plain Python
with ``INT = object`` so residues are arbitrary-precision ints. Both copies
consume a ``numpy.random.Generator`` in exactly the same order, so a trial
replayed on the wide backend reproduces the compiled result.

Residue matrices hold values in ``[0, p**E)``. Exponent vectors use ``E``
itself as the sentinel for "valuation >= E".
"""
import numpy as np

INT = np.int64
DRAW_LIMIT = 2**62

OK = 0
NEED_MORE = 1
UNRESOLVED = 2


# ---------------------------------------------------------------- scalars


def valuation(x, p, E):
    if x == 0:
        return E
    v = 0
    while x % p == 0:
        x = x // p
        v += 1
    return v


def inv_mod(a, m):
    r0 = m
    r1 = a % m
    s0 = 0
    s1 = 1
    while r1 != 0:
        t = r0 // r1
        r0, r1 = r1, r0 - t * r1
        s0, s1 = s1, s0 - t * s1
    return s0 % m


def uniform(rng, p, k):
    """Uniform residue mod p**k."""
    q = p**k
    if q <= DRAW_LIMIT:
        return int(rng.integers(0, q))
    width = 1
    while p ** (width + 1) <= DRAW_LIMIT:
        width += 1
    x = 0
    scale = 1
    done = 0
    while done < k:
        w = min(width, k - done)
        x += scale * int(rng.integers(0, p**w))
        scale *= p**w
        done += w
    return x


# ---------------------------------------------------------------- mod p


def reduce_mod_p(M, p):
    rows, cols = M.shape
    A = np.zeros((rows, cols), dtype=np.int64)
    for i in range(rows):
        for j in range(cols):
            A[i, j] = M[i, j] % p
    return A


def rref_mod_p(A, p):
    """Row-reduce A (int64, entries mod p) in place; return pivot columns."""
    rows, cols = A.shape
    pivots = np.zeros(min(rows, cols), dtype=np.int64)
    rank = 0
    for c in range(cols):
        if rank == rows:
            break
        piv = -1
        for i in range(rank, rows):
            if A[i, c] != 0:
                piv = i
                break
        if piv < 0:
            continue
        if piv != rank:
            for j in range(cols):
                t = A[piv, j]
                A[piv, j] = A[rank, j]
                A[rank, j] = t
        inv = inv_mod(A[rank, c], p)
        for j in range(cols):
            A[rank, j] = A[rank, j] * inv % p
        for i in range(rows):
            if i != rank and A[i, c] != 0:
                f = A[i, c]
                for j in range(cols):
                    A[i, j] = (A[i, j] - f * A[rank, j]) % p
        pivots[rank] = c
        rank += 1
    return pivots[:rank]


def rank_mod_p(M, p):
    return rref_mod_p(reduce_mod_p(M, p), p).shape[0]


def nullspace_mod_p(G, p):
    """Columns spanning {v : G v = 0} over F_p."""
    rows, cols = G.shape
    R = G.copy()
    pivots = rref_mod_p(R, p)
    rank = pivots.shape[0]
    is_pivot = np.zeros(cols, dtype=np.bool_)
    for i in range(rank):
        is_pivot[pivots[i]] = True
    N = np.zeros((cols, cols - rank), dtype=np.int64)
    k = 0
    for f in range(cols):
        if is_pivot[f]:
            continue
        N[f, k] = 1
        for i in range(rank):
            N[pivots[i], k] = (-R[i, f]) % p
        k += 1
    return N


def inverse_mod(G, p, q):
    """Inverse mod q of a square matrix that is invertible mod p."""
    n = G.shape[0]
    A = np.zeros((n, 2 * n), dtype=INT)
    for i in range(n):
        for j in range(n):
            A[i, j] = G[i, j] % q
        A[i, n + i] = 1
    for c in range(n):
        piv = -1
        for i in range(c, n):
            if A[i, c] % p != 0:
                piv = i
                break
        if piv < 0:
            raise ValueError("matrix is not invertible mod p")
        if piv != c:
            for j in range(2 * n):
                t = A[piv, j]
                A[piv, j] = A[c, j]
                A[c, j] = t
        inv = inv_mod(A[c, c], q)
        for j in range(2 * n):
            A[c, j] = A[c, j] * inv % q
        for i in range(n):
            if i != c and A[i, c] != 0:
                f = A[i, c]
                for j in range(2 * n):
                    A[i, j] = (A[i, j] - f * A[c, j]) % q
    out = np.zeros((n, n), dtype=INT)
    for i in range(n):
        for j in range(n):
            out[i, j] = A[i, n + j]
    return out


def right_inverse_mod_p(F, p):
    """Y with F Y = I over F_p for F of full row rank."""
    rows, cols = F.shape
    pivots = rref_mod_p(F.copy(), p)
    if pivots.shape[0] != rows:
        raise ValueError("functionals are not independent mod p")
    sub = np.zeros((rows, rows), dtype=np.int64)
    for i in range(rows):
        for j in range(rows):
            sub[i, j] = F[i, pivots[j]]
    inv = inverse_mod(sub, p, p)
    Y = np.zeros((cols, rows), dtype=np.int64)
    for j in range(rows):
        for a in range(rows):
            Y[pivots[j], a] = inv[j, a]
    return Y


# ---------------------------------------------------------------- mod p^E


def to_residues(A):
    rows, cols = A.shape
    out = np.zeros((rows, cols), dtype=INT)
    for i in range(rows):
        for j in range(cols):
            out[i, j] = int(A[i, j])
    return out


def matmul_mod(A, B, q):
    rows = A.shape[0]
    inner = A.shape[1]
    cols = B.shape[1]
    C = np.zeros((rows, cols), dtype=INT)
    for i in range(rows):
        for j in range(cols):
            s = 0
            for t in range(inner):
                s = (s + A[i, t] * B[t, j] % q) % q
            C[i, j] = s
    return C


def transpose(A):
    rows, cols = A.shape
    T = np.zeros((cols, rows), dtype=INT)
    for i in range(rows):
        for j in range(cols):
            T[j, i] = A[i, j]
    return T


def snf_exponents(M, p, E):
    """Elementary-divisor valuations of M mod p**E, nondecreasing.

    Destroys M. Pivot is the entry of least valuation, ties broken by the
    smallest row-major index.
    """
    q = p**E
    rows, cols = M.shape
    kmax = min(rows, cols)
    exps = np.zeros(kmax, dtype=np.int64)
    for k in range(kmax):
        best = E
        bi = -1
        bj = -1
        for i in range(k, rows):
            for j in range(k, cols):
                x = M[i, j]
                if x != 0:
                    v = valuation(x, p, E)
                    if v < best:
                        best = v
                        bi = i
                        bj = j
                        if v == 0:
                            break
            if best == 0:
                break
        if bi < 0:
            for t in range(k, kmax):
                exps[t] = E
            break
        exps[k] = best
        if bi != k:
            for j in range(cols):
                t = M[bi, j]
                M[bi, j] = M[k, j]
                M[k, j] = t
        if bj != k:
            for i in range(rows):
                t = M[i, bj]
                M[i, bj] = M[i, k]
                M[i, k] = t
        pv = p**best
        uinv = inv_mod(M[k, k] // pv, q)
        for i in range(k + 1, rows):
            x = M[i, k]
            if x != 0:
                f = (x // pv) * uinv % q
                for j in range(k, cols):
                    M[i, j] = (M[i, j] - f * M[k, j] % q) % q
        # the matching column operations only touch row k, which is done
    return exps


def exps_resolved(exps, E, max_free):
    free = 0
    for t in range(exps.shape[0]):
        e = exps[t]
        if e == E:
            free += 1
        elif e > E - 2 and e > 0:
            return False
    return free <= max_free


def core_ok(exps, E, slack):
    for t in range(exps.shape[0]):
        e = exps[t]
        if e == E:
            return False
        if e > 0 and e > E - slack:
            return False
    return True


# ---------------------------------------------------------------- samplers


def alt_haar(rng, n, p, E):
    q = p**E
    A = np.zeros((n, n), dtype=INT)
    for i in range(n):
        for j in range(i + 1, n):
            a = uniform(rng, p, E)
            A[i, j] = a
            A[j, i] = (q - a) % q
    return A


def alt_extend(rng, A, p, E_old, E_new):
    """Refine an alternating matrix from precision E_old to E_new."""
    n = A.shape[0]
    q = p**E_new
    s = p**E_old
    B = np.zeros((n, n), dtype=INT)
    for i in range(n):
        for j in range(i + 1, n):
            a = (A[i, j] + s * uniform(rng, p, E_new - E_old)) % q
            B[i, j] = a
            B[j, i] = (q - a) % q
    return B


def unimodular(rng, n, p, E):
    while True:
        M = np.zeros((n, n), dtype=INT)
        for i in range(n):
            for j in range(n):
                M[i, j] = uniform(rng, p, E)
        if rank_mod_p(M, p) == n:
            return M


def congruence(M, core, n, p, E):
    """M^t . blockdiag(core, 0) . M mod p**E."""
    q = p**E
    m = core.shape[0]
    D = np.zeros((n, n), dtype=INT)
    for i in range(m):
        for j in range(m):
            D[i, j] = core[i, j]
    return matmul_mod(matmul_mod(transpose(M), D, q), M, q)


# ---------------------------------------------------------------- isotropic summands


def qform_col(B, i, n, q):
    s = 0
    for t in range(n):
        s = (s + B[t, i] * B[n + t, i] % q) % q
    return s


def inner_cols(B, i, j, n, q):
    s = 0
    for t in range(n):
        s = (s + B[t, i] * B[n + t, j] % q) % q
        s = (s + B[n + t, i] * B[t, j] % q) % q
    return s


def ogr_mod_p(rng, n, p):
    """Uniform maximal isotropic subspace of F_p^{2n}, basis as columns."""
    m = 2 * n
    B = np.zeros((m, n), dtype=np.int64)
    for k in range(n):
        G = np.zeros((k, m), dtype=np.int64)
        for i in range(k):
            for t in range(n):
                G[i, t] = B[n + t, i]
                G[i, n + t] = B[t, i]
        N = nullspace_mod_p(G, p)
        d = N.shape[1]
        v = np.zeros(m, dtype=np.int64)
        while True:
            c = np.zeros(d, dtype=np.int64)
            for t in range(d):
                c[t] = rng.integers(0, p)
            for s in range(m):
                acc = 0
                for t in range(d):
                    acc = (acc + N[s, t] * c[t]) % p
                v[s] = acc
            qv = 0
            for t in range(n):
                qv = (qv + v[t] * v[n + t]) % p
            if qv != 0:
                continue
            S = np.zeros((m, k + 1), dtype=np.int64)
            for s in range(m):
                for t in range(k):
                    S[s, t] = B[s, t]
                S[s, k] = v[s]
            if rank_mod_p(S, p) == k + 1:
                break
        for s in range(m):
            B[s, k] = v[s]
    return B


def ogr_lift(rng, B, n, p, e):
    """Uniform lift of an isotropic summand from precision e to e+1."""
    m = 2 * n
    pe = p**e
    q1 = pe * p
    Z = np.zeros((m, n), dtype=INT)
    for s in range(m):
        for i in range(n):
            Z[s, i] = B[s, i] % q1
    H = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        d = qform_col(Z, i, n, q1)
        if d % pe != 0:
            raise ValueError("summand is not isotropic")
        H[i, i] = (-(d // pe)) % p
    for i in range(n):
        for j in range(i + 1, n):
            c = inner_cols(Z, i, j, n, q1)
            if c % pe != 0:
                raise ValueError("summand is not isotropic")
            a = rng.integers(0, p)
            H[i, j] = (a - c // pe) % p
            H[j, i] = (-a) % p
    F = np.zeros((n, m), dtype=np.int64)
    for j in range(n):
        for t in range(n):
            F[j, t] = Z[n + t, j] % p
            F[j, n + t] = Z[t, j] % p
    Y = right_inverse_mod_p(F, p)
    for i in range(n):
        for s in range(m):
            u = 0
            for a in range(n):
                u = (u + H[i, a] * Y[s, a]) % p
            Z[s, i] = (Z[s, i] + pe * u) % q1
    return Z


def ogr_sample(rng, n, p, E):
    B = to_residues(ogr_mod_p(rng, n, p))
    for e in range(1, E):
        B = ogr_lift(rng, B, n, p, e)
    return B


def pivot_rows(B, n, p):
    """Rows chosen greedily top-down whose n x n minor is invertible mod p."""
    m = B.shape[0]
    chosen = np.zeros(n, dtype=np.int64)
    basis = np.zeros((n, n), dtype=np.int64)
    lead = np.zeros(n, dtype=np.int64)
    cnt = 0
    w = np.zeros(n, dtype=np.int64)
    for r in range(m):
        if cnt == n:
            break
        for j in range(n):
            w[j] = B[r, j] % p
        for s in range(cnt):
            f = w[lead[s]]
            if f != 0:
                for j in range(n):
                    w[j] = (w[j] - f * basis[s, j]) % p
        c = -1
        for j in range(n):
            if w[j] != 0:
                c = j
                break
        if c < 0:
            continue
        inv = inv_mod(w[c], p)
        for j in range(n):
            basis[cnt, j] = w[j] * inv % p
        lead[cnt] = c
        chosen[cnt] = r
        cnt += 1
    if cnt < n:
        raise ValueError("columns do not span a direct summand")
    return chosen


def canonical_basis(B, n, p, q):
    rows = pivot_rows(B, n, p)
    G = np.zeros((n, n), dtype=INT)
    for i in range(n):
        for j in range(n):
            G[i, j] = B[rows[i], j] % q
    return matmul_mod(B, inverse_mod(G, p, q), q)


# ---------------------------------------------------------------- trials


def coker_trial(rng, n, p, E, E_cap):
    """Haar alternating n x n matrix, refined until its cokernel is certified."""
    return coker_refine(rng, alt_haar(rng, n, p, E), p, E, E_cap)


def coker_lift_trial(rng, A0, p, E0, E, E_cap):
    """Uniform lift of a fixed matrix mod p**E0 to precision E, then refined."""
    return coker_refine(rng, alt_extend(rng, A0, p, E0, E), p, E, E_cap)


def coker_refine(rng, A, p, E, E_cap):
    Ecur = E
    while True:
        exps = snf_exponents(A.copy(), p, Ecur)
        if exps_resolved(exps, Ecur, 0):
            return exps, Ecur, OK
        if Ecur >= E_cap:
            return exps, Ecur, NEED_MORE
        E_new = min(2 * Ecur, E_cap)
        A = alt_extend(rng, A, p, Ecur, E_new)
        Ecur = E_new


def stratum_trial(rng, n, r, p, E, E_cap, slack, final):
    """Pushforward sampler for the corank-r stratum.

    Returns (exps of A, precision, A, core, boundary events, status).
    """
    m = n - r
    boundary = 0
    while True:
        core = alt_haar(rng, m, p, E)
        Ecur = E
        good = False
        while True:
            ce = snf_exponents(core.copy(), p, Ecur)
            if core_ok(ce, Ecur, slack):
                good = True
                break
            if Ecur >= E_cap:
                break
            E_new = min(2 * Ecur, E_cap)
            core = alt_extend(rng, core, p, Ecur, E_new)
            Ecur = E_new
        if not good:
            if not final:
                empty = np.zeros((0, 0), dtype=INT)
                return ce, Ecur, empty, core, boundary, NEED_MORE
            boundary += 1
            continue
        v = 0
        for t in range(ce.shape[0]):
            v += ce[t]
        accepted = True
        for t in range(r * v):
            if rng.integers(0, p) != 0:
                accepted = False
                break
        if accepted:
            break
    M = unimodular(rng, n, p, Ecur)
    A = congruence(M, core, n, p, Ecur)
    exps = snf_exponents(A.copy(), p, Ecur)
    return exps, Ecur, A, core, boundary, OK


def rst_trial(rng, n, p, E, E_cap):
    """Uniform Z against the standard W; exponents of ker(Y mod p^E)."""
    B = ogr_sample(rng, n, p, E)
    Ecur = E
    while True:
        Y = np.zeros((n, n), dtype=INT)
        for s in range(n):
            for i in range(n):
                Y[s, i] = B[n + s, i]
        exps = snf_exponents(Y, p, Ecur)
        if exps_resolved(exps, Ecur, 1):
            return exps, Ecur, OK
        if Ecur >= E_cap:
            return exps, Ecur, NEED_MORE
        E_new = min(2 * Ecur, E_cap)
        for e in range(Ecur, E_new):
            B = ogr_lift(rng, B, n, p, e)
        Ecur = E_new


def intersection_trial(rng, n, p, e):
    """Exponents of Z/p^e cap W/p^e for uniform Z and standard W."""
    B = ogr_sample(rng, n, p, e)
    Y = np.zeros((n, n), dtype=INT)
    for s in range(n):
        for i in range(n):
            Y[s, i] = B[n + s, i]
    return snf_exponents(Y, p, e)


def mod_p_intersections(rng, n, p, count):
    """Pairwise intersection dimensions of `count` uniform points of OGr_n(F_p)."""
    bases = np.zeros((count, 2 * n, n), dtype=np.int64)
    for c in range(count):
        bases[c] = ogr_mod_p(rng, n, p)
    dims = np.zeros((count, count), dtype=np.int64)
    S = np.zeros((2 * n, 2 * n), dtype=np.int64)
    for a in range(count):
        for b in range(count):
            for s in range(2 * n):
                for t in range(n):
                    S[s, t] = bases[a, s, t]
                    S[s, n + t] = bases[b, s, t]
            dims[a, b] = 2 * n - rank_mod_p(S, p)
    return dims


def ogr_canonical_trial(rng, n, p, E):
    return canonical_basis(ogr_sample(rng, n, p, E), n, p, p**E)


def kernel_dim_trial(rng, n, p):
    return n - rank_mod_p(alt_haar(rng, n, p, 1), p)


def pairing_match_trial(rng, n, p, E, D, U, V, thresholds, rank_D):
    """Haar A lands in D + D M D with matching mod-p rank."""
    q = p**E
    A = alt_haar(rng, n, p, E)
    Delta = np.zeros((n, n), dtype=INT)
    for i in range(n):
        for j in range(n):
            Delta[i, j] = (A[i, j] - D[i, j]) % q
    X = matmul_mod(matmul_mod(U, Delta, q), V, q)
    for i in range(n):
        for j in range(n):
            t = thresholds[i, j]
            if t > 0 and X[i, j] % (p ** min(t, E)) != 0:
                return False
    return rank_mod_p(A, p) == rank_D


# ---------------------------------------------------------------- automorphism count


def count_pairing_homs(table, cand, ncand, target):
    """Tuples (x_0..x_{L-1}), x_j drawn from cand[j], with table[x_j, x_i] = target[j, i]."""
    L = target.shape[0]
    if L == 0:
        return 1
    chosen = np.zeros(L, dtype=np.int64)
    pos = np.zeros(L, dtype=np.int64)
    count = 0
    depth = 0
    while depth >= 0:
        if pos[depth] >= ncand[depth]:
            depth -= 1
            if depth >= 0:
                pos[depth] += 1
            continue
        x = cand[depth, pos[depth]]
        ok = True
        for i in range(depth):
            if table[x, chosen[i]] != target[depth, i]:
                ok = False
                break
        if not ok:
            pos[depth] += 1
        elif depth == L - 1:
            count += 1
            pos[depth] += 1
        else:
            chosen[depth] = x
            depth += 1
            pos[depth] = 0
    return count
