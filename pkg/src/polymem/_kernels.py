"""Compiled inner loops (numba).

Only tight scalar loops live here: the Wolfe nearest-point iteration, the
greedy cover, and a couple of scans that numpy cannot express without huge
temporaries.  Everything is written against plain float64/bool arrays.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _affine_min(P, S, k):
    """Affine-hull minimum-norm weights of P[S[:k]]; returns (alpha, ok)."""
    d = P.shape[1]
    alpha = np.zeros(k)
    if k == 1:
        alpha[0] = 1.0
        return alpha, True
    m = k - 1
    A = np.empty((m, m))
    rhs = np.empty(m)
    p0 = P[S[0]]
    for a in range(m):
        da = P[S[a + 1]] - p0
        s = 0.0
        for c in range(d):
            s -= da[c] * p0[c]
        rhs[a] = s
        for b in range(a, m):
            db = P[S[b + 1]] - p0
            s = 0.0
            for c in range(d):
                s += da[c] * db[c]
            A[a, b] = s
            A[b, a] = s
    # Gaussian elimination with partial pivoting on the m x m system.
    scale = 0.0
    for a in range(m):
        scale = max(scale, abs(A[a, a]))
    if scale == 0.0:
        return alpha, False
    for col in range(m):
        piv = col
        for r in range(col + 1, m):
            if abs(A[r, col]) > abs(A[piv, col]):
                piv = r
        if abs(A[piv, col]) <= 1e-14 * scale:
            return alpha, False
        if piv != col:
            for c in range(m):
                tmp = A[col, c]
                A[col, c] = A[piv, c]
                A[piv, c] = tmp
            tmp = rhs[col]
            rhs[col] = rhs[piv]
            rhs[piv] = tmp
        for r in range(col + 1, m):
            f = A[r, col] / A[col, col]
            for c in range(col, m):
                A[r, c] -= f * A[col, c]
            rhs[r] -= f * rhs[col]
    beta = np.empty(m)
    for r in range(m - 1, -1, -1):
        s = rhs[r]
        for c in range(r + 1, m):
            s -= A[r, c] * beta[c]
        beta[r] = s / A[r, r]
    total = 0.0
    for a in range(m):
        alpha[a + 1] = beta[a]
        total += beta[a]
    alpha[0] = 1.0 - total
    return alpha, True


@njit(cache=True)
def wolfe_min_norm(P, tol):
    """Minimum-norm point of conv(P) by Wolfe's corral iteration."""
    m, d = P.shape
    cap = d + 2
    S = np.empty(cap, np.int64)
    w = np.empty(cap)
    best_n = np.inf
    i0 = 0
    big = 0.0
    for r in range(m):
        s = 0.0
        for c in range(d):
            s += P[r, c] * P[r, c]
        big = max(big, s)
        if s < best_n:
            best_n = s
            i0 = r
    S[0] = i0
    w[0] = 1.0
    k = 1
    x = P[i0].copy()
    if big == 0.0:
        return x
    for _major in range(20 * m + 200):
        xx = 0.0
        for c in range(d):
            xx += x[c] * x[c]
        lowest = np.inf
        j = -1
        for r in range(m):
            s = 0.0
            for c in range(d):
                s += x[c] * P[r, c]
            if s < lowest:
                lowest = s
                j = r
        if xx - lowest <= tol * big or xx <= tol * big:
            break
        seen = False
        for a in range(k):
            if S[a] == j:
                seen = True
        if seen or k >= cap:
            break
        S[k] = j
        w[k] = 0.0
        k += 1
        stuck = False
        for _minor in range(4 * cap):
            alpha, ok = _affine_min(P, S, k)
            if not ok:
                stuck = True
                break
            positive = True
            for a in range(k):
                if alpha[a] <= 1e-15:
                    positive = False
            if positive:
                for a in range(k):
                    w[a] = alpha[a]
                break
            theta = 1.0
            for a in range(k):
                if alpha[a] <= 1e-15:
                    den = w[a] - alpha[a]
                    if den > 0.0:
                        theta = min(theta, w[a] / den)
            for a in range(k):
                w[a] = theta * alpha[a] + (1.0 - theta) * w[a]
            kk = 0
            for a in range(k):
                if w[a] > 1e-15:
                    S[kk] = S[a]
                    w[kk] = w[a]
                    kk += 1
            if kk == k:
                # guard against a stalled step: drop the smallest weight
                low = 0
                for a in range(k):
                    if w[a] < w[low]:
                        low = a
                for a in range(low, k - 1):
                    S[a] = S[a + 1]
                    w[a] = w[a + 1]
                kk = k - 1
            k = kk
            tot = 0.0
            for a in range(k):
                tot += w[a]
            for a in range(k):
                w[a] /= tot
        if stuck:
            k -= 1
            tot = 0.0
            for a in range(k):
                tot += w[a]
            if tot <= 0.0:
                w[0] = 1.0
                k = 1
                tot = 1.0
            for a in range(k):
                w[a] /= tot
        for c in range(d):
            x[c] = 0.0
        for a in range(k):
            for c in range(d):
                x[c] += w[a] * P[S[a], c]
        if stuck:
            break
    return x


@njit(cache=True)
def nearest_points(V, Q, tol):
    """Nearest point of conv(V) to every row of Q (one Wolfe run per row)."""
    n, d = Q.shape
    out = np.empty((n, d))
    P = np.empty_like(V)
    for i in range(n):
        for r in range(V.shape[0]):
            for c in range(d):
                P[r, c] = V[r, c] - Q[i, c]
        x = wolfe_min_norm(P, tol)
        for c in range(d):
            out[i, c] = x[c] + Q[i, c]
    return out


@njit(cache=True)
def greedy_cover(M, t):
    """Greedy set cover over the columns of the boolean matrix M.

    Rows are elements, columns are sets.  Picks the column covering the most
    uncovered rows, lowest index first on ties.  Stops as soon as more than
    ``t`` columns would be needed and reports overflow.  Returns
    (chosen, n_chosen, overflow, uncoverable).
    """
    r, m = M.shape
    counts = np.zeros(m, np.int64)
    for i in range(r):
        for j in range(m):
            if M[i, j]:
                counts[j] += 1
    done = np.zeros(r, np.bool_)
    left = r
    chosen = np.empty(min(t, m) + 1, np.int64)
    nc = 0
    while left > 0:
        j = 0
        for c in range(1, m):
            if counts[c] > counts[j]:
                j = c
        if m == 0 or counts[j] == 0:
            return chosen, nc, False, True
        if nc >= t:
            return chosen, nc, True, False
        chosen[nc] = j
        nc += 1
        for i in range(r):
            if M[i, j] and not done[i]:
                done[i] = True
                left -= 1
                for c in range(m):
                    if M[i, c]:
                        counts[c] -= 1
    return chosen, nc, False, False


@njit(cache=True)
def _solve_square(A, rhs):
    """Solve A x = rhs in place-safe fashion; returns (x, ok)."""
    m = A.shape[0]
    A = A.copy()
    rhs = rhs.copy()
    x = np.zeros(m)
    for col in range(m):
        piv = col
        for r in range(col + 1, m):
            if abs(A[r, col]) > abs(A[piv, col]):
                piv = r
        if abs(A[piv, col]) <= 1e-12:
            return x, False
        if piv != col:
            for c in range(m):
                tmp = A[col, c]
                A[col, c] = A[piv, c]
                A[piv, c] = tmp
            tmp = rhs[col]
            rhs[col] = rhs[piv]
            rhs[piv] = tmp
        for r in range(col + 1, m):
            f = A[r, col] / A[col, col]
            for c in range(col, m):
                A[r, c] -= f * A[col, c]
            rhs[r] -= f * rhs[col]
    for r in range(m - 1, -1, -1):
        s = rhs[r]
        for c in range(r + 1, m):
            s -= A[r, c] * x[c]
        x[r] = s / A[r, r]
    return x, True


@njit(cache=True)
def brute_vertices(N, b, tol):
    """Solve every d-subset of hyperplanes and keep the feasible solutions."""
    n, d = N.shape
    out = []
    if n < d:
        return np.empty((0, d))
    comb = np.arange(d)
    A = np.empty((d, d))
    rhs = np.empty(d)
    while True:
        for a in range(d):
            for c in range(d):
                A[a, c] = N[comb[a], c]
            rhs[a] = b[comb[a]]
        x, ok = _solve_square(A, rhs)
        if ok:
            good = True
            for r in range(n):
                s = -b[r]
                for c in range(d):
                    s += N[r, c] * x[c]
                if s > tol:
                    good = False
                    break
            if good:
                out.append(x)
        # next combination in lexicographic order
        i = d - 1
        while i >= 0 and comb[i] == n - d + i:
            i -= 1
        if i < 0:
            break
        comb[i] += 1
        for j in range(i + 1, d):
            comb[j] = comb[j - 1] + 1
    res = np.empty((len(out), d))
    for i in range(len(out)):
        res[i] = out[i]
    return res


@njit(cache=True)
def _outside(N, b, x, level):
    for j in range(N.shape[0]):
        s = 0.0
        for a in range(x.size):
            s += N[j, a] * x[a]
        if s - level * b[j] > 0:
            return True
    return False


@njit(cache=True)
def cover_rows(axes, N, b, grow):
    """Cover incidence rows over the grid axes[0] x ... x axes[d-1].

    Grid points are visited in row-major order (last axis fastest).  A point
    is an element when it lies outside grow^2 * h for some row h of (N, b);
    its row marks every h with <n, x> > grow * b.

    Along each grid column the points inside every grow^2 * h form an
    interval of the last coordinate; points well inside it are skipped and
    the rest are tested exactly.
    """
    d, k1 = axes.shape
    m = N.shape[0]
    g2 = grow * grow
    z = axes[d - 1]
    span = abs(z[k1 - 1] - z[0]) + 1.0
    columns = k1 ** (d - 1)
    hits = np.empty(k1 ** d, np.int64)
    x = np.empty(d)
    rows = 0
    for col in range(columns):
        flat = col
        for a in range(d - 2, -1, -1):
            x[a] = axes[a, flat % k1]
            flat //= k1
        zl, zu = -np.inf, np.inf
        for j in range(m):
            s = 0.0
            for a in range(d - 1):
                s += N[j, a] * x[a]
            nz = N[j, d - 1]
            room = g2 * b[j] - s
            if nz > 0:
                zu = min(zu, room / nz)
            elif nz < 0:
                zl = max(zl, room / nz)
            elif room < 0:
                zl, zu = np.inf, -np.inf
        pad = 1e-9 * span
        for iz in range(k1):
            x[d - 1] = z[iz]
            if zl + pad < z[iz] < zu - pad:
                continue
            if _outside(N, b, x, g2):
                hits[rows] = col * k1 + iz
                rows += 1
    M = np.empty((rows, m), np.bool_)
    for r in range(rows):
        flat = hits[r]
        for a in range(d - 1, -1, -1):
            x[a] = axes[a, flat % k1]
            flat //= k1
        for j in range(m):
            s = 0.0
            for a in range(d):
                s += N[j, a] * x[a]
            M[r, j] = s > grow * b[j]
    return M
