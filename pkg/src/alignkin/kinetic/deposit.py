"""Cloud-in-cell deposition kernels (numba).

All kernels work in index space: a grid point ``i`` sits at ``x0 + i h``.
The alignment flow maps grid tuples to convex combinations of grid
indices, so deposited points never leave the index hull ``[0, n-1]``; the
linear (CIC) weights then conserve mass and first moments exactly.  Any
weight that would land outside the array is returned as leaked mass.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = [
    "deposit_1d",
    "deposit_2d",
    "pair_product_2d",
    "pair_product_1d",
    "pair_general_2d",
    "pair_general_1d",
    "triple_direct_2d",
]


@njit(cache=True)
def _split(s, n):
    i = int(np.floor(s))
    th = s - i
    if i == n - 1 and th == 0.0:
        i = n - 2
        th = 1.0
    return i, th


@njit(cache=True)
def _add1(out, s, m):
    n = out.shape[0]
    i, th = _split(s, n)
    leak = 0.0
    if 0 <= i < n:
        out[i] += m * (1.0 - th)
    else:
        leak += m * (1.0 - th)
    if 0 <= i + 1 < n:
        out[i + 1] += m * th
    else:
        leak += m * th
    return leak


@njit(cache=True)
def _add2(out, s1, s2, m):
    n1 = out.shape[0]
    n2 = out.shape[1]
    i, a = _split(s1, n1)
    j, b = _split(s2, n2)
    leak = 0.0
    wi0 = 1.0 - a
    wj0 = 1.0 - b
    for di in range(2):
        ii = i + di
        wi = wi0 if di == 0 else a
        for dj in range(2):
            jj = j + dj
            wj = wj0 if dj == 0 else b
            w = m * wi * wj
            if w == 0.0:
                continue
            if 0 <= ii < n1 and 0 <= jj < n2:
                out[ii, jj] += w
            else:
                leak += w
    return leak


@njit(cache=True)
def deposit_1d(out, s, m):
    """Deposit masses ``m`` at fractional indices ``s``; returns leaked mass."""
    leak = 0.0
    for q in range(s.shape[0]):
        if m[q] != 0.0:
            leak += _add1(out, s[q], m[q])
    return leak


@njit(cache=True)
def deposit_2d(out, s1, s2, m):
    leak = 0.0
    for q in range(s1.shape[0]):
        if m[q] != 0.0:
            leak += _add2(out, s1[q], s2[q], m[q])
    return leak


@njit(cache=True)
def pair_product_2d(out, A, w, p):
    """Push ``w_k A_k (x) A_k`` through the pair contraction with weight ``p_k``.

    A grid pair ``(i, j)`` moves to ``(p i + (1-p) j, (1-p) i + p j)`` with
    ``p = (1 + a)/2``.  ``A`` holds cell masses, shape ``(K, n)``.  Only
    ``j >= i`` is visited (mirror pairs carry doubled mass), so ``out`` is
    correct after symmetrisation.
    """
    K, n = A.shape
    leak = 0.0
    for k in range(K):
        pk = p[k]
        qk = 1.0 - pk
        wk = w[k]
        for i in range(n):
            ai = A[k, i] * wk
            if ai == 0.0:
                continue
            leak += _add2(out, float(i), float(i), ai * A[k, i])
            ai *= 2.0
            for j in range(i + 1, n):
                m = ai * A[k, j]
                if m == 0.0:
                    continue
                leak += _add2(out, pk * i + qk * j, qk * i + pk * j, m)
    return leak


@njit(cache=True)
def pair_product_1d(out, A, w, p):
    """First-coordinate marginal of :func:`pair_product_2d`."""
    K, n = A.shape
    leak = 0.0
    for k in range(K):
        pk = p[k]
        qk = 1.0 - pk
        wk = w[k]
        for i in range(n):
            ai = A[k, i] * wk
            if ai == 0.0:
                continue
            for j in range(n):
                m = ai * A[k, j]
                if m == 0.0:
                    continue
                leak += _add1(out, pk * i + qk * j, m)
    return leak


@njit(cache=True)
def pair_general_2d(out, G, w, p):
    """Push ``w_k G_k`` (symmetric pair masses, shape ``(K, n, n)``).

    Visits ``j >= i`` only; ``out`` is correct after symmetrisation.
    """
    K, n, _ = G.shape
    leak = 0.0
    for k in range(K):
        pk = p[k]
        qk = 1.0 - pk
        wk = w[k]
        for i in range(n):
            leak += _add2(out, float(i), float(i), G[k, i, i] * wk)
            for j in range(i + 1, n):
                m = 2.0 * G[k, i, j] * wk
                if m == 0.0:
                    continue
                leak += _add2(out, pk * i + qk * j, qk * i + pk * j, m)
    return leak


@njit(cache=True)
def pair_general_1d(out, G, w, p):
    K, n, _ = G.shape
    leak = 0.0
    for k in range(K):
        pk = p[k]
        qk = 1.0 - pk
        wk = w[k]
        for i in range(n):
            for j in range(n):
                m = G[k, i, j] * wk
                if m == 0.0:
                    continue
                leak += _add1(out, pk * i + qk * j, m)
    return leak


@njit(cache=True)
def triple_direct_2d(out, f1m, f2m, w, a):
    """Brute-force three-body deposition (reference route, O(K n^3)).

    Sources are the masses of ``f1 (.) f2`` on the triple grid; each triple is
    contracted by ``a_k`` toward its mean and its first two coordinates are
    deposited with weight ``w_k``.
    """
    n = f1m.shape[0]
    leak = 0.0
    third = 1.0 / 3.0
    for k in range(w.shape[0]):
        ak = a[k]
        wk = w[k] * third
        for i in range(n):
            for j in range(n):
                for l in range(n):
                    m = (f1m[i] * f2m[j, l] + f1m[j] * f2m[i, l] + f1m[l] * f2m[i, j]) * wk
                    if m == 0.0:
                        continue
                    mean = (i + j + l) * third
                    leak += _add2(out, mean + ak * (i - mean), mean + ak * (j - mean), m)
    return leak
