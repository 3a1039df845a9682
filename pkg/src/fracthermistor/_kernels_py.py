"""Pure numpy implementation of the history-sum kernels.

This is the fallback selected when the compiled ``_kernels`` extension is not
importable, and the reference the extension is benchmarked against.  Every
function here has a twin with the same signature in ``_kernels.pyx``.

Notation: for a target node ``t_k`` and a grid cell ``[t_c, t_{c+1}]`` with
``c + 1 <= k`` put ``a = t_k - t_{c+1}`` and ``d = t_{c+1} - t_c``.  With
``tau = t_k - s`` the cell contributes

    F1    = int_a^{a+d} tau**mu dtau
    left  = (1/d) int_a^{a+d} tau**mu (tau - a) dtau     (weight of v_c)
    right = F1 - left                                    (weight of v_{c+1})

so that ``left*v_c + right*v_{c+1}`` integrates ``(t_k - s)**mu`` exactly
against the linear interpolant of ``v`` on the cell.
"""

import numpy as np

_SERIES_CUTOFF = 0.1
_SERIES_TERMS = 16


def cell_weights(a, d, mu):
    """Closed-form cell moments ``(left, right, F1)`` for arrays ``a >= 0``, ``d > 0``."""
    a = np.asarray(a, dtype=float)
    d = np.asarray(d, dtype=float)
    a, d = np.broadcast_arrays(a, d)
    p1 = mu + 1.0
    p2 = mu + 2.0

    f1 = np.empty(a.shape)
    lead = np.empty(a.shape)  # d * left
    at_end = a == 0.0
    inner = ~at_end

    de = d[at_end]
    f1[at_end] = de**p1 / p1
    lead[at_end] = de**p2 / p2

    ai = a[inner]
    di = d[inner]
    log_ratio = np.log1p(di / ai)
    f1[inner] = ai**p1 * np.expm1(p1 * log_ratio) / p1

    # F2 - a*F1 loses a/d digits when evaluated directly; expand in the log
    # ratio instead whenever the cell is far from the target.
    diff = np.empty(ai.shape)
    small = log_ratio < _SERIES_CUTOFF
    x = log_ratio[small]
    acc = np.zeros(x.shape)
    power = x.copy()
    fact = 1.0
    for n in range(2, _SERIES_TERMS + 2):
        power = power * x
        fact *= n
        acc += (p2 ** (n - 1) - p1 ** (n - 1)) * power / fact
    diff[small] = acc
    big = ~small
    xb = log_ratio[big]
    diff[big] = np.expm1(p2 * xb) / p2 - np.expm1(p1 * xb) / p1
    lead[inner] = ai**p2 * diff

    left = lead / d
    right = f1 - left
    return left, right, f1


def product_sums(t, v, mu, k0, c_lo, c_hi):
    """Product-trapezoid sums ``sum_c left_kc v_c + right_kc v_{c+1}`` for ``k >= k0``.

    Cells are restricted to ``c_lo <= c < min(c_hi, k)``.  Returns an array of
    length ``len(t) - k0``.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    n = t.size
    out = np.zeros(n - k0)
    d_all = np.diff(t)
    for k in range(k0, n):
        hi = min(c_hi, k)
        if hi <= c_lo:
            continue
        cells = slice(c_lo, hi)
        a = t[k] - t[c_lo + 1 : hi + 1]
        left, right, _ = cell_weights(a, d_all[cells], mu)
        out[k - k0] = left @ v[c_lo:hi] + right @ v[c_lo + 1 : hi + 1]
    return out


def l1_sums(t, q, mu):
    """L1 sums ``sum_{c<k} F1_kc q_c`` for every node ``k`` (``out[0] = 0``)."""
    t = np.asarray(t, dtype=float)
    q = np.asarray(q, dtype=float)
    n = t.size
    out = np.zeros(n)
    d_all = np.diff(t)
    for k in range(1, n):
        a = t[k] - t[1 : k + 1]
        _, _, f1 = cell_weights(a, d_all[:k], mu)
        out[k] = f1 @ q[:k]
    return out


def toeplitz_sums(tab, x, k0, c_lo, c_hi, n):
    """Uniform-grid sums ``sum_{c_lo <= c < min(c_hi, k)} tab[k-c-1] x_c`` for ``k0 <= k < n``."""
    tab = np.asarray(tab, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.zeros(n - k0)
    c_hi = min(c_hi, x.size, n - 1)
    if c_hi <= c_lo:
        return out
    conv = np.convolve(x[c_lo:c_hi], tab[: n - 1 - c_lo])
    start = max(k0, c_lo + 1)
    out[start - k0 :] = conv[start - 1 - c_lo : n - 1 - c_lo]
    return out
