"""Eigenvalues of a dense real matrix.

Householder reduction to upper Hessenberg form, then Francis implicit
double-shift QR iteration with deflation (the classic ``hqr`` scheme, values
only). Complex eigenvalues come out as conjugate pairs.
"""
from __future__ import annotations

import math

import numpy as np

from .tensor import DimensionError, ParameterError

_EPS = np.finfo(float).eps


class ConvergenceError(ArithmeticError):
    """The QR iteration exceeded its iteration budget."""

    def __init__(self, message, iterations, unresolved):
        super().__init__(message)
        self.iterations = iterations
        self.unresolved = unresolved


def hessenberg(a) -> np.ndarray:
    """Return an upper Hessenberg matrix orthogonally similar to ``a``."""
    h = np.array(a, dtype=float)
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1:, k]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        v = x.copy()
        v[0] += math.copysign(alpha, x[0])
        v /= np.linalg.norm(v)
        # H <- P H P with P = I - 2 v v^T acting on rows/cols k+1..n-1
        h[k + 1:, k:] -= 2.0 * np.outer(v, v @ h[k + 1:, k:])
        h[:, k + 1:] -= 2.0 * np.outer(h[:, k + 1:] @ v, v)
        h[k + 2:, k] = 0.0
    return h


def eigvals(a, max_iter_per_dim: int = 30) -> np.ndarray:
    """All eigenvalues of a square real matrix, as a complex array."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"eigenvalues need a square matrix, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ParameterError("matrix has non-finite entries")
    n = a.shape[0]
    if n == 0:
        return np.zeros(0, dtype=complex)
    h = hessenberg(a)
    wr = np.zeros(n)
    wi = np.zeros(n)
    anorm = float(np.sum(np.abs(np.triu(h, -1))))
    cap = max_iter_per_dim * n
    total = 0
    shift = 0.0
    nn = n - 1
    its = 0
    while nn >= 0:
        # locate the bottom of the active unreduced block
        l = nn
        while l >= 1:
            s = abs(h[l - 1, l - 1]) + abs(h[l, l])
            if s == 0.0:
                s = anorm
            if abs(h[l, l - 1]) <= _EPS * s:
                h[l, l - 1] = 0.0
                break
            l -= 1
        x = h[nn, nn]
        if l == nn:
            wr[nn] = x + shift
            nn -= 1
            its = 0
            continue
        y = h[nn - 1, nn - 1]
        w = h[nn, nn - 1] * h[nn - 1, nn]
        if l == nn - 1:
            p = 0.5 * (y - x)
            q = p * p + w
            z = math.sqrt(abs(q))
            x += shift
            if q >= 0.0:
                z = p + math.copysign(z, p)
                wr[nn - 1] = wr[nn] = x + z
                if z != 0.0:
                    wr[nn] = x - w / z
            else:
                wr[nn - 1] = wr[nn] = x + p
                wi[nn - 1] = -z
                wi[nn] = z
            nn -= 2
            its = 0
            continue
        if total >= cap:
            raise ConvergenceError(
                f"QR iteration did not converge after {total} iterations "
                f"({nn + 1} eigenvalues unresolved, active block rows {l}..{nn})",
                iterations=total, unresolved=nn + 1)
        if its in (10, 20):
            # exceptional shift
            shift += x
            for i in range(nn + 1):
                h[i, i] -= x
            s = abs(h[nn, nn - 1]) + abs(h[nn - 1, nn - 2])
            x = y = 0.75 * s
            w = -0.4375 * s * s
        its += 1
        total += 1
        _francis_step(h, l, nn, x, y, w)
    return wr + 1j * wi


def _francis_step(h, l, nn, x, y, w):
    # find two consecutive small subdiagonal elements
    m = nn - 2
    while True:
        z = h[m, m]
        r = x - z
        s = y - z
        p = (r * s - w) / h[m + 1, m] + h[m, m + 1]
        q = h[m + 1, m + 1] - z - r - s
        r = h[m + 2, m + 1]
        s = abs(p) + abs(q) + abs(r)
        p /= s
        q /= s
        r /= s
        if m == l:
            break
        u = abs(h[m, m - 1]) * (abs(q) + abs(r))
        v = abs(p) * (abs(h[m - 1, m - 1]) + abs(z) + abs(h[m + 1, m + 1]))
        if u <= _EPS * v:
            break
        m -= 1
    for i in range(m + 2, nn + 1):
        h[i, i - 2] = 0.0
        if i != m + 2:
            h[i, i - 3] = 0.0
    for k in range(m, nn):
        if k != m:
            p = h[k, k - 1]
            q = h[k + 1, k - 1]
            r = h[k + 2, k - 1] if k != nn - 1 else 0.0
            x = abs(p) + abs(q) + abs(r)
            if x != 0.0:
                p /= x
                q /= x
                r /= x
        s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
        if s == 0.0:
            continue
        if k == m:
            if l != m:
                h[k, k - 1] = -h[k, k - 1]
        else:
            h[k, k - 1] = -s * x
        p += s
        x = p / s
        y = q / s
        z = r / s
        q /= p
        r /= p
        # row modification
        if k != nn - 1:
            pr = h[k, k:nn + 1] + q * h[k + 1, k:nn + 1] + r * h[k + 2, k:nn + 1]
            h[k + 2, k:nn + 1] -= pr * z
        else:
            pr = h[k, k:nn + 1] + q * h[k + 1, k:nn + 1]
        h[k + 1, k:nn + 1] -= pr * y
        h[k, k:nn + 1] -= pr * x
        # column modification
        top = min(nn, k + 3)
        if k != nn - 1:
            pc = x * h[l:top + 1, k] + y * h[l:top + 1, k + 1] + z * h[l:top + 1, k + 2]
            h[l:top + 1, k + 2] -= pc * r
        else:
            pc = x * h[l:top + 1, k] + y * h[l:top + 1, k + 1]
        h[l:top + 1, k + 1] -= pc * q
        h[l:top + 1, k] -= pc
