"""Stable evaluation of the exponential alternant ratio.

The ratio det[e^{x_j y_k}] / (V(x) V(y)), with V the Vandermonde determinant,
extends to an entire function of all 2N variables.  Off the coincidence walls
it is evaluated directly; near or on a wall it equals the determinant of the
matrix of bivariate divided differences of e^{xy}, which is obtained from the
first row of exp(J_x (x) J_y) for bidiagonal node matrices J (the
matrix-function form of Opitz' divided-difference identity).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import expm

from .weights import WeightSystem, superfactorial, vandermonde

GAP_THRESHOLD = 1e-3


def _min_gap(v) -> float:
    v = np.asarray(v)
    if v.shape[-1] < 2:
        return np.inf
    d = np.abs(v[..., :, None] - v[..., None, :])
    d = d + np.diag(np.full(v.shape[-1], np.inf))
    return float(d.min())


def _bidiagonal(nodes: np.ndarray) -> np.ndarray:
    n = len(nodes)
    return np.diag(nodes.astype(complex)) + np.diag(np.ones(n - 1), 1)


def alternant_ratio(x, y, gap_threshold: float = GAP_THRESHOLD) -> complex:
    """Entire extension of det[e^{x_j y_k}] / (V(x) V(y)).

    ``x`` is real, ``y`` may be complex; repeated values in either argument
    are handled by the divided-difference path.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=complex)
    n = len(x)
    if len(y) != n:
        raise ValueError("x and y must have equal length")
    if n == 1:
        return complex(np.exp(x[0] * y[0]))
    if _min_gap(x) > gap_threshold and _min_gap(y) > gap_threshold:
        M = np.exp(np.outer(x, y))
        return complex(np.linalg.det(M) / (vandermonde(x) * vandermonde(y)))
    return _alternant_ratio_confluent(x, y)


def _alternant_ratio_confluent(x: np.ndarray, y: np.ndarray) -> complex:
    # sort real parts so nearby nodes are adjacent; ratio is symmetric in each
    # argument separately, so reordering is free
    x = np.sort(x)
    y = y[np.argsort(y.real, kind="stable")]
    n = len(x)
    Jx = _bidiagonal(x)
    Jy = _bidiagonal(y)
    big = expm(np.kron(Jx, Jy))
    B = big[0].reshape(n, n)
    return complex(np.linalg.det(B))


def alternant_ratio_series(x, y, max_degree: int = 30) -> complex:
    """Truncated series oracle: sum over partitions of
    s_p(x) s_p(y) / prod_k (p_k + N - k)!, with Schur values from the
    Jacobi-Trudi determinant in complete homogeneous polynomials.

    Independent of the divided-difference path; confluence-safe.  Intended
    for tests at moderate |x||y|.
    """
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    n = len(x)

    def h_values(v):
        # Newton's identities from power sums; h_k entire in the entries
        p = [np.sum(v**k) for k in range(max_degree + 1)]
        h = [1.0 + 0j]
        for k in range(1, max_degree + 1):
            h.append(sum(p[i] * h[k - i] for i in range(1, k + 1)) / k)
        return h

    hx, hy = h_values(x), h_values(y)

    def schur(h, part):
        m = len(part)
        A = np.zeros((m, m), dtype=complex)
        for i in range(m):
            for j in range(m):
                d = part[i] - i + j
                A[i, j] = h[d] if 0 <= d <= max_degree else 0.0
        return np.linalg.det(A)

    def partitions(total, parts, cap):
        if parts == 1:
            if total <= cap:
                yield (total,)
            return
        for first in range(min(total, cap), -1, -1):
            for rest in partitions(total - first, parts - 1, first):
                yield (first,) + rest

    total = 0j
    for deg in range(max_degree + 1):
        for part in partitions(deg, n, deg):
            denom = 1.0
            for k, pk in enumerate(part):
                denom *= math.factorial(pk + n - 1 - k)
            total += schur(hx, part) * schur(hy, part) / denom
    return complex(total)


def hciz_value(a, b) -> float:
    """Closed-form Haar average of e^{Tr(A U B U+)} for spectra a, b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    val = superfactorial(len(a)) * alternant_ratio(a, b.astype(complex))
    return float(val.real)


def mc_hciz(a, b, count: int, seed: int = 0, batch: int = 50000):
    """Monte Carlo Haar average of e^{Tr(A U B U+)}; returns (mean, stderr)."""
    from .sampler import haar_unitary

    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n = len(a)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < count:
        m = min(batch, count - done)
        U = haar_unitary(n, rng, size=m)
        # Tr(A U B U+) with A, B diagonal
        vals = np.einsum("j,sjk,k,sjk->s", a, U, b, U.conj()).real
        e = np.exp(vals)
        total += e.sum()
        total_sq += (e**2).sum()
        done += m
    mean = total / count
    var = max(total_sq / count - mean**2, 0.0)
    return mean, math.sqrt(var / count)


def hc_sum_kernel(ws: WeightSystem, lam, xi) -> complex:
    """Delta_h(xi) * V(lambda) * alternant_ratio(lambda, i L(xi)).

    Equal to (Delta_h(xi)/V(L(xi))) * sum over permutations w of
    sign(w) e^{i <xi, w(lambda)>} up to the constant phase i^(N(N-1)/2);
    finite for every xi, including zeros of V(L(xi)).
    """
    lam = np.asarray(lam, dtype=float)
    xi = np.asarray(xi, dtype=float)
    L = ws.weight_values(xi)
    return complex(
        ws.delta_h(xi) * vandermonde(lam) * alternant_ratio(lam, 1j * L)
    )


def kernel_values(ws: WeightSystem, lam, xi_points, gap_threshold: float = GAP_THRESHOLD):
    """Vectorized hc_sum_kernel over an array of torus points (n_pts, s).

    Fast determinant path where L(xi) has no small gaps, divided-difference
    fallback at the remaining points.
    """
    lam = np.asarray(lam, dtype=float)
    xi_points = np.asarray(xi_points, dtype=float)
    L = ws.weight_values(xi_points)                      # (P, N)
    dh = ws.delta_h(xi_points)
    n = ws.N
    gaps = np.abs(L[:, :, None] - L[:, None, :]) + np.diag(np.full(n, np.inf))
    min_gap = gaps.min(axis=(1, 2))
    out = np.empty(len(xi_points), dtype=complex)
    ok = min_gap > gap_threshold
    vlam = vandermonde(lam)
    if np.any(ok):
        E = np.exp(1j * lam[None, :, None] * L[ok][:, None, :])
        out[ok] = np.linalg.det(E) / (vlam * vandermonde(1j * L[ok]))
    for i in np.nonzero(~ok)[0]:
        out[i] = _alternant_ratio_confluent(lam, 1j * L[i])
    return dh * vlam * out
