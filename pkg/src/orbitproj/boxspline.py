"""Box splines and the exact (quadrature-free) density evaluator.

The box spline of a weight system is the convolution of uniform probability
measures on the centered segments [-a/2, a/2] over the direction multiset.
It is evaluated by the standard two-term recurrence: the base case of r
independent directions is the normalized indicator of a half-open
parallelepiped, and each recursion step removes one direction using a
least-norm representation of the evaluation point.

Internally splines live in reduced coordinates, where the directions of the
built-in settings are integer vectors and base-case determinants are exact;
conversions to the orthonormal-coordinate normalization used by the
quadrature evaluators divide by the fixed coordinate Jacobian.

For a dominant integral ambient weight lam, the convolution identity

    J_{lam + rho_g} = B * M_lam

turns the multiplicity table of lam into an exact piecewise-polynomial
formula for J and hence for the marginal density of the spectrum
centered(lam) + rho_g.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .multiplicity import (
    MultiplicityTable,
    SignedAtomicMeasure,
    build_M,
    restrict_decompose,
)
from .sampler import Spectrum
from .weights import Setting, WeightSystem, vandermonde

# deterministic generic direction used to nudge knot-plane queries
def _generic_direction(r: int) -> np.ndarray:
    g = np.array([1.0 / math.pi**k for k in range(r)])
    return g / np.linalg.norm(g)


KNOT_PERTURBATION = 1e-9


class BoxSpline:
    """Centered box spline on a spanning multiset of directions in R^r."""

    def __init__(self, directions):
        dirs = [np.asarray(d, dtype=float) for d in directions]
        self.r = len(dirs[0])
        self.dirs = dirs
        if np.linalg.matrix_rank(np.array(dirs)) < self.r:
            raise ValueError("directions must span")
        self._center = 0.5 * np.sum(dirs, axis=0)
        self._lsq_cache: dict = {}
        self._det_cache: dict = {}
        self._exact = all(
            float(x).is_integer() for d in dirs for x in d
        )

    @classmethod
    def for_weight_system(cls, ws: WeightSystem) -> "BoxSpline":
        red = [ws.plain_to_reduced(np.asarray(d, dtype=float)) for d, m in ws.directions for _ in range(m)]
        return cls(red)

    def support_radius(self) -> float:
        """Euclidean bound on the support: half the sum of direction norms."""
        return 0.5 * sum(np.linalg.norm(d) for d in self.dirs)

    # -- evaluation --------------------------------------------------------

    def _solver(self, key, X):
        if key not in self._lsq_cache:
            self._lsq_cache[key] = np.linalg.pinv(np.array(X).T)
        return self._lsq_cache[key]

    def _base_inv_det(self, key, X) -> float:
        if key not in self._det_cache:
            if self._exact:
                n = self.r
                mat = [[Fraction(int(round(X[i][j]))) for j in range(n)] for i in range(n)]
                det = _fraction_det(mat)
                self._det_cache[key] = float(abs(det)) if det else 0.0
            else:
                self._det_cache[key] = abs(float(np.linalg.det(np.array(X).T)))
        return self._det_cache[key]

    def _eval_M(self, key, X, x):
        # M_X with [0,1)-segments
        n = len(X)
        if n == self.r:
            d = self._base_inv_det(key, X)
            if d == 0.0:
                return 0.0
            t = np.linalg.solve(np.array(X).T, x)
            if np.all(t >= 0.0) and np.all(t < 1.0):
                return 1.0 / d
            return 0.0
        t = self._solver(key, X) @ x
        total = 0.0
        for i in range(n):
            Xi = X[:i] + X[i + 1:]
            ki = key[:i] + key[i + 1:]
            if np.linalg.matrix_rank(np.array(Xi)) < self.r:
                continue
            total += t[i] * self._eval_M(ki, Xi, x) + (1.0 - t[i]) * self._eval_M(
                ki, Xi, x - X[i]
            )
        return total / (n - self.r)

    def __call__(self, x) -> float:
        """Value at x (reduced coordinates); knot-plane points are nudged by a
        fixed generic offset, which only changes values on a null set."""
        return float(self.eval_many(np.asarray(x, dtype=float)[None, :])[0])

    def _eval_M_many(self, key, X, x, shifted, memo):
        # vectorized de Boor recursion; subproblems reached along different
        # removal orders coincide, so results are memoized on the remaining
        # multiset plus the set of directions already shifted out
        n = len(X)
        if n == self.r:
            d = self._base_inv_det(key, X)
            if d == 0.0:
                return 0.0
            t = np.linalg.solve(np.array(X).T, x.T).T
            inside = np.all((t >= 0.0) & (t < 1.0), axis=1)
            return inside / d
        cache_key = (key, shifted)
        hit = memo.get(cache_key)
        if hit is not None:
            return hit
        t = x @ self._solver(key, X).T
        total = np.zeros(x.shape[0])
        for i in range(n):
            Xi = X[:i] + X[i + 1:]
            ki = key[:i] + key[i + 1:]
            if np.linalg.matrix_rank(np.array(Xi)) < self.r:
                continue
            total += t[:, i] * self._eval_M_many(ki, Xi, x, shifted, memo)
            total += (1.0 - t[:, i]) * self._eval_M_many(
                ki, Xi, x - X[i], shifted | {key[i]}, memo
            )
        total = total / (n - self.r)
        memo[cache_key] = total
        return total

    def eval_many(self, points) -> np.ndarray:
        """Values at an array of reduced-coordinate points, shape (P, r)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        xs = pts + KNOT_PERTURBATION * _generic_direction(self.r) + self._center
        X = [np.asarray(d) for d in self.dirs]
        out = self._eval_M_many(tuple(range(len(X))), X, xs, frozenset(), {})
        return np.broadcast_to(out, (len(xs),)).copy() if np.ndim(out) == 0 else out

    def eval_plain(self, ws: WeightSystem, v) -> float:
        """Value at a plain vector, in the orthonormal-density normalization."""
        return self(ws.plain_to_reduced(np.asarray(v, dtype=float))) / ws.reduced_jacobian

    # -- structure ---------------------------------------------------------

    def knot_offsets_1d(self) -> np.ndarray:
        """r = 1 only: sorted breakpoints of the piecewise polynomial."""
        if self.r != 1:
            raise ValueError("knot_offsets_1d needs r = 1")
        vals = {0.0}
        for signs in itertools.product((-0.5, 0.5), repeat=len(self.dirs)):
            vals.add(float(sum(s * d[0] for s, d in zip(signs, self.dirs))))
        return np.array(sorted(vals))

    def knot_lines(self) -> list[tuple[np.ndarray, float]]:
        """r = 2 only: knot lines as (unit normal, offset) with n.x = offset."""
        if self.r != 2:
            raise ValueError("knot_lines needs r = 2")
        classes: dict = {}
        for d in self.dirs:
            n = np.array([-d[1], d[0]])
            n = n / np.linalg.norm(n)
            if n[0] < 0 or (n[0] == 0 and n[1] < 0):
                n = -n
            classes.setdefault(tuple(np.round(n, 12)), []).append(d)
        lines = []
        for n_key in classes:
            n = np.asarray(n_key)
            others = [d for d in self.dirs if abs(np.dot(n, d)) > 1e-12]
            if len(others) > 20:
                raise ValueError("too many directions for knot enumeration")
            offs = set()
            for signs in itertools.product((-0.5, 0.5), repeat=len(others)):
                offs.add(round(float(sum(s * np.dot(n, d) for s, d in zip(signs, others))), 12))
            for c in sorted(offs):
                lines.append((n, c))
        return lines

    def mass(self, tol_degree_margin: int = 2) -> float:
        """Integral over R^r by exact per-cell Gauss-Legendre slicing
        (r <= 2).  Each 1-dimensional piece is polynomial between knots, so
        the panelwise rule is exact up to roundoff."""
        deg = len(self.dirs) - self.r + tol_degree_margin
        npts = deg // 2 + 2
        if self.r == 1:
            return _integrate_1d_panels(
                lambda t: self(np.array([t])), self.knot_offsets_1d(), npts
            )
        if self.r == 2:
            return integrate_piecewise_2d(
                lambda p: self(p), self.knot_lines(), self.support_radius(), npts
            )
        raise ValueError("exact mass integration implemented for r <= 2")


def _fraction_det(mat) -> Fraction:
    n = len(mat)
    m = [row[:] for row in mat]
    det = Fraction(1)
    for c in range(n):
        piv = next((i for i in range(c, n) if m[i][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            m[c], m[piv] = m[piv], m[c]
            det = -det
        det *= m[c][c]
        inv = Fraction(1) / m[c][c]
        for i in range(c + 1, n):
            f = m[i][c] * inv
            if f:
                m[i] = [a - f * b for a, b in zip(m[i], m[c])]
    return det


def _gauss_nodes(a: float, b: float, npts: int):
    x, w = np.polynomial.legendre.leggauss(npts)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def _integrate_1d_panels(f, breaks: np.ndarray, npts: int) -> float:
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b - a < 1e-14:
            continue
        xs, ws_ = _gauss_nodes(a, b, npts)
        total += float(sum(w * f(x) for x, w in zip(xs, ws_)))
    return total


def integrate_piecewise_2d(f, lines, radius: float, npts: int,
                           box=None) -> float:
    """Integrate a piecewise polynomial over a box, with panel boundaries on
    the given knot lines.  ``lines`` are (unit normal, offset) pairs; the
    outer axis is subdivided at every pairwise line intersection."""
    if box is None:
        box = ((-radius, radius), (-radius, radius))
    (x0, x1), (y0, y1) = box
    ys = {y0, y1}
    for (n1, c1), (n2, c2) in itertools.combinations(lines, 2):
        det = n1[0] * n2[1] - n1[1] * n2[0]
        if abs(det) < 1e-12:
            continue
        y = (n1[0] * c2 - n2[0] * c1) / det
        if y0 < y < y1:
            ys.add(float(y))
    for n, c in lines:
        if abs(n[1]) > 1e-12 and abs(n[0]) < 1e-12:
            y = c / n[1]
            if y0 < y < y1:
                ys.add(float(y))
    ybreaks = np.array(sorted(ys))

    def inner(y: float) -> float:
        xs = {x0, x1}
        for n, c in lines:
            if abs(n[0]) > 1e-12:
                x = (c - n[1] * y) / n[0]
                if x0 < x < x1:
                    xs.add(float(x))
        xb = np.array(sorted(xs))
        return _integrate_1d_panels(lambda x: f(np.array([x, y])), xb, npts)

    total = 0.0
    for a, b in zip(ybreaks[:-1], ybreaks[1:]):
        if b - a < 1e-14:
            continue
        ys_, ws_ = _gauss_nodes(a, b, npts)
        total += float(sum(w * inner(y) for y, w in zip(ys_, ws_)))
    return total


# -- operator algebra on measures and functions --------------------------------


def rescale(obj, s, r: int | None = None):
    """R_s on a SignedAtomicMeasure or on a function of orthonormal coords:
    (R_s f)(x) = s^r f(s x); measures move atoms from p to p/s."""
    if isinstance(obj, SignedAtomicMeasure):
        return obj.rescale(s)
    if s <= 0:
        raise ValueError("rescaling factor must be positive")
    if r is None:
        raise ValueError("function rescaling needs the dimension r")
    return lambda x: s**r * obj(np.asarray(x) * s)


def translate(obj, v):
    """T_v on a SignedAtomicMeasure or a function: (T_v f)(x) = f(x - v)."""
    if isinstance(obj, SignedAtomicMeasure):
        return obj.translate(v)
    v = np.asarray(v, dtype=float)
    return lambda x: obj(np.asarray(x) - v)


def skew_extend(measure: SignedAtomicMeasure, dims) -> SignedAtomicMeasure:
    return measure.skew_extend(dims)


# -- exact J and density --------------------------------------------------------


@dataclass
class ExactEvaluator:
    """J and density evaluation from the multiplicity table of a dominant
    integral ambient weight; all values in the orthonormal-coordinate
    normalization used by the quadrature evaluators."""

    ws: WeightSystem
    table: MultiplicityTable
    spline: BoxSpline
    M: SignedAtomicMeasure

    @classmethod
    def build(cls, setting: Setting, lam, table: MultiplicityTable | None = None) -> "ExactEvaluator":
        ws = WeightSystem(setting)
        table = table or restrict_decompose(setting, lam)
        return cls(ws=ws, table=table, spline=BoxSpline.for_weight_system(ws),
                   M=build_M(table))

    def spectrum(self) -> Spectrum:
        """centered(lam) + rho_g, the real spectrum whose density this
        evaluator computes."""
        lam = np.asarray(self.table.lam, dtype=float)
        return Spectrum.make(lam - lam.mean() + self.ws.rho_g, center=False)

    def atoms_reduced(self):
        pts, wts = self.M.points_and_weights()
        # points are plain per-factor tuples flattened; convert to reduced
        return self.ws.plain_to_reduced(pts), wts

    def J(self, x_plain) -> float:
        """sum_mu m_mu sum_w eps(w) B(x - w(mu + rho_h)), orth normalization."""
        x_red = self.ws.plain_to_reduced(np.asarray(x_plain, dtype=float))
        return float(self.J_many_reduced(x_red[None, :])[0])

    def J_many_reduced(self, red_points) -> np.ndarray:
        """Vectorized J over reduced-coordinate points, orth normalization."""
        red = np.atleast_2d(np.asarray(red_points, dtype=float))
        pts, wts = self.atoms_reduced()
        total = np.zeros(len(red))
        for p, w in zip(pts, wts):
            total += w * self.spline.eval_many(red - p)
        return total / self.ws.reduced_jacobian

    def density(self, x_plain) -> float:
        """Marginal-spectrum density of centered(lam)+rho_g at a chamber
        point, w.r.t. Lebesgue in orthonormal coordinates.

        Evaluated as (sf_N/sf_H) * Delta_h(x) / V(lam_real) * J(x); the
        product form needs no division at chamber walls.
        """
        x_plain = np.asarray(x_plain, dtype=float)
        if not self.ws.in_chamber(x_plain, tol=1e-9):
            return 0.0
        lam_real = self.spectrum().values
        pref = self.ws.sf_ambient / self.ws.sf_marginal / vandermonde(lam_real)
        return float(pref * self.ws.delta_h(x_plain) * self.J(x_plain))

    def density_grid_reduced(self, axes) -> np.ndarray:
        shape = tuple(len(a) for a in axes)
        mesh = np.meshgrid(*axes, indexing="ij")
        red = np.stack([m.ravel() for m in mesh], axis=1)
        plain = self.ws.reduced_to_plain(red)
        ws = self.ws
        lam_real = self.spectrum().values
        pref = ws.sf_ambient / ws.sf_marginal / vandermonde(lam_real)
        vals = pref * ws.delta_h(plain) * self.J_many_reduced(red)
        chamber = np.array([ws.in_chamber(p, tol=1e-9) for p in plain])
        vals = np.where(chamber, vals, 0.0)
        return (vals * ws.reduced_jacobian).reshape(shape)

    def j_values_on_lattice(self, radius_pad: float = 1.0) -> dict:
        """J at the lattice points needed for multiplicity recovery, keyed by
        integer plain-coordinate offsets."""
        from .multiplicity import j_sample_points, nu_eval_point

        pts, wts = self.M.points_and_weights()
        atom_rad = float(np.max(np.linalg.norm(pts @ self.ws.onb, axis=1))) if len(pts) else 0.0
        # spline support radius in orthonormal norm
        srad = 0.5 * sum(
            np.linalg.norm(np.asarray(d) @ self.ws.onb) * m for d, m in self.ws.directions
        )
        radius = atom_rad + srad + radius_pad
        out = {}
        for key in j_sample_points(self.ws, self.table.lam, radius):
            out[key] = self.J(nu_eval_point(self.ws, key))
        return out

    def mass(self) -> float:
        """Chamber mass of the exact density (r <= 2), by panelwise exact
        Gauss-Legendre over the knot-line arrangement of all atom translates."""
        ws = self.ws
        pts, _ = self.atoms_reduced()
        base_lines = self.spline.knot_lines() if ws.r == 2 else None
        rad = self.spline.support_radius() + float(np.max(np.linalg.norm(pts, axis=1)))
        deg = sum(m for _, m in ws.directions) - ws.r + ws.n_h_roots
        npts = deg // 2 + 2
        dens_red = lambda y: self.density(ws.reduced_to_plain(y)) * ws.reduced_jacobian
        if ws.r == 1:
            breaks = set()
            for p in pts[:, 0]:
                for c in self.spline.knot_offsets_1d():
                    breaks.add(float(p + c))
            breaks.add(0.0)
            return _integrate_1d_panels(
                lambda t: dens_red(np.array([t])), np.array(sorted(breaks)), npts
            )
        if ws.r == 2:
            lines = []
            for n, c in base_lines:
                for p in pts:
                    lines.append((n, c + float(np.dot(n, p))))
            # chamber walls are density zeros but also polynomial boundaries
            lines.append((np.array([1.0, 0.0]), 0.0))
            lines.append((np.array([0.0, 1.0]), 0.0))
            return integrate_piecewise_2d(dens_red, lines, rad, npts)
        raise ValueError("exact mass available for r <= 2 only")


def spline_eval(bs: BoxSpline, x) -> float:
    return bs(x)


def J_exact(setting: Setting, lam, x_plain, evaluator: ExactEvaluator | None = None) -> float:
    ev = evaluator or ExactEvaluator.build(setting, lam)
    return ev.J(x_plain)


def density_exact(setting: Setting, lam, x_plain, evaluator: ExactEvaluator | None = None) -> float:
    ev = evaluator or ExactEvaluator.build(setting, lam)
    return ev.density(x_plain)
