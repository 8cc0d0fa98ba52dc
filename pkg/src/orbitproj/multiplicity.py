"""Restriction multiplicities, their discrete measures, and recovery.

Multiplicities are computed by brute force: the ambient weight multiplicities
come from Gelfand-Tsetlin interlacing-pattern counts, every weight is pushed
through the adjoint of the weight map, and the marginal-side character is
peeled greedily from its lexicographically highest dominant term.  All
arithmetic is exact (Python integers and Fractions).

Dominant weights are stored as non-increasing integer tuples; ambient weights
are unitary-group weights (determinant twists shift all entries equally and
are recorded, never normalized away silently).
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .weights import CapExceededError, Setting, WeightSystem

MAX_PATTERNS = 1_000_000


def weyl_dim(nu) -> int:
    """Dimension of the irreducible with highest weight nu, exactly."""
    nu = list(nu)
    n = len(nu)
    out = Fraction(1)
    for i in range(n):
        for j in range(i + 1, n):
            out *= Fraction(nu[i] - nu[j] + j - i, j - i)
    assert out.denominator == 1
    return int(out)


@lru_cache(maxsize=None)
def _gt_weights_cached(top: tuple[int, ...]) -> tuple[tuple[tuple[int, ...], int], ...]:
    n = len(top)
    if n == 1:
        return (((top[0],), 1),)
    out: Counter = Counter()
    ranges = [range(top[i + 1], top[i] + 1) for i in range(n - 1)]
    for mu in itertools.product(*ranges):
        if any(mu[i] < mu[i + 1] for i in range(n - 2)):
            continue
        d = sum(top) - sum(mu)
        for w, m in _gt_weights_cached(tuple(mu)):
            out[w + (d,)] += m
    return tuple(sorted(out.items()))


def weight_multiplicities(lam) -> dict[tuple[int, ...], int]:
    """Weight multiplicities of the irreducible with highest weight lam,
    by Gelfand-Tsetlin pattern counting.  Exact; guarded by a pattern cap
    (the pattern count equals the dimension)."""
    lam = tuple(int(x) for x in lam)
    if any(lam[i] < lam[i + 1] for i in range(len(lam) - 1)):
        raise ValueError("highest weight must be non-increasing")
    shift = lam[-1]
    shifted = tuple(x - shift for x in lam)
    if weyl_dim(shifted) > MAX_PATTERNS:
        raise CapExceededError(
            f"dimension {weyl_dim(shifted)} exceeds pattern cap {MAX_PATTERNS}"
        )
    out = {}
    for w, m in _gt_weights_cached(shifted):
        out[tuple(x + shift for x in w)] = m
    return out


@dataclass
class MultiplicityTable:
    """Map from marginal-side dominant weights to multiplicities.

    Keys are tuples of per-factor non-increasing integer tuples.
    """

    setting: Setting
    lam: tuple[int, ...]
    entries: dict[tuple[tuple[int, ...], ...], int]

    def dimension_check(self) -> tuple[int, int]:
        lhs = sum(
            m * math.prod(weyl_dim(f) for f in mu) for mu, m in self.entries.items()
        )
        rhs = weyl_dim(self.lam)
        return lhs, rhs

    def to_json_dict(self) -> dict:
        return {
            "setting": self.setting.label,
            "lambda": list(self.lam),
            "entries": [
                {"mu": [list(f) for f in mu], "mult": m}
                for mu, m in sorted(self.entries.items())
            ],
        }


def restrict_decompose(setting: Setting, lam) -> MultiplicityTable:
    """Decompose the ambient irreducible with highest weight lam into
    marginal-side irreducibles.

    Projects every ambient weight through the weight-map adjoint, then
    repeatedly strips the lexicographically highest dominant weight.  The
    lex-max weight of a character is automatically dominant per factor, so a
    non-dominant maximum or a negative coefficient signals an internal error.
    """
    lam = tuple(int(x) for x in lam)
    ws = WeightSystem(setting)
    if len(lam) != ws.N:
        raise ValueError(f"highest weight must have length {ws.N}")
    gw = weight_multiplicities(lam)
    rows = [tuple(int(x) for x in r) for r in ws.rows]
    dims = setting.factor_dims

    hchar: Counter = Counter()
    for w, m in gw.items():
        pieces = []
        off = 0
        for n in dims:
            v = [0] * n
            for row, c in zip(rows, w):
                if c:
                    for i in range(n):
                        if row[off + i]:
                            v[i] += c * row[off + i]
            pieces.append(tuple(v))
            off += n
        hchar[tuple(pieces)] += m

    entries: dict = {}
    hchar = Counter({k: v for k, v in hchar.items() if v})
    while hchar:
        mu = max(hchar)
        m = hchar[mu]
        if m < 0:
            raise RuntimeError(f"negative intermediate multiplicity at {mu}")
        for f in mu:
            if any(f[i] < f[i + 1] for i in range(len(f) - 1)):
                raise RuntimeError(f"lex-max weight {mu} is not dominant")
        entries[mu] = m
        factor_chars = [weight_multiplicities(f) for f in mu]
        for combo in itertools.product(*[fc.items() for fc in factor_chars]):
            w = tuple(cw for cw, _ in combo)
            count = math.prod(cm for _, cm in combo)
            hchar[w] -= m * count
            if hchar[w] == 0:
                del hchar[w]
    table = MultiplicityTable(setting=setting, lam=lam, entries=entries)
    lhs, rhs = table.dimension_check()
    if lhs != rhs:
        raise RuntimeError(f"dimension bookkeeping failed: {lhs} != {rhs}")
    return table


# -- signed atomic measures ----------------------------------------------------


def _epsilon_of_permutation(perm: tuple[int, ...]) -> int:
    seen = [False] * len(perm)
    sign = 1
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def factor_weyl_group(dims) -> list[tuple[tuple[int, ...], int]]:
    """Product of symmetric groups acting per factor, with signs."""
    groups = []
    for n in dims:
        groups.append(list(itertools.permutations(range(n))))
    out = []
    for combo in itertools.product(*groups):
        sign = math.prod(_epsilon_of_permutation(p) for p in combo)
        out.append((combo, sign))
    return out


def _apply_factor_perm(point: tuple, perm_combo) -> tuple:
    out = []
    for piece, perm in zip(point, perm_combo):
        out.append(tuple(piece[p] for p in perm))
    return tuple(out)


@dataclass
class SignedAtomicMeasure:
    """Finitely supported signed measure with exact rational atoms.

    Atoms are keyed by tuples of per-factor tuples of Fractions.
    """

    atoms: dict[tuple, Fraction] = field(default_factory=dict)

    def add(self, point: tuple, weight) -> None:
        w = self.atoms.get(point, Fraction(0)) + Fraction(weight)
        if w:
            self.atoms[point] = w
        else:
            self.atoms.pop(point, None)

    def mass(self) -> Fraction:
        return sum(self.atoms.values(), Fraction(0))

    def rescale(self, s) -> "SignedAtomicMeasure":
        """R_s: (R_s M)(E) = M(sE); atoms move from p to p/s."""
        s = Fraction(s)
        if s <= 0:
            raise ValueError("rescaling factor must be positive")
        out = SignedAtomicMeasure()
        for p, w in self.atoms.items():
            q = tuple(tuple(Fraction(x) / s for x in piece) for piece in p)
            out.add(q, w)
        return out

    def translate(self, v) -> "SignedAtomicMeasure":
        """T_v: atoms move from p to p + v."""
        out = SignedAtomicMeasure()
        for p, w in self.atoms.items():
            q = tuple(
                tuple(Fraction(x) + Fraction(y) for x, y in zip(piece, vp))
                for piece, vp in zip(p, v)
            )
            out.add(q, w)
        return out

    def skew_extend(self, dims) -> "SignedAtomicMeasure":
        """S: sum over the factor Weyl group of signed permuted copies."""
        out = SignedAtomicMeasure()
        for combo, sign in factor_weyl_group(dims):
            for p, w in self.atoms.items():
                out.add(_apply_factor_perm(p, combo), sign * w)
        return out

    def points_and_weights(self):
        pts, ws_ = [], []
        for p, w in sorted(self.atoms.items()):
            pts.append([float(x) for piece in p for x in piece])
            ws_.append(float(w))
        return np.asarray(pts), np.asarray(ws_)


def _traceless_fraction(piece: tuple[int, ...]) -> tuple[Fraction, ...]:
    s = Fraction(sum(piece), len(piece))
    return tuple(Fraction(x) - s for x in piece)


def _rho_h_fractions(dims) -> tuple[tuple[Fraction, ...], ...]:
    return tuple(
        tuple(Fraction(n - 1, 2) - i for i in range(n)) for n in dims
    )


def build_M(table: MultiplicityTable) -> SignedAtomicMeasure:
    """Atoms eps(w) m_mu at w(mu + rho_h) over the factor Weyl group, with mu
    taken traceless (the determinant-twist shift is a pure translation)."""
    dims = table.setting.factor_dims
    rho = _rho_h_fractions(dims)
    out = SignedAtomicMeasure()
    for mu, m in table.entries.items():
        base = tuple(
            tuple(a + b for a, b in zip(_traceless_fraction(f), rho_f))
            for f, rho_f in zip(mu, rho)
        )
        for combo, sign in factor_weyl_group(dims):
            out.add(_apply_factor_perm(base, combo), sign * m)
    return out


def build_Xi(table: MultiplicityTable) -> SignedAtomicMeasure:
    """Probability measure with mass m_mu dim(mu) / dim(lambda) at traceless
    mu; total mass exactly 1."""
    dim_total = weyl_dim(table.lam)
    out = SignedAtomicMeasure()
    for mu, m in table.entries.items():
        point = tuple(_traceless_fraction(f) for f in mu)
        w = Fraction(m * math.prod(weyl_dim(f) for f in mu), dim_total)
        out.add(point, w)
    return out


# -- lattice utilities ---------------------------------------------------------


def _integer_row_hnf(rows: np.ndarray) -> np.ndarray:
    """Row-style Hermite reduction: returns a Z-basis (rows) of the lattice
    generated by the input integer rows."""
    mat = [list(map(int, r)) for r in rows]
    basis: list[list[int]] = []
    for row in mat:
        row = row[:]
        for b in basis:
            piv = next(i for i, x in enumerate(b) if x != 0)
            if row[piv]:
                # reduce row against b via Euclid on the pivot column
                while row[piv]:
                    q = row[piv] // b[piv]
                    row = [x - q * y for x, y in zip(row, b)]
                    if row[piv]:
                        b[:], row[:] = row[:], b[:]
        if any(row):
            basis.append(row)
            basis.sort(key=lambda r: next(i for i, x in enumerate(r) if x != 0))
    return np.asarray(basis, dtype=np.int64)


def projected_root_lattice(ws: WeightSystem) -> np.ndarray:
    """Z-basis (rows, plain integer vectors) of the projection to the torus
    algebra of the ambient root lattice: the span of weight-row differences."""
    gens = []
    r0 = ws.rows[0]
    for a in range(1, ws.N):
        gens.append(ws.rows[a] - r0)
    basis = _integer_row_hnf(np.asarray(gens))
    if len(basis) != ws.r:
        raise RuntimeError("projected root lattice has unexpected rank")
    return basis


@dataclass
class RecoveryResult:
    value: float
    rounded: int
    residual: float
    nodes_used: int
    nodes_skipped: int


class RecoveryError(RuntimeError):
    """Residual too large to round to an integer multiplicity."""


def recover_multiplicity(
    ws: WeightSystem,
    lam,
    mu,
    J_values: dict[tuple[int, ...], float],
    torus_grid: int = 16,
    tau: float = 1e-8,
    max_residual: float = 0.4,
    spline=None,
) -> RecoveryResult:
    """Recover m^lambda_mu from sampled J values by the torus integral.

    ``J_values`` maps integer ambient-lattice offsets nu (plain coordinates,
    as produced by :func:`j_sample_points`) to J(nu + rho_h).  ``spline`` is
    the box spline of the weight system (built on demand if omitted).
    The integrand is averaged over an offset midpoint grid on the character
    torus, skipping near-zeros of the trigonometric denominator and
    renormalizing by the retained node count.
    """
    from .boxspline import BoxSpline

    lam = tuple(int(x) for x in lam)
    basis = projected_root_lattice(ws)                     # (r, s) ints
    bo = basis @ ws.onb                                    # orthonormal coords
    # averaging over the fundamental domain absorbs the |Lambda|/(2 pi)^r
    # normalization: the node mean is the integral times that constant
    dual = np.linalg.solve(bo @ bo.T, bo)                  # rows: dual basis
    bs = spline or BoxSpline.for_weight_system(ws)

    # R(x) = sum over lattice points in the spline support of B(nu) e^{i nu.x}
    lat_pts = _lattice_points_in_ball(basis, bo, bs.support_radius() + 1e-9)
    r_terms = []
    for c in lat_pts:
        v = c @ basis
        val = bs.eval_plain(ws, v)
        if abs(val) > 1e-14:
            r_terms.append((c @ bo, val))

    # sample points nu + rho_h with nu in Pi(lam + Q_G) within J's support
    mu_tr = _mu_orth(ws, mu)
    j_pts = []
    for nu_key, jval in J_values.items():
        if abs(jval) > 1e-14:
            j_pts.append((np.asarray(nu_key, dtype=float) @ ws.onb, jval))

    grid = (np.arange(torus_grid) + 0.5 + 0.2937) / torus_grid
    acc = 0.0 + 0.0j
    used = skipped = 0
    for combo in itertools.product(grid, repeat=ws.r):
        x = 2 * math.pi * np.asarray(combo) @ dual          # orthonormal coords
        R = sum(v * np.exp(1j * np.dot(c, x)) for c, v in r_terms)
        if abs(R) < tau:
            skipped += 1
            continue
        S = sum(v * np.exp(1j * np.dot(c, x)) for c, v in j_pts)
        acc += (S / R) * np.exp(-1j * np.dot(mu_tr, x))
        used += 1
    if used == 0:
        raise RecoveryError("all torus nodes skipped; grid too coarse")
    value = float((acc / used).real)
    rounded = int(round(value))
    residual = abs(value - rounded)
    if residual > max_residual:
        raise RecoveryError(
            f"recovery residual {residual:.3f} exceeds {max_residual}; "
            "increase torus_grid or check the J source"
        )
    return RecoveryResult(value, rounded, residual, used, skipped)


def _mu_orth(ws: WeightSystem, mu) -> np.ndarray:
    flat = []
    for piece in mu:
        t = _traceless_fraction(tuple(int(x) for x in piece))
        flat.extend(float(x) for x in t)
    return np.asarray(flat) @ ws.onb


def _lattice_points_in_ball(basis: np.ndarray, bo: np.ndarray, radius: float):
    """Integer coefficient vectors c with |c @ basis| <= radius (orthonormal
    norm), via a dual-coordinate bounding box."""
    r = len(basis)
    ginv = np.linalg.inv(bo @ bo.T)
    bounds = []
    for i in range(r):
        # |c_i| = |<x, dual_i>| <= radius * |dual_i|
        dual_i = ginv[i] @ bo
        bounds.append(int(math.floor(radius * np.linalg.norm(dual_i))) + 1)
    out = []
    for combo in itertools.product(*[range(-b, b + 1) for b in bounds]):
        c = np.asarray(combo)
        if np.linalg.norm(c @ bo) <= radius:
            out.append(c)
    return out


def j_sample_points(ws: WeightSystem, lam, radius: float) -> list[tuple[int, ...]]:
    """Integer plain-coordinate offsets nu in Pi(lam + Q_G) with
    |nu_traceless + rho_h| within ``radius`` (orthonormal norm).

    Keys returned here index ``J_values`` in :func:`recover_multiplicity`;
    the actual evaluation point is traceless(nu) + rho_h.
    """
    lam = np.asarray(lam, dtype=np.int64)
    base = lam @ ws.rows  # integer plain vector, fixed per-factor sums
    basis = projected_root_lattice(ws)
    bo = basis @ ws.onb
    rho_orth = ws.rho_h @ ws.onb
    base_orth = ws.project_to_t(lam.astype(float)) @ ws.onb
    pts = []
    pad = float(np.linalg.norm(rho_orth)) + radius
    for c in _lattice_points_in_ball(basis, bo, pad + np.linalg.norm(base_orth)):
        nu = base + c @ basis
        x = base_orth + c @ bo + rho_orth
        if np.linalg.norm(x) <= radius + 1e-9:
            pts.append(tuple(int(v) for v in nu))
    return pts


def nu_eval_point(ws: WeightSystem, nu_key) -> np.ndarray:
    """Plain-coordinate evaluation point traceless(nu) + rho_h for a key."""
    raw = np.asarray(nu_key, dtype=float)
    pieces = []
    off = 0
    for n in ws.factor_dims:
        p = raw[off:off + n]
        pieces.append(p - p.mean())
        off += n
    return np.concatenate(pieces) + ws.rho_h


# -- semiclassical diagnostics ---------------------------------------------------


def ks_distance_weighted(points_a, weights_a, points_b, weights_b,
                         max_eval: int = 1024) -> float:
    """Kolmogorov-Smirnov distance between two finite measures on R^d using
    the lower-orthant CDF F(t) = mass{x : x <= t componentwise}.

    Evaluated on the jump points of the first measure plus a deterministic
    subsample of the second (the statistic is a sup over a finite evaluation
    set; with a large sample the subsample resolution is below the sampling
    noise)."""
    pa = np.atleast_2d(points_a)
    pb = np.atleast_2d(points_b)
    if len(pb) > max_eval:
        idx = np.linspace(0, len(pb) - 1, max_eval).astype(int)
        pb_eval = pb[idx]
    else:
        pb_eval = pb
    evals = np.concatenate([pa, pb_eval], axis=0)
    wa = np.asarray(weights_a, dtype=float)
    wb = np.asarray(weights_b, dtype=float)

    def cdf(points, weights, t):
        out = np.empty(len(t))
        step = max(1, 10_000_000 // max(len(points), 1))
        for i in range(0, len(t), step):
            block = t[i:i + step]
            inside = np.all(points[None, :, :] <= block[:, None, :] + 1e-12, axis=2)
            out[i:i + step] = inside @ weights
        return out

    Fa = cdf(pa, wa, evals)
    Fb = cdf(pb, wb, evals)
    return float(np.max(np.abs(Fa - Fb)))


def semiclassical_checks(
    setting: Setting,
    lam,
    n_list=(1, 2, 4, 8),
    samples: int = 100000,
    seed: int = 0,
    probes=None,
    quad_params=None,
) -> dict:
    """Diagnostic report on the semiclassical behavior of the multiplicities.

    * KS distance between the rescaled discrete spectrum measure of n*lam and
      the Monte Carlo empirical marginal-spectrum distribution of lam, for
      each n (expected to decrease, up to sampling noise).
    * n^-d m^{n lam}_{n mu} at probe weights mu against the rescaled-
      multiplicity limit J evaluated by quadrature at the traceless image of
      mu (J is identically zero when lam has repeated entries).
    * A homogeneity spot check J_{2 lam}(2x) / J_lam(x) when lam is generic.
    """
    from .density import J_at, QuadratureParams
    from .sampler import run_histogram

    lam = tuple(int(x) for x in lam)
    ws = WeightSystem(setting)
    d = ws.N * (ws.N - 1) // 2 - ws.n_h_roots - ws.r
    lam_real = np.asarray(lam, dtype=float)
    lam_real = lam_real - lam_real.mean()
    spec = _spectrum(lam_real)

    raw = []
    run_histogram(ws, spec, samples, seed=seed, bins=8, raw_samples_out=raw)
    mc_points = np.concatenate(raw, axis=0)
    mc_weights = np.full(len(mc_points), 1.0 / len(mc_points))

    report: dict = {"setting": setting.label, "lambda": list(lam), "d": d,
                    "samples": samples, "ks": {}, "mult_vs_J": []}
    tables = {}
    for n in n_list:
        lam_n = tuple(x * n for x in lam)
        tables[n] = restrict_decompose(setting, lam_n)
        Xi = build_Xi(tables[n]).rescale(n)
        pts, wts = Xi.points_and_weights()
        pts_red = ws.plain_to_reduced(pts)
        report["ks"][n] = ks_distance_weighted(pts_red, wts, mc_points, mc_weights)

    if probes is None:
        probes = [mu for mu, m in sorted(tables[min(n_list)].entries.items())][:2]
    degenerate = len(set(lam)) < len(lam)
    params = quad_params or QuadratureParams()
    for mu in probes:
        entry = {"mu": [list(f) for f in mu], "scaled": {}}
        x = _mu_plain_traceless(ws, mu)
        entry["J"] = 0.0 if degenerate else J_at(ws, spec, x, params)
        for n in n_list:
            mu_n = tuple(tuple(v * n for v in f) for f in mu)
            m_n = tables[n].entries.get(mu_n, 0)
            entry["scaled"][n] = m_n / float(n) ** d
        report["mult_vs_J"].append(entry)

    if not degenerate:
        x = _mu_plain_traceless(ws, probes[0]) + 0.37 * ws.onb[:, 0]
        j1 = J_at(ws, spec, x, params)
        spec2 = _spectrum(2 * lam_real)
        j2 = J_at(ws, spec2, 2 * x, params)
        if abs(j1) > 1e-12:
            report["homogeneity_ratio"] = j2 / j1
            report["homogeneity_expected"] = 2.0 ** d
    return report


def _spectrum(values):
    from .sampler import Spectrum

    return Spectrum.make(values, center=False)


def _mu_plain_traceless(ws: WeightSystem, mu) -> np.ndarray:
    flat = []
    for piece in mu:
        t = _traceless_fraction(tuple(int(x) for x in piece))
        flat.extend(float(x) for x in t)
    return np.asarray(flat)
