"""Settings and weight systems for projected orbital measures.

A *setting* fixes one of the three supported marginal problems: a system of
distinguishable particles with given factor dimensions, or a system of k
indistinguishable bosons or fermions on an n-level space.  Each setting embeds
a torus of rank r into the diagonal of an ambient N-by-N space via N integer
*weight rows*; all densities, splines and multiplicity computations downstream
consume that data through a ``WeightSystem``.

Coordinate conventions used throughout the package:

* *plain* coordinates: concatenated per-factor vectors in R^s (s = sum of the
  factor dimensions), each factor summing to zero;
* *orthonormal* coordinates: coefficients in the per-factor Helmert basis,
  an isometry between the traceless subspace and R^r (Lebesgue measure on the
  torus algebra always means Lebesgue in these coordinates);
* *reduced* coordinates: the first n_j - 1 entries of each factor, the
  coordinates in which grids, histograms and CSV output are expressed.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
import scipy.linalg

MAX_AMBIENT_DIM = 64
MAX_EXPANDED_DIRECTIONS = 40


class SettingError(ValueError):
    """Invalid marginal-problem parameters."""


class CapExceededError(ValueError):
    """A configured combinatorial guard was exceeded."""


def superfactorial(n: int) -> int:
    """prod_{l=1}^{n-1} l!, the Vandermonde of the staircase (N-1,...,1,0)."""
    out = 1
    for l in range(1, n):
        out *= math.factorial(l)
    return out


@dataclass(frozen=True)
class Setting:
    """One marginal problem: kind in {'dst', 'bos', 'fer'} plus parameters.

    For 'dst', ``dims`` lists the factor dimensions (each >= 2).  For 'bos'
    and 'fer', ``dims`` is (n, k).
    """

    kind: str
    dims: tuple[int, ...]

    def __post_init__(self):
        if self.kind == "dst":
            if len(self.dims) < 2 or any(d < 2 for d in self.dims):
                raise SettingError(
                    "distinguishable setting needs >= 2 factors of dimension >= 2"
                )
        elif self.kind == "bos":
            n, k = self.dims
            if n < 2 or k < 2:
                raise SettingError("bosons need n >= 2 and k >= 2")
        elif self.kind == "fer":
            n, k = self.dims
            # k in {1, n-1} gives H = G and k in {n, >n} degenerates outright.
            if not (1 < k < n - 1):
                raise SettingError(
                    f"fermions need 1 < k < n-1; ({n},{k}) is a trivial marginal problem"
                )
        else:
            raise SettingError(f"unknown setting kind {self.kind!r}")
        if self.N > MAX_AMBIENT_DIM:
            raise CapExceededError(
                f"ambient dimension {self.N} exceeds cap {MAX_AMBIENT_DIM}"
            )

    @classmethod
    def distinguishable(cls, dims) -> "Setting":
        return cls("dst", tuple(int(d) for d in dims))

    @classmethod
    def bosons(cls, n: int, k: int) -> "Setting":
        return cls("bos", (int(n), int(k)))

    @classmethod
    def fermions(cls, n: int, k: int) -> "Setting":
        return cls("fer", (int(n), int(k)))

    @classmethod
    def parse(cls, label: str) -> "Setting":
        """Parse 'dst:2,2' / 'bos:n,k' / 'fer:n,k'."""
        try:
            kind, rest = label.split(":")
            nums = tuple(int(x) for x in rest.split(","))
        except ValueError as exc:
            raise SettingError(f"cannot parse setting {label!r}") from exc
        if kind == "dst":
            return cls.distinguishable(nums)
        if kind in ("bos", "fer"):
            if len(nums) != 2:
                raise SettingError(f"{kind} takes exactly two parameters")
            return cls(kind, nums)
        raise SettingError(f"unknown setting kind {kind!r}")

    @property
    def label(self) -> str:
        return f"{self.kind}:" + ",".join(str(d) for d in self.dims)

    @property
    def factor_dims(self) -> tuple[int, ...]:
        """Dimensions of the torus factors on the marginal side."""
        return self.dims if self.kind == "dst" else (self.dims[0],)

    @property
    def N(self) -> int:
        if self.kind == "dst":
            return math.prod(self.dims)
        n, k = self.dims
        return math.comb(n + k - 1, k) if self.kind == "bos" else math.comb(n, k)

    @property
    def r(self) -> int:
        return sum(d - 1 for d in self.factor_dims)

    def multi_indices(self) -> list[tuple[int, ...]]:
        """Ambient basis labels in lexicographic order.

        dst: tuples (k_1,...,k_m) with 0 <= k_j < n_j.  bos: n-component
        multi-indices of total degree k.  fer: 0/1 multi-indices with k ones.
        """
        if self.kind == "dst":
            return list(itertools.product(*[range(n) for n in self.dims]))
        # bosons/fermions: descending lexicographic, so that weight values are
        # non-increasing on the positive chamber (as the dst enumeration is)
        n, k = self.dims
        if self.kind == "bos":
            return sorted(
                (a for a in itertools.product(range(k + 1), repeat=n) if sum(a) == k),
                reverse=True,
            )
        return sorted(
            (a for a in itertools.product(range(2), repeat=n) if sum(a) == k),
            reverse=True,
        )


def _helmert_basis(n: int) -> np.ndarray:
    """Orthonormal basis (columns) of the zero-sum subspace of R^n."""
    cols = []
    for i in range(1, n):
        v = np.zeros(n)
        v[:i] = 1.0
        v[i] = -i
        cols.append(v / math.sqrt(i * (i + 1)))
    return np.stack(cols, axis=1)


def vandermonde(v) -> float:
    """prod_{j<k} (v_j - v_k) over the trailing axis (vectorized)."""
    v = np.asarray(v)
    n = v.shape[-1]
    iu, ju = np.triu_indices(n, 1)
    d = v[..., :, None] - v[..., None, :]
    return np.prod(d[..., iu, ju], axis=-1)


def _canon(vec: tuple[int, ...]) -> tuple[tuple[int, ...], int]:
    """Sign-canonical form of an integer direction: first nonzero entry > 0."""
    for x in vec:
        if x != 0:
            return (vec, 1) if x > 0 else (tuple(-y for y in vec), -1)
    raise ValueError("zero direction vector")


class WeightSystem:
    """Torus embedding data of a setting, plus derived combinatorics.

    Attributes
    ----------
    rows : (N, s) integer array; row alpha is the linear functional giving the
        alpha-th ambient diagonal entry of an embedded torus element.
    h_roots : (|Phi+_h|, s) integer array of marginal-side positive roots.
    directions : list of (integer tuple, multiplicity) for Phi+_{g/h}.
    sign : +-1 with Delta_g|_t = sign * Delta_h * prod over directions.
    onb : (s, r) orthonormal basis of the per-factor traceless subspace.
    embed_constant : ratio <dS(X),dS(Y)> / <X,Y> of the ambient Frobenius form
        pulled back through the embedding (bos/fer; 1 for dst factors).
    """

    def __init__(self, setting: Setting, rows: np.ndarray | None = None):
        self.setting = setting
        self.factor_dims = setting.factor_dims
        self.s = sum(self.factor_dims)
        self.r = setting.r
        if rows is None:
            rows = self._build_rows(setting)
        self.rows = np.asarray(rows, dtype=np.int64)
        self.N = self.rows.shape[0]
        if self.N > MAX_AMBIENT_DIM:
            raise CapExceededError(f"N = {self.N} exceeds cap {MAX_AMBIENT_DIM}")

        self.h_roots = self._build_h_roots()
        self.directions, self.sign = self._extract_directions()
        self.onb = self._build_onb()
        self.reduced_map = self._build_reduced_map()
        self.reduced_jacobian = abs(np.linalg.det(self.onb.T @ self.reduced_map))

        self.rho_g = (self.N - 1) / 2.0 - np.arange(self.N)
        self.rho_h = self._build_rho_h()
        self.rho_g_pullback = self.project_to_t(self.rho_g)

        Q = self.rows.T @ self.rows
        # On traceless inputs Q acts per factor as (Q_aa - Q_ab) * identity.
        self.embed_constant = float(Q[0, 0] - Q[0, 1]) if self.s > 1 else float(Q[0, 0])

        self.sf_ambient = superfactorial(self.N)
        self.sf_marginal = math.prod(superfactorial(n) for n in self.factor_dims)
        self.n_h_roots = self.h_roots.shape[0]

        self._check_factorization()

    # -- construction ------------------------------------------------------

    @staticmethod
    def _build_rows(setting: Setting) -> np.ndarray:
        idx = setting.multi_indices()
        if setting.kind == "dst":
            s = sum(setting.dims)
            rows = np.zeros((len(idx), s), dtype=np.int64)
            for a, multi in enumerate(idx):
                off = 0
                for j, n in enumerate(setting.dims):
                    rows[a, off + multi[j]] += 1
                    off += n
            return rows
        return np.asarray(idx, dtype=np.int64)

    def _build_h_roots(self) -> np.ndarray:
        roots = []
        off = 0
        for n in self.factor_dims:
            for i in range(n):
                for j in range(i + 1, n):
                    v = np.zeros(self.s, dtype=np.int64)
                    v[off + i], v[off + j] = 1, -1
                    roots.append(v)
            off += n
        return np.array(roots, dtype=np.int64).reshape(len(roots), self.s)

    def _extract_directions(self):
        """Pairwise row differences with one copy of each h-root divided out.

        The h-roots occur among the differences up to sign only; the product
        of match signs is returned so that Delta_g|_t = sign * Delta_h *
        Delta_{g/h} holds exactly.
        """
        counts: Counter = Counter()
        for a in range(self.N):
            for b in range(a + 1, self.N):
                d = tuple(int(x) for x in (self.rows[a] - self.rows[b]))
                if all(x == 0 for x in d):
                    raise SettingError("weight rows are not distinct")
                c, s = _canon(d)
                counts[(c, s)] += 1
        sign = 1
        for root in self.h_roots:
            c, s = _canon(tuple(int(x) for x in root))
            for sgn in (1, -1):
                if counts.get((c, sgn), 0) > 0:
                    counts[(c, sgn)] -= 1
                    sign *= sgn
                    break
            else:
                raise SettingError(f"h-root {root} missing from weight differences")
        directions = []
        for (c, s), mult in sorted(counts.items()):
            if mult > 0:
                directions.append((tuple(s * x for x in c), mult))
        return directions, sign

    def _build_onb(self) -> np.ndarray:
        blocks = []
        off = 0
        cols = []
        for n in self.factor_dims:
            H = _helmert_basis(n)
            for j in range(n - 1):
                v = np.zeros(self.s)
                v[off:off + n] = H[:, j]
                cols.append(v)
            off += n
        return np.stack(cols, axis=1)

    def _build_reduced_map(self) -> np.ndarray:
        """Linear map from reduced coordinates to plain vectors."""
        cols = []
        off = 0
        for n in self.factor_dims:
            for i in range(n - 1):
                v = np.zeros(self.s)
                v[off + i] = 1.0
                v[off + n - 1] = -1.0
                cols.append(v)
            off += n
        return np.stack(cols, axis=1)

    def _build_rho_h(self) -> np.ndarray:
        parts = []
        for n in self.factor_dims:
            parts.append((n - 1) / 2.0 - np.arange(n))
        return np.concatenate(parts)

    def _check_factorization(self, trials: int = 16, rtol: float = 1e-9):
        rng = np.random.default_rng(314159)
        for _ in range(trials):
            x = self.random_torus_point(rng)
            lhs = vandermonde(self.weight_values(x))
            rhs = self.sign * self.delta_h(x) * self.delta_gh_product(x)
            if abs(lhs - rhs) > rtol * max(abs(lhs), abs(rhs), 1e-300):
                raise SettingError(
                    f"Delta factorization failed: {lhs} vs {rhs} at {x}"
                )

    # -- coordinate maps ----------------------------------------------------

    def random_torus_point(self, rng) -> np.ndarray:
        return self.onb @ rng.standard_normal(self.r)

    def orth_to_plain(self, c) -> np.ndarray:
        return np.asarray(c) @ self.onb.T

    def plain_to_orth(self, x) -> np.ndarray:
        return np.asarray(x) @ self.onb

    def reduced_to_plain(self, y) -> np.ndarray:
        return np.asarray(y) @ self.reduced_map.T

    def plain_to_reduced(self, x) -> np.ndarray:
        x = np.asarray(x)
        pieces = []
        off = 0
        for n in self.factor_dims:
            pieces.append(x[..., off:off + n - 1])
            off += n
        return np.concatenate(pieces, axis=-1)

    def split_factors(self, x) -> list[np.ndarray]:
        out = []
        off = 0
        for n in self.factor_dims:
            out.append(np.asarray(x)[..., off:off + n])
            off += n
        return out

    def in_chamber(self, x, tol: float = 1e-12) -> bool:
        """Is the plain vector sorted non-increasing within each factor?"""
        for piece in self.split_factors(x):
            if np.any(np.diff(piece) > tol):
                return False
        return True

    # -- polynomial data -----------------------------------------------------

    def weight_values(self, x) -> np.ndarray:
        """L(x): the N ambient diagonal entries of the embedded torus point."""
        return np.asarray(x) @ self.rows.T.astype(float)

    def delta_h(self, x):
        vals = np.asarray(x) @ self.h_roots.T.astype(float)
        return np.prod(vals, axis=-1) if self.n_h_roots else np.ones(np.shape(vals)[:-1])

    def delta_gh_product(self, x):
        out = None
        for d, mult in self.directions:
            v = np.asarray(x) @ np.asarray(d, dtype=float)
            term = v**mult
            out = term if out is None else out * term
        return out

    def delta_gh(self, x):
        """Delta_{g/h}(x) = Delta_g|_t / Delta_h, entire in x."""
        return self.sign * self.delta_gh_product(x)

    def expanded_directions(self) -> np.ndarray:
        """directions repeated by multiplicity, as a float array."""
        rows = []
        for d, mult in self.directions:
            rows.extend([d] * mult)
        return np.asarray(rows, dtype=float)

    def project_to_t(self, nu) -> np.ndarray:
        """Adjoint of the weight map, as a per-factor traceless plain vector.

        <project_to_t(nu), x> = <nu, L(x)> for every torus point x; the
        all-ones ambient vector maps to 0.
        """
        raw = np.asarray(nu, dtype=float) @ self.rows.astype(float)
        pieces = []
        for piece in self.split_factors(raw):
            pieces.append(piece - piece.mean(axis=-1, keepdims=True))
        return np.concatenate(pieces, axis=-1)

    # -- serialization -------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "setting": self.setting.label,
            "N": self.N,
            "r": self.r,
            "directions": [[list(d), m] for d, m in self.directions],
            "weight_rows": self.rows.tolist(),
            "h_roots": self.h_roots.tolist(),
            "sign": self.sign,
            "rho_h": self.rho_h.tolist(),
            "rho_g": self.rho_g.tolist(),
            "rho_g_pullback": self.rho_g_pullback.tolist(),
            "embed_constant": self.embed_constant,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_json_dict(), **kw)

    @classmethod
    def from_json_dict(cls, data: dict) -> "WeightSystem":
        setting = Setting.parse(data["setting"])
        return cls(setting, rows=np.asarray(data["weight_rows"], dtype=np.int64))


def build_weight_system(setting: Setting) -> WeightSystem:
    return WeightSystem(setting)


# -- regularity combinatorics -------------------------------------------------


def _span_rank(vectors: np.ndarray, tol: float = 1e-10) -> int:
    """Rank via column-pivoted QR on normalized rows; deterministic."""
    if len(vectors) == 0:
        return 0
    A = np.asarray(vectors, dtype=float)
    A = A / np.linalg.norm(A, axis=1, keepdims=True)
    R, _ = scipy.linalg.qr(A.T, mode="r", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return 0
    return int(np.sum(diag > tol * diag[0]))


def ell(ws: WeightSystem) -> int:
    """Largest l such that deleting any l+1 directions (with multiplicity)
    still leaves a spanning set.

    Every non-spanning deletion leaves a set inside some proper subspace
    spanned by directions, so l + 2 equals the minimum, over direction-spanned
    proper subspaces U, of the number of directions outside U.  Subspaces are
    enumerated as spans of subsets of distinct directions of size < r, which
    is exhaustive by monotonicity of containment counts.
    """
    E = ws.expanded_directions()
    if len(E) > MAX_EXPANDED_DIRECTIONS:
        raise CapExceededError(
            f"{len(E)} expanded directions exceed cap {MAX_EXPANDED_DIRECTIONS}"
        )
    r = _span_rank(E)
    if r < ws.r:
        raise SettingError("directions do not span the torus algebra")
    distinct = [np.asarray(d, dtype=float) for d, _ in ws.directions]
    mults = [m for _, m in ws.directions]
    max_inside = 0
    for size in range(0, r):
        for subset in itertools.combinations(range(len(distinct)), size):
            S = np.array([distinct[i] for i in subset]).reshape(size, ws.s)
            if size and _span_rank(S) < size:
                continue
            inside = 0
            for d, m in zip(distinct, mults):
                if size == 0:
                    continue
                if _span_rank(np.vstack([S, d])) == size:
                    inside += m
            max_inside = max(max_inside, inside)
    return len(E) - max_inside - 2


def min_line_degree(ws: WeightSystem, trials: int = 32, rng=None) -> int:
    """Minimum degree of Delta_{g/h} restricted to an affine line on which it
    is not uniformly zero: min over line directions y of #{alpha : <alpha,y> != 0}.

    Candidate y's are the normals (within the torus algebra) to every
    hyperplane spanned by distinct directions, plus random directions.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    E = ws.expanded_directions()
    distinct = [np.asarray(d, dtype=float) for d, _ in ws.directions]
    candidates = []
    r = ws.r
    for subset in itertools.combinations(range(len(distinct)), r - 1):
        S = np.array([distinct[i] for i in subset]).reshape(r - 1, ws.s)
        if r > 1 and _span_rank(S) < r - 1:
            continue
        # null direction of S within the torus algebra
        So = S @ ws.onb
        _, _, vt = np.linalg.svd(np.vstack([So, np.zeros((1, r))]))
        y = ws.onb @ vt[-1]
        candidates.append(y)
    for _ in range(max(1, trials)):
        candidates.append(ws.random_torus_point(rng))
    best = None
    for y in candidates:
        ny = np.linalg.norm(y)
        if ny < 1e-14:
            continue
        vals = E @ (y / ny)
        scale = np.linalg.norm(E, axis=1)
        count = int(np.sum(np.abs(vals) > 1e-10 * scale))
        if count > 0:
            best = count if best is None else min(best, count)
    return best


def degree_bounds(setting: Setting) -> dict:
    """Per-setting degree bound of the local polynomial pieces, plus the
    closed-form continuity exponents (conjectural for bosons/fermions)."""
    if setting.kind == "dst":
        dims = setting.dims
        N = setting.N
        max_deg = (N * (N - 1) + sum((n - 1) * (n - 2) for n in dims)) // 2
        if len(dims) == 2:
            m, n = sorted(dims)
            cont = (m * m - 1) * (n - 1) - 2
        else:
            cont = None
        conjectural = False
    elif setting.kind == "bos":
        n, k = setting.dims
        N = setting.N
        max_deg = (N * (N - 1) + (n - 1) * (n - 2)) // 2
        cont = (
            sum(
                math.comb(n + k - i - 2, k - i)
                * math.factorial(n + k - i - 2)
                // (math.factorial(n - 1) * math.factorial(k - i - 1))
                for i in range(k)
            )
            - n
            - 1
        )
        conjectural = True
    else:
        n, k = setting.dims
        K = setting.N
        max_deg = (K * (K - 1) + (n - 1) * (n - 2)) // 2
        cont = math.comb(n - 1, k) * math.comb(n - 1, k - 1) - n - 1
        conjectural = True
    return {
        "max_local_degree": max_deg,
        "continuity_closed_form": cont,
        "conjectural": conjectural,
    }
