"""Monte Carlo engine: uniform orbit points, marginal maps, histograms.

Sampling uses counter-based Philox streams so that a run split across worker
streams is reproducible and mergeable.  Marginal spectra are expressed in
reduced coordinates (the leading eigenvalues of each factor), matching the
grids used by the density evaluators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .weights import Setting, WeightSystem


class NumericalAlarm(RuntimeError):
    """A numerical consistency check failed mid-computation."""


@dataclass
class Spectrum:
    """Sorted (non-increasing) real spectrum of an ambient orbit label."""

    values: np.ndarray
    traceless: bool = True
    applied_shift: float = 0.0

    @classmethod
    def make(cls, values, center: bool = True) -> "Spectrum":
        v = np.sort(np.asarray(values, dtype=float))[::-1].copy()
        shift = 0.0
        if center:
            shift = v.mean()
            v -= shift
        return cls(values=v, traceless=center, applied_shift=float(shift))

    def __len__(self) -> int:
        return len(self.values)


def haar_unitary(n: int, rng, size: int | None = None) -> np.ndarray:
    """Haar-distributed unitaries via QR of a complex Ginibre matrix.

    The R-diagonal phase correction is applied; without it the QR convention
    biases the distribution away from Haar.
    """
    shape = (n, n) if size is None else (size, n, n)
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.einsum("...ii->...i", r)
    ph = d / np.abs(d)
    return q * ph[..., None, :]


def orbit_point(lam: Spectrum | np.ndarray, rng) -> np.ndarray:
    """One uniform sample U diag(lam) U+ from the unitary orbit of lam."""
    v = lam.values if isinstance(lam, Spectrum) else np.asarray(lam, dtype=float)
    U = haar_unitary(len(v), rng)
    return (U * v) @ U.conj().T


def marginals_distinguishable(M: np.ndarray, dims) -> list[np.ndarray]:
    """Partial traces of M over all factors but one, for each factor."""
    dims = tuple(dims)
    if M.shape[-1] != math.prod(dims) or M.shape[-2] != M.shape[-1]:
        raise ValueError("matrix size does not match factor dimensions")
    T = M.reshape(M.shape[:-2] + dims + dims)
    letters = "abcdefgh"
    out = []
    for j in range(len(dims)):
        left = "".join(letters[i] for i in range(len(dims)))
        right = "".join(
            letters[j].upper() if i == j else letters[i] for i in range(len(dims))
        )
        spec = "..." + left + right + "->..." + letters[j] + letters[j].upper()
        out.append(np.einsum(spec, T))
    return out


class MarginalMap:
    """Setting-specific marginal map from ambient Hermitian matrices to the
    list of factor-side Hermitian matrices whose spectra are recorded."""

    def __init__(self, ws: WeightSystem):
        self.ws = ws
        self.setting = ws.setting
        if self.setting.kind != "dst":
            self._transfer = _embedding_operators_cached(self.setting)
            n = self.setting.factor_dims[0]
            base = _gellmann_traceless(n)
            self._basis = base
            imgs = [embed_hermitian(self.setting, B) for B in base]
            self._images = np.stack(imgs)
            G = np.einsum("aij,bji->ab", self._images, self._images).real
            self._gram = G
            self._gram_inv = np.linalg.inv(G)

    def apply(self, M: np.ndarray) -> list[np.ndarray]:
        if self.setting.kind == "dst":
            return marginals_distinguishable(M, self.setting.dims)
        return [adjoint_marginal(self.setting, M, self._transfer)]

    def project(self, M: np.ndarray) -> np.ndarray:
        """Frobenius-orthogonal projection onto the embedded factor algebra,
        expressed as a traceless factor-side matrix (bosons/fermions)."""
        b = np.einsum("aij,...ji->...a", self._images, M).real
        coef = b @ self._gram_inv.T
        return np.einsum("...a,aij->...ij", coef, self._basis)


def _gellmann_traceless(n: int) -> np.ndarray:
    """Generalized Gell-Mann basis of the traceless Hermitian n-by-n matrices."""
    mats = []
    for i in range(n):
        for j in range(i + 1, n):
            A = np.zeros((n, n), dtype=complex)
            A[i, j] = A[j, i] = 1.0
            mats.append(A)
            B = np.zeros((n, n), dtype=complex)
            B[i, j], B[j, i] = -1j, 1j
            mats.append(B)
    for d in range(1, n):
        D = np.zeros((n, n), dtype=complex)
        D[np.diag_indices(n)] = [1.0] * d + [-d] + [0.0] * (n - d - 1)
        mats.append(D / math.sqrt(d * (d + 1) / 2.0) * math.sqrt(0.5))
    return np.stack(mats)


def _embedding_operators(setting: Setting) -> np.ndarray:
    """Operators T[p,q] with Tr(M T[q,p]) = (adjoint marginal of M)[p,q].

    T[p,q] is the derived representation of the elementary matrix E_{pq} on
    the symmetric (bosons) or alternating (fermions) power, in the ambient
    orthonormal basis.
    """
    n, k = setting.dims
    idx = setting.multi_indices()
    pos = {a: i for i, a in enumerate(idx)}
    N = len(idx)
    T = np.zeros((n, n, N, N), dtype=complex)
    if setting.kind == "bos":
        for col, a in enumerate(idx):
            for q in range(n):
                if a[q] == 0:
                    continue
                for p in range(n):
                    if p == q:
                        T[p, q, col, col] += a[q]
                    else:
                        b = list(a)
                        b[q] -= 1
                        b[p] += 1
                        T[p, q, pos[tuple(b)], col] += math.sqrt(a[q] * (a[p] + 1))
    else:
        for col, a in enumerate(idx):
            occ = [i for i, x in enumerate(a) if x]
            for q in occ:
                for p in range(n):
                    if p == q:
                        T[p, q, col, col] += 1.0
                    elif a[p] == 0:
                        b = list(a)
                        b[q], b[p] = 0, 1
                        # sign from reordering the wedge factors
                        between = sum(
                            1 for i in occ if min(p, q) < i < max(p, q)
                        )
                        T[p, q, pos[tuple(b)], col] += (-1.0) ** between
    return T


def embed_hermitian(setting: Setting, X: np.ndarray) -> np.ndarray:
    """Image of a factor-side Hermitian matrix under the derived embedding.

    For diagonal X the image is diagonal with entries row_alpha . diag(X).
    """
    T = _embedding_operators_cached(setting)
    return np.einsum("pq,pqIJ->IJ", np.asarray(X, dtype=complex), T)


def _embedding_operators_cached(setting: Setting) -> np.ndarray:
    if setting not in _EMBED_CACHE:
        _EMBED_CACHE[setting] = _embedding_operators(setting)
    return _EMBED_CACHE[setting]


_EMBED_CACHE: dict = {}


def adjoint_marginal(setting: Setting, M: np.ndarray, transfer=None) -> np.ndarray:
    """The physical single-particle marginal: the factor-side matrix Y with
    Tr(Y X) = Tr(M dS(X)) for all Hermitian X.

    For bosons/fermions this is the one-body reduced matrix in the k-trace
    normalization; it equals embed_constant times the Frobenius-orthogonal
    projection onto the embedded algebra.
    """
    if transfer is None:
        transfer = _embedding_operators_cached(setting)
    Y = np.einsum("qpIJ,...JI->...pq", transfer, M)
    return Y


def project_symmetric(setting: Setting, M: np.ndarray, marginal_map: MarginalMap | None = None) -> np.ndarray:
    """Closest traceless factor-side matrix to M in Frobenius distance,
    through the derived embedding (Gram normal equations)."""
    if setting.kind == "dst":
        raise ValueError("project_symmetric applies to bosons/fermions only")
    mm = marginal_map or MarginalMap(WeightSystem(setting))
    return mm.project(M)


def sample_spectrum(ws: WeightSystem, lam: Spectrum, rng, marginal_map=None) -> np.ndarray:
    """One sample of the marginal spectra, in reduced coordinates."""
    mm = marginal_map or MarginalMap(ws)
    M = orbit_point(lam, rng)
    return _spectra_batch(ws, mm, M[None, ...])[0]


def _spectra_batch(ws: WeightSystem, mm: MarginalMap, M: np.ndarray) -> np.ndarray:
    pieces = []
    for part in mm.apply(M):
        ev = np.linalg.eigvalsh(part)[..., ::-1]
        ev = ev - ev.mean(axis=-1, keepdims=True)
        pieces.append(ev[..., :-1])
    return np.concatenate(pieces, axis=-1)


@dataclass
class Histogram:
    """Counts over a rectangular grid in reduced chamber coordinates."""

    edges: list[np.ndarray]
    counts: np.ndarray
    total: int
    overflow: int
    meta: dict = field(default_factory=dict)

    def merge(self, other: "Histogram") -> "Histogram":
        for a, b in zip(self.edges, other.edges):
            if a.shape != b.shape or not np.allclose(a, b):
                raise ValueError("histogram grids differ; cannot merge")
        return Histogram(
            edges=self.edges,
            counts=self.counts + other.counts,
            total=self.total + other.total,
            overflow=self.overflow + other.overflow,
            meta={**self.meta, "merged": True},
        )

    def density(self) -> np.ndarray:
        """Empirical density per cell (counts / (total * cell volume))."""
        vol = 1.0
        for e in self.edges:
            vol = np.multiply.outer(vol, np.diff(e))
        return self.counts / (self.total * vol)

    def to_json_dict(self) -> dict:
        return {
            "edges": [e.tolist() for e in self.edges],
            "counts": self.counts.tolist(),
            "total": self.total,
            "overflow": self.overflow,
            "meta": self.meta,
        }


def support_box(ws: WeightSystem, lam: Spectrum) -> list[tuple[float, float]]:
    """Per-reduced-coordinate support bounds from the rearrangement pairing:
    the extreme of a linear functional over the orbit's marginal image is the
    sorted pairing of lam with the functional's ambient weight values."""
    lo_hi = []
    lam_desc = np.sort(lam.values)[::-1]
    dual = ws.reduced_map @ np.linalg.inv(ws.reduced_map.T @ ws.reduced_map)
    leading = []
    for n in ws.factor_dims:
        leading += [True] + [False] * (n - 2)
    for i in range(ws.r):
        v = dual[:, i]
        Lv = ws.rows.astype(float) @ v
        hi = float(np.dot(np.sort(Lv)[::-1], lam_desc))
        lo = float(np.dot(np.sort(Lv), lam_desc))
        if leading[i]:
            # the leading eigenvalue of a traceless factor is nonnegative
            lo = max(lo, 0.0)
        lo_hi.append((lo, hi))
    return lo_hi


def run_histogram(
    ws: WeightSystem,
    lam: Spectrum,
    count: int,
    edges: list[np.ndarray] | None = None,
    seed: int = 0,
    bins: int = 50,
    batch: int = 20000,
    workers: int = 1,
    raw_samples_out: list | None = None,
) -> Histogram:
    """Accumulate marginal-spectrum samples into a histogram.

    Deterministic for a fixed (seed, workers) pair: worker w draws from the
    Philox stream spawned as child w of the seed, so partial runs merge into
    the same statistics.  Samples falling outside the grid increment
    ``overflow`` and are never dropped silently.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    mm = MarginalMap(ws)
    if edges is None:
        box = support_box(ws, lam)
        pad = [1e-9 * max(1.0, abs(hi - lo)) for lo, hi in box]
        edges = [
            np.linspace(lo - p, hi + p, bins + 1)
            for (lo, hi), p in zip(box, pad)
        ]
    shape = tuple(len(e) - 1 for e in edges)
    counts = np.zeros(shape, dtype=np.int64)
    overflow = 0

    seq = np.random.SeedSequence(seed)
    streams = [np.random.Generator(np.random.Philox(s)) for s in seq.spawn(max(1, workers))]
    per_worker = [count // len(streams)] * len(streams)
    per_worker[0] += count - sum(per_worker)

    def do_worker(widx: int):
        rng = streams[widx]
        local = np.zeros(shape, dtype=np.int64)
        local_over = 0
        left = per_worker[widx]
        while left > 0:
            m = min(batch, left)
            U = haar_unitary(ws.N, rng, size=m)
            M = (U * lam.values) @ np.conj(np.swapaxes(U, -1, -2))
            pts = _spectra_batch(ws, mm, M)
            if raw_samples_out is not None:
                raw_samples_out.append(pts)
            h, _ = np.histogramdd(pts, bins=edges)
            local += h.astype(np.int64)
            local_over += m - int(h.sum())
            left -= m
        return local, local_over

    if len(streams) == 1:
        results = [do_worker(0)]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=len(streams)) as pool:
            results = list(pool.map(do_worker, range(len(streams))))
    for local, local_over in results:
        counts += local
        overflow += local_over

    return Histogram(
        edges=[np.asarray(e) for e in edges],
        counts=counts,
        total=count,
        overflow=overflow,
        meta={
            "setting": ws.setting.label,
            "lambda": lam.values.tolist(),
            "seed": seed,
            "count": count,
            "workers": max(1, workers),
        },
    )
