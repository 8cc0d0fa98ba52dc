"""Haar sampling, marginal maps, projections, histograms."""

import numpy as np
import pytest

from orbitproj.sampler import (
    MarginalMap,
    Spectrum,
    adjoint_marginal,
    embed_hermitian,
    haar_unitary,
    marginals_distinguishable,
    orbit_point,
    project_symmetric,
    run_histogram,
    sample_spectrum,
    support_box,
)
from orbitproj.weights import Setting, WeightSystem


def test_haar_n1_phase(rng):
    U = haar_unitary(1, rng)
    assert abs(abs(U[0, 0]) - 1.0) < 1e-14


def test_haar_unitarity(rng):
    U = haar_unitary(16, rng)
    err = np.linalg.norm(U.conj().T @ U - np.eye(16))
    assert err < 1e-12


def test_haar_moment(rng):
    # E|U_11|^2 = 1/N for Haar; Monte Carlo oracle at N = 4
    U = haar_unitary(4, rng, size=100000)
    m = np.mean(np.abs(U[:, 0, 0]) ** 2)
    assert abs(m - 0.25) < 0.01


def test_orbit_point_zero(rng):
    M = orbit_point(Spectrum.make(np.zeros(3)), rng)
    assert np.allclose(M, 0)


def test_orbit_point_rank_one(rng):
    M = orbit_point(np.array([1.0, 0.0, 0.0]), rng)
    ev = np.linalg.eigvalsh(M)
    assert np.allclose(sorted(ev), [0, 0, 1], atol=1e-12)
    assert np.trace(M).real == pytest.approx(1.0)


def test_orbit_point_preserves_staircase_spectrum(rng):
    lam = Spectrum.make([1.5, 0.5, -0.5, -1.5])
    M = orbit_point(lam, rng)
    assert np.allclose(np.linalg.eigvalsh(M)[::-1], lam.values, atol=1e-10)
    assert np.linalg.norm(M - M.conj().T) < 1e-12


def test_marginal_of_product_state(rng):
    A = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    A = A + A.conj().T
    B = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    B = B + B.conj().T
    B = B / np.trace(B).real
    M = np.kron(A, B)
    p1, p2 = marginals_distinguishable(M, (2, 3))
    assert np.allclose(p1, A, atol=1e-12)
    assert np.allclose(p2, np.trace(A) * B, atol=1e-12)


def test_marginal_of_identity():
    M = np.eye(6, dtype=complex)
    p1, p2 = marginals_distinguishable(M, (2, 3))
    assert np.allclose(p1, 3 * np.eye(2))
    assert np.allclose(p2, 2 * np.eye(3))


def _marginal_by_direct_summation(M, dims, which):
    # entrywise partial-trace oracle for two factors
    m, n = dims
    T = M.reshape(m, n, m, n)
    if which == 0:
        out = np.zeros((m, m), dtype=complex)
        for i in range(m):
            for k in range(m):
                out[i, k] = sum(T[i, j, k, j] for j in range(n))
    else:
        out = np.zeros((n, n), dtype=complex)
        for j in range(n):
            for l in range(n):
                out[j, l] = sum(T[i, j, i, l] for i in range(m))
    return out


def test_marginal_trace_identity(rng):
    Z = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    M = Z + Z.conj().T
    p1, p2 = marginals_distinguishable(M, (2, 2))
    assert np.allclose(p1, _marginal_by_direct_summation(M, (2, 2), 0))
    assert np.allclose(p2, _marginal_by_direct_summation(M, (2, 2), 1))
    assert np.trace(p1) == pytest.approx(np.trace(M), abs=1e-12)
    assert np.trace(p2) == pytest.approx(np.trace(M), abs=1e-12)


# ------------------------------------------------------- bosons / fermions


def test_embedded_diagonal_eigenvalues_bosons(ws_bos22):
    X = np.diag([1.0, -1.0]).astype(complex)
    R = embed_hermitian(ws_bos22.setting, X)
    assert np.allclose(np.diag(R), [2.0, 0.0, -2.0])
    assert np.linalg.norm(R - np.diag(np.diag(R))) < 1e-14


def test_embedded_diagonal_eigenvalues_fermions(ws_fer42):
    x = np.array([3.0, 1.0, -1.0, -3.0])
    R = embed_hermitian(ws_fer42.setting, np.diag(x).astype(complex))
    assert np.allclose(np.diag(R).real, ws_fer42.rows @ x)


def test_embedding_is_lie_homomorphism(rng):
    # commutators map to commutators (spot check, fermions)
    setting = Setting.fermions(4, 2)
    A = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    A = A + A.conj().T
    B = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    B = B + B.conj().T
    RA, RB = embed_hermitian(setting, A), embed_hermitian(setting, B)
    RC = embed_hermitian(setting, A @ B - B @ A)
    assert np.allclose(RA @ RB - RB @ RA, RC, atol=1e-10)


@pytest.mark.parametrize("label", ["bos:2,2", "fer:4,2", "bos:3,2"])
def test_projection_round_trip(label, rng):
    setting = Setting.parse(label)
    ws = WeightSystem(setting)
    mm = MarginalMap(ws)
    n = setting.factor_dims[0]
    Z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    X = Z + Z.conj().T
    X -= np.trace(X).real / n * np.eye(n)
    back = mm.project(embed_hermitian(setting, X))
    assert np.linalg.norm(back - X) < 1e-10


def test_projection_of_orthogonal_part_is_zero(ws_bos22, rng):
    # strip the embedded component from a random matrix; projection -> 0
    mm = MarginalMap(ws_bos22)
    Z = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    M = Z + Z.conj().T
    M -= np.trace(M).real / 3 * np.eye(3)
    X = mm.project(M)
    Mperp = M - embed_hermitian(ws_bos22.setting, X)
    assert np.linalg.norm(mm.project(Mperp)) < 1e-10


def test_adjoint_marginal_is_scaled_projection(ws_fer42, rng):
    # the physical marginal equals embed_constant times the Frobenius
    # projection; this ties the sampler to the density normalization
    Z = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    M = Z + Z.conj().T
    M -= np.trace(M).real / 6 * np.eye(6)
    Y = adjoint_marginal(ws_fer42.setting, M)
    X = project_symmetric(ws_fer42.setting, M)
    assert np.allclose(Y, ws_fer42.embed_constant * X, atol=1e-10)
    assert abs(np.trace(Y)) < 1e-10


def test_sample_spectrum_zero(ws_dst22, rng):
    out = sample_spectrum(ws_dst22, Spectrum.make(np.zeros(4)), rng)
    assert np.allclose(out, 0, atol=1e-12)


def test_sample_spectrum_staircase_bounds(ws_dst22, rng):
    lam = Spectrum.make([1.5, 0.5, -0.5, -1.5])
    mm = MarginalMap(ws_dst22)
    for _ in range(50):
        mu1, nu1 = sample_spectrum(ws_dst22, lam, rng, marginal_map=mm)
        assert 0.0 - 1e-9 <= mu1 <= 2.0 + 1e-9
        assert 0.0 - 1e-9 <= nu1 <= 2.0 + 1e-9


def test_support_box_staircase(ws_dst22):
    box = support_box(ws_dst22, Spectrum.make([1.5, 0.5, -0.5, -1.5]))
    assert box[0] == pytest.approx((0.0, 2.0))
    assert box[1] == pytest.approx((0.0, 2.0))


def test_spectrum_centering():
    s = Spectrum.make([3.0, 2.0, 1.0])
    assert s.applied_shift == pytest.approx(2.0)
    assert abs(s.values.sum()) < 1e-12
    assert np.all(np.diff(s.values) <= 0)


# ------------------------------------------------------- histograms


def test_histogram_counts_and_merge(ws_dst22):
    lam = Spectrum.make([1.5, 0.5, -0.5, -1.5])
    h1 = run_histogram(ws_dst22, lam, 500, seed=1, bins=10)
    h2 = run_histogram(ws_dst22, lam, 700, seed=2, bins=10)
    merged = h1.merge(h2)
    assert merged.total == 1200
    assert merged.counts.sum() + merged.overflow == 1200
    with pytest.raises(ValueError):
        run_histogram(ws_dst22, lam, 0)


def test_histogram_deterministic(ws_dst22):
    lam = Spectrum.make([1.5, 0.5, -0.5, -1.5])
    a = run_histogram(ws_dst22, lam, 2000, seed=42, bins=8)
    b = run_histogram(ws_dst22, lam, 2000, seed=42, bins=8)
    assert np.array_equal(a.counts, b.counts)


def test_histogram_no_mass_outside_support(ws_dst22):
    lam = Spectrum.make([1.5, 0.5, -0.5, -1.5])
    h = run_histogram(ws_dst22, lam, 20000, seed=3, bins=25)
    assert h.overflow == 0


def test_histogram_seed_invariance_poisson(ws_bos22):
    # two seeds agree within 5 sigma Poisson bounds per bin
    lam = Spectrum.make([1.0, 0.0, -1.0])
    n = 100000
    h1 = run_histogram(ws_bos22, lam, n, seed=10, bins=20)
    h2 = run_histogram(ws_bos22, lam, n, seed=77, bins=20)
    sig = np.sqrt(np.maximum(h1.counts + h2.counts, 1.0))
    assert np.all(np.abs(h1.counts - h2.counts) <= 5.0 * sig)


def test_histogram_worker_split_statistics(ws_bos22):
    lam = Spectrum.make([1.0, 0.0, -1.0])
    h1 = run_histogram(ws_bos22, lam, 40000, seed=5, workers=1, bins=15)
    h4 = run_histogram(ws_bos22, lam, 40000, seed=5, workers=4, bins=15)
    sig = np.sqrt(np.maximum(h1.counts + h4.counts, 1.0))
    assert np.all(np.abs(h1.counts - h4.counts) <= 5.0 * sig)
