"""Weight multiplicities, restriction tables, measures, recovery."""

from fractions import Fraction

import numpy as np
import pytest

from orbitproj.multiplicity import (
    RecoveryError,
    SignedAtomicMeasure,
    build_M,
    build_Xi,
    factor_weyl_group,
    j_sample_points,
    nu_eval_point,
    projected_root_lattice,
    recover_multiplicity,
    restrict_decompose,
    weight_multiplicities,
    weyl_dim,
)
from orbitproj.weights import CapExceededError, Setting, WeightSystem


# ------------------------------------------------------------ weyl_dim / GT


def test_weyl_dim_examples():
    assert weyl_dim((0, 0, 0)) == 1
    assert weyl_dim((1, 0, 0, 0)) == 4
    assert weyl_dim((2, 1, 1, 0)) == 15
    assert weyl_dim((2, 1, 0, 0)) == 20


def test_defining_rep_weights():
    for N in (3, 4, 5):
        wm = weight_multiplicities((1,) + (0,) * (N - 1))
        assert len(wm) == N
        assert all(m == 1 for m in wm.values())
        assert sorted(wm) == sorted(set(tuple(np.eye(N, dtype=int)[i]) for i in range(N)))


def test_antisymmetric_square_weights():
    wm = weight_multiplicities((1, 1, 0, 0))
    assert sum(wm.values()) == 6 == weyl_dim((1, 1, 0, 0))
    assert all(m == 1 for m in wm.values())


def test_adjoint_weights_dimension():
    wm = weight_multiplicities((2, 1, 1, 0))
    assert sum(wm.values()) == 15 == weyl_dim((2, 1, 1, 0))
    # zero weight (shifted: (1,1,1,1)) has multiplicity 3 in the adjoint
    assert wm[(1, 1, 1, 1)] == 3


def test_gt_dimension_matches_weyl_random():
    rng = np.random.default_rng(3)
    for _ in range(6):
        lam = tuple(sorted(rng.integers(0, 4, size=4), reverse=True))
        assert sum(weight_multiplicities(lam).values()) == weyl_dim(lam)


def test_pattern_cap():
    with pytest.raises(CapExceededError):
        weight_multiplicities((60, 30, 15, 0))


def test_weight_multiplicities_shift_equivariance():
    a = weight_multiplicities((2, 1, 0))
    b = weight_multiplicities((3, 2, 1))
    assert a == {tuple(x - 1 for x in w): m for w, m in b.items()}


# ------------------------------------------------------------ restriction


def test_restrict_defining_dst22():
    t = restrict_decompose(Setting.parse("dst:2,2"), (1, 0, 0, 0))
    assert t.entries == {((1, 0), (1, 0)): 1}


def test_restrict_adjoint_dst22():
    t = restrict_decompose(Setting.parse("dst:2,2"), (2, 1, 1, 0))
    assert t.entries == {
        ((3, 1), (3, 1)): 1,
        ((3, 1), (2, 2)): 1,
        ((2, 2), (3, 1)): 1,
    }
    lhs, rhs = t.dimension_check()
    assert lhs == rhs == 15  # 9 + 3 + 3


def test_restrict_trivial():
    t = restrict_decompose(Setting.parse("dst:2,2"), (0, 0, 0, 0))
    assert t.entries == {((0, 0), (0, 0)): 1}
    t = restrict_decompose(Setting.bosons(2, 2), (0, 0, 0))
    assert t.entries == {((0, 0),): 1}


def test_restrict_bosons_defining():
    # C^3 = Sym^2 C^2 restricts to the single U(2) irrep with weight (2,0)
    t = restrict_decompose(Setting.bosons(2, 2), (1, 0, 0))
    assert t.entries == {((2, 0),): 1}


def test_restrict_dimension_bookkeeping_random():
    rng = np.random.default_rng(11)
    st = Setting.parse("dst:2,2")
    for _ in range(4):
        lam = tuple(sorted(rng.integers(0, 4, size=4), reverse=True))
        t = restrict_decompose(st, lam)
        lhs, rhs = t.dimension_check()
        assert lhs == rhs
        assert all(m > 0 for m in t.entries.values())


def test_entries_lie_in_projected_affine_lattice():
    # every mu in the table lies in the projected affine lattice of lambda
    st = Setting.parse("dst:2,2")
    ws = WeightSystem(st)
    lam = (3, 2, 1, 0)
    t = restrict_decompose(st, lam)
    basis = projected_root_lattice(ws)
    base = np.asarray(lam) @ ws.rows
    B = basis.astype(float)
    for mu in t.entries:
        flat = np.concatenate([np.asarray(f, dtype=float) for f in mu])
        diff = flat - base
        # solve integer combination: diff = c @ basis
        c, res, *_ = np.linalg.lstsq(B.T, diff, rcond=None)
        assert np.allclose(B.T @ c, diff, atol=1e-9)
        assert np.allclose(c, np.round(c), atol=1e-9)


# ------------------------------------------------------------ measures


def test_M_measure_skewness():
    t = restrict_decompose(Setting.parse("dst:2,2"), (2, 1, 1, 0))
    M = build_M(t)
    dims = (2, 2)
    for combo, sign in factor_weyl_group(dims):
        for p, w in M.atoms.items():
            q = tuple(tuple(piece[i] for i in perm) for piece, perm in zip(p, combo))
            assert M.atoms[q] == sign * w


def test_M_trivial_weight():
    t = restrict_decompose(Setting.parse("dst:2,2"), (0, 0, 0, 0))
    M = build_M(t)
    # atoms at w(rho_h) with signs eps(w); rho_h = ((1/2,-1/2),(1/2,-1/2))
    h = Fraction(1, 2)
    assert M.atoms[((h, -h), (h, -h))] == 1
    assert M.atoms[((-h, h), (h, -h))] == -1
    assert M.atoms[((-h, h), (-h, h))] == 1
    assert len(M.atoms) == 4


def test_Xi_mass_exactly_one():
    for lam in [(2, 1, 1, 0), (1, 0, 0, 0), (3, 2, 1, 0)]:
        t = restrict_decompose(Setting.parse("dst:2,2"), lam)
        assert build_Xi(t).mass() == 1


def test_Xi_adjoint_weights():
    t = restrict_decompose(Setting.parse("dst:2,2"), (2, 1, 1, 0))
    Xi = build_Xi(t)
    masses = sorted(Xi.atoms.values())
    assert masses == [Fraction(1, 5), Fraction(1, 5), Fraction(3, 5)]  # 3/15, 3/15, 9/15


def test_operator_algebra_on_atoms():
    m = SignedAtomicMeasure()
    p = ((Fraction(1), Fraction(-1)), (Fraction(2), Fraction(-2)))
    m.add(p, 1)
    # R_1 is the identity
    assert m.rescale(1).atoms == m.atoms
    # R_2 T_v = T_{v/2} R_2 on a point mass
    v = ((Fraction(1), Fraction(1)), (Fraction(0), Fraction(0)))
    lhs = m.translate(v).rescale(2)
    rhs = m.rescale(2).translate(
        tuple(tuple(x / 2 for x in piece) for piece in v)
    )
    assert lhs.atoms == rhs.atoms
    # R_n S = S R_n
    lhs = m.skew_extend((2, 2)).rescale(3)
    rhs = m.rescale(3).skew_extend((2, 2))
    assert lhs.atoms == rhs.atoms


def test_rescale_rejects_nonpositive():
    m = SignedAtomicMeasure()
    m.add(((Fraction(0), Fraction(0)),), 1)
    with pytest.raises(ValueError):
        m.rescale(0)


# ------------------------------------------------------------ recovery


@pytest.fixture(scope="module")
def adjoint_recovery_setup():
    from orbitproj.boxspline import ExactEvaluator

    st = Setting.parse("dst:2,2")
    ws = WeightSystem(st)
    lam = (2, 1, 1, 0)
    ev = ExactEvaluator.build(st, lam)
    jvals = ev.j_values_on_lattice()
    return st, ws, lam, ev, jvals


def test_recover_trivial():
    from orbitproj.boxspline import ExactEvaluator

    st = Setting.parse("dst:2,2")
    ws = WeightSystem(st)
    ev = ExactEvaluator.build(st, (0, 0, 0, 0))
    jvals = ev.j_values_on_lattice()
    res = recover_multiplicity(ws, (0, 0, 0, 0), ((0, 0), (0, 0)), jvals,
                               spline=ev.spline)
    assert res.rounded == 1
    assert res.residual < 1e-9


def test_recover_adjoint_table(adjoint_recovery_setup):
    st, ws, lam, ev, jvals = adjoint_recovery_setup
    table = ev.table
    for mu, m in table.entries.items():
        res = recover_multiplicity(ws, lam, mu, jvals, spline=ev.spline)
        assert res.rounded == m
        assert res.residual < 1e-9
    # non-occurring dominant weights recover 0
    for mu in [((4, 0), (4, 0)), ((2, 2), (2, 2)), ((4, 0), (2, 2))]:
        res = recover_multiplicity(ws, lam, mu, jvals, spline=ev.spline)
        assert res.rounded == 0
        assert res.residual < 1e-9


def test_recover_refuses_bad_input(adjoint_recovery_setup):
    st, ws, lam, ev, jvals = adjoint_recovery_setup
    corrupted = {k: 1.45 * v for k, v in jvals.items()}
    with pytest.raises(RecoveryError):
        recover_multiplicity(ws, lam, ((3, 1), (3, 1)), corrupted,
                             spline=ev.spline)


def test_j_sample_points_cover_atoms(adjoint_recovery_setup):
    st, ws, lam, ev, jvals = adjoint_recovery_setup
    # every atom of M sits at traceless(nu) + rho_h for a sampled key
    pts = {tuple(np.round(nu_eval_point(ws, k), 9)) for k in jvals}
    atom_pts, _ = ev.M.points_and_weights()
    chamber = [p for p in atom_pts if ws.in_chamber(p)]
    for p in chamber:
        assert tuple(np.round(p, 9)) in pts
