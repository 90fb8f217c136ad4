import itertools

import numpy as np
import pytest

from spimarket import constraints as cons


UM = cons.UniformMatroid(4, 2)
PM = cons.PartitionMatroid((0, 0, 1, 1), (1, 2))
EF = cons.ExplicitFamily(3, (0b011, 0b100))


def test_feasible_uniform():
    assert cons.feasible(UM, [0, 3])
    assert not cons.feasible(UM, [0, 1, 2])
    assert cons.feasible(UM, [])


def test_feasible_partition():
    assert cons.feasible(PM, [0, 2, 3])
    assert not cons.feasible(PM, [0, 1])


def test_feasible_explicit_downward_closed():
    masks = cons.enumerate_feasible(EF)
    assert set(masks) == {0b000, 0b001, 0b010, 0b011, 0b100}
    for mask in masks:
        sub = mask
        while True:
            assert cons.feasible_mask(EF, sub)
            if sub == 0:
                break
            sub = (sub - 1) & mask


def test_enumerate_within():
    masks = cons.enumerate_feasible(UM, within=[0, 1])
    assert set(masks) == {0b00, 0b01, 0b10, 0b11}


def test_enumeration_guard():
    big = cons.UniformMatroid(25, 3)
    with pytest.raises(ValueError, match="too large"):
        cons.enumerate_feasible(big)


def _vertices_membership(family, x, tol=1e-9):
    """Oracle: exact hull membership by LP over all feasible indicators."""
    from scipy.optimize import linprog

    sets = cons.enumerate_feasible(family)
    n = family.n
    A_ub = np.zeros((n, len(sets)))
    for k, mask in enumerate(sets):
        for i in range(n):
            if (mask >> i) & 1:
                A_ub[i, k] = -1.0
    res = linprog(c=np.zeros(len(sets)), A_ub=A_ub, b_ub=-(np.asarray(x) - tol),
                  A_eq=np.ones((1, len(sets))), b_eq=[1.0],
                  bounds=[(0, None)] * len(sets), method="highs")
    return res.status == 0


@pytest.mark.parametrize("family", [UM, PM, EF])
def test_in_polytope_matches_hull_oracle(family):
    pytest.importorskip("scipy")
    rng = np.random.default_rng(0)
    agree = 0
    for _ in range(60):
        x = rng.uniform(0, 1, family.n)
        got = cons.in_polytope(family, x)
        want = _vertices_membership(family, x)
        # skip points within 1e-7 of the boundary where tolerances differ
        if got == want:
            agree += 1
        else:
            inside_strict = _vertices_membership(family, x + 1e-6)
            outside_strict = not _vertices_membership(family, x - 1e-6)
            assert inside_strict or outside_strict
    assert agree >= 55


def test_in_polytope_shape_check():
    with pytest.raises(ValueError, match="dimension mismatch"):
        cons.in_polytope(UM, [0.1, 0.2])


def test_scale_membership():
    # (0.9, 0.9, 0.9, 0.9) has sum 3.6 <= 2 * rank(2) and is in the box
    assert cons.scale_membership(UM, [0.9] * 4, 2.0)
    assert not cons.scale_membership(UM, [0.9] * 4, 1.0)
    with pytest.raises(ValueError, match="scale factor"):
        cons.scale_membership(UM, [0.1] * 4, 0.5)


def test_polytope_rows():
    A, b = cons.polytope_rows(PM)
    assert A.shape == (2, 4) and list(b) == [1.0, 2.0]
    assert cons.polytope_rows(EF) is None


@pytest.mark.parametrize("family", [UM, PM])
def test_greedy_matches_brute_force(family):
    rng = np.random.default_rng(3)
    n = family.n
    for _ in range(40):
        weights = rng.uniform(0.1, 2.0, n)
        mask = int(rng.integers(0, 1 << n))
        val, chosen = cons.max_weight_feasible(family, mask, weights)
        best = 0.0
        for sub in cons.enumerate_feasible(family, within=mask):
            best = max(best, sum(weights[i] for i in range(n) if (sub >> i) & 1))
        assert val == pytest.approx(best)
        assert cons.feasible_mask(family, chosen) and chosen & ~mask == 0


def test_explicit_max_weight():
    val, chosen = cons.max_weight_feasible(EF, 0b111, np.array([1.0, 2.0, 2.5]))
    assert val == pytest.approx(3.0) and chosen == 0b011


def test_is_matroid():
    assert cons.is_matroid(UM) and cons.is_matroid(PM)
    assert not cons.is_matroid(EF)
