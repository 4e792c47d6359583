import itertools
import json
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from growthrate import fds
from growthrate.linalg import QQ, Matrix, PrimeField


def three_step():
    T1 = Matrix.from_dense([[1, 0], [0, 1], [1, 1]])
    T2 = Matrix.from_dense([[1, 2, 0], [0, 0, 1]])
    return fds.FiniteFDS([1, 2, 3], [2, 3, 2], [T1, T2]), T1, T2


# -- evaluation --------------------------------------------------------------

def test_evaluate_identity_and_zero():
    F = fds.identity_system([1, 2, 4], 3)
    assert F.evaluate(2, 2) == Matrix.identity(3)
    assert F.evaluate(Fraction(1, 2), 3).is_zero()
    assert F.evaluate(Fraction(1, 2), 3).shape == (3, 0)


def test_evaluate_product_oracle():
    F, T1, T2 = three_step()
    assert F.evaluate(1, 3) == T2 @ T1
    assert F.evaluate(Fraction(5, 2), 10) == T2


def test_functoriality():
    F = fds.random_system(random.Random(3), n_breakpoints=8)
    bps = F.breakpoints
    for x1, x2, x3 in itertools.combinations(bps, 3):
        assert F.evaluate(x2, x3) @ F.evaluate(x1, x2) == F.evaluate(x1, x3)


def test_rank_to_limit_examples():
    F = fds.identity_system([1, 2, 3], 5)
    assert [F.rank_to_limit(x) for x in (Fraction(1, 2), 1, 2, 9)] == [0, 5, 5, 5]
    rank_one = Matrix.from_dense([[1, 1, 1], [2, 2, 2], [0, 0, 0]])
    G = fds.FiniteFDS([1, 2], [3, 3], [rank_one])
    assert G.rank_to_limit(1) == 1
    open_tail = fds.FiniteFDS([1, 2], [3, 3], [rank_one], stable_tail=False)
    with pytest.raises(ValueError):
        open_tail.rank_to_limit(1)


def test_rank_never_exceeds_source_dim():
    F = fds.random_system(random.Random(11))
    for i, x in enumerate(F.breakpoints):
        assert F.rank_to_limit(x) <= F.dims[i]
        if i + 1 < len(F):
            assert F.rank_to_limit(F.breakpoints[i + 1]) <= F.dims[i + 1]


def test_invalid_systems_rejected():
    with pytest.raises(ValueError):
        fds.FiniteFDS([2, 1], [1, 1], [Matrix.identity(1)])
    with pytest.raises(ValueError):
        fds.FiniteFDS([Fraction(1, 2)], [1], [])
    with pytest.raises(ValueError):
        fds.FiniteFDS([1, 2], [1, 2], [Matrix.identity(1)])


# -- gamma -------------------------------------------------------------------

def test_gamma_polynomial_and_conventions():
    xs = [float(x) for x in range(1, 10001, 7)]
    a = fds.SampledGrowth.from_function(lambda x: int(x) ** 2, xs)
    assert fds.gamma(a).value == pytest.approx(2, abs=0.05)
    expo = fds.SampledGrowth.from_function(lambda x: 2 ** int(x), range(1, 200))
    assert fds.gamma(expo).symbol == "+inf"
    zero = fds.SampledGrowth(tuple(range(1, 20)), (0,) * 19)
    assert fds.gamma(zero).symbol == "-inf"


def test_gamma_needs_samples():
    with pytest.raises(ValueError):
        fds.gamma(fds.SampledGrowth((1, 2, 3), (1, 2, 3)))


def test_gamma_on_system():
    assert fds.gamma(fds.polynomial_system(2, 16)).value == pytest.approx(2, abs=1e-9)
    assert fds.gamma(fds.identity_system(range(1, 20), 0)).symbol == "-inf"


@pytest.mark.parametrize("A", [1, 2, 3])
@pytest.mark.parametrize("B", [1, 2, 4])
def test_gamma_reindexing_invariance(A, B):
    xs = [float(x) for x in range(1, 4000, 3)]
    a = fds.SampledGrowth.from_function(lambda x: int(x) ** 3 + 5, xs)
    base = fds.gamma(a)
    moved = fds.gamma(a.reindexed(Fraction(1, B), A))
    assert moved.agrees_with(base, 0.05)


# -- morphisms ---------------------------------------------------------------

def test_identity_and_directed_morphisms_valid():
    F = fds.random_system(random.Random(5))
    assert fds.check_morphism(fds.identity_morphism(F), F, F)
    assert fds.check_morphism(fds.directed_morphism(F, 2), F, F)
    assert fds.check_isomorphism_witness(fds.directed_morphism(F, 3), fds.identity_morphism(F), F, F)


def test_corrupted_morphism_located():
    F = fds.polynomial_system(1, 10)
    phi = fds.directed_morphism(F, 2)
    i = 4
    bad_maps = list(phi.maps)
    bad_maps[i] = bad_maps[i].replace(0, 0, 7)
    res = fds.check_morphism(fds.FDSMorphism(phi.C, bad_maps), F, F)
    assert not res
    assert res.failing_square in (i - 1, i)


def test_morphism_dimension_mismatch():
    F = fds.identity_system([1, 2], 2)
    with pytest.raises(ValueError):
        fds.check_morphism(fds.FDSMorphism(1, [Matrix.identity(3), Matrix.identity(2)]), F, F)


def test_reindexed_pair_is_isomorphic():
    F = fds.polynomial_system(2, 12)
    F2 = fds.FiniteFDS([x * 2 for x in F.breakpoints], F.dims, F.transitions)
    G2 = fds.rescaled(F2, 2)
    assert G2.breakpoints == F.breakpoints
    phi = fds.conjugated_morphism(F2, 1, None, None, target=G2, target_scale=2)
    back = fds.FDSMorphism(2, [F2.evaluate(y * 2, F2.breakpoints[F2.step_index(2 * y)])
                               for y in G2.breakpoints])
    assert fds.check_isomorphism_witness(phi, back, F2, G2)


def test_rank_dropping_map_has_no_inverse_witness():
    """Exhaustive search over GF(3): no phi' undoes a rank-1 map on 2-dim systems."""
    field = PrimeField(3)
    F = fds.identity_system([1, 2], 2, field)
    drop = Matrix.from_dense([[1, 0], [0, 0]], field)
    phi = fds.FDSMorphism(1, [drop, drop])
    assert fds.check_morphism(phi, F, F)
    for entries in itertools.product(range(3), repeat=4):
        A = Matrix.from_flat(2, 2, list(entries), field)
        cand = fds.FDSMorphism(1, [A, A])
        assert not fds.check_isomorphism_witness(phi, cand, F, F)


def test_composition_constant_and_validity():
    rng = random.Random(2)
    pair = fds.random_isomorphic_pair(rng)
    comp = fds.compose(pair.phi, pair.phi_prime, pair.source, pair.target, pair.source)
    assert comp.C == pair.phi.C * pair.phi_prime.C
    assert fds.check_morphism(comp, pair.source, pair.source)


# -- isomorphism invariance and sandwich ------------------------------------

@pytest.mark.parametrize("field", [QQ, PrimeField(101)], ids=["q", "fp101"])
def test_random_isomorphic_pairs(field):
    for seed in range(25):
        pair = fds.random_isomorphic_pair(random.Random(seed), field)
        rep = fds.gamma_invariance_test(pair.source, pair.target, pair.phi, pair.phi_prime)
        assert rep.isomorphic and rep.equal, seed


def test_degree_two_invariance_exact():
    F = fds.polynomial_system(2, 16)
    conj = fds.change_of_basis(F, random.Random(0))
    phi = fds.conjugated_morphism(F, 1, None, conj.bases)
    phi_p = fds.conjugated_morphism(F, 1, conj.inverses, None)
    rep = fds.gamma_invariance_test(F, conj.system, phi, phi_p)
    assert rep.isomorphic
    assert rep.gamma_source.value == rep.gamma_target.value


def test_zero_systems_both_minus_infinity():
    Z = fds.identity_system(range(1, 20), 0)
    idm = fds.identity_morphism(Z)
    rep = fds.gamma_invariance_test(Z, Z, idm, idm)
    assert rep.gamma_source.symbol == rep.gamma_target.symbol == "-inf"
    assert rep.equal


def test_sandwich_trivial_and_constructed():
    F = fds.polynomial_system(1, 8)
    psi = fds.identity_morphism(F)
    assert fds.sandwich_check([F] * 4, psi, psi, psi, psi, psi)
    inst = fds.random_sandwich_instance(random.Random(7))
    res = inst.check()
    assert res
    V2, V3, V4 = inst.systems[1:]
    D1C1C2 = inst.b1.C * inst.u1.C * inst.u2.C
    expected = fds.compose(fds.compose(fds.directed_morphism(V3, D1C1C2), inst.u3, V3, V3, V4),
                           inst.b2, V3, V4, V2)
    assert res.phi_prime == expected
    assert res.phi == inst.u2


def test_sandwich_mutation_fails():
    inst = fds.random_sandwich_instance(random.Random(8))
    b1 = inst.b1
    zeroed = [Matrix.zero(*M.shape, M.field) for M in b1.maps]
    res = fds.sandwich_check(inst.systems, inst.u1, inst.u2, inst.u3,
                             fds.FDSMorphism(b1.C, zeroed), inst.b2)
    assert not res
    assert "hypothesis failed" in res.failed


# -- exchange format -----------------------------------------------------------

def test_json_round_trip_bit_exact():
    F = fds.random_system(random.Random(4))
    text = F.to_json()
    G = fds.FiniteFDS.from_json(text)
    assert G.to_json() == text
    sparse = json.dumps(F.to_dict(sparse=True))
    H = fds.FiniteFDS.from_json(sparse)
    assert H.to_json() == text


def test_json_errors_name_the_field():
    doc = fds.polynomial_system(1, 4).to_dict()
    doc["transitions"][1] = ["1"]
    with pytest.raises(ValueError, match="transitions\\[1\\]"):
        fds.FiniteFDS.from_dict(doc)
    with pytest.raises(ValueError, match="dims"):
        fds.FiniteFDS.from_dict({"breakpoints": [], "transitions": []})


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_random_pairs_property(seed):
    pair = fds.random_isomorphic_pair(random.Random(seed), PrimeField(7), n_breakpoints=10, max_dim=5)
    assert fds.check_isomorphism_witness(pair.phi, pair.phi_prime, pair.source, pair.target)
