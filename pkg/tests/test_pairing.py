import re

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from multiacc import pairing as pr
from multiacc.errors import CapacityError, ParseError, StructureError

from conftest import structure_pairs, structures


def P(*pairs):
    return pr.Pairing.of(pairs)


def test_pairing_canonical_form():
    p = pr.Pairing(((4, 3), (2, 1)))
    assert p.pairs == ((1, 2), (3, 4))
    assert p == P((1, 2), (3, 4))
    assert str(p) == "{{1,2}, {3,4}}"


@pytest.mark.parametrize("pairs", [((1, 1),), ((1, 2), (2, 3)), ((0, 1),)])
def test_pairing_rejects_bad_pairs(pairs):
    with pytest.raises(StructureError):
        pr.Pairing(pairs)


def test_num_pairings_and_rsize(full4):
    assert pr.num_pairings(pr.base(1, 2)) == 1
    assert pr.rsize(pr.base(1, 2)) == 1
    assert pr.rsize(pr.product(pr.base(1, 2), pr.base(3, 4))) == 3
    assert pr.num_pairings(full4) == 3
    # three products of size 3 plus two unions
    assert pr.rsize(full4) == 11
    assert pr.num_pairings(pr.block_structure(8)) == 9


def test_num_pairings_is_exact_for_huge_structures():
    T = pr.block_structure(400)
    assert T.num_pairings == 3**100


def test_base_normalises_and_validates():
    assert pr.base(3, 1) == pr.base(1, 3)
    with pytest.raises(StructureError):
        pr.base(2, 2)
    with pytest.raises(StructureError):
        pr.base(0, 1)


def test_product_and_union_invariants():
    with pytest.raises(StructureError):
        pr.product(pr.base(1, 2), pr.base(2, 3))
    with pytest.raises(StructureError):
        pr.union(pr.base(1, 2), pr.base(1, 3))


def test_split():
    assert pr.split(P((1, 2), (3, 4)), {1, 2}) == P((1, 2))
    assert pr.split(P((1, 3), (2, 4)), {1, 2}) is None
    assert pr.split(P((1, 2), (3, 4), (5, 6)), {3, 4, 5, 6}) == P((3, 4), (5, 6))


def test_contains_examples(full4):
    assert pr.contains(pr.base(1, 2), P((1, 2)))
    assert pr.contains(full4, P((1, 3), (2, 4)))
    assert not pr.contains(pr.product(pr.base(1, 2), pr.base(3, 4)), P((1, 3), (2, 4)))
    with pytest.raises(StructureError):
        pr.contains(full4, P((1, 2)))


def test_sample_trivial_cases(rng):
    assert pr.sample(pr.base(1, 2), rng) == P((1, 2))
    assert pr.sample(pr.product(pr.base(1, 2), pr.base(3, 4)), rng) == P((1, 2), (3, 4))


def test_sample_uniform_on_three_way_union(full4, rng):
    draws = [pr.sample(full4, rng) for _ in range(30000)]
    counts = [draws.count(p) for p in pr.all_pairings(4)]
    assert stats.chisquare(counts).pvalue > 0.01


def _chisq_pvalue(T, rng, per=3000):
    k = T.num_pairings
    rows = pr.sample_partners(T, per * k, rng)
    keys = {tuple(pr.pairings_to_partners([p], rows.shape[1])[0]): i for i, p in enumerate(pr.enumerate_pairings(T))}
    counts = np.zeros(k)
    for row in map(tuple, rows):
        counts[keys[row]] += 1
    return stats.chisquare(counts).pvalue


@given(structures((4, 6, 8)), st.integers(0, 2**32 - 1))
def test_batched_sampling_is_uniform(T, seed):
    if T.num_pairings > 20 or T.num_pairings == 1:
        return
    rng = np.random.default_rng(seed)
    # one rerun allowed for the 1% false-alarm rate
    assert _chisq_pvalue(T, rng) > 0.01 or _chisq_pvalue(T, rng) > 0.01


def test_enumerate(full4):
    assert pr.enumerate_pairings(pr.base(1, 2), cap=10) == [P((1, 2))]
    assert pr.enumerate_pairings(full4, cap=10) == pr.all_pairings(4)
    with pytest.raises(CapacityError):
        pr.enumerate_pairings(pr.block_structure(8), cap=4)


@pytest.mark.parametrize("n,count", [(2, 1), (4, 3), (6, 15), (8, 105), (3, 0)])
def test_all_pairings_counts(n, count):
    ps = pr.all_pairings(n)
    assert len(ps) == count == len(set(ps))
    assert ps == sorted(ps)


def test_intersection_examples(full4):
    a = pr.product(pr.base(1, 2), pr.base(3, 4))
    b = pr.product(pr.base(1, 3), pr.base(2, 4))
    assert pr.intersection_count(full4, full4) == 3
    assert pr.intersection_count(a, b) == 0
    assert pr.intersection_count(full4, a) == 1
    with pytest.raises(StructureError):
        pr.intersection_count(a, pr.base(1, 2))
    with pytest.raises(CapacityError):
        pr.intersection_count(pr.block_structure(8), pr.block_structure(8), cap=4)


def test_eval_x_examples(full4):
    sigma = np.zeros((2, 2))
    sigma[0, 1] = sigma[1, 0] = 0.7
    assert pr.eval_x(pr.base(1, 2), sigma) == pytest.approx(0.7)
    s = np.random.default_rng(0).standard_normal((4, 4))
    s = s + s.T
    expected = s[0, 1] * s[2, 3] + s[0, 2] * s[1, 3] + s[0, 3] * s[1, 2]
    assert pr.eval_x(full4, s) == pytest.approx(expected)
    assert pr.eval_x(full4, np.eye(4)) == 0
    with pytest.raises(IndexError):
        pr.eval_x(full4, np.eye(3))


def test_validate_trusts_large_unions():
    T = pr.union(
        pr.product(pr.base(1, 2), pr.full_structure(range(3, 11))),
        pr.product(pr.base(1, 3), pr.full_structure([2, *range(4, 11)])),
    )
    assert pr.validate_structure(T, cap=10).trusted
    assert not pr.validate_structure(T, cap=10**4).trusted


def test_parse_examples():
    assert pr.parse_structure("(base 1 2)") == pr.base(1, 2)
    T = pr.parse_structure("(union (prod (base 1 2) (base 3 4)) (prod (base 1 3) (base 2 4)))")
    assert T.num_pairings == 2
    with pytest.raises(StructureError):
        pr.parse_structure("(prod (base 1 2) (base 2 3))")


@pytest.mark.parametrize("text", ["(base 1)", "(base 1 2", "(foo 1 2)", "base 1 2", "(base 1 2) x", "(base a 2)", ""])
def test_parse_syntax_errors(text):
    with pytest.raises(ParseError):
        pr.parse_structure(text)


def test_parse_nary_nests_left():
    T = pr.parse_structure("(prod (base 1 2) (base 3 4) (base 5 6))")
    assert pr.serialize_structure(T) == "(prod (prod (base 1 2) (base 3 4)) (base 5 6))"


def test_parse_is_whitespace_insensitive():
    assert pr.parse_structure("  ( prod\n(base 1 2)\t(base  3 4) ) ") == pr.product(pr.base(1, 2), pr.base(3, 4))


# -- properties over random structures


@given(structures())
def test_count_matches_enumeration(T):
    assert T.num_pairings == len(pr.enumerate_pairings(T, 10**4))


@given(structures())
def test_contains_iff_enumerated(T):
    members = set(pr.enumerate_pairings(T, 10**4))
    for p in pr.all_pairings(len(T.index_set)):
        q = pr.Pairing(tuple((T.index_set[a - 1], T.index_set[b - 1]) for a, b in p.pairs))
        assert pr.contains(T, q) == (q in members)


@given(structures(), st.integers(0, 2**32 - 1))
def test_samples_are_members(T, seed):
    rng = np.random.default_rng(seed)
    for _ in range(5):
        assert pr.contains(T, pr.sample(T, rng))
    rows = pr.sample_partners(T, 50, rng)
    assert pr.contains_partners(T, rows).all()
    assert all(pr.contains(T, p) for p in pr.partners_to_pairings(rows, T.index_set))


@given(structure_pairs())
def test_batched_contains_matches_scalar(pair):
    T, U = pair
    ps = pr.enumerate_pairings(U, 10**4)
    rows = pr.pairings_to_partners(ps, U.max_index + 1)
    assert pr.contains_partners(T, rows).tolist() == [pr.contains(T, p) for p in ps]


@given(structures(), st.integers(0, 2**32 - 1))
def test_eval_x_matches_enumeration(T, seed):
    n = T.max_index
    s = np.random.default_rng(seed).standard_normal((n, n))
    s = s + s.T
    direct = sum(np.prod([s[a - 1, b - 1] for a, b in p.pairs]) for p in pr.enumerate_pairings(T, 10**4))
    assert pr.eval_x(T, s) == pytest.approx(direct, rel=1e-9, abs=1e-9)


@given(structures(), structures(), st.integers(0, 2**32 - 1))
def test_eval_x_homomorphism(T1, T2, seed):
    shift = T1.max_index
    T2 = pr.parse_structure(_shift(T2, shift))
    s = np.random.default_rng(seed).standard_normal((T2.max_index, T2.max_index))
    s = s + s.T
    assert pr.eval_x(pr.product(T1, T2), s) == pytest.approx(pr.eval_x(T1, s) * pr.eval_x(T2, s))


@given(structures((4, 6)), st.integers(0, 2**32 - 1))
def test_eval_x_union_is_sum(T, seed):
    # a second structure over the same indices, disjoint from T's branches
    pairs = pr.all_pairings(T.max_index)
    rest = [p for p in pairs if not pr.contains(T, p)]
    if not rest:
        return
    U = pr.from_pairing(rest[0])
    s = np.random.default_rng(seed).standard_normal((T.max_index, T.max_index))
    s = s + s.T
    assert pr.eval_x(pr.union(T, U), s) == pytest.approx(pr.eval_x(T, s) + pr.eval_x(U, s))


def _shift(T, k):
    return re.sub(r"\d+", lambda m: str(int(m.group()) + k), pr.serialize_structure(T))


@given(structure_pairs())
def test_intersection_symmetric_and_self(pair):
    T, U = pair
    assert pr.intersection_count(T, U) == pr.intersection_count(U, T)
    assert pr.intersection_count(T, T) == T.num_pairings
    assert pr.intersection_count(T, U) == len(set(pr.enumerate_pairings(T)) & set(pr.enumerate_pairings(U)))


@given(structures())
def test_serialize_parse_round_trip(T):
    text = pr.serialize_structure(T)
    assert pr.parse_structure(text) == T
    assert pr.serialize_structure(pr.parse_structure(text)) == text


def test_full_structure_is_everything():
    for n in (2, 4, 6, 8):
        T = pr.full_structure(range(1, n + 1))
        assert pr.enumerate_pairings(T, 10**4) == pr.all_pairings(n)
        assert not pr.validate_structure(T).trusted
