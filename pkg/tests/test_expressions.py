import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from gmnl.expressions import (QUTRIT_PLUS_CODES, QUTRIT_T_CODES, BellExpression,
                              ComposedInequality, ConditionError, ExpressionFamily, Partition,
                              bipartitions, cglmp_seeds, chsh_seed, chsh_star_family,
                              chsh_symmetric_family, common_negative_term, compose_depth,
                              compose_gmnl, compose_qutrit_tripartite, evaluate,
                              example4_discrepancy, example4_formula, gamma_bipartition,
                              gamma_exact, improved00, ineq_i1, isym, lift, lifted_chsh,
                              named_inequality, INEQUALITY_NAMES, permute_outcomes,
                              pos_neg_decompose, set_partitions, star_depth, symmetric_depth,
                              tri_improved, tri_seed)
from gmnl.scenario import Behavior, Scenario, ScenarioError


def codes(expr):
    """Terms as {'ab|xy': coefficient}."""
    return {"".join(map(str, a)) + "|" + "".join(map(str, x)): c
            for (a, x), c in expr.terms.items()}


def bell_number(n):
    row = [1]
    for _ in range(n - 1):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[-1]


# --- expressions ---------------------------------------------------------------

def test_chsh_seed_terms():
    assert codes(chsh_seed()) == {"00|00": 1, "01|01": -1, "10|10": -1, "00|11": -1}


def test_tri_seed_has_seven_printed_terms():
    c = codes(tri_seed())
    assert len(c) == 7
    assert c["000|000"] == 1 and sum(v for v in c.values() if v < 0) == -6


def test_cglmp_seeds_related_by_outcome_swap():
    j3, j3t = cglmp_seeds()
    assert len(j3) == len(j3t) == 12
    assert permute_outcomes(j3, {0: 1, 1: 0}).terms == j3t.terms


def test_zero_coefficients_dropped_and_arithmetic():
    sc = Scenario(2, 2, 2)
    e = BellExpression.from_terms(sc, [((0, 0), (0, 0), 1), ((1, 1), (0, 0), 0)])
    assert len(e) == 1
    z = e - e
    assert len(z) == 0
    assert (e + e).terms == e.scale(2).terms
    assert (-e).terms[((0, 0), (0, 0))] == -1
    with pytest.raises(ScenarioError):
        e + BellExpression.zero(Scenario(3, 2, 2))


def test_evaluate_uniform_chsh():
    assert evaluate(chsh_seed(), Behavior.uniform(Scenario(2, 2, 2))) == pytest.approx(-0.5)
    with pytest.raises(ScenarioError):
        evaluate(chsh_seed(), Behavior.uniform(Scenario(3, 2, 2)))


def expressions_strategy():
    events = st.tuples(st.tuples(st.integers(0, 1), st.integers(0, 1)),
                       st.tuples(st.integers(0, 1), st.integers(0, 1)))
    coeffs = st.fractions(min_value=-5, max_value=5, max_denominator=6)
    return st.dictionaries(events, coeffs, max_size=16).map(
        lambda t: BellExpression(Scenario(2, 2, 2), t))


@given(expressions_strategy())
@settings(max_examples=60, deadline=None)
def test_pos_neg_identity(e):
    plus, minus = pos_neg_decompose(e)
    assert all(c > 0 for c in plus.terms.values())
    assert all(c > 0 for c in minus.terms.values())
    assert (plus - minus) == e
    assert not set(plus.terms) & set(minus.terms)


@given(expressions_strategy())
@settings(max_examples=40, deadline=None)
def test_expression_json_roundtrip(e):
    e2 = BellExpression.from_dict(json.loads(json.dumps(e.to_dict())))
    assert e2 == e


@given(st.integers(3, 7), st.data())
@settings(max_examples=40, deadline=None)
def test_lift_preserves_terms(n, data):
    host = data.draw(st.permutations(range(n)).map(lambda p: tuple(p[:2])))
    fill = data.draw(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)),
                              min_size=n - 2, max_size=n - 2))
    seed = chsh_seed()
    lifted = lift(seed, n, host, fill)
    assert len(lifted) == len(seed)
    assert sorted(lifted.terms.values()) == sorted(seed.terms.values())
    others = [k for k in range(n) if k not in host]
    for a, x in lifted.terms:
        assert [(a[k], x[k]) for k in others] == list(fill)


def test_lift_rejects_bad_hosts():
    with pytest.raises(ValueError):
        lift(chsh_seed(), 3, (0, 0), [(0, 0)])
    with pytest.raises(ValueError):
        lift(chsh_seed(), 3, (0, 3), [(0, 0)])
    with pytest.raises(ValueError):
        lift(chsh_seed(), 3, (0, 1), [])


def test_lifted_chsh_matches_printed_form():
    # p(0|0) - p(0..1_i..0|0..1_i..0) - p(0..1_j..0|0..1_j..0) - p(0|0..1_i..1_j..0)
    c = codes(lifted_chsh(4, 1, 3))
    assert c == {"0000|0000": 1, "0100|0100": -1, "0001|0001": -1, "0000|0101": -1}


# --- partitions and gamma --------------------------------------------------------

@pytest.mark.parametrize("n", range(1, 8))
def test_set_partition_counts(n):
    parts = list(set_partitions(n))
    assert len(parts) == bell_number(n)
    assert len(set(parts)) == len(parts)
    assert all(p.covers(n) for p in parts)
    if n > 1:
        assert len(list(bipartitions(n))) == 2 ** (n - 1) - 1


def test_partition_normalizes_blocks():
    assert Partition(((2, 0), (1,))) == Partition(((1,), (0, 2)))
    with pytest.raises(ValueError):
        Partition(((0, 1), (1, 2)))


@pytest.mark.parametrize("n", range(3, 9))
def test_gamma_closed_forms(n):
    assert gamma_exact(chsh_star_family(n), n - 1) == n - 2
    assert gamma_exact(chsh_symmetric_family(n), n - 1) == math.comb(n - 1, 2)


@pytest.mark.parametrize("n", range(3, 7))
def test_gamma_bipartition_agrees(n):
    for fam in (chsh_star_family(n), chsh_symmetric_family(n)):
        assert gamma_bipartition(fam) == gamma_exact(fam, n - 1)


def test_gamma_monotone_in_k():
    fam = chsh_symmetric_family(6)
    values = [gamma_exact(fam, k) for k in range(1, 7)]
    assert values == sorted(values)
    assert values[0] == 0 and values[-1] == 15


def test_example4_discrepancy():
    rep = example4_discrepancy(5, 3)
    assert rep["enumerated"] == 4 and rep["printed_formula"] == 5
    assert not rep["agree"] and rep["corrected_formula"] == 4
    assert example4_formula(6, 3) == 6 == gamma_exact(chsh_symmetric_family(6), 3)


# --- families and composed inequalities ------------------------------------------

def test_family_requires_common_positive_part():
    sc3 = lift(chsh_seed(), 3, (0, 1), [(1, 0)])
    with pytest.raises(ConditionError):
        ExpressionFamily((((0, 1), lifted_chsh(3, 0, 1)), ((0, 2), sc3)), "bad")
    with pytest.raises(ScenarioError):
        ExpressionFamily((((0, 1), lifted_chsh(3, 0, 1)), ((0, 1), lifted_chsh(4, 0, 1))), "bad")


def test_improved00_three_parties():
    ineq = improved00(3)
    assert ineq.gamma == 1
    assert codes(ineq.T) == {"100|100": 1}
    assert codes(ineq.margin_expression()) == {
        "000|000": 1, "001|001": -1, "010|010": -1, "100|100": -1,
        "000|101": -1, "000|110": -1}


def test_i1_and_isym():
    c = codes(ineq_i1(3).margin_expression())
    assert c["100|100"] == -2 and c["000|000"] == 1
    s = isym(4)
    assert s.gamma == 3
    assert codes(s.rhs) == {"0000|0000": 3}


def test_improved_dominates_i1():
    # rhs(improved00) = rhs(I1) - gamma*T with T >= 0 entrywise
    for n in range(3, 7):
        diff = ineq_i1(n).rhs - improved00(n).rhs
        assert codes(diff) == {"1" + "0" * (n - 1) + "|" + "1" + "0" * (n - 1): n - 2}


def test_tri_improved_four_parties():
    ineq = tri_improved(4)
    assert ineq.gamma == 1
    assert codes(ineq.T) == {"0100|0100": 1, "1000|1000": 1, "1000|1100": 1}


def test_depth_inequalities():
    ineq = star_depth(4, 2)
    assert ineq.kind == "depth" and ineq.gamma == 1
    assert star_depth(5, 1).gamma == 0
    # full-size blocks contain every member, so k = n is the trivial bound
    fam = chsh_star_family(4)
    assert compose_depth(fam, 4).gamma == 3
    assert compose_depth(fam, 3).rhs == compose_gmnl(fam).rhs
    assert symmetric_depth(5, 3).gamma == 4


def test_qutrit_composition_matches_printed_sets():
    sym, star = compose_qutrit_tripartite()
    assert set(codes(star.plus)) == set(QUTRIT_PLUS_CODES)
    assert set(codes(star.T)) == set(QUTRIT_T_CODES)
    assert all(v == 1 for v in codes(star.T).values())
    assert sym.gamma == 1 and star.gamma == 1
    assert len(sym.T) == 0


def test_common_term_is_entrywise_minimum():
    fam = chsh_star_family(4)
    T = common_negative_term(fam)
    for ev, c in T.terms.items():
        for _, e in fam.members:
            assert pos_neg_decompose(e)[1].terms[ev] >= c


def test_composed_json_roundtrip():
    for name in INEQUALITY_NAMES:
        ineq = named_inequality(name, 4 if name not in ("qutrit-star", "qutrit-sym") else 3)
        again = ComposedInequality.from_dict(json.loads(json.dumps(ineq.to_dict())))
        assert again.margin_expression() == ineq.margin_expression()
        assert again.gamma == ineq.gamma and again.kind == ineq.kind
    with pytest.raises(KeyError):
        named_inequality("nope")


def test_margin_on_uniform_behavior():
    # each lifted CHSH is -1/2^(n-1) on the uniform box; rhs is (n-2)(1 - 1)/2^n
    for n in (3, 4, 5):
        b = Behavior.uniform(Scenario(n, 2, 2))
        assert improved00(n).margin(b) == pytest.approx(-(n - 1) * 2 / 2**n)
