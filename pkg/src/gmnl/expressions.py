"""Sparse Bell expressions, seed inequalities, lifting and family composition.

An expression is a map ``(a, x) -> coefficient`` with exact (``Fraction``)
coefficients. Composition follows the positive/negative-part construction:
a family ``{I^g}`` whose members share one positive part ``I_+`` is bounded
for partition-local models by ``gamma * (I_+ - T)``, where ``T`` is the part
common to all negative parts and ``gamma`` counts the members that fit inside
one block of the best partition.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .config import CAPS
from .scenario import Behavior, Scenario, ScenarioError

Event = tuple[tuple[int, ...], tuple[int, ...]]


class ConditionError(ValueError):
    """A family does not satisfy the requirements of the composition."""


def _fraction(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, (int, np.integer)):
        return Fraction(int(c))
    if isinstance(c, str):
        return Fraction(c)
    return Fraction(float(c))


def _event(a: Sequence[int], x: Sequence[int]) -> Event:
    return tuple(int(v) for v in a), tuple(int(v) for v in x)


@dataclass(frozen=True, eq=False)
class BellExpression:
    scenario: Scenario
    terms: Mapping[Event, Fraction]
    label: str = ""

    def __post_init__(self):
        clean: dict[Event, Fraction] = {}
        for (a, x), c in self.terms.items():
            ev = _event(a, x)
            self.scenario.check_event(*ev)
            c = _fraction(c)
            if c != 0:
                clean[ev] = c
        object.__setattr__(self, "terms", MappingProxyType(clean))

    @classmethod
    def from_terms(cls, scenario: Scenario, items: Iterable[tuple], label: str = ""):
        """Build from ``(a, x, c)`` triples; repeated events accumulate."""
        acc: dict[Event, Fraction] = {}
        for a, x, c in items:
            ev = _event(a, x)
            acc[ev] = acc.get(ev, Fraction(0)) + _fraction(c)
        return cls(scenario, acc, label)

    @classmethod
    def zero(cls, scenario: Scenario, label: str = "0") -> "BellExpression":
        return cls(scenario, {}, label)

    def __len__(self) -> int:
        return len(self.terms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BellExpression):
            return NotImplemented
        return self.scenario == other.scenario and dict(self.terms) == dict(other.terms)

    def __hash__(self):
        return hash((self.scenario, frozenset(self.terms.items())))

    def _check_same(self, other: "BellExpression") -> None:
        if self.scenario != other.scenario:
            raise ScenarioError(f"{self.scenario} vs {other.scenario}")

    def __add__(self, other: "BellExpression") -> "BellExpression":
        self._check_same(other)
        acc = dict(self.terms)
        for ev, c in other.terms.items():
            acc[ev] = acc.get(ev, Fraction(0)) + c
        return BellExpression(self.scenario, acc, f"{self.label} + {other.label}")

    def __neg__(self) -> "BellExpression":
        return BellExpression(self.scenario, {ev: -c for ev, c in self.terms.items()},
                              f"-({self.label})")

    def __sub__(self, other: "BellExpression") -> "BellExpression":
        return self + (-other)

    def scale(self, factor) -> "BellExpression":
        f = _fraction(factor)
        return BellExpression(self.scenario, {ev: f * c for ev, c in self.terms.items()},
                              f"{factor}*({self.label})")

    def relabel(self, label: str) -> "BellExpression":
        return BellExpression(self.scenario, self.terms, label)

    def sorted_terms(self) -> list[tuple[tuple[int, ...], tuple[int, ...], Fraction]]:
        """Terms in canonical order: lexicographic by inputs, then outcomes."""
        return [(a, x, c) for (a, x), c in sorted(self.terms.items(), key=lambda t: (t[0][1], t[0][0]))]

    def index_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(A, X, c)``: outcome rows, input rows and float coefficients."""
        items = self.sorted_terms()
        n = self.scenario.n
        if not items:
            empty = np.zeros((0, n), dtype=int)
            return empty, empty.copy(), np.zeros(0)
        A = np.array([a for a, _, _ in items], dtype=int)
        X = np.array([x for _, x, _ in items], dtype=int)
        c = np.array([float(c) for _, _, c in items])
        return A, X, c

    def evaluate_table(self, table: np.ndarray) -> float:
        A, X, c = self.index_arrays()
        if not len(c):
            return 0.0
        idx = tuple(A.T) + tuple(X.T)
        return float(np.dot(c, table[idx]))

    def to_dict(self) -> dict:
        return {
            "kind": "bell_expression",
            "scenario": self.scenario.to_dict(),
            "label": self.label,
            "terms": [
                {"a": list(a), "x": list(x), "c": int(c) if c.denominator == 1 else str(c)}
                for a, x, c in self.sorted_terms()
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BellExpression":
        sc = Scenario.from_dict(data["scenario"])
        return cls.from_terms(sc, ((t["a"], t["x"], t["c"]) for t in data["terms"]),
                              data.get("label", ""))

    def __repr__(self) -> str:
        return f"BellExpression({self.label!r}, {len(self)} terms, {self.scenario})"

    def pretty(self) -> str:
        parts = []
        for a, x, c in self.sorted_terms():
            sign = "-" if c < 0 else "+"
            mag = abs(c)
            coef = "" if mag == 1 else f"{mag}*"
            parts.append(f"{sign} {coef}p({''.join(map(str, a))}|{''.join(map(str, x))})")
        return " ".join(parts).lstrip("+ ") if parts else "0"


def pos_neg_decompose(e: BellExpression) -> tuple[BellExpression, BellExpression]:
    """Split ``e = plus - minus`` with both parts carrying positive coefficients."""
    plus = {ev: c for ev, c in e.terms.items() if c > 0}
    minus = {ev: -c for ev, c in e.terms.items() if c < 0}
    return (BellExpression(e.scenario, plus, f"{e.label}_+"),
            BellExpression(e.scenario, minus, f"{e.label}_-"))


def evaluate(e: "BellExpression | ComposedInequality", b: Behavior) -> float:
    """Value of an expression, or the margin ``lhs - rhs`` of a composed inequality."""
    expr = e.margin_expression() if isinstance(e, ComposedInequality) else e
    if expr.scenario != b.scenario:
        raise ScenarioError(f"expression on {expr.scenario} vs behavior on {b.scenario}")
    return expr.evaluate_table(b.table)


# --- seeds -----------------------------------------------------------------

CHSH_SCENARIO = Scenario(2, 2, 2)
TRI_SCENARIO = Scenario(3, 2, 2)
CGLMP_SCENARIO = Scenario(2, 2, 3)


def _parse(code: str) -> tuple[tuple[int, ...], tuple[int, ...]]:
    a, x = code.split("|")
    return tuple(map(int, a)), tuple(map(int, x))


def _from_codes(scenario: Scenario, plus: Sequence[str], minus: Sequence[str], label: str):
    items = [(*_parse(s), 1) for s in plus] + [(*_parse(s), -1) for s in minus]
    return BellExpression.from_terms(scenario, items, label)


def chsh_seed() -> BellExpression:
    """CHSH in the form ``p(00|00) - p(01|01) - p(10|10) - p(00|11) <= 0``."""
    return _from_codes(CHSH_SCENARIO, ["00|00"], ["01|01", "10|10", "00|11"], "CHSH")


def tri_seed() -> BellExpression:
    """Tripartite GMNL seed with the single positive term ``p(000|000)``."""
    return _from_codes(
        TRI_SCENARIO,
        ["000|000"],
        ["010|111", "000|011", "001|001", "100|110", "010|010", "100|100"],
        "I_tri",
    )


def cglmp_seeds() -> tuple[BellExpression, BellExpression]:
    """Three-outcome CGLMP seed (outcomes of B0 relabeled 0<->2) and its 0<->1 permutation."""
    j3 = _from_codes(
        CGLMP_SCENARIO,
        ["01|00", "00|00", "10|00"],
        ["01|01", "02|01", "12|01", "10|11", "20|11", "21|11", "01|10", "00|10", "10|10"],
        "J3",
    )
    j3t = _from_codes(
        CGLMP_SCENARIO,
        ["10|00", "11|00", "01|00"],
        ["10|01", "12|01", "02|01", "01|11", "21|11", "20|11", "10|10", "11|10", "01|10"],
        "J3~",
    )
    return j3, j3t


def permute_outcomes(e: BellExpression, perm: Mapping[int, int], parties=None) -> BellExpression:
    """Apply an outcome relabeling to the given parties (default: all)."""
    parties = range(e.scenario.n) if parties is None else parties
    terms = {}
    for (a, x), c in e.terms.items():
        a2 = tuple(perm.get(v, v) if k in parties else v for k, v in enumerate(a))
        terms[(a2, x)] = c
    return BellExpression(e.scenario, terms, f"{e.label}~")


def lift(seed: BellExpression, n: int, host: Sequence[int],
         fill: Sequence[tuple[int, int]] = ()) -> BellExpression:
    """Embed ``seed`` into ``n`` parties.

    Seed party ``i`` becomes party ``host[i]``; the remaining parties, in
    increasing order, are fixed to ``fill[j] = (outcome, input)``.
    """
    sn = seed.scenario.n
    host = tuple(int(h) for h in host)
    if len(host) != sn or len(set(host)) != sn:
        raise ValueError(f"host {host} must list {sn} distinct parties")
    if any(not 0 <= h < n for h in host):
        raise ValueError(f"host {host} out of range for {n} parties")
    others = [k for k in range(n) if k not in host]
    if len(fill) != len(others):
        raise ValueError(f"fill has {len(fill)} entries, {len(others)} non-host parties")
    sc = Scenario(n, seed.scenario.m, seed.scenario.d)
    terms = {}
    for (a, x), c in seed.terms.items():
        A, X = [0] * n, [0] * n
        for i, h in enumerate(host):
            A[h], X[h] = a[i], x[i]
        for k, (ak, xk) in zip(others, fill):
            A[k], X[k] = ak, xk
        terms[(tuple(A), tuple(X))] = c
    fill_txt = ",".join(f"{ak}|{xk}" for ak, xk in fill)
    label = f"{seed.label}^{{{','.join(str(h + 1) for h in host)}}}" + (f"({fill_txt})" if fill else "")
    return BellExpression(sc, terms, label)


# --- partitions ------------------------------------------------------------

@dataclass(frozen=True)
class Partition:
    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(sorted(tuple(sorted(b)) for b in self.blocks))
        if any(not b for b in blocks):
            raise ValueError("empty block")
        flat = [p for b in blocks for p in b]
        if len(flat) != len(set(flat)):
            raise ValueError("blocks are not disjoint")
        object.__setattr__(self, "blocks", blocks)

    @property
    def n(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def k(self) -> int:
        return max(len(b) for b in self.blocks)

    def covers(self, n: int) -> bool:
        return sorted(p for b in self.blocks for p in b) == list(range(n))

    def contains(self, group: Iterable[int]) -> bool:
        g = set(group)
        return any(g <= set(b) for b in self.blocks)

    def __str__(self) -> str:
        return "|".join("".join(str(p + 1) for p in b) for b in self.blocks)


def set_partitions(n: int, k: int | None = None, min_blocks: int = 1) -> Iterator[Partition]:
    """All partitions of ``range(n)`` with block size at most ``k``."""
    k = n if k is None else k

    def rec(i: int, blocks: list[list[int]]):
        if i == n:
            if len(blocks) >= min_blocks:
                yield Partition(tuple(tuple(b) for b in blocks))
            return
        for b in blocks:
            if len(b) < k:
                b.append(i)
                yield from rec(i + 1, blocks)
                b.pop()
        blocks.append([i])
        yield from rec(i + 1, blocks)
        blocks.pop()

    if n >= 1 and k >= 1:
        yield from rec(0, [])


def bipartitions(n: int) -> Iterator[Partition]:
    """The ``2^(n-1) - 1`` nontrivial bipartitions ``S|S-bar``."""
    rest = list(range(1, n))
    for r in range(0, n - 1):
        for extra in itertools.combinations(rest, r):
            s = (0,) + extra
            yield Partition((s, tuple(p for p in range(n) if p not in s)))


# --- families and composition ----------------------------------------------

@dataclass(frozen=True, eq=False)
class ExpressionFamily:
    """Members ``(g, I^g)``; all share one scenario and one positive part."""

    members: tuple[tuple[tuple[int, ...], BellExpression], ...]
    label: str = ""

    def __post_init__(self):
        members = tuple((tuple(sorted(g)), e) for g, e in self.members)
        if not members:
            raise ConditionError("family is empty")
        scenarios = {e.scenario for _, e in members}
        if len(scenarios) != 1:
            raise ScenarioError("family members live in different scenarios")
        plus0 = pos_neg_decompose(members[0][1])[0]
        for g, e in members[1:]:
            if pos_neg_decompose(e)[0] != plus0:
                raise ConditionError(f"positive part of member {g} differs from the first member's")
        object.__setattr__(self, "members", members)

    @property
    def scenario(self) -> Scenario:
        return self.members[0][1].scenario

    @property
    def groups(self) -> list[tuple[int, ...]]:
        return [g for g, _ in self.members]

    def positive_part(self) -> BellExpression:
        return pos_neg_decompose(self.members[0][1])[0].relabel("I_+")

    def total(self) -> BellExpression:
        out = BellExpression.zero(self.scenario)
        for _, e in self.members:
            out = out + e
        return out.relabel(f"sum {self.label}")


def common_negative_term(fam: ExpressionFamily) -> BellExpression:
    """Entrywise minimum of the members' negative parts (empty if nothing is shared)."""
    if not fam.members:
        raise ConditionError("family is empty")
    minus = [dict(pos_neg_decompose(e)[1].terms) for _, e in fam.members]
    common = {}
    for ev, c in minus[0].items():
        cs = [mp.get(ev, Fraction(0)) for mp in minus]
        if all(v > 0 for v in cs):
            common[ev] = min(cs)
    return BellExpression(fam.scenario, common, "T")


def gamma_exact(fam: ExpressionFamily, k: int) -> int:
    """Max over partitions with blocks of size <= k of the number of members inside one block.

    ``k = n - 1`` reproduces the maximum over bipartitions (any admissible
    partition can be coarsened into a bipartition without losing members).
    """
    n = fam.scenario.n
    if n > CAPS.gamma_parties:
        raise ValueError(f"gamma enumeration capped at {CAPS.gamma_parties} parties, got {n}")
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside 1..{n}")
    masks = [sum(1 << p for p in g) for g in fam.groups]
    if k >= n:
        return len(masks)
    best = 0
    for part in set_partitions(n, k):
        bm = [sum(1 << p for p in b) for b in part.blocks]
        cnt = sum(1 for g in masks if any(g & b == g for b in bm))
        if cnt > best:
            best = cnt
            if best == len(masks):
                break
    return best


def gamma_bipartition(fam: ExpressionFamily) -> int:
    """``max_{S|S-bar} |G'|`` by direct enumeration of bipartitions."""
    n = fam.scenario.n
    return max(sum(1 for g in fam.groups if part.contains(g)) for part in bipartitions(n))


def example4_formula(n: int, k: int) -> int:
    """Closed form printed for the symmetric-family depth coefficient:
    ``floor(n/k) C(k,2) + (n mod k) C(n mod k, 2)``."""
    nk = n % k
    return (n // k) * math.comb(k, 2) + nk * math.comb(nk, 2)


def symmetric_depth_gamma(n: int, k: int) -> int:
    """Enumerated depth coefficient for the all-pairs family."""
    return gamma_exact(chsh_symmetric_family(n), k)


def example4_discrepancy(n: int, k: int) -> dict:
    enumerated = symmetric_depth_gamma(n, k)
    printed = example4_formula(n, k)
    nk = n % k
    return {
        "n": n,
        "k": k,
        "enumerated": enumerated,
        "printed_formula": printed,
        "corrected_formula": (n // k) * math.comb(k, 2) + math.comb(nk, 2),
        "agree": enumerated == printed,
    }


@dataclass(frozen=True, eq=False)
class ComposedInequality:
    """``lhs <= rhs`` with ``rhs = gamma * (I_+ - T)``; violated iff ``lhs - rhs > 0``."""

    lhs: BellExpression
    rhs: BellExpression
    gamma: int
    plus: BellExpression
    T: BellExpression
    kind: str              # "gmnl" or "depth"
    k: int
    label: str = ""

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.kind not in ("gmnl", "depth"):
            raise ValueError(f"unknown kind {self.kind!r}")

    @property
    def scenario(self) -> Scenario:
        return self.lhs.scenario

    def margin_expression(self) -> BellExpression:
        return (self.lhs - self.rhs).relabel(f"{self.label} margin")

    def margin(self, b: Behavior) -> float:
        return evaluate(self, b)

    def to_dict(self) -> dict:
        return {
            "kind": "composed_inequality",
            "label": self.label,
            "inequality_kind": self.kind,
            "k": self.k,
            "gamma": self.gamma,
            "lhs": self.lhs.to_dict(),
            "rhs": self.rhs.to_dict(),
            "plus": self.plus.to_dict(),
            "T": self.T.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ComposedInequality":
        return cls(
            lhs=BellExpression.from_dict(data["lhs"]),
            rhs=BellExpression.from_dict(data["rhs"]),
            gamma=int(data["gamma"]),
            plus=BellExpression.from_dict(data["plus"]),
            T=BellExpression.from_dict(data["T"]),
            kind=data["inequality_kind"],
            k=int(data["k"]),
            label=data.get("label", ""),
        )


def _compose(fam: ExpressionFamily, gamma: int, kind: str, k: int, label: str,
             use_common_term: bool) -> ComposedInequality:
    plus = fam.positive_part()
    T = common_negative_term(fam) if use_common_term else BellExpression.zero(fam.scenario, "T")
    rhs = (plus - T).scale(gamma).relabel(f"{gamma}*(I_+ - T)")
    return ComposedInequality(fam.total(), rhs, gamma, plus, T, kind, k, label or fam.label)


def compose_gmnl(fam: ExpressionFamily, label: str = "",
                 use_common_term: bool = True) -> ComposedInequality:
    """``sum_g I^g <= gamma (I_+ - T)`` with gamma maximized over bipartitions.

    Condition (i) (each member is non-positive on models local across any
    split of its parties) is not checked here; see
    :func:`gmnl.oracle.verify_member_condition`.
    ``use_common_term=False`` yields the bound without ``T``.
    """
    n = fam.scenario.n
    gamma = gamma_exact(fam, n - 1) if n > 1 else 0
    return _compose(fam, gamma, "gmnl", n - 1, label, use_common_term)


def compose_depth(fam: ExpressionFamily, k: int, label: str = "") -> ComposedInequality:
    """Bound for ``k``-producible models; violation certifies nonlocality depth >= k+1."""
    n = fam.scenario.n
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside 1..{n}")
    return _compose(fam, gamma_exact(fam, k), "depth", k, label, True)


# --- concrete families -----------------------------------------------------

def lifted_chsh(n: int, i: int, j: int) -> BellExpression:
    """CHSH between parties ``i`` and ``j`` with everyone else fixed to outcome 0, input 0."""
    return lift(chsh_seed(), n, (i, j), [(0, 0)] * (n - 2))


def chsh_star_family(n: int) -> ExpressionFamily:
    if n < 3:
        raise ValueError("star family needs n >= 3")
    return ExpressionFamily(tuple(((0, j), lifted_chsh(n, 0, j)) for j in range(1, n)),
                            f"star CHSH n={n}")


def chsh_symmetric_family(n: int) -> ExpressionFamily:
    if n < 3:
        raise ValueError("symmetric family needs n >= 3")
    return ExpressionFamily(
        tuple(((i, j), lifted_chsh(n, i, j)) for i, j in itertools.combinations(range(n), 2)),
        f"all-pairs CHSH n={n}",
    )


def tri_family(n: int) -> ExpressionFamily:
    if n < 3:
        raise ValueError("I_tri family needs n >= 3")
    seed = tri_seed()
    return ExpressionFamily(
        tuple(((0, 1, i), lift(seed, n, (0, 1, i), [(0, 0)] * (n - 3))) for i in range(2, n)),
        f"I_tri family n={n}",
    )


def improved00(n: int) -> ComposedInequality:
    return compose_gmnl(chsh_star_family(n), label=f"improved00 n={n}")


def ineq_i1(n: int) -> ComposedInequality:
    """Star CHSH sum bounded by ``(n-2) p(0|0)`` (no common term subtracted)."""
    return compose_gmnl(chsh_star_family(n), label=f"I1 n={n}", use_common_term=False)


def isym(n: int) -> ComposedInequality:
    return compose_gmnl(chsh_symmetric_family(n), label=f"Isym n={n}")


def tri_improved(n: int) -> ComposedInequality:
    return compose_gmnl(tri_family(n), label=f"I_tri improved n={n}")


def star_depth(n: int, k: int) -> ComposedInequality:
    return compose_depth(chsh_star_family(n), k, label=f"star depth n={n} k={k}")


def symmetric_depth(n: int, k: int) -> ComposedInequality:
    return compose_depth(chsh_symmetric_family(n), k, label=f"all-pairs depth n={n} k={k}")


QUTRIT_PLUS_CODES = ("001|000", "010|000", "011|000", "100|000", "101|000", "110|000")
QUTRIT_T_CODES = ("001|100", "010|100", "011|100", "100|100", "101|100", "110|100")


def qutrit_pair_expression(i: int, j: int) -> BellExpression:
    """``J3^{ij}(1|0) + J3~^{ij}(0|0)`` on three qutrit parties."""
    j3, j3t = cglmp_seeds()
    e = lift(j3, 3, (i, j), [(1, 0)]) + lift(j3t, 3, (i, j), [(0, 0)])
    names = "ABC"
    return e.relabel(f"I^{names[i]}{names[j]}")


def compose_qutrit_tripartite() -> tuple[ComposedInequality, ComposedInequality]:
    """The all-pairs and star (A-centred) inequalities in the (3,2,3) scenario."""
    sc = Scenario(3, 2, 3)
    pairs = {(0, 1): qutrit_pair_expression(0, 1),
             (0, 2): qutrit_pair_expression(0, 2),
             (1, 2): qutrit_pair_expression(1, 2)}
    sym_fam = ExpressionFamily(tuple(pairs.items()), "qutrit all pairs")
    star_fam = ExpressionFamily((((0, 1), pairs[(0, 1)]), ((0, 2), pairs[(0, 2)])),
                                "qutrit star")

    expected_plus = _from_codes(sc, QUTRIT_PLUS_CODES, [], "I_+")
    expected_T = _from_codes(sc, QUTRIT_T_CODES, [], "T")
    if sym_fam.positive_part() != expected_plus:
        raise ConditionError("qutrit positive parts do not match the six-term I_+")
    sym = compose_gmnl(sym_fam, label="qutrit all-pairs")
    star = compose_gmnl(star_fam, label="qutrit star (I13)")
    if star.T != expected_T:
        raise ConditionError("qutrit star common term does not match the six-term T")
    if sym.T:
        raise ConditionError("all-pairs qutrit family unexpectedly shares a negative term")
    return sym, star


def named_inequality(name: str, n: int = 3, k: int | None = None) -> ComposedInequality:
    """Look up an inequality by the selector used on the command line."""
    name = name.lower()
    if name == "improved00":
        return improved00(n)
    if name == "i1":
        return ineq_i1(n)
    if name == "isym":
        return isym(n)
    if name in ("tri", "example2"):
        return tri_improved(n)
    if name in ("star-depth", "example3"):
        return star_depth(n, k if k is not None else 2)
    if name in ("sym-depth", "example4"):
        return symmetric_depth(n, k if k is not None else 2)
    if name in ("qutrit-star", "i13"):
        return compose_qutrit_tripartite()[1]
    if name == "qutrit-sym":
        return compose_qutrit_tripartite()[0]
    raise KeyError(f"unknown inequality {name!r}")


INEQUALITY_NAMES = ("improved00", "i1", "isym", "tri", "star-depth", "sym-depth",
                    "qutrit-star", "qutrit-sym")
