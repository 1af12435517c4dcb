"""Exact classical bounds by enumerating extremal hybrid models.

A partition-local model is a convex mixture of products, over the blocks of
a partition, of non-signaling behaviors on each block. Bell expressions are
linear, so their maximum is attained on products of block vertices:
deterministic strategies for single parties, and vertices of the
non-signaling polytope for larger blocks. Vertex coordinates are rational,
so every maximum below is computed in exact integer arithmetic after scaling
by common denominators.
"""

from __future__ import annotations

import gzip
import itertools
import json
import logging
import math
import os
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .config import CAPS
from .expressions import (BellExpression, ExpressionFamily, Partition, bipartitions,
                          set_partitions)
from .scenario import Behavior, Scenario

log = logging.getLogger(__name__)

CACHE_VERSION = 1
CACHE_ENV = "GMNL_VERTEX_CACHE"


class OracleCapError(ValueError):
    """The requested enumeration exceeds the configured caps."""


class UnsupportedBlockError(ValueError):
    """No certified vertex description is available for a block."""


# --- vertex sets ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class VertexSet:
    """Extremal behaviors of one block, as integer numerators over a common denominator.

    ``numerators[v]`` has the behavior-table shape ``(d,)*n + (m,)*n``.
    """

    scenario: Scenario
    numerators: np.ndarray
    denominator: int
    source: str = ""

    def __len__(self) -> int:
        return self.numerators.shape[0]

    def behavior(self, v: int) -> Behavior:
        return Behavior(self.scenario, self.numerators[v] / self.denominator)

    def __iter__(self) -> Iterator[Behavior]:
        return (self.behavior(v) for v in range(len(self)))

    def fraction(self, v: int, a: Sequence[int], x: Sequence[int]) -> Fraction:
        return Fraction(int(self.numerators[v][tuple(a) + tuple(x)]), self.denominator)

    def to_dict(self) -> dict:
        vertices = []
        sc = self.scenario
        # documented flat order; events() enumerates it
        table_pos = np.ravel_multi_index(
            tuple(np.array([list(a) + list(x) for a, x in sc.events()]).T), sc.shape
        )
        for row in self.numerators.reshape(len(self), -1):
            vals = row[table_pos]
            g = math.gcd(int(self.denominator), *map(int, vals))
            vertices.append({"den": int(self.denominator) // g,
                             "num": [int(v) // g for v in vals]})
        return {
            "version": CACHE_VERSION,
            "kind": "ns_vertices",
            "scenario": sc.to_dict(),
            "source": self.source,
            "count": len(self),
            "vertices": vertices,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "VertexSet":
        if data.get("version") != CACHE_VERSION:
            raise ValueError(f"unsupported vertex cache version {data.get('version')}")
        sc = Scenario.from_dict(data["scenario"])
        dens = [int(v["den"]) for v in data["vertices"]]
        den = math.lcm(*dens) if dens else 1
        events = list(sc.events())
        table_idx = tuple(np.array([list(a) + list(x) for a, x in events]).T)
        nums = np.zeros((len(dens),) + sc.shape, dtype=np.int64)
        for i, v in enumerate(data["vertices"]):
            nums[i][table_idx] = np.asarray(v["num"], dtype=np.int64) * (den // int(v["den"]))
        if len(nums) != int(data["count"]):
            raise ValueError("vertex count does not match the stored count")
        return cls(sc, nums, den, data.get("source", ""))


def _from_tables(sc: Scenario, tables: Sequence[dict], source: str) -> VertexSet:
    """``tables`` map full-table index -> Fraction (missing entries are 0)."""
    dens = [f.denominator for t in tables for f in t.values()]
    den = math.lcm(*dens) if dens else 1
    nums = np.zeros((len(tables),) + sc.shape, dtype=np.int64)
    for i, t in enumerate(tables):
        for idx, f in t.items():
            nums[i][idx] = f.numerator * (den // f.denominator)
    return VertexSet(sc, nums, den, source)


def deterministic_strategies(n: int, m: int, d: int) -> Iterator[tuple[tuple[int, ...], ...]]:
    """All assignments ``strategy[k][x] = outcome``."""
    local = list(itertools.product(range(d), repeat=m))
    return itertools.product(local, repeat=n)


def deterministic_vertices(n: int, m: int, d: int) -> VertexSet:
    sc = Scenario(n, m, d)
    count = d ** (m * n)
    if count > CAPS.local_strategies:
        raise OracleCapError(f"{count} deterministic strategies exceed the cap")
    nums = np.zeros((count,) + sc.shape, dtype=np.int64)
    for i, strat in enumerate(deterministic_strategies(n, m, d)):
        for x in itertools.product(range(m), repeat=n):
            a = tuple(strat[k][x[k]] for k in range(n))
            nums[i][a + x] = 1
    return VertexSet(sc, nums, 1, "deterministic")


def pr_box_vertices() -> VertexSet:
    """The 8 PR boxes ``a xor b = xy xor alpha x xor beta y xor gamma`` (entries 1/2)."""
    sc = Scenario(2, 2, 2)
    nums = []
    for al, be, ga in itertools.product(range(2), repeat=3):
        t = np.zeros(sc.shape, dtype=np.int64)
        for a, b, x, y in itertools.product(range(2), repeat=4):
            if a ^ b == (x * y) ^ (al * x) ^ (be * y) ^ ga:
                t[a, b, x, y] = 1
        nums.append(t)
    return VertexSet(sc, np.array(nums), 2, "PR boxes")


def _concat(sets: Sequence[VertexSet], source: str) -> VertexSet:
    den = math.lcm(*(s.denominator for s in sets))
    nums = np.concatenate([s.numerators * (den // s.denominator) for s in sets])
    return VertexSet(sets[0].scenario, nums, den, source)


def ns_hrep(n: int, m: int, d: int):
    """Rows ``[b | A]`` of ``b + A p >= 0`` and the indices of equality rows.

    Variables are the table entries in the documented flat order.
    """
    sc = Scenario(n, m, d)
    index = {ev: i for i, ev in enumerate(sc.events())}
    N = len(index)
    rows: list[list[int]] = []
    lin: list[int] = []

    def new_row():
        return [0] * (N + 1)

    for i in range(N):
        r = new_row()
        r[1 + i] = 1
        rows.append(r)
    for x in sc.input_tuples():
        r = new_row()
        r[0] = -1
        for a in sc.outcome_tuples():
            r[1 + index[(a, x)]] = 1
        lin.append(len(rows))
        rows.append(r)
    for k in range(n):
        for x in sc.input_tuples():
            if x[k] != 0:
                continue
            for xk in range(1, m):
                x2 = x[:k] + (xk,) + x[k + 1:]
                for rest in itertools.product(range(d), repeat=n - 1):
                    r = new_row()
                    for ak in range(d):
                        a = rest[:k] + (ak,) + rest[k:]
                        r[1 + index[(a, x)]] += 1
                        r[1 + index[(a, x2)]] -= 1
                    lin.append(len(rows))
                    rows.append(r)
    return rows, lin


def enumerate_ns_vertices(n: int, m: int, d: int) -> VertexSet:
    """Exact rational vertex enumeration of the non-signaling polytope (double description)."""
    import cdd

    rows, lin = ns_hrep(n, m, d)
    mat = cdd.Matrix(rows, number_type="fraction")
    mat.rep_type = cdd.RepType.INEQUALITY
    mat.lin_set = frozenset(lin)
    gens = cdd.Polyhedron(mat).get_generators()
    sc = Scenario(n, m, d)
    events = list(sc.events())
    tables = []
    for i in range(gens.row_size):
        row = gens[i]
        if row[0] != 1:
            raise ValueError("non-signaling polytope produced a ray")
        t = {}
        for (a, x), val in zip(events, row[1:]):
            f = Fraction(val)
            if f:
                t[a + x] = f
        tables.append(t)
    vs = _from_tables(sc, tables, f"cdd exact enumeration ({n},{m},{d})")
    order = np.lexsort(vs.numerators.reshape(len(vs), -1).T[::-1])
    return VertexSet(sc, vs.numerators[order], vs.denominator, vs.source)


def cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path(str(resources.files("gmnl") / "data"))


def cache_path(n: int, m: int, d: int, directory: Path | None = None) -> Path:
    return (directory or cache_dir()) / f"ns_vertices_{n}{m}{d}.json.gz"


def write_vertex_cache(vs: VertexSet, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with gzip.open(path, "wt", encoding="utf-8") as fh:
        json.dump(vs.to_dict(), fh, separators=(",", ":"))


def read_vertex_cache(path: Path) -> VertexSet:
    with gzip.open(path, "rt", encoding="utf-8") as fh:
        return VertexSet.from_dict(json.load(fh))


def regenerate_vertex_cache(n: int, m: int, d: int, directory: Path | None = None) -> Path:
    path = cache_path(n, m, d, directory)
    log.info("enumerating NS vertices for (%d,%d,%d) into %s", n, m, d, path)
    write_vertex_cache(enumerate_ns_vertices(n, m, d), path)
    block_vertices.cache_clear()
    return path


def ns_vertices_2x2xd(d: int) -> VertexSet:
    """Vertices of the bipartite two-input non-signaling polytope.

    ``d = 2``: 16 deterministic points and 8 PR boxes.
    ``d = 3``: exact enumeration, read from (or written to) the vertex cache.
    """
    if d == 2:
        return _concat([deterministic_vertices(2, 2, 2), pr_box_vertices()],
                       "deterministic + PR boxes")
    if d == 3:
        path = cache_path(2, 2, 3)
        if not path.exists():
            regenerate_vertex_cache(2, 2, 3)
        return read_vertex_cache(path)
    raise ValueError(f"unsupported number of outcomes d={d}")


@lru_cache(maxsize=None)
def block_vertices(size: int, m: int, d: int) -> VertexSet:
    """Certified extremal behaviors of a block of ``size`` parties."""
    if size == 1:
        return deterministic_vertices(1, m, d)
    if size == 2 and m == 2 and d in (2, 3):
        return ns_vertices_2x2xd(d)
    path = cache_path(size, m, d)
    if path.exists():
        return read_vertex_cache(path)
    raise UnsupportedBlockError(
        f"no vertex file for a {size}-party block in scenario (m={m}, d={d}) at {path}"
    )


# --- maximization over products ---------------------------------------------

@dataclass(frozen=True)
class BoundResult:
    """Maximum of an expression over a model class."""

    value: Fraction | None          # exact maximum over the certified part
    certified: bool                 # False if some partition could not be handled
    partition: Partition | None     # a maximizing partition
    vertices: tuple[int, ...]       # maximizing vertex index per block
    uncertified: tuple[str, ...] = ()
    evaluated: int = 0              # number of vertex products examined
    lp_certified: tuple[str, ...] = ()   # partitions bounded by an exact LP certificate

    @property
    def float_value(self) -> float:
        return float(self.value) if self.value is not None else float("nan")

    def to_dict(self) -> dict:
        v = self.value
        return {
            "value": None if v is None else {"num": v.numerator, "den": v.denominator},
            "float": self.float_value,
            "certified": self.certified,
            "partition": str(self.partition) if self.partition else None,
            "vertices": list(self.vertices),
            "uncertified": list(self.uncertified),
            "evaluated": self.evaluated,
            "lp_certified": list(self.lp_certified),
        }


def _scaled_coefficients(e: BellExpression) -> tuple[list, np.ndarray, int]:
    items = e.sorted_terms()
    den = math.lcm(*(c.denominator for _, _, c in items)) if items else 1
    coef = np.array([int(c * den) for _, _, c in items], dtype=np.int64)
    return items, coef, den


def _block_matrix(vs: VertexSet, block: Sequence[int], items) -> np.ndarray:
    """``M[v, t]`` = numerator of vertex ``v`` at the block-restriction of term ``t``."""
    if not items:
        return np.zeros((len(vs), 0), dtype=np.int64)
    idx = np.array([[a[p] for p in block] + [x[p] for p in block] for a, x, _ in items])
    return vs.numerators[(slice(None),) + tuple(idx.T)]


def partition_maximum(e: BellExpression, part: Partition) -> tuple[Fraction, tuple[int, ...], int]:
    """Exact max of ``e`` over products of block vertices for one partition."""
    sc = e.scenario
    items, coef, cden = _scaled_coefficients(e)
    sets = [block_vertices(len(b), sc.m, sc.d) for b in part.blocks]
    mats = [_block_matrix(vs, b, items) for vs, b in zip(sets, part.blocks)]
    den = cden * math.prod(vs.denominator for vs in sets)
    count = math.prod(len(vs) for vs in sets)
    if not items:
        return Fraction(0), (0,) * len(sets), count

    # put the largest vertex set last so the final matrix product is the big one
    order = sorted(range(len(sets)), key=lambda i: len(sets[i]))
    mats_o = [mats[i] for i in order]
    best, best_idx = None, None
    prefix, last = mats_o[:-1], mats_o[-1]
    head, mid = (prefix[:-1], prefix[-1]) if prefix else ([], None)
    for combo in itertools.product(*(range(M.shape[0]) for M in head)):
        w = coef.copy()
        for M, v in zip(head, combo):
            w = w * M[v]
        if mid is None:
            vals = last @ w
            j = int(np.argmax(vals))
            cand, idx = int(vals[j]), combo + (j,)
        else:
            vals = (mid * w) @ last.T
            flat = int(np.argmax(vals))
            i, j = divmod(flat, vals.shape[1])
            cand, idx = int(vals[i, j]), combo + (i, j)
        if best is None or cand > best:
            best, best_idx = cand, idx
    # undo the size ordering
    vert = [0] * len(sets)
    for pos, i in enumerate(order):
        vert[i] = best_idx[pos]
    return Fraction(best, den), tuple(vert), count


def _maximize(e: BellExpression, parts: Sequence[Partition]) -> BoundResult:
    best, best_part, best_vert = None, None, ()
    missing, via_lp, total = [], [], 0
    for part in parts:
        try:
            val, vert, cnt = partition_maximum(e, part)
        except UnsupportedBlockError as exc:
            lp_block = _single_unsupported_block(e.scenario, part)
            if lp_block is None:
                missing.append(f"{part}: {exc}")
                continue
            cert = partition_maximum_certified_lp(e, part, lp_block)
            val, vert, cnt = cert.upper, (), cert.evaluated
            via_lp.append(f"{part}: upper={cert.upper} exact={cert.exact}")
        total += cnt
        if best is None or val > best:
            best, best_part, best_vert = val, part, vert
    return BoundResult(best, not missing, best_part, best_vert, tuple(missing), total,
                       tuple(via_lp))


def local_bound(e: BellExpression) -> BoundResult:
    """Maximum over deterministic local strategies."""
    sc = e.scenario
    count = (sc.d ** sc.m) ** sc.n
    if count > CAPS.local_strategies:
        raise OracleCapError(f"{count} local strategies exceed the cap {CAPS.local_strategies}")
    part = Partition(tuple((k,) for k in range(sc.n)))
    return _maximize(e, [part])


def _check_hybrid_caps(sc: Scenario) -> None:
    if sc.d == 2 and sc.n > 4:
        raise OracleCapError(f"hybrid enumeration supports n <= 4 for qubit scenarios, got {sc.n}")
    if sc.d == 3 and sc.n > 3:
        raise OracleCapError(f"hybrid enumeration supports n = 3 for d = 3, got {sc.n}")
    if sc.d > 3 or sc.m != 2:
        raise OracleCapError(f"hybrid enumeration not available for {sc}")


def bilocal_bound(e: BellExpression) -> BoundResult:
    """Maximum over models local across some bipartition (non-signaling on each side)."""
    sc = e.scenario
    _check_hybrid_caps(sc)
    return _maximize(e, list(bipartitions(sc.n)))


def kproducible_bound(e: BellExpression, k: int) -> BoundResult:
    """Maximum over ``k``-producible models (all partitions with blocks of size <= k)."""
    sc = e.scenario
    _check_hybrid_caps(sc)
    if not 1 <= k <= sc.n:
        raise ValueError(f"k={k} outside 1..{sc.n}")
    return _maximize(e, list(set_partitions(sc.n, k)))


def split_bound(e: BellExpression, part: Partition) -> BoundResult:
    """Maximum over models that factorize across the given partition."""
    return _maximize(e, [part])


def verify_member_condition(fam: ExpressionFamily) -> dict:
    """Check that each member is non-positive on every bipartition that splits its parties.

    Returns ``{(g, str(partition)): exact max}``; raises if a value is positive.
    """
    n = fam.scenario.n
    _check_hybrid_caps(fam.scenario)
    out = {}
    for g, expr in fam.members:
        for part in bipartitions(n):
            if part.contains(g):
                continue
            res = split_bound(expr, part)
            if not res.certified:
                raise UnsupportedBlockError("; ".join(res.uncertified))
            out[(g, str(part))] = res.value
            if res.value > 0:
                raise ValueError(f"member {g} reaches {res.value} across {part}")
    return out


# --- hybrid vertices as behaviors ------------------------------------------

@dataclass(frozen=True, eq=False)
class HybridVertex:
    partition: Partition
    vertices: tuple[int, ...]
    behavior: Behavior


def product_table(sc: Scenario, part: Partition, tables: Sequence[np.ndarray]) -> np.ndarray:
    """Table of the product behavior, block ``i`` contributing ``tables[i]``."""
    n = sc.n
    letters = iter("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ")
    a_lab = [next(letters) for _ in range(n)]
    x_lab = [next(letters) for _ in range(n)]
    subs = ["".join(a_lab[p] for p in b) + "".join(x_lab[p] for p in b) for b in part.blocks]
    spec = ",".join(subs) + "->" + "".join(a_lab) + "".join(x_lab)
    return np.einsum(spec, *tables)


def hybrid_vertices(sc: Scenario, part: Partition) -> Iterator[HybridVertex]:
    sets = [block_vertices(len(b), sc.m, sc.d) for b in part.blocks]
    for combo in itertools.product(*(range(len(s)) for s in sets)):
        tables = [s.numerators[v] / s.denominator for s, v in zip(sets, combo)]
        yield HybridVertex(part, combo, Behavior(sc, product_table(sc, part, tables)))


def witness_behavior(e: BellExpression, res: BoundResult) -> Behavior:
    """The hybrid vertex realizing ``res``."""
    sc = e.scenario
    sets = [block_vertices(len(b), sc.m, sc.d) for b in res.partition.blocks]
    tables = [s.numerators[v] / s.denominator for s, v in zip(sets, res.vertices)]
    return Behavior(sc, product_table(sc, res.partition, tables))


# --- linear programming cross-check ----------------------------------------

def ns_max_lp(e: BellExpression) -> float:
    """Maximum of ``e`` over the full non-signaling polytope by linear programming."""
    from scipy.optimize import linprog

    sc = e.scenario
    rows, lin = ns_hrep(sc.n, sc.m, sc.d)
    rows = np.array(rows, dtype=float)
    eq = rows[lin]
    index = {ev: i for i, ev in enumerate(sc.events())}
    c = np.zeros(sc.size)
    for ev, coef in e.terms.items():
        c[index[ev]] = float(coef)
    res = linprog(-c, A_eq=eq[:, 1:], b_eq=-eq[:, 0], bounds=(0, 1), method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP failed: {res.message}")
    return float(-res.fun)


def partition_maximum_lp(e: BellExpression, part: Partition, lp_block: int) -> float:
    """Max over products where block ``lp_block`` ranges over its full NS polytope by LP
    and every other block over its vertices."""
    from scipy.optimize import linprog

    sc = e.scenario
    blocks = part.blocks
    target = blocks[lp_block]
    others = [b for i, b in enumerate(blocks) if i != lp_block]
    sets = [block_vertices(len(b), sc.m, sc.d) for b in others]
    tsc = Scenario(len(target), sc.m, sc.d)
    rows, lin = ns_hrep(tsc.n, tsc.m, tsc.d)
    rows = np.array(rows, dtype=float)
    eq = rows[lin]
    index = {ev: i for i, ev in enumerate(tsc.events())}
    best = -np.inf
    for combo in itertools.product(*(range(len(s)) for s in sets)):
        c = np.zeros(tsc.size)
        for (a, x), coef in e.terms.items():
            w = float(coef)
            for s, v, b in zip(sets, combo, others):
                w *= s.numerators[v][tuple(a[p] for p in b) + tuple(x[p] for p in b)] / s.denominator
            if w:
                c[index[(tuple(a[p] for p in target), tuple(x[p] for p in target))]] += w
        res = linprog(-c, A_eq=eq[:, 1:], b_eq=-eq[:, 0], bounds=(0, 1), method="highs")
        if res.status != 0:
            raise RuntimeError(f"LP failed: {res.message}")
        best = max(best, -res.fun)
    return float(best)


def is_vertex(vs: VertexSet, v: int) -> bool:
    """Exact extremality test: the constraints tight at the point have full rank."""
    import sympy

    sc = vs.scenario
    rows, lin = ns_hrep(sc.n, sc.m, sc.d)
    table_pos = np.ravel_multi_index(
        tuple(np.array([list(a) + list(x) for a, x in sc.events()]).T), sc.shape
    )
    flat = vs.numerators[v].reshape(-1)[table_pos]
    eq = set(lin)
    tight = [r[1:] for i, r in enumerate(rows) if i in eq or (i < sc.size and flat[i] == 0)]
    return sympy.Matrix(tight).rank() == sc.size


# --- exact LP certificates ---------------------------------------------------

@dataclass(frozen=True)
class LPCertificate:
    """Rigorous bracket ``lower <= max <= upper`` for one block's linear program."""

    upper: Fraction
    lower: Fraction | None
    evaluated: int = 1

    @property
    def exact(self) -> bool:
        return self.lower is not None and self.lower == self.upper


def _single_unsupported_block(sc: Scenario, part: Partition) -> int | None:
    bad = []
    for i, b in enumerate(part.blocks):
        try:
            block_vertices(len(b), sc.m, sc.d)
        except UnsupportedBlockError:
            bad.append(i)
    return bad[0] if len(bad) == 1 else None


def ns_lp_certificate(sc: Scenario, c: dict, max_den: int = 10**6) -> LPCertificate:
    """Exact bounds on ``max c.p`` over the non-signaling polytope of ``sc``.

    The float LP solution is rationalized. The dual vector is repaired to exact
    feasibility by raising normalization multipliers (every variable sits in
    exactly one normalization row), which makes ``upper`` a proof. The primal
    point, if exactly feasible, gives ``lower``.
    """
    from scipy.optimize import linprog

    rows, lin = ns_hrep(sc.n, sc.m, sc.d)
    eq = [rows[i] for i in lin]
    events = list(sc.events())
    cvec = [Fraction(c.get(ev, 0)) for ev in events]
    A = np.array([r[1:] for r in eq], dtype=float)
    b = np.array([-r[0] for r in eq], dtype=float)
    res = linprog(-np.array([float(v) for v in cvec]), A_eq=A, b_eq=b, bounds=(0, None),
                  method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP failed: {res.message}")
    y = [Fraction(-float(v)).limit_denominator(max_den) for v in res.eqlin.marginals]
    slack = [sum((r[1 + i] * y[j] for j, r in enumerate(eq) if r[1 + i]), Fraction(0)) - cvec[i]
             for i in range(len(events))]
    norm_rows = [j for j, r in enumerate(eq) if r[0] != 0]
    for j in norm_rows:
        members = [i for i in range(len(events)) if eq[j][1 + i]]
        deficit = max(Fraction(0), max(-slack[i] for i in members))
        y[j] += deficit
    upper = sum((-eq[j][0] * y[j] for j in range(len(eq))), Fraction(0))

    p = [Fraction(float(v)).limit_denominator(max_den) for v in res.x]
    feasible = all(v >= 0 for v in p) and all(
        sum((r[1 + i] * p[i] for i in range(len(events)) if r[1 + i]), Fraction(0)) == -r[0]
        for r in eq)
    lower = sum((ci * pi for ci, pi in zip(cvec, p)), Fraction(0)) if feasible else None
    return LPCertificate(upper, lower)


def partition_maximum_certified_lp(e: BellExpression, part: Partition,
                                   lp_block: int) -> LPCertificate:
    """Exact bracket of the max over one partition: vertices on every block but
    ``lp_block``, an exact LP certificate on that block."""
    sc = e.scenario
    blocks = part.blocks
    target = blocks[lp_block]
    others = [b for i, b in enumerate(blocks) if i != lp_block]
    sets = [block_vertices(len(b), sc.m, sc.d) for b in others]
    tsc = Scenario(len(target), sc.m, sc.d)
    upper, lower, count = None, None, 0
    for combo in itertools.product(*(range(len(s)) for s in sets)):
        c: dict = {}
        for (a, x), coef in e.terms.items():
            w = Fraction(coef)
            for s_, v, b in zip(sets, combo, others):
                w *= s_.fraction(v, [a[p] for p in b], [x[p] for p in b])
            if w:
                key = (tuple(a[p] for p in target), tuple(x[p] for p in target))
                c[key] = c.get(key, Fraction(0)) + w
        cert = ns_lp_certificate(tsc, c)
        count += 1
        upper = cert.upper if upper is None else max(upper, cert.upper)
        if cert.lower is not None:
            lower = cert.lower if lower is None else max(lower, cert.lower)
    return LPCertificate(upper, lower, count)
