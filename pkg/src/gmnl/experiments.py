"""Scripted reproductions: white-noise thresholds, batch verification of the
explicit three-qubit construction, the qutrit survey and depth detection."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .expressions import (ComposedInequality, example4_discrepancy, compose_qutrit_tripartite,
                          star_depth)
from .oracle import kproducible_bound
from .scenario import PureState, ghz_state
from .violation import (OptimizationConfig, canonical_sample,
                        noise_value, optimize_violation, restart_rng, verify_theorem2)

log = logging.getLogger(__name__)

VIOLATION_FLOOR = 1e-12   # margins at or below this count as no violation


def digest(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


# --- noise thresholds --------------------------------------------------------

@dataclass
class NoiseSweepResult:
    label: str
    n: int
    threshold: float                      # largest q with a violation found
    interval: tuple[float, float]
    config_digest: str
    points: list[tuple[float, float]]     # (q, best margin) in evaluation order
    violated_at_zero: bool
    analytic_threshold: float | None      # g / (g - h) from the q=0 optimum
    noise_value: float

    def to_dict(self) -> dict:
        return {"kind": "noise_sweep", "version": __version__, "label": self.label, "n": self.n,
                "threshold": self.threshold, "interval": list(self.interval),
                "config_digest": self.config_digest,
                "points": [list(p) for p in self.points],
                "violated_at_zero": self.violated_at_zero,
                "analytic_threshold": self.analytic_threshold,
                "noise_value": self.noise_value}

    def csv_rows(self) -> list[tuple]:
        return [(self.label, self.n, q, m) for q, m in sorted(self.points)]


def noise_threshold(ineq: ComposedInequality, state: PureState | None = None,
                    cfg: OptimizationConfig = OptimizationConfig(),
                    tie_parties: bool = True, bracket: float = 1e-3,
                    inner_restarts: int | None = None) -> NoiseSweepResult:
    """Bisection on the white-noise weight ``q`` with an inner optimization.

    The state defaults to the GHZ state of the inequality's scenario. Every
    bisection step reruns the optimizer (``inner_restarts`` seeded starts,
    default ``cfg.restarts``) warm-started from the best measurements so far.
    """
    sc = ineq.scenario
    state = ghz_state(sc.n, sc.d) if state is None else state
    h = noise_value(ineq.margin_expression())
    run_digest = digest({"cfg": cfg.digest(), "ineq": ineq.to_dict(), "bracket": bracket,
                         "tie": tie_parties, "inner": inner_restarts,
                         "state": state.to_dict()})
    best = optimize_violation(ineq, state, cfg, tie_parties)
    points = [(0.0, best.value)]
    if best.value <= VIOLATION_FLOOR:
        return NoiseSweepResult(ineq.label, sc.n, 0.0, (0.0, 0.0), run_digest, points, False,
                                None, h)
    analytic = best.value / (best.value - h) if h < 0 else None
    inner = OptimizationConfig(restarts=inner_restarts or cfg.restarts, max_iter=cfg.max_iter,
                               seed=cfg.seed + 1, tol=cfg.tol, bounds=cfg.bounds)
    lo, hi = 0.0, 1.0
    incumbent = best.params
    step = 0
    while hi - lo > bracket:
        q = 0.5 * (lo + hi)
        inner_cfg = OptimizationConfig(restarts=inner.restarts, max_iter=inner.max_iter,
                                       seed=inner.seed + step, tol=inner.tol, bounds=inner.bounds)
        res = optimize_violation(ineq, state, inner_cfg, tie_parties, starts=[incumbent], noise=q)
        points.append((q, res.value))
        if res.value > VIOLATION_FLOOR:
            lo, incumbent = q, res.params
        else:
            hi = q
        step += 1
        log.info("%s n=%d q=%.6f margin=%.3e", ineq.label, sc.n, q, res.value)
    return NoiseSweepResult(ineq.label, sc.n, lo, (lo, hi), run_digest, points, True, analytic, h)


def write_sweep(results: list[NoiseSweepResult], out: Path) -> tuple[Path, Path]:
    """JSON report plus a flat ``label,n,q,margin`` CSV next to it."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    json_path = out.with_suffix(".json")
    csv_path = out.with_suffix(".csv")
    json_path.write_text(json.dumps({"version": __version__,
                                     "sweeps": [r.to_dict() for r in results]},
                                    indent=2, sort_keys=True) + "\n")
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "n", "q", "margin"])
        for r in results:
            w.writerows(r.csv_rows())
    return json_path, csv_path


# --- surveys -----------------------------------------------------------------

@dataclass
class SurveyEntry:
    index: int
    margin: float
    alpha: float | None = None
    state: dict | None = None
    wall_time: float = 0.0


@dataclass
class SurveyReport:
    kind: str
    seed: int
    entries: list[SurveyEntry]
    config_digest: str
    failures: list[int] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.entries)

    @property
    def violations(self) -> int:
        return self.count - len(self.failures)

    @property
    def min_margin(self) -> float:
        return min(e.margin for e in self.entries)

    def to_dict(self, timing: bool = False) -> dict:
        """Serializable report; wall times are left out unless ``timing`` is set."""
        rows = []
        for e in self.entries:
            row = {"index": e.index, "margin": e.margin, "alpha": e.alpha, "state": e.state}
            if timing:
                row["wall_time"] = e.wall_time
            rows.append(row)
        return {"kind": self.kind, "version": __version__, "seed": self.seed,
                "count": self.count, "violations": self.violations,
                "failures": list(self.failures), "config_digest": self.config_digest,
                "entries": rows}


def _record(entries: list[SurveyEntry], failures: list[int], entry: SurveyEntry) -> None:
    entries.append(entry)
    if not entry.margin > VIOLATION_FLOOR:
        failures.append(entry.index)


def theorem2_batch(count: int, seed: int, margin: float = 1e-4) -> SurveyReport:
    """Explicit-measurement margins for random canonical non-symmetric states.

    ``margin`` is the minimal gap required in ``b > c > d``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    entries: list[SurveyEntry] = []
    failures: list[int] = []
    for i in range(count):
        st = canonical_sample(rng, require_nonsymmetric=True, margin=margin)
        t0 = time.perf_counter()
        try:
            res = verify_theorem2(st)
            m, alpha = res.margin, res.alpha
        except ValueError as exc:
            log.warning("sample %d: %s", i, exc)
            m, alpha = float("nan"), None
        state = dict(zip("abcde", st.coefficients), phi=st.phi)
        _record(entries, failures, SurveyEntry(i, m, alpha, state, time.perf_counter() - t0))
    return SurveyReport("theorem2_batch", seed, entries,
                        digest({"count": count, "seed": seed, "margin": margin}), failures)


def swap_parties(psi: np.ndarray, i: int, j: int) -> np.ndarray:
    axes = list(range(psi.ndim))
    axes[i], axes[j] = axes[j], axes[i]
    return psi.transpose(axes)


def symmetric_haar_state(rng: np.random.Generator, d: int = 3, n: int = 3,
                         pair: tuple[int, int] = (1, 2)) -> PureState:
    """Gaussian (Haar) pure state projected onto the symmetric subspace of ``pair``."""
    while True:
        g = rng.standard_normal(d**n) + 1j * rng.standard_normal(d**n)
        t = g.reshape((d,) * n)
        t = 0.5 * (t + swap_parties(t, *pair))
        norm = np.linalg.norm(t)
        if norm > 1e-8:
            return PureState(n, d, (t / norm).ravel())


def qutrit_survey(count: int, seed: int, cfg: OptimizationConfig = OptimizationConfig(),
                  include_ghz: bool = True) -> SurveyReport:
    """Optimize the star qutrit inequality on random B,C-symmetric states.

    Entry 0 is the GHZ fixture when ``include_ghz`` is set; random states follow.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    _, star = compose_qutrit_tripartite()
    states = [ghz_state(3, 3)] if include_ghz else []
    for i in range(count):
        states.append(symmetric_haar_state(restart_rng(seed, 10**6 + i)))
    entries: list[SurveyEntry] = []
    failures: list[int] = []
    for i, psi in enumerate(states):
        t0 = time.perf_counter()
        res = optimize_violation(star, psi, cfg)
        _record(entries, failures, SurveyEntry(i, res.value, None, psi.to_dict(),
                                               time.perf_counter() - t0))
        log.info("qutrit state %d margin %.3e", i, res.value)
    return SurveyReport("qutrit_survey", seed, entries,
                        digest({"count": count, "seed": seed, "cfg": cfg.digest(),
                                "ghz": include_ghz}), failures)


# --- nonlocality depth ------------------------------------------------------

def depth_demo(n: int, k: int, q: float = 0.0,
               cfg: OptimizationConfig = OptimizationConfig(),
               check_oracle: bool = True) -> dict:
    """Largest ``j <= k`` whose star depth inequality the noisy GHZ state violates.

    Violating the ``j``-producible bound certifies depth at least ``j + 1``.
    """
    if not 2 <= n <= 6:
        raise ValueError("depth_demo supports 2 <= n <= 6")
    if not 1 <= k < n:
        raise ValueError("need 1 <= k < n")
    state = ghz_state(n, 2)
    rows = []
    certified = 1
    for j in range(1, k + 1):
        ineq = star_depth(n, j)
        res = optimize_violation(ineq, state, cfg, tie_parties=True, noise=q)
        row = {"k": j, "gamma": ineq.gamma, "margin": res.value,
               "violated": res.value > VIOLATION_FLOOR}
        if check_oracle and n <= 4:
            b = kproducible_bound(ineq.margin_expression(), j)
            row["oracle_bound"] = b.float_value
            row["oracle_certified"] = b.certified
        rows.append(row)
        if row["violated"]:
            certified = max(certified, j + 1)
    return {"kind": "depth_demo", "version": __version__, "n": n, "k": k, "q": q,
            "config_digest": cfg.digest(), "rows": rows, "certified_depth": certified,
            "message": f"depth >= {certified}"}


def example4_report(pairs=((5, 3),)) -> list[dict]:
    return [example4_discrepancy(n, k) for n, k in pairs]


def write_json(payload: dict, out: Path) -> Path:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return out
