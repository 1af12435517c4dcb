"""Quantum violations: the three-qubit canonical form, the explicit measurement
construction that violates the improved inequality, and numerical optimization
of Bell margins over projective measurements."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize

from .config import TOL
from .expressions import BellExpression, ComposedInequality, improved00
from .scenario import (Behavior, DensityMatrix, MeasurementSet, PureState, behavior_table,
                       born_behavior)

log = logging.getLogger(__name__)


class SignChangeError(ValueError):
    """The root bracket for the measurement angle does not change sign."""


class CanonicalizationError(RuntimeError):
    pass


# --- canonical three-qubit states ------------------------------------------

@dataclass(frozen=True)
class CanonicalThreeQubit:
    """``a e^{i phi}|000> + b|011> + c|101> + d|110> + e|111>``."""

    a: float
    b: float
    c: float
    d: float
    e: float
    phi: float = 0.0

    def __post_init__(self):
        coeffs = (self.a, self.b, self.c, self.d, self.e)
        if min(coeffs) < 0:
            raise ValueError("canonical coefficients must be non-negative")
        if abs(sum(v * v for v in coeffs) - 1) > TOL.state_norm:
            raise ValueError("canonical coefficients are not normalized")
        if self.a < max(coeffs[1:]) - TOL.state_norm:
            raise ValueError("a must dominate b, c, d, e")

    @property
    def coefficients(self) -> tuple[float, float, float, float, float]:
        return self.a, self.b, self.c, self.d, self.e

    def is_nonsymmetric(self, margin: float = 0.0) -> bool:
        """Strict ordering ``b > c > d`` (no two parties can be exchanged)."""
        return self.b - self.c > margin and self.c - self.d > margin

    def state(self) -> PureState:
        amp = np.zeros(8, dtype=complex)
        amp[0] = self.a * np.exp(1j * self.phi)
        amp[3], amp[5], amp[6], amp[7] = self.b, self.c, self.d, self.e
        return PureState(3, 2, amp)


def canonical_sample(rng: np.random.Generator, require_nonsymmetric: bool = True,
                     margin: float = 1e-6, zero_e: bool = False) -> CanonicalThreeQubit:
    """Random canonical coefficients; ``a`` is the largest, ``b >= c >= d``.

    With ``require_nonsymmetric`` the draw is repeated until
    ``b - c >= margin`` and ``c - d >= margin``.
    """
    while True:
        v = np.abs(rng.standard_normal(5))
        if zero_e:
            v[4] = 0.0
        v /= np.linalg.norm(v)
        i = int(np.argmax(v))
        v[0], v[i] = v[i], v[0]
        a, e = v[0], v[4]
        b, c, d = sorted(v[1:4], reverse=True)
        phi = float(rng.uniform(0, 2 * np.pi))
        if require_nonsymmetric and not (b - c >= margin and c - d >= margin):
            continue
        # renormalize against rounding
        s = math.sqrt(a * a + b * b + c * c + d * d + e * e)
        return CanonicalThreeQubit(a / s, b / s, c / s, d / s, e / s, phi)


# --- explicit measurements ---------------------------------------------------

def appendix_etas(st: CanonicalThreeQubit, alpha: float) -> tuple[float, float, float]:
    a, b, c, e = st.a, st.b, st.c, st.e
    s, co = math.sin(alpha), math.cos(alpha)
    eta1 = math.sqrt(c**4 * s**2 + a**4 * co**2)
    eta2 = math.sqrt(c**2 * s**2 + (b * co + e * s) ** 2)
    eta3 = math.sqrt(a**2 * co**2 + c**2 * s**2)
    return eta1, eta2, eta3


def appendix_kets(st: CanonicalThreeQubit, alpha: float) -> np.ndarray:
    """Outcome-0 kets, shape (party, input, 2)."""
    if not 0 <= alpha <= math.pi / 2:
        raise ValueError(f"alpha={alpha} outside [0, pi/2]")
    a, b, c, e = st.a, st.b, st.c, st.e
    s, co = math.sin(alpha), math.cos(alpha)
    etas = appendix_etas(st, alpha)
    if min(etas) < 1e-300:
        raise ValueError("normalization constant underflow")
    eta1, eta2, eta3 = etas
    return np.array([
        [[co, s], [-c**2 * s / eta1, a**2 * co / eta1]],
        [[1, 0], [c * s / eta2, (b * co + e * s) / eta2]],
        [[0, 1], [np.exp(1j * st.phi) * a * co / eta3, c * s / eta3]],
    ], dtype=complex)


def appendix_measurements(st: CanonicalThreeQubit, alpha: float) -> MeasurementSet:
    """Projective measurements ``{|M><M|, 1 - |M><M|}`` for every party and input."""
    return MeasurementSet.binary_from_kets(appendix_kets(st, alpha))


def root_function(st: CanonicalThreeQubit, alpha: float) -> float:
    """The bracketed amplitude whose square gives ``p(000|110)`` up to normalization."""
    a, b, c, e = st.a, st.b, st.c, st.e
    s, co = math.sin(alpha), math.cos(alpha)
    return a * a * c * c * s * co + (a * a * e * co - b * c * c * s) * (b * co + e * s)


def appendix_probabilities(st: CanonicalThreeQubit, alpha: float) -> dict[str, float]:
    """Closed forms of ``p(000|000)``, ``p(100|100)`` and ``p(000|110)``."""
    c = st.c
    s = math.sin(alpha)
    eta1, eta2, _ = appendix_etas(st, alpha)
    return {
        "000|000": c * c * s * s,
        "100|100": c**6 * s * s / eta1**2,
        "000|110": root_function(st, alpha) ** 2 / (eta1**2 * eta2**2),
    }


def alpha_closed_form(st: CanonicalThreeQubit) -> float | None:
    """Positive root via ``tan(alpha)``; ``None`` when the quadratic is degenerate."""
    a, b, c, e = st.a, st.b, st.c, st.e
    lead = b * c * c * e
    if lead < 1e-14:
        return None
    mid = a * a * c * c + a * a * e * e - b * b * c * c
    disc = mid * mid + 4 * lead * a * a * e * b
    t = (mid + math.sqrt(disc)) / (2 * lead)
    return math.atan(t)


def solve_alpha(st: CanonicalThreeQubit, tol: float = TOL.alpha_root) -> float:
    """Angle making ``p(000|110)`` vanish (``pi/4`` when ``e = 0``), by bisection."""
    if st.e == 0:
        return math.pi / 4
    lo, hi = 0.0, math.pi / 2
    flo, fhi = root_function(st, lo), root_function(st, hi)
    if not (flo > 0 and fhi < 0):
        raise SignChangeError(f"f(0)={flo:.3e}, f(pi/2)={fhi:.3e}: no sign change")
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = root_function(st, mid)
        if abs(fm) <= tol or hi - lo < 1e-16:
            break
        if fm > 0:
            lo = mid
        else:
            hi = mid
    return mid


def e_zero_closed_form(st: CanonicalThreeQubit) -> float:
    """``(1/2)(b^2+c^2)(a^2-c^2)(a^2+c^2) - c^2 (a^2-b^2)^2``."""
    a2, b2, c2 = st.a**2, st.b**2, st.c**2
    return 0.5 * (b2 + c2) * (a2 - c2) * (a2 + c2) - c2 * (a2 - b2) ** 2


@dataclass(frozen=True, eq=False)
class Theorem2Result:
    margin: float
    alpha: float
    behavior: Behavior
    closed_form_margin: float


def verify_theorem2(st: CanonicalThreeQubit, alpha: float | None = None) -> Theorem2Result:
    """Margin of the three-party improved inequality under the explicit measurements.

    For ``e = 0`` the margin equals ``c^2 K / (4 eta1^2 eta2^2)`` where ``K`` is
    :func:`e_zero_closed_form`; otherwise the closed form is the first two
    terms, the third vanishing at the returned angle.
    """
    if alpha is None:
        alpha = solve_alpha(st)
    beh = born_behavior(st.state(), appendix_measurements(st, alpha))
    margin = improved00(3).margin(beh)
    probs = appendix_probabilities(st, alpha)
    closed = probs["000|000"] - probs["100|100"] - probs["000|110"]
    if st.e == 0 and math.isclose(alpha, math.pi / 4):
        eta1, eta2, _ = appendix_etas(st, alpha)
        closed = st.c**2 * e_zero_closed_form(st) / (4 * eta1**2 * eta2**2)
    return Theorem2Result(margin, alpha, beh, closed)


# --- canonicalization --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CanonicalForm:
    coefficients: CanonicalThreeQubit
    unitaries: np.ndarray        # U_k with (U_1 x U_2 x U_3)|psi> in canonical support
    permutation: tuple[int, int, int]   # new party k is old party permutation[k]
    residual: float              # weight left on |001>, |010>, |100>
    overlap: float


def _best_product_state(t: np.ndarray, rng: np.random.Generator, restarts: int,
                        iters: int = 2000) -> tuple[float, list[np.ndarray]]:
    """Maximize ``|<u1 u2 u3|psi>|`` by alternating updates from random starts."""
    best, best_u = -1.0, None
    starts = [[np.eye(2)[i], np.eye(2)[j], np.eye(2)[k]]
              for i in range(2) for j in range(2) for k in range(2)]
    for _ in range(restarts):
        u = [rng.standard_normal(2) + 1j * rng.standard_normal(2) for _ in range(3)]
        starts.append([v / np.linalg.norm(v) for v in u])
    for u in starts:
        u = [np.asarray(v, dtype=complex) for v in u]
        prev = -1.0
        for _ in range(iters):
            u[0] = np.einsum("ijk,j,k->i", t, u[1].conj(), u[2].conj())
            u[0] /= np.linalg.norm(u[0]) or 1.0
            u[1] = np.einsum("ijk,i,k->j", t, u[0].conj(), u[2].conj())
            u[1] /= np.linalg.norm(u[1]) or 1.0
            v = np.einsum("ijk,i,j->k", t, u[0].conj(), u[1].conj())
            ov = float(np.linalg.norm(v))
            u[2] = v / ov if ov > 0 else u[2]
            if ov - prev < 1e-16:
                break
            prev = ov
        if ov > best + 1e-13:
            best, best_u = ov, [w.copy() for w in u]
    return best, best_u


def _apply_local(t: np.ndarray, us) -> np.ndarray:
    return np.einsum("ai,bj,ck,ijk->abc", us[0], us[1], us[2], t)


def canonicalize(psi: PureState, rng: np.random.Generator | None = None,
                 restarts: int = 20, zero_tol: float = 1e-9) -> CanonicalForm:
    """Generalized Schmidt form of a three-qubit state.

    The product state of maximal overlap becomes ``|000>``; stationarity then
    removes the ``|001>, |010>, |100>`` components, and local phases make the
    remaining coefficients real except for ``|000>``. Parties are finally
    permuted so that ``b >= c >= d``.
    """
    if psi.n != 3 or psi.d != 2:
        raise ValueError("canonicalize expects a three-qubit state")
    rng = np.random.default_rng(0) if rng is None else rng
    t = psi.tensor()
    overlap, u = _best_product_state(t, rng, restarts)
    # first row <u|, second row the bra of the orthogonal ket
    us = [np.array([v.conj(), [-v[1], v[0]]]) for v in u]
    s = _apply_local(t, us)
    residual = float(abs(s[0, 0, 1]) ** 2 + abs(s[0, 1, 0]) ** 2 + abs(s[1, 0, 0]) ** 2)
    if residual > TOL.canonical_residual:
        raise CanonicalizationError(f"residual weight {residual:.2e} after {restarts} restarts")

    # local phases: rows are (global, u1, u2, u3) for |000>, |011>, |101>, |110>, |111>
    rows = {(0, 0, 0): (1, 0, 0, 0), (0, 1, 1): (1, 0, 1, 1), (1, 0, 1): (1, 1, 0, 1),
            (1, 1, 0): (1, 1, 1, 0), (1, 1, 1): (1, 1, 1, 1)}
    present = [k for k in rows if k != (0, 0, 0) and abs(s[k]) > zero_tol]
    eqs = present + ([(0, 0, 0)] if len(present) < 4 else [])
    A = np.array([rows[k] for k in eqs], dtype=float)
    rhs = np.array([-np.angle(s[k]) for k in eqs])
    sol = np.linalg.lstsq(A, rhs, rcond=None)[0] if eqs else np.zeros(4)
    g, ph = sol[0], sol[1:]
    phases = [np.diag([np.exp(1j * g), np.exp(1j * (g + ph[0]))]),
              np.diag([1, np.exp(1j * ph[1])]),
              np.diag([1, np.exp(1j * ph[2])])]
    us = [p @ w for p, w in zip(phases, us)]
    s = _apply_local(t, us)

    coeff = {"b": abs(s[0, 1, 1]), "c": abs(s[1, 0, 1]), "d": abs(s[1, 1, 0])}
    order = tuple(int(i) for i in np.argsort([-coeff["b"], -coeff["c"], -coeff["d"]], kind="stable"))
    s = s.transpose(order)
    us = [us[i] for i in order]
    a0 = s[0, 0, 0]
    phi = float(np.angle(a0)) % (2 * np.pi) if abs(a0) > 0 else 0.0
    if len(present) < 4:
        phi = 0.0
    vals = np.array([abs(a0), s[0, 1, 1].real, s[1, 0, 1].real, s[1, 1, 0].real, s[1, 1, 1].real])
    vals = np.clip(vals, 0.0, None)
    vals /= np.linalg.norm(vals)
    can = CanonicalThreeQubit(*map(float, vals), phi=phi)
    return CanonicalForm(can, np.array(us), order, residual, overlap)


# --- measurement parametrizations ---------------------------------------------

def qubit_kets(angles: np.ndarray) -> np.ndarray:
    """``cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>`` for each ``(theta, phi)`` row."""
    th, ph = angles[..., 0], angles[..., 1]
    return np.stack([np.cos(th / 2) + 0j, np.exp(1j * ph) * np.sin(th / 2)], axis=-1)


def su_generators(d: int) -> np.ndarray:
    """Generalized Gell-Mann matrices (``d^2 - 1`` traceless Hermitian generators)."""
    gens = []
    for i in range(d):
        for j in range(i + 1, d):
            h = np.zeros((d, d), dtype=complex)
            h[i, j] = h[j, i] = 1
            gens.append(h)
            h = np.zeros((d, d), dtype=complex)
            h[i, j], h[j, i] = -1j, 1j
            gens.append(h)
    for l in range(1, d):
        h = np.zeros((d, d), dtype=complex)
        h[np.arange(l), np.arange(l)] = 1
        h[l, l] = -l
        gens.append(h * math.sqrt(2 / (l * (l + 1))))
    return np.array(gens)


def unitaries(params: np.ndarray, gens: np.ndarray) -> np.ndarray:
    """``exp(i sum_j params_j G_j)`` for each parameter row (batched via eigh)."""
    H = np.tensordot(params, gens, axes=([-1], [0]))
    w, V = np.linalg.eigh(H)
    return np.einsum("...ij,...j,...kj->...ik", V, np.exp(1j * w), V.conj())


@dataclass(frozen=True)
class OptimizationConfig:
    restarts: int = 50
    max_iter: int = 4000
    seed: int = 0
    tol: float = 1e-10
    bounds: tuple[float, float] = (-math.pi, math.pi)   # range of random starting points
    # "auto": quasi-Newton stage before the simplex for qudits, simplex only for qubits
    method: str = "auto"

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.method not in ("auto", "nelder-mead", "lbfgs-nm"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "OptimizationConfig":
        data = dict(data)
        if "bounds" in data:
            data["bounds"] = tuple(data["bounds"])
        return cls(**data)


class MeasurementModel:
    """Maps a flat parameter vector to rank-1 projective measurements.

    Qubits: two angles per (party, input). Other dimensions: ``d^2 - 1``
    generator weights per (party, input), the basis being the columns of
    ``exp(i H)``. With ``tie_parties`` parties 2..n share one set of settings.
    """

    def __init__(self, n: int, m: int, d: int, tie_parties: bool = False):
        self.n, self.m, self.d = n, m, d
        self.tie = tie_parties
        self.groups = 2 if tie_parties else n
        self.per_setting = 2 if d == 2 else d * d - 1
        self.size = self.groups * m * self.per_setting
        self._gens = None if d == 2 else su_generators(d)

    def kets(self, params: np.ndarray) -> np.ndarray:
        """Kets of shape (party, input, outcome, dim)."""
        p = np.asarray(params, dtype=float).reshape(self.groups, self.m, self.per_setting)
        if self.d == 2:
            k0 = qubit_kets(p)
            k1 = np.stack([-k0[..., 1].conj(), k0[..., 0].conj()], axis=-1)
            kets = np.stack([k0, k1], axis=2)
        else:
            U = unitaries(p, self._gens)
            kets = U.swapaxes(-1, -2)
        if self.tie:
            kets = np.concatenate([kets[:1], np.repeat(kets[1:], self.n - 1, axis=0)])
        return kets

    def effects(self, params: np.ndarray) -> np.ndarray:
        k = self.kets(params)
        return np.einsum("kxai,kxaj->kxaij", k, k.conj())

    def measurements(self, params: np.ndarray) -> MeasurementSet:
        return MeasurementSet.from_kets(self.kets(params))


def _pure_table(psi: np.ndarray, kets: np.ndarray) -> np.ndarray:
    """``|<v_1 ... v_n|psi>|^2`` for all outcome/input tuples; shape ``(d,)*n + (m,)*n``."""
    n = kets.shape[0]
    t = psi
    for k in range(n):
        t = np.tensordot(t, kets[k].conj(), axes=([0], [2]))
    # axes: (x0, a0, x1, a1, ...)
    p = np.abs(t) ** 2
    perm = [2 * k + 1 for k in range(n)] + [2 * k for k in range(n)]
    return p.transpose(perm)


def noise_value(expr: BellExpression) -> float:
    """Value on the maximally mixed state under any rank-1 projective measurements."""
    sc = expr.scenario
    return float(sum(expr.terms.values())) / sc.d ** sc.n


def _margin_function(expr: BellExpression, rho, model: MeasurementModel, noise: float = 0.0):
    A, X, c = expr.index_arrays()
    idx = tuple(A.T) + tuple(X.T)
    if isinstance(rho, PureState):
        psi = rho.tensor()
        h = noise * noise_value(expr)

        def value(params):
            pure = float(np.dot(c, _pure_table(psi, model.kets(params))[idx]))
            return (1 - noise) * pure + h
    else:
        def value(params):
            return float(np.dot(c, behavior_table(rho, model.effects(params))[idx]))
    return value


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    value: float
    params: np.ndarray
    measurements: MeasurementSet
    converged: bool
    restart_values: tuple[float, ...]
    evaluations: int

    def prefix_best(self) -> list[float]:
        """Best value after the first ``r`` restarts, for ``r = 1..restarts``."""
        return list(np.maximum.accumulate(self.restart_values))


def restart_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for one restart; depends only on ``(seed, index)``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def optimize_violation(ineq: ComposedInequality | BellExpression,
                       rho: PureState | DensityMatrix,
                       cfg: OptimizationConfig = OptimizationConfig(),
                       tie_parties: bool = False,
                       starts: list[np.ndarray] | None = None,
                       noise: float = 0.0) -> OptimizationResult:
    """Maximize the margin (or expression value) over projective measurements.

    Nelder-Mead from ``cfg.restarts`` seeded random points, plus any
    ``starts`` supplied by the caller (evaluated first). For qudits each
    restart first runs L-BFGS-B with finite differences (see ``cfg.method``). For a pure ``rho``,
    ``noise=q`` evaluates the white-noise mixture ``(1-q) rho + q 1/d^n``
    exactly; the optimum is the same as running on ``mix_white_noise``.
    """
    if not 0 <= noise <= 1:
        raise ValueError("noise must lie in [0, 1]")
    if noise and not isinstance(rho, PureState):
        raise ValueError("noise mixing is only applied to pure states; mix explicitly instead")
    expr = ineq.margin_expression() if isinstance(ineq, ComposedInequality) else ineq
    sc = expr.scenario
    if rho.n != sc.n or rho.d != sc.d:
        raise ValueError(f"state ({rho.n} parties, dim {rho.d}) does not fit {sc}")
    model = MeasurementModel(sc.n, sc.m, sc.d, tie_parties)
    value = _margin_function(expr, rho, model, noise)
    lo, hi = cfg.bounds
    if sc.d == 2:
        scale = np.tile([np.pi, 2 * np.pi], model.size // 2)
        offset = np.zeros(model.size)
    else:
        scale = np.full(model.size, hi - lo)
        offset = np.full(model.size, lo)

    gradient_stage = cfg.method == "lbfgs-nm" or (cfg.method == "auto" and sc.d > 2)

    def run(x0):
        nfev = 0
        if gradient_stage:
            # finite-difference L-BFGS-B; the simplex below polishes its end point
            pre = minimize(lambda p: -value(p), x0, method="L-BFGS-B")
            x0, nfev = pre.x, int(pre.nfev)
        res = minimize(lambda p: -value(p), x0, method="Nelder-Mead",
                       options={"maxiter": cfg.max_iter, "maxfev": cfg.max_iter,
                                "xatol": cfg.tol, "fatol": cfg.tol,
                                "adaptive": model.size > 10})
        return -float(res.fun), np.asarray(res.x), bool(res.success), nfev + int(res.nfev)

    values, best = [], None
    evals = 0
    jobs = [np.asarray(s, dtype=float) for s in (starts or [])]
    jobs += [offset + scale * restart_rng(cfg.seed, r).random(model.size)
             for r in range(cfg.restarts)]
    for i, x0 in enumerate(jobs):
        val, x, ok, nfev = run(x0)
        evals += nfev
        if i >= len(starts or []):
            values.append(val)
        if best is None or val > best[0]:
            best = (val, x, ok)
    val, x, ok = best
    return OptimizationResult(val, x, model.measurements(x), ok, tuple(values), evals)
