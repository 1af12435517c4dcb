"""Bell scenarios, behaviors, quantum states and measurements.

Conventions used throughout the package:

* Parties, inputs and outcomes are 0-based.
* A behavior is stored as an array ``table`` of shape ``(d,)*n + (m,)*n`` so
  that ``table[a1, ..., an, x1, ..., xn] = p(a|x)``.
* The flat (wire) order has party 1 most significant and, within a party,
  the outcome digit before the input digit: the flat position of ``(a, x)``
  is the mixed-radix number with digits ``a1*m + x1, a2*m + x2, ...`` in base
  ``m*d``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .config import CAPS, TOL


class ScenarioError(ValueError):
    """Raised when objects from incompatible scenarios are combined."""


class InvalidBehaviorError(ValueError):
    pass


class InvalidStateError(ValueError):
    pass


class InvalidMeasurementError(ValueError):
    pass


class DimensionOverflowError(ValueError):
    pass


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Scenario:
    """``n`` parties, ``m`` inputs and ``d`` outcomes per party."""

    n: int
    m: int
    d: int

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.d < 2:
            raise ScenarioError(f"invalid scenario (n={self.n}, m={self.m}, d={self.d})")

    @property
    def size(self) -> int:
        return (self.m * self.d) ** self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.d,) * self.n + (self.m,) * self.n

    def outcome_tuples(self) -> Iterator[tuple[int, ...]]:
        return itertools.product(range(self.d), repeat=self.n)

    def input_tuples(self) -> Iterator[tuple[int, ...]]:
        return itertools.product(range(self.m), repeat=self.n)

    def events(self) -> Iterator[tuple[tuple[int, ...], tuple[int, ...]]]:
        """All ``(a, x)`` pairs in flat order."""
        for digits in itertools.product(range(self.m * self.d), repeat=self.n):
            yield tuple(dg // self.m for dg in digits), tuple(dg % self.m for dg in digits)

    def flat_index(self, a: Sequence[int], x: Sequence[int]) -> int:
        self.check_event(a, x)
        idx = 0
        for ak, xk in zip(a, x):
            idx = idx * (self.m * self.d) + ak * self.m + xk
        return idx

    def check_event(self, a: Sequence[int], x: Sequence[int]) -> None:
        if len(a) != self.n or len(x) != self.n:
            raise ScenarioError(f"event ({a}, {x}) does not have {self.n} parties")
        if any(not 0 <= ak < self.d for ak in a) or any(not 0 <= xk < self.m for xk in x):
            raise ScenarioError(f"event ({a}, {x}) out of range for {self}")

    def to_dict(self) -> dict:
        return {"n": self.n, "m": self.m, "d": self.d}

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        return cls(int(data["n"]), int(data["m"]), int(data["d"]))


@dataclass(frozen=True)
class NonSignalingReport:
    max_violation: float
    party: int | None       # party whose input leaks into the others' marginal
    inputs: tuple[int, ...] | None
    passed: bool


@dataclass(frozen=True, eq=False)
class Behavior:
    """The table of conditional probabilities ``p(a|x)``."""

    scenario: Scenario
    table: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        if table.shape != self.scenario.shape:
            raise InvalidBehaviorError(
                f"table shape {table.shape} does not match {self.scenario.shape}"
            )
        object.__setattr__(self, "table", _readonly(table))
        if self.validate:
            self.check()

    def __getitem__(self, event: tuple[Sequence[int], Sequence[int]]) -> float:
        a, x = event
        self.scenario.check_event(a, x)
        return float(self.table[tuple(a) + tuple(x)])

    def check(self, tol=TOL) -> None:
        t = self.table
        if t.min() < -tol.probability or t.max() > 1 + tol.probability:
            raise InvalidBehaviorError("probability outside [0, 1]")
        sums = t.reshape(-1, self.scenario.m**self.scenario.n).sum(axis=0)
        if np.max(np.abs(sums - 1)) > tol.normalization:
            raise InvalidBehaviorError("a conditional distribution is not normalized")
        report = check_nonsignaling(self, tol)
        if not report.passed:
            raise InvalidBehaviorError(
                f"signaling from party {report.party}: {report.max_violation:.3e}"
            )

    def flat(self) -> np.ndarray:
        """The probability vector in the documented flat order."""
        n = self.scenario.n
        axes = [ax for k in range(n) for ax in (k, n + k)]
        return self.table.transpose(axes).reshape(-1)

    @classmethod
    def from_flat(cls, scenario: Scenario, vec: Sequence[float], validate: bool = True):
        n, m, d = scenario.n, scenario.m, scenario.d
        arr = np.asarray(vec, dtype=float).reshape((d, m) * n)
        inv = [2 * k for k in range(n)] + [2 * k + 1 for k in range(n)]
        return cls(scenario, arr.transpose(inv), validate=validate)

    @classmethod
    def from_function(cls, scenario: Scenario, prob, validate: bool = True):
        table = np.zeros(scenario.shape)
        for a in scenario.outcome_tuples():
            for x in scenario.input_tuples():
                table[a + x] = prob(a, x)
        return cls(scenario, table, validate=validate)

    @classmethod
    def uniform(cls, scenario: Scenario) -> "Behavior":
        return cls(scenario, np.full(scenario.shape, float(scenario.d) ** -scenario.n))

    @classmethod
    def deterministic(cls, scenario: Scenario, strategy: Sequence[Sequence[int]]):
        """``strategy[k][x]`` is the outcome of party ``k`` on input ``x``."""
        table = np.ones(scenario.shape)
        n = scenario.n
        for k in range(n):
            local = np.zeros((scenario.d, scenario.m))
            for x, a in enumerate(strategy[k]):
                local[a, x] = 1.0
            shape = [1] * (2 * n)
            shape[k], shape[n + k] = scenario.d, scenario.m
            table = table * local.reshape(shape)
        return cls(scenario, table)

    def mix(self, other: "Behavior", weight: float) -> "Behavior":
        """``(1 - weight) * self + weight * other``."""
        if other.scenario != self.scenario:
            raise ScenarioError("cannot mix behaviors from different scenarios")
        return Behavior(self.scenario, (1 - weight) * self.table + weight * other.table)

    def to_dict(self) -> dict:
        return {
            "kind": "behavior",
            "scenario": self.scenario.to_dict(),
            "data": [float(v) for v in self.flat()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Behavior":
        return cls.from_flat(Scenario.from_dict(data["scenario"]), data["data"])


def check_nonsignaling(b: Behavior, tol=TOL) -> NonSignalingReport:
    """Largest change of the other parties' marginal when one party's input changes.

    For each party ``k`` the outcome ``a_k`` is summed out; the remaining
    table must not depend on ``x_k``. This implies that every marginal, in
    particular every single-party one, is independent of remote inputs.
    """
    sc = b.scenario
    n = sc.n
    worst, worst_party, worst_x = 0.0, None, None
    for k in range(n):
        marg = b.table.sum(axis=k)          # axes: a_{-k}, x_0..x_{n-1}
        xk_axis = n - 1 + k
        ref = np.take(marg, [0], axis=xk_axis)
        diff = np.abs(marg - ref)
        if diff.size and diff.max() > worst:
            worst = float(diff.max())
            worst_party = k
            loc = np.unravel_index(int(np.argmax(diff)), diff.shape)
            worst_x = tuple(int(v) for v in loc[n - 1:])
    return NonSignalingReport(worst, worst_party, worst_x, worst <= tol.nonsignaling)


def _complex_list(arr: np.ndarray) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(arr).reshape(-1)]


def _from_complex_list(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def _check_dimension(d: int, n: int) -> None:
    if d**n > CAPS.hilbert_dimension:
        raise DimensionOverflowError(
            f"dimension {d}^{n} exceeds the cap {CAPS.hilbert_dimension}"
        )


@dataclass(frozen=True, eq=False)
class PureState:
    n: int
    d: int
    amplitudes: np.ndarray

    def __post_init__(self):
        _check_dimension(self.d, self.n)
        amp = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amp.shape != (self.d**self.n,):
            raise InvalidStateError(f"expected {self.d**self.n} amplitudes, got {amp.size}")
        if abs(np.vdot(amp, amp).real - 1) > TOL.state_norm:
            raise InvalidStateError("state is not normalized")
        object.__setattr__(self, "amplitudes", _readonly(amp))

    @classmethod
    def normalized(cls, n: int, d: int, amplitudes) -> "PureState":
        amp = np.asarray(amplitudes, dtype=complex).reshape(-1)
        return cls(n, d, amp / np.linalg.norm(amp))

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((self.d,) * self.n)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(self.n, self.d, np.outer(self.amplitudes, self.amplitudes.conj()))

    def permute_parties(self, order: Sequence[int]) -> "PureState":
        """Party ``k`` of the result is party ``order[k]`` of ``self``."""
        return PureState(self.n, self.d, self.tensor().transpose(order).reshape(-1))

    def to_dict(self) -> dict:
        return {
            "kind": "pure_state",
            "scenario": {"n": self.n, "d": self.d},
            "data": _complex_list(self.amplitudes),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PureState":
        sc = data["scenario"]
        return cls(int(sc["n"]), int(sc["d"]), _from_complex_list(data["data"]))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    n: int
    d: int
    matrix: np.ndarray

    def __post_init__(self):
        _check_dimension(self.d, self.n)
        dim = self.d**self.n
        rho = np.asarray(self.matrix, dtype=complex)
        if rho.shape != (dim, dim):
            raise InvalidStateError(f"expected a {dim}x{dim} matrix, got {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > TOL.hermitian:
            raise InvalidStateError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1) > TOL.trace:
            raise InvalidStateError("density matrix does not have unit trace")
        if np.linalg.eigvalsh(rho).min() < TOL.eigenvalue:
            raise InvalidStateError("density matrix is not positive semidefinite")
        object.__setattr__(self, "matrix", _readonly(rho))

    @property
    def dim(self) -> int:
        return self.d**self.n

    def to_dict(self) -> dict:
        return {
            "kind": "density_matrix",
            "scenario": {"n": self.n, "d": self.d},
            "data": _complex_list(self.matrix),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DensityMatrix":
        sc = data["scenario"]
        n, d = int(sc["n"]), int(sc["d"])
        return cls(n, d, _from_complex_list(data["data"]).reshape(d**n, d**n))


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Effects ``effects[k, x, a]`` (a ``dim x dim`` matrix) for party k, input x, outcome a."""

    effects: np.ndarray

    def __post_init__(self):
        eff = np.asarray(self.effects, dtype=complex)
        if eff.ndim != 5 or eff.shape[3] != eff.shape[4]:
            raise InvalidMeasurementError(
                "effects must have shape (parties, inputs, outcomes, dim, dim)"
            )
        total = eff.sum(axis=2)
        eye = np.eye(eff.shape[3])
        if np.max(np.abs(total - eye)) > TOL.completeness:
            raise InvalidMeasurementError("effects do not sum to the identity")
        if np.max(np.abs(eff - eff.conj().swapaxes(-1, -2))) > TOL.completeness:
            raise InvalidMeasurementError("an effect is not Hermitian")
        if np.linalg.eigvalsh(eff).min() < -TOL.completeness:
            raise InvalidMeasurementError("an effect is not positive semidefinite")
        object.__setattr__(self, "effects", _readonly(eff))

    @property
    def n(self) -> int:
        return self.effects.shape[0]

    @property
    def m(self) -> int:
        return self.effects.shape[1]

    @property
    def d(self) -> int:
        return self.effects.shape[2]

    @property
    def dim(self) -> int:
        return self.effects.shape[3]

    @property
    def scenario(self) -> Scenario:
        return Scenario(self.n, self.m, self.d)

    @classmethod
    def from_kets(cls, kets) -> "MeasurementSet":
        """Rank-1 projective measurements from kets of shape (parties, inputs, outcomes, dim)."""
        kets = np.asarray(kets, dtype=complex)
        return cls(np.einsum("kxai,kxaj->kxaij", kets, kets.conj()))

    @classmethod
    def from_bases(cls, bases) -> "MeasurementSet":
        """Projective measurements from unitaries: outcome ``a`` is column ``a``."""
        bases = np.asarray(bases, dtype=complex)
        return cls.from_kets(bases.swapaxes(-1, -2))

    @classmethod
    def binary_from_kets(cls, kets0) -> "MeasurementSet":
        """Two-outcome measurements ``{|v><v|, 1 - |v><v|}`` from kets of shape (parties, inputs, dim)."""
        kets0 = np.asarray(kets0, dtype=complex)
        kets0 = kets0 / np.linalg.norm(kets0, axis=-1, keepdims=True)
        p0 = np.einsum("kxi,kxj->kxij", kets0, kets0.conj())
        eye = np.broadcast_to(np.eye(kets0.shape[-1]), p0.shape)
        return cls(np.stack([p0, eye - p0], axis=2))

    def to_dict(self) -> dict:
        n, m, d, dim = self.effects.shape[:4]
        return {
            "kind": "measurement_set",
            "scenario": {"n": n, "m": m, "d": d},
            "dim": dim,
            "data": _complex_list(self.effects),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MeasurementSet":
        sc = Scenario.from_dict(data["scenario"])
        dim = int(data["dim"])
        eff = _from_complex_list(data["data"]).reshape(sc.n, sc.m, sc.d, dim, dim)
        return cls(eff)


def ghz_state(n: int, d: int) -> PureState:
    """``(1/sqrt(d)) sum_i |i...i>``."""
    if n < 2 or d < 2:
        raise ValueError("GHZ state needs n >= 2 and d >= 2")
    _check_dimension(d, n)
    amp = np.zeros(d**n, dtype=complex)
    step = sum(d**k for k in range(n))
    amp[np.arange(d) * step] = 1 / np.sqrt(d)
    return PureState(n, d, amp)


def _as_density(rho: PureState | DensityMatrix) -> DensityMatrix:
    return rho.density() if isinstance(rho, PureState) else rho


def mix_white_noise(rho: PureState | DensityMatrix, q: float) -> DensityMatrix:
    """``(1 - q) rho + q * identity / dim``."""
    if not 0 <= q <= 1:
        raise ValueError(f"noise weight q={q} outside [0, 1]")
    rho = _as_density(rho)
    dim = rho.dim
    return DensityMatrix(rho.n, rho.d, (1 - q) * rho.matrix + q * np.eye(dim) / dim)


def behavior_table(rho: PureState | DensityMatrix, effects: np.ndarray) -> np.ndarray:
    """Born-rule table ``Tr[rho (x)_k E_k]`` without validation, shape ``(d,)*n + (m,)*n``.

    ``effects`` has shape (parties, inputs, outcomes, dim, dim).
    """
    n = effects.shape[0]
    if isinstance(rho, PureState):
        # contract ket and bra sides separately: p = <psi| E |psi>
        t = rho.tensor()
        for k in range(n):
            # E_k[x, a, i, j] psi[..., j, ...] -> new trailing axes (x, a)
            t = np.tensordot(t, effects[k], axes=([0], [3]))
            # axes now: rest..., x_k, a_k, i_k  -> move i_k to the end
        # t axes: (x0, a0, i0, x1, a1, i1, ...)
        psi_c = rho.tensor().conj()
        out = np.tensordot(t, psi_c, axes=([3 * k + 2 for k in range(n)], list(range(n))))
    else:
        r = rho.matrix.reshape((rho.d,) * (2 * n))
        out = r
        for k in range(n):
            # leading axes of out: i_k..i_{n-1}, j_k..j_{n-1}, then (x, a) pairs so far
            out = np.tensordot(out, effects[k], axes=([0, n - k], [3, 2]))
    # out axes: (x0, a0, x1, a1, ...)
    perm = [2 * k + 1 for k in range(n)] + [2 * k for k in range(n)]
    table = out.transpose(perm)
    if np.max(np.abs(table.imag)) > 1e-9:
        raise InvalidMeasurementError("Born rule produced complex probabilities")
    return table.real


def born_behavior(rho: PureState | DensityMatrix, meas: MeasurementSet) -> Behavior:
    """``p(a|x) = Tr[rho (x)_k M^(k)_{a_k|x_k}]``."""
    if rho.n != meas.n or rho.d != meas.dim:
        raise ScenarioError(
            f"state ({rho.n} parties, local dim {rho.d}) does not match measurements "
            f"({meas.n} parties, local dim {meas.dim})"
        )
    return Behavior(meas.scenario, behavior_table(rho, meas.effects))


def pr_box() -> Behavior:
    """The PR box ``p(ab|xy) = 1/2`` iff ``a xor b = x*y``."""
    sc = Scenario(2, 2, 2)
    return Behavior.from_function(sc, lambda a, x: 0.5 if (a[0] ^ a[1]) == x[0] * x[1] else 0.0)
