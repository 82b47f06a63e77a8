"""Single-qubit statevector simulation for the H -> Ry(theta) -> measure head.

Two backends are available: ``analytic`` returns exact probabilities from the
amplitudes, ``sampled`` estimates them from a finite number of shots drawn with
an explicit, seeded generator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ContractError, ValidationError

UNITARY_TOL = 1e-9
SHIFT = math.pi / 2


@dataclass(frozen=True)
class QubitState:
    """alpha|0> + beta|1>."""

    alpha: complex = 1.0 + 0j
    beta: complex = 0j

    @property
    def norm_sq(self) -> float:
        return abs(self.alpha) ** 2 + abs(self.beta) ** 2


@dataclass(frozen=True)
class Gate:
    name: str
    u: np.ndarray

    def deviation(self) -> float:
        """Largest entry of |U^dagger U - I|."""
        return float(np.max(np.abs(self.u.conj().T @ self.u - np.eye(2))))

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        return self.deviation() <= tol


@dataclass(frozen=True)
class MeasurementResult:
    p0: float
    p1: float


@dataclass(frozen=True)
class QuantumBackend:
    mode: str = "analytic"
    shots: int = 1024
    rng_seed: int = 0

    def __post_init__(self):
        if self.mode not in ("analytic", "sampled"):
            raise ValidationError(f"unknown quantum backend mode {self.mode!r}")
        if self.mode == "sampled" and self.shots < 1:
            raise ValidationError(f"sampled backend needs shots >= 1, got {self.shots}")

    @property
    def analytic(self) -> bool:
        return self.mode == "analytic"

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.rng_seed)


ANALYTIC = QuantumBackend()

_S = 1.0 / math.sqrt(2.0)
HADAMARD = Gate("H", np.array([[_S, _S], [_S, -_S]], dtype=complex))
PAULI_Y = Gate("Y", np.array([[0, -1j], [1j, 0]], dtype=complex))
IDENTITY = Gate("I", np.eye(2, dtype=complex))


def ry_gate(theta: float) -> Gate:
    """Rotation about the Y axis, exp(-i theta/2 Y)."""
    theta = float(theta)
    if not math.isfinite(theta):
        raise ValidationError(f"ry_gate: theta must be finite, got {theta}")
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return Gate("RY", np.array([[c, -s], [s, c]], dtype=complex))


def apply_gate(state: QubitState, gate: Gate) -> QubitState:
    if not gate.is_unitary():
        raise ContractError(f"gate {gate.name} is not unitary (deviation {gate.deviation():.3g})")
    u = gate.u
    a, b = state.alpha, state.beta
    return QubitState(complex(u[0, 0]) * a + complex(u[0, 1]) * b, complex(u[1, 0]) * a + complex(u[1, 1]) * b)


def run_circuit(gates: Iterable[Gate], state: QubitState | None = None) -> QubitState:
    state = QubitState() if state is None else state
    for gate in gates:
        state = apply_gate(state, gate)
    return state


def measure(state: QubitState) -> MeasurementResult:
    # Dividing by the norm removes rounding drift, so an equal superposition
    # reads exactly 0.5 even though (1/sqrt 2)^2 is not 0.5 in binary.
    a2 = abs(state.alpha) ** 2
    b2 = abs(state.beta) ** 2
    n = a2 + b2
    return MeasurementResult(a2 / n, b2 / n)


def _exact_p1(theta: float) -> float:
    state = run_circuit((HADAMARD, ry_gate(theta)))
    return min(max(measure(state).p1, 0.0), 1.0)


def sample_probability(theta: float, shots: int, seed: int | np.random.Generator) -> float:
    """Shot-noise estimate of P(1) for the H -> Ry(theta) circuit."""
    if shots < 1:
        raise ValidationError(f"shots must be >= 1, got {shots}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p1 = _exact_p1(theta)
    ones = int(np.count_nonzero(rng.random(shots) < p1))
    return ones / shots


def circuit_forward(theta: float, backend: QuantumBackend = ANALYTIC, rng: np.random.Generator | None = None) -> float:
    """P(1) after |0> -> H -> Ry(theta).

    In sampled mode the draws come from ``rng`` when given, otherwise from a
    fresh generator seeded with ``backend.rng_seed``.
    """
    if backend.analytic:
        return _exact_p1(theta)
    return sample_probability(theta, backend.shots, rng if rng is not None else backend.generator())


def param_shift_grad(theta: float) -> float:
    """d P(1) / d theta from two evaluations shifted by +-pi/2."""
    return 0.5 * (_exact_p1(theta + SHIFT) - _exact_p1(theta - SHIFT))
