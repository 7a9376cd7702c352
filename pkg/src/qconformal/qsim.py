"""Exact two-qubit statevector simulation and random circuit generation.

Amplitude ordering: index = 2 * (bit of qubit 0) + (bit of qubit 1), so the
vector reads (a00, a01, a10, a11) with qubit 0 as the left bit.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, OperandError
from .rng import Xoshiro256, iter_uniform_batch

NUM_QUBITS = 2
TWO_PI = 2.0 * math.pi


class GateKind(enum.Enum):
    H = "H"
    X = "X"
    Y = "Y"
    Z = "Z"
    S = "S"
    Sdg = "Sdg"
    T = "T"
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    CX = "CX"

    @property
    def is_rotation(self) -> bool:
        return self in _ROTATIONS

    @property
    def num_qubits(self) -> int:
        return 2 if self is GateKind.CX else 1


_ROTATIONS = frozenset({GateKind.RX, GateKind.RY, GateKind.RZ})
GATE_SET: tuple[GateKind, ...] = tuple(GateKind)

_S2 = 1.0 / math.sqrt(2.0)
_FIXED = {
    GateKind.H: np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex),
    GateKind.X: np.array([[0, 1], [1, 0]], dtype=complex),
    GateKind.Y: np.array([[0, -1j], [1j, 0]], dtype=complex),
    GateKind.Z: np.array([[1, 0], [0, -1]], dtype=complex),
    GateKind.S: np.array([[1, 0], [0, 1j]], dtype=complex),
    GateKind.Sdg: np.array([[1, 0], [0, -1j]], dtype=complex),
    GateKind.T: np.array([[1, 0], [0, np.exp(1j * math.pi / 4)]], dtype=complex),
}
# Basis order (00, 01, 10, 11) with the first listed qubit as control.
_CX_01 = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
_CX_10 = np.array(
    [[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex
)


def rotation_matrix(kind: GateKind, theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    if kind is GateKind.RX:
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if kind is GateKind.RY:
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind is GateKind.RZ:
        return np.array(
            [[complex(c, -s), 0], [0, complex(c, s)]], dtype=complex
        )
    raise ValueError(f"{kind} is not a rotation")


@dataclass(frozen=True)
class Gate:
    """A gate kind placed on qubit operands, with an angle for rotations."""

    kind: GateKind
    qubits: tuple[int, ...]
    angle: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if len(self.qubits) != self.kind.num_qubits:
            raise OperandError(
                f"{self.kind.value} acts on {self.kind.num_qubits} qubit(s), "
                f"got operands {self.qubits}"
            )
        if any(q not in (0, 1) for q in self.qubits):
            raise OperandError(f"qubit operands must be 0 or 1, got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise OperandError("CX control and target must differ")
        if self.kind.is_rotation and self.angle is None:
            raise OperandError(f"{self.kind.value} requires an angle")
        if not self.kind.is_rotation and self.angle is not None:
            raise OperandError(f"{self.kind.value} takes no angle")

    def matrix(self) -> np.ndarray:
        """2x2 matrix for single-qubit kinds, 4x4 (full register) for CX."""
        if self.kind is GateKind.CX:
            return _CX_01 if self.qubits == (0, 1) else _CX_10
        if self.kind.is_rotation:
            return rotation_matrix(self.kind, self.angle)
        return _FIXED[self.kind]

    def __str__(self) -> str:
        args = "" if self.angle is None else repr(self.angle)
        return f"{self.kind.value}({args}) @ {','.join(map(str, self.qubits))}"


def H(q: int) -> Gate:
    return Gate(GateKind.H, (q,))


def CX(control: int, target: int) -> Gate:
    return Gate(GateKind.CX, (control, target))


@dataclass(frozen=True)
class Circuit:
    gates: tuple[Gate, ...]
    depth: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))

    def to_text(self) -> str:
        """One gate per line, ``KIND(args) @ qubits``."""
        return "".join(f"{g}\n" for g in self.gates)

    def __add__(self, gates: Sequence[Gate]) -> "Circuit":
        return Circuit(self.gates + tuple(gates), self.depth, self.seed)


class MeasBasis(enum.Enum):
    Z = "Z"
    X = "X"
    Y = "Y"


@dataclass(frozen=True)
class MeasurementDistribution:
    basis: MeasBasis
    p: tuple[float, float, float, float]
    shots: int = 0


@dataclass(frozen=True)
class CircuitConfig:
    min_depth: int = 1
    max_depth: int = 8
    gate_set: tuple[GateKind, ...] = GATE_SET
    two_qubit_prob: float = 0.5

    def validate(self) -> None:
        if not 1 <= self.min_depth <= self.max_depth:
            raise ConfigError(
                f"need 1 <= min_depth <= max_depth, got {self.min_depth}, {self.max_depth}"
            )
        if not self.gate_set:
            raise ConfigError("gate_set is empty")
        if not 0.0 <= self.two_qubit_prob <= 1.0:
            raise ConfigError("two_qubit_prob must lie in [0, 1]")


def zero_state() -> np.ndarray:
    state = np.zeros(4, dtype=complex)
    state[0] = 1.0
    return state


def apply_gate(state: np.ndarray, gate: Gate) -> np.ndarray:
    """Return U_gate @ state as a new array."""
    if gate.kind is GateKind.CX:
        return gate.matrix() @ state
    m = gate.matrix()
    psi = state.reshape(2, 2)  # psi[b0, b1]
    if gate.qubits[0] == 0:
        out = m @ psi
    else:
        out = psi @ m.T
    return out.reshape(4)


def simulate(circuit: Circuit) -> np.ndarray:
    state = zero_state()
    for gate in circuit.gates:
        state = apply_gate(state, gate)
    return state


def basis_rotation(basis: MeasBasis) -> list[Gate]:
    """Gates mapping ``basis`` eigenstates onto the computational basis."""
    if basis is MeasBasis.Z:
        return []
    if basis is MeasBasis.X:
        return [H(0), H(1)]
    sdg = GateKind.Sdg
    return [Gate(sdg, (0,)), H(0), Gate(sdg, (1,)), H(1)]


def probabilities(state: np.ndarray) -> np.ndarray:
    return np.abs(state) ** 2


def exact_distribution(state: np.ndarray, basis: MeasBasis) -> np.ndarray:
    """Outcome probabilities of ``state`` read out in ``basis``."""
    for gate in basis_rotation(basis):
        state = apply_gate(state, gate)
    return probabilities(state)


def _sampling_cdf(p: np.ndarray) -> np.ndarray:
    """Cumulative table where zero-probability cells can never be hit."""
    p = np.clip(np.asarray(p, dtype=float), 0.0, None)
    cdf = np.cumsum(p, axis=-1) / p.sum(axis=-1, keepdims=True)
    last = 3 - np.argmax(p[..., ::-1] > 0, axis=-1)
    cdf[np.arange(4) >= last[..., None]] = 1.0
    return cdf


def sample_counts(probs: np.ndarray, seeds: Sequence[int], shots: int) -> np.ndarray:
    """Multinomial outcome counts for many distributions at once.

    ``probs`` has shape (k, 4); row j is sampled ``shots`` times from the
    stream seeded by ``seeds[j]`` (one uniform per shot, inverse CDF).
    """
    probs = np.atleast_2d(probs)
    k = probs.shape[0]
    counts = np.zeros((k, 4), dtype=np.int64)
    if shots == 0 or k == 0:
        return counts
    cdf = _sampling_cdf(probs)
    rows = np.arange(k)
    for u in iter_uniform_batch(seeds, shots):
        outcome = (cdf <= u[:, None]).sum(axis=1)
        counts[rows, outcome] += 1
    return counts


def measure(
    circuit: Circuit, basis: MeasBasis, shots: int = 0, seed: int = 0
) -> MeasurementDistribution:
    """Exact (shots=0) or shot-sampled outcome frequencies."""
    if shots < 0:
        raise ConfigError("shots must be >= 0")
    p = exact_distribution(simulate(circuit), basis)
    if shots > 0:
        p = sample_counts(p[None, :], [seed], shots)[0] / shots
    return MeasurementDistribution(basis, tuple(float(v) for v in p), shots)


def random_circuit(config: CircuitConfig, seed: int) -> Circuit:
    """Layered random circuit; a deterministic function of (config, seed).

    Each layer is, with probability ``two_qubit_prob``, a single CX of random
    orientation, otherwise one random single-qubit gate on each qubit.
    """
    config.validate()
    singles = [k for k in config.gate_set if k is not GateKind.CX]
    has_cx = GateKind.CX in config.gate_set
    rng = Xoshiro256(seed)
    depth = config.min_depth + rng.randbelow(config.max_depth - config.min_depth + 1)
    gates: list[Gate] = []
    for _ in range(depth):
        if has_cx and (not singles or rng.uniform() < config.two_qubit_prob):
            control = rng.randbelow(2)
            gates.append(CX(control, 1 - control))
            continue
        for q in (0, 1):
            kind = singles[rng.randbelow(len(singles))]
            angle = rng.uniform() * TWO_PI if kind.is_rotation else None
            gates.append(Gate(kind, (q,), angle))
    return Circuit(tuple(gates), depth, seed)
