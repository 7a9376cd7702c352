import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from qconformal.errors import ConfigError, OperandError
from qconformal.qsim import (
    CX,
    GATE_SET,
    Circuit,
    CircuitConfig,
    Gate,
    GateKind,
    H,
    MeasBasis,
    apply_gate,
    basis_rotation,
    exact_distribution,
    measure,
    random_circuit,
    sample_counts,
    simulate,
    zero_state,
)

S2 = 1 / math.sqrt(2)
BELL = Circuit((H(0), CX(0, 1)), depth=2)
I2 = np.eye(2)


def full_operator(gate: Gate) -> np.ndarray:
    """4x4 register operator built with Kronecker products (qubit 0 is the left factor)."""
    if gate.kind is GateKind.CX:
        return gate.matrix()
    m = gate.matrix()
    return np.kron(m, I2) if gate.qubits == (0,) else np.kron(I2, m)


def random_state(rng) -> np.ndarray:
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    return v / np.linalg.norm(v)


def all_gates(angle: float = 0.3):
    for kind in GATE_SET:
        if kind is GateKind.CX:
            yield CX(0, 1)
            yield CX(1, 0)
            continue
        for q in (0, 1):
            yield Gate(kind, (q,), angle if kind.is_rotation else None)


# ------------------------------------------------------------------ gates

def test_unitarity_of_every_gate_kind():
    rng = np.random.default_rng(0)
    for kind in GATE_SET:
        angles = rng.uniform(0, 2 * math.pi, 100) if kind.is_rotation else [None]
        qubits = (0, 1) if kind is GateKind.CX else (0,)
        for angle in angles:
            u = Gate(kind, qubits, angle).matrix()
            np.testing.assert_allclose(u @ u.conj().T, np.eye(len(u)), rtol=0, atol=1e-12)


def test_gate_operand_validation():
    with pytest.raises(OperandError):
        Gate(GateKind.H, (2,))
    with pytest.raises(OperandError):
        Gate(GateKind.CX, (1, 1))
    with pytest.raises(OperandError):
        Gate(GateKind.H, (0, 1))
    with pytest.raises(OperandError):
        Gate(GateKind.RX, (0,))
    with pytest.raises(OperandError):
        Gate(GateKind.X, (0,), 0.5)


def test_hadamard_on_qubit0():
    out = apply_gate(zero_state(), H(0))
    np.testing.assert_allclose(out, [S2, 0, S2, 0], atol=1e-15)


def test_x_on_qubit1_flips_right_bit():
    out = apply_gate(zero_state(), Gate(GateKind.X, (1,)))
    np.testing.assert_allclose(out, [0, 1, 0, 0], atol=0)


@given(theta=st.floats(0, 2 * math.pi), q=st.sampled_from([0, 1]), seed=st.integers(0, 2**32))
def test_rz_leaves_probabilities_unchanged(theta, q, seed):
    state = random_state(np.random.default_rng(seed))
    out = apply_gate(state, Gate(GateKind.RZ, (q,), theta))
    np.testing.assert_allclose(np.abs(out) ** 2, np.abs(state) ** 2, atol=1e-14)


@settings(max_examples=50)
@given(seed=st.integers(0, 2**32), angle=st.floats(0, 2 * math.pi))
def test_apply_gate_matches_kronecker_operator(seed, angle):
    state = random_state(np.random.default_rng(seed))
    for gate in all_gates(angle):
        np.testing.assert_allclose(
            apply_gate(state, gate), full_operator(gate) @ state, atol=1e-14
        )


def test_cx_orientation():
    # |10> with control 0 -> |11>; with control 1 -> unchanged
    ten = np.array([0, 0, 1, 0], dtype=complex)
    np.testing.assert_allclose(apply_gate(ten, CX(0, 1)), [0, 0, 0, 1])
    np.testing.assert_allclose(apply_gate(ten, CX(1, 0)), ten)


# ------------------------------------------------------------------ circuits

def test_simulate_empty_is_zero_state():
    np.testing.assert_array_equal(simulate(Circuit(())), [1, 0, 0, 0])


def test_bell_state():
    np.testing.assert_allclose(simulate(BELL), [S2, 0, 0, S2], atol=1e-15)


def test_random_circuits_stay_normalised():
    cfg = CircuitConfig(1, 8)
    for seed in range(300):
        state = simulate(random_circuit(cfg, seed))
        assert abs(np.sum(np.abs(state) ** 2) - 1) <= 1e-10


def test_random_circuit_is_deterministic():
    cfg = CircuitConfig(1, 8)
    for seed in (0, 1, 2**63 + 5):
        assert random_circuit(cfg, seed) == random_circuit(cfg, seed)
    assert random_circuit(cfg, 1) != random_circuit(cfg, 2)


def test_forced_depth():
    cfg = CircuitConfig(3, 3)
    assert {random_circuit(cfg, s).depth for s in range(200)} == {3}


def test_layer_structure():
    cfg = CircuitConfig(1, 8)
    for seed in range(200):
        c = random_circuit(cfg, seed)
        n_cx = sum(g.kind is GateKind.CX for g in c.gates)
        n_single = len(c.gates) - n_cx
        assert n_cx + n_single // 2 == c.depth
        assert n_single % 2 == 0
        for g in c.gates:
            if g.kind.is_rotation:
                assert 0 <= g.angle < 2 * math.pi


def test_depth_histogram_is_uniform():
    cfg = CircuitConfig(1, 8)
    depths = [random_circuit(cfg, s).depth for s in range(10_000)]
    observed = np.bincount(depths, minlength=9)[1:]
    assert chisquare(observed).pvalue > 0.01


def test_two_qubit_probability_extremes():
    only_cx = CircuitConfig(1, 4, two_qubit_prob=1.0)
    assert all(g.kind is GateKind.CX for g in random_circuit(only_cx, 5).gates)
    no_cx = CircuitConfig(1, 4, two_qubit_prob=0.0)
    assert all(g.kind is not GateKind.CX for g in random_circuit(no_cx, 5).gates)


def test_config_errors():
    with pytest.raises(ConfigError):
        random_circuit(CircuitConfig(gate_set=()), 0)
    with pytest.raises(ConfigError):
        random_circuit(CircuitConfig(min_depth=0), 0)
    with pytest.raises(ConfigError):
        random_circuit(CircuitConfig(min_depth=5, max_depth=4), 0)


def test_text_form():
    c = Circuit((H(0), CX(1, 0), Gate(GateKind.RX, (1,), 0.5)))
    assert c.to_text() == "H() @ 0\nCX() @ 1,0\nRX(0.5) @ 1\n"


# ------------------------------------------------------------------ measurement

def test_basis_rotation_lists():
    assert basis_rotation(MeasBasis.Z) == []
    assert basis_rotation(MeasBasis.X) == [H(0), H(1)]
    sdg = GateKind.Sdg
    assert basis_rotation(MeasBasis.Y) == [Gate(sdg, (0,)), H(0), Gate(sdg, (1,)), H(1)]


@pytest.mark.parametrize("basis", [MeasBasis.X, MeasBasis.Y])
def test_rotated_readout_of_zero_state_is_uniform(basis):
    h = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    sdg = np.diag([1, -1j])
    single = h if basis is MeasBasis.X else h @ sdg
    oracle = np.abs(np.kron(single, single) @ [1, 0, 0, 0]) ** 2
    np.testing.assert_allclose(oracle, 0.25, atol=1e-15)
    np.testing.assert_allclose(exact_distribution(zero_state(), basis), oracle, atol=1e-12)


def test_x_basis_equals_appending_hadamards():
    cfg = CircuitConfig(1, 8)
    for seed in range(100):
        c = random_circuit(cfg, seed)
        via_basis = measure(c, MeasBasis.X).p
        via_gates = measure(c + [H(0), H(1)], MeasBasis.Z).p
        np.testing.assert_allclose(via_basis, via_gates, rtol=0, atol=1e-12)


def test_bell_exact_distribution():
    dist = measure(BELL, MeasBasis.Z, shots=0)
    np.testing.assert_allclose(dist.p, [0.5, 0, 0, 0.5], atol=1e-12)
    assert dist.shots == 0 and dist.basis is MeasBasis.Z


def test_bell_sampled_distribution():
    dist = measure(BELL, MeasBasis.Z, shots=1024, seed=11)
    assert dist.p[1] == 0.0 and dist.p[2] == 0.0
    assert abs(dist.p[0] - 0.5) <= 0.06
    assert sum(dist.p) == 1.0


def test_four_shots_quantise_frequencies():
    cfg = CircuitConfig(1, 8)
    for seed in range(30):
        for basis in MeasBasis:
            dist = measure(random_circuit(cfg, seed), basis, shots=4, seed=seed)
            assert all(p in (0.0, 0.25, 0.5, 0.75, 1.0) for p in dist.p)
            assert sum(dist.p) == 1.0


def test_measure_is_deterministic_in_seed():
    c = random_circuit(CircuitConfig(), 3)
    assert measure(c, MeasBasis.Y, 512, 9) == measure(c, MeasBasis.Y, 512, 9)


def test_zero_probability_cells_are_never_drawn():
    probs = np.array([[0, 0.3, 0, 0.7], [1, 0, 0, 0], [0, 0, 0, 1], [0.5, 0.5, 0, 0]])
    counts = sample_counts(probs, [1, 2, 3, 4], 2000)
    assert np.all(counts[probs == 0] == 0)
    assert np.all(counts.sum(axis=1) == 2000)


def test_sampling_error_shrinks_with_shots():
    cfg = CircuitConfig(1, 8)
    n = 200
    probs = np.array([exact_distribution(simulate(random_circuit(cfg, s)), MeasBasis.Z)
                      for s in range(n)])
    seeds = list(range(1000, 1000 + n))
    mean_err = []
    for shots in (256, 1024, 4096, 16384):
        freq = sample_counts(probs, seeds, shots) / shots
        err = np.abs(freq - probs).max(axis=1)
        mean_err.append(err.mean())
        if shots == 16384:
            assert np.mean(err <= 0.02) >= 0.99
    assert all(a > b for a, b in zip(mean_err, mean_err[1:]))
