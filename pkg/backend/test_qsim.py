"""
Tests for the statevector service: gates, measurement, Born marginals and distances.
Runs under pytest or directly as a script.
"""

import os
import sys

import numpy as np
import pytest

# Add src directory to path so imports work
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from services.errors import QubitCapExceeded
from services.qsim_service import (
    MAX_QUBITS,
    GateOp,
    PureState,
    apply_gate,
    basis_state,
    born_distribution,
    classical_oracle,
    cnot,
    Distribution,
    euclidean_distance,
    fidelity,
    from_amplitudes,
    gate_matrix,
    hadamard,
    IDENTITY,
    inverse_circuit,
    marginalize,
    measure_shots,
    measure_subset,
    overlap_with_pure,
    pauli_x,
    random_state,
    run_circuit,
    single_qubit_gate,
    statistical_distance,
    tensor_states,
    trace_distance_pure,
    zero_state,
)


def ghz(n: int) -> PureState:
    return run_circuit([hadamard(0)] + [cnot(q, q + 1) for q in range(n - 1)], n)


def test_single_qubit_gates():
    """H, I and X act as their definitions."""
    plus = apply_gate(zero_state(1), hadamard(0))
    assert np.allclose(plus.amplitudes, [1 / np.sqrt(2), 1 / np.sqrt(2)])

    psi = random_state(2, np.random.default_rng(1))
    same = apply_gate(psi, single_qubit_gate(IDENTITY, 1))
    assert np.allclose(same.amplitudes, psi.amplitudes)

    one = apply_gate(zero_state(1), pauli_x(0))
    assert np.allclose(one.amplitudes, [0, 1])


def test_qubit_order_is_big_endian():
    """X on qubit 0 of |00> gives |10>, i.e. basis index 2."""
    state = apply_gate(zero_state(2), pauli_x(0))
    assert np.isclose(abs(state.amplitudes[2]), 1.0)
    assert born_distribution(state).prob("10") == pytest.approx(1.0)


def test_non_unitary_matrix_rejected():
    with pytest.raises(ValueError):
        GateOp("single", (0,), matrix=np.array([[1, 1], [0, 1]]))


def test_gate_outside_register_rejected():
    with pytest.raises(ValueError):
        apply_gate(zero_state(2), hadamard(3))


def test_qubit_cap():
    with pytest.raises(QubitCapExceeded):
        zero_state(MAX_QUBITS + 1)


def test_normalization_preserved():
    rng = np.random.default_rng(5)
    state = random_state(3, rng)
    for gate in [hadamard(0), cnot(0, 2), pauli_x(1), cnot(2, 1)]:
        state = apply_gate(state, gate)
        assert abs(np.vdot(state.amplitudes, state.amplitudes).real - 1.0) < 1e-9


def test_inverse_circuit_restores_state():
    rng = np.random.default_rng(7)
    psi = random_state(3, rng)
    circuit = [hadamard(0), cnot(0, 1), single_qubit_gate(np.array([[1, 0], [0, 1j]]), 2), cnot(2, 0)]
    out = run_circuit(inverse_circuit(circuit), 3, run_circuit(circuit, 3, psi))
    assert fidelity(out, psi) == pytest.approx(1.0, abs=1e-12)


def test_gate_matrix_is_unitary():
    u = gate_matrix(cnot(1, 0), 2)
    assert np.allclose(u.conj().T @ u, np.eye(4))
    # control on qubit 1 (LSB), target qubit 0 (MSB): |01> <-> |11>
    assert np.isclose(u[3, 1], 1.0)


def test_classical_oracle_writes_table():
    """|z>|0> -> |z>|f(z)> with f(z) = z xor 1 on two bits."""
    table = [1, 0, 3, 2]
    oracle = classical_oracle([0, 1], [2, 3], table)
    for z in range(4):
        start = basis_state(format(z, "02b") + "00")
        out = born_distribution(apply_gate(start, oracle))
        assert out.prob(format(z, "02b") + format(table[z], "02b")) == pytest.approx(1.0)


def test_measure_bell_state():
    bell = ghz(2)
    outcomes = {}
    rng = np.random.default_rng(11)
    for _ in range(2000):
        outcome, post = measure_subset(bell, [0], rng)
        outcomes[outcome] = outcomes.get(outcome, 0) + 1
        assert born_distribution(post).prob(outcome) == pytest.approx(1.0)
    assert abs(outcomes["0"] / 2000 - 0.5) < 0.05


def test_measure_basis_state():
    outcome, post = measure_subset(basis_state("1"), [0], np.random.default_rng(0))
    assert outcome == "1"
    assert post.num_qubits == 0


def test_measure_ghz_pair():
    rng = np.random.default_rng(3)
    seen = set()
    for _ in range(200):
        outcome, _ = measure_subset(ghz(3), [0, 1], rng)
        seen.add(outcome)
    assert seen == {"00", "11"}


def test_measure_keeps_unmeasured_order():
    """Measuring the middle qubit of |1>|+>|0> leaves |1>|0> on the others."""
    state = tensor_states(tensor_states(basis_state("1"), from_amplitudes([1, 1])), basis_state("0"))
    _, post = measure_subset(state, [1], np.random.default_rng(2))
    assert born_distribution(post).prob("10") == pytest.approx(1.0)


def test_born_distribution_examples():
    plus = apply_gate(zero_state(1), hadamard(0))
    assert born_distribution(plus).as_dict() == pytest.approx({"0": 0.5, "1": 0.5})
    assert born_distribution(ghz(3)).as_dict() == pytest.approx({"000": 0.5, "111": 0.5})


def test_born_matches_sampling():
    rng = np.random.default_rng(13)
    state = random_state(4, rng)
    exact = born_distribution(state)
    shots = measure_shots(state, list(range(4)), 200000, rng)
    empirical = Distribution(4, np.bincount(shots, minlength=16) / len(shots))
    assert statistical_distance(exact, empirical) < 0.01


def test_marginalize_reorders():
    d = Distribution.from_dict({"01": 1.0})
    assert marginalize(d, [1, 0]).prob("10") == pytest.approx(1.0)
    assert marginalize(d, [1]).prob("1") == pytest.approx(1.0)


def test_statistical_distance_examples():
    a = Distribution.from_dict({"0": 0.75, "1": 0.25})
    b = Distribution.from_dict({"0": 0.25, "1": 0.75})
    assert statistical_distance(a, a) == 0.0
    assert statistical_distance(Distribution.point("0"), Distribution.point("1")) == pytest.approx(1.0)
    assert statistical_distance(a, b) == pytest.approx(0.5)


def test_trace_distance_examples():
    rng = np.random.default_rng(17)
    psi = random_state(2, rng)
    assert trace_distance_pure(psi, psi) == pytest.approx(0.0, abs=1e-7)
    assert trace_distance_pure(basis_state("0"), basis_state("1")) == pytest.approx(1.0)
    phi = from_amplitudes(psi.amplitudes + 0.01 * random_state(2, rng).amplitudes)
    assert trace_distance_pure(psi, phi) <= euclidean_distance(psi, phi) + 1e-12


def test_overlap_with_pure_examples():
    rng = np.random.default_rng(19)
    target = random_state(2, rng)
    junk = random_state(1, rng)
    assert overlap_with_pure(tensor_states(target, junk), target, [0, 1]) == pytest.approx(1.0)

    v = random_state(2, rng).amplitudes
    perp = from_amplitudes(v - np.vdot(target.amplitudes, v) * target.amplitudes)
    assert overlap_with_pure(tensor_states(perp, junk), target, [0, 1]) == pytest.approx(0.0, abs=1e-12)

    mixed = (np.kron(target.amplitudes, [1, 0]) + np.kron(perp.amplitudes, [0, 1])) / np.sqrt(2)
    assert overlap_with_pure(PureState(3, mixed), target, [0, 1]) == pytest.approx(0.5)


def test_unnormalized_state_rejected():
    with pytest.raises(ValueError):
        PureState(1, np.array([1.0, 1.0]))


def test_born_agrees_with_marginalize():
    rng = np.random.default_rng(20)
    for _ in range(50):
        n = int(rng.integers(1, 6))
        state = random_state(n, rng)
        qubits = [int(q) for q in rng.permutation(n)[:int(rng.integers(1, n + 1))]]
        direct = born_distribution(state, qubits).probs
        via_full = marginalize(born_distribution(state), qubits).probs
        assert np.max(np.abs(direct - via_full)) <= 1e-12


def test_statistical_distance_is_a_metric():
    rng = np.random.default_rng(21)
    for _ in range(200):
        a, b, c = (Distribution(3, rng.dirichlet(np.ones(8))) for _ in range(3))
        assert statistical_distance(a, a) == 0.0
        assert statistical_distance(a, b) == statistical_distance(b, a)
        assert statistical_distance(a, c) <= statistical_distance(a, b) + statistical_distance(b, c) + 1e-12


def test_trace_distance_below_euclidean():
    rng = np.random.default_rng(22)
    for _ in range(500):
        n = int(rng.integers(1, 4))
        a = random_state(n, rng)
        # mix near and far pairs
        step = 10.0 ** rng.uniform(-3, 1)
        b = from_amplitudes(a.amplitudes + step * random_state(n, rng).amplitudes)
        assert trace_distance_pure(a, b) <= euclidean_distance(a, b) + 1e-12


def main():
    """Run all tests as a script."""
    print("\n" + "=" * 80)
    print("QSIM SERVICE TESTS")
    print("=" * 80)
    tests = [
        test_single_qubit_gates,
        test_qubit_order_is_big_endian,
        test_non_unitary_matrix_rejected,
        test_gate_outside_register_rejected,
        test_qubit_cap,
        test_normalization_preserved,
        test_inverse_circuit_restores_state,
        test_gate_matrix_is_unitary,
        test_classical_oracle_writes_table,
        test_measure_bell_state,
        test_measure_basis_state,
        test_measure_ghz_pair,
        test_measure_keeps_unmeasured_order,
        test_born_distribution_examples,
        test_born_matches_sampling,
        test_marginalize_reorders,
        test_statistical_distance_examples,
        test_trace_distance_examples,
        test_overlap_with_pure_examples,
        test_unnormalized_state_rejected,
        test_born_agrees_with_marginalize,
        test_statistical_distance_is_a_metric,
        test_trace_distance_below_euclidean,
    ]
    for test in tests:
        test()
        print(f"✓ {test.__name__}")
    print("=" * 80 + "\n")


if __name__ == "__main__":
    main()
