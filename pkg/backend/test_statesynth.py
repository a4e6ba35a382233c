"""
Tests for state puzzles, the one-way puzzle built on them, and state synthesis
from inverters (amplitudes, phases, purification and the geometric bound).
Runs under pytest or directly as a script.
"""

import os
import sys

import numpy as np
import pytest

# Add src directory to path so imports work
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from services.design_service import identity_clifford
from services.distribution_service import CircuitFamily
from services.oracle_service import NoiseSpec
from services.qsim_service import (
    apply_gate,
    basis_state,
    born_distribution,
    euclidean_distance,
    fidelity,
    format_bits,
    from_amplitudes,
    gate_matrix,
    measure_shots,
    overlap_with_pure,
    parse_bits,
    random_state,
    run_circuit,
)
from services.synthesis_service import (
    Mode0Puzzle,
    Mode1Puzzle,
    PairStateParams,
    StatePuzzleInstance,
    amplitude_synthesis,
    build_inverter,
    full_synthesis,
    geometric_bound_batch,
    geometric_bound_check,
    inverter_sd_budget,
    make_V,
    mode0_measurement,
    mode1_law,
    mode1_measurement,
    owp_sampler_statepuzzle,
    pair_state,
    phase_estimate,
    prefix_tree_state,
    purified_amplitude_synthesis,
    regenerate_state,
    rotated_key,
    shift_table,
    state_puzzle_from_sampler,
    state_puzzle_generator,
)

ENABLED = os.getenv("QPL_ACCEPTANCE", "false").lower() == "true"


# ---------------------------------------------------------------------------
# State puzzles
# ---------------------------------------------------------------------------

def test_ghz_generator_residual():
    gen = state_puzzle_generator(CircuitFamily("ghz-fixture", 2), 1)
    rng = np.random.default_rng(1)
    seen = set()
    for _ in range(50):
        instance = state_puzzle_from_sampler(gen, rng)
        seen.add(instance.s)
        assert born_distribution(instance.psi).prob(instance.s) == pytest.approx(1.0)
    assert seen == {"0", "1"}


def test_regenerate_matches_sampled_state():
    gen = state_puzzle_generator(CircuitFamily("random-universal", 4, depth=3, seed=2), 2)
    instance = state_puzzle_from_sampler(gen, np.random.default_rng(3))
    assert fidelity(regenerate_state(gen, instance.s), instance.psi) == pytest.approx(1.0)


def test_puzzle_marginal_matches_table():
    gen = state_puzzle_generator(CircuitFamily("random-universal", 3, depth=3, seed=4), 1)
    rng = np.random.default_rng(5)
    draws = [state_puzzle_from_sampler(gen, rng).s for _ in range(20000)]
    exact = born_distribution(run_circuit(gen.circuit, gen.num_qubits), [0]).prob("1")
    assert abs(draws.count("1") / len(draws) - exact) < 0.02


# ---------------------------------------------------------------------------
# One-way puzzle from a state puzzle
# ---------------------------------------------------------------------------

def test_shift_table_is_two_to_one():
    table = shift_table(5, 3)
    for z in range(8):
        assert table[z] == table[z ^ 5] == min(z, z ^ 5)


def test_make_V_actions():
    """Row action <y0|V = (<y0| + i^b <y1|)/√2; the transpose acts on kets as listed."""
    y0, y1 = "01", "10"
    i0, i1 = parse_bits(y0), parse_bits(y1)
    for b in (0, 1):
        u = gate_matrix(make_V(y0, y1, b), 2)
        assert np.allclose(u.conj().T @ u, np.eye(4), atol=1e-9)
        expected = np.zeros(4, dtype=complex)
        expected[i0], expected[i1] = 1 / np.sqrt(2), (1j ** b) / np.sqrt(2)
        assert np.allclose(u[i0], expected)

    plus = apply_gate(basis_state(y0), make_V(y0, y1, 0)).amplitudes
    assert np.allclose(plus[[i0, i1]], [1 / np.sqrt(2), 1 / np.sqrt(2)])
    u1 = gate_matrix(make_V(y0, y1, 1), 2)
    assert np.allclose(u1.T[:, i1][[i0, i1]], [1 / np.sqrt(2), -1j / np.sqrt(2)])


def test_make_V_rejects_equal_strings():
    with pytest.raises(ValueError):
        make_V("01", "01", 0)


def test_rotated_key_on_balanced_pair():
    state = pair_state(PairStateParams(np.pi / 2, 0.0), "001", "110")
    rng = np.random.default_rng(6)
    assert all(rotated_key(state, "001", "110", 0, rng) == 0 for _ in range(50))
    keys = [rotated_key(state, "001", "110", 1, rng) for _ in range(4000)]
    assert abs(keys.count(0) / len(keys) - 0.5) < 0.05


def test_mode1_law_matches_measurement():
    rng = np.random.default_rng(7)
    for _ in range(5):
        params = PairStateParams(float(rng.uniform(0, np.pi)), float(rng.uniform(0, 2 * np.pi)))
        state = pair_state(params, "01", "11")
        for b_rot in (0, 1):
            shots = measure_shots(apply_gate(state, make_V("01", "11", b_rot)), [0, 1], 100000, rng)
            freq = float(np.mean(shots == parse_bits("01")))
            assert abs(freq - mode1_law(params, b_rot)) < 0.02


def test_mode0_on_basis_state():
    rng = np.random.default_rng(8)
    for _ in range(50):
        i, prefix, beta = mode0_measurement(basis_state("0110"), rng)
        assert prefix == "0110"[:i]
        assert beta == int("0110"[i])


def test_mode1_measurement_pairs():
    psi = random_state(3, np.random.default_rng(9))
    x0, x1, residual = mode1_measurement(psi, 3, np.random.default_rng(10))
    assert parse_bits(x0) ^ parse_bits(x1) == 3
    assert parse_bits(x0) == min(parse_bits(x0), parse_bits(x1))
    support = {format_bits(int(i), 3) for i in np.flatnonzero(np.abs(residual.amplitudes) > 1e-9)}
    assert support <= {x0, x1}


def test_owp_sampler_statepuzzle_modes():
    gen = state_puzzle_generator(CircuitFamily("random-universal", 4, depth=3, seed=11), 2)
    rng = np.random.default_rng(12)
    kinds = set()
    for _ in range(40):
        puzzle, beta = owp_sampler_statepuzzle(gen, rng)
        kinds.add(type(puzzle))
        assert beta in (0, 1) and puzzle.key == beta
        if isinstance(puzzle, Mode1Puzzle):
            assert puzzle.y0 != puzzle.y1
    assert kinds == {Mode0Puzzle, Mode1Puzzle}


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------

def test_amplitude_synthesis_ghz():
    ghz = from_amplitudes([1, 0, 0, 0, 0, 0, 0, 1])
    result = amplitude_synthesis(build_inverter(ghz, NoiseSpec()), None, np.random.default_rng(13))
    assert euclidean_distance(result.state, ghz) < 1e-9
    assert result.flagged == ()
    assert set(result.estimates) == {"", "0", "1", "00", "11"}


def test_amplitude_synthesis_real_positive():
    rng = np.random.default_rng(14)
    amps = np.abs(random_state(3, rng).amplitudes)
    target = from_amplitudes(amps)
    result = amplitude_synthesis(build_inverter(target, NoiseSpec()), None, rng)
    assert euclidean_distance(result.state, target) < 1e-9


def test_amplitude_synthesis_sampled_errors():
    rng = np.random.default_rng(15)
    psi = random_state(3, rng)
    m = 10000
    result = amplitude_synthesis(build_inverter(psi, NoiseSpec()), m, rng)
    assert max(result.errors.values()) <= 3 / np.sqrt(m)


def test_phase_estimate_examples():
    rng = np.random.default_rng(16)
    aligned = pair_state(PairStateParams(np.pi / 2, 0.0), "00", "11")
    estimate = phase_estimate(build_inverter(aligned, NoiseSpec()), "00", "11", None, rng)
    assert (estimate.u, estimate.v) == pytest.approx((1.0, 0.0))
    assert estimate.phi_hat == pytest.approx(0.0)

    quarter = pair_state(PairStateParams(np.pi / 2, np.pi / 2), "00", "11")
    estimate = phase_estimate(build_inverter(quarter, NoiseSpec()), "00", "11", None, rng)
    assert (estimate.u, estimate.v) == pytest.approx((0.0, 1.0), abs=1e-12)
    assert estimate.phi_hat == pytest.approx(np.pi / 2)

    params = PairStateParams(1.1, 4.0)
    state = pair_state(params, "01", "10")
    estimate = phase_estimate(build_inverter(state, NoiseSpec()), "01", "10", None, rng)
    assert estimate.u ** 2 + estimate.v ** 2 == pytest.approx(np.sin(params.theta) ** 2)


def test_full_synthesis_exact():
    rng = np.random.default_rng(17)
    for n in (2, 3, 4):
        for _ in range(5):
            psi = random_state(n, rng)
            result = full_synthesis(StatePuzzleInstance("", psi, "test"), NoiseSpec(), None, rng)
            assert result.fidelity >= 0.999


def test_full_synthesis_real_positive_identity_clifford():
    rng = np.random.default_rng(18)
    psi = from_amplitudes(np.abs(random_state(2, rng).amplitudes))
    result = full_synthesis(StatePuzzleInstance("", psi, "test"), NoiseSpec(), None, rng, identity_clifford(2))
    assert result.fidelity >= 0.999
    assert result.diagnostics.delta == 0.0


def test_full_synthesis_sampled():
    rng = np.random.default_rng(19)
    scores = []
    for _ in range(5):
        psi = random_state(3, rng)
        scores.append(full_synthesis(StatePuzzleInstance("", psi, "test"), NoiseSpec(), 100000, rng).fidelity)
    assert np.mean(scores) >= 0.95


@pytest.mark.skipif(not ENABLED, reason="set QPL_ACCEPTANCE=true to run full-size checks")
def test_full_synthesis_sampled_full_size():
    rng = np.random.default_rng(23)
    scores = []
    for _ in range(20):
        psi = random_state(4, rng)
        scores.append(full_synthesis(StatePuzzleInstance("", psi, "test"), NoiseSpec(), 100000, rng).fidelity)
    assert np.mean(scores) >= 0.95


def test_inverter_budget_tracks_noise():
    psi = random_state(3, np.random.default_rng(20))
    clean = inverter_sd_budget(build_inverter(psi, NoiseSpec()))
    noisy = inverter_sd_budget(build_inverter(psi, NoiseSpec(0.02, "mass-shift")))
    assert clean["total"] == 0.0
    assert noisy["mode0"] == pytest.approx(0.02, abs=1e-6)
    assert noisy["total"] > clean["total"]


def test_purification_matches_prefix_tree():
    rng = np.random.default_rng(21)
    for n in (1, 2, 3):
        psi = random_state(n, rng)
        frozen = amplitude_synthesis(build_inverter(psi, NoiseSpec()), 2000, rng)
        joint = purified_amplitude_synthesis(frozen.estimates, n)
        assert overlap_with_pure(joint, frozen.state, list(range(n))) >= 0.999


def test_purification_shares_prefix_tree_support():
    # "1" is never reached, so both constructions leave it out
    sparse = {"": 0.0, "0": 0.0}
    amps, missing = prefix_tree_state(sparse, 2)
    assert missing == []
    tree = from_amplitudes(amps)
    assert overlap_with_pure(purified_amplitude_synthesis(sparse, 2), tree, [0, 1]) == pytest.approx(1.0)
    # "1" is reached without an estimate: the tree gives it amplitude 0, which no unitary reproduces
    with pytest.raises(ValueError):
        purified_amplitude_synthesis({"": 0.5, "0": 0.0}, 2)


# ---------------------------------------------------------------------------
# Geometric bound
# ---------------------------------------------------------------------------

def test_geometric_bound_examples():
    check = geometric_bound_check(1.0, 0.0, 1.0, 0.1, 1.0, 0.1)
    assert check.lhs == pytest.approx(0.0996, abs=1e-4)
    assert check.bound == pytest.approx(0.2)
    assert check.ok and not check.rejected
    same = geometric_bound_check(0.3, 0.4, 0.3, 0.4, 0.5, 0.1)
    assert same.lhs == 0.0 and same.ok


def test_geometric_bound_rejects_bad_preconditions():
    assert geometric_bound_check(0.1, 0.0, 0.1, 0.0, 1.0, 0.5).rejected


def test_geometric_bound_batch():
    batch = geometric_bound_batch(100000, np.random.default_rng(22))
    assert batch["violations"] == 0
    assert batch["chord_mismatch"] < 1e-9


def main():
    """Run all tests as a script."""
    print("\n" + "=" * 80)
    print("SYNTHESIS SERVICE TESTS")
    print("=" * 80)
    tests = [
        test_ghz_generator_residual,
        test_regenerate_matches_sampled_state,
        test_puzzle_marginal_matches_table,
        test_shift_table_is_two_to_one,
        test_make_V_actions,
        test_make_V_rejects_equal_strings,
        test_rotated_key_on_balanced_pair,
        test_mode1_law_matches_measurement,
        test_mode0_on_basis_state,
        test_mode1_measurement_pairs,
        test_owp_sampler_statepuzzle_modes,
        test_amplitude_synthesis_ghz,
        test_amplitude_synthesis_real_positive,
        test_amplitude_synthesis_sampled_errors,
        test_phase_estimate_examples,
        test_full_synthesis_exact,
        test_full_synthesis_real_positive_identity_clifford,
        test_full_synthesis_sampled,
        test_inverter_budget_tracks_noise,
        test_purification_matches_prefix_tree,
        test_purification_shares_prefix_tree_support,
        test_geometric_bound_examples,
        test_geometric_bound_rejects_bad_preconditions,
        test_geometric_bound_batch,
    ]
    if ENABLED:
        tests.append(test_full_synthesis_sampled_full_size)
    for test in tests:
        test()
        print(f"✓ {test.__name__}")
    print("=" * 80 + "\n")


if __name__ == "__main__":
    main()
