"""
Tests for circuit families, exact output tables and prefix conditionals.
Runs under pytest or directly as a script.
"""

import os
import sys

import numpy as np
import pytest

# Add src directory to path so imports work
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from services.distribution_service import (
    CircuitFamily,
    chain_rule_product,
    circuit_fingerprint,
    conditional_next_bit,
    conditional_tables,
    exact_output_distribution,
    family_distribution,
    prefix_mass,
    sample_circuit,
    support_strings,
    uniform_distribution,
)
from services.errors import QubitCapExceeded
from services.qsim_service import MAX_QUBITS, Distribution, format_bits


def test_ghz_fixture():
    d = family_distribution(CircuitFamily("ghz-fixture", 3))
    assert d.as_dict() == pytest.approx({"000": 0.5, "111": 0.5})


def test_depth_zero_is_identity():
    family = CircuitFamily("random-universal", 4, depth=0, seed=9)
    assert sample_circuit(family) == []
    assert exact_output_distribution([], 4).as_dict() == {"0000": 1.0}


def test_same_seed_same_circuit():
    family = CircuitFamily("random-universal", 4, depth=8, seed=123)
    assert circuit_fingerprint(sample_circuit(family)) == circuit_fingerprint(sample_circuit(family))
    other = CircuitFamily("random-universal", 4, depth=8, seed=124)
    assert circuit_fingerprint(sample_circuit(family)) != circuit_fingerprint(sample_circuit(other))


def test_random_universal_is_normalized():
    d = family_distribution(CircuitFamily("random-universal", 5, depth=6, seed=1))
    assert abs(d.probs.sum() - 1.0) < 1e-9


def test_product_fixture_factorizes():
    d = family_distribution(CircuitFamily("product-fixture", 2, seed=4))
    table = d.probs.reshape(2, 2)
    assert np.allclose(table, np.outer(table.sum(axis=1), table.sum(axis=0)))


def test_family_over_cap():
    with pytest.raises(QubitCapExceeded):
        CircuitFamily("random-universal", MAX_QUBITS + 1)


def test_conditional_examples():
    ghz = family_distribution(CircuitFamily("ghz-fixture", 2))
    query = conditional_next_bit(ghz, "1")
    assert query.defined
    assert (query.p0, query.p1) == pytest.approx((0.0, 1.0))

    uniform = uniform_distribution(2)
    query = conditional_next_bit(uniform, "0")
    assert (query.p0, query.p1) == pytest.approx((0.5, 0.5))


def test_conditional_off_support_is_undefined():
    ghz = family_distribution(CircuitFamily("ghz-fixture", 3))
    query = conditional_next_bit(ghz, "01")
    assert not query.defined
    assert np.isnan(conditional_tables(ghz)[2][1])


def test_conditional_rejects_full_length_prefix():
    with pytest.raises(ValueError):
        conditional_next_bit(uniform_distribution(2), "01")


def test_chain_rule_identity():
    d = family_distribution(CircuitFamily("random-universal", 4, depth=5, seed=77))
    for index in range(16):
        x = format_bits(index, 4)
        assert abs(chain_rule_product(d, x) - d.prob(x)) < 1e-9


def test_conditional_tables_match_queries():
    d = family_distribution(CircuitFamily("random-universal", 3, depth=4, seed=8))
    tables = conditional_tables(d)
    for length in range(3):
        for v in range(2 ** length):
            query = conditional_next_bit(d, format_bits(v, length))
            assert tables[length][v] == pytest.approx(query.p1)


def test_prefix_mass_and_support():
    d = Distribution.from_dict({"101": 0.25, "100": 0.25, "011": 0.5})
    assert prefix_mass(d, "") == pytest.approx(1.0)
    assert prefix_mass(d, "10") == pytest.approx(0.5)
    assert support_strings(d) == ["011", "100", "101"]


def test_mean_output_probability_is_uniform():
    """E_x p_C(x) = 2^-n for every family member."""
    families = [CircuitFamily("random-universal", n, depth=depth, seed=seed)
                for n in (1, 3, 5) for depth in (0, 4, 12) for seed in range(3)]
    families += [CircuitFamily("ghz-fixture", 4), CircuitFamily("product-fixture", 3, seed=2)]
    for family in families:
        d = family_distribution(family)
        assert abs(np.mean(d.probs) - 2.0 ** -family.num_qubits) <= 1e-12


def main():
    """Run all tests as a script."""
    print("\n" + "=" * 80)
    print("DISTRIBUTION SERVICE TESTS")
    print("=" * 80)
    tests = [
        test_ghz_fixture,
        test_depth_zero_is_identity,
        test_same_seed_same_circuit,
        test_random_universal_is_normalized,
        test_product_fixture_factorizes,
        test_family_over_cap,
        test_conditional_examples,
        test_conditional_off_support_is_undefined,
        test_conditional_rejects_full_length_prefix,
        test_chain_rule_identity,
        test_conditional_tables_match_queries,
        test_prefix_mass_and_support,
        test_mean_output_probability_is_uniform,
    ]
    for test in tests:
        test()
        print(f"✓ {test.__name__}")
    print("=" * 80 + "\n")


if __name__ == "__main__":
    main()
