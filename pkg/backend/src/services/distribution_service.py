"""
Distribution Service for circuit families and brute-force output tables.

Every estimator in the lab is judged against the exact tables built here.
"""

import hashlib
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from services.errors import QubitCapExceeded
from services.qsim_service import (
    MAX_QUBITS,
    Distribution,
    GateOp,
    born_distribution,
    cnot,
    format_bits,
    hadamard,
    parse_bits,
    run_circuit,
    single_qubit_gate,
)

FAMILY_KINDS = ("random-universal", "ghz-fixture", "product-fixture", "explicit")

# Prefixes lighter than this are treated as outside the support
MASS_FLOOR = 1e-14


@dataclass(frozen=True)
class CircuitFamily:
    """Parameters that regenerate one circuit bit-exactly."""
    family_kind: str
    num_qubits: int
    depth: int = 0
    seed: int = 0
    gate_set: Tuple[GateOp, ...] = field(default=())

    def __post_init__(self):
        if self.family_kind not in FAMILY_KINDS:
            raise ValueError(f"Unsupported family_kind '{self.family_kind}'")
        if self.num_qubits < 1:
            raise ValueError(f"num_qubits must be >= 1, got {self.num_qubits}")
        if self.num_qubits > MAX_QUBITS:
            raise QubitCapExceeded(f"Family of {self.num_qubits} qubits exceeds the cap of {MAX_QUBITS}")
        if self.depth < 0:
            raise ValueError(f"depth must be >= 0, got {self.depth}")


@dataclass(frozen=True)
class PrefixQuery:
    """Exact next-bit conditional at a prefix; p0/p1 are nan when undefined."""
    prefix: str
    p0: float
    p1: float
    defined: bool
    mass: float


# ---------------------------------------------------------------------------
# Circuit families
# ---------------------------------------------------------------------------

def haar_unitary_2x2(rng: np.random.Generator) -> np.ndarray:
    """Haar-random 2x2 unitary from the QR decomposition of a complex Gaussian matrix."""
    z = (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def sample_circuit(family: CircuitFamily, rng: Optional[np.random.Generator] = None) -> List[GateOp]:
    """
    Draw a circuit from a family.

    Args:
        family: Family parameters
        rng: Random stream; defaults to a fresh stream seeded with family.seed

    Returns:
        Gate list acting on qubits 0..num_qubits-1
    """
    if rng is None:
        rng = np.random.default_rng(family.seed)
    n = family.num_qubits

    if family.family_kind == "ghz-fixture":
        return [hadamard(0)] + [cnot(q, q + 1) for q in range(n - 1)]

    if family.family_kind == "product-fixture":
        return [single_qubit_gate(haar_unitary_2x2(rng), q, "U") for q in range(n)]

    if family.family_kind == "explicit":
        for gate in family.gate_set:
            if any(q >= n for q in gate.qubits()):
                raise ValueError(f"Explicit gate {gate.label or gate.kind} touches a qubit outside {n}")
        return list(family.gate_set)

    # random-universal: Haar single-qubit layer, then brickwork CNOTs
    circuit: List[GateOp] = []
    for layer in range(family.depth):
        circuit.extend(single_qubit_gate(haar_unitary_2x2(rng), q, "U") for q in range(n))
        circuit.extend(cnot(q, q + 1) for q in range(layer % 2, n - 1, 2))
    return circuit


def circuit_fingerprint(circuit: Sequence[GateOp]) -> str:
    """SHA-256 over the gate encodings; equal fingerprints mean identical circuits."""
    digest = hashlib.sha256()
    for gate in circuit:
        digest.update(gate.fingerprint())
    return digest.hexdigest()


def circuit_width(circuit: Sequence[GateOp]) -> int:
    return max((max(g.qubits()) + 1 for g in circuit), default=0)


# ---------------------------------------------------------------------------
# Exact tables
# ---------------------------------------------------------------------------

def exact_output_distribution(circuit: Sequence[GateOp], n_out: int, num_qubits: Optional[int] = None) -> Distribution:
    """
    Exact distribution of the first n_out qubits after running the circuit on |0...0>.

    Raises:
        QubitCapExceeded: If the register does not fit the simulator
    """
    width = max(n_out, circuit_width(circuit), num_qubits or 0)
    if width > MAX_QUBITS:
        raise QubitCapExceeded(f"Circuit needs {width} qubits, cap is {MAX_QUBITS}")
    state = run_circuit(circuit, width)
    return born_distribution(state, list(range(n_out)))


def family_distribution(family: CircuitFamily) -> Distribution:
    """Exact output table of the circuit a family regenerates from its seed."""
    return exact_output_distribution(sample_circuit(family), family.num_qubits)


def prefix_masses(d: Distribution, length: int) -> np.ndarray:
    """Pr[x_{1..length} = v] for every v, indexed by the prefix value."""
    if not (0 <= length <= d.num_bits):
        raise ValueError(f"Prefix length {length} out of range for {d.num_bits} bits")
    return d.probs.reshape(2 ** length, 2 ** (d.num_bits - length)).sum(axis=1)


def prefix_mass(d: Distribution, prefix: str) -> float:
    if len(prefix) > d.num_bits:
        raise ValueError(f"Prefix '{prefix}' longer than {d.num_bits}-bit strings")
    width = 2 ** (d.num_bits - len(prefix))
    start = parse_bits(prefix) * width
    return float(d.probs[start:start + width].sum())


def conditional_next_bit(d: Distribution, prefix: str) -> PrefixQuery:
    """
    Exact conditional law of the bit following `prefix`.

    Raises:
        ValueError: If the prefix is not shorter than the strings
    """
    if len(prefix) >= d.num_bits:
        raise ValueError(f"Prefix '{prefix}' must be shorter than {d.num_bits} bits")
    mass = prefix_mass(d, prefix)
    if mass <= MASS_FLOOR:
        return PrefixQuery(prefix, float("nan"), float("nan"), False, mass)
    p1 = min(1.0, max(0.0, prefix_mass(d, prefix + "1") / mass))
    return PrefixQuery(prefix, 1.0 - p1, p1, True, mass)


def conditional_tables(d: Distribution) -> List[np.ndarray]:
    """
    Next-bit-1 conditionals for every prefix, one array per prefix length.

    Returns:
        tables[i][v] = Pr[x_{i+1} = 1 | x_{1..i} = v], nan where the prefix is off support
    """
    tables = []
    for length in range(d.num_bits):
        parent = prefix_masses(d, length)
        children = prefix_masses(d, length + 1).reshape(-1, 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            p1 = np.where(parent > MASS_FLOOR, children[:, 1] / parent, np.nan)
        tables.append(np.clip(p1, 0.0, 1.0))
    return tables


def chain_rule_product(d: Distribution, x: str) -> float:
    """Π_i p_{x_{i+1} | x_{1..i}}, zero as soon as a prefix leaves the support."""
    product = 1.0
    for i in range(len(x)):
        query = conditional_next_bit(d, x[:i])
        if not query.defined:
            return 0.0
        product *= query.p1 if x[i] == "1" else query.p0
    return product


def uniform_distribution(num_bits: int) -> Distribution:
    return Distribution(num_bits, np.full(2 ** num_bits, 2.0 ** -num_bits))


def support_strings(d: Distribution, floor: float = 0.0) -> List[str]:
    return [format_bits(int(i), d.num_bits) for i in np.flatnonzero(d.probs > floor)]
