"""
Design Service for uniform Clifford sampling and flatness statistics.

Cliffords are drawn exactly uniformly (modulo global phase) with the
symplectic sweeping construction: at each level a uniform pair of
anticommuting Paulis (P, Q) fixes where X and Z of the leading qubit go, the
sweep finds a circuit taking (P, Q) back to (X, Z), and its inverse is kept.
One uniform Pauli layer in front of the whole circuit fixes the signs.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from services.qsim_service import (
    PureState,
    GateOp,
    born_distribution,
    cnot,
    from_amplitudes,
    hadamard,
    phase_s,
    run_circuit,
    zero_state,
)

# Heavy mass above this marks a Clifford as non-flat
HEAVY_MASS_CUTOFF = 0.05

CliffordGate = Tuple[str, Tuple[int, ...]]


@dataclass(frozen=True)
class CliffordElement:
    """Clifford circuit over {H, S, CNOT}, regenerable from (num_qubits, seed)."""
    num_qubits: int
    gates: Tuple[CliffordGate, ...]
    seed: int

    def to_circuit(self) -> List[GateOp]:
        builders = {"H": hadamard, "S": phase_s, "CNOT": cnot}
        return [builders[name](*qubits) for name, qubits in self.gates]

    def apply(self, state: PureState) -> PureState:
        return run_circuit(self.to_circuit(), self.num_qubits, state)


@dataclass(frozen=True)
class FlatnessReport:
    threshold: float
    heavy_mass: Tuple[float, ...]
    fraction_flat: float
    empirical_second_moment: float


def identity_clifford(num_qubits: int) -> CliffordElement:
    return CliffordElement(num_qubits, (), seed=-1)


# ---------------------------------------------------------------------------
# Symplectic sweeping
# ---------------------------------------------------------------------------

def _symplectic_product(a: np.ndarray, b: np.ndarray, m: int) -> int:
    return int((a[:m] @ b[m:] + a[m:] @ b[:m]) % 2)


def _conjugate(pauli: np.ndarray, m: int, name: str, qubits: Tuple[int, ...]):
    """Update a Pauli's (x | z) bits in place under conjugation by one gate."""
    x, z = pauli[:m], pauli[m:]
    if name == "H":
        j = qubits[0]
        x[j], z[j] = z[j], x[j]
    elif name == "S":
        j = qubits[0]
        z[j] ^= x[j]
    else:
        c, t = qubits
        x[t] ^= x[c]
        z[c] ^= z[t]


class _Sweep:
    """Records gates while reducing a pair of Paulis on m local qubits."""

    def __init__(self, p: np.ndarray, q: np.ndarray, m: int):
        self.p, self.q, self.m = p, q, m
        self.gates: List[CliffordGate] = []

    def apply(self, name: str, *qubits: int):
        _conjugate(self.p, self.m, name, qubits)
        _conjugate(self.q, self.m, name, qubits)
        self.gates.append((name, qubits))

    def reduce_to_x0(self, row: np.ndarray):
        """Turn `row` into X on local qubit 0; qubit 0 is never a CNOT target while it holds X."""
        m = self.m
        for j in range(m):
            if row[m + j]:
                self.apply("H" if not row[j] else "S", j)
        support = [j for j in range(m) if row[j]]
        while len(support) > 1:
            for k in range(0, len(support) - 1, 2):
                self.apply("CNOT", support[k], support[k + 1])
            support = support[::2]
        if support[0] != 0:
            j = support[0]
            self.apply("CNOT", 0, j)
            self.apply("CNOT", j, 0)
            self.apply("CNOT", 0, j)


def _is_z0(row: np.ndarray, m: int) -> bool:
    expected = np.zeros(2 * m, dtype=np.uint8)
    expected[m] = 1
    return bool(np.array_equal(row, expected))


def _level_gates(m: int, rng: np.random.Generator) -> List[CliffordGate]:
    """Local circuit mapping X_0, Z_0 to a uniform anticommuting pair (up to sign)."""
    while True:
        p = rng.integers(0, 2, size=2 * m, dtype=np.uint8)
        if p.any():
            break
    while True:
        q = rng.integers(0, 2, size=2 * m, dtype=np.uint8)
        if _symplectic_product(p, q, m) == 1:
            break

    sweep = _Sweep(p, q, m)
    sweep.reduce_to_x0(sweep.p)
    if not _is_z0(sweep.q, m):
        sweep.apply("H", 0)
        sweep.reduce_to_x0(sweep.q)
        sweep.apply("H", 0)

    inverse: List[CliffordGate] = []
    for name, qubits in reversed(sweep.gates):
        inverse.extend([("S", qubits)] * 3 if name == "S" else [(name, qubits)])
    return inverse


def clifford_from_seed(num_qubits: int, seed: int) -> CliffordElement:
    """Regenerate the Clifford drawn with a given seed."""
    rng = np.random.default_rng(seed)
    gates: List[CliffordGate] = []

    # uniform Pauli layer: X = H S S H, Z = S S
    for j in range(num_qubits):
        x_bit, z_bit = rng.integers(0, 2, size=2)
        if z_bit:
            gates.extend([("S", (j,)), ("S", (j,))])
        if x_bit:
            gates.extend([("H", (j,)), ("S", (j,)), ("S", (j,)), ("H", (j,))])

    # deepest level first in time order
    levels = [_level_gates(num_qubits - offset, rng) for offset in range(num_qubits)]
    for offset in reversed(range(num_qubits)):
        gates.extend((name, tuple(q + offset for q in qubits)) for name, qubits in levels[offset])
    return CliffordElement(num_qubits, tuple(gates), int(seed))


def sample_clifford(n: int, rng: np.random.Generator) -> CliffordElement:
    """Uniform n-qubit Clifford; the drawn seed is kept for regeneration."""
    return clifford_from_seed(n, int(rng.integers(2 ** 63)))


def identify_single_qubit_clifford(element: CliffordElement) -> str:
    """Canonical key of a 1-qubit Clifford from its images of |0> and |+>, each up to phase."""
    if element.num_qubits != 1:
        raise ValueError("Only single-qubit Cliffords can be identified")
    parts = []
    for start in (zero_state(1), from_amplitudes([1, 1])):
        image = element.apply(start).amplitudes
        lead = image[np.flatnonzero(np.abs(image) > 1e-6)[0]]
        fixed = image * np.conj(lead) / abs(lead)
        re = np.round(fixed.real, 6) + 0.0
        im = np.round(fixed.imag, 6) + 0.0
        parts.append(",".join(f"{a:+.6f}{b:+.6f}j" for a, b in zip(re, im)))
    return "|".join(parts)


# ---------------------------------------------------------------------------
# Flatness
# ---------------------------------------------------------------------------

def second_moment_target(n: int) -> float:
    """E_{C,x}[p_C(x)^2] for any 2-design: 2 / (2^n (2^n + 1))."""
    dim = 2 ** n
    return 2.0 / (dim * (dim + 1))


def heavy_mass(probs: np.ndarray, threshold: float) -> float:
    return float(min(1.0, probs[probs >= threshold].sum()))


def flatness_stats(psi: PureState, num_cliffords: int, threshold: float, rng: np.random.Generator,
                   cliffords: Optional[Sequence[CliffordElement]] = None,
                   heavy_cutoff: float = HEAVY_MASS_CUTOFF) -> FlatnessReport:
    """
    Heavy-mass and second-moment statistics of C|psi> over sampled Cliffords.

    Args:
        psi: Input state
        num_cliffords: Number of uniform Cliffords to draw
        threshold: Strings with p_C(x) >= threshold count as heavy
        rng: Random stream
        cliffords: Explicit elements to use instead of sampling
        heavy_cutoff: Heavy mass above this marks a Clifford as non-flat

    Returns:
        FlatnessReport
    """
    n = psi.num_qubits
    elements = list(cliffords) if cliffords is not None else [
        sample_clifford(n, rng) for _ in range(num_cliffords)
    ]
    masses = []
    moments = []
    for element in elements:
        probs = born_distribution(element.apply(psi)).probs
        masses.append(heavy_mass(probs, threshold))
        moments.append(float(np.mean(probs ** 2)))
    fraction_flat = float(np.mean([m <= heavy_cutoff for m in masses])) if masses else 1.0
    second_moment = float(np.mean(moments)) if moments else 0.0
    return FlatnessReport(threshold, tuple(masses), fraction_flat, second_moment)
