"""
Statevector Service for exact dense simulation of small qubit registers.

Provides gate application, projective measurement, Born-rule marginals and the
distance metrics (statistical distance, pure-state trace distance, fidelity of a
subsystem with a pure target) every other service is judged in.

Qubit 0 is the leftmost character of outcome strings and the most significant
bit of basis indices.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from services.errors import QubitCapExceeded

# --- SIMULATOR LIMITS ---
NORM_TOLERANCE = 1e-9
UNITARY_TOLERANCE = 1e-9
MAX_QUBITS = 24
# ------------------------

GATE_KINDS = ("single", "two", "two-level", "controlled", "oracle")

HADAMARD = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
PHASE_S = np.array([[1, 0], [0, 1j]], dtype=np.complex128)
IDENTITY = np.eye(2, dtype=np.complex128)
CNOT_MATRIX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128
)


# ---------------------------------------------------------------------------
# Bitstring helpers
# ---------------------------------------------------------------------------

def format_bits(value: int, width: int) -> str:
    """Render an integer as a big-endian bitstring of the given width."""
    if width == 0:
        return ""
    return format(value, f"0{width}b")


def parse_bits(bits: str) -> int:
    """Parse a big-endian bitstring ("" parses to 0)."""
    if bits and set(bits) - {"0", "1"}:
        raise ValueError(f"Not a bitstring: '{bits}'")
    return int(bits, 2) if bits else 0


def _check_qubit_cap(num_qubits: int):
    if num_qubits > MAX_QUBITS:
        raise QubitCapExceeded(
            f"Register of {num_qubits} qubits exceeds the cap of {MAX_QUBITS}"
        )


def _check_indices(qubits: Sequence[int], num_qubits: int):
    if len(set(qubits)) != len(qubits):
        raise ValueError(f"Qubit indices must be distinct, got {list(qubits)}")
    for q in qubits:
        if not (0 <= q < num_qubits):
            raise ValueError(f"Qubit index {q} out of range for {num_qubits} qubits")


def register_values(num_qubits: int, qubits: Sequence[int]) -> np.ndarray:
    """
    Value of a sub-register for every basis index of the full register.

    Args:
        num_qubits: Size of the full register
        qubits: Sub-register qubits, most significant first

    Returns:
        Integer array of length 2**num_qubits
    """
    index = np.arange(2 ** num_qubits, dtype=np.int64)
    values = np.zeros_like(index)
    for q in qubits:
        values = (values << 1) | ((index >> (num_qubits - 1 - q)) & 1)
    return values


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized dense amplitude vector over num_qubits qubits (read-only)."""
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.num_qubits < 0:
            raise ValueError(f"num_qubits must be non-negative, got {self.num_qubits}")
        _check_qubit_cap(self.num_qubits)
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.size != 2 ** self.num_qubits:
            raise ValueError(
                f"Expected {2 ** self.num_qubits} amplitudes for {self.num_qubits} qubits, got {amps.size}"
            )
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"State is not normalized (norm^2 = {norm:.12f})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped so that axis q is qubit q."""
        return self.amplitudes.reshape((2,) * self.num_qubits)


@dataclass(frozen=True, eq=False)
class GateOp:
    """
    One circuit operation.

    Kinds:
        single      2x2 unitary on targets[0]
        two         4x4 unitary on (targets[0], targets[1])
        two-level   2x2 unitary on the span of basis values `levels` of the
                    register `targets`; identity on the complement
        controlled  2x2 unitary on targets[0] when `controls` read `control_values`
        oracle      |z>|y> -> |z>|y xor table[z]>, z on `controls`, y on `targets`
    """
    kind: str
    targets: Tuple[int, ...]
    matrix: Optional[np.ndarray] = None
    table: Optional[Tuple[int, ...]] = None
    levels: Optional[Tuple[int, int]] = None
    controls: Tuple[int, ...] = ()
    control_values: Tuple[int, ...] = ()
    label: str = ""

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"Unsupported gate kind '{self.kind}'")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        object.__setattr__(self, "controls", tuple(int(c) for c in self.controls))
        object.__setattr__(self, "control_values", tuple(int(v) for v in self.control_values))
        _check_indices(self.targets + self.controls, max(self.targets + self.controls, default=-1) + 1)

        if self.kind == "oracle":
            if self.table is None or len(self.table) != 2 ** len(self.controls):
                raise ValueError("Oracle table must have one entry per input value")
            limit = 2 ** len(self.targets)
            if any(not (0 <= v < limit) for v in self.table):
                raise ValueError("Oracle table values must fit the output register")
            object.__setattr__(self, "table", tuple(int(v) for v in self.table))
            return

        expected = {"single": 1, "two": 2}.get(self.kind)
        if expected is not None and len(self.targets) != expected:
            raise ValueError(f"{self.kind} gate needs {expected} target(s), got {len(self.targets)}")
        if self.kind == "controlled":
            if len(self.targets) != 1 or len(self.control_values) != len(self.controls):
                raise ValueError("Controlled gate needs one target and one value per control")
        if self.kind == "two-level":
            if self.levels is None or self.levels[0] == self.levels[1]:
                raise ValueError("Two-level gate needs two distinct levels")
            if any(not (0 <= lv < 2 ** len(self.targets)) for lv in self.levels):
                raise ValueError("Two-level gate levels must fit the register")

        dim = 4 if self.kind == "two" else 2
        matrix = np.array(self.matrix, dtype=np.complex128)
        if matrix.shape != (dim, dim):
            raise ValueError(f"Dimension mismatch: {self.kind} gate needs a {dim}x{dim} matrix")
        if not np.allclose(matrix.conj().T @ matrix, np.eye(dim), atol=UNITARY_TOLERANCE, rtol=0):
            raise ValueError(f"Matrix for {self.label or self.kind} gate is not unitary")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    def qubits(self) -> Tuple[int, ...]:
        return self.controls + self.targets

    def fingerprint(self) -> bytes:
        """Byte encoding used for bit-exact circuit comparison."""
        head = f"{self.kind}|{self.targets}|{self.controls}|{self.control_values}|{self.levels}|"
        body = self.matrix.tobytes() if self.matrix is not None else repr(self.table).encode()
        return head.encode() + body


@dataclass(frozen=True, eq=False)
class Distribution:
    """Exact probability table over num_bits-bit strings (dense, big-endian index)."""
    num_bits: int
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64).reshape(-1)
        if probs.size != 2 ** self.num_bits:
            raise ValueError(f"Expected {2 ** self.num_bits} probabilities, got {probs.size}")
        if probs.min(initial=0.0) < -NORM_TOLERANCE:
            raise ValueError("Probabilities must be non-negative")
        probs = np.clip(probs, 0.0, None)
        total = float(probs.sum())
        if abs(total - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"Probabilities sum to {total:.12f}, expected 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_dict(cls, table: Dict[str, float], num_bits: Optional[int] = None) -> "Distribution":
        """Build from a bitstring -> probability map."""
        if num_bits is None:
            lengths = {len(k) for k in table}
            if len(lengths) != 1:
                raise ValueError("Cannot infer num_bits from keys of mixed length")
            num_bits = lengths.pop()
        probs = np.zeros(2 ** num_bits)
        for bits, p in table.items():
            if len(bits) != num_bits:
                raise ValueError(f"Key '{bits}' does not have {num_bits} bits")
            probs[parse_bits(bits)] += p
        return cls(num_bits, probs)

    @classmethod
    def point(cls, bits: str) -> "Distribution":
        return cls.from_dict({bits: 1.0})

    def prob(self, bits: str) -> float:
        if len(bits) != self.num_bits:
            raise ValueError(f"Expected {self.num_bits} bits, got '{bits}'")
        return float(self.probs[parse_bits(bits)])

    def as_dict(self) -> Dict[str, float]:
        """Nonzero entries keyed by bitstring, sorted by key."""
        return {
            format_bits(int(i), self.num_bits): float(self.probs[i])
            for i in np.flatnonzero(self.probs)
        }

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw basis indices."""
        return rng.choice(self.probs.size, size=size, p=self.probs / self.probs.sum())


# ---------------------------------------------------------------------------
# State construction
# ---------------------------------------------------------------------------

def from_amplitudes(amplitudes, normalize: bool = True) -> PureState:
    """Build a PureState, inferring the qubit count from the vector length."""
    amps = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
    size = amps.size
    if size == 0 or size & (size - 1):
        raise ValueError(f"Amplitude vector length must be a power of 2, got {size}")
    if normalize:
        norm = np.linalg.norm(amps)
        if norm < 1e-12:
            raise ValueError("Cannot normalize the zero vector")
        amps = amps / norm
    return PureState(size.bit_length() - 1, amps)


def basis_state(bits: str) -> PureState:
    """Computational basis state |bits>."""
    amps = np.zeros(2 ** len(bits), dtype=np.complex128)
    amps[parse_bits(bits)] = 1.0
    return PureState(len(bits), amps)


def zero_state(num_qubits: int) -> PureState:
    return basis_state("0" * num_qubits)


def tensor_states(first: PureState, second: PureState) -> PureState:
    """|first> ⊗ |second>; the second state's qubits follow the first's."""
    return PureState(first.num_qubits + second.num_qubits, np.kron(first.amplitudes, second.amplitudes))


def random_state(num_qubits: int, rng: np.random.Generator) -> PureState:
    """Haar-random pure state (normalized complex Gaussian vector)."""
    size = 2 ** num_qubits
    vec = rng.normal(size=size) + 1j * rng.normal(size=size)
    return from_amplitudes(vec)


# ---------------------------------------------------------------------------
# Gate construction
# ---------------------------------------------------------------------------

def single_qubit_gate(matrix: np.ndarray, qubit: int, label: str = "") -> GateOp:
    return GateOp("single", (qubit,), matrix=matrix, label=label)


def hadamard(qubit: int) -> GateOp:
    return single_qubit_gate(HADAMARD, qubit, "H")


def pauli_x(qubit: int) -> GateOp:
    return single_qubit_gate(PAULI_X, qubit, "X")


def phase_s(qubit: int) -> GateOp:
    return single_qubit_gate(PHASE_S, qubit, "S")


def cnot(control: int, target: int) -> GateOp:
    return GateOp("two", (control, target), matrix=CNOT_MATRIX, label="CNOT")


def classical_oracle(inputs: Sequence[int], outputs: Sequence[int], table: Sequence[int], label: str = "") -> GateOp:
    """Σ_z |z><z| ⊗ X^{table[z]} writing into a separate output register."""
    return GateOp("oracle", tuple(outputs), table=tuple(table), controls=tuple(inputs), label=label)


def inverse_gate(gate: GateOp) -> GateOp:
    """Adjoint of a gate (oracles are self-inverse)."""
    if gate.kind == "oracle":
        return gate
    return GateOp(
        gate.kind,
        gate.targets,
        matrix=gate.matrix.conj().T,
        levels=gate.levels,
        controls=gate.controls,
        control_values=gate.control_values,
        label=f"{gate.label}†" if gate.label else "",
    )


def inverse_circuit(circuit: Sequence[GateOp]) -> List[GateOp]:
    return [inverse_gate(g) for g in reversed(circuit)]


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def apply_gate(state: PureState, gate: GateOp) -> PureState:
    """
    Apply one gate and return the new state (the input is left unchanged).

    Raises:
        ValueError: If a gate qubit is outside the register
    """
    n = state.num_qubits
    _check_indices(gate.qubits(), n)

    if gate.kind in ("single", "two"):
        k = len(gate.targets)
        u = gate.matrix.reshape((2,) * (2 * k))
        out = np.tensordot(u, state.tensor(), axes=(list(range(k, 2 * k)), list(gate.targets)))
        out = np.moveaxis(out, list(range(k)), list(gate.targets))
        return PureState(n, out.reshape(-1))

    if gate.kind == "controlled":
        psi = state.tensor().copy()
        index = [slice(None)] * n
        for c, v in zip(gate.controls, gate.control_values):
            index[c] = v
        index = tuple(index)
        sub = psi[index]
        axis = gate.targets[0] - sum(1 for c in gate.controls if c < gate.targets[0])
        rotated = np.tensordot(gate.matrix, sub, axes=([1], [axis]))
        psi[index] = np.moveaxis(rotated, 0, axis)
        return PureState(n, psi.reshape(-1))

    amps = state.amplitudes
    if gate.kind == "two-level":
        values = register_values(n, gate.targets)
        idx0 = np.flatnonzero(values == gate.levels[0])
        idx1 = np.flatnonzero(values == gate.levels[1])
        a0, a1 = amps[idx0], amps[idx1]
        out = amps.copy()
        m = gate.matrix
        out[idx0] = m[0, 0] * a0 + m[0, 1] * a1
        out[idx1] = m[1, 0] * a0 + m[1, 1] * a1
        return PureState(n, out)

    # oracle
    z = register_values(n, gate.controls)
    f = np.asarray(gate.table, dtype=np.int64)[z]
    width = len(gate.targets)
    mask = np.zeros_like(f)
    for k, q in enumerate(gate.targets):
        mask |= ((f >> (width - 1 - k)) & 1) << (n - 1 - q)
    index = np.arange(2 ** n, dtype=np.int64)
    out = np.empty_like(amps)
    out[index ^ mask] = amps
    return PureState(n, out)


def run_circuit(circuit: Sequence[GateOp], num_qubits: int, initial: Optional[PureState] = None) -> PureState:
    """Run a gate list from |0^n> (or from `initial`)."""
    _check_qubit_cap(num_qubits)
    state = initial if initial is not None else zero_state(num_qubits)
    if state.num_qubits != num_qubits:
        raise ValueError(f"Initial state has {state.num_qubits} qubits, expected {num_qubits}")
    for gate in circuit:
        state = apply_gate(state, gate)
    return state


def gate_matrix(gate: GateOp, num_qubits: int) -> np.ndarray:
    """Dense matrix of a gate on the full register (small registers only)."""
    columns = [
        apply_gate(basis_state(format_bits(i, num_qubits)), gate).amplitudes
        for i in range(2 ** num_qubits)
    ]
    return np.stack(columns, axis=1)


def _split_register(state: PureState, qubits: Sequence[int]) -> np.ndarray:
    """Matrix with rows indexed by `qubits` values and columns by the rest."""
    n = state.num_qubits
    k = len(qubits)
    if n == 0:
        return state.amplitudes.reshape(1, 1)
    moved = np.moveaxis(state.tensor(), list(qubits), list(range(k)))
    return moved.reshape(2 ** k, 2 ** (n - k))


def measure_subset(state: PureState, qubits: Sequence[int], rng: np.random.Generator) -> Tuple[str, PureState]:
    """
    Projectively measure `qubits` in the computational basis.

    Args:
        state: State to measure
        qubits: Measured qubits; the outcome string lists them in this order
        rng: Random stream

    Returns:
        (outcome bitstring, renormalized residual state on the unmeasured qubits,
        which keep their relative order)
    """
    if state.num_qubits == 0:
        raise ValueError("Cannot measure an empty state")
    _check_indices(qubits, state.num_qubits)
    mat = _split_register(state, qubits)
    weights = np.sum(np.abs(mat) ** 2, axis=1)
    outcome = int(rng.choice(weights.size, p=weights / weights.sum()))
    row = mat[outcome] / np.sqrt(weights[outcome])
    return format_bits(outcome, len(qubits)), PureState(state.num_qubits - len(qubits), row)


def measure_shots(state: PureState, qubits: Sequence[int], shots: int, rng: np.random.Generator) -> np.ndarray:
    """Outcome indices of `shots` independent measurements of `qubits` (no collapse kept)."""
    return born_distribution(state, qubits).sample(rng, shots)


def born_distribution(state: PureState, qubits: Optional[Sequence[int]] = None) -> Distribution:
    """Exact marginal outcome distribution of `qubits` (all qubits by default)."""
    if qubits is None:
        qubits = list(range(state.num_qubits))
    _check_indices(qubits, state.num_qubits)
    mat = _split_register(state, qubits)
    weights = np.sum(np.abs(mat) ** 2, axis=1)
    return Distribution(len(qubits), weights / weights.sum())


def marginalize(dist: Distribution, positions: Sequence[int]) -> Distribution:
    """Marginal of a distribution on the given bit positions (in the given order)."""
    _check_indices(positions, dist.num_bits)
    table = dist.probs.reshape((2,) * dist.num_bits) if dist.num_bits else dist.probs
    rest = tuple(i for i in range(dist.num_bits) if i not in positions)
    summed = table.sum(axis=rest) if rest else table
    kept = sorted(positions)
    order = [kept.index(p) for p in positions]
    return Distribution(len(positions), np.transpose(summed, order).reshape(-1))


def statistical_distance(a: Distribution, b: Distribution) -> float:
    """Half the l1 distance between two tables over the same bit length."""
    if a.num_bits != b.num_bits:
        raise ValueError(f"Bit-length mismatch: {a.num_bits} vs {b.num_bits}")
    return float(min(1.0, 0.5 * np.abs(a.probs - b.probs).sum()))


def trace_distance_pure(a: PureState, b: PureState) -> float:
    """sqrt(1 - |<a|b>|^2)."""
    if a.num_qubits != b.num_qubits:
        raise ValueError(f"Dimension mismatch: {a.num_qubits} vs {b.num_qubits} qubits")
    overlap = abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2
    return float(np.sqrt(max(0.0, 1.0 - overlap)))


def euclidean_distance(a: PureState, b: PureState) -> float:
    if a.num_qubits != b.num_qubits:
        raise ValueError(f"Dimension mismatch: {a.num_qubits} vs {b.num_qubits} qubits")
    return float(np.linalg.norm(a.amplitudes - b.amplitudes))


def overlap_with_pure(joint: PureState, target: PureState, subsystem: Sequence[int]) -> float:
    """
    Fidelity of the reduced state of `subsystem` with a pure target,
    Tr((|t><t| ⊗ I) |joint><joint|).
    """
    if target.num_qubits != len(subsystem):
        raise ValueError(
            f"Dimension mismatch: target has {target.num_qubits} qubits, subsystem {len(subsystem)}"
        )
    _check_indices(subsystem, joint.num_qubits)
    mat = _split_register(joint, subsystem)
    projected = target.amplitudes.conj() @ mat
    return float(np.clip(np.vdot(projected, projected).real, 0.0, 1.0))


def fidelity(a: PureState, b: PureState) -> float:
    """|<a|b>|^2, i.e. overlap up to global phase."""
    return overlap_with_pure(a, b, list(range(a.num_qubits)))
