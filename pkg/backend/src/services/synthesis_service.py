"""
Synthesis Service for state puzzles.

State-puzzle generation, the one-way-puzzle sampler built on top of a state
puzzle (prefix measurement in mode 0, two-to-one shift plus rotated-basis
measurement in mode 1), and the inverse direction: amplitude synthesis from
prefix conditionals, phase recovery from rotated-basis statistics and the full
reconstruction of |psi_s>.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from services.design_service import CliffordElement, sample_clifford
from services.distribution_service import CircuitFamily, conditional_tables, sample_circuit
from services.errors import UndefinedSupportError
from services.oracle_service import NoiseSpec, SamplerOracle, noisy_sampler
from services.qsim_service import (
    GateOp,
    PureState,
    apply_gate,
    born_distribution,
    classical_oracle,
    fidelity,
    format_bits,
    from_amplitudes,
    inverse_circuit,
    measure_subset,
    parse_bits,
    run_circuit,
    tensor_states,
    zero_state,
)

# Strings lighter than this keep phase 0
PHASE_AMPLITUDE_FLOOR = 1e-6


# ---------------------------------------------------------------------------
# State puzzles
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PuzzleCircuit:
    """
    Purified puzzle generator: running `circuit` on |0...0> prepares
    Σ_s √p_s |s>|ψ_s>|junk>. The puzzle register comes first, the state register
    next and any junk qubits last.
    """
    circuit: Tuple[GateOp, ...]
    num_qubits: int
    puzzle_qubits: int
    state_qubits: int
    generator_id: str

    def __post_init__(self):
        if self.puzzle_qubits + self.state_qubits > self.num_qubits:
            raise ValueError("Puzzle and state registers do not fit the generator")


@dataclass(frozen=True, eq=False)
class StatePuzzleInstance:
    s: str
    psi: PureState
    generator_id: str


def state_puzzle_generator(family: CircuitFamily, puzzle_qubits: int) -> PuzzleCircuit:
    """Generator whose circuit is drawn from a family over puzzle + state qubits (no junk)."""
    circuit = tuple(sample_circuit(family))
    generator_id = f"{family.family_kind}:{family.num_qubits}:{family.depth}:{family.seed}"
    return PuzzleCircuit(circuit, family.num_qubits, puzzle_qubits,
                         family.num_qubits - puzzle_qubits, generator_id)


def state_puzzle_from_sampler(gen: PuzzleCircuit, rng: np.random.Generator) -> StatePuzzleInstance:
    """Run the generator, measure the puzzle register and keep the residual state."""
    joint = run_circuit(gen.circuit, gen.num_qubits)
    s, residual = measure_subset(joint, list(range(gen.puzzle_qubits)), rng)
    return StatePuzzleInstance(s, residual, gen.generator_id)


def regenerate_state(gen: PuzzleCircuit, s: str) -> PureState:
    """Residual state for a given puzzle string (post-selection on s)."""
    joint = run_circuit(gen.circuit, gen.num_qubits)
    block = 2 ** (gen.num_qubits - gen.puzzle_qubits)
    start = parse_bits(s) * block
    return from_amplitudes(joint.amplitudes[start:start + block])


# ---------------------------------------------------------------------------
# One-way puzzle from a state puzzle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Mode0Puzzle:
    s: str
    c_id: int
    index: int
    prefix: str
    key: int


@dataclass(frozen=True)
class Mode1Puzzle:
    s: str
    c_id: int
    y0: str
    y1: str
    b_rot: int
    key: int

    def __post_init__(self):
        if self.y0 == self.y1:
            raise ValueError("Mode-1 puzzle needs y0 != y1")


@dataclass(frozen=True)
class PairStateParams:
    theta: float
    phi: float

    def __post_init__(self):
        if not (0.0 <= self.theta <= np.pi):
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")
        if not (0.0 <= self.phi < 2 * np.pi):
            raise ValueError(f"phi must lie in [0, 2pi), got {self.phi}")


def shift_table(r: int, n: int) -> List[int]:
    """f_r(z) = min(z, z xor r) under big-endian unsigned order."""
    return [min(z, z ^ r) for z in range(2 ** n)]


def make_V(y0: str, y1: str, b: int, qubits: Optional[Sequence[int]] = None) -> GateOp:
    """
    Two-level rotation on span{|y0>, |y1>}, identity elsewhere.

    Its rows are <y0|V = (<y0| + i^b <y1|)/√2 and <y1|V = (<y0| − i^b <y1|)/√2,
    so measuring V(α0|y0> + α1|y1>) gives y0 with probability
    |α0 + i^b α1|² / (2(|α0|² + |α1|²)).

    Raises:
        ValueError: If y0 == y1 or the strings differ in length
    """
    if y0 == y1:
        raise ValueError("make_V needs two distinct basis strings")
    if len(y0) != len(y1):
        raise ValueError("make_V basis strings must have equal length")
    phase = 1j ** b
    matrix = np.array([[1, phase], [1, -phase]], dtype=np.complex128) / np.sqrt(2)
    targets = tuple(qubits) if qubits is not None else tuple(range(len(y0)))
    return GateOp("two-level", targets, matrix=matrix, levels=(parse_bits(y0), parse_bits(y1)),
                  label=f"V[{y0},{y1},{b}]")


def pair_state(params: PairStateParams, x0: str, x1: str) -> PureState:
    """cos(θ/2)|x0> + sin(θ/2) e^{−iφ}|x1>."""
    if x0 == x1 or len(x0) != len(x1):
        raise ValueError("pair_state needs two distinct strings of equal length")
    amps = np.zeros(2 ** len(x0), dtype=np.complex128)
    amps[parse_bits(x0)] = np.cos(params.theta / 2)
    amps[parse_bits(x1)] = np.sin(params.theta / 2) * np.exp(-1j * params.phi)
    return PureState(len(x0), amps)


def mode1_law(params: PairStateParams, b_rot: int) -> float:
    """Pr[β = 0] for the pair state measured with y0 = x0: (1 + sinθ cosφ)/2 or (1 + sinθ sinφ)/2."""
    trig = np.cos(params.phi) if b_rot == 0 else np.sin(params.phi)
    return float((1 + np.sin(params.theta) * trig) / 2)


def rotated_key(state: PureState, y0: str, y1: str, b_rot: int, rng: np.random.Generator) -> int:
    """Apply V_{y0,y1,b_rot}, measure every qubit, and return β = 0 iff the outcome is y0."""
    rotated = apply_gate(state, make_V(y0, y1, b_rot))
    outcome, _ = measure_subset(rotated, list(range(state.num_qubits)), rng)
    return 0 if outcome == y0 else 1


def mode0_measurement(state: PureState, rng: np.random.Generator) -> Tuple[int, str, int]:
    """Measure a uniform-length prefix and then the next bit; returns (i, prefix, β)."""
    n = state.num_qubits
    i = int(rng.integers(n))
    prefix, residual = ("", state) if i == 0 else measure_subset(state, list(range(i)), rng)
    beta, _ = measure_subset(residual, [0], rng)
    return i, prefix, int(beta)


def mode1_measurement(state: PureState, r: int, rng: np.random.Generator) -> Tuple[str, str, PureState]:
    """
    Write f_r onto a fresh register and measure it.

    Returns:
        (x0, x1, residual) where x0 = the measured image and x1 = x0 xor r
    """
    n = state.num_qubits
    if not (0 < r < 2 ** n):
        raise ValueError(f"Shift r must be a nonzero {n}-bit value, got {r}")
    extended = tensor_states(state, zero_state(n))
    oracle = classical_oracle(range(n), range(n, 2 * n), shift_table(r, n), label=f"f_{r}")
    image, residual = measure_subset(apply_gate(extended, oracle), list(range(n, 2 * n)), rng)
    w = parse_bits(image)
    return format_bits(w, n), format_bits(w ^ r, n), residual


def owp_sampler_statepuzzle(gen: PuzzleCircuit, rng: np.random.Generator) -> Tuple[Union[Mode0Puzzle, Mode1Puzzle], int]:
    """
    Sample one (puzzle, key) pair from a state puzzle.

    The state puzzle is sampled, a uniform Clifford c is applied to the state
    register, and b_mode picks between the prefix measurement (mode 0) and the
    shift-and-rotate measurement (mode 1).
    """
    instance = state_puzzle_from_sampler(gen, rng)
    n = gen.state_qubits
    clifford = sample_clifford(n, rng)
    psi = instance.psi
    if psi.num_qubits != n:
        raise ValueError("Puzzle generators with junk registers are not supported by this sampler")
    state = clifford.apply(psi)

    if int(rng.integers(2)) == 0:
        i, prefix, beta = mode0_measurement(state, rng)
        return Mode0Puzzle(instance.s, clifford.seed, i, prefix, beta), beta

    r = int(rng.integers(1, 2 ** n))
    x0, x1, residual = mode1_measurement(state, r, rng)
    y0, y1 = (x0, x1) if rng.integers(2) == 0 else (x1, x0)
    b_rot = int(rng.integers(2))
    beta = rotated_key(residual, y0, y1, b_rot, rng)
    return Mode1Puzzle(instance.s, clifford.seed, y0, y1, b_rot, beta), beta


# ---------------------------------------------------------------------------
# Inverters for the state-puzzle one-way puzzle
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StatePuzzleInverter:
    """
    Brute-force inverter for puzzles drawn with a fixed (s, c).

    Mode-0 answers come from a (possibly noisy) post-selected sampler on the
    Born distribution of c|psi_s>. Mode-1 answers follow the exact rotated-basis
    law, with Pr[β = 0] pulled toward 1/2 by the noise epsilon.
    """
    psi_c: PureState
    noise: NoiseSpec
    mode0: SamplerOracle
    s: str = ""
    c_id: int = -1

    @property
    def num_qubits(self) -> int:
        return self.psi_c.num_qubits

    def mode0_probability(self, prefix: str) -> float:
        return self.mode0.next_bit_probability(prefix)

    def exact_mode1_probability(self, y0: str, y1: str, b_rot: int) -> float:
        a0 = self.psi_c.amplitudes[parse_bits(y0)]
        a1 = self.psi_c.amplitudes[parse_bits(y1)]
        weight = abs(a0) ** 2 + abs(a1) ** 2
        if weight == 0:
            return 0.5
        return float(min(1.0, abs(a0 + (1j ** b_rot) * a1) ** 2 / (2 * weight)))

    def mode1_probability(self, y0: str, y1: str, b_rot: int) -> float:
        p0 = self.exact_mode1_probability(y0, y1, b_rot)
        eps = self.noise.epsilon
        return max(p0 - eps, 0.5) if p0 > 0.5 else min(p0 + eps, 0.5)

    def query_mode0(self, prefix: str, trials: Optional[int], rng: np.random.Generator) -> float:
        """Frequency of next-bit ones over `trials` calls; the exact conditional when trials is None."""
        if trials is None:
            return self.mode0_probability(prefix)
        return self.mode0.count_ones(prefix, trials, rng) / trials

    def query_mode1(self, y0: str, y1: str, b_rot: int, trials: Optional[int], rng: np.random.Generator) -> float:
        """Frequency of β = 0 over `trials` calls; the exact law when trials is None."""
        p0 = self.mode1_probability(y0, y1, b_rot)
        if trials is None:
            return p0
        return int(rng.binomial(trials, p0)) / trials


def build_inverter(psi_c: PureState, noise: NoiseSpec, s: str = "", c_id: int = -1) -> StatePuzzleInverter:
    return StatePuzzleInverter(psi_c, noise, noisy_sampler(born_distribution(psi_c), noise), s, c_id)


def inverter_sd_budget(inverter: StatePuzzleInverter) -> Dict[str, float]:
    """
    Realized statistical distance between the inverter's key law and the true
    one, over the puzzle distribution of each mode and averaged over b_mode.
    """
    n = inverter.num_qubits
    probs = np.abs(inverter.psi_c.amplitudes) ** 2
    mode1 = 0.0
    if n >= 1:
        for r in range(1, 2 ** n):
            for w in range(2 ** n):
                if w > w ^ r:
                    continue
                weight = (probs[w] + probs[w ^ r]) / (2 ** n - 1)
                if weight == 0:
                    continue
                x0, x1 = format_bits(w, n), format_bits(w ^ r, n)
                for y0, y1 in ((x0, x1), (x1, x0)):
                    for b_rot in (0, 1):
                        gap = abs(inverter.mode1_probability(y0, y1, b_rot)
                                  - inverter.exact_mode1_probability(y0, y1, b_rot))
                        mode1 += weight * gap / 4
    mode0 = inverter.mode0.realized_sd
    return {"mode0": mode0, "mode1": mode1, "total": (mode0 + mode1) / 2}


# ---------------------------------------------------------------------------
# Amplitude synthesis
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AmplitudeResult:
    state: PureState
    estimates: Dict[str, float]
    errors: Dict[str, float]
    flagged: Tuple[str, ...]


def prefix_tree_state(estimates: Dict[str, float], n: int) -> Tuple[np.ndarray, List[str]]:
    """
    Real amplitudes Σ_x √(Π p̃) |x> from next-bit-one estimates per prefix.

    Returns:
        (unnormalized amplitude vector, prefixes that were reached but had no estimate)
    """
    amps = np.ones(1)
    missing = []
    for length in range(n):
        children = np.zeros(2 ** (length + 1))
        for v in np.flatnonzero(amps > 0):
            prefix = format_bits(int(v), length)
            p1 = estimates.get(prefix)
            if p1 is None:
                missing.append(prefix)
                continue
            children[2 * v] = amps[v] * np.sqrt(1.0 - p1)
            children[2 * v + 1] = amps[v] * np.sqrt(p1)
        amps = children
    return amps, missing


def amplitude_synthesis(inverter: StatePuzzleInverter, trials: Optional[int],
                        rng: np.random.Generator) -> AmplitudeResult:
    """
    Build the real-amplitude state over the prefix tree from mode-0 estimates.

    Prefixes with no inverter support get amplitude zero and are flagged; the
    result is renormalized.
    """
    n = inverter.num_qubits
    truth = conditional_tables(born_distribution(inverter.psi_c))
    estimates: Dict[str, float] = {}
    errors: Dict[str, float] = {}
    flagged: List[str] = []
    amps = np.ones(1)
    for length in range(n):
        for v in np.flatnonzero(amps > 0):
            prefix = format_bits(int(v), length)
            try:
                p1 = inverter.query_mode0(prefix, trials, rng)
            except UndefinedSupportError:
                flagged.append(prefix)
                continue
            estimates[prefix] = p1
            exact = truth[length][v]
            if not np.isnan(exact):
                errors[prefix] = abs(p1 - float(exact))
        amps, _ = prefix_tree_state(estimates, length + 1)
    return AmplitudeResult(from_amplitudes(amps), estimates, errors, tuple(flagged))


def purified_amplitude_synthesis(estimates: Dict[str, float], n: int) -> PureState:
    """
    Coherent version of the prefix-tree construction on n state qubits plus a
    label register appended last.

    Per level, a classical oracle writes the label of the prefix's estimate into
    the label register, rotations controlled on the label set the next qubit,
    and the oracle is applied again to return the label register to |0>.
    Prefixes the tree never reaches carry no amplitude and get the identity
    rotation.

    Raises:
        ValueError: If a reached prefix has no estimate (its zero amplitude has no unitary form)
    """
    _, missing = prefix_tree_state(estimates, n)
    if missing:
        raise ValueError(f"Reached prefixes without estimates: {missing}")
    levels = []
    width = 1
    for length in range(n):
        values = [estimates.get(format_bits(v, length), 0.0) for v in range(2 ** length)]
        distinct = sorted(set(values))
        levels.append((values, distinct))
        width = max(width, int(np.ceil(np.log2(len(distinct)))) if len(distinct) > 1 else 1)

    labels = list(range(n, n + width))
    circuit: List[GateOp] = []
    for length, (values, distinct) in enumerate(levels):
        table = [distinct.index(p) for p in values]
        oracle = classical_oracle(range(length), labels, table, label=f"E_{length}")
        circuit.append(oracle)
        for label, p1 in enumerate(distinct):
            c, s = np.sqrt(1.0 - p1), np.sqrt(p1)
            rotation = np.array([[c, -s], [s, c]], dtype=np.complex128)
            bits = format_bits(label, width)
            circuit.append(GateOp("controlled", (length,), matrix=rotation, controls=tuple(labels),
                                  control_values=tuple(int(b) for b in bits), label=f"R_{length}_{label}"))
        circuit.append(oracle)
    return run_circuit(circuit, n + width)


# ---------------------------------------------------------------------------
# Phase recovery and full synthesis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseEstimate:
    u: float
    v: float
    phi_hat: float


@dataclass(frozen=True)
class SynthesisDiagnostics:
    pivot: str
    amplitude_errors: Dict[str, float]
    phase_errors: Dict[str, float]
    delta: float
    flagged: Tuple[str, ...] = field(default=())


@dataclass(frozen=True, eq=False)
class SynthesisResult:
    state: PureState
    fidelity: float
    diagnostics: SynthesisDiagnostics


def phase_estimate(inverter: StatePuzzleInverter, z: str, z_prime: str, trials: Optional[int],
                   rng: np.random.Generator) -> PhaseEstimate:
    """Relative phase of z_prime against the anchor z from the two rotated-basis frequencies."""
    if z == z_prime:
        raise ValueError("phase_estimate needs an anchor distinct from the target")
    u = 2 * inverter.query_mode1(z, z_prime, 0, trials, rng) - 1
    v = 2 * inverter.query_mode1(z, z_prime, 1, trials, rng) - 1
    phi_hat = float(np.arctan2(v, u))
    if phi_hat == -np.pi:
        phi_hat = float(np.pi)
    return PhaseEstimate(float(u), float(v), phi_hat)


def _wrap(angle: float) -> float:
    return float(abs((angle + np.pi) % (2 * np.pi) - np.pi))


def full_synthesis(instance: StatePuzzleInstance, noise: NoiseSpec, trials: Optional[int],
                   rng: np.random.Generator, clifford: Optional[CliffordElement] = None) -> SynthesisResult:
    """
    Reconstruct |psi_s> from inverters for the state-puzzle one-way puzzle.

    Args:
        instance: The state puzzle (s, |psi_s>) to reconstruct
        noise: Inverter noise
        trials: Inverter calls per estimate; None uses exact conditionals
        rng: Random stream
        clifford: Fixed Clifford instead of a uniform draw

    Returns:
        SynthesisResult with the output state, its fidelity with |psi_s> and diagnostics
    """
    psi = instance.psi
    n = psi.num_qubits
    if clifford is None:
        clifford = sample_clifford(n, rng)
    psi_c = clifford.apply(psi)
    inverter = build_inverter(psi_c, noise, instance.s, clifford.seed)

    synthesized = amplitude_synthesis(inverter, trials, rng)
    pivot, _ = measure_subset(synthesized.state, list(range(n)), rng)
    amps = synthesized.state.amplitudes.copy()
    truth = psi_c.amplitudes
    anchor = parse_bits(pivot)
    phase_errors: Dict[str, float] = {}
    for index in np.flatnonzero(np.abs(amps) >= PHASE_AMPLITUDE_FLOOR):
        if index == anchor:
            continue
        target = format_bits(int(index), n)
        estimate = phase_estimate(inverter, pivot, target, trials, rng)
        amps[index] *= np.exp(-1j * estimate.phi_hat)
        if abs(truth[index]) > 0 and abs(truth[anchor]) > 0:
            true_phase = float(np.angle(truth[anchor] * np.conj(truth[index])))
            phase_errors[target] = _wrap(estimate.phi_hat - true_phase)

    output = run_circuit(inverse_circuit(clifford.to_circuit()), n, from_amplitudes(amps))
    diagnostics = SynthesisDiagnostics(
        pivot=pivot,
        amplitude_errors=synthesized.errors,
        phase_errors=phase_errors,
        delta=inverter_sd_budget(inverter)["total"],
        flagged=synthesized.flagged,
    )
    score = fidelity(output, psi)
    return SynthesisResult(output, score, diagnostics)


# ---------------------------------------------------------------------------
# Geometric bound on phase recovery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeometricCheck:
    lhs: float
    bound: float
    ok: bool
    rejected: bool


def geometric_bound_check(x: float, y: float, x_star: float, y_star: float,
                          gamma: float, gamma_prime: float) -> GeometricCheck:
    """
    |e^{−i·arctan2(y,x)} − e^{−i·arctan2(y*,x*)}| ≤ 2γ′/γ for points at radius
    ≥ γ moved by at most γ′ < γ. Inputs outside those preconditions are flagged
    as rejected rather than counted.
    """
    rejected = not (x * x + y * y >= gamma ** 2
                    and (x - x_star) ** 2 + (y - y_star) ** 2 <= gamma_prime ** 2 + 1e-12
                    and 0 <= gamma_prime < gamma)
    lhs = float(abs(np.exp(-1j * np.arctan2(y, x)) - np.exp(-1j * np.arctan2(y_star, x_star))))
    bound = 2 * gamma_prime / gamma if gamma > 0 else float("inf")
    return GeometricCheck(lhs, bound, lhs <= bound + 1e-12, rejected)


def geometric_bound_batch(count: int, rng: np.random.Generator) -> Dict[str, float]:
    """
    Random precondition-satisfying tuples checked in bulk.

    Returns:
        Dictionary with the tuple count, violations, the worst lhs/bound ratio and
        the largest mismatch between lhs and the chord |2 sin(ζ/2)|
    """
    gamma = rng.uniform(0.1, 2.0, size=count)
    gamma_prime = gamma * rng.uniform(1e-6, 0.999, size=count)
    radius = gamma * rng.uniform(1.0, 3.0, size=count)
    angle = rng.uniform(-np.pi, np.pi, size=count)
    x, y = radius * np.cos(angle), radius * np.sin(angle)
    shift = gamma_prime * np.sqrt(rng.random(count))
    direction = rng.uniform(-np.pi, np.pi, size=count)
    x_star, y_star = x + shift * np.cos(direction), y + shift * np.sin(direction)

    a, b = np.arctan2(y, x), np.arctan2(y_star, x_star)
    lhs = np.abs(np.exp(-1j * a) - np.exp(-1j * b))
    bound = 2 * gamma_prime / gamma
    chord = np.abs(2 * np.sin((a - b) / 2))
    return {
        "tuples": count,
        "violations": int(np.sum(lhs > bound + 1e-12)),
        "worst_ratio": float(np.max(lhs / bound)),
        "chord_mismatch": float(np.max(np.abs(lhs - chord))),
    }
