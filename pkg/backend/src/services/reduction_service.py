"""
Reduction Service for the classical reductions between sampling, inversion and
probability approximation.

Covers probability approximation from post-selected sampling, the prefix
puzzle built from a distribution and its D_n counterpart built from a puzzle,
the key sampler driven by a probability oracle, the dual-mode ratio estimator
and the pseudo-deterministic sampler.
"""

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from services.distribution_service import (
    MASS_FLOOR,
    CircuitFamily,
    conditional_tables,
    family_distribution,
    prefix_mass,
)
from services.errors import DegenerateQueryError, UndefinedSupportError
from services.oracle_service import ProbOracle, SamplerOracle, perfect_postselected_sampler, sampler_joint_table
from services.qsim_service import NORM_TOLERANCE, Distribution, format_bits


# ---------------------------------------------------------------------------
# Shared types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReductionParams:
    """Desk-scale sample budget for the frequency estimators."""
    samples_per_bit: int
    n: int
    rel_target: float = 0.25
    clip_policy: str = "clip"

    def __post_init__(self):
        if self.samples_per_bit < 1:
            raise ValueError(f"samples_per_bit must be >= 1, got {self.samples_per_bit}")
        if not (0.0 < self.rel_target < 1.0):
            raise ValueError(f"rel_target must lie in (0, 1), got {self.rel_target}")
        if self.clip_policy != "clip":
            raise ValueError(f"Only the 'clip' policy is supported, got '{self.clip_policy}'")


@dataclass(frozen=True)
class PuzzleRecord:
    """One puzzle/key pair. `index` is the revealed prefix length for prefix puzzles."""
    puzzle: str
    key: str
    mode: str
    index: int = -1
    meta: Dict[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class ApproxResult:
    """Product-of-frequencies estimate; flagged when a prefix left the support."""
    value: float
    flagged: bool
    factors: Tuple[float, ...]


@dataclass(frozen=True)
class KeyedTable:
    """Exact probability table over string keys (keys may differ in length)."""
    probs: Dict[str, float]
    num_bits: int

    def __post_init__(self):
        total = sum(self.probs.values())
        if abs(total - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"Table probabilities sum to {total:.12f}, expected 1")

    def prob(self, key: str) -> float:
        return float(self.probs.get(key, 0.0))


def keyed_distance(a: Dict[str, float], b: Dict[str, float]) -> float:
    """Statistical distance between two string-keyed tables."""
    keys = set(a) | set(b)
    return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)


def empirical_table(samples: Sequence[str]) -> Dict[str, float]:
    counts: Dict[str, int] = {}
    for s in samples:
        counts[s] = counts.get(s, 0) + 1
    return {k: c / len(samples) for k, c in counts.items()}


# ---------------------------------------------------------------------------
# Probability approximation from sampling
# ---------------------------------------------------------------------------

def _frequency_product(x: str, oracle: SamplerOracle, params: ReductionParams,
                       rng: np.random.Generator) -> ApproxResult:
    if len(x) != oracle.num_bits:
        raise ValueError(f"Expected a {oracle.num_bits}-bit string, got '{x}'")
    factors = []
    value = 1.0
    for i in range(len(x)):
        try:
            ones = oracle.count_ones(x[:i], params.samples_per_bit, rng)
        except UndefinedSupportError:
            return ApproxResult(0.0, True, tuple(factors))
        hits = ones if x[i] == "1" else params.samples_per_bit - ones
        freq = hits / params.samples_per_bit
        factors.append(freq)
        value *= freq
    return ApproxResult(value, False, tuple(factors))


def approx_probability(v: str, sampler: SamplerOracle, params: ReductionParams,
                       rng: np.random.Generator) -> ApproxResult:
    """
    Estimate Pr[v] as the product of next-bit frequencies along v.

    Args:
        v: Target string
        sampler: Post-selected sampler for the distribution
        params: samples_per_bit draws per factor
        rng: Random stream

    Returns:
        ApproxResult; a zero-mass prefix yields a flagged zero
    """
    return _frequency_product(v, sampler, params, rng)


def prob_approx_from_inverter(x: str, inverter: SamplerOracle, params: ReductionParams,
                              rng: np.random.Generator) -> ApproxResult:
    """Estimate Pr[x] with each factor the fraction of inverter answers equal to the next bit of x."""
    return _frequency_product(x, inverter, params, rng)


def product_error_lemma_check(a: Sequence[float], b: Sequence[float], delta: float) -> bool:
    """|Πa − Πb| ≤ 2nδ·Πa for factors with |a_i − b_i| ≤ δ·a_i and δ < 1/n."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pa, pb = float(np.prod(a)), float(np.prod(b))
    return abs(pa - pb) <= 2 * len(a) * delta * pa * (1 + 1e-12)


def product_error_lemma_batch(n: int, delta: float, count: int, rng: np.random.Generator) -> Dict[str, float]:
    """
    Random instances of the product relative-error lemma.

    Returns:
        Dictionary with the instance count, violations and the worst observed
        ratio |Πa − Πb| / (2nδ·Πa)
    """
    if not (0 < delta < 1.0 / n):
        raise ValueError(f"delta must lie in (0, 1/n) = (0, {1.0 / n}), got {delta}")
    a = 1.0 - rng.random((count, n))
    b = a * (1.0 + rng.uniform(-delta, delta, size=(count, n)))
    pa = np.prod(a, axis=1)
    pb = np.prod(b, axis=1)
    ratio = np.abs(pa - pb) / (2 * n * delta * pa)
    return {
        "instances": count,
        "violations": int(np.sum(ratio > 1 + 1e-12)),
        "worst_ratio": float(ratio.max()),
    }


def chernoff_envelope_probe(p: float, m: int, repeats: int, rng: np.random.Generator) -> float:
    """Fraction of `repeats` m-trial frequency estimates within 3/√m of p."""
    freq = rng.binomial(m, p, size=repeats) / m
    return float(np.mean(np.abs(freq - p) <= 3.0 / math.sqrt(m)))


# ---------------------------------------------------------------------------
# Prefix puzzle from a distribution
# ---------------------------------------------------------------------------

def owp_from_distribution(d: Distribution, rng: np.random.Generator) -> PuzzleRecord:
    """Puzzle (i, x_{1..i}) and key x_{i+1} for i uniform and x drawn from d."""
    n = d.num_bits
    if n < 1:
        raise ValueError("Puzzle distribution needs at least one bit")
    i = int(rng.integers(n))
    x = format_bits(int(d.sample(rng, 1)[0]), n)
    return PuzzleRecord(puzzle=x[:i], key=x[i], mode="prefix", index=i)


def verify_puzzle(record: PuzzleRecord, d: Distribution) -> bool:
    """Accept iff the puzzle prefix extended by the key carries mass."""
    if record.mode != "prefix" or len(record.key) != 1 or len(record.puzzle) != record.index:
        return False
    return prefix_mass(d, record.puzzle + record.key) > MASS_FLOOR


def owp_joint_distribution(d: Distribution) -> Dict[str, float]:
    """Exact (i, prefix, key) joint of owp_from_distribution, keyed 'i|prefix|key'."""
    return sampler_joint_table(perfect_postselected_sampler(d))


def owp_empirical_joint(d: Distribution, size: int, rng: np.random.Generator) -> Dict[str, float]:
    """Empirical (i, prefix, key) table of `size` owp_from_distribution draws, drawn in bulk."""
    n = d.num_bits
    xs = d.sample(rng, size).astype(np.int64)
    i = rng.integers(n, size=size)
    prefix = xs >> (n - i)
    key = (xs >> (n - i - 1)) & 1
    cells, counts = np.unique(np.stack([i, prefix, key], axis=1), axis=0, return_counts=True)
    return {
        f"{a}|{format_bits(int(b), int(a))}|{c}": int(count) / size
        for (a, b, c), count in zip(cells, counts)
    }


# ---------------------------------------------------------------------------
# D_n from a puzzle sampler, and key recovery from a probability oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PuzzleSampler:
    """Joint law of (s, k) as a distribution over the 2n-bit string s‖k."""
    n: int
    joint: Distribution

    def __post_init__(self):
        if self.joint.num_bits != 2 * self.n:
            raise ValueError(f"Puzzle joint must cover {2 * self.n} bits, got {self.joint.num_bits}")

    def sample(self, rng: np.random.Generator) -> Tuple[str, str]:
        bits = format_bits(int(self.joint.sample(rng, 1)[0]), 2 * self.n)
        return bits[:self.n], bits[self.n:]

    def support(self) -> List[Tuple[str, str, float]]:
        out = []
        for i in np.flatnonzero(self.joint.probs > MASS_FLOOR):
            bits = format_bits(int(i), 2 * self.n)
            out.append((bits[:self.n], bits[self.n:], float(self.joint.probs[i])))
        return out

    def puzzle_marginal(self) -> np.ndarray:
        return self.joint.probs.reshape(2 ** self.n, 2 ** self.n).sum(axis=1)


def puzzle_sampler_from_circuit(family: CircuitFamily) -> PuzzleSampler:
    """Puzzle sampler whose (s, k) are the two halves of a 2n-qubit circuit's output."""
    if family.num_qubits % 2:
        raise ValueError(f"Puzzle circuits need an even qubit count, got {family.num_qubits}")
    return PuzzleSampler(family.num_qubits // 2, family_distribution(family))


def point_puzzle_sampler(s: str, k: str) -> PuzzleSampler:
    if len(s) != len(k):
        raise ValueError("Puzzle and key must have equal length")
    return PuzzleSampler(len(s), Distribution.point(s + k))


@dataclass(frozen=True)
class DnSample:
    x: str
    beta: int
    b_mode: int

    @property
    def key(self) -> str:
        return f"{self.x}{self.beta}"


def dist_from_owp(samp: PuzzleSampler, rng: np.random.Generator) -> DnSample:
    """One draw of D_n: x = s‖k_{1..i}, β uniform in mode 0 and k_{i+1} in mode 1."""
    s, k = samp.sample(rng)
    i = int(rng.integers(samp.n))
    b_mode = int(rng.integers(2))
    beta = int(rng.integers(2)) if b_mode == 0 else int(k[i])
    return DnSample(s + k[:i], beta, b_mode)


def dn_distribution(samp: PuzzleSampler) -> KeyedTable:
    """Exact D_n table keyed by x‖β."""
    n = samp.n
    table: Dict[str, float] = {}
    for s, k, p in samp.support():
        for i in range(n):
            x = s + k[:i]
            for beta in "01":
                table[x + beta] = table.get(x + beta, 0.0) + p / (4 * n)
            table[x + k[i]] += p / (2 * n)
    return KeyedTable(table, 2 * n)


@dataclass(frozen=True)
class KeyBitEstimate:
    pi: float
    raw_pi: float
    clipped: bool


def key_bit_probability(s: str, prefix: str, oracle: ProbOracle,
                        rng: Optional[np.random.Generator] = None) -> KeyBitEstimate:
    """
    π = (3ã₁ − ã₀) / (2(ã₁ + ã₀)) from two oracle queries, clipped to [0, 1].

    Raises:
        DegenerateQueryError: If both queries return zero
    """
    a1 = oracle.query(s + prefix + "1", rng)
    a0 = oracle.query(s + prefix + "0", rng)
    if a0 + a1 == 0:
        raise DegenerateQueryError(f"Both key-bit queries vanished at s='{s}', prefix='{prefix}'")
    raw = (3 * a1 - a0) / (2 * (a1 + a0))
    pi = min(1.0, max(0.0, raw))
    return KeyBitEstimate(pi, raw, pi != raw)


def key_bit_sampler(s: str, prefix: str, oracle: ProbOracle, rng: np.random.Generator) -> int:
    return int(rng.random() < key_bit_probability(s, prefix, oracle, rng).pi)


def full_key_sampler(s: str, oracle: ProbOracle, n: int, rng: np.random.Generator) -> str:
    """Build an n-bit key one sampled bit at a time."""
    key = ""
    for _ in range(n):
        key += str(key_bit_sampler(s, key, oracle, rng))
    return key


def key_sampler_output_tree(s: str, oracle: ProbOracle, n: int) -> Distribution:
    """Exact output law of full_key_sampler for an exact oracle, by walking the bit tree."""
    if not oracle.is_exact:
        raise ValueError("Output-tree enumeration needs an exact oracle")
    probs = np.zeros(2 ** n)

    def walk(prefix: str, weight: float):
        if weight <= MASS_FLOOR:
            return
        if len(prefix) == n:
            probs[int(prefix, 2) if prefix else 0] += weight
            return
        pi = key_bit_probability(s, prefix, oracle).pi
        if pi < 1.0:
            walk(prefix + "0", weight * (1.0 - pi))
        if pi > 0.0:
            walk(prefix + "1", weight * pi)

    walk("", 1.0)
    return Distribution(n, probs)


def key_recovery_distance(samp: PuzzleSampler, oracle: ProbOracle) -> float:
    """SD between the true (s, k) joint and (s, key sampler output) for s from the puzzle marginal."""
    n = samp.n
    marginal = samp.puzzle_marginal()
    recovered = np.zeros(4 ** n)
    for s_index in np.flatnonzero(marginal > MASS_FLOOR):
        s = format_bits(int(s_index), n)
        tree = key_sampler_output_tree(s, oracle, n)
        recovered[s_index * 2 ** n:(s_index + 1) * 2 ** n] = marginal[s_index] * tree.probs
    return float(0.5 * np.abs(recovered - samp.joint.probs).sum())


def key_bit_gap_probe(samp: PuzzleSampler, oracle: ProbOracle, queries: int,
                      rng: np.random.Generator) -> Dict[str, float]:
    """
    Measured |π − p_{1|s,z}| at random (s, z) drawn from the puzzle sampler.

    Returns:
        Dictionary with max/mean gap, clipping events and the query count
    """
    cond = conditional_tables(samp.joint)
    gaps = []
    clips = 0
    for _ in range(queries):
        s, k = samp.sample(rng)
        i = int(rng.integers(samp.n))
        prefix = k[:i]
        p1 = float(cond[samp.n + i][int(s + prefix, 2)])
        est = key_bit_probability(s, prefix, oracle, rng)
        clips += int(est.clipped)
        gaps.append(abs(est.pi - p1))
    return {
        "queries": queries,
        "max_gap": float(max(gaps)) if gaps else 0.0,
        "mean_gap": float(np.mean(gaps)) if gaps else 0.0,
        "clip_events": clips,
    }


# ---------------------------------------------------------------------------
# Dual-mode distribution and ratio estimator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DualModeSample:
    b_mode: int
    family_index: int
    member: int
    x: str

    @property
    def key(self) -> str:
        return dual_mode_key(self.b_mode, self.family_index, self.member, self.x)


@dataclass(frozen=True)
class RatioResult:
    value: float
    flagged: bool


def dual_mode_key(b_mode: int, family_index: int, member: int, x: str) -> str:
    return f"{b_mode}|{family_index}|{member}|{x}"


def ensemble_member(family: CircuitFamily, member: int) -> CircuitFamily:
    """The member-th circuit of a family's finite seed ensemble."""
    return replace(family, seed=family.seed + member)


@functools.lru_cache(maxsize=256)
def member_distribution(family: CircuitFamily, member: int) -> Distribution:
    return family_distribution(ensemble_member(family, member))


def dual_mode_dist(families: Sequence[CircuitFamily], ensemble_size: int,
                   rng: np.random.Generator) -> DualModeSample:
    """
    Sample ℓ, C from the ℓ-th ensemble, x ← C and b_mode; mode 0 carries 0^ℓ
    in place of x.
    """
    if not families:
        raise ValueError("dual_mode_dist needs at least one family")
    index = int(rng.integers(len(families)))
    member = int(rng.integers(ensemble_size))
    b_mode = int(rng.integers(2))
    family = families[index]
    if b_mode == 0:
        return DualModeSample(0, index, member, "0" * family.num_qubits)
    d = member_distribution(family, member)
    x = format_bits(int(d.sample(rng, 1)[0]), d.num_bits)
    return DualModeSample(1, index, member, x)


def dual_mode_table(families: Sequence[CircuitFamily], ensemble_size: int) -> KeyedTable:
    """Exact table of dual_mode_dist."""
    weight = 1.0 / (2 * len(families) * ensemble_size)
    table: Dict[str, float] = {}
    for index, family in enumerate(families):
        for member in range(ensemble_size):
            table[dual_mode_key(0, index, member, "0" * family.num_qubits)] = weight
            d = member_distribution(family, member)
            for x, p in d.as_dict().items():
                table[dual_mode_key(1, index, member, x)] = weight * p
    return KeyedTable(table, max(f.num_qubits for f in families))


def ratio_estimator(c_id: Tuple[int, int], x: str, oracle: ProbOracle,
                    rng: Optional[np.random.Generator] = None) -> RatioResult:
    """Estimate Pr_C[x] as oracle(1, C, x) / oracle(0, C, 0^|x|); zero denominators are flagged."""
    index, member = c_id
    numerator = oracle.query(dual_mode_key(1, index, member, x), rng)
    denominator = oracle.query(dual_mode_key(0, index, member, "0" * len(x)), rng)
    if denominator == 0:
        return RatioResult(float("inf"), True)
    return RatioResult(numerator / denominator, False)


# ---------------------------------------------------------------------------
# Pseudo-deterministic sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PseudoDetResult:
    output: Optional[str]
    flagged: bool
    estimates: Tuple[float, ...]


@dataclass(frozen=True)
class DeterminismProbe:
    error: float
    modal_output: Optional[str]
    threshold_adjacent: bool


def draw_randomness_blocks(n: int, rng: np.random.Generator) -> List[int]:
    """n integers uniform in [1, 2^n]."""
    return [int(v) for v in rng.integers(1, 2 ** n + 1, size=n)]


def pseudodet_sample(r: Sequence[int], sampler: SamplerOracle, params: ReductionParams,
                     rng: np.random.Generator) -> PseudoDetResult:
    """
    Emit bit i = 1 iff 2^n·e ≥ R_i, with e the frequency of next-bit ones over
    samples_per_bit sampler calls at the current prefix.
    """
    n = sampler.num_bits
    if len(r) != n or any(not (1 <= block <= 2 ** n) for block in r):
        raise ValueError(f"Randomness must be {n} integers in [1, {2 ** n}]")
    m = params.samples_per_bit
    out = ""
    estimates = []
    for block in r:
        try:
            ones = sampler.count_ones(out, m, rng)
        except UndefinedSupportError:
            return PseudoDetResult(None, True, tuple(estimates))
        estimates.append(ones / m)
        out += "1" if ones * 2 ** n >= block * m else "0"
    return PseudoDetResult(out, False, tuple(estimates))


def determinism_error_probe(r: Sequence[int], sampler: SamplerOracle, params: ReductionParams,
                            repeats: int, rng: np.random.Generator) -> DeterminismProbe:
    """
    1 − (modal output frequency) over repeated pseudodet_sample calls at fixed r.

    threshold_adjacent is set when some R_i along the modal path lies within the
    3/√m Chernoff envelope of 2^n·p_{1|prefix}, with p_{1|prefix} the conditional
    the sampler actually draws from (noisy or not).
    """
    if repeats < 2:
        raise ValueError(f"repeats must be >= 2, got {repeats}")
    outputs = [pseudodet_sample(r, sampler, params, rng).output for _ in range(repeats)]
    counts: Dict[Optional[str], int] = {}
    for out in outputs:
        counts[out] = counts.get(out, 0) + 1
    modal = max(counts, key=lambda k: (counts[k], k is not None, k or ""))
    error = 1.0 - counts[modal] / repeats

    adjacent = False
    if modal is not None:
        n = sampler.num_bits
        envelope = 3.0 * 2 ** n / math.sqrt(params.samples_per_bit)
        for i, block in enumerate(r):
            try:
                p1 = sampler.next_bit_probability(modal[:i])
            except UndefinedSupportError:
                continue
            if abs(2 ** n * p1 - block) <= envelope:
                adjacent = True
                break
    return DeterminismProbe(error, modal, adjacent)


def grid_probability(p1: float, n: int) -> float:
    """Pr over R uniform in [1, 2^n] that 2^n·p1 ≥ R."""
    return math.floor(2 ** n * p1 + 1e-9) / 2 ** n


def pseudodet_output_distribution(d: Distribution) -> Distribution:
    """Output law over uniform r of the pseudo-deterministic sampler with exact estimates."""
    n = d.num_bits
    cond = conditional_tables(d)
    probs = np.zeros(2 ** n)
    for index in range(2 ** n):
        x = format_bits(index, n)
        weight = 1.0
        for i in range(n):
            p1 = cond[i][int(x[:i], 2) if i else 0]
            q1 = grid_probability(0.0 if np.isnan(p1) else float(p1), n)
            weight *= q1 if x[i] == "1" else 1.0 - q1
            if weight == 0:
                break
        probs[index] = weight
    return Distribution(n, probs)
