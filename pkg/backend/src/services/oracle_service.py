"""
Oracle Service for the adversary side of every reduction.

Post-selected samplers (perfect or with an exactly budgeted ε of noise) and
probability oracles (exact or multiplicatively perturbed), all built by brute
force from exact tables.
"""

from dataclasses import dataclass
from typing import List, Protocol

import numpy as np

from services.distribution_service import MASS_FLOOR, conditional_tables, prefix_masses
from services.errors import InfeasibleNoiseError, UndefinedSupportError
from services.qsim_service import Distribution, format_bits, parse_bits

NOISE_MODES = ("none", "mass-shift", "prefix-corrupt")
SD_TOLERANCE = 1e-6


@dataclass(frozen=True)
class NoiseSpec:
    """Joint statistical-distance budget of a noisy sampler."""
    epsilon: float = 0.0
    mode: str = "none"

    def __post_init__(self):
        if self.mode not in NOISE_MODES:
            raise ValueError(f"Unsupported noise mode '{self.mode}'")
        if not (0.0 <= self.epsilon < 1.0):
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if self.mode == "none" and self.epsilon > 0:
            raise ValueError("Noise mode 'none' requires epsilon = 0")


# ---------------------------------------------------------------------------
# Post-selected samplers
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SamplerOracle:
    """
    Prefix-conditional sampler over num_bits-bit strings.

    tables[i][v] is the probability that the bit after prefix v (length i) is 1;
    nan marks a prefix the sampler cannot be queried on.
    """
    base: Distribution
    tables: List[np.ndarray]
    noise: NoiseSpec
    realized_sd: float

    @property
    def num_bits(self) -> int:
        return self.base.num_bits

    def next_bit_probability(self, prefix: str) -> float:
        """
        Raises:
            UndefinedSupportError: If the prefix has zero mass
        """
        if len(prefix) >= self.num_bits:
            raise ValueError(f"Prefix '{prefix}' must be shorter than {self.num_bits} bits")
        p1 = self.tables[len(prefix)][parse_bits(prefix)]
        if np.isnan(p1):
            raise UndefinedSupportError(prefix)
        return float(p1)

    def next_bits(self, prefix: str, size: int, rng: np.random.Generator) -> np.ndarray:
        """`size` independent next-bit draws at a prefix, as a 0/1 array."""
        p1 = self.next_bit_probability(prefix)
        return (rng.random(size) < p1).astype(np.int8)

    def count_ones(self, prefix: str, trials: int, rng: np.random.Generator) -> int:
        """Number of ones among `trials` next-bit draws at a prefix."""
        return int(rng.binomial(trials, self.next_bit_probability(prefix)))

    def invert(self, prefix: str, rng: np.random.Generator) -> int:
        """One key-bit answer for the puzzle whose visible part is `prefix`."""
        return int(self.next_bits(prefix, 1, rng)[0])

    def query(self, prefix: str, rng: np.random.Generator) -> str:
        """Full string sampled conditioned on starting with `prefix`."""
        out = prefix
        while len(out) < self.num_bits:
            out += "1" if rng.random() < self.next_bit_probability(out) else "0"
        return out


def perfect_postselected_sampler(d: Distribution) -> SamplerOracle:
    return SamplerOracle(d, conditional_tables(d), NoiseSpec(), 0.0)


def joint_sd(d: Distribution, exact: List[np.ndarray], noisy: List[np.ndarray]) -> float:
    """
    Statistical distance between the (i, prefix, next bit) joints of two samplers,
    with i uniform over [0, n-1] and the prefix drawn from d.
    """
    n = d.num_bits
    total = 0.0
    for length in range(n):
        mass = prefix_masses(d, length)
        live = mass > MASS_FLOOR
        total += float(np.sum(mass[live] * np.abs(noisy[length][live] - exact[length][live])))
    return total / n


def _fill_reachable(tables: List[np.ndarray]) -> List[np.ndarray]:
    """Give prefixes the noise made reachable a deterministic all-zeros continuation."""
    reach = np.ones(1)
    for length, p1 in enumerate(tables):
        newly = np.isnan(p1) & (reach > 0)
        p1[newly] = 0.0
        safe = np.nan_to_num(p1)
        reach = np.stack([reach * (1.0 - safe), reach * safe], axis=1).reshape(-1)
    return tables


def noisy_sampler(d: Distribution, spec: NoiseSpec) -> SamplerOracle:
    """
    Sampler whose (i, prefix, next bit) joint sits at statistical distance exactly
    spec.epsilon from the exact one.

    mass-shift moves epsilon of conditional mass (capped at the likelier bit's
    share) from the likelier next bit to the other one at each prefix, visiting
    prefixes by descending mass. On a point distribution every prefix on the
    path becomes 1-epsilon / epsilon. prefix-corrupt redirects whole conditionals
    onto the less likely bit, visiting prefixes by ascending mass. The last
    prefix visited absorbs the remainder of the budget.

    Raises:
        InfeasibleNoiseError: If epsilon exceeds what the support can absorb
    """
    exact = conditional_tables(d)
    if spec.mode == "none" or spec.epsilon == 0:
        return SamplerOracle(d, exact, spec, 0.0)

    n = d.num_bits
    candidates = []
    for length in range(n):
        mass = prefix_masses(d, length)
        for v in np.flatnonzero(mass > MASS_FLOOR):
            p1 = exact[length][v]
            likely = max(p1, 1.0 - p1)
            cap = min(spec.epsilon, likely) if spec.mode == "mass-shift" else likely
            candidates.append((float(mass[v]), length, int(v), float(p1), cap))

    capacity = sum(m * cap for m, _, _, _, cap in candidates) / n
    if spec.epsilon > capacity + SD_TOLERANCE:
        raise InfeasibleNoiseError(
            f"epsilon {spec.epsilon} exceeds the attainable {spec.mode} distance {capacity:.6f}"
        )

    if spec.mode == "mass-shift":
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    else:
        candidates.sort(key=lambda c: (c[0], c[1], c[2]))

    tables = [t.copy() for t in exact]
    budget = spec.epsilon
    for mass, length, v, p1, cap in candidates:
        if budget <= 0:
            break
        shift = min(cap, budget * n / mass)
        # move `shift` of conditional mass onto the unlikely bit
        tables[length][v] = p1 - shift if p1 > 0.5 else p1 + shift
        budget -= mass * shift / n

    tables = _fill_reachable(tables)
    realized = joint_sd(d, exact, tables)
    if abs(realized - spec.epsilon) > SD_TOLERANCE:
        raise RuntimeError(f"Noise construction realized SD {realized:.9f}, requested {spec.epsilon}")
    return SamplerOracle(d, tables, spec, realized)


# ---------------------------------------------------------------------------
# Probability oracles
# ---------------------------------------------------------------------------

class ProbabilityTable(Protocol):
    """Anything exposing exact point probabilities: Distribution, D_n or dual-mode tables."""
    num_bits: int

    def prob(self, key: str) -> float: ...


@dataclass(frozen=True, eq=False)
class ProbOracle:
    """
    Answers Pr[x] within a multiplicative factor (1 ± rel_error), except with
    probability fail_prob. Off-support and failed queries return an independent
    uniform value in (0, 2/2^num_bits].
    """
    base: ProbabilityTable
    rel_error: float = 0.0
    fail_prob: float = 0.0

    def __post_init__(self):
        if self.rel_error < 0:
            raise ValueError(f"rel_error must be >= 0, got {self.rel_error}")
        if not (0.0 <= self.fail_prob <= 1.0):
            raise ValueError(f"fail_prob must lie in [0, 1], got {self.fail_prob}")

    @property
    def is_exact(self) -> bool:
        return self.rel_error == 0 and self.fail_prob == 0

    def exact(self, key: str) -> float:
        return float(self.base.prob(key))

    def query(self, key: str, rng: np.random.Generator = None) -> float:
        p = self.exact(key)
        if self.is_exact:
            return p
        if rng is None:
            raise ValueError("A noisy probability oracle needs a random stream")
        if p <= 0 or rng.random() < self.fail_prob:
            return float((1.0 - rng.random()) * 2.0 / 2 ** self.base.num_bits)
        return float(p * (1.0 + rng.uniform(-self.rel_error, self.rel_error)))


def exact_prob_oracle(d: ProbabilityTable) -> ProbOracle:
    return ProbOracle(d)


def noisy_prob_oracle(d: ProbabilityTable, rel_error: float, fail_prob: float) -> ProbOracle:
    return ProbOracle(d, rel_error, fail_prob)


def sampler_joint_table(oracle: SamplerOracle) -> dict:
    """Exact (i, prefix, next bit) joint of a sampler, keyed 'i|prefix|bit'."""
    d = oracle.base
    n = d.num_bits
    joint = {}
    for length in range(n):
        mass = prefix_masses(d, length)
        for v in np.flatnonzero(mass > MASS_FLOOR):
            p1 = oracle.tables[length][v]
            prefix = format_bits(int(v), length)
            joint[f"{length}|{prefix}|0"] = float(mass[v] * (1.0 - p1)) / n
            joint[f"{length}|{prefix}|1"] = float(mass[v] * p1) / n
    return joint
