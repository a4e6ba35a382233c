"""
Experiment Runner.

Each experiment kind is a plan of three steps: a deterministic setup shared by
all instances, one function per instance that gets its own random stream,
and a summary over the collected rows. Instances run on a thread pool and
their rows are emitted in instance order, so output bytes depend only on the
config.
"""

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from experiments.experiment_config import ExperimentConfig
from services.design_service import HEAVY_MASS_CUTOFF, flatness_stats, sample_clifford, second_moment_target
from services.distribution_service import MASS_FLOOR, CircuitFamily, family_distribution
from services.oracle_service import NoiseSpec, exact_prob_oracle, noisy_prob_oracle, noisy_sampler, perfect_postselected_sampler
from services.qsim_service import (
    apply_gate,
    format_bits,
    measure_shots,
    overlap_with_pure,
    parse_bits,
    random_state,
    statistical_distance,
    zero_state,
)
from services.reduction_service import (
    ReductionParams,
    approx_probability,
    determinism_error_probe,
    draw_randomness_blocks,
    dual_mode_dist,
    dual_mode_table,
    empirical_table,
    full_key_sampler,
    key_bit_gap_probe,
    key_recovery_distance,
    keyed_distance,
    member_distribution,
    dn_distribution,
    chernoff_envelope_probe,
    owp_empirical_joint,
    owp_from_distribution,
    owp_joint_distribution,
    product_error_lemma_batch,
    pseudodet_output_distribution,
    pseudodet_sample,
    puzzle_sampler_from_circuit,
    ratio_estimator,
    verify_puzzle,
)
from services.synthesis_service import (
    PairStateParams,
    amplitude_synthesis,
    build_inverter,
    full_synthesis,
    geometric_bound_batch,
    make_V,
    mode1_law,
    pair_state,
    purified_amplitude_synthesis,
    state_puzzle_from_sampler,
    state_puzzle_generator,
)
from services.qsim_service import Distribution
from services.verification_service import SCHEMA_VERSION, config_hash, file_digest, stream_rng

THREADS = max(1, int(os.getenv("QPL_THREADS", "1")))

CSV_COLUMNS = ["schema_version", "config_hash", "experiment", "instance", "metric", "value", "verdict"]


@dataclass(frozen=True)
class ResultRow:
    schema_version: str
    config_hash: str
    experiment: str
    instance: int
    metric: str
    value: float
    verdict: str


@dataclass
class RunContext:
    """Config plus the objects the setup step shares with every instance."""
    config: ExperimentConfig
    config_hash: str
    shared: Dict[str, Any] = field(default_factory=dict)

    def row(self, instance: int, metric: str, value: float, verdict: str = "info") -> ResultRow:
        return ResultRow(SCHEMA_VERSION, self.config_hash, self.config.experiment, instance,
                         metric, float(value), verdict)

    def check(self, instance: int, metric: str, value: float, ok: bool) -> ResultRow:
        return self.row(instance, metric, value, "pass" if ok else "fail")

    def stream(self, instance: int, trial: int = 0) -> np.random.Generator:
        return stream_rng(self.config.seed, self.config.experiment, instance, trial)


InstanceOutput = Tuple[List[ResultRow], Optional[Dict[str, Any]]]


@dataclass(frozen=True)
class ExperimentPlan:
    setup: Callable[[RunContext], None]
    count: Callable[[ExperimentConfig], int]
    run_instance: Callable[[RunContext, int, np.random.Generator], InstanceOutput]
    summarize: Callable[[RunContext, List[ResultRow]], Tuple[Dict[str, float], bool]]


def _values(rows: List[ResultRow], metric: str) -> List[float]:
    return [r.value for r in rows if r.metric == metric]


def _all_pass(rows: List[ResultRow], metric: Optional[str] = None) -> bool:
    return all(r.verdict != "fail" for r in rows if metric is None or r.metric == metric)


def _base_family(config: ExperimentConfig, num_qubits: Optional[int] = None) -> CircuitFamily:
    return CircuitFamily("random-universal", num_qubits or config.n, config.depth, config.seed)


def _instances(config: ExperimentConfig) -> int:
    return config.instances


# ---------------------------------------------------------------------------
# approx-prob
# ---------------------------------------------------------------------------

def _approx_setup(ctx: RunContext):
    c = ctx.config
    d = family_distribution(_base_family(c))
    ctx.shared["dist"] = d
    ctx.shared["sampler"] = noisy_sampler(d, NoiseSpec(c.noise.epsilon, c.noise.mode))
    ctx.shared["params"] = ReductionParams(c.samples_per_bit, c.n, c.threshold("rel_error", 0.25))
    ctx.shared["floor"] = c.threshold("min_mass_factor", 0.125) / 2 ** c.n


def _approx_instance(ctx: RunContext, k: int, rng: np.random.Generator) -> InstanceOutput:
    d: Distribution = ctx.shared["dist"]
    params: ReductionParams = ctx.shared["params"]
    x = format_bits(int(d.sample(rng, 1)[0]), d.num_bits)
    exact = d.prob(x)
    est = approx_probability(x, ctx.shared["sampler"], params, rng)
    rel = abs(est.value - exact) / exact
    rows = [
        ctx.row(k, "exact_prob", exact),
        ctx.row(k, "estimate", est.value),
        ctx.row(k, "flagged", float(est.flagged)),
    ]
    if exact >= ctx.shared["floor"]:
        rows.append(ctx.check(k, "rel_error", rel, rel <= params.rel_target))
    else:
        rows.append(ctx.row(k, "rel_error", rel, "skip"))
    return rows, None


def _approx_summary(ctx: RunContext, rows: List[ResultRow]):
    graded = [r for r in rows if r.metric == "rel_error" and r.verdict in ("pass", "fail")]
    fraction = sum(r.verdict == "pass" for r in graded) / len(graded) if graded else 0.0
    metrics = {
        "eligible": float(len(graded)),
        "pass_fraction": fraction,
        "mean_rel_error": float(np.mean([r.value for r in graded])) if graded else 0.0,
    }
    return metrics, fraction >= ctx.config.threshold("pass_fraction", 0.9)


# ---------------------------------------------------------------------------
# owp-roundtrip
# ---------------------------------------------------------------------------

def _owp_setup(ctx: RunContext):
    d = family_distribution(_base_family(ctx.config))
    ctx.shared["dist"] = d
    ctx.shared["joint"] = owp_joint_distribution(d)


def _owp_instance(ctx: RunContext, k: int, rng: np.random.Generator) -> InstanceOutput:
    d = ctx.shared["dist"]
    sd = keyed_distance(owp_empirical_joint(d, ctx.config.samples, rng), ctx.shared["joint"])
    checks = min(ctx.config.samples, 1000)
    verified = sum(verify_puzzle(owp_from_distribution(d, rng), d) for _ in range(checks)) / checks
    return [
        ctx.check(k, "joint_sd", sd, sd <= ctx.config.threshold("max_sd", 0.01)),
        ctx.check(k, "verify_rate", verified, verified == 1.0),
    ], None


def _owp_summary(ctx: RunContext, rows: List[ResultRow]):
    return {"max_joint_sd": max(_values(rows, "joint_sd"))}, _all_pass(rows)


# ---------------------------------------------------------------------------
# keyrec
# ---------------------------------------------------------------------------

def _keyrec_setup(ctx: RunContext):
    c = ctx.config
    samp = puzzle_sampler_from_circuit(_base_family(c, 2 * c.n))
    table = dn_distribution(samp)
    ctx.shared["samp"] = samp
    ctx.shared["exact"] = exact_prob_oracle(table)
    ctx.shared["noisy"] = noisy_prob_oracle(table, c.oracle.rel_error, c.oracle.fail_prob)
    ctx.shared["recovery_sd"] = key_recovery_distance(samp, ctx.shared["exact"])


def _keyrec_instance(ctx: RunContext, k: int, rng: np.random.Generator) -> InstanceOutput:
    c = ctx.config
    samp = ctx.shared["samp"]
    rows = []
    if k == 0:
        sd = ctx.shared["recovery_sd"]
        rows.append(ctx.check(k, "recovery_sd", sd, sd <= c.threshold("max_recovery_sd", 0.05)))
    gap = key_bit_gap_probe(samp, ctx.shared["noisy"], c.samples, rng)
    limit = c.threshold("max_gap", 6 * c.oracle.rel_error + 1e-9)
    if c.oracle.fail_prob > 0:
        rows.append(ctx.row(k, "max_gap", gap["max_gap"]))
    else:
        rows.append(ctx.check(k, "max_gap", gap["max_gap"], gap["max_gap"] <= limit))
    rows.append(ctx.row(k, "clip_events", gap["clip_events"]))
    s, _ = samp.sample(rng)
    key = full_key_sampler(s, ctx.shared["exact"], samp.n, rng)
    in_support = samp.joint.prob(s + key) > MASS_FLOOR
    rows.append(ctx.check(k, "key_in_support", float(in_support), in_support))
    return rows, None


def _keyrec_summary(ctx: RunContext, rows: List[ResultRow]):
    metrics = {
        "recovery_sd": ctx.shared["recovery_sd"],
        "max_gap": max(_values(rows, "max_gap")),
        "clip_events": sum(_values(rows, "clip_events")),
    }
    return metrics, _all_pass(rows)


# ---------------------------------------------------------------------------
# pseudodet
# ---------------------------------------------------------------------------

def _pseudodet_setup(ctx: RunContext):
    c = ctx.config
    d = family_distribution(_base_family(c))
    ctx.shared["dist"] = d
    ctx.shared["sampler"] = perfect_postselected_sampler(d)
    ctx.shared["params"] = ReductionParams(c.samples_per_bit, c.n)
    ctx.shared["grid_sd"] = statistical_distance(pseudodet_output_distribution(d), d)


def _pseudodet_instance(ctx: RunContext, k: int, rng: np.random.Generator) -> InstanceOutput:
    c = ctx.config
    sampler, params = ctx.shared["sampler"], ctx.shared["params"]
    if k < c.instances:
        r = draw_randomness_blocks(c.n, rng)
        probe = determinism_error_probe(r, sampler, params, c.repeats, rng)
        return [
            ctx.check(k, "determinism_error", probe.error, probe.error <= c.threshold("max_probe", 0.02)),
            ctx.row(k, "threshold_adjacent", float(probe.threshold_adjacent)),
        ], None
    outputs = []
    for _ in range(c.samples):
        result = pseudodet_sample(draw_randomness_blocks(c.n, rng), sampler, params, rng)
        if result.output is not None:
            outputs.append(result.output)
    exact = ctx.shared["dist"].as_dict()
    sd = keyed_distance(empirical_table(outputs), exact) if outputs else 1.0
    return [ctx.check(k, "output_sd", sd, sd <= c.threshold("max_output_sd", 0.1))], None


def _pseudodet_summary(ctx: RunContext, rows: List[ResultRow]):
    probes = [r for r in rows if r.metric == "determinism_error"]
    fraction = sum(r.verdict == "pass" for r in probes) / len(probes)
    output_ok = _all_pass(rows, "output_sd")
    metrics = {
        "deterministic_fraction": fraction,
        "output_sd": _values(rows, "output_sd")[0],
        "grid_sd": ctx.shared["grid_sd"],
    }
    return metrics, output_ok and fraction >= ctx.config.threshold("min_deterministic_fraction", 0.95)


# ---------------------------------------------------------------------------
# dualmode
# ---------------------------------------------------------------------------

def _dualmode_setup(ctx: RunContext):
    c = ctx.config
    families = [CircuitFamily("random-universal", c.n, c.depth, c.seed + 7919 * index)
                for index in range(c.families)]
    table = dual_mode_table(families, c.ensemble_size)
    rel = c.oracle.rel_error or 0.01
    ctx.shared.update(families=families, table=table, exact=exact_prob_oracle(table),
                      noisy=noisy_prob_oracle(table, rel, 0.0), rel=rel)


def _dualmode_instance(ctx: RunContext, k: int, rng: np.random.Generator) -> InstanceOutput:
    c = ctx.config
    families = ctx.shared["families"]
    if k == c.instances:
        draws = [dual_mode_dist(families, c.ensemble_size, rng).key for _ in range(c.samples)]
        sd = keyed_distance(empirical_table(draws), ctx.shared["table"].probs)
        return [ctx.check(k, "histogram_sd", sd, sd <= c.threshold("max_sd", 0.01))], None
    index = int(rng.integers(len(families)))
    member = int(rng.integers(c.ensemble_size))
    d = member_distribution(families[index], member)
    x = format_bits(int(d.sample(rng, 1)[0]), d.num_bits)
    truth = d.prob(x)
    exact = ratio_estimator((index, member), x, ctx.shared["exact"])
    noisy = ratio_estimator((index, member), x, ctx.shared["noisy"], rng)
    noisy_rel = abs(noisy.value - truth) / truth
    return [
        ctx.check(k, "exact_ratio_error", abs(exact.value - truth), abs(exact.value - truth) <= 1e-12),
        ctx.check(k, "noisy_ratio_rel_error", noisy_rel, noisy_rel <= 3 * ctx.shared["rel"] + 1e-9),
    ], None


def _dualmode_summary(ctx: RunContext, rows: List[ResultRow]):
    metrics = {
        "max_exact_ratio_error": max(_values(rows, "exact_ratio_error")),
        "max_noisy_ratio_rel_error": max(_values(rows, "noisy_ratio_rel_error")),
        "histogram_sd": _values(rows, "histogram_sd")[0],
    }
    return metrics, _all_pass(rows)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _synth_setup(ctx: RunContext):
    c = ctx.config
    family = _base_family(c, c.puzzle_qubits + c.n)
    ctx.shared["generator"] = state_puzzle_generator(family, c.puzzle_qubits)
    ctx.shared["mode"] = c.noise.mode if c.noise.mode != "none" else "mass-shift"


def _synth_count(config: ExperimentConfig) -> int:
    return config.instances * len(config.epsilons)


def _fidelity_metric(eps: float) -> str:
    return f"fidelity[eps={eps:g}]"


def _synth_instance(ctx: RunContext, k: int, rng: np.random.Generator) -> InstanceOutput:
    c = ctx.config
    eps = c.epsilons[k // c.instances]
    puzzle_rng = ctx.stream(k % c.instances, trial=-1)
    instance = state_puzzle_from_sampler(ctx.shared["generator"], puzzle_rng)
    clifford = sample_clifford(c.n, puzzle_rng)
    noise = NoiseSpec(eps, ctx.shared["mode"]) if eps > 0 else NoiseSpec()
    result = full_synthesis(instance, noise, c.trials_per_estimate, rng, clifford)
    diag = result.diagnostics
    max_amp = max(diag.amplitude_errors.values(), default=0.0)
    max_phase = max(diag.phase_errors.values(), default=0.0)
    rows = [
        ctx.row(k, _fidelity_metric(eps), result.fidelity),
        ctx.row(k, "delta", diag.delta),
        ctx.row(k, "max_amplitude_error", max_amp),
        ctx.row(k, "max_phase_error", max_phase),
    ]
    record = {
        "instance": k,
        "epsilon": eps,
        "s": instance.s,
        "clifford_seed": clifford.seed,
        "fidelity": result.fidelity,
        "pivot": diag.pivot,
        "delta": diag.delta,
        "amplitude_errors": diag.amplitude_errors,
        "phase_errors": diag.phase_errors,
        "flagged": list(diag.flagged),
    }
    return rows, record


def _synth_summary(ctx: RunContext, rows: List[ResultRow]):
    c = ctx.config
    means, sems = [], []
    metrics: Dict[str, float] = {}
    for eps in c.epsilons:
        values = _values(rows, _fidelity_metric(eps))
        mean = float(np.mean(values))
        sem = float(np.std(values, ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
        means.append(mean)
        sems.append(sem)
        metrics[f"mean_{_fidelity_metric(eps)}"] = mean
        metrics[f"sem_{_fidelity_metric(eps)}"] = sem
    default_floor = 0.999 if c.trials_per_estimate is None else 0.95
    floor_ok = means[0] >= c.threshold("min_mean_fidelity", default_floor)
    monotone = all(means[i + 1] <= means[i] + max(sems[i], sems[i + 1]) + 1e-12
                   for i in range(len(means) - 1))
    metrics["monotone"] = float(monotone)
    return metrics, floor_ok and monotone


# ---------------------------------------------------------------------------
# flatness
# ---------------------------------------------------------------------------

def _flatness_setup(ctx: RunContext):
    c = ctx.config
    if c.initial_state == "haar":
        ctx.shared["psi"] = random_state(c.n, ctx.stream(-1))
    else:
        ctx.shared["psi"] = zero_state(c.n)
    ctx.shared["threshold"] = c.threshold_multiple / 2 ** c.n


def _flatness_instance(ctx: RunContext, k: int, rng: np.random.Generator) -> InstanceOutput:
    report = flatness_stats(ctx.shared["psi"], 1, ctx.shared["threshold"], rng)
    return [
        ctx.row(k, "heavy_mass", report.heavy_mass[0]),
        ctx.row(k, "second_moment", report.empirical_second_moment),
    ], None


def _flatness_summary(ctx: RunContext, rows: List[ResultRow]):
    c = ctx.config
    second = float(np.mean(_values(rows, "second_moment")))
    target = second_moment_target(c.n)
    heavy = float(np.mean([m > HEAVY_MASS_CUTOFF for m in _values(rows, "heavy_mass")]))
    rel_dev = abs(second - target) / target
    metrics = {
        "second_moment": second,
        "second_moment_target": target,
        "second_moment_rel_dev": rel_dev,
        "heavy_fraction": heavy,
    }
    ok = rel_dev <= c.threshold("second_moment_rel_tol", 0.03) and heavy <= c.threshold("max_heavy_fraction", 0.05)
    return metrics, ok


# ---------------------------------------------------------------------------
# geom, product-lemma, chernoff
# ---------------------------------------------------------------------------

def _batch_size(config: ExperimentConfig, k: int) -> int:
    base, extra = divmod(config.samples, config.instances)
    return base + (1 if k < extra else 0)


def _geom_instance(ctx: RunContext, k: int, rng: np.random.Generator) -> InstanceOutput:
    batch = geometric_bound_batch(_batch_size(ctx.config, k), rng)
    return [
        ctx.check(k, "violations", batch["violations"], batch["violations"] == 0),
        ctx.row(k, "worst_ratio", batch["worst_ratio"]),
        ctx.row(k, "chord_mismatch", batch["chord_mismatch"]),
    ], None


def _geom_summary(ctx: RunContext, rows: List[ResultRow]):
    violations = sum(_values(rows, "violations"))
    metrics = {
        "tuples": float(ctx.config.samples),
        "violations": violations,
        "worst_ratio": max(_values(rows, "worst_ratio")),
        "chord_mismatch": max(_values(rows, "chord_mismatch")),
    }
    return metrics, violations == 0


def _lemma_instance(ctx: RunContext, k: int, rng: np.random.Generator) -> InstanceOutput:
    c = ctx.config
    delta = c.delta if c.delta is not None else 0.5 / c.n
    batch = product_error_lemma_batch(c.n, delta, _batch_size(c, k), rng)
    return [
        ctx.check(k, "violations", batch["violations"], batch["violations"] == 0),
        ctx.row(k, "worst_ratio", batch["worst_ratio"]),
    ], None


def _lemma_summary(ctx: RunContext, rows: List[ResultRow]):
    violations = sum(_values(rows, "violations"))
    return {"violations": violations, "worst_ratio": max(_values(rows, "worst_ratio"))}, violations == 0


def _chernoff_instance(ctx: RunContext, k: int, rng: np.random.Generator) -> InstanceOutput:
    c = ctx.config
    fraction = chernoff_envelope_probe(c.probabilities[k], c.samples_per_bit, c.samples, rng)
    return [ctx.check(k, "within_envelope", fraction, fraction >= c.threshold("min_fraction", 0.99))], None


def _chernoff_summary(ctx: RunContext, rows: List[ResultRow]):
    return {"min_within_envelope": min(_values(rows, "within_envelope"))}, _all_pass(rows)


# ---------------------------------------------------------------------------
# mode1-law, purification
# ---------------------------------------------------------------------------

def _mode1_instance(ctx: RunContext, k: int, rng: np.random.Generator) -> InstanceOutput:
    c = ctx.config
    params = PairStateParams(float(rng.uniform(0, np.pi)), float(rng.uniform(0, 2 * np.pi)))
    a = int(rng.integers(2 ** c.n))
    x0, x1 = format_bits(a, c.n), format_bits(a ^ int(rng.integers(1, 2 ** c.n)), c.n)
    state = pair_state(params, x0, x1)
    rows = []
    for b_rot in (0, 1):
        rotated = apply_gate(state, make_V(x0, x1, b_rot))
        shots = measure_shots(rotated, list(range(c.n)), c.samples, rng)
        freq = float(np.mean(shots == parse_bits(x0)))
        deviation = abs(freq - mode1_law(params, b_rot))
        rows.append(ctx.check(k, f"deviation[b_rot={b_rot}]", deviation,
                              deviation <= c.threshold("max_deviation", 0.02)))
    return rows, None


def _mode1_summary(ctx: RunContext, rows: List[ResultRow]):
    return {"max_deviation": max(r.value for r in rows)}, _all_pass(rows)


def _purification_instance(ctx: RunContext, k: int, rng: np.random.Generator) -> InstanceOutput:
    c = ctx.config
    inverter = build_inverter(random_state(c.n, rng), NoiseSpec())
    frozen = amplitude_synthesis(inverter, c.trials_per_estimate, rng)
    joint = purified_amplitude_synthesis(frozen.estimates, c.n)
    overlap = overlap_with_pure(joint, frozen.state, list(range(c.n)))
    return [ctx.check(k, "purified_fidelity", overlap, overlap >= c.threshold("min_fidelity", 0.999))], None


def _purification_summary(ctx: RunContext, rows: List[ResultRow]):
    return {"min_purified_fidelity": min(r.value for r in rows)}, _all_pass(rows)


def _no_setup(ctx: RunContext):
    return None


EXPERIMENTS: Dict[str, ExperimentPlan] = {
    "approx-prob": ExperimentPlan(_approx_setup, _instances, _approx_instance, _approx_summary),
    "owp-roundtrip": ExperimentPlan(_owp_setup, _instances, _owp_instance, _owp_summary),
    "keyrec": ExperimentPlan(_keyrec_setup, _instances, _keyrec_instance, _keyrec_summary),
    "pseudodet": ExperimentPlan(_pseudodet_setup, lambda c: c.instances + 1, _pseudodet_instance, _pseudodet_summary),
    "dualmode": ExperimentPlan(_dualmode_setup, lambda c: c.instances + 1, _dualmode_instance, _dualmode_summary),
    "synth": ExperimentPlan(_synth_setup, _synth_count, _synth_instance, _synth_summary),
    "flatness": ExperimentPlan(_flatness_setup, _instances, _flatness_instance, _flatness_summary),
    "geom": ExperimentPlan(_no_setup, _instances, _geom_instance, _geom_summary),
    "product-lemma": ExperimentPlan(_no_setup, _instances, _lemma_instance, _lemma_summary),
    "chernoff": ExperimentPlan(_no_setup, lambda c: len(c.probabilities), _chernoff_instance, _chernoff_summary),
    "mode1-law": ExperimentPlan(_no_setup, _instances, _mode1_instance, _mode1_summary),
    "purification": ExperimentPlan(_no_setup, _instances, _purification_instance, _purification_summary),
}


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

def rows_frame(rows: List[ResultRow]) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in rows], columns=CSV_COLUMNS)


def write_rows(rows: List[ResultRow], path: str):
    """CSV with a header row, UTF-8, LF line endings."""
    rows_frame(rows).to_csv(path, index=False, encoding="utf-8", lineterminator="\n", float_format="%.12g")


def run_experiment(config: ExperimentConfig, out_dir: Optional[str] = None, verbose: bool = False) -> Dict[str, Any]:
    """
    Run one experiment end to end.

    Args:
        config: Validated config
        out_dir: Directory for the CSV, JSON summary and diagnostics (defaults to config.out;
                 nothing is written when both are None)
        verbose: Print a progress line per finished instance

    Returns:
        Dictionary with rows, summary and written paths
    """
    plan = EXPERIMENTS[config.experiment]
    ctx = RunContext(config, config_hash(config.model_dump(mode="json")))
    count = plan.count(config)
    print(f"[RUNNER] Starting {config.experiment} ({count} instances, {THREADS} thread(s), config {ctx.config_hash})")

    plan.setup(ctx)

    def task(k: int) -> InstanceOutput:
        output = plan.run_instance(ctx, k, ctx.stream(k))
        if verbose:
            print(f"[RUNNER] {config.experiment} instance {k} done")
        return output

    with ThreadPoolExecutor(max_workers=THREADS) as pool:
        outputs = list(pool.map(task, range(count)))

    rows = [row for instance_rows, _ in outputs for row in instance_rows]
    diagnostics = [record for _, record in outputs if record is not None]
    metrics, passed = plan.summarize(ctx, rows)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config_hash": ctx.config_hash,
        "experiment": config.experiment,
        "seed": config.seed,
        "rows": len(rows),
        "metrics": {k: float(v) for k, v in metrics.items()},
        "verdict": "pass" if passed else "fail",
    }

    paths: Dict[str, str] = {}
    target = out_dir or config.out
    if target:
        os.makedirs(target, exist_ok=True)
        stem = os.path.join(target, f"{config.experiment}-{ctx.config_hash}")
        paths["csv"] = f"{stem}.csv"
        write_rows(rows, paths["csv"])
        summary["csv_sha256"] = file_digest(paths["csv"])
        if diagnostics:
            paths["diagnostics"] = f"{stem}.diagnostics.jsonl"
            with open(paths["diagnostics"], "w", encoding="utf-8", newline="\n") as handle:
                for record in diagnostics:
                    handle.write(json.dumps(record, sort_keys=True) + "\n")
        paths["summary"] = f"{stem}.summary.json"
        with open(paths["summary"], "w", encoding="utf-8", newline="\n") as handle:
            handle.write(json.dumps(summary, sort_keys=True, indent=2) + "\n")

    print(f"[RUNNER] Finished {config.experiment}: verdict {summary['verdict']} ({len(rows)} rows)")
    return {"rows": rows, "summary": summary, "paths": paths, "diagnostics": diagnostics}
