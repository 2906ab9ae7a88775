"""Enforcement-style random-sample audits and threshold tradeoff sweeps.

The confusion mapping follows the asymmetric-risk reading: a ground-
truth deepfake labeled DEEPFAKE or UNTRUSTWORTHY is a true positive and
labeled TRUSTWORTHY or VERIFIED a false negative; real content labeled
DEEPFAKE or UNTRUSTWORTHY is a false positive. Rates carry Wilson 95%
intervals (valid at small samples, unlike Wald).
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

from .errors import InsufficientPopulation, MissingGroundTruth
from .pipeline import ModerationDecision
from .scoring import Label, PolicyConfig, ScoreVector, assign_label
from .trustchain import VerificationStatus

FLAGGED_LABELS = {Label.DEEPFAKE, Label.UNTRUSTWORTHY}
Z_95 = 1.959963984540054


def wilson_interval(successes: int, n: int, z: float = Z_95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    # the bound at 0 or n successes is exactly the proportion; avoid
    # floating-point residue crossing it
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == n else min(1.0, center + half)
    return (lo, hi)


@dataclass(frozen=True)
class ConfusionReport:
    tp: int
    fp: int
    tn: int
    fn: int
    fp_rate: Optional[float]
    fn_rate: Optional[float]
    fp_ci: tuple[float, float]
    fn_ci: tuple[float, float]
    n: int
    strata: str = "none"
    seed: int = 0

    def to_json(self) -> dict:
        return {
            "counts": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "fp_rate": self.fp_rate,
            "fn_rate": self.fn_rate,
            "fp_ci": list(self.fp_ci),
            "fn_ci": list(self.fn_ci),
            "sample": {"n": self.n, "strata": self.strata, "seed": self.seed},
        }


def sample_decisions(
    decisions: Sequence[ModerationDecision],
    n: int,
    seed: int,
    strata: Optional[Callable[[ModerationDecision], str]] = None,
) -> list[ModerationDecision]:
    """Seeded sampling without replacement.

    With ``strata``, allocation is proportional with largest-remainder
    rounding (deterministic tiebreak by stratum name); without, a
    simple random sample.
    """
    if n > len(decisions):
        raise InsufficientPopulation(f"need {n} of {len(decisions)} decisions")
    rng = random.Random(seed)
    if strata is None:
        return rng.sample(list(decisions), n)
    groups: dict[str, list[ModerationDecision]] = {}
    for decision in decisions:
        groups.setdefault(strata(decision), []).append(decision)
    total = len(decisions)
    quotas = {name: n * len(members) / total for name, members in groups.items()}
    alloc = {name: math.floor(q) for name, q in quotas.items()}
    leftover = n - sum(alloc.values())
    by_remainder = sorted(
        groups, key=lambda name: (-(quotas[name] - alloc[name]), name)
    )
    for name in by_remainder[:leftover]:
        alloc[name] += 1
    sampled: list[ModerationDecision] = []
    for name in sorted(groups):
        sampled.extend(rng.sample(groups[name], alloc[name]))
    return sampled


def label_strata(decision: ModerationDecision) -> str:
    return decision.label.value


def evaluate(
    sampled: Sequence[ModerationDecision],
    ground_truth: Mapping[str, bool],
    strata: str = "none",
    seed: int = 0,
) -> ConfusionReport:
    """Confusion counts and Wilson intervals over a sample."""
    tp = fp = tn = fn = 0
    for decision in sampled:
        if decision.content_id not in ground_truth:
            raise MissingGroundTruth(f"no ground truth for {decision.content_id}")
        is_fake = ground_truth[decision.content_id]
        flagged = decision.label in FLAGGED_LABELS
        if is_fake and flagged:
            tp += 1
        elif is_fake:
            fn += 1
        elif flagged:
            fp += 1
        else:
            tn += 1
    real, fake = fp + tn, fn + tp
    return ConfusionReport(
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        fp_rate=fp / real if real else None,
        fn_rate=fn / fake if fake else None,
        fp_ci=wilson_interval(fp, real),
        fn_ci=wilson_interval(fn, fake),
        n=len(sampled),
        strata=strata,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Threshold / weight tradeoff sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    threshold: float
    weights: tuple[float, float, float]
    tp: int
    fp: int
    tn: int
    fn: int
    fp_rate: Optional[float]
    fn_rate: Optional[float]

    def to_json(self) -> dict:
        return {
            "threshold": self.threshold,
            "weights": list(self.weights),
            "counts": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "fp_rate": self.fp_rate,
            "fn_rate": self.fn_rate,
        }


def replay_label(decision: ModerationDecision, config: PolicyConfig) -> Label:
    """Label this decision's cached evidence would get under ``config``.

    Detector, trusted, and risk outputs are threshold-independent, so
    sweeps reuse them instead of re-running detection (the 100x
    speedup); only scoring is replayed.
    """
    status = decision.marker_verification.status
    if status in (VerificationStatus.VALID_POSITIVE, VerificationStatus.VALID_NEGATIVE):
        return assign_label(status, None, config)
    vector = decision.score_vector or ScoreVector(0, 0, 1)
    resolved = ScoreVector(
        0 if vector.v_t is None else vector.v_t,
        0 if vector.v_tr is None else vector.v_tr,
        vector.v_r,
    )
    return assign_label(status, resolved, config)


def sweep(
    decisions: Sequence[ModerationDecision],
    ground_truth: Mapping[str, bool],
    base_config: PolicyConfig,
    thresholds: Sequence[float],
    weight_grid: Optional[Sequence[tuple[float, float, float]]] = None,
) -> list[SweepRow]:
    """FP/FN tradeoff across a threshold grid (optionally crossed with
    weight triples), sorted by threshold."""
    if not thresholds:
        raise ValueError("threshold grid must be non-empty")
    weight_grid = weight_grid or [
        (base_config.weight_technical, base_config.weight_trusted, base_config.weight_risk)
    ]
    rows = []
    for theta in sorted(thresholds):
        for weights in weight_grid:
            config = PolicyConfig(
                weight_technical=weights[0],
                weight_trusted=weights[1],
                weight_risk=weights[2],
                threshold=theta,
                tie_rule=base_config.tie_rule,
                indeterminate=base_config.indeterminate,
                label_names=base_config.label_names,
            )
            tp = fp = tn = fn = 0
            for decision in decisions:
                if decision.content_id not in ground_truth:
                    raise MissingGroundTruth(f"no ground truth for {decision.content_id}")
                flagged = replay_label(decision, config) in FLAGGED_LABELS
                if ground_truth[decision.content_id]:
                    tp, fn = tp + int(flagged), fn + int(not flagged)
                else:
                    fp, tn = fp + int(flagged), tn + int(not flagged)
            real, fake = fp + tn, fn + tp
            rows.append(
                SweepRow(
                    threshold=theta,
                    weights=weights,
                    tp=tp,
                    fp=fp,
                    tn=tn,
                    fn=fn,
                    fp_rate=fp / real if real else None,
                    fn_rate=fn / fake if fake else None,
                )
            )
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    lines = ["threshold,w_technical,w_trusted,w_risk,tp,fp,tn,fn,fp_rate,fn_rate"]
    for row in rows:
        fp_rate = "" if row.fp_rate is None else repr(row.fp_rate)
        fn_rate = "" if row.fn_rate is None else repr(row.fn_rate)
        lines.append(
            f"{row.threshold},{row.weights[0]},{row.weights[1]},{row.weights[2]},"
            f"{row.tp},{row.fp},{row.tn},{row.fn},{fp_rate},{fn_rate}"
        )
    return "\n".join(lines) + "\n"


def parse_theta_grid(text: str) -> list[float]:
    """Parse 'start:stop:step' or a comma-separated list of thresholds."""
    if ":" in text:
        start_s, stop_s, step_s = text.split(":")
        start, stop, step = float(start_s), float(stop_s), float(step_s)
        if step <= 0:
            raise ValueError("step must be positive")
        count = int(round((stop - start) / step))
        return [round(start + i * step, 10) for i in range(count + 1)]
    return [float(tok) for tok in text.split(",") if tok.strip()]
