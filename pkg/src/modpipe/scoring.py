"""The three-signal score system and four-level label assignment.

Binary trust values (1 trustworthy, 0 untrustworthy) from technical
detection, trusted detection, and downstream risk are combined into a
normalized weighted score. Verified markers dominate: a valid positive
marker is labeled DEEPFAKE and a valid negative marker VERIFIED with no
score computed; everything else splits on the score threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from pathlib import Path
from typing import Optional

from .errors import ConfigInvalid, MissingScore, UnresolvedIndeterminate
from .trustchain import VerificationStatus


class Label(str, Enum):
    DEEPFAKE = "DEEPFAKE"
    UNTRUSTWORTHY = "UNTRUSTWORTHY"
    TRUSTWORTHY = "TRUSTWORTHY"
    VERIFIED = "VERIFIED"


DEFAULT_LABEL_NAMES = {
    "deepfake": "Deepfake",
    "untrustworthy": "Untrustworthy",
    "trustworthy": "Trustworthy",
    "verified": "Verified",
}


@dataclass(frozen=True)
class ScoreVector:
    """The three binary trust values; None marks an indeterminate one."""

    v_t: Optional[int]
    v_tr: Optional[int]
    v_r: int

    def __post_init__(self):
        for name in ("v_t", "v_tr", "v_r"):
            value = getattr(self, name)
            if value not in (0, 1) and not (value is None and name != "v_r"):
                raise ValueError(f"{name} must be 0, 1{'' if name == 'v_r' else ' or None'}")

    def to_json(self) -> dict:
        return {"v_t": self.v_t, "v_tr": self.v_tr, "v_r": self.v_r}

    @classmethod
    def from_json(cls, obj: dict) -> "ScoreVector":
        return cls(obj["v_t"], obj["v_tr"], obj["v_r"])


@dataclass(frozen=True)
class PolicyConfig:
    """Weights, threshold and tie/indeterminate handling for the score."""

    weight_technical: float = 1.0
    weight_trusted: float = 1.0
    weight_risk: float = 1.0
    threshold: float = 0.5
    tie_rule: str = "untrustworthy"  # label at score == threshold
    indeterminate: str = "zero"  # zero | escalate
    label_names: dict = field(default_factory=lambda: dict(DEFAULT_LABEL_NAMES))

    def __post_init__(self):
        if min(self.weight_technical, self.weight_trusted, self.weight_risk) < 0:
            raise ConfigInvalid("weights must be non-negative")
        if self.weight_technical + self.weight_trusted + self.weight_risk == 0:
            raise ConfigInvalid("weights must not all be zero")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigInvalid("threshold must lie in [0, 1]")
        if self.tie_rule not in ("untrustworthy", "trustworthy"):
            raise ConfigInvalid(f"unknown tie_rule {self.tie_rule!r}")
        if self.indeterminate not in ("zero", "escalate"):
            raise ConfigInvalid(f"unknown indeterminate rule {self.indeterminate!r}")

    def normalized_weights(self) -> tuple[float, float, float]:
        total = self.weight_technical + self.weight_trusted + self.weight_risk
        return (
            self.weight_technical / total,
            self.weight_trusted / total,
            self.weight_risk / total,
        )

    def to_json(self) -> dict:
        return {
            "weights": {
                "technical": self.weight_technical,
                "trusted": self.weight_trusted,
                "risk": self.weight_risk,
            },
            "threshold": self.threshold,
            "tie_rule": self.tie_rule,
            "indeterminate": self.indeterminate,
            "label_names": dict(self.label_names),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PolicyConfig":
        weights = obj.get("weights", {})
        return cls(
            weight_technical=float(weights.get("technical", 1.0)),
            weight_trusted=float(weights.get("trusted", 1.0)),
            weight_risk=float(weights.get("risk", 1.0)),
            threshold=float(obj.get("threshold", 0.5)),
            tie_rule=obj.get("tie_rule", "untrustworthy"),
            indeterminate=obj.get("indeterminate", "zero"),
            label_names=dict(obj.get("label_names", DEFAULT_LABEL_NAMES)),
        )

    @classmethod
    def load(cls, path: Path) -> "PolicyConfig":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def resolve_indeterminates(vector: ScoreVector, config: PolicyConfig) -> ScoreVector:
    if vector.v_t is not None and vector.v_tr is not None:
        return vector
    if config.indeterminate == "escalate":
        raise UnresolvedIndeterminate("indeterminate component with escalate policy")
    return ScoreVector(
        0 if vector.v_t is None else vector.v_t,
        0 if vector.v_tr is None else vector.v_tr,
        vector.v_r,
    )


def compute_score(vector: ScoreVector, config: PolicyConfig) -> float:
    """Normalized weighted sum; order of operations fixed for bit-exact
    reproduction by other implementations."""
    resolved = resolve_indeterminates(vector, config)
    w_t, w_tr, w_r = config.normalized_weights()
    return w_t * resolved.v_t + w_tr * resolved.v_tr + w_r * resolved.v_r


def assign_label(
    status: VerificationStatus,
    vector: Optional[ScoreVector],
    config: PolicyConfig,
) -> Label:
    """Marker-dominant labeling; the score splits the middle two labels."""
    if status is VerificationStatus.VALID_POSITIVE:
        return Label.DEEPFAKE
    if status is VerificationStatus.VALID_NEGATIVE:
        return Label.VERIFIED
    if vector is None:
        raise MissingScore("unmarked content needs a score vector")
    score = compute_score(vector, config)
    if config.tie_rule == "trustworthy":
        return Label.TRUSTWORTHY if score >= config.threshold else Label.UNTRUSTWORTHY
    return Label.TRUSTWORTHY if score > config.threshold else Label.UNTRUSTWORTHY


MARKER_STATE_ORDER = (
    VerificationStatus.VALID_POSITIVE,
    VerificationStatus.VALID_NEGATIVE,
    VerificationStatus.INVALID,
    VerificationStatus.ABSENT,
)


def decision_table(config: PolicyConfig) -> list[dict]:
    """All 4 marker states x 8 binary vectors, in stable order."""
    rows = []
    for status in MARKER_STATE_ORDER:
        for v_t, v_tr, v_r in product((0, 1), repeat=3):
            vector = ScoreVector(v_t, v_tr, v_r)
            rows.append(
                {
                    "marker_status": status.value,
                    "v_t": v_t,
                    "v_tr": v_tr,
                    "v_r": v_r,
                    "score": compute_score(vector, config),
                    "label": assign_label(status, vector, config).value,
                }
            )
    return rows


def format_score(score: float) -> str:
    """Shortest round-trip float formatting, mirrored by the UI client."""
    return repr(score)


def decision_table_csv(config: PolicyConfig) -> str:
    lines = ["marker_status,v_t,v_tr,v_r,score,label"]
    for row in decision_table(config):
        lines.append(
            f"{row['marker_status']},{row['v_t']},{row['v_tr']},{row['v_r']},"
            f"{format_score(row['score'])},{row['label']}"
        )
    return "\n".join(lines) + "\n"
