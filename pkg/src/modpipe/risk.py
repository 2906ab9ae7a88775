"""Downstream-risk classification from content category and reach."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .core import OriginContext

# Seed categories in the spirit of DSA Art. 34(1)(c) systemic-risk areas.
DEFAULT_HIGH_RISK_CATEGORIES = frozenset(
    {
        "political_communication",
        "civic_discourse",
        "elections",
        "public_health",
        "catastrophic_event",
    }
)
DEFAULT_REACH_THRESHOLD = 100_000


@dataclass(frozen=True)
class RiskPolicy:
    high_risk_categories: frozenset[str] = DEFAULT_HIGH_RISK_CATEGORIES
    reach_threshold: int = DEFAULT_REACH_THRESHOLD
    verified_source_overrides: bool = False

    def __post_init__(self):
        if self.reach_threshold < 0:
            raise ValueError("reach_threshold must be >= 0")
        if not self.high_risk_categories:
            raise ValueError("high_risk_categories must be non-empty")
        object.__setattr__(self, "high_risk_categories", frozenset(self.high_risk_categories))

    def to_json(self) -> dict:
        return {
            "high_risk_categories": sorted(self.high_risk_categories),
            "reach_threshold": self.reach_threshold,
            "verified_source_overrides": self.verified_source_overrides,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RiskPolicy":
        return cls(
            high_risk_categories=frozenset(obj["high_risk_categories"]),
            reach_threshold=int(obj["reach_threshold"]),
            verified_source_overrides=bool(obj.get("verified_source_overrides", False)),
        )

    @classmethod
    def load(cls, path: Path) -> "RiskPolicy":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class RiskAssessment:
    level: str  # low | high
    v_r: int
    matched_categories: frozenset[str] = frozenset()
    reach_exceeded: bool = False

    def __post_init__(self):
        assert self.v_r == (1 if self.level == "low" else 0)
        object.__setattr__(self, "matched_categories", frozenset(self.matched_categories))

    def to_json(self) -> dict:
        return {
            "level": self.level,
            "v_r": self.v_r,
            "matched_categories": sorted(self.matched_categories),
            "reach_exceeded": self.reach_exceeded,
        }


def classify_risk(origin: OriginContext, policy: RiskPolicy) -> RiskAssessment:
    """High risk when a high-risk category matches or reach hits the
    threshold (boundary inclusive, conservative).

    A verified source can, when the policy opts in, neutralize a
    category match; reach always escalates regardless.
    """
    matched = origin.category_tags & policy.high_risk_categories
    reach_exceeded = origin.expected_reach >= policy.reach_threshold
    high_by_category = bool(matched)
    if policy.verified_source_overrides and origin.verified_source:
        high_by_category = False
    high = high_by_category or reach_exceeded
    return RiskAssessment(
        level="high" if high else "low",
        v_r=0 if high else 1,
        matched_categories=matched,
        reach_exceeded=reach_exceeded,
    )


def is_verified_source(origin: OriginContext, registry: Iterable[str]) -> bool:
    """Membership test used to set origin.verified_source at ingestion."""
    return origin.source_id in set(registry)


def load_verified_sources(path: Path) -> frozenset[str]:
    """Registry file: a JSON array of source_ids."""
    return frozenset(json.loads(Path(path).read_text(encoding="utf-8")))
