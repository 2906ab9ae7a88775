import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modpipe.core import OriginContext
from modpipe.risk import RiskPolicy, classify_risk, is_verified_source


def origin(tags, reach=10, verified=False):
    return OriginContext(
        source_id="s", category_tags=frozenset(tags), expected_reach=reach, verified_source=verified
    )


POLICY = RiskPolicy(reach_threshold=100_000)


class TestClassifyRisk:
    def test_harmless_low_reach_is_low(self):
        assessment = classify_risk(origin({"animals"}), POLICY)
        assert assessment.level == "low" and assessment.v_r == 1

    def test_political_is_high(self):
        assessment = classify_risk(origin({"political_communication"}), POLICY)
        assert assessment.level == "high" and assessment.v_r == 0
        assert assessment.matched_categories == {"political_communication"}

    def test_reach_boundary_inclusive(self):
        assessment = classify_risk(origin({"animals"}, reach=100_000), POLICY)
        assert assessment.level == "high" and assessment.reach_exceeded

    def test_reach_below_boundary(self):
        assert classify_risk(origin({"animals"}, reach=99_999), POLICY).level == "low"

    def test_verified_source_override_category_only(self):
        policy = RiskPolicy(reach_threshold=100_000, verified_source_overrides=True)
        by_category = origin({"elections"}, verified=True)
        assert classify_risk(by_category, policy).level == "low"
        # reach still escalates even for verified sources
        by_reach = origin({"elections"}, reach=200_000, verified=True)
        assert classify_risk(by_reach, policy).level == "high"

    def test_override_disabled_by_default(self):
        assert classify_risk(origin({"elections"}, verified=True), POLICY).level == "high"

    @settings(max_examples=60, deadline=None)
    @given(
        tags=st.sets(st.sampled_from(["animals", "sports", "elections", "public_health", "x"]), min_size=1),
        reach=st.integers(0, 10**7),
        extra=st.sampled_from(["animals", "sports", "x", "y"]),
        threshold_bump=st.integers(0, 10**6),
    )
    def test_monotonicity_and_coupling(self, tags, reach, extra, threshold_bump):
        o = origin(tags, reach=reach)
        base = classify_risk(o, POLICY)
        assert base.v_r == (1 if base.level == "low" else 0)
        # adding a category to the high-risk set never downgrades
        wider = RiskPolicy(
            high_risk_categories=POLICY.high_risk_categories | {extra},
            reach_threshold=POLICY.reach_threshold,
        )
        if base.level == "high":
            assert classify_risk(o, wider).level == "high"
        # raising the reach threshold never upgrades
        looser = RiskPolicy(
            high_risk_categories=POLICY.high_risk_categories,
            reach_threshold=POLICY.reach_threshold + threshold_bump,
        )
        if base.level == "low":
            assert classify_risk(o, looser).level == "low"


class TestVerifiedSource:
    def test_membership(self):
        o = origin({"animals"})
        assert is_verified_source(o, {"s", "t"})
        assert not is_verified_source(o, {"t"})
        assert not is_verified_source(o, set())


class TestRiskPolicy:
    def test_validation(self):
        with pytest.raises(ValueError):
            RiskPolicy(reach_threshold=-1)
        with pytest.raises(ValueError):
            RiskPolicy(high_risk_categories=frozenset())

    def test_json_round_trip(self, tmp_path):
        policy = RiskPolicy(
            high_risk_categories=frozenset({"a", "b"}), reach_threshold=5, verified_source_overrides=True
        )
        path = tmp_path / "risk.json"
        import json

        path.write_text(json.dumps(policy.to_json()))
        assert RiskPolicy.load(path) == policy
