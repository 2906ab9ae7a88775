"""Multi-level deepfake moderation engine.

Layered content moderation for online platforms: provenance marker
verification backed by a certification chain, pluggable technical
detection plus trusted (human) verdict aggregation, downstream-risk
classification, a weighted three-signal score that maps to one of four
transparency labels, an append-only decision log, and audit tooling
(random-sample enforcement checks and threshold/weight tradeoff sweeps).
"""

__version__ = "0.1.0"
