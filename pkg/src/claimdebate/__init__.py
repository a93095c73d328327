"""Debate-driven claim verification toolkit."""

from .model import (
    Claim,
    ClaimDebateError,
    DebateOutcome,
    DebateTurn,
    EvidenceItem,
    Message,
    ModeratorDecision,
    PreferencePair,
    Role,
    SynDecSample,
    TokenUsage,
    UnknownVerdict,
    Verdict,
    normalize_verdict,
)

__version__ = "0.1.0"

__all__ = [
    "Claim",
    "ClaimDebateError",
    "DebateOutcome",
    "DebateTurn",
    "EvidenceItem",
    "Message",
    "ModeratorDecision",
    "PreferencePair",
    "Role",
    "SynDecSample",
    "TokenUsage",
    "UnknownVerdict",
    "Verdict",
    "normalize_verdict",
    "__version__",
]
