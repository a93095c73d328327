"""Shared domain types for debate-driven claim verification.

Everything here is an immutable value object; instances can be shared freely
across worker threads. JSON codecs (``to_dict`` / ``from_dict``) are the
canonical wire form used by the run store and the export files.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence


class ClaimDebateError(Exception):
    """Base class for every error raised by this package."""


class UnknownVerdict(ClaimDebateError):
    """A string matched none of the four verdict categories."""


class Verdict(enum.Enum):
    """The four claim-verification verdict categories.

    Values are the canonical display strings as they appear in the agent
    prompts (which is also what models are instructed to emit).
    """

    SUPPORTED = "Supported"
    REFUTED = "Refuted"
    NOT_ENOUGH_EVIDENCE = "Not Enough Evidence"
    CONFLICTING_EVIDENCE_CHERRY_PICKING = "Conflicting Evidence/Cherry-picking"

    @property
    def display(self) -> str:
        return self.value


def _fold_verdict_key(text: str) -> str:
    # Slash and hyphen both act as separators so spelling variants of the
    # fourth category ("Cherry-Picking", "Cherry-picking", "cherry picking")
    # collapse to one key.
    return " ".join(re.sub(r"[/-]", " ", text).split()).casefold()


_VERDICT_BY_KEY = {_fold_verdict_key(v.value): v for v in Verdict}


def normalize_verdict(raw: str) -> Verdict:
    """Map free text onto one of the four verdict categories.

    Trims, case-folds and collapses internal whitespace; slash/hyphen variants
    of the conflicting-evidence category are accepted.

    Raises:
        UnknownVerdict: if ``raw`` matches no category.
    """
    if not isinstance(raw, str) or not raw.strip():
        raise UnknownVerdict("empty verdict string")
    key = _fold_verdict_key(raw)
    try:
        return _VERDICT_BY_KEY[key]
    except KeyError:
        raise UnknownVerdict(f"not a verdict category: {raw!r}") from None


class Role(str, enum.Enum):
    """Agent roles in a debate."""

    AFFIRMATIVE = "Affirmative"
    NEGATIVE = "Negative"
    MODERATOR = "Moderator"
    CORRECTOR = "Corrector"


@dataclass(frozen=True)
class Message:
    """One chat message (role is ``system`` / ``user`` / ``assistant``)."""

    role: str
    content: str

    def to_dict(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Message":
        return cls(role=str(data["role"]), content=str(data["content"]))


@dataclass(frozen=True)
class EvidenceItem:
    """One question/answer evidence unit with its source URL (may be empty)."""

    question: str
    answer: str
    source_url: str = ""

    def to_dict(self) -> dict[str, str]:
        return {
            "question": self.question,
            "answer": self.answer,
            "source_url": self.source_url,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EvidenceItem":
        return cls(
            question=str(data.get("question", "")),
            answer=str(data.get("answer", "")),
            source_url=str(data.get("source_url", "")),
        )


@dataclass(frozen=True)
class Claim:
    """A textual claim with optional ground-truth verdict and evidence set."""

    id: str
    text: str
    gold_verdict: Optional[Verdict] = None
    evidence: tuple[EvidenceItem, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "evidence", tuple(self.evidence))
        if not self.id:
            raise ValueError("claim id must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "text": self.text,
            "gold_verdict": self.gold_verdict.display if self.gold_verdict else None,
            "evidence": [e.to_dict() for e in self.evidence],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Claim":
        gold = data.get("gold_verdict")
        return cls(
            id=str(data["id"]),
            text=str(data["text"]),
            gold_verdict=normalize_verdict(gold) if gold else None,
            evidence=tuple(EvidenceItem.from_dict(e) for e in data.get("evidence", [])),
        )


@dataclass(frozen=True)
class DebateTurn:
    """One agent utterance in a debate recording."""

    role: Role
    round: int
    prompt_id: str
    content: str

    def __post_init__(self) -> None:
        if self.round < 1:
            raise ValueError("round numbering starts at 1")

    def to_dict(self) -> dict[str, Any]:
        return {
            "role": self.role.value,
            "round": self.round,
            "prompt_id": self.prompt_id,
            "content": self.content,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DebateTurn":
        return cls(
            role=Role(data["role"]),
            round=int(data["round"]),
            prompt_id=str(data["prompt_id"]),
            content=str(data["content"]),
        )


@dataclass(frozen=True)
class ModeratorDecision:
    """Parsed form of the Moderator's per-round JSON output.

    ``proceeding`` is False exactly when the Moderator ended the debate, in
    which case the verdict and its justification must be present.
    """

    primary_insight: str
    evidence_gaps: str
    proceeding_justification: str
    proceeding: bool
    verdict_justification: Optional[str] = None
    verdict: Optional[Verdict] = None

    def __post_init__(self) -> None:
        if self.proceeding:
            if self.verdict is not None:
                raise ValueError("proceeding decision must not carry a verdict")
        else:
            if self.verdict is None or self.verdict_justification is None:
                raise ValueError("final decision requires verdict and justification")

    def to_dict(self) -> dict[str, Any]:
        return {
            "primary_insight": self.primary_insight,
            "evidence_gaps": self.evidence_gaps,
            "proceeding_justification": self.proceeding_justification,
            "proceeding": self.proceeding,
            "verdict_justification": self.verdict_justification,
            "verdict": self.verdict.display if self.verdict else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModeratorDecision":
        verdict = data.get("verdict")
        return cls(
            primary_insight=str(data.get("primary_insight", "")),
            evidence_gaps=str(data.get("evidence_gaps", "")),
            proceeding_justification=str(data.get("proceeding_justification", "")),
            proceeding=bool(data["proceeding"]),
            verdict_justification=data.get("verdict_justification"),
            verdict=normalize_verdict(verdict) if verdict else None,
        )


@dataclass(frozen=True)
class TokenUsage:
    """Input/output token counts; ``estimated`` marks locally estimated counts."""

    input_tokens: int = 0
    output_tokens: int = 0
    estimated: bool = False

    def add(self, input_tokens: int, output_tokens: int, estimated: bool) -> "TokenUsage":
        return TokenUsage(
            input_tokens=self.input_tokens + input_tokens,
            output_tokens=self.output_tokens + output_tokens,
            estimated=self.estimated or estimated,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "estimated": self.estimated,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TokenUsage":
        return cls(
            input_tokens=int(data.get("input_tokens", 0)),
            output_tokens=int(data.get("output_tokens", 0)),
            estimated=bool(data.get("estimated", False)),
        )


@dataclass(frozen=True)
class DebateOutcome:
    """Result of one debate: the turn log, decisions, verdict and usage.

    ``forced_final`` marks the path where the round budget ran out and the
    verdict came from the dedicated final prompt. ``decisions`` holds one
    parsed per-round Moderator decision per round (None where parsing was
    exhausted and the round defaulted to proceeding).
    """

    claim_id: str
    recording: tuple[DebateTurn, ...]
    decisions: tuple[Optional[ModeratorDecision], ...]
    rounds_used: int
    predicted_verdict: Verdict
    predicted_justification: str
    forced_final: bool
    token_usage: Mapping[str, TokenUsage] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "recording", tuple(self.recording))
        object.__setattr__(self, "decisions", tuple(self.decisions))
        object.__setattr__(self, "token_usage", dict(self.token_usage))
        if self.rounds_used < 1:
            raise ValueError("rounds_used must be >= 1")
        if not self.recording or self.recording[-1].role is not Role.MODERATOR:
            raise ValueError("recording must end with the Moderator's verdict turn")

    def to_dict(self) -> dict[str, Any]:
        return {
            "claim_id": self.claim_id,
            "recording": [t.to_dict() for t in self.recording],
            "decisions": [d.to_dict() if d else None for d in self.decisions],
            "rounds_used": self.rounds_used,
            "predicted_verdict": self.predicted_verdict.display,
            "predicted_justification": self.predicted_justification,
            "forced_final": self.forced_final,
            "token_usage": {k: v.to_dict() for k, v in self.token_usage.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DebateOutcome":
        return cls(
            claim_id=str(data["claim_id"]),
            recording=tuple(DebateTurn.from_dict(t) for t in data["recording"]),
            decisions=tuple(
                ModeratorDecision.from_dict(d) if d else None
                for d in data.get("decisions", [])
            ),
            rounds_used=int(data["rounds_used"]),
            predicted_verdict=normalize_verdict(data["predicted_verdict"]),
            predicted_justification=str(data["predicted_justification"]),
            forced_final=bool(data["forced_final"]),
            token_usage={
                k: TokenUsage.from_dict(v)
                for k, v in data.get("token_usage", {}).items()
            },
        )


@dataclass(frozen=True)
class SynDecSample:
    """One synthesized training record: a claim, its debate and corrections.

    A finished sample satisfies: corrected_justification is present exactly
    when the predicted verdict differs from gold. Construction only rejects
    the impossible direction (a correction for an already-correct verdict);
    ``validate_complete`` checks the full condition once the Corrector ran.
    """

    claim: Claim
    outcome: DebateOutcome
    corrected_justification: Optional[str] = None

    def __post_init__(self) -> None:
        if self.claim.gold_verdict is None:
            raise ValueError("synthesis samples require a gold verdict")
        if self.corrected_justification is not None and self.is_correct:
            raise ValueError("corrected justification on a correct sample")

    @property
    def is_correct(self) -> bool:
        return self.outcome.predicted_verdict == self.claim.gold_verdict

    def validate_complete(self) -> None:
        if (self.corrected_justification is not None) == self.is_correct:
            raise ValueError(
                f"sample {self.claim.id}: corrected justification must be "
                "present exactly when the verdict is wrong"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "claim": self.claim.to_dict(),
            "outcome": self.outcome.to_dict(),
            "corrected_justification": self.corrected_justification,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SynDecSample":
        return cls(
            claim=Claim.from_dict(data["claim"]),
            outcome=DebateOutcome.from_dict(data["outcome"]),
            corrected_justification=data.get("corrected_justification"),
        )


@dataclass(frozen=True)
class PreferencePair:
    """A preference-optimization pair built from an error sample.

    ``context`` is the Moderator dialogue up to (excluding) its final reply;
    ``chosen`` carries the gold verdict with the corrected justification and
    ``rejected`` is the original wrong reply.
    """

    context: tuple[Message, ...]
    chosen: str
    rejected: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "context", tuple(self.context))
        if self.chosen == self.rejected:
            raise ValueError("chosen and rejected responses must differ")

    def to_dict(self) -> dict[str, Any]:
        return {
            "prompt": [m.to_dict() for m in self.context],
            "chosen": {"role": "assistant", "content": self.chosen},
            "rejected": {"role": "assistant", "content": self.rejected},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PreferencePair":
        return cls(
            context=tuple(Message.from_dict(m) for m in data["prompt"]),
            chosen=str(data["chosen"]["content"]),
            rejected=str(data["rejected"]["content"]),
        )


def claims_from_records(records: Sequence[Mapping[str, Any]]) -> list[Claim]:
    """Decode a list of claim dicts (inverse of ``Claim.to_dict``)."""
    return [Claim.from_dict(r) for r in records]
