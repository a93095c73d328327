"""Training-data synthesis: debates over labeled claims, correction, export.

Synthesis runs the debate protocol over claims that carry gold verdicts and
annotated evidence, routes wrong-verdict samples through the Corrector agent,
and persists one sample per claim so interrupted runs resume where they
stopped. Exports produce one JSON object per line: the supervised file uses
``{"messages": [...]}`` and the preference file
``{"prompt": [...], "chosen": {...}, "rejected": {...}}``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Sequence

from .corpus import RunStore
from .engine import DebateConfig, first_json_object, run_debate
from .gateway import (
    BackendHandle,
    ChatRequest,
    Message,
    RetryPolicy,
    RouteInfo,
    UsageLedger,
    with_retry,
)
from .model import (
    Claim,
    ClaimDebateError,
    DebateOutcome,
    DebateTurn,
    PreferencePair,
    Role,
    SynDecSample,
)
from .prompts import TemplateId, render, render_evidence_set

logger = logging.getLogger(__name__)


class SynthesisError(ClaimDebateError):
    pass


class PreconditionViolated(SynthesisError):
    """An operation ran on a sample that does not satisfy its precondition."""


class MalformedCorrection(SynthesisError):
    """The Corrector's output stayed unparseable after retries."""


@dataclass(frozen=True)
class SplitSpec:
    """Sizes of the supervised and preference splits of one synthesis run."""

    sft_count: int
    dpo_count: int

    @property
    def total(self) -> int:
        return self.sft_count + self.dpo_count


@dataclass(frozen=True)
class SftDialogue:
    """A debate rendered as a multi-turn dialogue for supervised tuning.

    ``messages`` is system + one (user, assistant) pair per round, plus one
    more pair when the verdict came from the forced-final prompt. The final
    assistant message is the training target.
    """

    messages: tuple[Message, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if len(self.messages) < 3 or len(self.messages) % 2 == 0:
            raise ValueError("dialogue must be system plus (user, assistant) pairs")
        if self.messages[-1].role != "assistant":
            raise ValueError("dialogue must end with the assistant target")

    @property
    def target(self) -> Message:
        return self.messages[-1]

    def to_dict(self) -> dict:
        return {"messages": [m.to_dict() for m in self.messages]}

    @classmethod
    def from_dict(cls, data: dict) -> "SftDialogue":
        return cls(tuple(Message.from_dict(m) for m in data["messages"]))


@dataclass(frozen=True)
class SynthesisFailure:
    claim_id: str
    stage: str
    error: str

    def to_dict(self) -> dict:
        return {"claim_id": self.claim_id, "stage": self.stage, "error": self.error}


def serialize_recording(recording: Sequence[DebateTurn]) -> str:
    """Plain-text debate recording: one block per turn, in order."""
    return "\n\n".join(
        f"{turn.role.value} (Round {turn.round}): {turn.content}"
        for turn in recording
    )


def _final_primary_insight(outcome: DebateOutcome) -> str:
    for decision in reversed(outcome.decisions):
        if decision is not None:
            return decision.primary_insight
    return ""


def correct_justification(
    sample: SynDecSample,
    backend: BackendHandle,
    config: DebateConfig,
    retry: RetryPolicy = RetryPolicy(),
    ledger: Optional[UsageLedger] = None,
) -> str:
    """Ask the Corrector for a justification matching the gold verdict.

    Raises:
        PreconditionViolated: the sample's verdict is already correct.
        MalformedCorrection: no parseable justification after retries.
    """
    if sample.is_correct:
        raise PreconditionViolated(
            f"claim {sample.claim.id}: predicted verdict already matches gold"
        )
    assert sample.claim.gold_verdict is not None
    prompt = render(
        TemplateId.CORRECTOR,
        {
            "DEBATE_RECORDING": serialize_recording(sample.outcome.recording),
            "Primary_Insights": _final_primary_insight(sample.outcome),
            "GT_VERDICT": sample.claim.gold_verdict.display,
        },
    )
    last_error = "no attempts made"
    for attempt in range(config.moderator_parse_retries + 1):
        request = ChatRequest(
            model_id=config.moderator_model,
            messages=(Message("user", prompt),),
            params=config.params,
            route=RouteInfo(
                role=Role.CORRECTOR.value,
                round=attempt + 1,
                template=TemplateId.CORRECTOR.value,
                claim_id=sample.claim.id,
            ),
        )
        text = with_retry(request, backend, retry, ledger).content
        obj = first_json_object(text)
        justification = str((obj or {}).get("Justification for Verdict") or "").strip()
        if justification:
            return justification
        last_error = f"attempt {attempt + 1}: no justification in {text[:80]!r}"
        logger.warning("corrector parse failed for claim %s: %s", sample.claim.id, last_error)
    raise MalformedCorrection(f"claim {sample.claim.id}: {last_error}")


def synthesize_one(
    claim: Claim,
    config: DebateConfig,
    backend: BackendHandle,
    retry: RetryPolicy = RetryPolicy(),
    ledger: Optional[UsageLedger] = None,
) -> SynDecSample:
    """Debate one labeled claim and correct the justification if wrong."""
    if claim.gold_verdict is None:
        raise PreconditionViolated(f"claim {claim.id} has no gold verdict")
    outcome = run_debate(claim, config, backend, retry=retry, ledger=ledger)
    sample = SynDecSample(claim=claim, outcome=outcome)
    if not sample.is_correct:
        corrected = correct_justification(sample, backend, config, retry, ledger)
        sample = SynDecSample(
            claim=claim, outcome=outcome, corrected_justification=corrected
        )
    sample.validate_complete()
    return sample


def synthesize(
    claims: Sequence[Claim],
    config: DebateConfig,
    backend: BackendHandle,
    store: Optional[RunStore] = None,
    retry: RetryPolicy = RetryPolicy(),
    ledger: Optional[UsageLedger] = None,
    progress: Optional[Callable[[str], None]] = None,
) -> tuple[list[SynDecSample], list[SynthesisFailure]]:
    """Synthesize samples for every claim; per-claim failures are recorded.

    With a store, already-persisted claim ids are skipped and new samples are
    persisted as they finish, making the run resumable. Failures never abort
    the run; a partial corpus is valid.
    """
    samples: list[SynDecSample] = []
    failures: list[SynthesisFailure] = []
    done_ids = store.sample_ids() if store is not None else set()
    if store is not None and done_ids:
        persisted, _ = store.load_samples()
        samples.extend(persisted)
    for claim in claims:
        if claim.id in done_ids:
            continue
        try:
            sample = synthesize_one(claim, config, backend, retry, ledger)
        except ClaimDebateError as exc:
            failures.append(
                SynthesisFailure(claim_id=claim.id, stage="synthesize", error=str(exc))
            )
            logger.warning("claim %s failed: %s", claim.id, exc)
            continue
        samples.append(sample)
        if store is not None:
            store.persist_sample(sample)
        if progress is not None:
            progress(claim.id)
    return samples, failures


def partition(
    samples: Iterable[SynDecSample],
) -> tuple[list[SynDecSample], list[SynDecSample]]:
    """Split samples into (correct, error) on verdict equality with gold."""
    correct: list[SynDecSample] = []
    error: list[SynDecSample] = []
    for sample in samples:
        (correct if sample.is_correct else error).append(sample)
    return correct, error


def build_sft_dialogue(sample: SynDecSample) -> SftDialogue:
    """Reconstruct the Moderator's dialogue for one sample.

    System message is the rendered Moderator meta prompt; each round
    contributes the round prompt (both debaters' arguments) as the user
    message and the Moderator's recorded reply as the assistant message.
    """
    claim = sample.claim
    outcome = sample.outcome
    by_round: dict[int, dict[Role, str]] = {}
    final_text: Optional[str] = None
    last_args: dict[Role, str] = {}
    for turn in outcome.recording:
        if turn.prompt_id == TemplateId.MODERATOR_FINAL.value:
            final_text = turn.content
            continue
        by_round.setdefault(turn.round, {})[turn.role] = turn.content
        if turn.role in (Role.AFFIRMATIVE, Role.NEGATIVE):
            last_args[turn.role] = turn.content

    messages = [
        Message(
            "system",
            render(
                TemplateId.MODERATOR_META,
                {
                    "CLAIM": claim.text,
                    "EVIDENCE_SET": render_evidence_set(claim.evidence),
                },
            ),
        )
    ]
    for round_no in range(1, outcome.rounds_used + 1):
        round_turns = by_round.get(round_no, {})
        user = render(
            TemplateId.MODERATOR_ROUND,
            {
                "ROUND_NUMBER": str(round_no),
                "AFFIRMATIVE_ARGUMENT": round_turns.get(Role.AFFIRMATIVE, ""),
                "NEGATIVE_ARGUMENT": round_turns.get(Role.NEGATIVE, ""),
            },
        )
        messages.append(Message("user", user))
        messages.append(Message("assistant", round_turns.get(Role.MODERATOR, "")))
    if outcome.forced_final:
        if final_text is None:
            raise SynthesisError(
                f"claim {claim.id}: forced-final outcome lacks the final turn"
            )
        user = render(
            TemplateId.MODERATOR_FINAL,
            {
                "AFFIRMATIVE_ARGUMENT": last_args.get(Role.AFFIRMATIVE, ""),
                "NEGATIVE_ARGUMENT": last_args.get(Role.NEGATIVE, ""),
                "CLAIM": claim.text,
            },
        )
        messages.append(Message("user", user))
        messages.append(Message("assistant", final_text))
    return SftDialogue(tuple(messages))


def export_sft(samples: Sequence[SynDecSample]) -> Iterator[SftDialogue]:
    """Supervised dialogues for correct samples (target = final reply).

    Raises:
        PreconditionViolated: a sample's verdict does not match gold.
    """
    for sample in samples:
        if not sample.is_correct:
            raise PreconditionViolated(
                f"claim {sample.claim.id}: supervised export requires correct verdicts"
            )
        yield build_sft_dialogue(sample)


def final_verdict_json(verdict_display: str, justification: str) -> str:
    """The final-verdict JSON shape used for chosen responses."""
    return json.dumps(
        {"Justification for Verdict": justification, "Verdict": verdict_display},
        ensure_ascii=False,
        indent=2,
    )


def export_dpo(samples: Sequence[SynDecSample]) -> Iterator[PreferencePair]:
    """Preference pairs for error samples; samples lacking a correction are
    skipped (and counted by the file writer).

    Raises:
        PreconditionViolated: a sample's verdict already matches gold.
    """
    for sample in samples:
        if sample.is_correct:
            raise PreconditionViolated(
                f"claim {sample.claim.id}: preference export requires error samples"
            )
        if sample.corrected_justification is None:
            logger.warning(
                "skipping claim %s: no corrected justification", sample.claim.id
            )
            continue
        dialogue = build_sft_dialogue(sample)
        context = dialogue.messages[:-1]
        assert sample.claim.gold_verdict is not None
        chosen = final_verdict_json(
            sample.claim.gold_verdict.display, sample.corrected_justification
        )
        rejected = dialogue.target.content
        yield PreferencePair(context=context, chosen=chosen, rejected=rejected)


def _write_jsonl(path: str | Path, records: Iterable[dict]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            count += 1
    return count


def write_syndec(samples: Sequence[SynDecSample], path: str | Path) -> int:
    return _write_jsonl(path, (s.to_dict() for s in samples))


def load_syndec(path: str | Path) -> list[SynDecSample]:
    samples = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                samples.append(SynDecSample.from_dict(json.loads(line)))
    return samples


def write_failures(failures: Sequence[SynthesisFailure], path: str | Path) -> int:
    return _write_jsonl(path, (f.to_dict() for f in failures))


def write_sft(samples: Sequence[SynDecSample], path: str | Path) -> int:
    """Write sft.jsonl; returns the record count."""
    return _write_jsonl(path, (d.to_dict() for d in export_sft(samples)))


def write_dpo(samples: Sequence[SynDecSample], path: str | Path) -> tuple[int, int]:
    """Write dpo.jsonl; returns (written, skipped)."""
    eligible = [s for s in samples if s.corrected_justification is not None]
    skipped = len(samples) - len(eligible)
    written = _write_jsonl(path, (p.to_dict() for p in export_dpo(eligible)))
    return written, skipped


def read_sft_file(path: str | Path) -> list[SftDialogue]:
    dialogues = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                dialogues.append(SftDialogue.from_dict(json.loads(line)))
    return dialogues


def read_dpo_file(path: str | Path) -> list[PreferencePair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                pairs.append(PreferencePair.from_dict(json.loads(line)))
    return pairs
