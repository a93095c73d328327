"""Debate protocol: role setup, round loop, Moderator gating, verdict extraction.

One debate is strictly sequential. Per round the turn order is Affirmative,
Negative, Moderator; round 1 uses the opening/rebuttal prompts and later
rounds use the interaction prompt for both debaters, each carrying the
opponent's latest argument. After each round the Moderator decides whether to
proceed. If the round budget runs out the dedicated final prompt forces a
verdict (``forced_final``).

Unparseable Moderator output is re-prompted up to ``moderator_parse_retries``
times with a one-line JSON reminder; a round that stays unparseable defaults
to proceeding, while an unparseable final gate raises ``UndecidableDebate``.
Each re-prompt is itself a model call, so the recording always holds at most
3 * max_rounds + 1 turns while physical calls can exceed that bound by up to
``moderator_parse_retries`` per Moderator turn. If a response carries several
JSON objects, the first balanced object wins.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Union

from .gateway import (
    BackendHandle,
    ChatRequest,
    GatewayError,
    GenerationParams,
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
    ModeratorDecision,
    Role,
    TokenUsage,
    UnknownVerdict,
    Verdict,
    normalize_verdict,
)
from .prompts import TemplateId, render, render_evidence_set

logger = logging.getLogger(__name__)

_EMPTY_ARGUMENT = "(no argument presented)"
_JSON_REMINDER = (
    "Reminder: output your findings strictly as the JSON object described above."
)


class EngineError(ClaimDebateError):
    """Base class for debate-engine errors."""


class MalformedDecision(EngineError):
    """Moderator output did not contain a usable decision JSON object."""


class UndecidableDebate(EngineError):
    """The forced-final prompt stayed unparseable after all retries."""


class BackendFailure(EngineError):
    """A model call failed even after gateway retries."""


@dataclass(frozen=True)
class DebateConfig:
    max_rounds: int = 3
    moderator_parse_retries: int = 2
    debater_model: str = "gpt-4o-mini"
    moderator_model: str = "gpt-4o"
    params: GenerationParams = field(default_factory=GenerationParams)

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.moderator_parse_retries < 0:
            raise ValueError("moderator_parse_retries must be >= 0")


@dataclass(frozen=True)
class Continue:
    pass


@dataclass(frozen=True)
class Finalize:
    verdict: Verdict


@dataclass(frozen=True)
class ForceFinal:
    pass


Continuation = Union[Continue, Finalize, ForceFinal]


def first_json_object(raw: str) -> Optional[dict]:
    """First balanced JSON object in ``raw``; code fences need no stripping
    because scanning starts at each '{'."""
    decoder = json.JSONDecoder()
    idx = raw.find("{")
    while idx != -1:
        try:
            value, _ = decoder.raw_decode(raw, idx)
        except ValueError:
            value = None
        if isinstance(value, dict):
            return value
        idx = raw.find("{", idx + 1)
    return None


def parse_moderator_decision(raw: str) -> ModeratorDecision:
    """Parse the Moderator's per-round JSON output.

    Raises:
        MalformedDecision: no JSON object, missing/invalid "Proceeding
            Necessity", or a non-proceeding decision without a parseable
            verdict.
    """
    obj = first_json_object(raw)
    if obj is None:
        raise MalformedDecision("no JSON object in moderator output")
    if "Proceeding Necessity" not in obj:
        raise MalformedDecision('missing "Proceeding Necessity"')
    flag = str(obj["Proceeding Necessity"]).strip().casefold()
    if flag not in ("yes", "no"):
        raise MalformedDecision(f'unrecognized "Proceeding Necessity": {flag!r}')
    proceeding = flag == "yes"
    verdict: Optional[Verdict] = None
    verdict_justification: Optional[str] = None
    if not proceeding:
        verdict_raw = obj.get("Verdict") or ""
        try:
            verdict = normalize_verdict(str(verdict_raw))
        except UnknownVerdict:
            raise MalformedDecision(
                f"final decision without parseable verdict: {verdict_raw!r}"
            ) from None
        verdict_justification = str(obj.get("Justification for Verdict") or "")
    return ModeratorDecision(
        primary_insight=str(obj.get("Primary Insight") or ""),
        evidence_gaps=str(obj.get("Evidence Gaps") or ""),
        proceeding_justification=str(obj.get("Justification for Proceeding") or ""),
        proceeding=proceeding,
        verdict_justification=verdict_justification,
        verdict=verdict,
    )


def parse_final_verdict(raw: str) -> tuple[Verdict, str]:
    """Parse the forced-final JSON ({"Justification for Verdict", "Verdict"})."""
    obj = first_json_object(raw)
    if obj is None:
        raise MalformedDecision("no JSON object in final moderator output")
    verdict_raw = obj.get("Verdict") or ""
    try:
        verdict = normalize_verdict(str(verdict_raw))
    except UnknownVerdict:
        raise MalformedDecision(
            f"final output without parseable verdict: {verdict_raw!r}"
        ) from None
    return verdict, str(obj.get("Justification for Verdict") or "")


def decide_continuation(
    decision: ModeratorDecision, round: int, config: DebateConfig
) -> Continuation:
    """Finalize when the Moderator stopped; force the final prompt at budget."""
    if round < 1:
        raise ValueError("round must be >= 1")
    if not decision.proceeding:
        assert decision.verdict is not None
        return Finalize(decision.verdict)
    if round >= config.max_rounds:
        return ForceFinal()
    return Continue()


class _Agent:
    """One chat participant: private message history plus token accounting."""

    def __init__(
        self,
        role: Role,
        system_prompt: str,
        model_id: str,
        params: GenerationParams,
        backend: BackendHandle,
        claim_id: str,
        retry: RetryPolicy,
        ledger: Optional[UsageLedger],
    ):
        self.role = role
        self.messages: list[Message] = [Message("system", system_prompt)]
        self.usage = TokenUsage()
        self._model_id = model_id
        self._params = params
        self._backend = backend
        self._claim_id = claim_id
        self._retry = retry
        self._ledger = ledger
        self.calls = 0

    def say(self, user_text: str, round: int, template: TemplateId) -> str:
        self.messages.append(Message("user", user_text))
        request = ChatRequest(
            model_id=self._model_id,
            messages=tuple(self.messages),
            params=self._params,
            route=RouteInfo(
                role=self.role.value,
                round=round,
                template=template.value,
                claim_id=self._claim_id,
            ),
        )
        try:
            response = with_retry(request, self._backend, self._retry, self._ledger)
        except GatewayError as exc:
            raise BackendFailure(str(exc)) from exc
        self.calls += 1
        self.messages.append(Message("assistant", response.content))
        self.usage = self.usage.add(
            response.input_tokens, response.output_tokens, response.estimated
        )
        return response.content


def run_debate(
    claim: Claim,
    config: DebateConfig,
    backend: BackendHandle,
    retry: RetryPolicy = RetryPolicy(),
    ledger: Optional[UsageLedger] = None,
) -> DebateOutcome:
    """Run the full debate protocol for one claim.

    Raises:
        BackendFailure: a model call failed after gateway retries.
        UndecidableDebate: the forced-final output stayed unparseable.
    """
    if not claim.text.strip():
        raise ValueError("claim text must be non-empty")
    evidence_text = render_evidence_set(claim.evidence)
    meta_bindings = {"CLAIM": claim.text, "EVIDENCE_SET": evidence_text}

    def agent(role: Role, template: TemplateId, model_id: str) -> _Agent:
        return _Agent(
            role=role,
            system_prompt=render(template, meta_bindings),
            model_id=model_id,
            params=config.params,
            backend=backend,
            claim_id=claim.id,
            retry=retry,
            ledger=ledger,
        )

    affirmative = agent(Role.AFFIRMATIVE, TemplateId.DEBATER_META, config.debater_model)
    negative = agent(Role.NEGATIVE, TemplateId.DEBATER_META, config.debater_model)
    moderator = agent(Role.MODERATOR, TemplateId.MODERATOR_META, config.moderator_model)

    turns: list[DebateTurn] = []
    decisions: list[Optional[ModeratorDecision]] = []
    aff_argument = ""
    neg_argument = ""

    def build_outcome(
        verdict: Verdict, justification: str, rounds_used: int, forced: bool
    ) -> DebateOutcome:
        return DebateOutcome(
            claim_id=claim.id,
            recording=tuple(turns),
            decisions=tuple(decisions),
            rounds_used=rounds_used,
            predicted_verdict=verdict,
            predicted_justification=justification,
            forced_final=forced,
            token_usage={
                a.role.value: a.usage for a in (affirmative, negative, moderator)
            },
        )

    for round_no in range(1, config.max_rounds + 1):
        if round_no == 1:
            aff_template = TemplateId.AFFIRMATIVE_OPEN
            aff_prompt = render(aff_template, {"CLAIM": claim.text})
        else:
            aff_template = TemplateId.INTERACTION
            aff_prompt = render(aff_template, {"OPPOSITION_ARGUMENT": neg_argument})
        aff_argument = (
            affirmative.say(aff_prompt, round_no, aff_template).strip()
            or _EMPTY_ARGUMENT
        )
        turns.append(DebateTurn(Role.AFFIRMATIVE, round_no, aff_template.value, aff_argument))

        if round_no == 1:
            neg_template = TemplateId.NEGATIVE_REBUTTAL
            neg_prompt = render(neg_template, {"AFFIRMATIVE_ARGUMENT": aff_argument})
        else:
            neg_template = TemplateId.INTERACTION
            neg_prompt = render(neg_template, {"OPPOSITION_ARGUMENT": aff_argument})
        neg_argument = (
            negative.say(neg_prompt, round_no, neg_template).strip()
            or _EMPTY_ARGUMENT
        )
        turns.append(DebateTurn(Role.NEGATIVE, round_no, neg_template.value, neg_argument))

        round_prompt = render(
            TemplateId.MODERATOR_ROUND,
            {
                "ROUND_NUMBER": str(round_no),
                "AFFIRMATIVE_ARGUMENT": aff_argument,
                "NEGATIVE_ARGUMENT": neg_argument,
            },
        )
        decision, moderator_text = _decide_round(
            moderator, round_prompt, round_no, config
        )
        turns.append(
            DebateTurn(
                Role.MODERATOR, round_no, TemplateId.MODERATOR_ROUND.value, moderator_text
            )
        )
        decisions.append(decision)

        if decision is None:
            ruling: Continuation = (
                ForceFinal() if round_no >= config.max_rounds else Continue()
            )
        else:
            ruling = decide_continuation(decision, round_no, config)
        if isinstance(ruling, Finalize):
            assert decision is not None and decision.verdict_justification is not None
            return build_outcome(
                ruling.verdict, decision.verdict_justification, round_no, forced=False
            )
        if isinstance(ruling, ForceFinal):
            break

    final_prompt = render(
        TemplateId.MODERATOR_FINAL,
        {
            "AFFIRMATIVE_ARGUMENT": aff_argument,
            "NEGATIVE_ARGUMENT": neg_argument,
            "CLAIM": claim.text,
        },
    )
    verdict, justification, moderator_text = _decide_final(
        moderator, final_prompt, config
    )
    turns.append(
        DebateTurn(
            Role.MODERATOR,
            config.max_rounds,
            TemplateId.MODERATOR_FINAL.value,
            moderator_text,
        )
    )
    return build_outcome(verdict, justification, config.max_rounds, forced=True)


def _decide_round(
    moderator: _Agent, prompt: str, round_no: int, config: DebateConfig
) -> tuple[Optional[ModeratorDecision], str]:
    """One Moderator round gate; None after parse retries are exhausted."""
    text = ""
    for attempt in range(config.moderator_parse_retries + 1):
        message = prompt if attempt == 0 else f"{prompt}\n\n{_JSON_REMINDER}"
        text = moderator.say(message, round_no, TemplateId.MODERATOR_ROUND)
        try:
            return parse_moderator_decision(text), text
        except MalformedDecision as exc:
            logger.warning(
                "round %d moderator parse failed (attempt %d): %s",
                round_no,
                attempt + 1,
                exc,
            )
    return None, text


def _decide_final(
    moderator: _Agent, prompt: str, config: DebateConfig
) -> tuple[Verdict, str, str]:
    last_error: Optional[MalformedDecision] = None
    for attempt in range(config.moderator_parse_retries + 1):
        message = prompt if attempt == 0 else f"{prompt}\n\n{_JSON_REMINDER}"
        text = moderator.say(message, config.max_rounds, TemplateId.MODERATOR_FINAL)
        try:
            verdict, justification = parse_final_verdict(text)
            return verdict, justification, text
        except MalformedDecision as exc:
            last_error = exc
            logger.warning(
                "final moderator parse failed (attempt %d): %s", attempt + 1, exc
            )
    raise UndecidableDebate(
        f"final verdict unparseable after {config.moderator_parse_retries + 1} "
        f"attempts: {last_error}"
    )
