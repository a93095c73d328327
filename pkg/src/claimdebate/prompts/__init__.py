"""Prompt templates for the three debate agents and the Corrector.

The eight templates live as UTF-8 text assets next to this module and are
loaded once at import. Their prose is fixed; tests pin a checksum per file so
any drift is caught. Placeholders appear in the assets as ``[NAME]`` tokens,
some with spaces instead of underscores ("[AFFIRMATIVE ARGUMENT]"); bindings
always use the underscore form.
"""

from __future__ import annotations

import enum
import hashlib
import re
from importlib import resources
from typing import Iterable, Mapping

from ..model import ClaimDebateError, EvidenceItem


class PromptError(ClaimDebateError):
    """Base class for template errors."""


class UnknownTemplate(PromptError):
    """Requested template id is not one of the eight known templates."""


class MissingBinding(PromptError):
    """A required placeholder has no binding."""

    def __init__(self, name: str):
        super().__init__(f"missing binding: {name}")
        self.name = name


class TemplateId(enum.Enum):
    """One member per prompt template."""

    DEBATER_META = "debater_meta"
    MODERATOR_META = "moderator_meta"
    AFFIRMATIVE_OPEN = "affirmative_open"
    NEGATIVE_REBUTTAL = "negative_rebuttal"
    INTERACTION = "interaction"
    MODERATOR_ROUND = "moderator_round"
    MODERATOR_FINAL = "moderator_final"
    CORRECTOR = "corrector"


_PLACEHOLDERS: dict[TemplateId, frozenset[str]] = {
    TemplateId.DEBATER_META: frozenset({"CLAIM", "EVIDENCE_SET"}),
    TemplateId.MODERATOR_META: frozenset({"CLAIM", "EVIDENCE_SET"}),
    TemplateId.AFFIRMATIVE_OPEN: frozenset({"CLAIM"}),
    TemplateId.NEGATIVE_REBUTTAL: frozenset({"AFFIRMATIVE_ARGUMENT"}),
    TemplateId.INTERACTION: frozenset({"OPPOSITION_ARGUMENT"}),
    TemplateId.MODERATOR_ROUND: frozenset(
        {"ROUND_NUMBER", "AFFIRMATIVE_ARGUMENT", "NEGATIVE_ARGUMENT"}
    ),
    TemplateId.MODERATOR_FINAL: frozenset(
        {"AFFIRMATIVE_ARGUMENT", "NEGATIVE_ARGUMENT", "CLAIM"}
    ),
    TemplateId.CORRECTOR: frozenset(
        {"DEBATE_RECORDING", "Primary_Insights", "GT_VERDICT"}
    ),
}

ALL_PLACEHOLDER_NAMES: frozenset[str] = frozenset().union(*_PLACEHOLDERS.values())


def _tokens_for(name: str) -> tuple[str, ...]:
    # Assets carry either "[NAME_WITH_UNDERSCORES]" or "[NAME WITH SPACES]".
    underscored = f"[{name}]"
    spaced = f"[{name.replace('_', ' ')}]"
    return (underscored,) if spaced == underscored else (underscored, spaced)


def _load_asset(template: TemplateId) -> str:
    path = resources.files(__package__).joinpath(f"assets/{template.value}.txt")
    return path.read_text(encoding="utf-8").rstrip("\n")


_TEXTS: dict[TemplateId, str] = {t: _load_asset(t) for t in TemplateId}


def template_text(template: TemplateId) -> str:
    """Raw template text with placeholders unsubstituted."""
    try:
        return _TEXTS[template]
    except KeyError:
        raise UnknownTemplate(str(template)) from None


def template_checksums() -> dict[str, str]:
    """SHA-256 of each template's raw text, keyed by template value."""
    return {
        t.value: hashlib.sha256(_TEXTS[t].encode("utf-8")).hexdigest()
        for t in TemplateId
    }


def required_placeholders(template: TemplateId) -> frozenset[str]:
    """Exact set of placeholder names the template needs."""
    try:
        return _PLACEHOLDERS[template]
    except KeyError:
        raise UnknownTemplate(str(template)) from None


def render(template: TemplateId, bindings: Mapping[str, str]) -> str:
    """Substitute every placeholder of ``template`` from ``bindings``.

    Substitution is a single pass, so binding values that themselves contain
    bracket tokens are never re-expanded.

    Raises:
        MissingBinding: a required placeholder is absent or None.
        UnknownTemplate: template is not a known id.
    """
    text = template_text(template)
    token_map: dict[str, str] = {}
    for name in sorted(required_placeholders(template)):
        if bindings.get(name) is None:
            raise MissingBinding(name)
        for token in _tokens_for(name):
            token_map[token] = str(bindings[name])
    pattern = re.compile(
        "|".join(re.escape(t) for t in sorted(token_map, key=len, reverse=True))
    )
    return pattern.sub(lambda m: token_map[m.group(0)], text)


def render_evidence_set(evidence: Iterable[EvidenceItem]) -> str:
    """Serialize evidence as numbered Q/A lines; empty input gets a sentinel."""
    lines = [
        f"{i}. Q: {item.question} A: {item.answer} ({item.source_url})"
        for i, item in enumerate(evidence, start=1)
    ]
    if not lines:
        return "No evidence provided."
    return "\n".join(lines)
