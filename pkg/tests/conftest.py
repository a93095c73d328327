"""Shared fixtures: scripted moderators, corpora builders, decision JSON."""

from __future__ import annotations

import json

import pytest

from claimdebate.gateway import ChatResponse
from claimdebate.model import Claim, EvidenceItem, Verdict


def round_decision_json(
    proceeding: bool,
    verdict: str = "",
    insight: str = "insight",
    justification: str = "because",
) -> str:
    """A Moderator round reply in the required JSON shape."""
    return json.dumps(
        {
            "Primary Insight": insight,
            "Evidence Gaps": "",
            "Justification for Proceeding": "" if not proceeding else justification,
            "Proceeding Necessity": "Yes" if proceeding else "No",
            "Justification for Verdict": "" if proceeding else justification,
            "Verdict": verdict,
        }
    )


def final_decision_json(verdict: str, justification: str = "forced") -> str:
    return json.dumps(
        {"Justification for Verdict": justification, "Verdict": verdict}
    )


class ProgrammableBackend:
    """Backend driven by a callable(route) -> str; counts physical calls."""

    def __init__(self, reply):
        self._reply = reply
        self.calls = 0
        self.requests = []

    def complete(self, request):
        self.calls += 1
        self.requests.append(request)
        content = self._reply(request.route)
        return ChatResponse(content=content, input_tokens=7, output_tokens=3)


def one_round_backend(verdict: str = "Refuted") -> ProgrammableBackend:
    """Moderator finalizes in round 1 with the given verdict."""

    def reply(route):
        if route.role == "Moderator":
            return round_decision_json(proceeding=False, verdict=verdict)
        return f"{route.role} says r{route.round}"

    return ProgrammableBackend(reply)


def always_proceed_backend(final_verdict: str = "Supported") -> ProgrammableBackend:
    """Moderator always proceeds; the forced-final prompt yields the verdict."""

    def reply(route):
        if route.role != "Moderator":
            return f"{route.role} says r{route.round}"
        if route.template == "moderator_final":
            return final_decision_json(final_verdict)
        return round_decision_json(proceeding=True)

    return ProgrammableBackend(reply)


@pytest.fixture
def claim():
    return Claim(
        id="c1",
        text="The moon is made of rock.",
        gold_verdict=Verdict.SUPPORTED,
        evidence=(
            EvidenceItem("What is the moon made of?", "Mostly rock.", "http://e/1"),
        ),
    )


@pytest.fixture
def unlabeled_claim():
    return Claim(id="c2", text="Water is wet.", evidence=())


def make_corpus_record(
    claim_text: str, label: str, qa_pairs: list[tuple[str, str, str]]
) -> dict:
    return {
        "claim": claim_text,
        "label": label,
        "questions": [
            {
                "question": q,
                "answers": [{"answer": a, "source_url": url, "answer_type": "Extractive"}],
            }
            for q, a, url in qa_pairs
        ],
    }


def write_corpus(path, records):
    path.write_text(json.dumps(records, ensure_ascii=False), encoding="utf-8")
    return path
