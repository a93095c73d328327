import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from claimdebate.model import EvidenceItem
from claimdebate.prompts import (
    ALL_PLACEHOLDER_NAMES,
    MissingBinding,
    TemplateId,
    render,
    render_evidence_set,
    required_placeholders,
    template_checksums,
    template_text,
)

# Pinned so any drift in the template assets fails loudly.
CHECKSUMS = {
    "debater_meta": "b8d240a58ea29e1708dbb4769babb9907bdb67af9618e9fa3ecfc1950158ee00",
    "moderator_meta": "ce42e3d34af5828cbb0b1e392e43689422275a3c28bd028ac6a02369815df6c7",
    "affirmative_open": "de7ab7ee896a02c1029c76902852af026c7811d033db7906796324ab5a0fa2f3",
    "negative_rebuttal": "f38534483ff7d31c05b5990accc6cb1a247fdc2074cb48a835e3904014855a2d",
    "interaction": "95151236754c45d5d8f35c7bc451b4033d7ebe91d49d574a5c35e8db98102123",
    "moderator_round": "f86c6f649ea03770e8075c9a87254db177464c6150fb31f642e72f3ddba50f19",
    "moderator_final": "67ac71bb89d7bc4b8cee8ce168b7f8b5bec41a2cdc7d59fa9a5dfda9695c6aa6",
    "corrector": "4db99473fa9a51e363b313b5b9a86ec8298e17537b597a1a1462a4e74e29043a",
}

EXPECTED_PLACEHOLDERS = {
    TemplateId.DEBATER_META: {"CLAIM", "EVIDENCE_SET"},
    TemplateId.MODERATOR_META: {"CLAIM", "EVIDENCE_SET"},
    TemplateId.AFFIRMATIVE_OPEN: {"CLAIM"},
    TemplateId.NEGATIVE_REBUTTAL: {"AFFIRMATIVE_ARGUMENT"},
    TemplateId.INTERACTION: {"OPPOSITION_ARGUMENT"},
    TemplateId.MODERATOR_ROUND: {
        "ROUND_NUMBER",
        "AFFIRMATIVE_ARGUMENT",
        "NEGATIVE_ARGUMENT",
    },
    TemplateId.MODERATOR_FINAL: {
        "AFFIRMATIVE_ARGUMENT",
        "NEGATIVE_ARGUMENT",
        "CLAIM",
    },
    TemplateId.CORRECTOR: {"DEBATE_RECORDING", "Primary_Insights", "GT_VERDICT"},
}

VERDICT_LABELS = [
    "Supported",
    "Refuted",
    "Not Enough Evidence",
    "Conflicting Evidence/Cherry-picking",
]


def full_bindings():
    return {name: f"<{name.lower()}>" for name in ALL_PLACEHOLDER_NAMES}


def test_exactly_eight_templates():
    assert len(TemplateId) == 8


def test_checksums_pinned():
    assert template_checksums() == CHECKSUMS


@pytest.mark.parametrize("template", list(TemplateId))
def test_registry_matches_tokens_in_assets(template):
    """Placeholder registry is complete and sound against the asset text."""
    text = template_text(template)
    found = set()
    for name in ALL_PLACEHOLDER_NAMES:
        spaced = name.replace("_", " ")
        if f"[{name}]" in text or f"[{spaced}]" in text:
            found.add(name)
    assert found == required_placeholders(template) == EXPECTED_PLACEHOLDERS[template]


@pytest.mark.parametrize("template", list(TemplateId))
def test_render_resolves_every_token(template):
    rendered = render(template, full_bindings())
    for name in ALL_PLACEHOLDER_NAMES:
        assert f"[{name}]" not in rendered
        assert f"[{name.replace('_', ' ')}]" not in rendered


def test_moderator_meta_carries_bindings_and_verdict_criteria():
    out = render(TemplateId.MODERATOR_META, {"CLAIM": "X", "EVIDENCE_SET": "E"})
    assert "Claim: X" in out
    assert "Evidence Set: E" in out
    assert "Verdict Criteria:" in out
    for label in VERDICT_LABELS:
        assert label in out


def test_missing_binding_is_named():
    with pytest.raises(MissingBinding) as err:
        render(TemplateId.AFFIRMATIVE_OPEN, {})
    assert err.value.name == "CLAIM"


def test_corrector_embeds_gold_verdict():
    out = render(
        TemplateId.CORRECTOR,
        {"DEBATE_RECORDING": "d", "Primary_Insights": "p", "GT_VERDICT": "Refuted"},
    )
    assert "this claim is Refuted based on the debate context" in out
    assert "Debate Recoding: d" in out
    assert "Primary Insights: p" in out


def test_moderator_round_header_and_json_block():
    out = render(
        TemplateId.MODERATOR_ROUND,
        {"ROUND_NUMBER": "2", "AFFIRMATIVE_ARGUMENT": "A2", "NEGATIVE_ARGUMENT": "N2"},
    )
    assert out.startswith("Round 2 of the fact-checking debate has concluded.")
    assert "Affirmative: A2" in out
    assert "Negative: N2" in out
    assert '"Proceeding Necessity": "Yes or No"' in out
    assert "Output your findings in JSON format:" in out


def test_moderator_final_structure():
    out = render(
        TemplateId.MODERATOR_FINAL,
        {"AFFIRMATIVE_ARGUMENT": "A", "NEGATIVE_ARGUMENT": "N", "CLAIM": "C"},
    )
    assert "Affirmative: A\nNegative: N" in out
    assert "After reviewing both sides' arguments on the claim:\nC" in out
    assert '"Justification for Verdict": "..."' in out


def test_binding_value_containing_token_not_reexpanded():
    out = render(
        TemplateId.MODERATOR_FINAL,
        {"AFFIRMATIVE_ARGUMENT": "quoting [CLAIM] here", "NEGATIVE_ARGUMENT": "n", "CLAIM": "c"},
    )
    assert "quoting [CLAIM] here" in out


def test_render_is_pure():
    bindings = {"CLAIM": "x", "EVIDENCE_SET": "e"}
    first = render(TemplateId.DEBATER_META, bindings)
    second = render(TemplateId.DEBATER_META, bindings)
    assert first == second


@given(
    st.dictionaries(
        st.sampled_from(sorted(ALL_PLACEHOLDER_NAMES)),
        st.text(
            alphabet=st.characters(blacklist_characters="[]", blacklist_categories=("Cs",)),
            max_size=30,
        ),
    )
)
def test_render_succeeds_iff_bindings_cover_required(bindings):
    for template in TemplateId:
        required = required_placeholders(template)
        if required <= set(bindings):
            rendered = render(template, bindings)
            for name in required:
                assert f"[{name}]" not in rendered
        else:
            with pytest.raises(MissingBinding):
                render(template, bindings)


class TestEvidenceSet:
    def test_empty_sentinel(self):
        assert render_evidence_set([]) == "No evidence provided."

    def test_single_item(self):
        assert (
            render_evidence_set([EvidenceItem("q", "a", "u")])
            == "1. Q: q A: a (u)"
        )

    def test_two_items_in_order(self):
        out = render_evidence_set(
            [EvidenceItem("q1", "a1", "u1"), EvidenceItem("q2", "a2", "u2")]
        )
        lines = out.split("\n")
        assert lines == ["1. Q: q1 A: a1 (u1)", "2. Q: q2 A: a2 (u2)"]
