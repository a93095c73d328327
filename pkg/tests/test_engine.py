import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from claimdebate.engine import (
    BackendFailure,
    Continue,
    DebateConfig,
    Finalize,
    ForceFinal,
    MalformedDecision,
    UndecidableDebate,
    decide_continuation,
    first_json_object,
    parse_final_verdict,
    parse_moderator_decision,
    run_debate,
)
from claimdebate.gateway import ChatResponse, ProviderError, RetryPolicy
from claimdebate.model import Claim, ModeratorDecision, Role, Verdict

from conftest import (
    ProgrammableBackend,
    always_proceed_backend,
    final_decision_json,
    one_round_backend,
    round_decision_json,
)


class TestParseModeratorDecision:
    def test_direct_json(self):
        raw = round_decision_json(proceeding=False, verdict="Refuted")
        decision = parse_moderator_decision(raw)
        assert decision.proceeding is False
        assert decision.verdict is Verdict.REFUTED

    def test_fenced_json_identical(self):
        raw = round_decision_json(proceeding=False, verdict="Refuted")
        fenced = f"Here you go:\n```json\n{raw}\n```\nthanks"
        assert parse_moderator_decision(fenced) == parse_moderator_decision(raw)

    def test_no_proceeding_with_empty_verdict_is_malformed(self):
        raw = round_decision_json(proceeding=False, verdict="")
        with pytest.raises(MalformedDecision):
            parse_moderator_decision(raw)

    def test_missing_proceeding_necessity(self):
        with pytest.raises(MalformedDecision):
            parse_moderator_decision('{"Verdict": "Refuted"}')

    def test_no_json_at_all(self):
        with pytest.raises(MalformedDecision):
            parse_moderator_decision("I think we should continue the debate.")

    def test_proceeding_yes_case_insensitive(self):
        raw = json.dumps({"Primary Insight": "i", "Proceeding Necessity": "YES"})
        assert parse_moderator_decision(raw).proceeding is True

    def test_verdict_ignored_when_proceeding(self):
        raw = json.dumps(
            {"Proceeding Necessity": "Yes", "Verdict": "Supported", "Primary Insight": "i"}
        )
        decision = parse_moderator_decision(raw)
        assert decision.proceeding and decision.verdict is None

    def test_first_balanced_object_wins(self):
        first = round_decision_json(proceeding=False, verdict="Supported")
        second = round_decision_json(proceeding=False, verdict="Refuted")
        combined = f"{first}\nand then\n{second}"
        assert parse_moderator_decision(combined).verdict is Verdict.SUPPORTED

    def test_leading_garbage_braces(self):
        raw = "{oops not json} " + round_decision_json(proceeding=True)
        assert parse_moderator_decision(raw).proceeding is True

    @given(
        st.sampled_from(list(Verdict)),
        st.text(max_size=40),
        st.text(max_size=40),
        st.booleans(),
    )
    def test_round_trip_of_rendered_decision(self, verdict, insight, justification, proceeding):
        if proceeding:
            rendered = json.dumps(
                {
                    "Primary Insight": insight,
                    "Evidence Gaps": "",
                    "Justification for Proceeding": justification,
                    "Proceeding Necessity": "Yes",
                    "Justification for Verdict": "",
                    "Verdict": "",
                }
            )
            expected = ModeratorDecision(
                primary_insight=insight,
                evidence_gaps="",
                proceeding_justification=justification,
                proceeding=True,
            )
        else:
            rendered = json.dumps(
                {
                    "Primary Insight": insight,
                    "Evidence Gaps": "",
                    "Justification for Proceeding": "",
                    "Proceeding Necessity": "No",
                    "Justification for Verdict": justification,
                    "Verdict": verdict.display,
                }
            )
            expected = ModeratorDecision(
                primary_insight=insight,
                evidence_gaps="",
                proceeding_justification="",
                proceeding=False,
                verdict_justification=justification,
                verdict=verdict,
            )
        assert parse_moderator_decision(rendered) == expected


class TestParseFinal:
    def test_valid(self):
        verdict, justification = parse_final_verdict(final_decision_json("Supported", "j"))
        assert verdict is Verdict.SUPPORTED and justification == "j"

    def test_missing_verdict(self):
        with pytest.raises(MalformedDecision):
            parse_final_verdict('{"Justification for Verdict": "j"}')


def test_first_json_object_skips_nonobjects():
    assert first_json_object("[1, 2] {\"a\": 1}") == {"a": 1}
    assert first_json_object("nothing here") is None


class TestDecideContinuation:
    CONFIG = DebateConfig(max_rounds=3)

    def _final(self, verdict):
        return ModeratorDecision(
            primary_insight="",
            evidence_gaps="",
            proceeding_justification="",
            proceeding=False,
            verdict_justification="j",
            verdict=verdict,
        )

    def _proceed(self):
        return ModeratorDecision(
            primary_insight="",
            evidence_gaps="",
            proceeding_justification="more",
            proceeding=True,
        )

    def test_finalize_mid_debate(self):
        ruling = decide_continuation(self._final(Verdict.SUPPORTED), 2, self.CONFIG)
        assert ruling == Finalize(Verdict.SUPPORTED)

    def test_force_final_at_budget(self):
        assert decide_continuation(self._proceed(), 3, self.CONFIG) == ForceFinal()

    def test_continue_early(self):
        assert decide_continuation(self._proceed(), 1, self.CONFIG) == Continue()

    def test_round_must_be_positive(self):
        with pytest.raises(ValueError):
            decide_continuation(self._proceed(), 0, self.CONFIG)


class TestRunDebate:
    def test_round_one_finalize(self, claim):
        backend = one_round_backend("Refuted")
        outcome = run_debate(claim, DebateConfig(), backend)
        assert outcome.rounds_used == 1
        assert outcome.predicted_verdict is Verdict.REFUTED
        assert not outcome.forced_final
        assert [(t.role, t.round) for t in outcome.recording] == [
            (Role.AFFIRMATIVE, 1),
            (Role.NEGATIVE, 1),
            (Role.MODERATOR, 1),
        ]
        assert backend.calls == 3

    def test_forced_final_after_three_rounds(self, claim):
        backend = always_proceed_backend("Supported")
        outcome = run_debate(claim, DebateConfig(max_rounds=3), backend)
        assert outcome.forced_final
        assert outcome.rounds_used == 3
        moderator_turns = [t for t in outcome.recording if t.role is Role.MODERATOR]
        assert len(moderator_turns) == 4
        assert moderator_turns[-1].prompt_id == "moderator_final"
        assert backend.calls == 10  # 3 per round plus the forced final
        assert outcome.predicted_verdict is Verdict.SUPPORTED

    def test_no_evidence_sentinel_reaches_every_request(self):
        claim = Claim(id="n1", text="Claim without evidence.", gold_verdict=Verdict.REFUTED)
        backend = always_proceed_backend()
        run_debate(claim, DebateConfig(), backend)
        for request in backend.requests:
            combined = "\n".join(m.content for m in request.messages)
            assert "No evidence provided." in combined

    def test_empty_debater_reply_substituted(self, claim):
        def reply(route):
            if route.role == "Affirmative":
                return "   "
            if route.role == "Negative":
                return "counter"
            return round_decision_json(proceeding=False, verdict="Refuted")

        backend = ProgrammableBackend(reply)
        outcome = run_debate(claim, DebateConfig(), backend)
        assert outcome.recording[0].content == "(no argument presented)"
        # The negative rebuttal prompt carries the substituted text.
        negative_request = backend.requests[1]
        assert "(no argument presented)" in negative_request.messages[-1].content

    def test_malformed_round_decision_reprompted(self, claim):
        state = {"moderator_calls": 0}

        def reply(route):
            if route.role != "Moderator":
                return "arg"
            state["moderator_calls"] += 1
            if state["moderator_calls"] == 1:
                return "not json at all"
            return round_decision_json(proceeding=False, verdict="Supported")

        backend = ProgrammableBackend(reply)
        outcome = run_debate(claim, DebateConfig(moderator_parse_retries=2), backend)
        assert outcome.rounds_used == 1
        assert outcome.predicted_verdict is Verdict.SUPPORTED
        # Re-prompt is an extra physical call but one recorded turn.
        assert state["moderator_calls"] == 2
        assert sum(1 for t in outcome.recording if t.role is Role.MODERATOR) == 1
        reminder_request = backend.requests[-1]
        assert "Reminder:" in reminder_request.messages[-1].content

    def test_exhausted_round_parse_treated_as_proceed(self, claim):
        def reply(route):
            if route.role != "Moderator":
                return "arg"
            if route.template == "moderator_round" and route.round == 1:
                return "never json"
            if route.template == "moderator_round":
                return round_decision_json(proceeding=False, verdict="Refuted")
            return final_decision_json("Refuted")

        backend = ProgrammableBackend(reply)
        outcome = run_debate(claim, DebateConfig(moderator_parse_retries=1), backend)
        assert outcome.rounds_used == 2
        assert outcome.decisions[0] is None
        assert outcome.predicted_verdict is Verdict.REFUTED

    def test_undecidable_when_final_gate_never_parses(self, claim):
        def reply(route):
            if route.role != "Moderator":
                return "arg"
            if route.template == "moderator_round":
                return round_decision_json(proceeding=True)
            return "still not json"

        backend = ProgrammableBackend(reply)
        with pytest.raises(UndecidableDebate):
            run_debate(claim, DebateConfig(max_rounds=2, moderator_parse_retries=1), backend)

    def test_backend_failure_wrapped(self, claim):
        class Failing:
            def complete(self, request):
                raise ProviderError("bad auth")

        with pytest.raises(BackendFailure):
            run_debate(claim, DebateConfig(), Failing(), retry=RetryPolicy(max_attempts=1))

    def test_empty_claim_rejected(self):
        with pytest.raises(ValueError):
            run_debate(Claim(id="x", text="  "), DebateConfig(), one_round_backend())

    def test_deterministic_recordings_with_scripted_backend(self, claim):
        outcomes = [
            run_debate(claim, DebateConfig(), always_proceed_backend("Refuted"))
            for _ in range(2)
        ]
        first = json.dumps(outcomes[0].to_dict(), sort_keys=True)
        second = json.dumps(outcomes[1].to_dict(), sort_keys=True)
        assert first == second

    def test_interaction_prompts_carry_latest_opposition(self, claim):
        backend = always_proceed_backend()
        run_debate(claim, DebateConfig(max_rounds=2), backend)
        by_route = {
            (r.route.role, r.route.round, r.route.template): r
            for r in backend.requests
        }
        aff_round2 = by_route[("Affirmative", 2, "interaction")]
        # Affirmative round 2 sees Negative's round-1 argument.
        assert "Negative says r1" in aff_round2.messages[-1].content
        neg_round2 = by_route[("Negative", 2, "interaction")]
        # Negative round 2 sees Affirmative's round-2 argument.
        assert "Affirmative says r2" in neg_round2.messages[-1].content

    def test_moderator_history_accumulates(self, claim):
        backend = always_proceed_backend()
        run_debate(claim, DebateConfig(max_rounds=3), backend)
        moderator_requests = [r for r in backend.requests if r.route.role == "Moderator"]
        final_request = moderator_requests[-1]
        assert final_request.route.template == "moderator_final"
        # system + (user, assistant) per completed round + final user prompt
        assert len(final_request.messages) == 1 + 2 * 3 + 1

    def test_token_usage_accumulated_per_role(self, claim):
        backend = always_proceed_backend()
        outcome = run_debate(claim, DebateConfig(), backend)
        assert outcome.token_usage["Affirmative"].input_tokens == 3 * 7
        assert outcome.token_usage["Moderator"].output_tokens == 4 * 3
