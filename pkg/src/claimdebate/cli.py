"""Command-line entry point: verify, synthesize, export, evaluate.

Progress goes to stderr; machine-readable results go to files under the run
directory. Exit codes: 0 success, 1 runtime failure, 2 usage error. Ctrl-C
flushes the run index before exiting with code 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import uuid
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

from .corpus import (
    CorpusError,
    EvidenceCondition,
    RunStore,
    load_corpus,
)
from .engine import DebateConfig, run_debate
from .gateway import (
    BackendHandle,
    GenerationParams,
    HttpBackend,
    RateBudget,
    RetryPolicy,
    ScriptedBackend,
    UsageLedger,
)
from .metrics import (
    CostReport,
    EvalItem,
    PricingTable,
    UsageEntry,
    build_report,
    evidence_score,
)
from .model import Claim, ClaimDebateError, Role
from .syndec import (
    SplitSpec,
    SynthesisFailure,
    partition,
    synthesize,
    write_dpo,
    write_failures,
    write_sft,
    write_syndec,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class UsageError(ClaimDebateError):
    """Bad invocation; maps to exit code 2."""


class MissingOutcomes(ClaimDebateError):
    """Evaluation requested for a run with no persisted outcomes."""


@dataclass
class RunManifest:
    """Provenance record written before any model call."""

    command: str
    run_id: str
    corpus: str
    condition: str
    backend: str
    debater_model: str
    moderator_model: str
    max_rounds: int
    moderator_parse_retries: int
    max_new_tokens: int
    temperature: float
    top_p: float
    workers: int
    created_at: str

    def write(self, run_dir: Path) -> None:
        path = run_dir / "manifest.json"
        path.write_text(
            json.dumps(asdict(self), ensure_ascii=False, indent=2, sort_keys=True)
            + "\n",
            encoding="utf-8",
        )

    @classmethod
    def read(cls, run_dir: Path) -> "RunManifest":
        path = run_dir / "manifest.json"
        if not path.exists():
            raise MissingOutcomes(f"no manifest at {path}")
        return cls(**json.loads(path.read_text(encoding="utf-8")))


def _progress(message: str) -> None:
    print(message, file=sys.stderr, flush=True)


def _new_run_id() -> str:
    return time.strftime("run-%Y%m%d-%H%M%S-") + uuid.uuid4().hex[:6]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="claimdebate",
        description="Debate-driven claim verification and training-data synthesis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, needs_corpus: bool = True) -> None:
        if needs_corpus:
            p.add_argument("--corpus", required=True, help="corpus JSON file")
            p.add_argument(
                "--condition",
                choices=[c.value for c in EvidenceCondition],
                default=EvidenceCondition.GOLDEN.value,
            )
            p.add_argument("--retrieved-file", help="retrieval JSONL (retrieved condition)")
        p.add_argument("--run-id", help="run identifier (generated when omitted)")
        p.add_argument("--runs-root", default="runs", help="directory holding runs")

    def add_model_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--backend", choices=["http", "scripted"], default="http")
        p.add_argument("--fixtures", help="fixture JSONL for the scripted backend")
        p.add_argument("--debater-model", default="gpt-4o-mini")
        p.add_argument("--moderator-model", default="gpt-4o")
        p.add_argument("--max-rounds", type=int, default=3)
        p.add_argument("--parse-retries", type=int, default=2)
        p.add_argument("--max-new-tokens", type=int, default=512)
        p.add_argument("--temperature", type=float, default=0.7)
        p.add_argument("--top-p", type=float, default=1.0)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--rpm", type=float, help="requests-per-minute budget")

    p_verify = sub.add_parser("verify", help="run debates over a corpus")
    add_common(p_verify)
    add_model_flags(p_verify)

    p_synth = sub.add_parser(
        "synthesize", help="synthesize training samples (golden condition only)"
    )
    add_common(p_synth)
    add_model_flags(p_synth)

    p_export = sub.add_parser(
        "export", help="export sft.jsonl / dpo.jsonl from a synthesized run"
    )
    add_common(p_export, needs_corpus=False)

    p_eval = sub.add_parser("evaluate", help="score a finished run")
    add_common(p_eval)
    p_eval.add_argument("--pricing", help="pricing table JSON")
    return parser


def _make_backend(args: argparse.Namespace) -> BackendHandle:
    budget = RateBudget(args.rpm) if args.rpm else None
    if args.backend == "scripted":
        if not args.fixtures:
            raise UsageError("--backend scripted requires --fixtures")
        return ScriptedBackend.from_file(args.fixtures, budget=budget)
    return HttpBackend.from_env(budget=budget)


def _make_config(args: argparse.Namespace) -> DebateConfig:
    return DebateConfig(
        max_rounds=args.max_rounds,
        moderator_parse_retries=args.parse_retries,
        debater_model=args.debater_model,
        moderator_model=args.moderator_model,
        params=GenerationParams(
            max_new_tokens=args.max_new_tokens,
            temperature=args.temperature,
            top_p=args.top_p,
        ),
    )


def _load_claims(args: argparse.Namespace) -> tuple[list[Claim], EvidenceCondition]:
    condition = EvidenceCondition(args.condition)
    if not Path(args.corpus).exists():
        raise UsageError(f"corpus not found: {args.corpus}")
    if condition is EvidenceCondition.RETRIEVED and not args.retrieved_file:
        raise UsageError("--condition retrieved requires --retrieved-file")
    claims = load_corpus(args.corpus, condition, args.retrieved_file)
    return claims, condition


def _manifest_for(
    args: argparse.Namespace, run_id: str, condition: EvidenceCondition
) -> RunManifest:
    return RunManifest(
        command=args.command,
        run_id=run_id,
        corpus=str(args.corpus),
        condition=condition.value,
        backend=args.backend,
        debater_model=args.debater_model,
        moderator_model=args.moderator_model,
        max_rounds=args.max_rounds,
        moderator_parse_retries=args.parse_retries,
        max_new_tokens=args.max_new_tokens,
        temperature=args.temperature,
        top_p=args.top_p,
        workers=args.workers,
        created_at=time.strftime("%Y-%m-%dT%H:%M:%S"),
    )


def cmd_verify(args: argparse.Namespace) -> int:
    claims, condition = _load_claims(args)
    config = _make_config(args)
    backend = _make_backend(args)
    run_id = args.run_id or _new_run_id()
    store = RunStore(args.runs_root, run_id)
    _manifest_for(args, run_id, condition).write(store.run_dir)

    pending = [c for c in claims if not store.has_outcome(c.id)]
    _progress(
        f"run {run_id}: {len(claims)} claims, {len(claims) - len(pending)} "
        f"already persisted, {len(pending)} to go"
    )
    ledger = UsageLedger()
    failures: list[SynthesisFailure] = []
    done = 0

    def work(claim: Claim):
        return run_debate(claim, config, backend, ledger=ledger)

    # Outcomes are persisted only here in the main thread (single writer).
    pool = ThreadPoolExecutor(max_workers=max(1, args.workers))
    try:
        futures = {pool.submit(work, c): c for c in pending}
        outstanding = set(futures)
        while outstanding:
            finished, outstanding = wait(outstanding, return_when=FIRST_COMPLETED)
            for future in finished:
                claim = futures[future]
                try:
                    store.persist_outcome(future.result())
                    done += 1
                    _progress(f"[{done}/{len(pending)}] claim {claim.id} done")
                except ClaimDebateError as exc:
                    failures.append(SynthesisFailure(claim.id, "verify", str(exc)))
                    _progress(f"claim {claim.id} FAILED: {exc}")
    except KeyboardInterrupt:
        pool.shutdown(wait=False, cancel_futures=True)
        store.flush_index()
        _progress(f"interrupted; run {run_id} index flushed")
        return EXIT_RUNTIME
    pool.shutdown(wait=True)
    if failures:
        write_failures(failures, store.run_dir / "failures.jsonl")
    in_tok, out_tok = ledger.grand_total()
    _progress(
        f"run {run_id} complete: {len(store.outcome_ids())} outcomes, "
        f"{len(failures)} failures, {in_tok} in / {out_tok} out tokens"
    )
    return EXIT_OK


def cmd_synthesize(args: argparse.Namespace) -> int:
    claims, condition = _load_claims(args)
    if condition is not EvidenceCondition.GOLDEN:
        raise UsageError(
            "synthesis uses human-annotated evidence; rerun with --condition golden"
        )
    unlabeled = [c.id for c in claims if c.gold_verdict is None]
    if unlabeled:
        raise UsageError(f"claims without gold verdicts: {unlabeled[:5]}")
    config = _make_config(args)
    backend = _make_backend(args)
    run_id = args.run_id or _new_run_id()
    store = RunStore(args.runs_root, run_id)
    _manifest_for(args, run_id, condition).write(store.run_dir)
    ledger = UsageLedger()
    try:
        samples, failures = synthesize(
            claims,
            config,
            backend,
            store=store,
            ledger=ledger,
            progress=lambda cid: _progress(f"claim {cid} synthesized"),
        )
    except KeyboardInterrupt:
        store.flush_index()
        _progress(f"interrupted; run {run_id} index flushed")
        return EXIT_RUNTIME
    write_syndec(samples, store.run_dir / "syndec.jsonl")
    if failures:
        write_failures(failures, store.run_dir / "failures.jsonl")
    correct, error = partition(samples)
    split = SplitSpec(sft_count=len(correct), dpo_count=len(error))
    _progress(
        f"run {run_id}: {split.total} samples "
        f"({split.sft_count} correct / {split.dpo_count} error), "
        f"{len(failures)} failures"
    )
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    if not args.run_id:
        raise UsageError("export requires --run-id")
    store = RunStore(args.runs_root, args.run_id)
    manifest = RunManifest.read(store.run_dir)
    if manifest.condition != EvidenceCondition.GOLDEN.value:
        raise UsageError(
            f"run {args.run_id} was produced under the {manifest.condition!r} "
            "condition; exports require a golden-condition synthesis run"
        )
    samples, corrupt = store.load_samples()
    for claim_id in corrupt:
        _progress(f"warning: corrupt sample {claim_id} skipped")
    if not samples:
        _progress(f"warning: run {args.run_id} has no samples; writing empty files")
    correct, error = partition(samples)
    sft_path = store.run_dir / "sft.jsonl"
    dpo_path = store.run_dir / "dpo.jsonl"
    sft_count = write_sft(correct, sft_path)
    dpo_count, skipped = write_dpo(error, dpo_path)
    _progress(
        f"wrote {sft_count} records to {sft_path} and {dpo_count} pairs to "
        f"{dpo_path} ({skipped} error samples lacked corrections)"
    )
    return EXIT_OK


def _evidence_scores_for(
    args: argparse.Namespace, condition: EvidenceCondition, claims: list[Claim]
) -> dict[str, float]:
    if condition is EvidenceCondition.GOLDEN:
        return {c.id: 1.0 for c in claims}
    if condition is EvidenceCondition.NO_EVIDENCE:
        return {c.id: 0.0 for c in claims}
    golden = load_corpus(args.corpus, EvidenceCondition.GOLDEN)
    gold_by_id = {c.id: c.evidence for c in golden}
    scores = {}
    for claim in claims:
        gold_items = gold_by_id.get(claim.id, ())
        scores[claim.id] = (
            evidence_score(claim.evidence, gold_items) if gold_items else 0.0
        )
    return scores


def cmd_evaluate(args: argparse.Namespace) -> int:
    if not args.run_id:
        raise UsageError("evaluate requires --run-id")
    store = RunStore(args.runs_root, args.run_id)
    manifest = RunManifest.read(store.run_dir)
    outcomes, corrupt = store.load_outcomes()
    for claim_id in corrupt:
        _progress(f"warning: corrupt outcome {claim_id} skipped")
    if not outcomes:
        raise MissingOutcomes(f"run {args.run_id} has no persisted outcomes")
    claims, condition = _load_claims(args)
    by_id = {c.id: c for c in claims}
    ev_scores = _evidence_scores_for(args, condition, claims)

    items = []
    for outcome in outcomes:
        claim = by_id.get(outcome.claim_id)
        if claim is None or claim.gold_verdict is None:
            _progress(f"warning: outcome {outcome.claim_id} has no labeled claim")
            continue
        items.append(
            EvalItem(
                claim_id=outcome.claim_id,
                predicted=outcome.predicted_verdict,
                gold=claim.gold_verdict,
                evidence_score=ev_scores[outcome.claim_id],
                rounds_used=outcome.rounds_used,
            )
        )
    if not items:
        raise MissingOutcomes("no outcome matched a labeled claim")

    pricing = PricingTable.from_file(args.pricing) if args.pricing else PricingTable()
    cost = _cost_from_outcomes(outcomes, manifest, pricing)
    report = build_report(items, cost=cost)
    report_json = store.run_dir / "report.json"
    report_text = store.run_dir / "report.txt"
    payload = {"run_id": args.run_id, "manifest": asdict(manifest)}
    payload.update(report.to_dict())
    report_json.write_text(
        json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    report_text.write_text(report.to_text(), encoding="utf-8")
    _progress(f"report written to {report_json} and {report_text}")
    return EXIT_OK


def _cost_from_outcomes(
    outcomes, manifest: RunManifest, pricing: PricingTable
) -> CostReport:
    role_models = {
        Role.AFFIRMATIVE.value: manifest.debater_model,
        Role.NEGATIVE.value: manifest.debater_model,
        Role.MODERATOR.value: manifest.moderator_model,
        Role.CORRECTOR.value: manifest.moderator_model,
    }
    totals: dict[str, dict[str, int | bool]] = {}
    for outcome in outcomes:
        for role, usage in outcome.token_usage.items():
            bucket = totals.setdefault(
                role, {"input": 0, "output": 0, "estimated": False}
            )
            bucket["input"] += usage.input_tokens
            bucket["output"] += usage.output_tokens
            bucket["estimated"] = bucket["estimated"] or usage.estimated
    entries = [
        UsageEntry(
            role=role,
            model_id=role_models.get(role, manifest.moderator_model),
            input_tokens=counts["input"],
            output_tokens=counts["output"],
            estimated=bool(counts["estimated"]),
        )
        for role, counts in sorted(totals.items())
    ]
    from .metrics import cost_report as _cost_report

    return _cost_report(entries, pricing)


_COMMANDS = {
    "verify": cmd_verify,
    "synthesize": cmd_synthesize,
    "export": cmd_export,
    "evaluate": cmd_evaluate,
}

# Keys a --config file may set; identical to the corresponding flags, which
# win on conflict because they come later on the expanded command line.
_CONFIG_KEYS = {
    "corpus", "condition", "retrieved_file", "run_id", "runs_root", "backend",
    "fixtures", "debater_model", "moderator_model", "max_rounds",
    "parse_retries", "max_new_tokens", "temperature", "top_p", "workers",
    "rpm", "pricing",
}


def _expand_config(argv: list[str]) -> list[str]:
    if "--config" not in argv:
        return argv
    argv = list(argv)
    at = argv.index("--config")
    if at + 1 >= len(argv):
        raise UsageError("--config requires a path")
    path = argv[at + 1]
    del argv[at : at + 2]
    if not argv:
        raise UsageError("--config requires a command")
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    flags: list[str] = []
    for key, value in data.items():
        if key not in _CONFIG_KEYS:
            raise UsageError(f"unknown config key {key!r}")
        if value is not None:
            flags += [f"--{key.replace('_', '-')}", str(value)]
    return [argv[0], *flags, *argv[1:]]


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = _build_parser()
    try:
        args = parser.parse_args(_expand_config(list(argv if argv is not None else sys.argv[1:])))
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_RUNTIME
    except (ClaimDebateError, CorpusError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
