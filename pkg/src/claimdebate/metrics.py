"""Evaluation metrics: accuracy, METEOR, evidence scoring, FPRs, cost model.

The METEOR variant here uses two alignment stages (exact surface match, then
Porter-stem match), harmonic mean Fmean = 10PR / (R + 9P) and fragmentation
penalty 0.5 * (chunks / matches)^3. No synonym stage; scores are therefore
comparable only within this tool. Within each stage, candidate tokens are
matched left-to-right to the leftmost unused reference token.

Dollar figures are computed in exact decimal arithmetic and rounded to four
places only for presentation.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import ClaimDebateError, EvidenceItem, Verdict
from .stemming import stem


class MetricsError(ClaimDebateError):
    pass


class EmptyInput(MetricsError):
    """Metric over an empty item list is undefined."""


class EmptyGold(MetricsError):
    """Evidence scoring requires a non-empty gold set."""


class UndefinedDenominator(MetricsError):
    """No item has a gold label different from the queried neutral label."""


class UnknownModelRate(MetricsError):
    """The pricing table has no rates for a model in the usage ledger."""


_TOKEN_RE = re.compile(r"\w+")

_CENT4 = Decimal("0.0001")
_TOKENS_PER_DOLLAR_UNIT = Decimal(1_000_000)


def tokenize(text: str) -> list[str]:
    """Case-folded word tokens (alphanumerics and underscores)."""
    return _TOKEN_RE.findall(text.casefold())


def align_unigrams(
    candidate: Sequence[str], reference: Sequence[str]
) -> list[tuple[int, int]]:
    """Two-stage unigram alignment; returns (candidate, reference) index pairs.

    Stage 1 matches identical surfaces, stage 2 matches Porter stems among the
    leftovers. Both stages walk the candidate left-to-right and take the
    leftmost unused reference token.
    """
    used_c = [False] * len(candidate)
    used_r = [False] * len(reference)
    pairs: list[tuple[int, int]] = []
    for i, token in enumerate(candidate):
        for j, ref_token in enumerate(reference):
            if not used_r[j] and ref_token == token:
                pairs.append((i, j))
                used_c[i] = used_r[j] = True
                break
    cand_stems = [stem(t) for t in candidate]
    ref_stems = [stem(t) for t in reference]
    for i in range(len(candidate)):
        if used_c[i]:
            continue
        for j in range(len(reference)):
            if not used_r[j] and ref_stems[j] == cand_stems[i]:
                pairs.append((i, j))
                used_c[i] = used_r[j] = True
                break
    return sorted(pairs)


def count_chunks(pairs: Sequence[tuple[int, int]]) -> int:
    """Maximal runs of pairs adjacent and in order on both sides."""
    if not pairs:
        return 0
    ordered = sorted(pairs)
    chunks = 1
    for (c_prev, r_prev), (c_cur, r_cur) in zip(ordered, ordered[1:]):
        if c_cur != c_prev + 1 or r_cur != r_prev + 1:
            chunks += 1
    return chunks


def meteor(candidate: str, reference: str) -> float:
    """Unigram-alignment similarity in [0, 1]; 0 when nothing matches."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return 0.0
    pairs = align_unigrams(cand, ref)
    matches = len(pairs)
    if matches == 0:
        return 0.0
    precision = matches / len(cand)
    recall = matches / len(ref)
    fmean = 10 * precision * recall / (recall + 9 * precision)
    penalty = 0.5 * (count_chunks(pairs) / matches) ** 3
    return fmean * (1 - penalty)


def _evidence_text(item: EvidenceItem) -> str:
    return f"{item.question} {item.answer}"


def evidence_score(
    predicted: Sequence[EvidenceItem], gold: Sequence[EvidenceItem]
) -> float:
    """Best one-to-one assignment of pairwise METEOR, divided by ``len(gold)``.

    Candidate side is the predicted evidence, reference side the gold
    evidence. The assignment covers min(len(predicted), len(gold)) pairs.

    Raises:
        EmptyGold: gold evidence set is empty.
    """
    if not gold:
        raise EmptyGold("gold evidence set must be non-empty")
    if not predicted:
        return 0.0
    scores = np.array(
        [
            [meteor(_evidence_text(p), _evidence_text(g)) for g in gold]
            for p in predicted
        ]
    )
    rows, cols = linear_sum_assignment(scores, maximize=True)
    return float(scores[rows, cols].sum() / len(gold))


@dataclass(frozen=True)
class EvalItem:
    """One evaluated claim: verdicts, evidence quality, rounds taken."""

    claim_id: str
    predicted: Verdict
    gold: Verdict
    evidence_score: float
    rounds_used: int

    def __post_init__(self) -> None:
        if not (0.0 <= self.evidence_score <= 1.0):
            raise ValueError("evidence_score must be in [0, 1]")

    @property
    def correct(self) -> bool:
        return self.predicted == self.gold


def accuracy(items: Sequence[EvalItem]) -> float:
    """Fraction of items whose predicted verdict equals gold."""
    if not items:
        raise EmptyInput("accuracy over zero items")
    return sum(1 for it in items if it.correct) / len(items)


def averitec_score(items: Sequence[EvalItem], threshold: float = 0.25) -> float:
    """Fraction of items that are correct AND have evidence_score >= threshold.

    The denominator is all items, which makes the score equal accuracy when
    every evidence score is 1.0 and zero when every evidence score is 0.0.
    """
    if not items:
        raise EmptyInput("score over zero items")
    qualifying = sum(
        1 for it in items if it.correct and it.evidence_score >= threshold
    )
    return qualifying / len(items)


_NEUTRAL_LABELS = (
    Verdict.NOT_ENOUGH_EVIDENCE,
    Verdict.CONFLICTING_EVIDENCE_CHERRY_PICKING,
)


def fpr_neutral(items: Sequence[EvalItem], label: Verdict) -> float:
    """FP / (FP + TN) for a neutral label over items whose gold differs.

    Raises:
        UndefinedDenominator: every item's gold equals ``label``.
    """
    if label not in _NEUTRAL_LABELS:
        raise ValueError(f"not a neutral verdict: {label}")
    eligible = [it for it in items if it.gold != label]
    if not eligible:
        raise UndefinedDenominator(f"no item with gold != {label.display}")
    false_positives = sum(1 for it in eligible if it.predicted == label)
    return false_positives / len(eligible)


def round_distribution(items: Iterable[EvalItem]) -> dict[int, tuple[int, int]]:
    """Per rounds_used value, (correct, incorrect) verdict counts."""
    histogram: dict[int, tuple[int, int]] = {}
    for it in items:
        correct, incorrect = histogram.get(it.rounds_used, (0, 0))
        if it.correct:
            correct += 1
        else:
            incorrect += 1
        histogram[it.rounds_used] = (correct, incorrect)
    return dict(sorted(histogram.items()))


@dataclass(frozen=True)
class ModelRate:
    """Dollars per 1,000,000 input/output tokens."""

    input_rate: Decimal
    output_rate: Decimal

    def __post_init__(self) -> None:
        if self.input_rate < 0 or self.output_rate < 0:
            raise ValueError("rates must be >= 0")


def _as_decimal(value) -> Decimal:
    return value if isinstance(value, Decimal) else Decimal(str(value))


@dataclass(frozen=True)
class PricingTable:
    """Per-model token rates; defaults cover the mini and large tiers."""

    rates: Mapping[str, ModelRate] = field(
        default_factory=lambda: {
            "gpt-4o-mini": ModelRate(Decimal("0.15"), Decimal("0.60")),
            "gpt-4o": ModelRate(Decimal("2.50"), Decimal("10.00")),
        }
    )

    def rate_for(self, model_id: str) -> ModelRate:
        try:
            return self.rates[model_id]
        except KeyError:
            raise UnknownModelRate(f"no pricing for model {model_id!r}") from None

    @classmethod
    def from_file(cls, path: str | Path) -> "PricingTable":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        rates = {
            model: ModelRate(_as_decimal(spec["input"]), _as_decimal(spec["output"]))
            for model, spec in raw.items()
        }
        return cls(rates=rates)


@dataclass(frozen=True)
class UsageEntry:
    """Token usage attributed to one role running one model."""

    role: str
    model_id: str
    input_tokens: Decimal
    output_tokens: Decimal
    estimated: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_tokens", _as_decimal(self.input_tokens))
        object.__setattr__(self, "output_tokens", _as_decimal(self.output_tokens))
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be >= 0")


@dataclass(frozen=True)
class RoleCost:
    role: str
    model_id: str
    input_tokens: Decimal
    output_tokens: Decimal
    input_cost: Decimal
    output_cost: Decimal
    estimated: bool

    @property
    def total_cost(self) -> Decimal:
        return self.input_cost + self.output_cost


def round_dollars(amount: Decimal) -> Decimal:
    """Presentation rounding: four decimal places, half up."""
    return amount.quantize(_CENT4, rounding=ROUND_HALF_UP)


@dataclass(frozen=True)
class CostReport:
    """Exact per-role dollar costs plus grand totals."""

    roles: tuple[RoleCost, ...]
    estimated: bool

    @property
    def input_cost(self) -> Decimal:
        return sum((r.input_cost for r in self.roles), Decimal(0))

    @property
    def output_cost(self) -> Decimal:
        return sum((r.output_cost for r in self.roles), Decimal(0))

    @property
    def total_cost(self) -> Decimal:
        return self.input_cost + self.output_cost

    def to_dict(self) -> dict:
        return {
            "roles": [
                {
                    "role": r.role,
                    "model": r.model_id,
                    "input_tokens": float(r.input_tokens),
                    "output_tokens": float(r.output_tokens),
                    "input_cost": str(round_dollars(r.input_cost)),
                    "output_cost": str(round_dollars(r.output_cost)),
                    "total_cost": str(round_dollars(r.total_cost)),
                    "estimated": r.estimated,
                }
                for r in self.roles
            ],
            "total": {
                "input_cost": str(round_dollars(self.input_cost)),
                "output_cost": str(round_dollars(self.output_cost)),
                "total_cost": str(round_dollars(self.total_cost)),
            },
            "estimated": self.estimated,
        }


def cost_report(usage: Sequence[UsageEntry], pricing: PricingTable) -> CostReport:
    """Dollar cost per role and direction: tokens * rate / 1,000,000, exact.

    Raises:
        UnknownModelRate: a usage entry's model has no pricing.
    """
    roles = []
    for entry in usage:
        rate = pricing.rate_for(entry.model_id)
        roles.append(
            RoleCost(
                role=entry.role,
                model_id=entry.model_id,
                input_tokens=entry.input_tokens,
                output_tokens=entry.output_tokens,
                input_cost=entry.input_tokens * rate.input_rate / _TOKENS_PER_DOLLAR_UNIT,
                output_cost=entry.output_tokens * rate.output_rate / _TOKENS_PER_DOLLAR_UNIT,
                estimated=entry.estimated,
            )
        )
    return CostReport(
        roles=tuple(roles), estimated=any(r.estimated for r in roles)
    )


@dataclass(frozen=True)
class EvalReport:
    """Aggregate metrics for one evaluated run."""

    item_count: int
    accuracy: float
    averitec_score: float
    fpr_nee: Optional[float]
    fpr_cec: Optional[float]
    round_histogram: Mapping[int, tuple[int, int]]
    cost: Optional[CostReport] = None

    def to_dict(self) -> dict:
        return {
            "items": self.item_count,
            "accuracy": self.accuracy,
            "averitec_score": self.averitec_score,
            "fpr_nee": self.fpr_nee,
            "fpr_cec": self.fpr_cec,
            "round_histogram": {
                str(rnd): {"correct": c, "incorrect": w}
                for rnd, (c, w) in self.round_histogram.items()
            },
            "cost": self.cost.to_dict() if self.cost else None,
        }

    def to_text(self) -> str:
        lines = [
            f"{'items':<22}{self.item_count}",
            f"{'accuracy':<22}{self.accuracy:.4f}",
            f"{'averitec_score':<22}{self.averitec_score:.4f}",
            f"{'fpr_nee':<22}"
            + (f"{self.fpr_nee:.4f}" if self.fpr_nee is not None else "n/a"),
            f"{'fpr_cec':<22}"
            + (f"{self.fpr_cec:.4f}" if self.fpr_cec is not None else "n/a"),
            "",
            f"{'round':<8}{'correct':>8}{'incorrect':>10}",
        ]
        for rnd, (correct, incorrect) in self.round_histogram.items():
            lines.append(f"{rnd:<8}{correct:>8}{incorrect:>10}")
        if self.cost is not None:
            lines.append("")
            lines.append(
                f"{'role':<14}{'model':<14}{'in_tok':>10}{'out_tok':>10}"
                f"{'in_$':>9}{'out_$':>9}{'total_$':>9}"
            )
            for r in self.cost.roles:
                lines.append(
                    f"{r.role:<14}{r.model_id:<14}"
                    f"{float(r.input_tokens):>10.2f}{float(r.output_tokens):>10.2f}"
                    f"{round_dollars(r.input_cost):>9}{round_dollars(r.output_cost):>9}"
                    f"{round_dollars(r.total_cost):>9}"
                )
            lines.append(
                f"{'total':<14}{'':<14}{'':>10}{'':>10}"
                f"{round_dollars(self.cost.input_cost):>9}"
                f"{round_dollars(self.cost.output_cost):>9}"
                f"{round_dollars(self.cost.total_cost):>9}"
            )
            if self.cost.estimated:
                lines.append("note: some token counts are local estimates")
        return "\n".join(lines) + "\n"


def build_report(
    items: Sequence[EvalItem], cost: Optional[CostReport] = None
) -> EvalReport:
    """Compute all metrics over ``items``; FPRs are None when undefined."""
    if not items:
        raise EmptyInput("report over zero items")

    def safe_fpr(label: Verdict) -> Optional[float]:
        try:
            return fpr_neutral(items, label)
        except UndefinedDenominator:
            return None

    return EvalReport(
        item_count=len(items),
        accuracy=accuracy(items),
        averitec_score=averitec_score(items),
        fpr_nee=safe_fpr(Verdict.NOT_ENOUGH_EVIDENCE),
        fpr_cec=safe_fpr(Verdict.CONFLICTING_EVIDENCE_CHERRY_PICKING),
        round_histogram=round_distribution(items),
        cost=cost,
    )
