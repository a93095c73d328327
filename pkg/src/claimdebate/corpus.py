"""Corpus loading under the three evidence conditions, plus the run store.

The corpus format follows the public claim-verification JSON layout: a list of
records with ``claim``, ``label`` and ``questions`` (each question carrying
``answers`` with ``answer`` and ``source_url``). Unknown fields are ignored.
Retrieved evidence comes from a JSONL side file joined by claim id.

The run store keeps one JSON file per claim under
``<root>/<run_id>/outcomes/`` (or ``samples/`` for synthesis runs) plus an
``index.json``, so runs are resumable and crash-safe per claim.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import threading
from pathlib import Path
from typing import Any, Optional
from urllib.parse import quote, unquote

from .model import (
    Claim,
    ClaimDebateError,
    DebateOutcome,
    EvidenceItem,
    SynDecSample,
    UnknownVerdict,
    normalize_verdict,
)

logger = logging.getLogger(__name__)


class CorpusError(ClaimDebateError):
    pass


class CorpusParseError(CorpusError):
    """The corpus file is not a well-formed claim list."""


class LabelParseError(CorpusError):
    """A record's label is not one of the four verdict categories."""


class MissingRetrievalFile(CorpusError):
    """Retrieved condition requested without a usable retrieval file."""


class StoreIoError(CorpusError):
    """The run store could not read or write a record."""


class EvidenceCondition(enum.Enum):
    GOLDEN = "golden"
    RETRIEVED = "retrieved"
    NO_EVIDENCE = "no-evidence"


def _record_evidence(record: dict) -> list[EvidenceItem]:
    items: list[EvidenceItem] = []
    for question in record.get("questions", []):
        question_text = str(question.get("question", ""))
        for answer in question.get("answers", []):
            items.append(
                EvidenceItem(
                    question=question_text,
                    answer=str(answer.get("answer", "")),
                    source_url=str(answer.get("source_url", "")),
                )
            )
    return items


def _load_retrieved(path: str | Path) -> dict[str, list[EvidenceItem]]:
    by_claim: dict[str, list[EvidenceItem]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MissingRetrievalFile(
                    f"retrieval file line {line_no} is not JSON: {exc}"
                ) from exc
            claim_id = str(record.get("claim_id"))
            items = [
                EvidenceItem(
                    question=str(e.get("question", "")),
                    answer=str(e.get("answer", "")),
                    source_url=str(e.get("url", e.get("source_url", ""))),
                )
                for e in record.get("evidence", [])
            ]
            by_claim[claim_id] = items
    return by_claim


def load_corpus(
    path: str | Path,
    condition: EvidenceCondition,
    retrieved_path: Optional[str | Path] = None,
) -> list[Claim]:
    """Parse a corpus file into Claims under the given evidence condition.

    Claim ids come from the record's ``id``/``claim_id`` field when present,
    else from ordinal position. Gold verdicts and ids are identical across
    conditions; only the evidence varies.

    Raises:
        CorpusParseError, LabelParseError, MissingRetrievalFile.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise CorpusParseError(f"cannot read corpus: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CorpusParseError(f"corpus is not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise CorpusParseError("corpus must be a JSON array of claim records")

    retrieved: dict[str, list[EvidenceItem]] = {}
    if condition is EvidenceCondition.RETRIEVED:
        if retrieved_path is None or not Path(retrieved_path).exists():
            raise MissingRetrievalFile(
                "retrieved condition requires an existing retrieval file"
            )
        retrieved = _load_retrieved(retrieved_path)

    claims: list[Claim] = []
    seen_ids: set[str] = set()
    for position, record in enumerate(raw):
        if not isinstance(record, dict) or "claim" not in record:
            raise CorpusParseError(f"record {position} has no claim text")
        claim_id = str(record.get("id", record.get("claim_id", position)))
        if claim_id in seen_ids:
            raise CorpusParseError(f"duplicate claim id {claim_id!r}")
        seen_ids.add(claim_id)
        label = record.get("label")
        gold = None
        if label:
            try:
                gold = normalize_verdict(str(label))
            except UnknownVerdict as exc:
                raise LabelParseError(
                    f"record {position} ({claim_id!r}): {exc}"
                ) from exc
        if condition is EvidenceCondition.GOLDEN:
            evidence = _record_evidence(record)
        elif condition is EvidenceCondition.RETRIEVED:
            evidence = retrieved.get(claim_id, [])
            if claim_id not in retrieved:
                logger.warning("no retrieved evidence for claim %s", claim_id)
        else:
            evidence = []
        claims.append(
            Claim(
                id=claim_id,
                text=str(record["claim"]),
                gold_verdict=gold,
                evidence=tuple(evidence),
            )
        )
    return claims


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _dump(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


class RunStore:
    """Per-run persistence of outcomes and synthesis samples, one file per id."""

    def __init__(self, root: str | Path, run_id: str):
        self.run_id = run_id
        self.run_dir = Path(root) / run_id
        self._outcomes_dir = self.run_dir / "outcomes"
        self._samples_dir = self.run_dir / "samples"
        self._index_path = self.run_dir / "index.json"
        self._lock = threading.Lock()
        try:
            self._outcomes_dir.mkdir(parents=True, exist_ok=True)
            self._samples_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StoreIoError(f"cannot create run store: {exc}") from exc
        self._index = self._load_index()

    def _load_index(self) -> dict[str, list[str]]:
        index = {"outcomes": [], "samples": []}
        if self._index_path.exists():
            try:
                index.update(json.loads(self._index_path.read_text(encoding="utf-8")))
            except (OSError, json.JSONDecodeError):
                logger.warning("index.json unreadable; rebuilding from files")
        # Files on disk are the source of truth; the index is a cache.
        for kind, directory in (
            ("outcomes", self._outcomes_dir),
            ("samples", self._samples_dir),
        ):
            on_disk = sorted(
                unquote(p.stem) for p in directory.glob("*.json")
            )
            index[kind] = on_disk
        return index

    def _file_for(self, kind: str, claim_id: str) -> Path:
        directory = self._outcomes_dir if kind == "outcomes" else self._samples_dir
        return directory / f"{quote(claim_id, safe='')}.json"

    def _persist(self, kind: str, claim_id: str, payload: dict) -> None:
        with self._lock:
            try:
                _atomic_write(self._file_for(kind, claim_id), _dump(payload))
            except OSError as exc:
                raise StoreIoError(f"cannot persist {claim_id!r}: {exc}") from exc
            if claim_id not in self._index[kind]:
                self._index[kind] = sorted(self._index[kind] + [claim_id])
            self.flush_index()

    def flush_index(self) -> None:
        try:
            _atomic_write(self._index_path, _dump(self._index))
        except OSError as exc:
            raise StoreIoError(f"cannot write index: {exc}") from exc

    def _load_all(self, kind: str, decode) -> tuple[list, list[str]]:
        directory = self._outcomes_dir if kind == "outcomes" else self._samples_dir
        loaded, corrupt = [], []
        for path in sorted(directory.glob("*.json")):
            claim_id = unquote(path.stem)
            try:
                loaded.append(decode(json.loads(path.read_text(encoding="utf-8"))))
            except Exception:
                logger.warning("skipping corrupt record %s", path)
                corrupt.append(claim_id)
        return loaded, corrupt

    # outcomes

    def persist_outcome(self, outcome: DebateOutcome) -> None:
        self._persist("outcomes", outcome.claim_id, outcome.to_dict())

    def load_outcomes(self) -> tuple[list[DebateOutcome], list[str]]:
        """All decodable outcomes plus the ids of corrupt files."""
        return self._load_all("outcomes", DebateOutcome.from_dict)

    def outcome_ids(self) -> set[str]:
        return set(self._index["outcomes"])

    def has_outcome(self, claim_id: str) -> bool:
        return claim_id in self._index["outcomes"]

    # synthesis samples

    def persist_sample(self, sample: SynDecSample) -> None:
        self._persist("samples", sample.claim.id, sample.to_dict())

    def load_samples(self) -> tuple[list[SynDecSample], list[str]]:
        return self._load_all("samples", SynDecSample.from_dict)

    def sample_ids(self) -> set[str]:
        return set(self._index["samples"])
