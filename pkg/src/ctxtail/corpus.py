"""Dialogue corpora: loading, validation, cleaning, and per-product statistics.

The on-disk format is line-delimited JSON, one dialogue per line:

    {"dialogue_id": ..., "customer_id": ..., "timestamp": "2021-07-15",
     "utterances": [{"speaker": "customer", "text": "..."}, ...],
     "offers": [{"product_id": "...", "outcome": 1}, ...]}

``timestamp`` is optional.  Malformed records are routed to a rejects
sidecar file instead of being dropped silently.
"""

from __future__ import annotations

import json
import logging
import unicodedata
from dataclasses import dataclass, replace
from datetime import date
from pathlib import Path

log = logging.getLogger(__name__)

SPEAKERS = ("customer", "manager")

MAX_OFFERS_SOFT = 3


class CorpusError(ValueError):
    """Raised for unrecoverable corpus-level problems (bad file, duplicate ids)."""


@dataclass(frozen=True)
class Utterance:
    speaker: str
    text: str
    index: int


@dataclass(frozen=True)
class OfferRecord:
    product_id: str
    outcome: int


@dataclass(frozen=True)
class Dialogue:
    dialogue_id: str
    customer_id: str
    utterances: tuple[Utterance, ...]
    offers: tuple[OfferRecord, ...]
    timestamp: date | None = None

    def customer_lines(self) -> list[Utterance]:
        return [u for u in self.utterances if u.speaker == "customer"]


@dataclass(frozen=True)
class Corpus:
    dialogues: tuple[Dialogue, ...]
    product_catalog: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.dialogues)


@dataclass
class CleaningReport:
    input_size: int = 0
    output_size: int = 0
    dropped_too_short: int = 0
    dropped_contradictory: int = 0
    merged_repeat_calls: int = 0
    dropped_conflicting_repeats: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "input_size": self.input_size,
            "output_size": self.output_size,
            "dropped_too_short": self.dropped_too_short,
            "dropped_contradictory": self.dropped_contradictory,
            "merged_repeat_calls": self.merged_repeat_calls,
            "dropped_conflicting_repeats": self.dropped_conflicting_repeats,
        }


def _normalize_text(text: str) -> str:
    return unicodedata.normalize("NFC", text).strip()


def _parse_record(raw: dict) -> Dialogue:
    if not isinstance(raw, dict):
        raise ValueError("record is not an object")
    for key in ("dialogue_id", "customer_id", "utterances", "offers"):
        if key not in raw:
            raise ValueError(f"missing field: {key}")
    dialogue_id = str(raw["dialogue_id"])
    customer_id = str(raw["customer_id"])
    if not dialogue_id or not customer_id:
        raise ValueError("empty dialogue_id or customer_id")

    utterances = []
    for i, u in enumerate(raw["utterances"]):
        speaker = u.get("speaker")
        if speaker not in SPEAKERS:
            raise ValueError(f"utterance {i}: unknown speaker {speaker!r}")
        text = _normalize_text(str(u.get("text", "")))
        if not text:
            raise ValueError(f"utterance {i}: empty text")
        utterances.append(Utterance(speaker=speaker, text=text, index=len(utterances)))

    offers = []
    for o in raw["offers"]:
        pid = str(o.get("product_id", ""))
        if not pid:
            raise ValueError("offer with empty product_id")
        outcome = o.get("outcome")
        if outcome not in (0, 1):
            raise ValueError(f"offer {pid}: outcome must be 0 or 1, got {outcome!r}")
        offers.append(OfferRecord(product_id=pid, outcome=int(outcome)))
    if len(offers) > MAX_OFFERS_SOFT:
        log.warning("dialogue %s carries %d offers (> %d)", dialogue_id, len(offers), MAX_OFFERS_SOFT)

    ts = None
    if raw.get("timestamp"):
        ts = date.fromisoformat(str(raw["timestamp"]))

    return Dialogue(
        dialogue_id=dialogue_id,
        customer_id=customer_id,
        utterances=tuple(utterances),
        offers=tuple(offers),
        timestamp=ts,
    )


def load_corpus(path: str | Path, fmt: str = "jsonl", rejects_path: str | Path | None = None) -> Corpus:
    """Load and validate a corpus file; malformed records go to a rejects sidecar.

    Raises CorpusError for an unreadable file, an unknown format tag, duplicate
    dialogue ids, or when no valid dialogue remains.
    """
    if fmt != "jsonl":
        raise CorpusError(f"unknown corpus format: {fmt!r}")
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"corpus file not found: {path}")
    if rejects_path is None:
        rejects_path = path.with_suffix(path.suffix + ".rejects.jsonl")
    rejects_path = Path(rejects_path)

    dialogues: list[Dialogue] = []
    seen_ids: set[str] = set()
    rejects: list[dict] = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
                d = _parse_record(raw)
            except (ValueError, KeyError, TypeError) as exc:
                rejects.append({"line": line_no, "error": str(exc), "record": line})
                continue
            if d.dialogue_id in seen_ids:
                raise CorpusError(f"duplicate dialogue_id: {d.dialogue_id}")
            seen_ids.add(d.dialogue_id)
            dialogues.append(d)

    if rejects:
        with rejects_path.open("w", encoding="utf-8") as fh:
            for r in rejects:
                fh.write(json.dumps(r, ensure_ascii=False) + "\n")
        log.warning("%d malformed records written to %s", len(rejects), rejects_path)
    if not dialogues:
        raise CorpusError(f"no valid dialogues in {path}")

    catalog = tuple(sorted({o.product_id for d in dialogues for o in d.offers}))
    return Corpus(dialogues=tuple(dialogues), product_catalog=catalog)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus in the canonical byte-stable JSONL form."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for d in corpus.dialogues:
            rec = {
                "dialogue_id": d.dialogue_id,
                "customer_id": d.customer_id,
                "timestamp": d.timestamp.isoformat() if d.timestamp else None,
                "utterances": [{"speaker": u.speaker, "text": u.text} for u in d.utterances],
                "offers": [{"product_id": o.product_id, "outcome": o.outcome} for o in d.offers],
            }
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True, separators=(",", ":")) + "\n")


def _chrono_key(d: Dialogue):
    return (d.timestamp or date.min, d.dialogue_id)


def clean_corpus(
    corpus: Corpus,
    min_customer_lines: int = 2,
    merge_transcripts: bool = False,
) -> tuple[Corpus, CleaningReport]:
    """Apply the three cleaning rules and tally them.

    1. Dialogues with fewer than ``min_customer_lines`` customer utterances
       are dropped.
    2. A dialogue offering the same product twice with differing outcomes is
       dropped wholesale; same-outcome duplicates are collapsed to one offer.
    3. Repeat calls (same customer and product across dialogues): when all
       outcomes agree the offer survives only in the chronologically latest
       dialogue (ties broken by dialogue_id); earlier dialogues whose offers
       are all superseded this way are removed and counted as merges.  When
       outcomes conflict the product is removed from every dialogue in the
       group.  ``merge_transcripts`` prepends the absorbed transcripts to the
       surviving dialogue.

    Cleaning is total (never raises) and idempotent.
    """
    if min_customer_lines < 1:
        raise ValueError("min_customer_lines must be >= 1")
    report = CleaningReport(input_size=len(corpus.dialogues))

    survivors: list[Dialogue] = []
    for d in corpus.dialogues:
        if len(d.customer_lines()) < min_customer_lines:
            report.dropped_too_short += 1
            continue
        by_product: dict[str, set[int]] = {}
        for o in d.offers:
            by_product.setdefault(o.product_id, set()).add(o.outcome)
        if any(len(v) > 1 for v in by_product.values()):
            report.dropped_contradictory += 1
            continue
        if len(by_product) != len(d.offers):
            deduped = []
            seen = set()
            for o in d.offers:
                if o.product_id not in seen:
                    seen.add(o.product_id)
                    deduped.append(o)
            d = replace(d, offers=tuple(deduped))
        survivors.append(d)

    # Group repeat calls per (customer, product) and prune offers.
    groups: dict[tuple[str, str], list[Dialogue]] = {}
    for d in survivors:
        for o in d.offers:
            groups.setdefault((d.customer_id, o.product_id), []).append(d)

    removed_offers: dict[str, set[str]] = {}  # dialogue_id -> product_ids to drop
    merged_from: dict[str, list[Dialogue]] = {}  # surviving dialogue_id -> absorbed dialogues
    superseded: dict[str, set[str]] = {}  # dialogue_id -> products lost to a later agreeing call
    for (cust, pid), ds in groups.items():
        if len(ds) < 2:
            continue
        ds_sorted = sorted(ds, key=_chrono_key)
        outcomes = set()
        for d in ds_sorted:
            outcomes.update(o.outcome for o in d.offers if o.product_id == pid)
        if len(outcomes) > 1:
            report.dropped_conflicting_repeats += 1
            for d in ds_sorted:
                removed_offers.setdefault(d.dialogue_id, set()).add(pid)
        else:
            last = ds_sorted[-1]
            for d in ds_sorted[:-1]:
                removed_offers.setdefault(d.dialogue_id, set()).add(pid)
                superseded.setdefault(d.dialogue_id, set()).add(pid)
                merged_from.setdefault(last.dialogue_id, []).append(d)

    cleaned: list[Dialogue] = []
    for d in survivors:
        dropped = removed_offers.get(d.dialogue_id, set())
        kept = tuple(o for o in d.offers if o.product_id not in dropped)
        was_superseded = superseded.get(d.dialogue_id, set())
        if not kept and d.offers and dropped and dropped == was_superseded:
            # Every offer moved to a later agreeing call: this dialogue is merged away.
            report.merged_repeat_calls += 1
            continue
        cleaned.append(replace(d, offers=kept))

    if merge_transcripts:
        absorbed_ids = {a.dialogue_id for ds in merged_from.values() for a in ds}
        merged: list[Dialogue] = []
        for d in cleaned:
            sources = [a for a in merged_from.get(d.dialogue_id, []) if a.dialogue_id in absorbed_ids]
            if sources:
                utts: list[Utterance] = []
                for src in sorted(set(sources), key=_chrono_key):
                    utts.extend(src.utterances)
                utts.extend(d.utterances)
                utts = [replace(u, index=i) for i, u in enumerate(utts)]
                d = replace(d, utterances=tuple(utts))
            merged.append(d)
        cleaned = merged

    report.output_size = len(cleaned)
    catalog = tuple(sorted({o.product_id for d in cleaned for o in d.offers}))
    return Corpus(dialogues=tuple(cleaned), product_catalog=catalog), report


def corpus_stats(corpus: Corpus) -> dict[str, dict]:
    """Per-product dialogue counts and purchase-propensity rates.

    Products in the catalog with zero offers are reported with n_dialogues=0
    and propensity_rate None.
    """
    stats: dict[str, dict] = {
        pid: {"n_dialogues": 0, "propensity_rate": None} for pid in corpus.product_catalog
    }
    sums: dict[str, int] = {pid: 0 for pid in corpus.product_catalog}
    for d in corpus.dialogues:
        for o in d.offers:
            st = stats.setdefault(o.product_id, {"n_dialogues": 0, "propensity_rate": None})
            st["n_dialogues"] += 1
            sums[o.product_id] = sums.get(o.product_id, 0) + o.outcome
    for pid, st in stats.items():
        if st["n_dialogues"]:
            st["propensity_rate"] = sums[pid] / st["n_dialogues"]
    return stats


def write_cleaning_report(report: CleaningReport, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for key, value in report.as_dict().items():
            fh.write(f"{key}={value}\n")


def read_cleaning_report(path: str | Path) -> CleaningReport:
    values: dict[str, int] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                key, _, val = line.partition("=")
                values[key] = int(val)
    return CleaningReport(**values)
