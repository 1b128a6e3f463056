"""Numeric-tolerance judging of model responses against reference answers.

A response is correct when every number in the reference is matched by some
number in the response within a relative tolerance (default 10%; zero
references use a small absolute tolerance instead). Surplus response numbers
never count against the response, so verbose answers are not penalized.

Matching walks references in order and pairs each with its nearest unused
response number inside the tolerance band (ties break toward the earlier
response number). Nearest-match greedy is deterministic, cheap, and verdicts
are monotone in the tolerance; full bipartite matching was rejected as
unnecessary since tolerance bands rarely overlap in practice.
"""
from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence


class Unit(str, Enum):
    KNOTS = "knots"
    DEGREES = "degrees"
    NM = "nm"
    COUNT = "count"
    NONE = "none"


_UNIT_LEXICON = {
    "knot": Unit.KNOTS, "knots": Unit.KNOTS, "kn": Unit.KNOTS,
    "kt": Unit.KNOTS, "kts": Unit.KNOTS,
    "degree": Unit.DEGREES, "degrees": Unit.DEGREES, "deg": Unit.DEGREES,
    "°": Unit.DEGREES,
    "nm": Unit.NM, "nmi": Unit.NM, "nautical": Unit.NM,
    "vessel": Unit.COUNT, "vessels": Unit.COUNT, "ship": Unit.COUNT,
    "ships": Unit.COUNT, "boat": Unit.COUNT, "boats": Unit.COUNT,
    "contact": Unit.COUNT, "contacts": Unit.COUNT, "record": Unit.COUNT,
    "records": Unit.COUNT, "report": Unit.COUNT, "reports": Unit.COUNT,
}

# Signed decimals and scientific notation; comma-grouped thousands first so
# "1,250" parses as one number. A sign is only taken when not glued to a
# preceding digit/word ("5-10" yields 5 and 10, not -10).
_NUMBER_RE = re.compile(
    r"(?<![\w.,])[-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?(?:[eE][-+]?\d+)?"
)
_UNIT_TOKEN_RE = re.compile(r"\s*([A-Za-z]+|°)")


def extract_numbers(text: str) -> list[tuple[float, Unit]]:
    """All numeric values in order of appearance, with an adjacent unit.

    Thousands separators are stripped; a unit is attached when the token
    immediately after the number is in the unit lexicon.
    """
    out: list[tuple[float, Unit]] = []
    for m in _NUMBER_RE.finditer(text):
        value = float(m.group(0).replace(",", ""))
        unit = Unit.NONE
        um = _UNIT_TOKEN_RE.match(text, m.end())
        if um:
            unit = _UNIT_LEXICON.get(um.group(1).lower(), Unit.NONE)
        out.append((value, unit))
    return out


@dataclass
class EvalOutcome:
    """Judgment of one response against one reference."""

    pair_id: str
    extracted_reference: list[float]
    extracted_response: list[float]
    matched: list[tuple[float, float]]
    verdict: str  # "correct" | "incorrect"
    unmatched: list[float] = field(default_factory=list)
    reason: str | None = None

    @property
    def correct(self) -> bool:
        return self.verdict == "correct"


def _distance(ref: float, resp: float, ref_unit: Unit, modular_degrees: bool) -> float:
    if modular_degrees and ref_unit == Unit.DEGREES:
        d = abs(resp - ref) % 360.0
        return min(d, 360.0 - d)
    return abs(resp - ref)


def judge(response: str, reference: str, rel_tol: float = 0.10,
          zero_abs_tol: float = 0.05, modular_degrees: bool = False,
          pair_id: str = "") -> EvalOutcome:
    """Judge a response: correct iff every reference number finds a match.

    A response number x matches reference r when |x - r| <= rel_tol * |r|
    (or |x| <= zero_abs_tol when r is 0). Each response number is usable
    once; extras are ignored.
    """
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    refs = extract_numbers(reference)
    resps = extract_numbers(response)
    used = [False] * len(resps)
    matched: list[tuple[float, float]] = []
    unmatched: list[float] = []
    for ref_value, ref_unit in refs:
        tol = zero_abs_tol if ref_value == 0 else rel_tol * abs(ref_value)
        best_idx = -1
        best_dist = None
        for i, (resp_value, _unit) in enumerate(resps):
            if used[i]:
                continue
            d = _distance(ref_value, resp_value, ref_unit, modular_degrees)
            if d <= tol and (best_dist is None or d < best_dist):
                best_idx, best_dist = i, d
        if best_idx >= 0:
            used[best_idx] = True
            matched.append((ref_value, resps[best_idx][0]))
        else:
            unmatched.append(ref_value)
    verdict = "correct" if not unmatched else "incorrect"
    return EvalOutcome(
        pair_id=pair_id,
        extracted_reference=[v for v, _ in refs],
        extracted_response=[v for v, _ in resps],
        matched=matched,
        verdict=verdict,
        unmatched=unmatched,
    )


# --- Aggregation -------------------------------------------------------------

CATEGORIES = ("trajectory", "movement", "count", "data_analysis", "pattern", "anomaly")


@dataclass
class GroupStats:
    n: int = 0
    correct: int = 0

    @property
    def accuracy(self) -> float | None:
        return self.correct / self.n if self.n else None

    def to_dict(self) -> dict:
        return {"n": self.n, "correct": self.correct, "accuracy": self.accuracy}


@dataclass
class EvalReport:
    total: int
    overall_correct: int
    overall_accuracy: float | None
    accuracy_undefined: bool
    by_category: dict[str, GroupStats]
    by_generator: dict[str, GroupStats]
    avg_response_chars: float
    avg_reference_chars: float
    verbosity_ratio: float | None
    outcomes: list[EvalOutcome]

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "overall_correct": self.overall_correct,
            "overall_accuracy": self.overall_accuracy,
            "accuracy_undefined": self.accuracy_undefined,
            "by_category": {k: v.to_dict() for k, v in self.by_category.items()},
            "by_generator": {k: v.to_dict() for k, v in self.by_generator.items()},
            "avg_response_chars": self.avg_response_chars,
            "avg_reference_chars": self.avg_reference_chars,
            "verbosity_ratio": self.verbosity_ratio,
            "outcomes": [
                {
                    "pair_id": o.pair_id,
                    "verdict": o.verdict,
                    "unmatched": o.unmatched,
                    "reason": o.reason,
                }
                for o in self.outcomes
            ],
        }

    def category_csv_rows(self) -> list[dict]:
        rows = []
        for name, stats in self.by_category.items():
            rows.append({"category": name, "n": stats.n, "correct": stats.correct,
                         "accuracy": "" if stats.accuracy is None else f"{stats.accuracy:.6f}"})
        return rows


def evaluate(pairs: Sequence[Mapping], responses: Mapping[object, str],
             rel_tol: float = 0.10, modular_degrees: bool = False) -> EvalReport:
    """Judge many responses and aggregate per-category and per-generator.

    Each pair mapping carries at least {answer, category, generator}; its
    identifier is the pair's "pair_id" key when present, else its position
    in the sequence. Responses are keyed by that identifier. Pairs with no
    response are counted incorrect with reason "missing_response".
    """
    by_category = {c: GroupStats() for c in CATEGORIES}
    by_generator: dict[str, GroupStats] = {}
    outcomes: list[EvalOutcome] = []
    total_resp_chars = 0
    total_ref_chars = 0
    correct = 0

    for index, pair in enumerate(pairs):
        pair_id = pair.get("pair_id", index)
        category = pair["category"]
        generator = pair.get("generator", "unknown")
        reference = pair["answer"]
        response = responses.get(pair_id)
        if response is None and not isinstance(pair_id, str):
            response = responses.get(str(pair_id))
        total_ref_chars += len(reference)
        if response is None:
            outcome = EvalOutcome(pair_id=str(pair_id),
                                  extracted_reference=[v for v, _ in extract_numbers(reference)],
                                  extracted_response=[], matched=[],
                                  verdict="incorrect", reason="missing_response")
        else:
            total_resp_chars += len(response)
            outcome = judge(response, reference, rel_tol=rel_tol,
                            modular_degrees=modular_degrees, pair_id=str(pair_id))
        outcomes.append(outcome)
        stats = by_category.setdefault(category, GroupStats())
        stats.n += 1
        gen_stats = by_generator.setdefault(generator, GroupStats())
        gen_stats.n += 1
        if outcome.correct:
            correct += 1
            stats.correct += 1
            gen_stats.correct += 1

    total = len(pairs)
    avg_resp = total_resp_chars / total if total else 0.0
    avg_ref = total_ref_chars / total if total else 0.0
    return EvalReport(
        total=total,
        overall_correct=correct,
        overall_accuracy=(correct / total) if total else None,
        accuracy_undefined=total == 0,
        by_category=by_category,
        by_generator=by_generator,
        avg_response_chars=avg_resp,
        avg_reference_chars=avg_ref,
        verbosity_ratio=(avg_resp / avg_ref) if avg_ref else None,
        outcomes=outcomes,
    )


# --- Manual labels -----------------------------------------------------------

@dataclass(frozen=True)
class ManualLabel:
    """One human judgment of a response."""

    pair_id: str
    correct: bool
    shows_reasoning: bool
    calc_error_despite_correct: bool = False
    notes: str = ""


def record_manual(labels: Sequence[ManualLabel]) -> dict:
    """Summarize manual evaluation labels.

    Raises on an empty list (a manual summary needs n >= 1) and on
    duplicate pair references.
    """
    if not labels:
        raise ValueError("manual summary requires at least one label")
    seen: set[str] = set()
    for label in labels:
        if label.pair_id in seen:
            raise ValueError(f"duplicate manual label for pair {label.pair_id!r}")
        seen.add(label.pair_id)
    n = len(labels)
    return {
        "n": n,
        "accuracy": sum(l.correct for l in labels) / n,
        "shows_reasoning_rate": sum(l.shows_reasoning for l in labels) / n,
        "calc_error_rate": sum(l.calc_error_despite_correct for l in labels) / n,
    }


_TRUTHY = {"1", "true", "yes", "y", "t"}


def load_manual_csv(path: str | Path) -> list[ManualLabel]:
    """Read manual labels from CSV: pair_id, correct, shows_reasoning,
    calc_error, notes."""
    labels = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            labels.append(ManualLabel(
                pair_id=row["pair_id"].strip(),
                correct=row["correct"].strip().lower() in _TRUTHY,
                shows_reasoning=row["shows_reasoning"].strip().lower() in _TRUTHY,
                calc_error_despite_correct=row.get("calc_error", "").strip().lower() in _TRUTHY,
                notes=row.get("notes", ""),
            ))
    return labels


def load_responses_jsonl(path: str | Path) -> dict[str, str]:
    """Read responses as JSONL of {pair_id, response_text}."""
    responses: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            responses[str(obj["pair_id"])] = obj["response_text"]
    return responses


def load_dataset_jsonl(path: str | Path) -> list[dict]:
    """Read dataset pairs as JSONL; pair_id defaults to the line ordinal."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for index, line in enumerate(fh):
            if not line.strip():
                continue
            obj = json.loads(line)
            obj.setdefault("pair_id", str(index))
            pairs.append(obj)
    return pairs
