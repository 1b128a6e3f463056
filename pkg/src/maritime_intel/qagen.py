"""Synthetic Q&A generation over sampled vessel contexts.

Each context yields 12 questions with a fixed category distribution
(trajectory 3, movement 2, count 2, data analysis 2, pattern 2, anomaly 1)
and per-question styles drawn uniformly from five phrasing families. The
prompt always places the questions before the vessel data. Generated
answers pass through an oracle quality gate: every numeric value must match
the deterministic reference within the judge tolerance, or the pair is
marked failed and excluded from the emitted dataset (kept in
rejected.jsonl for audit).
"""
from __future__ import annotations

import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

from . import oracle as oracle_mod
from .chat import ChatClient, ChatMessage, ChatRequest, TransportError
from .evalharness import judge
from .ingest import to_vessel_json
from .oracle import Category, OracleAnswer
from .sampler import Generator, VesselContext, assign_generator
from .util import derive_seed, load_packaged_json

logger = logging.getLogger(__name__)

STYLES = ("technical_analytical", "operational_command", "investigative",
          "practical_user", "conversational")

# Per-context category distribution: 12 question slots.
CATEGORY_SLOTS: tuple[Category, ...] = (
    Category.TRAJECTORY, Category.TRAJECTORY, Category.TRAJECTORY,
    Category.MOVEMENT, Category.MOVEMENT,
    Category.COUNT, Category.COUNT,
    Category.DATA_ANALYSIS, Category.DATA_ANALYSIS,
    Category.PATTERN, Category.PATTERN,
    Category.ANOMALY,
)

TRAJECTORY_MINUTES = (30, 60, 120)

_TEMPLATES = load_packaged_json("qa_templates.json")["templates"]

PROMPT_HEADER = (
    "You are a maritime traffic analyst. Answer each numbered question using only "
    "the vessel position reports provided after the questions. Respond with a JSON "
    "object mapping each question number to its answer text. State every numeric "
    "result explicitly."
)
SINGLE_QUESTION_HEADER = (
    "You are a maritime traffic analyst. Answer the question using only the "
    "vessel position reports provided after it. State every numeric result "
    "explicitly."
)
QUESTIONS_MARKER = "Questions:"
DATA_MARKER = "Vessel position reports (one JSON object per line):"


@dataclass(frozen=True)
class QuestionSpec:
    """One planned question: category, phrasing style, and oracle parameters."""

    slot_index: int
    category: Category
    style: str
    params: dict


@dataclass(frozen=True)
class QaPair:
    """One training example plus its quality-gate outcome."""

    context_id: int
    question: str
    answer: str
    category: str
    style: str
    generator: str
    oracle_check: str = "skipped"  # passed | failed | skipped
    split: str | None = None       # train | validation
    slot_index: int = 0
    reference: str = ""            # oracle narrative backing the QC verdict

    def dataset_record(self) -> dict:
        return {
            "context_id": self.context_id,
            "question": self.question,
            "answer": self.answer,
            "category": self.category,
            "style": self.style,
            "generator": self.generator,
        }


class GenerationError(RuntimeError):
    """A context could not be generated; partial pairs are preserved."""

    def __init__(self, context_id: int, message: str, partial: list[QaPair] | None = None):
        super().__init__(f"context {context_id}: {message}")
        self.context_id = context_id
        self.partial = partial or []


def _eligible_mmsis(context: VesselContext, min_records: int) -> list[str]:
    return [t.mmsi for t in context.vessels if len(t.records) >= min_records]


def question_params(context: VesselContext, slot_index: int, category: Category,
                    seed: int) -> dict:
    """Deterministic oracle parameters for one question slot."""
    rng = random.Random(derive_seed(seed, "params", context.context_id, slot_index))
    if category == Category.TRAJECTORY:
        return {"mmsi": rng.choice(_eligible_mmsis(context, 1)),
                "minutes": rng.choice(TRAJECTORY_MINUTES)}
    if category == Category.MOVEMENT:
        eligible = _eligible_mmsis(context, 2)
        if not eligible:
            raise GenerationError(context.context_id,
                                  "no vessel has the 2+ reports movement analysis needs")
        return {"mmsi": rng.choice(eligible)}
    if category == Category.COUNT:
        categories = sorted({r.vessel_category.value for t in context.vessels
                             for r in t.records})
        return {"category": rng.choice([None] + categories)}
    return {}


def question_plan(context: VesselContext, rng_seed: int) -> list[QuestionSpec]:
    """12 QuestionSpecs: fixed category multiset, seeded uniform styles."""
    style_rng = random.Random(derive_seed(rng_seed, "styles", context.context_id))
    specs = []
    for slot, category in enumerate(CATEGORY_SLOTS):
        specs.append(QuestionSpec(
            slot_index=slot,
            category=category,
            style=style_rng.choice(STYLES),
            params=question_params(context, slot, category, rng_seed),
        ))
    return specs


def render_question(spec: QuestionSpec) -> str:
    template = _TEMPLATES[spec.category.value][spec.style]
    params = dict(spec.params)
    if spec.category == Category.COUNT:
        cat = params.pop("category", None)
        params["subject"] = f"{cat} vessels" if cat else "vessels"
    return template.format(**params)


def assemble_prompt(context: VesselContext, specs: Sequence[QuestionSpec]) -> str:
    """Instruction header, then every question, then the vessel-JSON lines.

    Question-before-data ordering is a hard invariant of this pipeline.
    """
    if not specs:
        raise ValueError("cannot assemble a prompt without questions")
    lines = [PROMPT_HEADER, "", QUESTIONS_MARKER]
    for i, spec in enumerate(specs, start=1):
        lines.append(f"Q{i}. {render_question(spec)}")
    lines.append("")
    lines.append(DATA_MARKER)
    for track in context.vessels:
        for record in track.records:
            lines.append(to_vessel_json(record))
    return "\n".join(lines)


def _single_question_prompt(context: VesselContext, spec: QuestionSpec) -> str:
    lines = [SINGLE_QUESTION_HEADER, "", QUESTIONS_MARKER,
             f"Q1. {render_question(spec)}", "", DATA_MARKER]
    for track in context.vessels:
        for record in track.records:
            lines.append(to_vessel_json(record))
    return "\n".join(lines)


def _parse_answer_map(raw: str, n_questions: int) -> dict[int, str]:
    """Parse the model's JSON object of question-number -> answer text."""
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError:
        return {}
    if not isinstance(obj, dict):
        return {}
    answers: dict[int, str] = {}
    for key, value in obj.items():
        try:
            slot = int(str(key).lstrip("qQ")) - 1
        except ValueError:
            continue
        if 0 <= slot < n_questions and isinstance(value, str):
            answers[slot] = value
    return answers


@dataclass(frozen=True)
class GenerationSettings:
    model_a: str = "gpt-4o"
    model_b: str = "o3-mini"
    temperature_a: float = 0.7
    temperature_b: float = 1.0
    judge_rel_tol: float = 0.10
    max_retries: int = 2

    def model_for(self, generator: Generator) -> str:
        return self.model_a if generator == Generator.MODEL_A else self.model_b

    def temperature_for(self, generator: Generator) -> float:
        return self.temperature_a if generator == Generator.MODEL_A else self.temperature_b


def generate_for_context(context: VesselContext, specs: Sequence[QuestionSpec],
                         client: ChatClient,
                         settings: GenerationSettings | None = None) -> list[QaPair]:
    """Generate one context's QA pairs through the client and oracle gate.

    A single call covers all questions; individual answers that miss the
    oracle tolerance (or never arrive) are retried one question at a time up
    to max_retries before being marked failed. Transport failure of the
    whole context raises GenerationError.
    """
    settings = settings or GenerationSettings()
    references: list[OracleAnswer] = [
        oracle_mod.answer_question(context, spec.category, spec.params) for spec in specs
    ]
    narratives = [ref.narrative for ref in references]
    model = settings.model_for(context.generator)
    temperature = settings.temperature_for(context.generator)

    request = ChatRequest(
        model=model,
        messages=[ChatMessage("user", assemble_prompt(context, specs))],
        temperature=temperature,
        metadata={"context_id": context.context_id, "reference_answers": narratives},
    )
    try:
        raw = client.complete(request)
    except TransportError as exc:
        raise GenerationError(context.context_id, f"generation transport failed: {exc}") from exc

    answers = _parse_answer_map(raw, len(specs))
    pairs: list[QaPair] = []
    for spec, reference in zip(specs, references):
        answer = answers.get(spec.slot_index)
        verdict = "failed"
        if answer is not None:
            verdict = _check(answer, reference.narrative, settings)
        attempts = 0
        while verdict != "passed" and attempts < settings.max_retries:
            attempts += 1
            retry_request = ChatRequest(
                model=model,
                messages=[ChatMessage("user", _single_question_prompt(context, spec))],
                temperature=temperature,
                metadata={"context_id": context.context_id,
                          "reference_answers": narratives,
                          "single_slot": spec.slot_index},
            )
            try:
                answer = client.complete(retry_request)
            except TransportError:
                continue
            verdict = _check(answer, reference.narrative, settings)
        pairs.append(QaPair(
            context_id=context.context_id,
            question=render_question(spec),
            answer=answer if answer is not None else "",
            category=spec.category.value,
            style=spec.style,
            generator=context.generator.value,
            oracle_check=verdict,
            slot_index=spec.slot_index,
            reference=reference.narrative,
        ))
    return pairs


def _check(answer: str, reference_narrative: str, settings: GenerationSettings) -> str:
    outcome = judge(answer, reference_narrative, rel_tol=settings.judge_rel_tol)
    return "passed" if outcome.correct else "failed"


def generate_dataset(contexts: Sequence[VesselContext], client: ChatClient, seed: int,
                     settings: GenerationSettings | None = None,
                     concurrency: int = 1,
                     on_context_error: Callable[[GenerationError], None] | None = None
                     ) -> list[QaPair]:
    """Generate pairs for many contexts, emission-ordered by context id.

    Up to `concurrency` contexts run in flight; generator assignment depends
    only on context_id, so completion order never changes the output.
    """
    settings = settings or GenerationSettings()

    def _one(context: VesselContext) -> list[QaPair]:
        specs = question_plan(context, seed)
        return generate_for_context(context, specs, client, settings)

    ordered = sorted(contexts, key=lambda c: c.context_id)
    results: dict[int, list[QaPair]] = {}
    errors: list[GenerationError] = []
    if concurrency <= 1:
        for context in ordered:
            try:
                results[context.context_id] = _one(context)
            except GenerationError as exc:
                errors.append(exc)
    else:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            futures = {pool.submit(_one, c): c.context_id for c in ordered}
            for future, cid in futures.items():
                try:
                    results[cid] = future.result()
                except GenerationError as exc:
                    errors.append(exc)
    for exc in errors:
        logger.warning("context %d failed: %s", exc.context_id, exc)
        if on_context_error is not None:
            on_context_error(exc)
    return [pair for cid in sorted(results) for pair in results[cid]]


# --- Train/validation split ----------------------------------------------------

def split_dataset(pairs: Sequence[QaPair], train_fraction: float = 0.90,
                  rng_seed: int = 0) -> list[QaPair]:
    """Label pairs train/validation, keeping whole contexts together.

    The train side targets round(N * fraction) pairs. Contexts are shuffled
    by seed, then a subset-sum pass over whole-context sizes (bitset DP)
    picks a train set hitting the target exactly whenever the sizes permit;
    otherwise it lands on the closest achievable count from below, with a
    warning.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    groups: dict[int, list[QaPair]] = {}
    for pair in pairs:
        groups.setdefault(pair.context_id, []).append(pair)
    context_ids = sorted(groups)
    rng = random.Random(derive_seed(rng_seed, "split"))
    rng.shuffle(context_ids)
    target = round(len(pairs) * train_fraction)

    # prefix[i] is the bitset of pair counts reachable using contexts [0, i)
    prefix: list[int] = []
    reachable = 1
    for cid in context_ids:
        prefix.append(reachable)
        reachable |= reachable << len(groups[cid])
    achieved = (reachable & ((1 << (target + 1)) - 1)).bit_length() - 1
    if achieved != target:
        logger.warning("context granularity prevents an exact split: "
                       "%d train pairs vs target %d", achieved, target)

    train_ids: set[int] = set()
    remaining = achieved
    for i in range(len(context_ids) - 1, -1, -1):
        if (prefix[i] >> remaining) & 1:
            continue  # reachable without this context: leave it in validation
        train_ids.add(context_ids[i])
        remaining -= len(groups[context_ids[i]])
    if remaining != 0:
        raise RuntimeError("split reconstruction failed")  # unreachable
    return [replace(pair, split="train" if pair.context_id in train_ids else "validation")
            for pair in pairs]


# --- Emission ---------------------------------------------------------------------

def emit_jsonl(pairs: Sequence[QaPair], out_dir: str | Path,
               config_hash: str = "", seed: int | None = None) -> dict:
    """Write train/validation/rejected JSONL plus a manifest.

    Only pairs that passed the oracle gate reach train/validation; failed
    pairs land in rejected.jsonl with their verdict for audit. Returns the
    manifest mapping.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    for pair in pairs:
        if assign_generator(pair.context_id).value != pair.generator:
            raise ValueError(f"pair in context {pair.context_id} carries generator "
                             f"{pair.generator!r}, diverging from the schedule")

    emitted = [p for p in pairs if p.oracle_check != "failed"]
    rejected = [p for p in pairs if p.oracle_check == "failed"]
    unlabeled = [p for p in emitted if p.split not in ("train", "validation")]
    if unlabeled:
        raise ValueError("pairs must be split-labeled before emission "
                         f"({len(unlabeled)} unlabeled)")
    train = [p for p in emitted if p.split == "train"]
    validation = [p for p in emitted if p.split == "validation"]

    def _write(name: str, subset: Sequence[QaPair], extra: bool = False) -> None:
        with open(out / name, "w", encoding="utf-8") as fh:
            for pair in subset:
                record = pair.dataset_record()
                if extra:
                    record["oracle_check"] = pair.oracle_check
                    record["reference"] = pair.reference
                fh.write(json.dumps(record) + "\n")

    _write("train.jsonl", train)
    _write("validation.jsonl", validation)
    _write("rejected.jsonl", rejected, extra=True)

    def _share(counter: dict[str, int]) -> dict[str, float]:
        total = sum(counter.values())
        return {k: v / total for k, v in sorted(counter.items())} if total else {}

    by_category: dict[str, int] = {}
    by_style: dict[str, int] = {}
    by_generator_pairs: dict[str, int] = {}
    contexts_by_generator: dict[str, set[int]] = {}
    chars = 0
    for pair in pairs:
        by_category[pair.category] = by_category.get(pair.category, 0) + 1
        by_style[pair.style] = by_style.get(pair.style, 0) + 1
        by_generator_pairs[pair.generator] = by_generator_pairs.get(pair.generator, 0) + 1
        contexts_by_generator.setdefault(pair.generator, set()).add(pair.context_id)
        chars += len(pair.question) + len(pair.answer)
    context_counts = {k: len(v) for k, v in contexts_by_generator.items()}

    _write_eval_inputs(pairs, out)

    manifest = {
        "counts": {
            "total": len(pairs),
            "train": len(train),
            "validation": len(validation),
            "rejected": len(rejected),
        },
        "by_category": dict(sorted(by_category.items())),
        "by_style": dict(sorted(by_style.items())),
        "by_generator_pairs": dict(sorted(by_generator_pairs.items())),
        "contexts_by_generator": dict(sorted(context_counts.items())),
        "generator_context_share": _share(context_counts),
        "token_estimate_total": chars // 4,  # same chars/4 heuristic as contexts
        "config_hash": config_hash,
        "seed": seed,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n",
                                       encoding="utf-8")
    return manifest


def _write_eval_inputs(pairs: Sequence[QaPair], out: Path) -> None:
    """references.jsonl (oracle narratives) and generated_responses.jsonl
    (teacher answers) for every pair, aligned by ordinal pair_id: the inputs
    the evaluate command consumes."""
    with open(out / "references.jsonl", "w", encoding="utf-8") as ref_fh, \
            open(out / "generated_responses.jsonl", "w", encoding="utf-8") as resp_fh:
        for index, pair in enumerate(pairs):
            record = pair.dataset_record()
            record["answer"] = pair.reference
            ref_fh.write(json.dumps(record) + "\n")
            resp_fh.write(json.dumps({"pair_id": str(index),
                                      "response_text": pair.answer}) + "\n")
