"""Corpus-level BLEU and ROUGE-L reference implementations.

Tokenization is fixed (lowercase, split on whitespace/punctuation, keep
word and number tokens) so scores are reproducible across runs.
"""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

_TOKEN_RE = re.compile(r"\w+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace and punctuation boundaries."""
    return _TOKEN_RE.findall(text.lower())


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


@dataclass(frozen=True)
class BleuResult:
    score: float
    brevity_penalty: float
    precisions: tuple[float, ...]
    candidate_length: int
    reference_length: int

    def to_dict(self) -> dict:
        return {
            "score": self.score,
            "brevity_penalty": self.brevity_penalty,
            "precisions": list(self.precisions),
            "candidate_length": self.candidate_length,
            "reference_length": self.reference_length,
        }


def brevity_penalty(c: int, r: int) -> float:
    """BP = 1 if c > r, else e^(1 - r/c). Requires c > 0."""
    if c <= 0:
        raise ValueError("candidate length must be positive")
    if c > r:
        return 1.0
    return math.exp(1.0 - r / c)


def bleu(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
         weights: Sequence[float] = (0.25, 0.25, 0.25, 0.25),
         smooth_eps: float | None = None) -> BleuResult:
    """Corpus BLEU with clipped n-gram precision and brevity penalty.

    One reference per candidate. In unsmoothed mode any zero corpus-level
    precision drives the score to 0; passing smooth_eps (e.g. 1e-9)
    substitutes that epsilon for zero match counts instead.
    """
    if not candidates:
        raise ValueError("empty candidate set")
    if len(candidates) != len(references):
        raise ValueError("candidates and references must have equal length")

    max_order = len(weights)
    matches = [0] * max_order
    totals = [0] * max_order
    c_len = 0
    r_len = 0
    for cand, ref in zip(candidates, references):
        cand = list(cand)
        ref = list(ref)
        c_len += len(cand)
        r_len += len(ref)
        for n in range(1, max_order + 1):
            cand_counts = _ngram_counts(cand, n)
            ref_counts = _ngram_counts(ref, n)
            totals[n - 1] += max(len(cand) - n + 1, 0)
            matches[n - 1] += sum(min(count, ref_counts[gram])
                                  for gram, count in cand_counts.items())
    if c_len == 0:
        raise ValueError("candidate corpus has no tokens")

    precisions = []
    for n in range(max_order):
        if totals[n] == 0:
            precisions.append(0.0)
            continue
        num = matches[n]
        if num == 0 and smooth_eps is not None:
            num = smooth_eps
        precisions.append(num / totals[n])

    bp = brevity_penalty(c_len, r_len)
    if any(p == 0.0 for p in precisions):
        score = 0.0
    else:
        score = bp * math.exp(sum(w * math.log(p) for w, p in zip(weights, precisions)))
    return BleuResult(score=score, brevity_penalty=bp, precisions=tuple(precisions),
                      candidate_length=c_len, reference_length=r_len)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length via dynamic programming."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> dict:
    """LCS-based ROUGE-L precision/recall/F1 (beta = 1) for one pair."""
    lcs = lcs_length(candidate, reference)
    precision = lcs / len(candidate) if candidate else 0.0
    recall = lcs / len(reference) if reference else 0.0
    f1 = (2 * precision * recall / (precision + recall)) if (precision + recall) else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def rouge_l_corpus(candidates: Sequence[Sequence[str]],
                   references: Sequence[Sequence[str]]) -> dict:
    """Mean ROUGE-L components over aligned candidate/reference pairs."""
    if not candidates:
        raise ValueError("empty candidate set")
    if len(candidates) != len(references):
        raise ValueError("candidates and references must have equal length")
    acc = {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    for cand, ref in zip(candidates, references):
        single = rouge_l(cand, ref)
        for key in acc:
            acc[key] += single[key]
    return {key: val / len(candidates) for key, val in acc.items()}
