"""Scoring: exact-match accuracy, micro/macro F1 over attribute=value pairs,
and per-dimension error counts.

All functions take aligned lists of per-token assignments (dimension ->
value maps). Null values mean "attribute absent" and never enter the pair
sets; a token where both gold and prediction are empty counts as a perfect
match (per-token F1 of 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import AlignmentError
from .schema import NULL, FeatureSchema


def _check_aligned(gold: list, predicted: list):
    if len(gold) != len(predicted):
        raise AlignmentError(f"{len(gold)} gold tokens vs {len(predicted)} predicted")


def _value_set(assignment: dict[str, str]) -> frozenset[str]:
    return frozenset(v for v in assignment.values() if v != NULL)


def _pair_set(assignment: dict[str, str]) -> frozenset[str]:
    return frozenset(f"{d}={v}" for d, v in assignment.items() if v != NULL)


def exact_match_accuracy(gold: list[dict[str, str]], predicted: list[dict[str, str]]) -> float:
    """Share of tokens whose non-null value sets agree exactly."""
    _check_aligned(gold, predicted)
    if not gold:
        return 1.0
    hits = sum(1 for g, p in zip(gold, predicted) if _value_set(g) == _value_set(p))
    return hits / len(gold)


def f1_scores(gold: list[dict[str, str]], predicted: list[dict[str, str]]) -> tuple[float, float]:
    """(micro, macro) F1 over attribute=value pairs.

    Micro aggregates true/false positives and negatives over all tokens;
    macro averages per-token F1, scoring two empty sets as 1.
    """
    _check_aligned(gold, predicted)
    if not gold:
        return 1.0, 1.0
    tp = fp = fn = 0
    token_f1 = []
    for g, p in zip(gold, predicted):
        gs, ps = _pair_set(g), _pair_set(p)
        inter = len(gs & ps)
        tp += inter
        fp += len(ps) - inter
        fn += len(gs) - inter
        if not gs and not ps:
            token_f1.append(1.0)
        else:
            token_f1.append(2.0 * inter / (len(gs) + len(ps)))
    micro = 1.0 if tp + fp + fn == 0 else 2.0 * tp / (2.0 * tp + fp + fn)
    macro = sum(token_f1) / len(token_f1)
    return micro, macro


def per_feature_errors(
    gold: list[dict[str, str]],
    predicted: list[dict[str, str]],
    schema: FeatureSchema,
) -> tuple[dict[str, int], dict[str, int]]:
    """Per dimension: tokens where prediction differs from gold, and total
    non-null predictions."""
    _check_aligned(gold, predicted)
    errors = {dim: 0 for dim in schema.dimensions}
    predictions = {dim: 0 for dim in schema.dimensions}
    for g, p in zip(gold, predicted):
        for dim in schema.dimensions:
            gv = g.get(dim, NULL)
            pv = p.get(dim, NULL)
            if gv != pv:
                errors[dim] += 1
            if pv != NULL:
                predictions[dim] += 1
    return errors, predictions


@dataclass
class EvalReport:
    accuracy: float
    f1_micro: float
    f1_macro: float
    token_count: int
    errors: dict[str, int] = field(default_factory=dict)
    predictions: dict[str, int] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [
            f"tokens          {self.token_count}",
            f"accuracy        {100.0 * self.accuracy:.2f}",
            f"f1-micro        {100.0 * self.f1_micro:.2f}",
            f"f1-macro        {100.0 * self.f1_macro:.2f}",
        ]
        if self.errors:
            lines.append("per-feature errors / predictions:")
            for dim in sorted(self.errors):
                lines.append(f"  {dim:<12} {self.errors[dim]:>6} {self.predictions[dim]:>8}")
        return "\n".join(lines) + "\n"

    def to_kv_lines(self) -> str:
        lines = [
            f"tokens\t{self.token_count}",
            f"accuracy\t{self.accuracy:.6f}",
            f"f1_micro\t{self.f1_micro:.6f}",
            f"f1_macro\t{self.f1_macro:.6f}",
        ]
        for dim in sorted(self.errors):
            lines.append(f"errors.{dim}\t{self.errors[dim]}")
            lines.append(f"predictions.{dim}\t{self.predictions[dim]}")
        return "\n".join(lines) + "\n"


def evaluate_assignments(
    gold: list[dict[str, str]],
    predicted: list[dict[str, str]],
    schema: FeatureSchema | None = None,
) -> EvalReport:
    accuracy = exact_match_accuracy(gold, predicted)
    micro, macro = f1_scores(gold, predicted)
    errors, predictions = ({}, {})
    if schema is not None:
        errors, predictions = per_feature_errors(gold, predicted, schema)
    return EvalReport(
        accuracy=accuracy,
        f1_micro=micro,
        f1_macro=macro,
        token_count=len(gold),
        errors=errors,
        predictions=predictions,
    )


def flatten_corpus(sentences) -> list[dict[str, str]]:
    """Per-token assignments for all scored tokens of a corpus, in order."""
    return [tok.annotation for sent in sentences for tok in sent.scored_tokens()]
