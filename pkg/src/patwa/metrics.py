"""Word error rate: tokenization, positional and edit-distance scoring, corpus aggregation.

Two scorers are provided. ``wer_positional`` compares words index by index and
charges any length difference as extra errors. ``wer_levenshtein`` is the usual
minimum-edit WER and is what reports use by default. Both return a
:class:`WerBreakdown`; both may exceed 1.0 when the hypothesis is longer than
the reference.

Edit operation names follow ASR scoring convention, seen from the reference:
a *deletion* is a reference word the recognizer dropped, an *insertion* is a
hypothesis word with no reference counterpart.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from typing import Iterable, Literal, NamedTuple, Sequence, Union

TokenSeq = tuple[str, ...]
Mode = Literal["positional", "levenshtein"]
Aggregation = Literal["pooled", "mean"]

MODES = ("positional", "levenshtein")
AGGREGATIONS = ("pooled", "mean")

_APOSTROPHES = frozenset("'‘’ʼ")


def tokenize(text: str) -> TokenSeq:
    """Normalize a transcript into word tokens.

    NFKC + casefold, punctuation replaced by whitespace except apostrophes that
    sit between two alphanumerics (``dem's`` stays one token, ``'bout`` loses
    its leading quote). Curly apostrophes are folded to ``'``.

    >>> tokenize("Di gyal dem!")
    ('di', 'gyal', 'dem')
    """
    text = unicodedata.normalize("NFKC", unicodedata.normalize("NFKC", text).casefold())
    out = []
    last = len(text) - 1
    for k, ch in enumerate(text):
        if ch in _APOSTROPHES:
            inner = 0 < k < last and text[k - 1].isalnum() and text[k + 1].isalnum()
            out.append("'" if inner else " ")
        elif unicodedata.category(ch).startswith("P"):
            out.append(" ")
        else:
            out.append(ch)
    return tuple("".join(out).split())


def _as_tokens(x: Union[str, Sequence[str]]) -> TokenSeq:
    return tokenize(x) if isinstance(x, str) else tuple(x)


@dataclass(frozen=True)
class WerBreakdown:
    substitutions: int
    deletions: int
    insertions: int
    n_ref: int
    mode: str

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> float:
        return self.errors / self.n_ref


class EditOp(NamedTuple):
    kind: str  # match | substitute | delete | insert
    hyp: str | None
    ref: str | None


Alignment = tuple[EditOp, ...]


def wer_positional(hyp: Sequence[str], ref: Sequence[str]) -> WerBreakdown:
    """Index-wise word comparison; surplus or missing words each count as one error."""
    hyp, ref = _as_tokens(hyp), _as_tokens(ref)
    if not ref:
        raise ValueError("empty reference")
    mismatches = sum(h != r for h, r in zip(hyp, ref))
    return WerBreakdown(
        substitutions=mismatches,
        deletions=max(0, len(ref) - len(hyp)),
        insertions=max(0, len(hyp) - len(ref)),
        n_ref=len(ref),
        mode="positional",
    )


def _cost_table(hyp: Sequence[str], ref: Sequence[str]) -> list[list[int]]:
    # table[i][j] = edit distance between ref[:i] and hyp[:j]
    prev = list(range(len(hyp) + 1))
    table = [prev]
    for i, r in enumerate(ref, 1):
        cur = [i]
        for j, h in enumerate(hyp, 1):
            cur.append(min(prev[j - 1] + (r != h), prev[j] + 1, cur[j - 1] + 1))
        table.append(cur)
        prev = cur
    return table


def edit_distance(hyp: Sequence[str], ref: Sequence[str]) -> int:
    """Uniform-cost token edit distance."""
    return _cost_table(hyp, ref)[-1][-1]


def _backtrace(table: list[list[int]], hyp: Sequence[str], ref: Sequence[str]) -> Alignment:
    ops = []
    i, j = len(ref), len(hyp)
    while i or j:
        d = table[i][j]
        if i and j and ref[i - 1] == hyp[j - 1] and d == table[i - 1][j - 1]:
            ops.append(EditOp("match", hyp[j - 1], ref[i - 1]))
            i, j = i - 1, j - 1
        elif i and j and d == table[i - 1][j - 1] + 1:
            ops.append(EditOp("substitute", hyp[j - 1], ref[i - 1]))
            i, j = i - 1, j - 1
        elif i and d == table[i - 1][j] + 1:
            ops.append(EditOp("delete", None, ref[i - 1]))
            i -= 1
        else:
            ops.append(EditOp("insert", hyp[j - 1], None))
            j -= 1
    ops.reverse()
    return tuple(ops)


def wer_levenshtein(hyp: Sequence[str], ref: Sequence[str]) -> tuple[WerBreakdown, Alignment]:
    """Minimum-edit WER with a reproducible alignment.

    Ties in the backtrace resolve as match > substitute > delete > insert.
    """
    hyp, ref = _as_tokens(hyp), _as_tokens(ref)
    if not ref:
        raise ValueError("empty reference")
    alignment = _backtrace(_cost_table(hyp, ref), hyp, ref)
    counts = {"substitute": 0, "delete": 0, "insert": 0, "match": 0}
    for op in alignment:
        counts[op.kind] += 1
    bd = WerBreakdown(counts["substitute"], counts["delete"], counts["insert"], len(ref), "levenshtein")
    return bd, alignment


def replay(alignment: Iterable[EditOp], hyp: Sequence[str]) -> TokenSeq:
    """Apply an alignment to ``hyp``; the result is the reference it was aligned to."""
    src = iter(hyp)
    out = []
    for op in alignment:
        if op.kind in ("match", "substitute", "insert"):
            if next(src) != op.hyp:
                raise ValueError("alignment does not match hypothesis")
        if op.kind != "insert":
            out.append(op.ref)
    if next(src, None) is not None:
        raise ValueError("alignment does not consume the hypothesis")
    return tuple(out)


def score(hyp: Sequence[str], ref: Sequence[str], mode: Mode = "levenshtein") -> WerBreakdown:
    if mode == "levenshtein":
        return wer_levenshtein(hyp, ref)[0]
    if mode == "positional":
        return wer_positional(hyp, ref)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class CorpusSummary:
    pooled: float
    mean: float
    n_utterances: int
    errors: int
    n_ref: int
    mode: str

    def headline(self, aggregation: Aggregation = "pooled") -> float:
        if aggregation not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation {aggregation!r}")
        return self.pooled if aggregation == "pooled" else self.mean


def summarize(breakdowns: Sequence[WerBreakdown]) -> CorpusSummary:
    if not breakdowns:
        raise ValueError("no utterances to score")
    errors = sum(b.errors for b in breakdowns)
    n_ref = sum(b.n_ref for b in breakdowns)
    return CorpusSummary(
        pooled=errors / n_ref,
        mean=sum(b.wer for b in breakdowns) / len(breakdowns),
        n_utterances=len(breakdowns),
        errors=errors,
        n_ref=n_ref,
        mode=breakdowns[0].mode,
    )


def corpus_summary(pairs: Iterable[tuple[Sequence[str], Sequence[str]]], mode: Mode = "levenshtein") -> CorpusSummary:
    return summarize([score(h, r, mode) for h, r in pairs])


def corpus_wer(
    pairs: Iterable[tuple[Sequence[str], Sequence[str]]],
    mode: Mode = "levenshtein",
    aggregation: Aggregation = "pooled",
) -> float:
    """Corpus WER over ``(hyp, ref)`` pairs.

    ``pooled`` divides total errors by total reference words; ``mean`` averages
    per-utterance WER.
    """
    return corpus_summary(pairs, mode).headline(aggregation)
