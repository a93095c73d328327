"""Brute-force reference implementations used to check the metric code.

These stay deliberately independent of the package internals: alignment is
found by exhaustive enumeration (chunk-minimal among all stage-respecting
maximum matchings) and assignment by trying every permutation.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import permutations

from claimdebate.metrics import tokenize
from claimdebate.stemming import stem


def max_matchings(cand_keys, ref_keys, cand_open, ref_open):
    """All maximum matchings between open positions with equal keys."""
    found = []

    def recurse(i, used_ref, pairs):
        if i == len(cand_keys):
            found.append(list(pairs))
            return
        if cand_open[i]:
            for j in range(len(ref_keys)):
                if ref_open[j] and j not in used_ref and ref_keys[j] == cand_keys[i]:
                    recurse(i + 1, used_ref | {j}, pairs + [(i, j)])
        recurse(i + 1, used_ref, pairs)

    recurse(0, frozenset(), [])
    top = max(len(p) for p in found)
    return [p for p in found if len(p) == top]


def count_chunks(pairs):
    ordered = sorted(pairs)
    if not ordered:
        return 0
    chunks = 1
    for prev, cur in zip(ordered, ordered[1:]):
        if cur[0] != prev[0] + 1 or cur[1] != prev[1] + 1:
            chunks += 1
    return chunks


def all_alignments(candidate: str, reference: str):
    """Every stage-respecting maximum alignment between the two texts."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    alignments = []
    for exact in max_matchings(cand, ref, [True] * len(cand), [True] * len(ref)):
        cand_open = [True] * len(cand)
        ref_open = [True] * len(ref)
        for i, j in exact:
            cand_open[i] = ref_open[j] = False
        cand_stems = [stem(t) for t in cand]
        ref_stems = [stem(t) for t in ref]
        for stage2 in max_matchings(cand_stems, ref_stems, cand_open, ref_open):
            alignments.append(exact + stage2)
    return alignments


def oracle_meteor(candidate: str, reference: str) -> float:
    """Formula applied to the chunk-minimal maximum alignment, in exact
    rational arithmetic until the final float conversion."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return 0.0
    alignments = all_alignments(candidate, reference)
    match_count = len(alignments[0])
    if match_count == 0:
        return 0.0
    assert all(len(a) == match_count for a in alignments)
    chunks = min(count_chunks(a) for a in alignments)
    precision = Fraction(match_count, len(cand))
    recall = Fraction(match_count, len(ref))
    fmean = 10 * precision * recall / (recall + 9 * precision)
    penalty = Fraction(1, 2) * Fraction(chunks, match_count) ** 3
    return float(fmean * (1 - penalty))


def oracle_best_assignment(matrix) -> float:
    """Exhaustive best one-to-one assignment total over min(m, n) pairs."""
    rows = len(matrix)
    cols = len(matrix[0]) if rows else 0
    if rows == 0 or cols == 0:
        return 0.0
    if rows <= cols:
        return max(
            sum(matrix[i][p[i]] for i in range(rows))
            for p in permutations(range(cols), rows)
        )
    return max(
        sum(matrix[p[j]][j] for j in range(cols))
        for p in permutations(range(rows), cols)
    )
