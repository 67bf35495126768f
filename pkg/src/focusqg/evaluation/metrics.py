"""Corpus BLEU, ROUGE-L, simplified METEOR, unique counting and Pearson agreement.

All scorers take parallel lists: ``hypotheses[i]`` is a token list and
``references[i]`` a non-empty list of token lists.  Scores are percentages.
"""

from __future__ import annotations

import math
from collections import Counter

import numpy as np
from scipy import stats as sps

from .stem import stem

ROUGE_BETA = 1.2
METEOR_ALPHA = 0.9
METEOR_GAMMA = 0.5
METEOR_BETA = 3.0


class MetricError(ValueError):
    pass


class UndefinedCorrelation(MetricError):
    pass


def _check(hypotheses, references):
    if len(hypotheses) == 0:
        raise MetricError("empty hypothesis set")
    if len(hypotheses) != len(references):
        raise MetricError(f"{len(hypotheses)} hypotheses but {len(references)} reference lists")
    for i, refs in enumerate(references):
        if not refs:
            raise MetricError(f"hypothesis {i} has no references")


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def closest_ref_length(hyp_len, refs):
    """Reference length closest to ``hyp_len``; the shorter one wins ties."""
    return min((abs(len(r) - hyp_len), len(r)) for r in refs)[1]


def bleu_counts(hyp, refs, max_n=4):
    """Per-n ``(clipped matches, candidate n-grams)`` plus ``(c, r)`` lengths."""
    out = []
    for n in range(1, max_n + 1):
        h = ngrams(hyp, n)
        best = Counter()
        for r in refs:
            for g, c in ngrams(r, n).items():
                if c > best[g]:
                    best[g] = c
        out.append((sum(min(c, best[g]) for g, c in h.items()), max(len(hyp) - n + 1, 0)))
    return out, (len(hyp), closest_ref_length(len(hyp), refs))


def bleu_from_counts(matches, totals, c, r):
    max_n = len(matches)
    if c == 0 or matches[0] == 0:
        return 0.0
    logs = [math.log(matches[0] / totals[0])]
    smooth = any(m == 0 for m in matches[1:])
    for m, t in zip(matches[1:], totals[1:]):
        logs.append(math.log((m + 1) / (t + 1)) if smooth else math.log(m / t))
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return 100.0 * bp * math.exp(sum(logs) / max_n)


def bleu(hypotheses, references, max_n=4):
    """Corpus BLEU with clipped counts, closest-length brevity penalty and add-one
    smoothing of every n >= 2 precision whenever any of them has a zero match count."""
    _check(hypotheses, references)
    matches, totals = [0] * max_n, [0] * max_n
    c = r = 0
    for hyp, refs in zip(hypotheses, references):
        counts, (hc, hr) = bleu_counts(hyp, refs, max_n)
        for n, (m, t) in enumerate(counts):
            matches[n] += m
            totals[n] += t
        c += hc
        r += hr
    return bleu_from_counts(matches, totals, c, r)


def sentence_bleu(hyp, refs, max_n=4):
    counts, (c, r) = bleu_counts(hyp, refs, max_n)
    return bleu_from_counts([m for m, _ in counts], [t for _, t in counts], c, r)


def lcs_length(a, b):
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l_pair(hyp, ref, beta=ROUGE_BETA):
    lcs = lcs_length(hyp, ref)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(hyp), lcs / len(ref)
    return (1 + beta ** 2) * p * r / (r + beta ** 2 * p)


def rouge_l_sentence(hyp, refs, beta=ROUGE_BETA):
    return 100.0 * max(rouge_l_pair(hyp, r, beta) for r in refs)


def rouge_l(hypotheses, references, beta=ROUGE_BETA):
    """Mean over hypotheses of the best LCS F-measure against any reference."""
    _check(hypotheses, references)
    return sum(rouge_l_sentence(h, refs, beta) for h, refs in zip(hypotheses, references)) \
        / len(hypotheses)


def meteor_align(hyp, ref):
    """Greedy unigram alignment: exact surface matches first, then stem matches.

    Each hypothesis token, left to right, takes the unmatched reference
    position that extends the previous token's chunk if possible, else the
    leftmost eligible one.  Returns a sorted list of ``(hyp_pos, ref_pos)``.
    """
    align = {}
    used = set()
    for keyfn in (lambda w: w, stem):
        ref_keys = [keyfn(w) for w in ref]
        for i, w in enumerate(hyp):
            if i in align:
                continue
            k = keyfn(w)
            cands = [j for j, rk in enumerate(ref_keys) if rk == k and j not in used]
            if not cands:
                continue
            prev = align.get(i - 1)
            j = prev + 1 if prev is not None and prev + 1 in cands else cands[0]
            align[i] = j
            used.add(j)
    return sorted(align.items())


def count_chunks(alignment):
    chunks, prev = 0, None
    for i, j in alignment:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor_pair(hyp, ref, alpha=METEOR_ALPHA, gamma=METEOR_GAMMA, beta=METEOR_BETA):
    alignment = meteor_align(hyp, ref)
    m = len(alignment)
    if m == 0:
        return 0.0
    p, r = m / len(hyp), m / len(ref)
    fmean = p * r / (alpha * p + (1 - alpha) * r)
    penalty = gamma * (count_chunks(alignment) / m) ** beta
    return fmean * (1 - penalty)


def meteor_sentence(hyp, refs):
    return 100.0 * max(meteor_pair(hyp, r) for r in refs)


def meteor_simplified(hypotheses, references):
    """Exact+stem unigram METEOR, best reference per hypothesis, corpus mean."""
    _check(hypotheses, references)
    return sum(meteor_sentence(h, refs) for h, refs in zip(hypotheses, references)) \
        / len(hypotheses)


def count_unique(questions):
    return len(set(questions))


def pearson_agreement(a, b):
    """Pearson ``r`` and two-tailed p-value from Student's t with ``n - 2`` dof."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError("ratings must be two equal-length 1-D series")
    n = x.size
    if n < 3:
        raise MetricError("need at least 3 paired ratings")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelation("correlation is undefined for a constant series")
    ux, uy = dx / math.sqrt(sxx), dy / math.sqrt(syy)
    if np.array_equal(ux, uy):
        r = 1.0
    elif np.array_equal(ux, -uy):
        r = -1.0
    else:
        r = max(-1.0, min(1.0, float(ux @ uy)))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1 - r * r))
    return r, float(2.0 * sps.t.sf(abs(t), n - 2))
