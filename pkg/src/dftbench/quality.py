"""Linguistic-quality scoring: grammaticality from backend perplexity,
non-redundancy from four inter-sentence features, and discourse focus from
adjacent-sentence similarity, aggregated to a [0,1] score."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import Document, Tokenizer, split_sentences, truncate_to_window
from .lexsem import SentenceEncoder, sentence_similarity, _WORD_RE

PERPLEXITY_TAU = 5.0
DEFAULT_WINDOW = 512


@dataclass(frozen=True)
class QualityScore:
    grammaticality: float
    non_redundancy: float
    focus: float
    aggregate: float


def grammaticality(doc: Document, backend, tokenizer: Tokenizer,
                   window: int = DEFAULT_WINDOW) -> float:
    """exp(-l/tau) where l is the mean per-token negative log-probability."""
    seq = truncate_to_window(tokenizer.tokenize(doc.text), window)
    scores = backend.score_tokens(seq)
    nll = [-math.log(max(s.prob, 1e-300)) for s in scores]
    return math.exp(-float(np.mean(nll)) / PERPLEXITY_TAU)


def _longest_common_substring(a: str, b: str) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    best = 0
    for ca in a:
        cur = [0] * (len(b) + 1)
        for j, cb in enumerate(b, start=1):
            if ca == cb:
                cur[j] = prev[j - 1] + 1
                if cur[j] > best:
                    best = cur[j]
        prev = cur
    return best


def _longest_common_word_run(a: list, b: list) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    best = 0
    for wa in a:
        cur = [0] * (len(b) + 1)
        for j, wb in enumerate(b, start=1):
            if wa == wb:
                cur[j] = prev[j - 1] + 1
                best = max(best, cur[j])
        prev = cur
    return best


def _edit_distance(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _pair_penalty(sent_a: str, sent_b: str) -> float:
    """Max of four normalized redundancy features for one sentence pair."""
    words_a = [w.lower() for w in _WORD_RE.findall(sent_a)]
    words_b = [w.lower() for w in _WORD_RE.findall(sent_b)]
    shorter_chars = min(len(sent_a), len(sent_b))
    longer_chars = max(len(sent_a), len(sent_b))
    shorter_words = min(len(words_a), len(words_b))

    substring = _longest_common_substring(sent_a, sent_b) / shorter_chars if shorter_chars else 0.0
    word_run = _longest_common_word_run(words_a, words_b) / shorter_words if shorter_words else 0.0
    edit = 1.0 - _edit_distance(sent_a, sent_b) / longer_chars if longer_chars else 0.0
    set_a, set_b = set(words_a), set(words_b)
    shared = (len(set_a & set_b) / min(len(set_a), len(set_b))) if set_a and set_b else 0.0
    return max(substring, word_run, edit, shared)


def non_redundancy(doc: Document) -> float:
    sentences = split_sentences(doc.text)
    if len(sentences) <= 1:
        return 1.0
    worst = 0.0
    for i in range(len(sentences)):
        for j in range(i + 1, len(sentences)):
            worst = max(worst, _pair_penalty(sentences[i], sentences[j]))
            if worst >= 1.0:
                return 0.0
    return max(0.0, 1.0 - worst)


def focus(doc: Document, encoder: SentenceEncoder) -> float:
    """Mean clamped similarity over adjacent sentence pairs."""
    sentences = split_sentences(doc.text)
    if len(sentences) <= 1:
        return 1.0
    sims = [max(0.0, sentence_similarity(sentences[i], sentences[i + 1], encoder))
            for i in range(len(sentences) - 1)]
    return float(np.mean(sims))


def score(doc: Document, backend, encoder: SentenceEncoder, tokenizer: Tokenizer,
          window: int = DEFAULT_WINDOW) -> QualityScore:
    g = grammaticality(doc, backend, tokenizer, window)
    n = non_redundancy(doc)
    f = focus(doc, encoder)
    return QualityScore(g, n, f, (g + n + f) / 3.0)
