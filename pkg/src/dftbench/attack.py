"""Query-free adversarial word substitution: LM-confidence importance ranking,
the four-gate synonym pipeline, and a random-perturbation baseline.

The attack never touches any detector interface; it only consults the scoring
backend, the embedding store, and the sentence encoder.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import quality as quality_mod
from .corpus import (Document, Label, StopWordList, TokenSeq, Tokenizer,
                     sentence_spans, truncate_to_window)
from .decoding import make_rng
from .lexsem import (DEFAULT_MAX_CANDIDATES, DEFAULT_MIN_COSINE, EmbeddingStore,
                     SentenceEncoder, _WORD_RE, nearest_synonyms, pos_tag,
                     sentence_similarity)
from .lm_backend import ScoringMode

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 512


class AttackError(ValueError):
    pass


@dataclass(frozen=True)
class AttackConfig:
    N: int = 10
    candidate_prob_ceiling: float = 0.01
    sentence_sim_floor: float = 0.7
    backend_mode: ScoringMode = ScoringMode.CAUSAL
    seed: int = 0
    synonym_pool: int = DEFAULT_MAX_CANDIDATES
    min_word_cosine: float = DEFAULT_MIN_COSINE
    iterative: bool = False  # re-rank importance after each substitution

    def __post_init__(self):
        if self.N < 1:
            raise AttackError("N must be >= 1")
        if not 0 < self.candidate_prob_ceiling < 1:
            raise AttackError("candidate probability ceiling must be in (0,1)")
        if not 0 < self.sentence_sim_floor <= 1:
            raise AttackError("sentence similarity floor must be in (0,1]")


@dataclass(frozen=True)
class Replacement:
    word_span_index: int
    original: str
    replacement: str
    original_prob: Optional[float]
    original_rank: Optional[int]
    replacement_prob: Optional[float]
    sentence_sim: float
    word_cosine: float

    def to_dict(self) -> dict:
        return {
            "word_span_index": self.word_span_index,
            "original": self.original,
            "replacement": self.replacement,
            "original_prob": self.original_prob,
            "original_rank": self.original_rank,
            "replacement_prob": self.replacement_prob,
            "sentence_sim": self.sentence_sim,
            "word_cosine": self.word_cosine,
        }


@dataclass
class AttackResult:
    original: Document
    perturbed: Document
    replacements: list
    quality_before: Optional[float] = None
    quality_after: Optional[float] = None
    evaded: Optional[bool] = None

    def to_dict(self) -> dict:
        return {
            "original_id": self.original.id,
            "original_text": self.original.text,
            "perturbed_id": self.perturbed.id,
            "perturbed_text": self.perturbed.text,
            "attack": self.perturbed.meta.get("attack", ""),
            "replacements": [r.to_dict() for r in self.replacements],
            "quality_before": self.quality_before,
            "quality_after": self.quality_after,
            "evaded": self.evaded,
        }


def save_results_jsonl(results, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for res in results:
            fh.write(json.dumps(res.to_dict(), sort_keys=True) + "\n")


def span_char_offsets(seq: TokenSeq) -> list:
    """Character range of each word's text within the tokenized region.

    A span's first token may carry attached leading whitespace in its surface;
    the range covers only the word characters."""
    starts = []
    pos = 0
    for tok in seq.tokens:
        starts.append(pos)
        pos += len(tok.surface)
    starts.append(pos)
    ranges = []
    for span in seq.word_spans:
        first = seq.tokens[span.start].surface
        lead = len(first) - len(first.lstrip())
        a = starts[span.start] + lead
        b = starts[span.end]
        # the span's last token never carries trailing whitespace except when
        # it absorbed end-of-text whitespace; trim it from the range
        last = seq.tokens[span.end - 1].surface
        trail = len(last) - len(last.rstrip())
        ranges.append((a, b - trail))
    return ranges


def _splice(text: str, char_ranges: list, repl: dict):
    """Apply span replacements to text; returns (new_text, new char start per span)."""
    pieces = []
    new_starts = [0] * len(char_ranges)
    cursor = 0
    out_len = 0
    for idx, (a, b) in enumerate(char_ranges):
        pieces.append(text[cursor:a])
        out_len += a - cursor
        new_starts[idx] = out_len
        word = repl.get(idx, text[a:b])
        pieces.append(word)
        out_len += len(word)
        cursor = b
    pieces.append(text[cursor:])
    return "".join(pieces), new_starts


def _containing_sentence(text: str, char_pos: int):
    for a, b in sentence_spans(text):
        if a <= char_pos < b:
            return text[a:b], char_pos - a
    return text, char_pos


def _word_index_at(sentence: str, rel_pos: int):
    words = []
    target = None
    for i, m in enumerate(_WORD_RE.finditer(sentence)):
        words.append(m.group(0))
        if m.start() <= rel_pos < m.end():
            target = i
    return words, target


def _match_case(original: str, candidate: str) -> str:
    if original.isupper() and len(original) > 1:
        return candidate.upper()
    if original[:1].isupper() and original[1:].islower():
        return candidate[:1].upper() + candidate[1:]
    if original.islower():
        return candidate.lower()
    return candidate


def rank_word_importance(doc: Document, backend, tokenizer: Tokenizer,
                         stopwords: Optional[StopWordList] = None,
                         mode: ScoringMode = ScoringMode.CAUSAL,
                         window: int = DEFAULT_WINDOW) -> list:
    """Words ordered by how confidently the LM predicts them: ascending rank of
    the first sub-token, then descending probability, then span index. Stop
    words are excluded."""
    stopwords = stopwords or StopWordList.default()
    seq = truncate_to_window(tokenizer.tokenize(doc.text), window)
    return _rank_importance(seq, backend, stopwords, mode)


def _rank_importance(seq: TokenSeq, backend, stopwords: StopWordList,
                     mode: ScoringMode, exclude=()) -> list:
    if len(seq) == 0:
        return []
    scores = backend.score_tokens(seq, mode)
    entries = []
    for idx, span in enumerate(seq.word_spans):
        if idx in exclude or span.word in stopwords:
            continue
        first = scores[span.start]
        entries.append((idx, first.prob, first.rank))
    entries.sort(key=lambda e: (e[2], -e[1], e[0]))
    return entries


def find_replacement(doc: Document, span_index: int, backend,
                     store: EmbeddingStore, encoder: SentenceEncoder,
                     cfg: AttackConfig, tokenizer: Tokenizer,
                     lexicon: Optional[dict] = None,
                     window: int = DEFAULT_WINDOW,
                     _state=None) -> Optional[Replacement]:
    """Run the four-gate synonym pipeline for one word span.

    Returns None when no candidate survives every gate; that is a skip, not an
    error. ``_state`` carries (seq, char_ranges, accepted-replacements) when
    called from an attack loop so prior substitutions are visible to the
    sentence-similarity gate.
    """
    if _state is None:
        seq = truncate_to_window(tokenizer.tokenize(doc.text), window)
        state = (seq, span_char_offsets(seq), {})
    else:
        state = _state
    seq, char_ranges, accepted = state
    if not (0 <= span_index < len(seq.word_spans)):
        raise AttackError(f"span index {span_index} out of range")
    original = accepted.get(span_index, seq.word_spans[span_index].word)

    # (1) nearest synonyms in counter-fitted embedding space
    query = original if original in store else original.lower()
    candidates = nearest_synonyms(query, store, cfg.synonym_pool, cfg.min_word_cosine)
    if not candidates:
        return None

    base_text = seq.text()
    current_text, current_starts = _splice(base_text, char_ranges, accepted)
    sentence, rel = _containing_sentence(current_text, current_starts[span_index])
    words, word_idx = _word_index_at(sentence, rel)
    if word_idx is None:
        return None
    original_tag = pos_tag(words, lexicon)[word_idx]

    survivors = []
    for cand, cos in candidates:
        cased = _match_case(original, cand)
        # (2) same coarse POS in sentence context
        cand_words = list(words)
        cand_words[word_idx] = cased
        if pos_tag(cand_words, lexicon)[word_idx] != original_tag:
            continue
        # (3) sentence similarity after substitution
        cand_text, cand_starts = _splice(base_text, char_ranges, {**accepted, span_index: cased})
        cand_sentence, _ = _containing_sentence(cand_text, cand_starts[span_index])
        sim = sentence_similarity(sentence, cand_sentence, encoder)
        if sim < cfg.sentence_sim_floor:
            continue
        survivors.append((cased, cos, sim))

    if not survivors:
        return None
    if backend is None:
        # random-baseline path: the caller picks uniformly among survivors
        return survivors

    # (4) lowest LM probability at or under the ceiling; ties keep step-1 order
    best = None
    for cased, cos, sim in survivors:
        prob = backend.candidate_probability(seq, span_index, cased)
        if prob <= cfg.candidate_prob_ceiling and (best is None or prob < best[3]):
            best = (cased, cos, sim, prob)
    if best is None:
        return None
    cased, cos, sim, prob = best
    return Replacement(
        word_span_index=span_index,
        original=original,
        replacement=cased,
        original_prob=None,
        original_rank=None,
        replacement_prob=prob,
        sentence_sim=sim,
        word_cosine=cos,
    )


def _finalize(doc, seq, char_ranges, accepted, replacements, attack_name, cfg,
              backend, encoder, tokenizer, window, with_quality):
    perturbed_text, _ = _splice(doc.text, char_ranges, accepted)
    perturbed = Document(
        id=f"{doc.id}:{attack_name}",
        text=perturbed_text,
        label=Label.SYNTHETIC,
        domain_tag=doc.domain_tag,
        meta={**doc.meta, "attack": attack_name, "attack_N": str(cfg.N),
              "attack_seed": str(cfg.seed)},
    )
    result = AttackResult(original=doc, perturbed=perturbed, replacements=replacements)
    if with_quality and backend is not None:
        result.quality_before = quality_mod.score(doc, backend, encoder, tokenizer, window).aggregate
        result.quality_after = quality_mod.score(perturbed, backend, encoder, tokenizer, window).aggregate
    return result


def dftfooler_perturb(doc: Document, backend, store: EmbeddingStore,
                      encoder: SentenceEncoder, cfg: AttackConfig,
                      tokenizer: Tokenizer,
                      stopwords: Optional[StopWordList] = None,
                      lexicon: Optional[dict] = None,
                      window: int = DEFAULT_WINDOW,
                      with_quality: bool = True) -> AttackResult:
    """Single-pass DFTFooler: walk words in confidence order, replace up to N
    with low-probability synonyms that pass every gate."""
    if doc.label is not Label.SYNTHETIC:
        log.warning("attacking document %r with label %s", doc.id, doc.label.value)
    stopwords = stopwords or StopWordList.default()
    seq = truncate_to_window(tokenizer.tokenize(doc.text), window)
    char_ranges = span_char_offsets(seq)
    accepted = {}
    replacements = []

    importance = _rank_importance(seq, backend, stopwords, cfg.backend_mode)
    pending = list(importance)
    while pending and len(replacements) < cfg.N:
        span_idx, prob, rank = pending.pop(0)
        repl = find_replacement(doc, span_idx, backend, store, encoder, cfg,
                                tokenizer, lexicon, window,
                                _state=(seq, char_ranges, accepted))
        if repl is None:
            continue
        repl = Replacement(**{**repl.__dict__, "original_prob": prob, "original_rank": rank})
        accepted[span_idx] = repl.replacement
        replacements.append(repl)
        if cfg.iterative:
            # re-rank remaining words against the perturbed sequence
            cur_text, _ = _splice(doc.text, char_ranges, accepted)
            cur_seq = truncate_to_window(tokenizer.tokenize(cur_text), window)
            if len(cur_seq.word_spans) == len(seq.word_spans):
                done = set(accepted)
                pending = [e for e in _rank_importance(cur_seq, backend, stopwords,
                                                       cfg.backend_mode, exclude=done)]

    return _finalize(doc, seq, char_ranges, accepted, replacements, "dftfooler",
                     cfg, backend, encoder, tokenizer, window, with_quality)


def random_perturb(doc: Document, store: EmbeddingStore, encoder: SentenceEncoder,
                   cfg: AttackConfig, tokenizer: Tokenizer,
                   stopwords: Optional[StopWordList] = None,
                   lexicon: Optional[dict] = None,
                   window: int = DEFAULT_WINDOW,
                   quality_backend=None) -> AttackResult:
    """Baseline: seeded-shuffled word order, same synonym gates, uniform choice
    among survivors. No language model is consulted."""
    if doc.label is not Label.SYNTHETIC:
        log.warning("attacking document %r with label %s", doc.id, doc.label.value)
    stopwords = stopwords or StopWordList.default()
    seq = truncate_to_window(tokenizer.tokenize(doc.text), window)
    char_ranges = span_char_offsets(seq)
    accepted = {}
    replacements = []
    rng = make_rng(cfg.seed)

    span_order = [i for i, s in enumerate(seq.word_spans) if s.word not in stopwords]
    rng.shuffle(span_order)
    for span_idx in span_order:
        if len(replacements) >= cfg.N:
            break
        survivors = find_replacement(doc, span_idx, None, store, encoder, cfg,
                                     tokenizer, lexicon, window,
                                     _state=(seq, char_ranges, accepted))
        if not survivors:
            continue
        cased, cos, sim = survivors[int(rng.integers(len(survivors)))]
        repl = Replacement(
            word_span_index=span_idx,
            original=seq.word_spans[span_idx].word,
            replacement=cased,
            original_prob=None,
            original_rank=None,
            replacement_prob=None,
            sentence_sim=sim,
            word_cosine=cos,
        )
        accepted[span_idx] = cased
        replacements.append(repl)

    return _finalize(doc, seq, char_ranges, accepted, replacements, "random",
                     cfg, quality_backend, encoder, tokenizer, window,
                     with_quality=quality_backend is not None)
