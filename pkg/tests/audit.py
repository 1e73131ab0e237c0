"""Independent re-verification of attack results from raw inputs.

Replays each recorded replacement in order against the original document and
checks every gate, the stop-word exclusion, the replacement budget, and that
the text diff is confined to the recorded spans.
"""

from __future__ import annotations

from dftbench.attack import (_containing_sentence, _splice, _word_index_at,
                             span_char_offsets)
from dftbench.corpus import truncate_to_window
from dftbench.lexsem import cosine, pos_tag, sentence_similarity


def _store_vec(store, word):
    vec = store.get(word)
    if vec is None:
        vec = store.get(word.lower())
    return vec


def verify_result(result, cfg, store, encoder, backend, tokenizer, stopwords,
                  lexicon=None, window=512):
    """Assert every audit invariant for one AttackResult."""
    doc = result.original
    seq = truncate_to_window(tokenizer.tokenize(doc.text), window)
    char_ranges = span_char_offsets(seq)

    assert len(result.replacements) <= cfg.N

    accepted = {}
    for repl in result.replacements:
        idx = repl.word_span_index
        span = seq.word_spans[idx]
        assert span.word not in stopwords
        assert repl.original == span.word

        # gate 1: embedding-space synonym above the cosine floor
        orig_vec = _store_vec(store, repl.original)
        cand_vec = _store_vec(store, repl.replacement)
        assert orig_vec is not None and cand_vec is not None
        recomputed_cos = cosine(orig_vec, cand_vec)
        assert recomputed_cos >= cfg.min_word_cosine - 1e-12
        assert abs(recomputed_cos - repl.word_cosine) <= 1e-9

        # gate 2: same coarse POS in the sentence as it stood at that step
        current_text, current_starts = _splice(doc.text, char_ranges, accepted)
        sentence, rel = _containing_sentence(current_text, current_starts[idx])
        words, word_idx = _word_index_at(sentence, rel)
        assert word_idx is not None
        cand_words = list(words)
        cand_words[word_idx] = repl.replacement
        tags = pos_tag(words, lexicon)
        cand_tags = pos_tag(cand_words, lexicon)
        assert tags[word_idx] == cand_tags[word_idx]

        # gate 3: sentence similarity above the floor
        cand_text, cand_starts = _splice(doc.text, char_ranges,
                                         {**accepted, idx: repl.replacement})
        cand_sentence, _ = _containing_sentence(cand_text, cand_starts[idx])
        sim = sentence_similarity(sentence, cand_sentence, encoder)
        assert sim >= cfg.sentence_sim_floor - 1e-12
        assert abs(sim - repl.sentence_sim) <= 1e-9

        # gate 4: LM probability at or below the ceiling (LM-guided attack only)
        if repl.replacement_prob is not None:
            prob = backend.candidate_probability(seq, idx, repl.replacement)
            assert prob <= cfg.candidate_prob_ceiling + 1e-12
            assert abs(prob - repl.replacement_prob) <= 1e-9

        accepted[idx] = repl.replacement

    # the diff is confined to the recorded spans
    expected_text, _ = _splice(doc.text, char_ranges, accepted)
    assert result.perturbed.text == expected_text
    replaced = set(accepted)
    for i, (a, b) in enumerate(char_ranges):
        if i not in replaced:
            word = doc.text[a:b]
            new_text, new_starts = _splice(doc.text, char_ranges, accepted)
            assert new_text[new_starts[i]:new_starts[i] + len(word)] == word
