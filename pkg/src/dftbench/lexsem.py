"""Lexical-semantic services: counter-fitted embedding store, exact cosine
k-NN synonym candidates, rule-based POS tagging, and sentence similarity."""

from __future__ import annotations

import logging
import re
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

_WORD_RE = re.compile(r"\w+(?:['’-]\w+)*", re.UNICODE)

DEFAULT_MAX_CANDIDATES = 50
DEFAULT_MIN_COSINE = 0.7


class LexsemError(ValueError):
    pass


class PosTag(Enum):
    NOUN = "NOUN"
    VERB = "VERB"
    ADJ = "ADJ"
    ADV = "ADV"
    OTHER = "OTHER"


class EmbeddingStore:
    """Word -> dense vector map with cached norms; zero vectors rejected."""

    def __init__(self, vectors: dict):
        if not vectors:
            raise LexsemError("embedding store is empty")
        dims = {len(v) for v in vectors.values()}
        if len(dims) != 1:
            raise LexsemError(f"inconsistent embedding dimensions: {sorted(dims)}")
        self.dim = dims.pop()
        self.vectors = {}
        self.norm_cache = {}
        for word, vec in vectors.items():
            arr = np.asarray(vec, dtype=np.float64)
            norm = float(np.linalg.norm(arr))
            if norm == 0.0:
                raise LexsemError(f"zero vector for word {word!r}")
            self.vectors[word] = arr
            self.norm_cache[word] = norm
        self._words = sorted(self.vectors)
        self._matrix = np.vstack([self.vectors[w] for w in self._words])
        self._norms = np.array([self.norm_cache[w] for w in self._words])

    def __contains__(self, word: str) -> bool:
        return word in self.vectors

    def __len__(self):
        return len(self.vectors)

    def get(self, word: str) -> Optional[np.ndarray]:
        return self.vectors.get(word)

    @classmethod
    def load(cls, path) -> "EmbeddingStore":
        """Text format: one line per word, `word v1 v2 ... vd`.
        Duplicate words: first occurrence wins (with a warning)."""
        vectors = {}
        with Path(path).open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts:
                    continue
                word, values = parts[0], parts[1:]
                if not values:
                    raise LexsemError(f"no vector values at line {lineno}")
                if word in vectors:
                    log.warning("duplicate embedding for %r at line %d ignored", word, lineno)
                    continue
                vectors[word] = [float(v) for v in values]
        return cls(vectors)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def nearest_synonyms(word: str, store: EmbeddingStore,
                     max_candidates: int = DEFAULT_MAX_CANDIDATES,
                     min_cosine: float = DEFAULT_MIN_COSINE) -> list:
    """Exact brute-force cosine neighbors, sorted by descending cosine then
    lexicographic word; the query word and its case-variants are excluded."""
    vec = store.get(word)
    if vec is None:
        return []
    sims = store._matrix @ vec / (store._norms * float(np.linalg.norm(vec)))
    query_cf = word.casefold()
    candidates = [
        (w, float(s)) for w, s in zip(store._words, sims)
        if w.casefold() != query_cf and s >= min_cosine
    ]
    candidates.sort(key=lambda ws: (-ws[1], ws[0]))
    return candidates[:max_candidates]


_SUFFIX_RULES = (
    ("ly", PosTag.ADV),
    ("ing", PosTag.VERB),
    ("ed", PosTag.VERB),
    ("ous", PosTag.ADJ),
    ("ful", PosTag.ADJ),
    ("ive", PosTag.ADJ),
)

_default_lexicon = None


def load_lexicon(path=None) -> dict:
    """`word TAB tag` lines -> dict; the shipped lexicon if no path given."""
    if path is None:
        text = resources.files("dftbench.data").joinpath("pos_lexicon.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    lexicon = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        word, _, tag = line.partition("\t")
        lexicon[word.strip().lower()] = PosTag(tag.strip())
    return lexicon


def default_lexicon() -> dict:
    global _default_lexicon
    if _default_lexicon is None:
        _default_lexicon = load_lexicon()
    return _default_lexicon


def pos_tag(words: Sequence[str], lexicon: Optional[dict] = None) -> list:
    """Deterministic coarse tagging: lexicon first, then suffix rules, then
    NOUN for capitalized mid-sentence words, else OTHER."""
    lexicon = default_lexicon() if lexicon is None else lexicon
    tags = []
    for i, word in enumerate(words):
        tag = lexicon.get(word.lower())
        if tag is None:
            lower = word.lower()
            for suffix, rule_tag in _SUFFIX_RULES:
                if lower.endswith(suffix) and len(lower) > len(suffix):
                    tag = rule_tag
                    break
        if tag is None and i > 0 and word[:1].isupper():
            tag = PosTag.NOUN
        tags.append(tag or PosTag.OTHER)
    return tags


class SentenceEncoder:
    """Fixed-dimension sentence vectors: mean of in-vocabulary word embeddings
    (desk-scale default) or the remote /v1/embed endpoint."""

    def __init__(self, store: Optional[EmbeddingStore] = None, backend=None):
        if (store is None) == (backend is None):
            raise LexsemError("configure exactly one of store / remote backend")
        self.store = store
        self.backend = backend
        self.kind = "mean_embedding" if store is not None else "remote"

    def encode(self, text: str) -> np.ndarray:
        if self.backend is not None:
            return self.backend.embed(text)
        vecs = []
        for word in _WORD_RE.findall(text):
            vec = self.store.get(word)
            if vec is None:
                vec = self.store.get(word.lower())
            if vec is not None:
                vecs.append(vec)
        if not vecs:
            return np.zeros(self.store.dim)
        return np.mean(vecs, axis=0)


def sentence_similarity(a: str, b: str, encoder: SentenceEncoder) -> float:
    """Cosine of encoder vectors; an all-out-of-vocabulary sentence encodes to
    the zero vector, whose similarity is defined as 0."""
    if not a or not b:
        raise LexsemError("sentences must be non-empty")
    return cosine(encoder.encode(a), encoder.encode(b))
