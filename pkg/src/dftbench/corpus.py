"""Document model, JSONL ingestion, tokenization, sentence splitting and stop words."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence


class Label(Enum):
    REAL = "real"
    SYNTHETIC = "synthetic"
    UNKNOWN = "unknown"


_LABEL_ALIASES = {
    "real": Label.REAL,
    "human": Label.REAL,
    "fake": Label.SYNTHETIC,
    "synthetic": Label.SYNTHETIC,
    "machine": Label.SYNTHETIC,
    "unknown": Label.UNKNOWN,
}

UNK_SURFACE = "<unk>"


class CorpusError(ValueError):
    """Raised for malformed datasets or tokenizer specs."""


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    label: Label = Label.UNKNOWN
    domain_tag: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.text.strip():
            raise CorpusError(f"empty text for document {self.id!r}")


@dataclass(frozen=True)
class Token:
    id: int
    surface: str


@dataclass(frozen=True)
class WordSpan:
    word: str
    start: int  # first token index
    end: int    # one past last token index

    def __post_init__(self):
        if self.end <= self.start:
            raise CorpusError("word span must cover at least one token")


@dataclass(frozen=True)
class TokenSeq:
    tokens: tuple
    word_spans: tuple

    def __len__(self):
        return len(self.tokens)

    def text(self) -> str:
        return "".join(t.surface for t in self.tokens)

    def token_ids(self) -> list:
        return [t.id for t in self.tokens]


def parse_label(value: str) -> Label:
    key = str(value).strip().lower()
    if key not in _LABEL_ALIASES:
        raise CorpusError(f"unrecognized label {value!r}")
    return _LABEL_ALIASES[key]


def load_jsonl(path) -> list:
    """Load one Document per line from a JSON Lines file."""
    path = Path(path)
    docs = []
    seen_ids = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"malformed JSON at line {lineno} of {path.name}: {exc}") from exc
            if "text" not in obj:
                raise CorpusError(f"missing 'text' at line {lineno} of {path.name}")
            doc_id = str(obj.get("id") or f"{path.name}:{lineno}")
            text = obj["text"]
            if not isinstance(text, str) or not text.strip():
                raise CorpusError(f"empty text at line {lineno} (id {doc_id!r})")
            label = parse_label(obj["label"]) if "label" in obj else Label.UNKNOWN
            if doc_id in seen_ids:
                raise CorpusError(f"duplicate document id {doc_id!r} at line {lineno}")
            seen_ids.add(doc_id)
            docs.append(Document(
                id=doc_id,
                text=text,
                label=label,
                domain_tag=str(obj.get("domain", "")),
                meta={str(k): str(v) for k, v in obj.get("meta", {}).items()},
            ))
    return docs


def save_jsonl(docs: Iterable[Document], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps({
                "id": doc.id,
                "text": doc.text,
                "label": doc.label.value,
                "domain": doc.domain_tag,
                "meta": doc.meta,
            }, sort_keys=True) + "\n")


# Matches, exhaustively: runs of whitespace, word-like runs (with internal
# apostrophes/hyphens), or single other characters. Concatenating all matches
# reproduces the input.
_PIECE_RE = re.compile(r"\s+|\w+(?:['’-]\w+)*|[^\w\s]", re.UNICODE)
_WORD_RE = re.compile(r"\w", re.UNICODE)


def _is_word(piece: str) -> bool:
    return bool(_WORD_RE.match(piece))


class Tokenizer:
    """Word-level or greedy-longest-match subword tokenizer over a fixed vocabulary.

    Token ids index into ``vocab``; surfaces not in the vocabulary map to the
    designated unknown token (the ``<unk>`` entry if present, else id 0) while
    keeping their original surface so concatenation stays lossless.
    """

    def __init__(self, kind: str, vocab: Sequence[str]):
        if kind not in ("word", "subword"):
            raise CorpusError(f"unknown tokenizer kind {kind!r}")
        if not vocab:
            raise CorpusError("tokenizer vocabulary is empty")
        self.kind = kind
        self.vocab = list(vocab)
        self._index = {}
        for i, tok in enumerate(self.vocab):
            self._index.setdefault(tok, i)  # duplicates: first occurrence wins
        self.unk_id = self._index.get(UNK_SURFACE, 0)
        if kind == "subword":
            # longest match first, then file order
            self._by_length = sorted(set(self.vocab), key=lambda s: (-len(s), self._index[s]))

    @classmethod
    def from_spec(cls, spec: dict, vocab: Optional[Sequence[str]] = None) -> "Tokenizer":
        kind = spec.get("kind")
        if kind == "word":
            if vocab is None:
                raise CorpusError("word tokenizer requires a backend vocabulary")
            return cls("word", vocab)
        if kind == "subword":
            return cls("subword", spec.get("vocab") or [])
        raise CorpusError(f"unknown tokenizer kind {kind!r}")

    @classmethod
    def from_spec_file(cls, path, vocab: Optional[Sequence[str]] = None) -> "Tokenizer":
        with Path(path).open("r", encoding="utf-8") as fh:
            return cls.from_spec(json.load(fh), vocab=vocab)

    def token_id(self, surface: str) -> int:
        return self._index.get(surface, self.unk_id)

    def _segment_word(self, word: str) -> list:
        """Greedy longest-match segmentation; unmatched chars become unk pieces."""
        pieces = []
        pos = 0
        while pos < len(word):
            match = None
            for cand in self._by_length:
                if word.startswith(cand, pos):
                    match = cand
                    break
            if match is None:
                pieces.append(Token(self.unk_id, word[pos]))
                pos += 1
            else:
                pieces.append(Token(self._index[match], match))
                pos += len(match)
        return pieces

    def tokenize(self, text: str) -> TokenSeq:
        """Whitespace is attached to the surface of the following token (id
        lookup uses the bare piece), so concatenating surfaces reproduces the
        input without whitespace occupying scored positions."""
        tokens = []
        spans = []
        pending_ws = ""
        for piece in _PIECE_RE.findall(text):
            if piece.isspace():
                pending_ws += piece
                continue
            if self.kind == "word" or not _is_word(piece):
                start = len(tokens)
                tokens.append(Token(self.token_id(piece), pending_ws + piece))
                if _is_word(piece):
                    spans.append(WordSpan(piece, start, start + 1))
            else:
                start = len(tokens)
                segments = self._segment_word(piece)
                segments[0] = Token(segments[0].id, pending_ws + segments[0].surface)
                tokens.extend(segments)
                spans.append(WordSpan(piece, start, len(tokens)))
            pending_ws = ""
        if pending_ws:
            if tokens:
                last = tokens[-1]
                tokens[-1] = Token(last.id, last.surface + pending_ws)
            else:
                tokens.append(Token(self.unk_id, pending_ws))
        return TokenSeq(tuple(tokens), tuple(spans))

    def first_token_id(self, word: str) -> int:
        """Id of the first sub-token a word maps to (word itself in word mode)."""
        if self.kind == "word":
            return self.token_id(word)
        pieces = self._segment_word(word)
        return pieces[0].id if pieces else self.unk_id

    def tokenize_document(self, doc: Document) -> TokenSeq:
        return self.tokenize(doc.text)


def truncate_to_window(seq: TokenSeq, window: int) -> TokenSeq:
    """Keep the first ``window`` tokens and the word spans fully inside them."""
    if window < 1:
        raise CorpusError("window must be >= 1")
    if len(seq.tokens) <= window:
        return seq
    tokens = seq.tokens[:window]
    spans = tuple(s for s in seq.word_spans if s.end <= window)
    return TokenSeq(tokens, spans)


_ABBREVIATIONS = {"mr.", "mrs.", "ms.", "dr.", "prof.", "st.", "u.s.", "e.g.", "i.e.", "etc.", "vs.", "fig.", "no."}

_TERMINATORS = ".!?"


def sentence_spans(text: str) -> list:
    """Character ranges of sentences: split after {. ! ?} followed by
    whitespace + capital (or end of text), with an abbreviation guard."""
    spans = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in _TERMINATORS:
            # the word ending at this terminator, including the terminator
            j = i
            while j > start and not text[j - 1].isspace():
                j -= 1
            tail = text[j:i + 1].lower()
            # consume any run of terminators ("?!", "...")
            k = i
            while k + 1 < n and text[k + 1] in _TERMINATORS:
                k += 1
            if tail in _ABBREVIATIONS and k == i:
                i += 1
                continue
            # look ahead: whitespace then capital, or end of text
            m = k + 1
            while m < n and text[m].isspace():
                m += 1
            if m >= n or (m > k + 1 and text[m].isupper()):
                spans.append((start, k + 1))
                start = m
                i = m
                continue
            i = k + 1
            continue
        i += 1
    if start < n and text[start:].strip():
        spans.append((start, n))
    return spans


def split_sentences(text: str) -> list:
    return [text[a:b].strip() for a, b in sentence_spans(text)]


class StopWordList:
    """Immutable case-insensitive stop-word set."""

    def __init__(self, words: Iterable[str]):
        self._words = frozenset(w.strip().lower() for w in words if w.strip())

    def __contains__(self, word: str) -> bool:
        return word.lower() in self._words

    def __len__(self):
        return len(self._words)

    @classmethod
    def from_file(cls, path) -> "StopWordList":
        with Path(path).open("r", encoding="utf-8") as fh:
            return cls(fh.read().split())

    @classmethod
    def default(cls) -> "StopWordList":
        data = resources.files("dftbench.data").joinpath("stopwords.txt").read_text("utf-8")
        return cls(data.split())
