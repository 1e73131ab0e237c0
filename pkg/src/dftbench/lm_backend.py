"""Uniform scoring interface over language models.

Two implementations: a deterministic table-driven mock (unigram + optional
bigram rows) and a remote client speaking the inference-sidecar HTTP protocol.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import requests

from .corpus import Token, TokenSeq, Tokenizer


class BackendError(Exception):
    """Base class for scoring-backend failures."""


class TransportError(BackendError):
    """Remote backend unreachable or returned a malformed response."""


class CapabilityError(BackendError):
    """Operation not supported by the backend's scoring mode."""


class ContractError(BackendError):
    """Inputs violate the backend contract (e.g. token id out of range)."""


class ScoringMode(Enum):
    CAUSAL = "causal"
    MASKED = "masked"


@dataclass(frozen=True)
class Distribution:
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1 or probs.size == 0:
            raise ContractError("distribution must be a non-empty vector")
        if np.any(probs < 0):
            raise ContractError("distribution has negative entries")
        if abs(float(probs.sum()) - 1.0) > 1e-9:
            raise ContractError(f"distribution sums to {probs.sum()}, not 1")

    @property
    def vocab_size(self) -> int:
        return int(self.probs.size)

    def __getitem__(self, token_id: int) -> float:
        return float(self.probs[token_id])


@dataclass(frozen=True)
class TokenScore:
    token: Token
    prob: float
    rank: int


def rank_of(probs: np.ndarray, token_id: int) -> int:
    """1-based rank by descending probability; ties broken by ascending id."""
    p = probs[token_id]
    higher = int(np.sum(probs > p))
    tied_before = int(np.sum(probs[:token_id] == p))
    return 1 + higher + tied_before


class MockModelTable:
    """Deterministic unigram/bigram probability tables over a fixed vocabulary."""

    def __init__(self, vocab: Sequence[str], unigram, bigram: Optional[dict] = None):
        self.vocab = list(vocab)
        self.unigram = unigram if isinstance(unigram, Distribution) else Distribution(np.asarray(unigram))
        if self.unigram.vocab_size != len(self.vocab):
            raise ContractError("unigram length does not match vocab size")
        self.bigram = {}
        for key, dist in (bigram or {}).items():
            dist = dist if isinstance(dist, Distribution) else Distribution(np.asarray(dist))
            if dist.vocab_size != len(self.vocab):
                raise ContractError(f"bigram row {key} has wrong length")
            self.bigram[int(key)] = dist

    @classmethod
    def from_json(cls, path) -> "MockModelTable":
        with Path(path).open("r", encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls(obj["vocab"], np.asarray(obj["unigram"]), obj.get("bigram", {}))

    def to_json(self, path) -> None:
        obj = {
            "vocab": self.vocab,
            "unigram": self.unigram.probs.tolist(),
            "bigram": {str(k): v.probs.tolist() for k, v in self.bigram.items()},
        }
        with Path(path).open("w", encoding="utf-8") as fh:
            json.dump(obj, fh)

    def row(self, prev_token_id: Optional[int]) -> Distribution:
        if prev_token_id is None:
            return self.unigram
        return self.bigram.get(prev_token_id, self.unigram)


class MockBackend:
    """Table-driven scoring backend. Supports both modes; in MASKED mode the
    mock still conditions on the left neighbor only (a bigram table has no
    right context), which keeps it a valid deterministic stand-in."""

    def __init__(self, table: MockModelTable, tokenizer: Optional[Tokenizer] = None):
        self.table = table
        self.tokenizer = tokenizer or Tokenizer("word", table.vocab)
        self.modes = (ScoringMode.CAUSAL, ScoringMode.MASKED)

    @property
    def vocab_size(self) -> int:
        return len(self.table.vocab)

    def _check_ids(self, ids):
        for tid in ids:
            if not (0 <= tid < self.vocab_size):
                raise ContractError(f"token id {tid} outside vocabulary of size {self.vocab_size}")

    def score_tokens(self, seq: TokenSeq, mode: ScoringMode = ScoringMode.CAUSAL) -> list:
        if len(seq) == 0:
            raise ContractError("cannot score an empty token sequence")
        ids = seq.token_ids()
        self._check_ids(ids)
        scores = []
        for t, tok in enumerate(seq.tokens):
            dist = self.table.row(ids[t - 1] if t > 0 else None)
            scores.append(TokenScore(tok, dist[tok.id], rank_of(dist.probs, tok.id)))
        return scores

    def next_token_distribution(self, prefix: TokenSeq | Sequence[int]) -> Distribution:
        ids = prefix.token_ids() if isinstance(prefix, TokenSeq) else list(prefix)
        self._check_ids(ids)
        return self.table.row(ids[-1] if ids else None)

    def candidate_probability(self, seq: TokenSeq, word_span_index: int, candidate: str) -> float:
        if not (0 <= word_span_index < len(seq.word_spans)):
            raise ContractError(f"word span index {word_span_index} out of range")
        span = seq.word_spans[word_span_index]
        cand_id = self.tokenizer.first_token_id(candidate)
        prefix_ids = seq.token_ids()[:span.start]
        dist = self.next_token_distribution(prefix_ids)
        return dist[cand_id]


class RemoteBackend:
    """HTTP client for the inference sidecar.

    Server-computed ranks are authoritative; this client never recomputes them.
    """

    def __init__(self, base_url: str, timeout: float = 30.0, session=None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = session or requests.Session()
        self._meta = None

    def _request(self, method: str, path: str, payload: Optional[dict] = None) -> dict:
        url = f"{self.base_url}{path}"
        try:
            if method == "GET":
                resp = self._session.get(url, timeout=self.timeout)
            else:
                resp = self._session.post(url, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"backend at {url} unreachable: {exc}") from exc
        if resp.status_code >= 400:
            try:
                message = resp.json().get("error", resp.text)
            except ValueError:
                message = resp.text
            if resp.status_code == 422:
                raise CapabilityError(f"{url}: {message}")
            raise TransportError(f"{url} returned {resp.status_code}: {message}")
        try:
            return resp.json()
        except ValueError as exc:
            raise TransportError(f"{url} returned a non-JSON body") from exc

    def meta(self) -> dict:
        if self._meta is None:
            self._meta = self._request("GET", "/v1/meta")
        return self._meta

    @property
    def vocab_size(self) -> int:
        return int(self.meta()["vocab_size"])

    @property
    def modes(self):
        return tuple(ScoringMode(m) for m in self.meta()["mode"])

    def score_tokens(self, seq: TokenSeq, mode: ScoringMode = ScoringMode.CAUSAL) -> list:
        if len(seq) == 0:
            raise ContractError("cannot score an empty token sequence")
        if mode not in self.modes:
            raise CapabilityError(f"backend does not support {mode.value} scoring")
        body = self._request("POST", "/v1/score", {"tokens": seq.token_ids(), "mode": mode.value})
        scores = body.get("scores")
        if not isinstance(scores, list) or len(scores) != len(seq):
            raise TransportError(f"{self.base_url}/v1/score: malformed response shape")
        return [TokenScore(tok, float(s["prob"]), int(s["rank"]))
                for tok, s in zip(seq.tokens, scores)]

    def next_token_distribution(self, prefix: TokenSeq | Sequence[int]) -> Distribution:
        if ScoringMode.CAUSAL not in self.modes:
            raise CapabilityError("next-token distribution requires a causal backend")
        ids = prefix.token_ids() if isinstance(prefix, TokenSeq) else list(prefix)
        body = self._request("POST", "/v1/next", {"prefix": ids})
        return Distribution(np.asarray(body["probs"], dtype=np.float64))

    def candidate_probability(self, seq: TokenSeq, word_span_index: int, candidate: str) -> float:
        span = seq.word_spans[word_span_index]
        body = self._request("POST", "/v1/cand", {
            "tokens": seq.token_ids(),
            "span": [span.start, span.end],
            "candidate": candidate,
        })
        return float(body["prob"])

    def embed(self, text: str) -> np.ndarray:
        body = self._request("POST", "/v1/embed", {"text": text})
        return np.asarray(body["vec"], dtype=np.float64)

    def generate(self, priming_ids: Sequence[int], length: int, decoding: dict, seed: int) -> list:
        body = self._request("POST", "/v1/generate", {
            "priming": list(priming_ids),
            "length": int(length),
            "decoding": decoding,
            "seed": int(seed),
        })
        return [int(t) for t in body["tokens"]]
