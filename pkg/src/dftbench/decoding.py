"""Decoding-strategy filters (greedy, top-k, top-p, temperature), sampling,
and the generation harness with configurable priming length."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .corpus import Document, Label, Tokenizer
from .lm_backend import CapabilityError, Distribution, ScoringMode

END_TOKEN_SURFACE = "<eot>"


class Strategy(Enum):
    GREEDY = "greedy"
    TOP_K = "top_k"
    TOP_P = "top_p"
    TEMPERATURE = "temperature"


@dataclass(frozen=True)
class DecodingConfig:
    strategy: Strategy
    k: Optional[int] = None
    p: Optional[float] = None
    temperature: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.strategy is Strategy.TOP_K and (self.k is None or self.k < 1):
            raise ValueError("top-k decoding requires k >= 1")
        if self.strategy is Strategy.TOP_P and not (self.p is not None and 0 < self.p <= 1):
            raise ValueError("top-p decoding requires p in (0, 1]")
        if self.strategy is Strategy.TEMPERATURE and not (self.temperature and self.temperature > 0):
            raise ValueError("temperature decoding requires temperature > 0")

    @classmethod
    def from_dict(cls, obj: dict) -> "DecodingConfig":
        return cls(
            strategy=Strategy(obj["strategy"]),
            k=obj.get("k"),
            p=obj.get("p"),
            temperature=obj.get("temperature"),
            seed=int(obj.get("seed", 0)),
        )

    def to_dict(self) -> dict:
        out = {"strategy": self.strategy.value, "seed": self.seed}
        if self.strategy is Strategy.TOP_K:
            out["k"] = self.k
        elif self.strategy is Strategy.TOP_P:
            out["p"] = self.p
        elif self.strategy is Strategy.TEMPERATURE:
            out["temperature"] = self.temperature
        return out


@dataclass(frozen=True)
class GenerationSpec:
    priming_token_count: int
    priming_source: Optional[Document]
    target_length: int
    decoding: DecodingConfig

    def __post_init__(self):
        if self.priming_token_count < 0:
            raise ValueError("priming token count must be non-negative")
        if self.target_length < 1:
            raise ValueError("target length must be positive")
        if self.priming_token_count > 0 and self.priming_source is None:
            raise ValueError("priming requires a source document")


def _descending_order(probs: np.ndarray) -> np.ndarray:
    # descending probability, ties by ascending token id
    return np.lexsort((np.arange(probs.size), -probs))


def top_k_filter(dist: Distribution, k: int) -> Distribution:
    if k < 1:
        raise ValueError("k must be >= 1")
    probs = dist.probs
    if k >= probs.size:
        return dist
    keep = _descending_order(probs)[:k]
    out = np.zeros_like(probs)
    out[keep] = probs[keep]
    return Distribution(out / out.sum())


def top_p_filter(dist: Distribution, p: float) -> Distribution:
    if not 0 < p <= 1:
        raise ValueError("p must be in (0, 1]")
    probs = dist.probs
    order = _descending_order(probs)
    cumulative = np.cumsum(probs[order])
    # smallest prefix whose cumulative mass >= p, including the crossing token
    cutoff = int(np.searchsorted(cumulative, p - 1e-12)) + 1
    keep = order[:cutoff]
    if cutoff >= probs.size:
        return dist
    out = np.zeros_like(probs)
    out[keep] = probs[keep]
    return Distribution(out / out.sum())


def apply_temperature(logits, temperature: float) -> Distribution:
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    scaled = logits / temperature
    scaled -= scaled.max()
    exp = np.exp(scaled)
    return Distribution(exp / exp.sum())


def greedy_filter(dist: Distribution) -> Distribution:
    out = np.zeros_like(dist.probs)
    out[_descending_order(dist.probs)[0]] = 1.0
    return Distribution(out)


def apply_decoding(dist: Distribution, config: DecodingConfig) -> Distribution:
    if config.strategy is Strategy.GREEDY:
        return greedy_filter(dist)
    if config.strategy is Strategy.TOP_K:
        return top_k_filter(dist, config.k)
    if config.strategy is Strategy.TOP_P:
        return top_p_filter(dist, config.p)
    # temperature reshaping of a probability vector: logits recovered via log
    with np.errstate(divide="ignore"):
        logits = np.log(dist.probs)
    finite = np.isfinite(logits)
    if not finite.all():
        # zero-probability tokens stay at zero mass for any temperature
        scaled = np.full_like(logits, -np.inf)
        scaled[finite] = logits[finite] / config.temperature
        scaled_max = scaled[finite].max()
        exp = np.where(finite, np.exp(scaled - scaled_max), 0.0)
        return Distribution(exp / exp.sum())
    return apply_temperature(logits, config.temperature)


def make_rng(seed: int) -> np.random.Generator:
    """Portable seeded generator; one independent stream per document."""
    return np.random.Generator(np.random.PCG64(seed))


def sample(dist: Distribution, rng: np.random.Generator) -> int:
    """Inverse-CDF sampling over ascending token id order."""
    u = rng.random()
    cdf = np.cumsum(dist.probs)
    return int(min(np.searchsorted(cdf, u, side="right"), dist.vocab_size - 1))


def generate(backend, spec: GenerationSpec, tokenizer: Tokenizer, doc_id: Optional[str] = None) -> Document:
    """Generate a synthetic Document by repeated next-token sampling.

    Priming tokens are consumed as context only and never emitted in the
    output text. Generation stops at target_length or when the designated
    end token is drawn, whichever comes first.
    """
    if ScoringMode.CAUSAL not in getattr(backend, "modes", (ScoringMode.CAUSAL,)):
        raise CapabilityError("generation requires a causal backend")
    priming_ids = []
    if spec.priming_token_count > 0:
        seq = tokenizer.tokenize(spec.priming_source.text)
        word_tokens = [t for t in seq.tokens if t.surface.strip()]
        if spec.priming_token_count > len(word_tokens):
            raise ValueError(
                f"requested {spec.priming_token_count} priming tokens but source "
                f"{spec.priming_source.id!r} has only {len(word_tokens)}")
        priming_ids = [t.id for t in word_tokens[:spec.priming_token_count]]

    rng = make_rng(spec.decoding.seed)
    ids = list(priming_ids)
    generated = []
    end_id = tokenizer.token_id(END_TOKEN_SURFACE) if END_TOKEN_SURFACE in tokenizer.vocab else None
    for _ in range(spec.target_length):
        dist = backend.next_token_distribution(ids)
        dist = apply_decoding(dist, spec.decoding)
        token_id = sample(dist, rng)
        if end_id is not None and token_id == end_id:
            break
        ids.append(token_id)
        generated.append(token_id)
    if not generated:
        raise ValueError("generation produced no tokens (end token drawn first)")
    text = " ".join(tokenizer.vocab[i] for i in generated)
    meta = {
        "decoding": json.dumps(spec.decoding.to_dict(), sort_keys=True),
        "priming_token_count": str(spec.priming_token_count),
        "priming_source": spec.priming_source.id if spec.priming_source else "",
        "target_length": str(spec.target_length),
        "seed": str(spec.decoding.seed),
    }
    return Document(
        id=doc_id or f"gen-{spec.decoding.strategy.value}-{spec.decoding.seed}",
        text=text,
        label=Label.SYNTHETIC,
        domain_tag="mock",
        meta=meta,
    )
