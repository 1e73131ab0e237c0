"""HTTP service exposing token scoring, next-token distributions, candidate
probabilities, text embeddings and seeded generation over a causal and/or
masked transformer LM.

Wire protocol (all JSON):
  GET  /v1/meta      -> {"vocab_size", "mode", "embed_dim"}
  POST /v1/score     {"tokens": [ids], "mode": "causal"|"masked"}
                     -> {"scores": [{"prob", "rank"}, ...]}
  POST /v1/next      {"prefix": [ids]} -> {"probs": [...]}
  POST /v1/cand      {"tokens": [ids], "span": [s, e], "candidate": str}
                     -> {"prob": f}
  POST /v1/embed     {"text": str} -> {"vec": [...]}
  POST /v1/generate  {"priming": [ids], "length": n, "decoding": {...},
                      "seed": n} -> {"tokens": [ids]}
Errors: 400 malformed body, 422 capability mismatch, 500 otherwise, always
{"error": message}.
"""

from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .models import build_bundle

log = logging.getLogger(__name__)

WINDOW = 512


class CapabilityMismatch(Exception):
    pass


class BadRequest(Exception):
    pass


class WordPiece:
    """Minimal greedy-longest-match WordPiece over a fixed vocab list."""

    def __init__(self, vocab: list):
        self.vocab = vocab
        self.index = {w: i for i, w in enumerate(vocab)}
        self.unk_id = self.index.get("[UNK]", 0)
        self.cls_id = self.index.get("[CLS]", 0)
        self.sep_id = self.index.get("[SEP]", 0)
        self.mask_id = self.index.get("[MASK]", 0)
        self._max_len = max(len(w) for w in vocab)

    def word_to_ids(self, word: str) -> list:
        word = word.lower()
        ids = []
        pos = 0
        while pos < len(word):
            end = min(len(word), pos + self._max_len)
            piece_id = None
            while end > pos:
                piece = word[pos:end] if pos == 0 else "##" + word[pos:end]
                if piece in self.index:
                    piece_id = self.index[piece]
                    break
                end -= 1
            if piece_id is None:
                return [self.unk_id]
            ids.append(piece_id)
            pos = end
        return ids or [self.unk_id]

    def text_to_ids(self, text: str) -> list:
        ids = []
        for word in text.split():
            ids.extend(self.word_to_ids(word.strip(".,;:!?\"'()")
                                        or word))
        return ids


def _softmax64(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def _rank_of(probs: np.ndarray, token_id: int) -> int:
    p = probs[token_id]
    return 1 + int(np.sum(probs > p)) + int(np.sum(probs[:token_id] == p))


def _descending_order(probs: np.ndarray) -> np.ndarray:
    return np.lexsort((np.arange(probs.size), -probs))


def _apply_decoding(probs: np.ndarray, decoding: dict) -> np.ndarray:
    strategy = decoding.get("strategy")
    if strategy == "greedy":
        out = np.zeros_like(probs)
        out[_descending_order(probs)[0]] = 1.0
        return out
    if strategy == "top_k":
        k = int(decoding.get("k") or 0)
        if k < 1:
            raise BadRequest("top_k decoding requires k >= 1")
        if k >= probs.size:
            return probs
        keep = _descending_order(probs)[:k]
        out = np.zeros_like(probs)
        out[keep] = probs[keep]
        return out / out.sum()
    if strategy == "top_p":
        p = decoding.get("p")
        if p is None or not 0 < p <= 1:
            raise BadRequest("top_p decoding requires p in (0, 1]")
        order = _descending_order(probs)
        cumulative = np.cumsum(probs[order])
        cutoff = int(np.searchsorted(cumulative, p - 1e-12)) + 1
        if cutoff >= probs.size:
            return probs
        out = np.zeros_like(probs)
        keep = order[:cutoff]
        out[keep] = probs[keep]
        return out / out.sum()
    if strategy == "temperature":
        t = decoding.get("temperature")
        if not t or t <= 0:
            raise BadRequest("temperature decoding requires temperature > 0")
        with np.errstate(divide="ignore"):
            logits = np.log(probs)
        finite = np.isfinite(logits)
        scaled = np.full_like(logits, -np.inf)
        scaled[finite] = logits[finite] / t
        scaled -= scaled[finite].max()
        out = np.where(finite, np.exp(scaled), 0.0)
        return out / out.sum()
    raise BadRequest(f"unknown decoding strategy {strategy!r}")


class Engine:
    """Model pair plus the tokenizer; all torch access funnels through here."""

    def __init__(self, bundle_dir, causal: bool = True, masked: bool = True,
                 device: str = "cpu"):
        import torch
        from transformers import BertForMaskedLM, GPT2LMHeadModel

        if not (causal or masked):
            raise ValueError("at least one model must be enabled")
        self.torch = torch
        self.device = device
        bundle_dir = Path(bundle_dir)
        vocab = (bundle_dir / "vocab.txt").read_text("utf-8").split("\n")
        self.tokenizer = WordPiece([w for w in vocab if w])
        self.vocab_size = len(self.tokenizer.vocab)

        self.causal = None
        self.masked = None
        if causal:
            self.causal = GPT2LMHeadModel.from_pretrained(bundle_dir / "causal")
            self.causal.to(device).eval()
        if masked:
            self.masked = BertForMaskedLM.from_pretrained(bundle_dir / "masked")
            self.masked.to(device).eval()
        embedder = self.masked if self.masked is not None else self.causal
        self.embed_dim = int(embedder.config.hidden_size
                             if hasattr(embedder.config, "hidden_size")
                             else embedder.config.n_embd)

    @property
    def modes(self) -> list:
        out = []
        if self.causal is not None:
            out.append("causal")
        if self.masked is not None:
            out.append("masked")
        return out

    def _check_ids(self, ids):
        for tid in ids:
            if not isinstance(tid, int) or not 0 <= tid < self.vocab_size:
                raise BadRequest(f"token id {tid!r} outside vocabulary "
                                 f"of size {self.vocab_size}")

    def _require_causal(self):
        if self.causal is None:
            raise CapabilityMismatch("causal model not loaded")

    def next_probs(self, prefix: list) -> np.ndarray:
        self._require_causal()
        self._check_ids(prefix)
        torch = self.torch
        ids = [self.tokenizer.cls_id] + list(prefix)[-(WINDOW - 1):]
        with torch.no_grad():
            logits = self.causal(torch.tensor([ids], device=self.device)).logits
        return _softmax64(logits[0, -1].cpu().numpy())

    def score_causal(self, ids: list) -> list:
        self._require_causal()
        self._check_ids(ids)
        torch = self.torch
        inp = [self.tokenizer.cls_id] + list(ids)
        with torch.no_grad():
            logits = self.causal(torch.tensor([inp], device=self.device)).logits
        out = []
        for t, tid in enumerate(ids):
            probs = _softmax64(logits[0, t].cpu().numpy())
            out.append({"prob": float(probs[tid]), "rank": _rank_of(probs, tid)})
        return out

    def score_masked(self, ids: list) -> list:
        if self.masked is None:
            raise CapabilityMismatch("masked model not loaded")
        self._check_ids(ids)
        torch = self.torch
        tok = self.tokenizer
        base = [tok.cls_id] + list(ids) + [tok.sep_id]
        batch = []
        for i in range(len(ids)):
            row = list(base)
            row[i + 1] = tok.mask_id  # one masked position per item
            batch.append(row)
        with torch.no_grad():
            logits = self.masked(torch.tensor(batch, device=self.device)).logits
        out = []
        for i, tid in enumerate(ids):
            probs = _softmax64(logits[i, i + 1].cpu().numpy())
            out.append({"prob": float(probs[tid]), "rank": _rank_of(probs, tid)})
        return out

    def candidate_prob(self, ids: list, span_start: int, candidate: str) -> float:
        cand_ids = self.tokenizer.word_to_ids(candidate)
        probs = self.next_probs(list(ids)[:span_start])
        return float(probs[cand_ids[0]])

    def embed(self, text: str) -> list:
        torch = self.torch
        tok = self.tokenizer
        ids = tok.text_to_ids(text)[:WINDOW - 2] or [tok.unk_id]
        model = self.masked if self.masked is not None else self.causal
        inp = [tok.cls_id] + ids + [tok.sep_id]
        with torch.no_grad():
            out = model(torch.tensor([inp], device=self.device),
                        output_hidden_states=True)
        hidden = out.hidden_states[-1][0].cpu().numpy().astype(np.float64)
        return hidden[1:-1].mean(axis=0).tolist()

    def generate(self, priming: list, length: int, decoding: dict,
                 seed: int) -> list:
        self._require_causal()
        if length < 1:
            raise BadRequest("length must be >= 1")
        rng = np.random.Generator(np.random.PCG64(int(seed)))
        ids = list(priming)
        out = []
        for _ in range(int(length)):
            probs = _apply_decoding(self.next_probs(ids), decoding)
            u = rng.random()
            token = int(min(np.searchsorted(np.cumsum(probs), u, side="right"),
                            probs.size - 1))
            ids.append(token)
            out.append(token)
        return out


def create_app(engine: Engine):
    app = FastAPI(title="dftserve", docs_url=None, redoc_url=None)

    def error(status: int, message: str) -> JSONResponse:
        return JSONResponse({"error": message}, status_code=status)

    async def body_of(request: Request) -> dict:
        try:
            body = await request.json()
        except (json.JSONDecodeError, UnicodeDecodeError):
            raise BadRequest("malformed JSON body")
        if not isinstance(body, dict):
            raise BadRequest("request body must be a JSON object")
        return body

    def field(body: dict, name: str, kind):
        if name not in body:
            raise BadRequest(f"missing field {name!r}")
        value = body[name]
        if kind is list and not isinstance(value, list):
            raise BadRequest(f"field {name!r} must be a list")
        if kind is str and not isinstance(value, str):
            raise BadRequest(f"field {name!r} must be a string")
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise BadRequest(f"field {name!r} must be an integer")
        if kind is dict and not isinstance(value, dict):
            raise BadRequest(f"field {name!r} must be an object")
        return value

    @app.exception_handler(BadRequest)
    async def _bad_request(request, exc):
        return error(400, str(exc))

    @app.exception_handler(CapabilityMismatch)
    async def _capability(request, exc):
        return error(422, str(exc))

    @app.exception_handler(Exception)
    async def _server_error(request, exc):
        log.exception("unhandled error")
        return error(500, str(exc))

    @app.get("/v1/meta")
    async def meta():
        return {"vocab_size": engine.vocab_size, "mode": engine.modes,
                "embed_dim": engine.embed_dim}

    @app.post("/v1/score")
    async def score(request: Request):
        body = await body_of(request)
        tokens = field(body, "tokens", list)
        if not tokens:
            raise BadRequest("tokens must be non-empty")
        if len(tokens) > WINDOW:
            raise BadRequest(f"at most {WINDOW} tokens per request")
        mode = body.get("mode", "causal")
        if mode == "causal":
            return {"scores": engine.score_causal(tokens)}
        if mode == "masked":
            return {"scores": engine.score_masked(tokens)}
        raise BadRequest(f"unknown scoring mode {mode!r}")

    @app.post("/v1/next")
    async def next_dist(request: Request):
        body = await body_of(request)
        prefix = field(body, "prefix", list)
        return {"probs": engine.next_probs(prefix).tolist()}

    @app.post("/v1/cand")
    async def cand(request: Request):
        body = await body_of(request)
        tokens = field(body, "tokens", list)
        span = field(body, "span", list)
        candidate = field(body, "candidate", str)
        if len(span) != 2 or not all(isinstance(v, int) for v in span):
            raise BadRequest("span must be [start, end]")
        start, end = span
        if not (0 <= start < end <= len(tokens)):
            raise BadRequest("span outside the token sequence")
        return {"prob": engine.candidate_prob(tokens, start, candidate)}

    @app.post("/v1/embed")
    async def embed(request: Request):
        body = await body_of(request)
        text = field(body, "text", str)
        if not text.strip():
            raise BadRequest("text must be non-empty")
        return {"vec": engine.embed(text)}

    @app.post("/v1/generate")
    async def generate(request: Request):
        body = await body_of(request)
        priming = field(body, "priming", list)
        length = field(body, "length", int)
        decoding = field(body, "decoding", dict)
        seed = field(body, "seed", int)
        engine._check_ids(priming)
        return {"tokens": engine.generate(priming, length, decoding, seed)}

    return app


def main(argv: Optional[list] = None) -> int:
    import uvicorn

    parser = argparse.ArgumentParser(prog="dftserve")
    parser.add_argument("--bundle", default="bundle",
                        help="model bundle directory (built if missing)")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8301)
    parser.add_argument("--no-causal", action="store_true")
    parser.add_argument("--no-masked", action="store_true")
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args(argv)

    bundle = build_bundle(args.bundle)
    engine = Engine(bundle, causal=not args.no_causal,
                    masked=not args.no_masked, device=args.device)
    uvicorn.run(create_app(engine), host=args.host, port=args.port,
                log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
