"""In-process HTTP stubs: an inference server backed by a MockModelTable
(speaking the same wire protocol as the real sidecar) and a detector stub."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from dftbench.corpus import TokenSeq, Token
from dftbench.decoding import DecodingConfig, apply_decoding, make_rng, sample
from dftbench.lm_backend import MockBackend, MockModelTable, ScoringMode


class _InferenceHandler(BaseHTTPRequestHandler):
    backend: MockBackend = None
    embed_dim = 8

    def log_message(self, fmt, *args):
        pass

    def _send(self, status: int, payload: dict):
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_json(self):
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        return json.loads(raw)

    def _seq(self, ids):
        vocab = self.backend.table.vocab
        tokens = tuple(Token(i, vocab[i]) for i in ids)
        return TokenSeq(tokens, ())

    def do_GET(self):
        if self.path == "/v1/meta":
            self._send(200, {
                "vocab_size": self.backend.vocab_size,
                "mode": ["causal", "masked"],
                "embed_dim": self.embed_dim,
            })
        else:
            self._send(404, {"error": f"no such endpoint {self.path}"})

    def do_POST(self):
        try:
            body = self._read_json()
        except (ValueError, KeyError):
            self._send(400, {"error": "malformed JSON body"})
            return
        try:
            if self.path == "/v1/score":
                seq = self._seq(body["tokens"])
                mode = ScoringMode(body.get("mode", "causal"))
                scores = self.backend.score_tokens(seq, mode)
                self._send(200, {"scores": [{"prob": s.prob, "rank": s.rank} for s in scores]})
            elif self.path == "/v1/next":
                dist = self.backend.next_token_distribution(list(body["prefix"]))
                self._send(200, {"probs": dist.probs.tolist()})
            elif self.path == "/v1/cand":
                ids = list(body["tokens"])
                start = int(body["span"][0])
                dist = self.backend.next_token_distribution(ids[:start])
                cand_id = self.backend.tokenizer.first_token_id(body["candidate"])
                self._send(200, {"prob": dist[cand_id]})
            elif self.path == "/v1/embed":
                # deterministic hash-bucket embedding, adequate for wire tests
                vec = np.zeros(self.embed_dim)
                for word in body["text"].split():
                    vec[hash(word) % self.embed_dim] += 1.0
                norm = np.linalg.norm(vec)
                if norm:
                    vec /= norm
                self._send(200, {"vec": vec.tolist()})
            elif self.path == "/v1/generate":
                ids = list(body["priming"])
                dec = dict(body["decoding"])
                dec["seed"] = int(body["seed"])
                config = DecodingConfig.from_dict(dec)
                rng = make_rng(config.seed)
                out = []
                for _ in range(int(body["length"])):
                    dist = self.backend.next_token_distribution(ids)
                    token = sample(apply_decoding(dist, config), rng)
                    ids.append(token)
                    out.append(token)
                self._send(200, {"tokens": out})
            else:
                self._send(404, {"error": f"no such endpoint {self.path}"})
        except (KeyError, IndexError, ValueError) as exc:
            self._send(400, {"error": str(exc)})


class _DetectorHandler(BaseHTTPRequestHandler):
    classify_fn = None
    detector_id = "stub-detector"
    threshold = 0.5
    include_label = True
    counter = None

    def log_message(self, fmt, *args):
        pass

    def _send(self, status, payload):
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/v1/meta":
            self._send(200, {"detector_id": self.detector_id, "threshold": self.threshold})
        else:
            self._send(404, {"error": "not found"})

    def do_POST(self):
        if self.path != "/v1/classify":
            self._send(404, {"error": "not found"})
            return
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length))
        if self.counter is not None:
            self.counter["calls"] += 1
        score = float(self.classify_fn(body["text"]))
        payload = {"score": score}
        if self.include_label:
            payload["label"] = "synthetic" if score >= self.threshold else "real"
        self._send(200, payload)


class StubServer:
    def __init__(self, handler_cls):
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), handler_cls)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


def inference_stub(table: MockModelTable) -> StubServer:
    handler = type("Handler", (_InferenceHandler,), {"backend": MockBackend(table)})
    return StubServer(handler)


def detector_stub(classify_fn, detector_id="stub-detector", threshold=0.5,
                  include_label=True, counter=None) -> StubServer:
    handler = type("Handler", (_DetectorHandler,), {
        "classify_fn": staticmethod(classify_fn),
        "detector_id": detector_id,
        "threshold": threshold,
        "include_label": include_label,
        "counter": counter,
    })
    return StubServer(handler)
