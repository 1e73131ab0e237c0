"""Detector-agnostic verdict interface: a remote HTTP adapter for external
classifiers and a local adapter wrapping the rank-bin detector."""

from __future__ import annotations

from dataclasses import dataclass

import requests

from .corpus import Document, Label, Tokenizer, truncate_to_window
from .gltr import GltrModel, extract_features, predict
from .lm_backend import TransportError


@dataclass(frozen=True)
class DetectorVerdict:
    score: float
    label: Label
    detector_id: str

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"verdict score {self.score} outside [0,1]")


class RemoteDetector:
    """Client for POST /v1/classify {"text":...} -> {"score":f,"label":...};
    detector id and threshold come from GET /v1/meta."""

    def __init__(self, base_url: str, timeout: float = 30.0, session=None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = session or requests.Session()
        self._meta = None

    def meta(self) -> dict:
        if self._meta is None:
            url = f"{self.base_url}/v1/meta"
            try:
                resp = self._session.get(url, timeout=self.timeout)
                resp.raise_for_status()
                self._meta = resp.json()
            except (requests.RequestException, ValueError) as exc:
                raise TransportError(f"detector meta at {url} failed: {exc}") from exc
        return self._meta

    @property
    def detector_id(self) -> str:
        return str(self.meta().get("detector_id", self.base_url))

    @property
    def threshold(self) -> float:
        return float(self.meta().get("threshold", 0.5))

    def classify(self, doc: Document) -> DetectorVerdict:
        url = f"{self.base_url}/v1/classify"
        try:
            resp = self._session.post(url, json={"text": doc.text}, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"detector at {url} unreachable: {exc}") from exc
        if resp.status_code >= 400:
            raise TransportError(f"{url} returned {resp.status_code}: {resp.text}")
        try:
            body = resp.json()
            score = float(body["score"])
        except (ValueError, KeyError) as exc:
            raise TransportError(f"{url} returned a malformed verdict") from exc
        if "label" in body:
            label = Label.SYNTHETIC if str(body["label"]).lower() in ("synthetic", "fake", "machine") else Label.REAL
        else:
            label = Label.SYNTHETIC if score >= self.threshold else Label.REAL
        return DetectorVerdict(score=score, label=label, detector_id=self.detector_id)


class GltrDetectorAdapter:
    """Local rank-bin detector behind the same verdict interface."""

    def __init__(self, model: GltrModel, backend, tokenizer: Tokenizer,
                 window: int = 512, detector_id: str = "gltr-local"):
        self.model = model
        self.backend = backend
        self.tokenizer = tokenizer
        self.window = window
        self.detector_id = detector_id

    def classify(self, doc: Document) -> DetectorVerdict:
        seq = truncate_to_window(self.tokenizer.tokenize(doc.text), self.window)
        features = extract_features(self.backend.score_tokens(seq))
        score, label = predict(self.model, features)
        return DetectorVerdict(score=score, label=label, detector_id=self.detector_id)
