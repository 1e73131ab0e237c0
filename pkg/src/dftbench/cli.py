"""Command-line harness: generate -> detect -> attack -> evaluate pipelines
over JSON configs, with deterministic seeded artifacts."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import attack as attack_mod
from . import evalkit, gltr
from .corpus import (CorpusError, Document, Label, StopWordList, Tokenizer,
                     load_jsonl, save_jsonl, truncate_to_window)
from .decoding import DecodingConfig, GenerationSpec, generate
from .lexsem import EmbeddingStore, SentenceEncoder, load_lexicon
from .lm_backend import BackendError, MockBackend, MockModelTable, RemoteBackend, ScoringMode
from .remote_detector import GltrDetectorAdapter, RemoteDetector

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_USAGE = 64

SUBCOMMANDS = ("ingest", "generate", "train-gltr", "detect", "attack",
               "evaluate", "dist-shift", "report")


class ConfigError(ValueError):
    pass


def _doc_seed(*entropy) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


class Experiment:
    """Resolved configuration plus lazily-built shared components."""

    def __init__(self, config: dict, output_dir: Path):
        self.config = config
        self.output_dir = output_dir
        self.seed = int(config.get("seed", 0))
        self.window = int(config.get("window", 512))
        self._backend = None
        self._tokenizer = None

    @classmethod
    def from_args(cls, args) -> "Experiment":
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            config = json.loads(path.read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid config JSON: {exc}") from exc
        for assignment in args.set or []:
            key, _, value = assignment.partition("=")
            if not _:
                raise ConfigError(f"--set expects key=value, got {assignment!r}")
            node = config
            parts = key.split(".")
            for part in parts[:-1]:
                node = node.setdefault(part, {})
            try:
                node[parts[-1]] = json.loads(value)
            except json.JSONDecodeError:
                node[parts[-1]] = value
        if args.seed is not None:
            config["seed"] = args.seed
        env_url = os.environ.get("DFTBENCH_BACKEND_URL")
        if env_url:
            config["backend"] = {"url": env_url}
        out = Path(args.output_dir or config.get("output_dir", "out"))
        base = path.parent
        exp = cls(config, out)
        exp.base_dir = base
        return exp

    def _path(self, value) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def dataset(self, key: str):
        datasets = self.config.get("dataset") or {}
        if key not in datasets:
            raise ConfigError(f"config has no dataset {key!r}")
        path = self._path(datasets[key])
        if not path.exists():
            raise ConfigError(f"dataset file not found: {path}")
        docs = load_jsonl(path)
        if not docs:
            raise ConfigError("empty dataset")
        return docs

    @property
    def backend(self):
        if self._backend is None:
            spec = self.config.get("backend") or {}
            if "url" in spec:
                self._backend = RemoteBackend(spec["url"])
            elif "mock_table" in spec:
                table_path = self._path(spec["mock_table"])
                if not table_path.exists():
                    raise ConfigError(f"mock table not found: {table_path}")
                self._backend = MockBackend(MockModelTable.from_json(table_path))
            else:
                raise ConfigError("config.backend needs 'url' or 'mock_table'")
        return self._backend

    @property
    def tokenizer(self) -> Tokenizer:
        if self._tokenizer is None:
            spec_path = self.config.get("tokenizer")
            vocab = self.backend.table.vocab if isinstance(self.backend, MockBackend) else None
            if spec_path:
                self._tokenizer = Tokenizer.from_spec_file(self._path(spec_path), vocab=vocab)
            elif vocab is not None:
                self._tokenizer = Tokenizer("word", vocab)
            else:
                raise ConfigError("config.tokenizer required with a remote backend")
        return self._tokenizer

    @property
    def stopwords(self) -> StopWordList:
        path = self.config.get("stopwords")
        return StopWordList.from_file(self._path(path)) if path else StopWordList.default()

    @property
    def embeddings(self) -> EmbeddingStore:
        path = self.config.get("embeddings")
        if not path:
            raise ConfigError("config.embeddings required for this subcommand")
        return EmbeddingStore.load(self._path(path))

    @property
    def lexicon(self):
        path = self.config.get("lexicon")
        return load_lexicon(self._path(path)) if path else None

    def encoder(self) -> SentenceEncoder:
        if self.config.get("encoder") == "remote":
            return SentenceEncoder(backend=self.backend)
        return SentenceEncoder(store=self.embeddings)

    def detector(self):
        spec = self.config.get("detector") or {}
        if "url" in spec:
            return RemoteDetector(spec["url"])
        if "gltr_model" in spec:
            model_path = self._path(spec["gltr_model"])
            if not model_path.exists():
                raise ConfigError(f"gltr model not found: {model_path}")
            return GltrDetectorAdapter(gltr.GltrModel.load(model_path),
                                       self.backend, self.tokenizer, self.window)
        raise ConfigError("config.detector needs 'url' or 'gltr_model'")

    def provenance(self, command: str) -> dict:
        config = {k: v for k, v in self.config.items() if k != "output_dir"}
        return {"command": command, "seed": self.seed, "config": config}

    def write_json(self, name: str, payload: dict, command: str) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        payload = dict(payload)
        payload["provenance"] = self.provenance(command)
        path = self.output_dir / name
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", "utf-8")
        return path

    def write_jsonl(self, name: str, rows, command: str) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / name
        with path.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps({"_provenance": self.provenance(command)}, sort_keys=True) + "\n")
            for row in rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        return path


def read_jsonl_rows(path) -> list:
    rows = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if "_provenance" in obj:
                continue
            rows.append(obj)
    return rows


def _features_for(docs, exp: Experiment):
    feats = []
    for doc in docs:
        seq = truncate_to_window(exp.tokenizer.tokenize(doc.text), exp.window)
        feats.append(gltr.extract_features(exp.backend.score_tokens(seq)))
    return feats


def cmd_ingest(exp: Experiment, args) -> int:
    stats = {}
    for key in sorted((exp.config.get("dataset") or {}).keys()):
        docs = exp.dataset(key)
        labels = {}
        for d in docs:
            labels[d.label.value] = labels.get(d.label.value, 0) + 1
        stats[key] = {
            "documents": len(docs),
            "labels": labels,
            "mean_chars": sum(len(d.text) for d in docs) / len(docs),
        }
    if not stats:
        raise ConfigError("config defines no datasets")
    exp.write_json("ingest_stats.json", {"datasets": stats}, "ingest")
    return EXIT_OK


def cmd_generate(exp: Experiment, args) -> int:
    gen = exp.config.get("generate") or {}
    sweep = gen.get("sweep")
    if not sweep:
        raise ConfigError("config.generate.sweep must list decoding configs")
    count = int(gen.get("count", 10))
    target_length = int(gen.get("target_length", 50))
    priming_n = int(gen.get("priming_token_count", 0))
    priming_docs = exp.dataset(gen["priming_dataset"]) if priming_n > 0 else None
    for cfg_idx, decoding_obj in enumerate(sweep):
        docs = []
        for i in range(count):
            dec = dict(decoding_obj)
            dec["seed"] = _doc_seed(exp.seed, cfg_idx, i)
            source = priming_docs[i % len(priming_docs)] if priming_docs else None
            spec = GenerationSpec(priming_token_count=priming_n,
                                  priming_source=source,
                                  target_length=target_length,
                                  decoding=DecodingConfig.from_dict(dec))
            docs.append(generate(exp.backend, spec, exp.tokenizer,
                                 doc_id=f"gen-{cfg_idx}-{i}"))
        exp.output_dir.mkdir(parents=True, exist_ok=True)
        save_jsonl(docs, exp.output_dir / f"synthetic_{cfg_idx}.jsonl")
    exp.write_json("generate_manifest.json",
                   {"sweeps": len(sweep), "count": count}, "generate")
    return EXIT_OK


def cmd_train_gltr(exp: Experiment, args) -> int:
    real = exp.dataset("real")
    synthetic = exp.dataset("synthetic")
    docs = real + synthetic
    labels = [0] * len(real) + [1] * len(synthetic)
    grid_cfg = exp.config.get("grid") or {}
    grid = gltr.TrainingGrid(
        C_values=tuple(grid_cfg.get("C_values", (100.0, 10.0, 1.0, 0.1, 0.01))),
        folds=int(grid_cfg.get("folds", 5)),
    )
    model = gltr.train(_features_for(docs, exp), labels, grid, seed=exp.seed)
    exp.output_dir.mkdir(parents=True, exist_ok=True)
    model.save(exp.output_dir / "gltr_model.json")
    exp.write_json("train_report.json", {
        "chosen_C": model.chosen_C, "cv_score": model.cv_score,
        "examples": len(docs),
    }, "train-gltr")
    return EXIT_OK


def cmd_detect(exp: Experiment, args) -> int:
    docs = exp.dataset(args.dataset)
    detector = exp.detector()
    rows = []
    for doc in docs:
        verdict = detector.classify(doc)
        rows.append({"id": doc.id, "score": verdict.score,
                     "label": verdict.label.value,
                     "true_label": doc.label.value,
                     "detector_id": verdict.detector_id})
    exp.write_jsonl("verdicts.jsonl", rows, "detect")
    return EXIT_OK


def cmd_attack(exp: Experiment, args) -> int:
    docs = exp.dataset(args.dataset)
    atk_cfg = exp.config.get("attack") or {}
    cfg = attack_mod.AttackConfig(
        N=int(atk_cfg.get("N", 10)),
        candidate_prob_ceiling=float(atk_cfg.get("candidate_prob_ceiling", 0.01)),
        sentence_sim_floor=float(atk_cfg.get("sentence_sim_floor", 0.7)),
        backend_mode=ScoringMode(atk_cfg.get("mode", "causal")),
        seed=int(atk_cfg.get("seed", exp.seed)),
    )
    store = exp.embeddings
    encoder = exp.encoder()
    detector = exp.detector() if exp.config.get("detector") else None
    results = []
    for doc in docs:
        if args.scheme == "dftfooler":
            res = attack_mod.dftfooler_perturb(
                doc, exp.backend, store, encoder, cfg, exp.tokenizer,
                exp.stopwords, exp.lexicon, exp.window)
        else:
            res = attack_mod.random_perturb(
                doc, store, encoder, cfg, exp.tokenizer,
                exp.stopwords, exp.lexicon, exp.window,
                quality_backend=exp.backend)
        if detector is not None:
            # evaluation path: verdicts attached after construction only
            original_verdict = detector.classify(doc)
            if original_verdict.label is Label.SYNTHETIC:
                res.evaded = detector.classify(res.perturbed).label is Label.REAL
        results.append(res)
    exp.write_jsonl(f"attack_{args.scheme}.jsonl",
                    [r.to_dict() for r in results], "attack")
    return EXIT_OK


def cmd_evaluate(exp: Experiment, args) -> int:
    rows = read_jsonl_rows(exp.output_dir / "verdicts.jsonl"
                           if args.verdicts is None else args.verdicts)
    if not rows:
        raise ConfigError("no verdicts to evaluate")
    preds = [1 if r["label"] == "synthetic" else 0 for r in rows]
    labels = []
    for r in rows:
        if r.get("true_label") in ("synthetic", "real"):
            labels.append(1 if r["true_label"] == "synthetic" else 0)
        else:
            raise ConfigError(f"verdict for {r['id']!r} lacks a true label")
    precision, recall, f1 = evalkit.confusion_metrics(preds, labels)
    scores = [float(r["score"]) for r in rows]
    auc_value = evalkit.auc(scores, labels) if 0 < sum(labels) < len(labels) else None
    report = evalkit.EvalReport(f1=f1, precision=precision, recall=recall, auc=auc_value)
    if args.baseline:
        base = evalkit.EvalReport.load(args.baseline)
        report.delta_f1 = evalkit.delta(f1 * 100, base.f1 * 100)
        report.delta_recall = evalkit.delta(recall * 100, base.recall * 100)
    if args.attack_results:
        atk_rows = read_jsonl_rows(args.attack_results)
        verdicted = [r for r in atk_rows if r.get("evaded") is not None]
        if verdicted:
            report.evasion_rate = sum(bool(r["evaded"]) for r in verdicted) / len(verdicted)
        qb = [r["quality_before"] for r in atk_rows if r.get("quality_before") is not None]
        qa = [r["quality_after"] for r in atk_rows if r.get("quality_after") is not None]
        if qb:
            report.quality_before = float(np.mean(qb))
        if qa:
            report.quality_after = float(np.mean(qa))
    payload = report.to_dict()
    exp.write_json("report.json", payload, "evaluate")
    exp.output_dir.mkdir(parents=True, exist_ok=True)
    (exp.output_dir / "report.csv").write_text(
        report.csv_header() + "\n" + report.to_csv_row() + "\n", "utf-8")
    return EXIT_OK


def cmd_dist_shift(exp: Experiment, args) -> int:
    keys = args.datasets or sorted((exp.config.get("dataset") or {}).keys())
    if len(keys) < 2:
        raise ConfigError("dist-shift needs at least two datasets")
    feats = {k: np.vstack([f.fractions for f in _features_for(exp.dataset(k), exp)])
             for k in keys}
    table = {}
    for a in keys:
        for b in keys:
            table[f"{a}|{b}"] = evalkit.avg_linkage_distance(feats[a], feats[b])
    exp.write_json("dist_shift.json", {"datasets": keys, "distances": table}, "dist-shift")
    return EXIT_OK


def cmd_report(exp: Experiment, args) -> int:
    merged = {}
    for path in args.reports or []:
        merged[Path(path).stem + ":" + Path(path).parent.name] = json.loads(Path(path).read_text("utf-8"))
    lines = ["value,cdf"]
    if args.attack_results:
        rows = read_jsonl_rows(args.attack_results)
        values = sorted(r["quality_after"] for r in rows if r.get("quality_after") is not None)
        for i, v in enumerate(values, start=1):
            lines.append(f"{v:.6f},{i / len(values):.6f}")
    exp.output_dir.mkdir(parents=True, exist_ok=True)
    (exp.output_dir / "quality_cdf.csv").write_text("\n".join(lines) + "\n", "utf-8")
    exp.write_json("merged_report.json", {"reports": merged}, "report")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dftbench", add_help=True)
    sub = parser.add_subparsers(dest="command")
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--output-dir", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--set", action="append", metavar="KEY=VALUE")
        if name == "detect":
            p.add_argument("--dataset", default="eval")
        if name == "attack":
            p.add_argument("--scheme", choices=("dftfooler", "random"), default="dftfooler")
            p.add_argument("--dataset", default="synthetic")
        if name == "evaluate":
            p.add_argument("--verdicts", default=None)
            p.add_argument("--baseline", default=None)
            p.add_argument("--attack-results", default=None)
        if name == "dist-shift":
            p.add_argument("--datasets", nargs="*", default=None)
        if name == "report":
            p.add_argument("--reports", nargs="*", default=None)
            p.add_argument("--attack-results", default=None)
    return parser


_HANDLERS = {
    "ingest": cmd_ingest,
    "generate": cmd_generate,
    "train-gltr": cmd_train_gltr,
    "detect": cmd_detect,
    "attack": cmd_attack,
    "evaluate": cmd_evaluate,
    "dist-shift": cmd_dist_shift,
    "report": cmd_report,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and not argv[0].startswith("-") and argv[0] not in SUBCOMMANDS:
        print(f"unknown subcommand {argv[0]!r}; expected one of: "
              + ", ".join(SUBCOMMANDS), file=sys.stderr)
        return EXIT_USAGE
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        exp = Experiment.from_args(args)
        return _HANDLERS[args.command](exp, args)
    except (ConfigError, CorpusError, gltr.GltrError, evalkit.EvalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (BackendError, OSError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
