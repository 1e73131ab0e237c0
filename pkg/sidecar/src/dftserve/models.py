"""Local model bundle management.

Builds a self-contained pair of tiny transformer checkpoints (one causal, one
masked) plus a shared WordPiece vocabulary, saved under a bundle directory.
The build is seeded, so a bundle is reproducible; any directory holding
compatible `causal/`, `masked/` and `vocab.txt` entries works too, including
full pretrained checkpoints.
"""

from __future__ import annotations

from pathlib import Path

SPECIAL_TOKENS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]

_WORDS = """
the of and to in is was for on that with as his her they at be this from it
an are were had has have not but all any one two three time people way day
man thing world life hand part child eye woman place work week case point
company number group problem fact house area money story month lot right
study book word business issue side kind head far black both long little
own other old great high small large next early young important few public
bad same able make take come see know get give find think tell become show
leave feel put bring begin keep hold write stand hear let mean set meet run
pay sit speak lie lead read grow lose fall send build understand draw break
spend cut rise drive buy wear choose good new first last big different
national social only such sure clear major true whole real free strong
certain low recent quickly slowly finally usually probably together however
again never always often water food music history science nature river
mountain city street market school garden window morning evening winter
summer light dark paper letter question answer report research system model
language computer network machine signal service station village doctor
teacher student friend family mother father brother sister
""".split()

_SUFFIX_PIECES = ["##s", "##ed", "##ing", "##er", "##ly", "##es", "##ion"]


def build_vocab() -> list:
    seen = []
    for w in SPECIAL_TOKENS + _WORDS + _SUFFIX_PIECES:
        if w not in seen:
            seen.append(w)
    return seen


def build_bundle(bundle_dir, seed: int = 0, hidden_size: int = 64) -> Path:
    """Create (or reuse) a seeded tiny causal+masked model bundle."""
    import torch
    from transformers import (BertConfig, BertForMaskedLM, GPT2Config,
                              GPT2LMHeadModel)

    bundle_dir = Path(bundle_dir)
    if (bundle_dir / "vocab.txt").exists():
        return bundle_dir
    bundle_dir.mkdir(parents=True, exist_ok=True)

    vocab = build_vocab()
    (bundle_dir / "vocab.txt").write_text("\n".join(vocab) + "\n", "utf-8")

    torch.manual_seed(seed)
    causal = GPT2LMHeadModel(GPT2Config(
        vocab_size=len(vocab), n_positions=512, n_embd=hidden_size,
        n_layer=2, n_head=2, bos_token_id=vocab.index("[CLS]"),
        eos_token_id=vocab.index("[SEP]")))
    causal.save_pretrained(bundle_dir / "causal")

    torch.manual_seed(seed + 1)
    masked = BertForMaskedLM(BertConfig(
        vocab_size=len(vocab), hidden_size=hidden_size, num_hidden_layers=2,
        num_attention_heads=2, intermediate_size=4 * hidden_size,
        max_position_embeddings=512))
    masked.save_pretrained(bundle_dir / "masked")
    return bundle_dir
