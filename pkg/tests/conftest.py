import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import mockpipe
from dftbench.corpus import Tokenizer
from dftbench.lm_backend import MockBackend, MockModelTable


@pytest.fixture(scope="session")
def pipe():
    return mockpipe.build_pipeline()


@pytest.fixture
def tiny_table():
    # 5-token vocab with distinct probabilities and one bigram row
    vocab = ["<unk>", "alpha", "beta", "gamma", "delta"]
    unigram = np.array([0.05, 0.4, 0.3, 0.15, 0.1])
    bigram = {1: np.array([0.05, 0.1, 0.5, 0.25, 0.1])}
    return MockModelTable(vocab, unigram, bigram)


@pytest.fixture
def tiny_backend(tiny_table):
    return MockBackend(tiny_table)


@pytest.fixture
def tiny_tokenizer(tiny_table):
    return Tokenizer("word", tiny_table.vocab)
