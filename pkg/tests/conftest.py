"""Shared fixtures: small corpora, models, and temp artifacts."""

import numpy as np
import pytest

from orpokit import data
from orpokit.lm import LMConfig, TinyLM, build_vocab


def pytest_configure(config):
    config._criterion_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criterion_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_rows():
    return data.make_synthetic_corpus(400, seed=7)


@pytest.fixture(scope="session")
def small_vocab(small_rows):
    return build_vocab(data.corpus_texts(small_rows))


@pytest.fixture(scope="session")
def small_split(small_rows, small_vocab):
    triples, stats = data.filter_and_tokenize(small_rows, small_vocab)
    return data.split(triples, (0.8, 0.1, 0.1), seed=3, stats=stats)


@pytest.fixture(scope="session")
def small_cfg(small_vocab):
    return LMConfig(vocab_size=len(small_vocab), embed_dim=8, hidden_dim=16,
                    context_window=4, seed=1)


@pytest.fixture()
def tiny_model():
    # Deliberately awkward sizes to catch transposed-shape bugs.
    return TinyLM(LMConfig(vocab_size=11, embed_dim=3, hidden_dim=5,
                           context_window=2, seed=42))


@pytest.fixture()
def rng():
    return np.random.default_rng(123)
