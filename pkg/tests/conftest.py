import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from mlstm.embeddings import WordVectorStore  # noqa: E402
from mlstm.ingestion import EditRecord  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_store():
    vocab = {
        "niels": [1.0, 0.0, 0.0, 0.0],
        "bohr": [0.0, 1.0, 0.0, 0.0],
        "physics": [0.0, 0.0, 1.0, 0.0],
        "physicists": [0.0, 0.0, 0.5, 0.5],
        "danish": [0.25, 0.25, 0.0, 0.0],
    }
    return WordVectorStore(4, vocab, seed=7)


def make_edit(user="u1", t=0, title="Niels Bohr", categories=("Danish physicists",), reverted=False, page_id=21210):
    return EditRecord(user, page_id, title, tuple(categories), t, reverted)
