import json
import os

import pytest

from blockscramble.corpus import synthetic_corpus

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture(scope="session")
def golden():
    with open(os.path.join(DATA_DIR, "golden_keystream.json")) as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def corpus_672():
    """Ten naturalistic 672x480 images (the evaluation corpus)."""
    return synthetic_corpus(10, 672, 480, seed=1)


@pytest.fixture(scope="session")
def corpus_240():
    """Six naturalistic 240x128 images (the attack corpus)."""
    return synthetic_corpus(6, 240, 128, seed=2)
