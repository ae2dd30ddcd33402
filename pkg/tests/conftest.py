import numpy as np
import pytest

from ldptrie.core import Alphabet, LocalDataset


@pytest.fixture
def ab():
    return Alphabet.from_letters("ab")


@pytest.fixture
def abc():
    return Alphabet.from_letters("abc")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_population(words_and_counts, days=1, prefix="u"):
    """One user per entry of ``words_and_counts`` (a list of dicts)."""
    return [
        LocalDataset(f"{prefix}{i:05d}", dict(wc), days)
        for i, wc in enumerate(words_and_counts)
    ]
