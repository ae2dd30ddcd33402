"""Federated heavy-hitter discovery over a trie with local differential privacy."""

from importlib import resources

from .core import (
    END_SYMBOL,
    GAMMA,
    Alphabet,
    ConfigError,
    InsufficientUsersError,
    LocalDataset,
    PrefixDomain,
    ProtocolConfig,
    VoteVector,
    canonical_index,
    validate_word,
)
from .kernels import BACKEND
from .protocol import DiscoveryReport, run_multipass, run_pass
from .randomizer import SSParams, exact_output_prob, marginal_probs, ss_params, subset_select

__version__ = "0.1.0"


def data_path(name: str):
    """Path of a file shipped in ``ldptrie/data`` (benchmark config, report schema)."""
    return resources.files(__name__) / "data" / name
