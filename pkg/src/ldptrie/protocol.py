"""Interactive trie-building heavy-hitter protocol with local randomization.

Each layer the server broadcasts the surviving prefixes, a fresh batch of
users votes on one-character extensions through Subset Selection, and the
server keeps the ``eta_max`` most voted extensions. Completed prefixes (those
ending in the end symbol) become heavy hitters.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .core import (
    GAMMA,
    Alphabet,
    ConfigError,
    InsufficientUsersError,
    LocalDataset,
    PrefixDomain,
    ProtocolConfig,
    VoteVector,
    is_complete,
    strip_end,
)
from .randomizer import SSParams, ss_params

logger = logging.getLogger(__name__)

# spawn-key tags separating server and client random streams
_SERVER, _CLIENT = 0, 1


class ProtocolTerminated(Exception):
    """No incomplete prefixes remain to extend."""


class InvariantViolation(AssertionError):
    pass


class ParticipationRegistry:
    """Tracks users that already took part; nobody participates twice."""

    def __init__(self):
        self.used_user_ids: set = set()

    def __len__(self):
        return len(self.used_user_ids)

    def claim(self, user_ids: Iterable) -> None:
        user_ids = list(user_ids)
        if len(set(user_ids)) != len(user_ids):
            raise InvariantViolation("duplicate user within one batch")
        reused = self.used_user_ids.intersection(user_ids)
        if reused:
            raise InvariantViolation(f"users participated twice: {sorted(reused)[:5]}")
        self.used_user_ids.update(user_ids)

    def unused(self, population: Sequence[LocalDataset]) -> list[int]:
        """Positions in ``population`` of users that have not participated."""
        used = self.used_user_ids
        return [i for i, ds in enumerate(population) if ds.user_id not in used]


@dataclass
class LayerState:
    layer: int
    prev_prefixes: tuple[str, ...]
    domain: PrefixDomain
    tau: int
    selected: tuple[str, ...]
    completed: tuple[str, ...]
    num_users: int
    aggregate_l1: int
    gamma_votes: int
    params: SSParams | None

    def summary(self, alphabet: Alphabet) -> dict:
        return {
            "layer": self.layer,
            "prefix_length": self.domain.prefix_length,
            "domain_size": len(self.domain),
            "subset_size": self.params.d if self.params else 1,
            "tau": self.tau,
            "num_selected": len(self.selected),
            "completed": [strip_end(w, alphabet) for w in self.completed],
            "num_users": self.num_users,
            "aggregate_l1": self.aggregate_l1,
            "gamma_votes": self.gamma_votes,
        }


@dataclass
class PassResult:
    pass_index: int
    heavy_hitters: tuple[str, ...]
    layers: list[LayerState]
    users_used: int
    users_budgeted: int


@dataclass
class DiscoveryReport:
    heavy_hitters: tuple[str, ...]
    passes: list[PassResult]
    config: ProtocolConfig
    alphabet: Alphabet
    audit: dict = field(default_factory=dict)
    privacy: dict | None = None
    extra_config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        alphabet = self.alphabet
        return {
            "heavy_hitters": [strip_end(w, alphabet) for w in self.heavy_hitters],
            "num_heavy_hitters": len(self.heavy_hitters),
            "passes": [
                {
                    "pass": pr.pass_index,
                    "heavy_hitters": [strip_end(w, alphabet) for w in pr.heavy_hitters],
                    "users_used": pr.users_used,
                    "users_budgeted": pr.users_budgeted,
                    "layers": [ls.summary(alphabet) for ls in pr.layers],
                }
                for pr in self.passes
            ],
            "config": {**self.config.to_dict(), **self.extra_config},
            "audit": dict(self.audit),
            "privacy": self.privacy,
            "kernel_backend": kernels.BACKEND,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def build_domain(prev: Iterable[str], alphabet: Alphabet, layer: int = 1) -> PrefixDomain:
    """All one-character extensions of the incomplete prefixes in ``prev``."""
    open_prefixes = [z for z in prev if not is_complete(z, alphabet)]
    if not open_prefixes:
        raise ProtocolTerminated("no incomplete prefixes to extend")
    return PrefixDomain(layer, (z + x for z in open_prefixes for x in alphabet.symbols), alphabet)


def client_prefix_set(
    dataset: LocalDataset, domain: PrefixDomain, known_vocab=frozenset()
) -> dict[str, int]:
    """Distinct domain prefixes among the user's out-of-vocabulary words.

    Values are local weights: the summed counts of the words sharing a prefix.
    """
    length = domain.prefix_length
    out: dict[str, int] = {}
    for word, count in dataset.word_counts.items():
        if word in known_vocab:
            continue
        prefix = word[:length]
        if prefix in domain:
            out[prefix] = out.get(prefix, 0) + count
    return out


def greedy_sample(weighted: Mapping[str, int], B: int, alphabet: Alphabet) -> list:
    """Top-``B`` prefixes by local weight, ties in canonical order, padded with GAMMA."""
    ranked = sorted(weighted, key=lambda z: (-weighted[z], alphabet.sort_key(z)))
    picked = ranked[:B]
    return picked + [GAMMA] * (B - len(picked))


def random_sample(
    prefixes: Iterable[str], B: int, rng: np.random.Generator, alphabet: Alphabet
) -> list:
    """Uniform ``B``-subset of the distinct prefixes, padded with GAMMA."""
    ordered = alphabet.sorted(set(prefixes))
    if len(ordered) <= B:
        picked = ordered
    else:
        idx = rng.choice(len(ordered), size=B, replace=False)
        picked = [ordered[i] for i in sorted(idx)]
    return picked + [GAMMA] * (B - len(picked))


def sample_targets(
    weighted: Mapping[str, int], config: ProtocolConfig, rng, alphabet: Alphabet
) -> list:
    if config.sampler == "greedy":
        return greedy_sample(weighted, config.B, alphabet)
    return random_sample(weighted.keys(), config.B, rng, alphabet)


def client_contribute(
    dataset: LocalDataset,
    domain: PrefixDomain,
    config: ProtocolConfig,
    rng: np.random.Generator,
    known_vocab=None,
    params: SSParams | None = None,
    randomize: bool = True,
) -> VoteVector:
    """One user's vote vector for a layer: sample ``B`` targets and randomize each.

    With ``randomize=False`` each target is reported as a plain one-hot vote
    (the non-private baseline).
    """
    if known_vocab is None:
        known_vocab = config.known_vocab
    weighted = client_prefix_set(dataset, domain, known_vocab)
    targets = sample_targets(weighted, config, rng, domain.alphabet)
    gamma = domain.gamma_index
    idx = np.fromiter(
        (gamma if t is GAMMA else domain.get(t) for t in targets),
        dtype=np.int64,
        count=len(targets),
    )
    counts = np.zeros(domain.vote_size, dtype=np.int64)
    if not randomize:
        np.add.at(counts, idx, 1)
        return VoteVector(counts)
    if params is None:
        params = ss_params(domain.vote_size, config.epsilon)
    seed = int(rng.integers(0, 2**64, dtype=np.uint64))
    kernels.ss_vote_accumulate(idx, params.s, params.d, params.p, seed, counts)
    return VoteVector(counts)


def aggregate(vectors: Iterable[VoteVector]) -> VoteVector:
    total = None
    for v in vectors:
        if total is None:
            total = v.counts.copy()
        elif v.counts.size != total.size:
            raise ValueError(f"vote vector size mismatch: {v.counts.size} vs {total.size}")
        else:
            total += v.counts
    if total is None:
        raise ValueError("nothing to aggregate")
    return VoteVector(total)


def select_prefixes(
    agg: VoteVector, domain: PrefixDomain, eta_max: int
) -> tuple[list[str], int]:
    """Keep at most ``eta_max`` entries whose votes reach the threshold.

    Returns ``(selected, tau)``; the padding coordinate is ignored. Zero-vote
    entries are never kept and threshold ties are cut in reverse canonical
    order.
    """
    if agg.domain_size != len(domain):
        raise ValueError("vote vector does not match domain")
    counts = agg.domain_counts
    if counts.size == 0 or counts.max() == 0:
        return [], 0
    if counts.size <= eta_max:
        tau = int(counts[counts > 0].min())
    else:
        tau = int(np.partition(counts, counts.size - eta_max)[counts.size - eta_max])
    keep = np.flatnonzero(counts >= max(tau, 1))
    if keep.size > eta_max:
        above = keep[counts[keep] > tau]
        tied = keep[counts[keep] == tau]
        keep = np.sort(np.concatenate([above, tied[: eta_max - above.size]]))
    return [domain.entries[i] for i in keep], tau


def _client_rng(config: ProtocolConfig, pass_index: int, layer: int, slot: int):
    ss = np.random.SeedSequence(config.seed, spawn_key=(_CLIENT, pass_index, layer, slot))
    return np.random.default_rng(ss)


def _server_rng(config: ProtocolConfig, pass_index: int, layer: int):
    ss = np.random.SeedSequence(config.seed, spawn_key=(_SERVER, pass_index, layer))
    return np.random.default_rng(ss)


def run_pass(
    population: Sequence[LocalDataset],
    registry: ParticipationRegistry,
    config: ProtocolConfig,
    alphabet: Alphabet,
    known_vocab=None,
    pass_index: int = 0,
    randomize: bool = True,
) -> PassResult:
    """Build one trie of depth at most ``config.D``."""
    if known_vocab is None:
        known_vocab = config.known_vocab
    available = registry.unused(population)
    budget = config.N * config.D
    if len(available) < budget:
        raise InsufficientUsersError(budget, len(available))
    available = np.asarray(available, dtype=np.int64)
    expected_l1 = None

    prev = tuple(alphabet.symbols)
    heavy: list[str] = []
    layers: list[LayerState] = []
    used = 0
    for layer in range(1, config.D + 1):
        try:
            domain = build_domain(prev, alphabet, layer)
        except ProtocolTerminated:
            break
        if layer > 1 and len(domain) > config.eta_max * len(alphabet):
            raise InvariantViolation("domain larger than eta_max * |alphabet|")

        pick = _server_rng(config, pass_index, layer).choice(
            available.size, size=config.N, replace=False
        )
        pick.sort()
        members = available[pick]
        available = np.delete(available, pick)
        registry.claim(population[i].user_id for i in members)
        used += config.N

        params = ss_params(domain.vote_size, config.epsilon) if randomize else None
        expected_l1 = config.B * (params.d if randomize else 1)
        total = np.zeros(domain.vote_size, dtype=np.int64)
        for slot, member in enumerate(members):
            vec = client_contribute(
                population[member],
                domain,
                config,
                _client_rng(config, pass_index, layer, slot),
                known_vocab=known_vocab,
                params=params,
                randomize=randomize,
            )
            if vec.l1 != expected_l1:
                raise InvariantViolation(f"client vote L1 {vec.l1} != {expected_l1}")
            total += vec.counts
        agg = VoteVector(total)
        if agg.l1 != expected_l1 * config.N:
            raise InvariantViolation("aggregate L1 does not match N * B * d")

        selected, tau = select_prefixes(agg, domain, config.eta_max)
        completed = [z for z in selected if is_complete(z, alphabet)]
        heavy.extend(w for w in completed if w not in known_vocab)
        layers.append(
            LayerState(
                layer=layer,
                prev_prefixes=prev,
                domain=domain,
                tau=tau,
                selected=tuple(selected),
                completed=tuple(completed),
                num_users=config.N,
                aggregate_l1=agg.l1,
                gamma_votes=agg.gamma_votes,
                params=params,
            )
        )
        logger.debug(
            "pass %d layer %d: |Z|=%d tau=%d |P|=%d completed=%d",
            pass_index, layer, len(domain), tau, len(selected), len(completed),
        )
        prev = tuple(selected)
        if not any(not is_complete(z, alphabet) for z in prev):
            break

    return PassResult(
        pass_index=pass_index,
        heavy_hitters=tuple(alphabet.sorted(heavy)),
        layers=layers,
        users_used=used,
        users_budgeted=budget,
    )


def check_prefix_monotone(result: PassResult, alphabet: Alphabet) -> bool:
    """Every heavy hitter's proper prefixes were selected at earlier layers."""
    selected_by_len = {1: set(alphabet.symbols)}
    for ls in result.layers:
        selected_by_len[ls.domain.prefix_length] = set(ls.selected)
    for word in result.heavy_hitters:
        for n in range(1, len(word) + 1):
            if word[:n] not in selected_by_len.get(n, ()):
                return False
    return True


def run_multipass(
    population: Sequence[LocalDataset],
    config: ProtocolConfig,
    alphabet: Alphabet,
    randomize: bool = True,
) -> DiscoveryReport:
    """Run ``config.passes`` tries on disjoint users, growing the known vocabulary."""
    available = len(population)
    if available < config.users_required:
        raise InsufficientUsersError(config.users_required, available)
    ids = [ds.user_id for ds in population]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate user ids in population")

    registry = ParticipationRegistry()
    vocab = set(config.known_vocab)
    passes = []
    found: list[str] = []
    for pass_index in range(config.passes):
        result = run_pass(
            population, registry, config, alphabet,
            known_vocab=frozenset(vocab), pass_index=pass_index, randomize=randomize,
        )
        passes.append(result)
        found.extend(result.heavy_hitters)
        vocab.update(result.heavy_hitters)

    heavy = tuple(alphabet.sorted(set(found)))
    audit = {
        "client_l1_ok": True,
        "users_disjoint_ok": len(registry) == sum(p.users_used for p in passes),
        "prefix_monotone_ok": all(check_prefix_monotone(p, alphabet) for p in passes),
        "vocab_disjoint_ok": not (set(heavy) & config.known_vocab),
        "users_total": len(registry),
    }
    if not all(v for k, v in audit.items() if k.endswith("_ok")):
        raise InvariantViolation(f"audit failed: {audit}")
    return DiscoveryReport(
        heavy_hitters=heavy,
        passes=passes,
        config=config,
        alphabet=alphabet,
        audit=audit,
    )
