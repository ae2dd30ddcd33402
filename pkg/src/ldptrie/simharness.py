"""Synthetic populations, the non-private trie oracle, and coverage metrics."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import (
    Alphabet,
    ConfigError,
    LocalDataset,
    VoteVector,
    escape_text,
    is_complete,
    strip_end,
    terminate,
    unescape_text,
)
from .protocol import ProtocolTerminated, build_domain, select_prefixes

POPULATION_HEADER = "# ldptrie-population v1"


@dataclass(frozen=True)
class PopulationConfig:
    num_users: int
    days: int
    vocab: tuple[str, ...]
    zipf_exponent: float = 1.5
    items_per_day: int = 1
    known_vocab_fraction: float = 0.0
    oov_fraction: float | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "vocab", tuple(self.vocab))
        if self.num_users < 1 or self.days < 1 or self.items_per_day < 1:
            raise ConfigError("num_users, days and items_per_day must be >= 1")
        if not self.vocab:
            raise ConfigError("vocabulary is empty")
        if len(set(self.vocab)) != len(self.vocab):
            raise ConfigError("vocabulary has duplicate words")
        if not self.zipf_exponent > 0:
            raise ConfigError("zipf exponent must be positive")
        if not 0 <= self.known_vocab_fraction <= 1:
            raise ConfigError("known_vocab_fraction must lie in [0, 1]")
        if self.oov_fraction is not None and not 0 <= self.oov_fraction <= 1:
            raise ConfigError("oov_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class GroundTruth:
    counts: dict
    known_vocab: frozenset = frozenset()
    target: frozenset = field(default=None)

    def __post_init__(self):
        if any(c < 0 for c in self.counts.values()):
            raise ConfigError("ground-truth counts must be non-negative")
        if self.target is None:
            target = frozenset(w for w in self.counts if w not in self.known_vocab)
            object.__setattr__(self, "target", target)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @classmethod
    def from_population(cls, population: Iterable[LocalDataset], known_vocab=frozenset()):
        counts: Counter = Counter()
        for ds in population:
            counts.update(ds.word_counts)
        return cls(dict(counts), frozenset(known_vocab))


def zipf_probs(n: int, exponent: float) -> np.ndarray:
    weights = np.arange(1, n + 1, dtype=np.float64) ** -exponent
    return weights / weights.sum()


def synthetic_vocab(
    n_words: int,
    alphabet: Alphabet,
    seed: int = 0,
    min_len: int = 2,
    max_len: int = 7,
) -> list[str]:
    """``n_words`` distinct random words over the alphabet's non-end symbols."""
    letters = [c for c in alphabet.symbols if c != alphabet.end_symbol]
    capacity = sum(len(letters) ** n for n in range(min_len, max_len + 1))
    if n_words > capacity:
        raise ConfigError("alphabet too small for the requested vocabulary")
    rng = np.random.default_rng(seed)
    seen: dict[str, None] = {}
    while len(seen) < n_words:
        length = int(rng.integers(min_len, max_len + 1))
        chars = rng.integers(0, len(letters), size=length)
        seen.setdefault("".join(letters[i] for i in chars) + alphabet.end_symbol)
    return list(seen)


def generate_population(cfg: PopulationConfig) -> tuple[list[LocalDataset], GroundTruth]:
    """Users independently draw ``days * items_per_day`` Zipf-distributed words.

    The vocabulary order is the popularity rank. A random ``known_vocab_fraction``
    of it is marked as known; with ``oov_fraction`` set, each draw comes from the
    unknown words with that probability (Zipf over their own ranks) and from the
    known words otherwise.
    """
    rng = np.random.default_rng(cfg.seed)
    vocab = np.array(cfg.vocab, dtype=object)
    n_vocab = len(vocab)
    n_known = int(round(cfg.known_vocab_fraction * n_vocab))
    known_idx = np.sort(rng.choice(n_vocab, size=n_known, replace=False))
    known = frozenset(vocab[known_idx])

    draws = cfg.days * cfg.items_per_day
    shape = (cfg.num_users, draws)
    if cfg.oov_fraction is None:
        picks = rng.choice(n_vocab, size=shape, p=zipf_probs(n_vocab, cfg.zipf_exponent))
    else:
        is_known = np.zeros(n_vocab, dtype=bool)
        is_known[known_idx] = True
        oov_idx = np.flatnonzero(~is_known)
        if (cfg.oov_fraction > 0 and not oov_idx.size) or (
            cfg.oov_fraction < 1 and not known_idx.size
        ):
            raise ConfigError("oov_fraction needs both known and unknown words")
        from_oov = rng.random(shape) < cfg.oov_fraction
        picks = np.empty(shape, dtype=np.int64)
        for mask, pool in ((from_oov, oov_idx), (~from_oov, known_idx)):
            m = int(mask.sum())
            if m:
                ranks = rng.choice(pool.size, size=m, p=zipf_probs(pool.size, cfg.zipf_exponent))
                picks[mask] = pool[ranks]

    population = []
    totals = np.zeros(n_vocab, dtype=np.int64)
    width = max(6, len(str(cfg.num_users - 1)))
    for u in range(cfg.num_users):
        idx, cnt = np.unique(picks[u], return_counts=True)
        totals[idx] += cnt
        population.append(
            LocalDataset(
                user_id=f"u{u:0{width}d}",
                word_counts={vocab[i]: int(c) for i, c in zip(idx, cnt)},
                days=cfg.days,
            )
        )
    truth = GroundTruth({vocab[i]: int(totals[i]) for i in range(n_vocab)}, known)
    return population, truth


def oracle_heavy_hitters(
    population: Sequence[LocalDataset] | GroundTruth,
    known_vocab,
    D: int,
    eta_max: int,
    alphabet: Alphabet,
) -> set[str]:
    """Exact trie over true counts: same layer rule, no sampling or noise."""
    if isinstance(population, GroundTruth):
        counts = dict(population.counts)
    else:
        counts = GroundTruth.from_population(population).counts
    words = [(w, c) for w, c in counts.items() if w not in known_vocab and c > 0]

    heavy: set[str] = set()
    prev = tuple(alphabet.symbols)
    for layer in range(1, D + 1):
        try:
            domain = build_domain(prev, alphabet, layer)
        except ProtocolTerminated:
            break
        votes = np.zeros(domain.vote_size, dtype=np.int64)
        for word, c in words:
            i = domain.get(word[: domain.prefix_length])
            if i is not None:
                votes[i] += c
        selected, _ = select_prefixes(VoteVector(votes), domain, eta_max)
        heavy.update(z for z in selected if is_complete(z, alphabet))
        prev = tuple(selected)
        if all(is_complete(z, alphabet) for z in prev):
            break
    return heavy


def coverage(heavy: Iterable[str], truth: GroundTruth, target=None) -> float:
    """Share of the target words' total count that the discovered set captures."""
    target = truth.target if target is None else frozenset(target)
    denom = sum(truth.counts.get(w, 0) for w in target)
    if denom <= 0:
        raise ValueError("target set has zero total count")
    found = set(heavy) & target
    return sum(truth.counts.get(w, 0) for w in found) / denom


def save_population(path, datasets: Sequence[LocalDataset], alphabet: Alphabet) -> None:
    days = {ds.days for ds in datasets}
    if len(days) > 1:
        raise ConfigError("population file stores a single days value for all users")
    lines = [f"{POPULATION_HEADER} days={days.pop() if days else 1}"]
    for ds in datasets:
        fields = [escape_text(str(ds.user_id))]
        for word in alphabet.sorted(ds.word_counts):
            fields.append(f"{escape_text(strip_end(word, alphabet))}:{ds.word_counts[word]}")
        lines.append("\t".join(fields))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_population(path, alphabet: Alphabet) -> list[LocalDataset]:
    text = Path(path).read_text(encoding="utf-8")
    days = 1
    out: list[LocalDataset] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            for token in line[1:].split():
                if token.startswith("days="):
                    try:
                        days = int(token[5:])
                    except ValueError:
                        raise ConfigError(f"{path}:{lineno}: bad days value") from None
            continue
        fields = line.split("\t")
        try:
            user_id = unescape_text(fields[0])
            if not user_id:
                raise ValueError("empty user id")
            if user_id in seen:
                raise ValueError(f"duplicate user id {user_id!r}")
            word_counts: dict[str, int] = {}
            for item in fields[1:]:
                raw, sep, count = item.rpartition(":")
                if not sep:
                    raise ValueError(f"expected word:count, got {item!r}")
                word = terminate(unescape_text(raw), alphabet)
                if word in word_counts:
                    raise ValueError(f"word {raw!r} listed twice")
                word_counts[word] = int(count)
            ds = LocalDataset(user_id, word_counts, days)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
        seen.add(user_id)
        out.append(ds)
    return out


def save_ground_truth(path, truth: GroundTruth, alphabet: Alphabet) -> None:
    words = sorted(truth.counts, key=lambda w: (-truth.counts[w], alphabet.sort_key(w)))
    lines = [f"{escape_text(strip_end(w, alphabet))}\t{truth.counts[w]}" for w in words]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_ground_truth(path, alphabet: Alphabet, known_vocab=frozenset()) -> GroundTruth:
    counts = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line:
            continue
        try:
            raw, count = line.rsplit("\t", 1)
            counts[terminate(unescape_text(raw), alphabet)] = int(count)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return GroundTruth(counts, frozenset(known_vocab))
