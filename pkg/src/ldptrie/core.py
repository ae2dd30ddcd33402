"""Domain types shared by the randomizer, protocol, accounting and harness.

Words and prefixes are plain ``str`` values over an :class:`Alphabet`; a word
always ends with the alphabet's end symbol. The padding element is never a
character: it lives as the trailing coordinate of every vote vector.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

END_SYMBOL = "⊥"


class _Gamma:
    """Singleton padding element used by the local samplers."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "GAMMA"

    def __reduce__(self):
        return (_Gamma, ())


GAMMA = _Gamma()


class ConfigError(ValueError):
    """Invalid configuration or input value."""


class InsufficientUsersError(RuntimeError):
    """The population cannot supply the requested number of fresh users."""

    def __init__(self, required: int, available: int):
        super().__init__(
            f"need {required} unused users but only {available} are available"
        )
        self.required = required
        self.available = available


@dataclass(frozen=True)
class Alphabet:
    symbols: tuple[str, ...]
    end_symbol: str = END_SYMBOL
    _index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        symbols = tuple(self.symbols)
        object.__setattr__(self, "symbols", symbols)
        if len(symbols) < 2:
            raise ConfigError("alphabet needs at least two symbols")
        if any(len(c) != 1 for c in symbols):
            raise ConfigError("alphabet symbols must be single characters")
        if len(set(symbols)) != len(symbols):
            raise ConfigError("alphabet symbols must be distinct")
        if self.end_symbol not in symbols:
            raise ConfigError("end symbol must be a member of the alphabet")
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(symbols)})

    def __len__(self):
        return len(self.symbols)

    def __contains__(self, char):
        return char in self._index

    def index(self, char: str) -> int:
        return self._index[char]

    def sort_key(self, text: str) -> tuple[int, ...]:
        """Canonical ordering key: lexicographic in alphabet index."""
        idx = self._index
        return tuple(idx[c] for c in text)

    def sorted(self, texts: Iterable[str]) -> list[str]:
        return sorted(texts, key=self.sort_key)

    @classmethod
    def from_letters(cls, letters: str, end_symbol: str = END_SYMBOL) -> "Alphabet":
        """``letters`` followed by the end symbol, e.g. ``from_letters("ab")``."""
        return cls(tuple(letters) + (end_symbol,), end_symbol)

    @classmethod
    def printable(cls) -> "Alphabet":
        """The 100 characters of ``string.printable`` plus the end symbol."""
        return cls.from_letters(string.printable)

    @classmethod
    def lowercase(cls) -> "Alphabet":
        return cls.from_letters(string.ascii_lowercase)


def is_complete(prefix: str, alphabet: Alphabet) -> bool:
    return bool(prefix) and prefix[-1] == alphabet.end_symbol


def validate_word(chars: Sequence[str] | str, alphabet: Alphabet) -> str:
    """Return ``chars`` as a word string, or raise :class:`ConfigError`.

    A word is a non-empty sequence of alphabet symbols terminated by exactly
    one end symbol.
    """
    word = "".join(chars)
    if not word:
        raise ConfigError("empty word")
    for pos, c in enumerate(word):
        if c not in alphabet:
            raise ConfigError(f"character {c!r} at position {pos} not in alphabet")
    end = alphabet.end_symbol
    if word[-1] != end:
        raise ConfigError(f"word {word!r} is missing the end symbol")
    if end in word[:-1]:
        raise ConfigError(f"word {word!r} has an interior end symbol")
    return word


def validate_prefix(chars: Sequence[str] | str, alphabet: Alphabet) -> str:
    prefix = "".join(chars)
    for c in prefix:
        if c not in alphabet:
            raise ConfigError(f"character {c!r} not in alphabet")
    if alphabet.end_symbol in prefix[:-1]:
        raise ConfigError(f"prefix {prefix!r} has an interior end symbol")
    return prefix


def terminate(text: str, alphabet: Alphabet) -> str:
    """Append the end symbol to a raw string and validate the result."""
    return validate_word(text + alphabet.end_symbol, alphabet)


def strip_end(word: str, alphabet: Alphabet) -> str:
    return word[:-1] if is_complete(word, alphabet) else word


class PrefixDomain:
    """Canonically ordered candidate prefixes of one trie layer.

    Vote vectors over a domain have ``len(domain) + 1`` coordinates; the last
    one (:attr:`gamma_index`) belongs to the padding element.
    """

    __slots__ = ("layer", "entries", "prefix_length", "alphabet", "_index")

    def __init__(self, layer: int, entries: Iterable[str], alphabet: Alphabet):
        entries = alphabet.sorted(set(entries))
        lengths = {len(e) for e in entries}
        if len(lengths) > 1:
            raise ConfigError(f"domain entries have mixed lengths {sorted(lengths)}")
        for e in entries:
            validate_prefix(e, alphabet)
        self.layer = layer
        self.entries = tuple(entries)
        self.prefix_length = lengths.pop() if lengths else 0
        self.alphabet = alphabet
        self._index = {e: i for i, e in enumerate(self.entries)}

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __contains__(self, prefix):
        return prefix in self._index

    def __repr__(self):
        return (
            f"PrefixDomain(layer={self.layer}, size={len(self)}, "
            f"prefix_length={self.prefix_length})"
        )

    @property
    def vote_size(self) -> int:
        return len(self.entries) + 1

    @property
    def gamma_index(self) -> int:
        return len(self.entries)

    def get(self, prefix: str) -> int | None:
        return self._index.get(prefix)


def canonical_index(prefix: str, domain: PrefixDomain) -> int | None:
    """Position of ``prefix`` in ``domain.entries``, or ``None`` if absent."""
    return domain.get(prefix)


class VoteVector:
    """Non-negative integer votes over a domain plus one trailing padding slot."""

    __slots__ = ("counts",)

    def __init__(self, counts):
        counts = np.asarray(counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size < 1:
            raise ValueError("vote vector must be one-dimensional and non-empty")
        if (counts < 0).any():
            raise ValueError("vote counts must be non-negative")
        self.counts = counts

    @classmethod
    def zeros(cls, domain_size: int) -> "VoteVector":
        return cls(np.zeros(domain_size + 1, dtype=np.int64))

    @property
    def domain_size(self) -> int:
        return self.counts.size - 1

    @property
    def size(self) -> int:
        return self.counts.size

    @property
    def l1(self) -> int:
        return int(self.counts.sum())

    @property
    def gamma_votes(self) -> int:
        return int(self.counts[-1])

    @property
    def domain_counts(self) -> np.ndarray:
        return self.counts[:-1]

    def __eq__(self, other):
        return isinstance(other, VoteVector) and np.array_equal(self.counts, other.counts)

    def __repr__(self):
        return f"VoteVector(domain_size={self.domain_size}, l1={self.l1})"


@dataclass(frozen=True)
class ProtocolConfig:
    epsilon: float
    B: int
    N: int
    D: int
    eta_max: int
    passes: int = 1
    sampler: str = "greedy"
    known_vocab: frozenset = frozenset()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "known_vocab", frozenset(self.known_vocab))
        if not (self.epsilon > 0 and np.isfinite(self.epsilon)):
            raise ConfigError("epsilon must be positive and finite")
        for name in ("B", "N", "D", "eta_max", "passes"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.sampler not in ("greedy", "random"):
            raise ConfigError(f"unknown sampler {self.sampler!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 bits")

    @property
    def users_required(self) -> int:
        return self.passes * self.N * self.D

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "B": self.B,
            "N": self.N,
            "D": self.D,
            "eta_max": self.eta_max,
            "passes": self.passes,
            "sampler": self.sampler,
            "known_vocab_size": len(self.known_vocab),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class LocalDataset:
    user_id: str
    word_counts: Mapping[str, int]
    days: int = 1

    def __post_init__(self):
        if any(c < 1 for c in self.word_counts.values()):
            raise ConfigError(f"user {self.user_id}: word counts must be >= 1")
        if self.days < 1:
            raise ConfigError(f"user {self.user_id}: days must be >= 1")

    @property
    def total(self) -> int:
        return sum(self.word_counts.values())


# Backslash escapes for characters that would break line/tab based files.
_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r", "\x0b": "\\v", "\x0c": "\\f"}
_UNESCAPES = {v[1]: k for k, v in _ESCAPES.items()}


def escape_text(text: str) -> str:
    return "".join(_ESCAPES.get(c, c) for c in text)


def unescape_text(text: str) -> str:
    out = []
    it = iter(text)
    for c in it:
        if c == "\\":
            nxt = next(it, None)
            if nxt not in _UNESCAPES:
                raise ValueError(f"bad escape sequence in {text!r}")
            out.append(_UNESCAPES[nxt])
        else:
            out.append(c)
    return "".join(out)


def load_alphabet(path, end_symbol: str = END_SYMBOL) -> Alphabet:
    """Read one (escaped) character per line, in canonical order.

    The end symbol is appended when the file does not list it.
    """
    symbols = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        char = unescape_text(line)
        if len(char) != 1:
            raise ConfigError(f"{path}:{lineno}: expected exactly one character")
        symbols.append(char)
    if end_symbol not in symbols:
        symbols.append(end_symbol)
    return Alphabet(tuple(symbols), end_symbol)


def save_alphabet(path, alphabet: Alphabet) -> None:
    lines = [escape_text(c) for c in alphabet.symbols]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_word_list(path, alphabet: Alphabet) -> list[str]:
    """Words one per line without the end symbol; blank lines are skipped."""
    words = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line:
            continue
        try:
            words.append(terminate(unescape_text(line), alphabet))
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return words


def save_word_list(path, words: Iterable[str], alphabet: Alphabet) -> None:
    lines = [escape_text(strip_end(w, alphabet)) for w in words]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
