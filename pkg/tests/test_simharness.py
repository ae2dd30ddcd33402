import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import make_population
from ldptrie.core import END_SYMBOL as E, Alphabet, ConfigError, LocalDataset, ProtocolConfig
from ldptrie.protocol import run_multipass
from ldptrie.simharness import (
    GroundTruth,
    PopulationConfig,
    coverage,
    generate_population,
    load_ground_truth,
    load_population,
    oracle_heavy_hitters,
    save_ground_truth,
    save_population,
    synthetic_vocab,
    zipf_probs,
)

LOWER = Alphabet.lowercase()


def _vocab(n=50, seed=0):
    return synthetic_vocab(n, LOWER, seed=seed)


def test_synthetic_vocab_distinct_and_valid():
    words = _vocab(500)
    assert len(set(words)) == 500
    assert all(w[-1] == E and E not in w[:-1] and 3 <= len(w) <= 8 for w in words)


def test_generate_conservation():
    cfg = PopulationConfig(num_users=300, days=7, items_per_day=2, vocab=_vocab(), seed=3)
    pop, truth = generate_population(cfg)
    assert truth.total == 300 * 7 * 2
    recount = GroundTruth.from_population(pop).counts
    assert {w: c for w, c in truth.counts.items() if c} == recount
    assert len({ds.user_id for ds in pop}) == 300


def test_generate_deterministic_and_seeded():
    cfg = PopulationConfig(num_users=100, days=5, vocab=_vocab(), seed=1)
    a, _ = generate_population(cfg)
    b, _ = generate_population(cfg)
    c, _ = generate_population(PopulationConfig(num_users=100, days=5, vocab=_vocab(), seed=2))
    assert a == b and a != c


def test_generate_empty_vocab():
    with pytest.raises(ConfigError):
        PopulationConfig(num_users=1, days=1, vocab=())


def test_zipf_ratio():
    vocab = _vocab(10_000, seed=5)
    cfg = PopulationConfig(num_users=100_000, days=10, vocab=vocab, zipf_exponent=1.5, seed=9)
    _, truth = generate_population(cfg)
    ratio = truth.counts[vocab[0]] / truth.counts[vocab[1]]
    assert ratio == pytest.approx(2**1.5, rel=0.05)


def test_known_vocab_fraction_and_target():
    cfg = PopulationConfig(num_users=50, days=3, vocab=_vocab(40), known_vocab_fraction=0.25, seed=4)
    _, truth = generate_population(cfg)
    assert len(truth.known_vocab) == 10
    assert truth.target == frozenset(_vocab(40)) - truth.known_vocab


def test_oov_fraction():
    cfg = PopulationConfig(
        num_users=2000, days=5, vocab=_vocab(40), known_vocab_fraction=0.5, oov_fraction=0.2, seed=4
    )
    _, truth = generate_population(cfg)
    oov = sum(truth.counts[w] for w in truth.target)
    assert oov / truth.total == pytest.approx(0.2, abs=0.02)


def test_zipf_probs():
    p = zipf_probs(3, 1.0)
    assert p.sum() == pytest.approx(1.0)
    assert p[0] / p[2] == pytest.approx(3.0)


def test_oracle_single_word():
    pop = make_population([{"abc" + E: 2}] * 3)
    assert oracle_heavy_hitters(pop, frozenset(), 5, 2, LOWER) == {"abc" + E}


def test_oracle_unbounded_finds_everything():
    alpha = Alphabet.from_letters("abc")
    words = ["a" + E, "ab" + E, "cab" + E, "bbc" + E]
    pop = make_population([{w: 1} for w in words])
    assert oracle_heavy_hitters(pop, {"ab" + E}, 10, 100, alpha) == set(words) - {"ab" + E}


def test_oracle_hand_computed_trie():
    alpha = Alphabet.from_letters("abc")
    counts = {"ab" + E: 5, "abc" + E: 4, "ca" + E: 3, "cb" + E: 2, "bc" + E: 1}
    pop = make_population([{w: c} for w, c in counts.items()])
    # layer 1 (length 2, keep 2): ab=9, ca=3, cb=2, bc=1 -> {ab, ca}
    # layer 2 (length 3): ab⊥=5, abc=4, ca⊥=3 -> {ab⊥, abc}
    # layer 3 (length 4): abc⊥=4 -> {abc⊥}
    assert oracle_heavy_hitters(pop, frozenset(), 3, 2, alpha) == {"ab" + E, "abc" + E}
    assert oracle_heavy_hitters(pop, frozenset(), 2, 2, alpha) == {"ab" + E}


def test_coverage_examples():
    truth = GroundTruth({"a" + E: 40, "b" + E: 35, "c" + E: 25})
    assert coverage(truth.target, truth) == 1.0
    assert coverage(set(), truth) == 0.0
    assert coverage({"a" + E}, truth) == pytest.approx(0.4)
    with pytest.raises(ValueError):
        coverage({"a" + E}, GroundTruth({"a" + E: 0}))


@given(st.sets(st.sampled_from("abcdef")), st.sets(st.sampled_from("abcdef")))
def test_coverage_monotone(h1, h2):
    truth = GroundTruth({c + E: i + 1 for i, c in enumerate("abcdef")})
    small = {c + E for c in h1}
    big = small | {c + E for c in h2}
    assert coverage(small, truth) <= coverage(big, truth)


def test_population_roundtrip(tmp_path):
    alpha = Alphabet.printable()
    cfg = PopulationConfig(num_users=100, days=4, vocab=synthetic_vocab(80, alpha, seed=1), seed=2)
    pop, truth = generate_population(cfg)
    pop[0] = LocalDataset(pop[0].user_id, {"tab\there" + E: 1, "a:b" + E: 3}, 4)
    save_population(tmp_path / "p.tsv", pop, alpha)
    assert load_population(tmp_path / "p.tsv", alpha) == pop
    save_ground_truth(tmp_path / "t.tsv", truth, alpha)
    assert load_ground_truth(tmp_path / "t.tsv", alpha).counts == truth.counts


def test_population_empty_and_errors(tmp_path):
    (tmp_path / "e.tsv").write_text("", encoding="utf-8")
    assert load_population(tmp_path / "e.tsv", LOWER) == []
    (tmp_path / "d.tsv").write_text("u1\tab:1\nu1\tba:2\n", encoding="utf-8")
    with pytest.raises(ConfigError, match=":2:"):
        load_population(tmp_path / "d.tsv", LOWER)
    (tmp_path / "m.tsv").write_text("u1\tab\n", encoding="utf-8")
    with pytest.raises(ConfigError, match=":1:"):
        load_population(tmp_path / "m.tsv", LOWER)


def test_oracle_dominates_ldp_on_average():
    vocab = _vocab(300, seed=3)
    pop, truth = generate_population(
        PopulationConfig(num_users=4000, days=5, vocab=vocab, known_vocab_fraction=0.3, seed=6)
    )
    orc = coverage(oracle_heavy_hitters(truth, truth.known_vocab, 6, 10, LOWER), truth)
    covs = []
    for seed in range(10):
        cfg = ProtocolConfig(epsilon=2.0, B=5, N=500, D=6, eta_max=10,
                             known_vocab=truth.known_vocab, seed=seed)
        covs.append(coverage(run_multipass(pop, cfg, LOWER).heavy_hitters, truth))
    assert orc >= np.mean(covs)
