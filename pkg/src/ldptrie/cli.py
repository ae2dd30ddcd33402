"""Command-line entry point: ``ldptrie <command> [options]``.

Commands
--------
genpop    generate a synthetic population and its ground truth
discover  run the multi-pass protocol and write a JSON report
account   closed-form central epsilon for (epsilon, delta, n)
kanon     Monte Carlo approximate k-anonymity certification
sweep     mean coverage over seeds for a grid of epsilons/samplers/passes
eval      coverage of a report's heavy hitters against ground truth

Exit codes: 0 success, 2 configuration error, 3 insufficient users,
4 I/O error.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from .core import (
    Alphabet,
    ConfigError,
    InsufficientUsersError,
    ProtocolConfig,
    load_alphabet,
    load_word_list,
    save_word_list,
    terminate,
)
from .privacy import (
    AmplificationQuery,
    DegenerateQuery,
    InapplicableBound,
    KAnonQuery,
    accounting_report,
    amplification_precondition,
    central_epsilon_upper,
    kanon_certify,
)
from .protocol import run_multipass
from .simharness import (
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
)

logger = logging.getLogger("ldptrie")

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCES, EXIT_IO = 0, 2, 3, 4

# Tighter numerically computed central epsilon published for the production
# setting (eps, delta, n). Recorded as an external reference, never computed here.
EXTERNAL_CENTRAL_EPSILON = {(10.0, 1e-10, 30_000_000): 0.315}

DEFAULTS = {
    "seed": 0,
    "alphabet": "lowercase",
    "population": {},
    "protocol": {
        "epsilon": 10.0,
        "B": 10,
        "N": 2000,
        "D": 8,
        "eta_max": 50,
        "passes": 1,
        "sampler": "greedy",
    },
    "accounting": {"delta": 1e-10, "epsilon_central_external": None, "kanon": None},
    "sweep": {
        "epsilons": None,
        "samplers": None,
        "passes": None,
        "fixed_user_budget": True,
        "seeds_per_point": 10,
        "include_oracle": True,
    },
    "output": None,
}


class IOFailure(Exception):
    pass


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path) -> dict:
    """Read a YAML experiment file and fill in defaults.

    Relative file paths inside the config are resolved against its directory.
    """
    if path is None:
        return _merge(DEFAULTS, {})
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot read config {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    cfg = _merge(DEFAULTS, raw)
    cfg["_base_dir"] = str(Path(path).resolve().parent)
    return cfg


def _resolve(cfg: dict, value):
    if value is None:
        return None
    p = Path(value)
    if not p.is_absolute() and "_base_dir" in cfg:
        p = Path(cfg["_base_dir"]) / p
    return p


def resolve_alphabet(cfg: dict) -> Alphabet:
    spec = cfg.get("alphabet", "lowercase")
    if spec == "lowercase":
        return Alphabet.lowercase()
    if spec == "printable":
        return Alphabet.printable()
    if isinstance(spec, dict) and "letters" in spec:
        return Alphabet.from_letters(spec["letters"])
    if isinstance(spec, str):
        path = _resolve(cfg, spec)
        if not path.exists():
            raise IOFailure(f"alphabet file {path} not found")
        return load_alphabet(path)
    raise ConfigError(f"bad alphabet specification {spec!r}")


def population_config(cfg: dict, alphabet: Alphabet) -> PopulationConfig:
    gen = dict(cfg["population"].get("generate") or {})
    if not gen:
        raise ConfigError("population.generate section is missing")
    if "vocab_file" in gen:
        path = _resolve(cfg, gen["vocab_file"])
        if not path.exists():
            raise IOFailure(f"vocabulary file {path} not found")
        vocab = load_word_list(path, alphabet)
    else:
        vocab = synthetic_vocab(
            int(gen.get("vocab_size", 5000)),
            alphabet,
            seed=int(gen.get("vocab_seed", 0)),
            min_len=int(gen.get("word_min_len", 2)),
            max_len=int(gen.get("word_max_len", 7)),
        )
    return PopulationConfig(
        num_users=int(gen.get("num_users", 20000)),
        days=int(gen.get("days", 10)),
        vocab=tuple(vocab),
        zipf_exponent=float(gen.get("zipf_exponent", 1.5)),
        items_per_day=int(gen.get("items_per_day", 1)),
        known_vocab_fraction=float(gen.get("known_vocab_fraction", 0.0)),
        oov_fraction=gen.get("oov_fraction"),
        seed=int(gen.get("seed", 0)),
    )


def resolve_population(cfg: dict, alphabet: Alphabet):
    """Returns ``(population, truth_or_None, known_vocab)``."""
    pop = cfg["population"]
    if pop.get("generate"):
        population, truth = generate_population(population_config(cfg, alphabet))
        return population, truth, truth.known_vocab
    if not pop.get("path"):
        raise ConfigError("population needs either 'path' or 'generate'")
    files = {k: _resolve(cfg, pop.get(k)) for k in ("path", "truth", "known_vocab")}
    for key, path in files.items():
        if path is not None and not path.exists():
            raise IOFailure(f"population {key} file {path} not found")
    known = frozenset(load_word_list(files["known_vocab"], alphabet)) if files["known_vocab"] else frozenset()
    population = load_population(files["path"], alphabet)
    truth = load_ground_truth(files["truth"], alphabet, known) if files["truth"] else None
    return population, truth, known


def protocol_config(cfg: dict, known_vocab, **overrides) -> ProtocolConfig:
    proto = dict(cfg["protocol"])
    proto.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ProtocolConfig(
            epsilon=float(proto["epsilon"]),
            B=int(proto["B"]),
            N=int(proto["N"]),
            D=int(proto["D"]),
            eta_max=int(proto["eta_max"]),
            passes=int(proto["passes"]),
            sampler=str(proto["sampler"]),
            known_vocab=known_vocab,
            seed=int(cfg["seed"]),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad protocol section: {exc}") from None


def _public_config(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


def discover(cfg: dict, population, truth, known_vocab, alphabet, **overrides) -> dict:
    """Run the protocol and return the full JSON-ready report."""
    config = protocol_config(cfg, known_vocab, **overrides)
    report = run_multipass(population, config, alphabet)
    acc = cfg["accounting"] or {}
    kanon = None
    kanon_skipped = None
    if acc.get("kanon"):
        kq = acc["kanon"]
        query = KAnonQuery(
            eta_max=config.eta_max,
            alphabet_size=len(alphabet),
            nb=config.N * config.B,
            epsilon=config.epsilon,
            trials=int(kq.get("trials", 1000)),
        )
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(2,)))
        try:
            kanon = kanon_certify(int(kq["k"]), float(kq["alpha"]), query, rng)
        except DegenerateQuery as exc:
            logger.warning("k-anonymity check skipped: %s", exc)
            kanon_skipped = str(exc)
    report.privacy = accounting_report(
        config.epsilon,
        float(acc.get("delta", 1e-10)),
        config.N * config.B,
        kanon=kanon,
        epsilon_central_external=acc.get("epsilon_central_external")
        or EXTERNAL_CENTRAL_EPSILON.get((config.epsilon, float(acc.get("delta", 1e-10)), config.N * config.B)),
    )
    if kanon_skipped:
        report.privacy["kanon_skipped"] = kanon_skipped
    out = report.to_dict()
    out["resolved_config"] = _public_config(cfg)
    out["coverage"] = coverage(report.heavy_hitters, truth) if truth is not None and truth.target else None
    return out


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _write(path, text: str) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from None


def _emit(args, cfg, text: str) -> None:
    out = args.out or (cfg.get("output") if cfg else None)
    if out:
        _write(out, text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- commands


def cmd_genpop(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["population"].setdefault("generate", {})["seed"] = args.seed
    alphabet = resolve_alphabet(cfg)
    pcfg = population_config(cfg, alphabet)
    outdir = Path(args.out or "population")
    files = {
        "population": outdir / "population.tsv",
        "truth": outdir / "truth.tsv",
        "known_vocab": outdir / "known_vocab.txt",
    }
    existing = [str(p) for p in files.values() if p.exists()]
    if existing and not args.force:
        raise IOFailure(f"refusing to overwrite {', '.join(existing)} (use --force)")
    population, truth = generate_population(pcfg)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        save_population(files["population"], population, alphabet)
        save_ground_truth(files["truth"], truth, alphabet)
        save_word_list(files["known_vocab"], alphabet.sorted(truth.known_vocab), alphabet)
    except OSError as exc:
        raise IOFailure(str(exc)) from None
    print(
        f"users={len(population)} contributions={truth.total} vocab={len(truth.counts)} "
        f"known={len(truth.known_vocab)} target={len(truth.target)} -> {outdir}"
    )
    return EXIT_OK


def _protocol_overrides(args) -> dict:
    return {
        "epsilon": args.epsilon,
        "B": args.B,
        "N": args.N,
        "D": args.D,
        "eta_max": args.eta_max,
        "passes": args.passes,
        "sampler": args.sampler,
    }


def cmd_discover(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    for key, value in _protocol_overrides(args).items():
        if value is not None:
            cfg["protocol"][key] = value
    alphabet = resolve_alphabet(cfg)
    population, truth, known = resolve_population(cfg, alphabet)
    report = discover(cfg, population, truth, known, alphabet)
    _emit(args, cfg, _dump(report))
    return EXIT_OK


def cmd_account(args) -> int:
    q = AmplificationQuery(args.epsilon, args.delta, args.n)
    ok = amplification_precondition(q)
    result = {
        "epsilon_local": args.epsilon,
        "delta": args.delta,
        "n": args.n,
        "precondition_ok": ok,
        "epsilon_central_closed_form": central_epsilon_upper(q) if ok else None,
        "epsilon_central_external": EXTERNAL_CENTRAL_EPSILON.get((args.epsilon, args.delta, args.n)),
    }
    if args.json:
        _emit(args, None, _dump(result))
    elif ok:
        text = f"precondition ok; epsilon' <= {result['epsilon_central_closed_form']:.10f}\n"
        if result["epsilon_central_external"] is not None:
            text += f"external numerical reference: {result['epsilon_central_external']}\n"
        _emit(args, None, text)
    else:
        _emit(args, None, "precondition fails: no closed-form guarantee\n")
    return EXIT_OK


def cmd_kanon(args) -> int:
    query = KAnonQuery(
        eta_max=args.eta_max,
        alphabet_size=args.alphabet_size,
        nb=args.N * args.B,
        epsilon=args.epsilon,
        trials=args.trials,
    )
    rng = np.random.default_rng(args.seed or 0)
    result = kanon_certify(args.k, args.alpha, query, rng, method=args.method)
    _emit(args, None, _dump(result.to_dict()))
    return EXIT_OK


def _sweep_job(job):
    cfg, point, seed, population, truth, known, alphabet = job
    run_cfg = dict(cfg, seed=seed)
    report = discover(run_cfg, population, truth, known, alphabet, **point)
    return report["coverage"]


def sweep_points(cfg: dict) -> list[dict]:
    sw = cfg["sweep"]
    proto = cfg["protocol"]
    eps = sw.get("epsilons") or [proto["epsilon"]]
    samplers = sw.get("samplers") or [proto["sampler"]]
    passes = sw.get("passes") or [proto["passes"]]
    points = []
    for e, smp, p in itertools.product(eps, samplers, passes):
        n = int(proto["N"]) // int(p) if sw.get("fixed_user_budget", True) else int(proto["N"])
        points.append({"epsilon": float(e), "sampler": smp, "passes": int(p), "N": n})
    return points


def run_sweep(cfg: dict, workers: int = 1) -> dict:
    """Mean and standard error of coverage for every grid point."""
    alphabet = resolve_alphabet(cfg)
    population, truth, known = resolve_population(cfg, alphabet)
    if truth is None or not truth.target:
        raise ConfigError("sweep needs ground truth with a non-empty target set")
    sw = cfg["sweep"]
    n_seeds = int(sw.get("seeds_per_point", 10))
    if n_seeds < 1:
        raise ConfigError("seeds_per_point must be >= 1")
    base_seed = int(cfg["seed"])
    points = sweep_points(cfg)
    jobs = [
        (cfg, point, base_seed + i, population, truth, known, alphabet)
        for point in points
        for i in range(n_seeds)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(_sweep_job, jobs))
    else:
        values = [_sweep_job(job) for job in jobs]

    rows = []
    for j, point in enumerate(points):
        cov = np.array(values[j * n_seeds:(j + 1) * n_seeds])
        stderr = float(cov.std(ddof=1) / math.sqrt(cov.size)) if cov.size > 1 else 0.0
        rows.append({**point, "coverage_mean": float(cov.mean()), "coverage_stderr": stderr,
                     "coverage": [float(c) for c in cov]})
    result = {"points": rows, "seeds_per_point": n_seeds, "resolved_config": _public_config(cfg)}
    if sw.get("include_oracle", True):
        proto = cfg["protocol"]
        heavy = oracle_heavy_hitters(truth, known, int(proto["D"]), int(proto["eta_max"]), alphabet)
        result["oracle_coverage"] = coverage(heavy, truth)
    return result


def format_sweep_table(result: dict) -> str:
    header = f"{'epsilon':>8} {'sampler':>8} {'passes':>6} {'N':>7} {'coverage':>9} {'stderr':>8}"
    lines = [header, "-" * len(header)]
    for r in result["points"]:
        lines.append(
            f"{r['epsilon']:>8g} {r['sampler']:>8} {r['passes']:>6d} {r['N']:>7d} "
            f"{r['coverage_mean']:>9.4f} {r['coverage_stderr']:>8.4f}"
        )
    if "oracle_coverage" in result:
        lines.append(f"{'no-LDP oracle':>40} {result['oracle_coverage']:>9.4f}")
    return "\n".join(lines) + "\n"


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.epsilons:
        cfg["sweep"]["epsilons"] = args.epsilons
    if args.samplers:
        cfg["sweep"]["samplers"] = args.samplers
    if args.passes_axis:
        cfg["sweep"]["passes"] = args.passes_axis
    if args.seeds_per_point:
        cfg["sweep"]["seeds_per_point"] = args.seeds_per_point
    result = run_sweep(cfg, workers=args.workers)
    out = args.out or cfg.get("output")
    if out:
        _write(out, _dump(result))
        _write(Path(out).with_suffix(".txt"), format_sweep_table(result))
    sys.stdout.write(format_sweep_table(result))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config) if args.config else None
    alphabet = resolve_alphabet(cfg) if cfg else _alphabet_arg(args.alphabet)
    for p in (args.report, args.truth, args.known_vocab):
        if p and not Path(p).exists():
            raise IOFailure(f"{p} not found")
    try:
        report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.report}: not JSON: {exc}") from None
    known = frozenset(load_word_list(args.known_vocab, alphabet)) if args.known_vocab else frozenset()
    truth = load_ground_truth(args.truth, alphabet, known)
    heavy = {terminate(w, alphabet) for w in report["heavy_hitters"]}
    result = {
        "coverage": coverage(heavy, truth),
        "num_heavy_hitters": len(heavy),
        "num_target": len(truth.target),
        "found_in_target": len(heavy & truth.target),
    }
    _emit(args, cfg, _dump(result))
    return EXIT_OK


def _alphabet_arg(spec: str | None) -> Alphabet:
    if spec in (None, "lowercase"):
        return Alphabet.lowercase()
    if spec == "printable":
        return Alphabet.printable()
    if not Path(spec).exists():
        raise IOFailure(f"alphabet file {spec} not found")
    return load_alphabet(spec)


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldptrie", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML experiment file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output path")
        p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("genpop", help="generate a synthetic population")
    common(p)
    p.add_argument("--force", action="store_true", help="overwrite existing files")
    p.set_defaults(func=cmd_genpop)

    p = sub.add_parser("discover", help="run heavy-hitter discovery")
    common(p)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--B", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--D", type=int)
    p.add_argument("--eta-max", dest="eta_max", type=int)
    p.add_argument("--passes", type=int)
    p.add_argument("--sampler", choices=["greedy", "random"])
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("account", help="closed-form central epsilon")
    common(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, default=1e-10)
    p.add_argument("--n", type=int, required=True, help="total contributions N*B")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_account)

    p = sub.add_parser("kanon", help="approximate k-anonymity certification")
    common(p)
    p.add_argument("--eta-max", dest="eta_max", type=int, required=True)
    p.add_argument("--alphabet-size", dest="alphabet_size", type=int, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--B", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--method", choices=["exact", "binomial-marginals"])
    p.set_defaults(func=cmd_kanon)

    p = sub.add_parser("sweep", help="coverage over a parameter grid")
    common(p)
    p.add_argument("--epsilons", type=float, nargs="+")
    p.add_argument("--samplers", nargs="+", choices=["greedy", "random"])
    p.add_argument("--passes", dest="passes_axis", type=int, nargs="+")
    p.add_argument("--seeds-per-point", dest="seeds_per_point", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="coverage of a discovery report")
    common(p)
    p.add_argument("--report", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--known-vocab", dest="known_vocab")
    p.add_argument("--alphabet", help="lowercase, printable or an alphabet file")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except InsufficientUsersError as exc:
        print(f"error: insufficient users: {exc}", file=sys.stderr)
        return EXIT_RESOURCES
    except IOFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, InapplicableBound, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
