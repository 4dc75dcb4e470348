"""Command-line experiment runner.

Exit status: 0 on success, 1 on a usage error (bad flag, bad config key or
value, missing input path), 2 on a data error (malformed dataset, lexicon or
emoticon file; no seed sentences; a failed benchmark fold).
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import itertools
import json
import os
import sys
from dataclasses import dataclass, field

from .core import Dataset, TensentError, load_dataset, split_folds, tokenize
from .ensemble import (DEFAULT_WEIGHT_GRID, BootstrapConfig, bootstrap, bootstrap_confidence_sweep,
                       exhaustive_weight_search, majority_vote_codes)
from .evaluation import (MACRO_VARIANTS, BenchmarkConfig, confusion_matrix, emoticon_quality,
                         format_report, macro_f1, run_benchmark, write_mean_ranks, write_report)
from .learner import METHOD_ENCODINGS, HyperParams
from .lexicons import (EmoticonMap, MethodBank, annotate_emoticons, default_emoticon_map,
                       default_lexicon_dir, load_bank, load_emoticon_map, run_base_methods)
from .synth import generate_dataset, generate_family, write_family

LEXICON_ENV = "POLARITY_LEXICON_DIR"
SWEEP_AGREEMENT = tuple(range(3, 11))
SWEEP_CONFIDENCE = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
FIXTURE = "fixture.tsv"
SYNTH_SEED = 42


class UsageError(Exception):
    """Bad flags, config keys or paths; reported with exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass
class ExperimentConfig:
    datasets: list[str] = field(default_factory=list)
    lexicon_dir: str | None = None
    emoticon_map: str | None = None
    bootstrap: BootstrapConfig = BootstrapConfig()
    param_grid: tuple[HyperParams, ...] = (HyperParams(),)
    folds: int = 5
    inner_k: int = 3
    weight_grid: tuple[float, ...] | None = DEFAULT_WEIGHT_GRID
    macro_variant: str = "per_class"
    out: str = "tensent-out"
    seed: int = 0
    threads: int = 1


# ---------------------------------------------------------------------------
# configuration file

def _split_list(raw: str) -> list[str]:
    return [p.strip() for p in raw.replace("\n", ",").split(",") if p.strip()]


def _as_bool(key: str, raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "yes", "true", "on"):
        return True
    if low in ("0", "no", "false", "off"):
        return False
    raise UsageError(f"config key {key!r}: expected a boolean, got {raw!r}")


def _as_number(key: str, raw: str, kind):
    try:
        return kind(raw.strip())
    except ValueError:
        raise UsageError(f"config key {key!r}: cannot parse {raw!r}") from None


def _optional_ints(key: str, raw: str) -> list[int | None]:
    return [None if p.lower() == "none" else _as_number(key, p, int) for p in _split_list(raw)]


_KEYS = {
    "data": {"datasets", "lexicon_dir", "emoticon_map"},
    "bootstrap": {"agreement", "confidence", "use_bow", "use_emoticons", "min_df", "method_encoding"},
    "forest": {"n_trees", "max_depth", "min_leaf", "features_per_split"},
    "evaluation": {"folds", "inner_k", "weight_grid", "macro_variant"},
    "run": {"seed", "threads", "out"},
}


def load_config(path: str) -> tuple[ExperimentConfig, set[str]]:
    """Parse an INI-style config; returns the config and the set of keys it set.

    Relative paths are resolved against the config file's directory.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise UsageError(f"config {path}: {exc}") from None
    base = os.path.dirname(os.path.abspath(path))
    cfg = ExperimentConfig()
    seen: set[str] = set()
    boot: dict = {}
    forest: dict = {}

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    for section in parser.sections():
        if section not in _KEYS:
            raise UsageError(f"config {path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _KEYS[section]:
                raise UsageError(f"config {path}: unknown key {key!r} in [{section}]")
            seen.add(key)
            if key == "datasets":
                cfg.datasets = [resolve(p) for p in _split_list(raw)]
            elif key in ("lexicon_dir", "emoticon_map", "out"):
                setattr(cfg, key, resolve(raw.strip()))
            elif key == "agreement":
                boot["agreement_threshold"] = _as_number(key, raw, int)
            elif key == "confidence":
                boot["confidence_threshold"] = _as_number(key, raw, float)
            elif key in ("use_bow", "use_emoticons"):
                boot[key] = _as_bool(key, raw)
            elif key == "min_df":
                boot[key] = _as_number(key, raw, int)
            elif key == "method_encoding":
                boot[key] = raw.strip()
            elif key in ("n_trees", "min_leaf"):
                forest[key] = [_as_number(key, p, int) for p in _split_list(raw)]
            elif key in ("max_depth", "features_per_split"):
                forest[key] = _optional_ints(key, raw)
            elif key in ("folds", "inner_k", "seed", "threads"):
                setattr(cfg, key, _as_number(key, raw, int))
            elif key == "weight_grid":
                cfg.weight_grid = None if raw.strip().lower() == "none" else \
                    tuple(_as_number(key, p, float) for p in _split_list(raw))
            elif key == "macro_variant":
                cfg.macro_variant = raw.strip()
    try:
        cfg.bootstrap = dataclasses.replace(cfg.bootstrap, **boot)
    except ValueError as exc:
        raise UsageError(f"config {path}: {exc}") from None
    if forest:
        keys = list(forest)
        cfg.param_grid = tuple(HyperParams(**dict(zip(keys, combo)))
                               for combo in itertools.product(*(forest[k] for k in keys)))
    return cfg, seen


# ---------------------------------------------------------------------------
# argument handling

def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="INI config file; flags override its values")
    p.add_argument("--seed", type=int, help="seed for folds and forests (default 0)")
    p.add_argument("--agreement", type=int, metavar="N", help="agreement threshold A (default 7)")
    p.add_argument("--confidence", type=float, metavar="X", help="confidence threshold C (default 0.7)")
    p.add_argument("--no-bow", action="store_true", help="method outputs only, no bag-of-words features")
    p.add_argument("--no-emoticons", action="store_true", help="do not add emoticon-labeled sentences")
    p.add_argument("--threads", type=int, metavar="N", help="worker threads (default: available cores)")
    p.add_argument("--out", metavar="DIR", help="output directory (default tensent-out)")
    p.add_argument("--lexicon-dir", metavar="DIR",
                   help=f"lexicon directory (fallback ${LEXICON_ENV}, then the bundled bank)")
    p.add_argument("--emoticon-map", metavar="PATH", help="emoticon map file (default: bundled)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = _Parser(prog="tensent", description="Agreement-seeded self-training over lexicon sentiment methods.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("predict", parents=[common], help="label an unlabeled dataset with 10SENT")
    p.add_argument("dataset", nargs="?", help="dataset file (default: the bundled fixture)")
    p = sub.add_parser("vote", parents=[common], help="label a dataset by majority voting")
    p.add_argument("dataset", nargs="?", help="dataset file (default: the bundled fixture)")
    p = sub.add_parser("benchmark", parents=[common], help="cross-validated comparison on labeled datasets")
    p.add_argument("datasets", nargs="*", help="dataset files (or [data] datasets in the config)")
    p.add_argument("--folds", type=int, metavar="K", help="number of folds (default 5)")
    p.add_argument("--no-weight-search", action="store_true",
                   help="skip the exhaustive weighted-voting upperbound")
    p = sub.add_parser("sweep", parents=[common], help="Macro-F1 over agreement x confidence thresholds")
    p.add_argument("datasets", nargs="*", help="dataset files (or [data] datasets in the config)")
    p.add_argument("--folds", type=int, metavar="K", help="number of folds (default 5)")
    p = sub.add_parser("weights", parents=[common], help="exhaustive weight search on a labeled dataset")
    p.add_argument("dataset")
    p.add_argument("--grid", metavar="W,W,...", help="weight grid (default 0,0.25,0.5,0.75,1)")
    p = sub.add_parser("emoticons", parents=[common], help="emoticon label accuracy and coverage")
    p.add_argument("datasets", nargs="+")
    p = sub.add_parser("synth", parents=[common],
                       help=f"write the synthetic dataset family (seed defaults to {SYNTH_SEED})")
    p.add_argument("--size", type=int, default=2000, help="sentences per dataset (default 2000)")
    p.add_argument("--count", type=int, default=8, help="number of datasets (default 8)")
    return parser


def _resolve(args: argparse.Namespace) -> ExperimentConfig:
    """Merge defaults, config file and flags, then validate every path."""
    if args.config is not None:
        if not os.path.isfile(args.config):
            raise UsageError(f"--config: no such file {args.config!r}")
        cfg, seen = load_config(args.config)
    else:
        cfg, seen = ExperimentConfig(), set()
    if "threads" not in seen:
        cfg.threads = os.cpu_count() or 1
    boot = {}
    if args.seed is not None:
        cfg.seed = args.seed
    boot["seed"] = cfg.seed
    if args.agreement is not None:
        boot["agreement_threshold"] = args.agreement
    if args.confidence is not None:
        boot["confidence_threshold"] = args.confidence
    if args.no_bow:
        boot["use_bow"] = False
    if args.no_emoticons:
        boot["use_emoticons"] = False
    try:
        cfg.bootstrap = dataclasses.replace(cfg.bootstrap, **boot)
    except ValueError as exc:
        flag = "--agreement" if "agreement" in str(exc).lower() else "--confidence"
        raise UsageError(f"{flag}: {exc}") from None
    if args.threads is not None:
        cfg.threads = args.threads
    if cfg.threads < 1:
        raise UsageError("--threads: must be >= 1")
    if args.out is not None:
        cfg.out = args.out
    if args.lexicon_dir is not None:
        cfg.lexicon_dir = args.lexicon_dir
    elif cfg.lexicon_dir is None and os.environ.get(LEXICON_ENV):
        cfg.lexicon_dir = os.environ[LEXICON_ENV]
    if args.emoticon_map is not None:
        cfg.emoticon_map = args.emoticon_map
    if getattr(args, "folds", None) is not None:
        cfg.folds = args.folds
    if getattr(args, "no_weight_search", False):
        cfg.weight_grid = None
    if getattr(args, "grid", None) is not None:
        try:
            cfg.weight_grid = tuple(float(p) for p in _split_list(args.grid))
        except ValueError:
            raise UsageError(f"--grid: cannot parse {args.grid!r}") from None
        if not cfg.weight_grid:
            raise UsageError("--grid: empty grid")
    given = getattr(args, "datasets", None) or ([args.dataset] if getattr(args, "dataset", None) else [])
    if given:
        cfg.datasets = list(given)

    if cfg.folds < 2:
        raise UsageError("--folds: must be >= 2")
    if cfg.bootstrap.method_encoding not in METHOD_ENCODINGS:
        raise UsageError(f"method_encoding: expected one of {', '.join(METHOD_ENCODINGS)}")
    if cfg.macro_variant not in MACRO_VARIANTS:
        raise UsageError(f"macro_variant: expected one of {', '.join(MACRO_VARIANTS)}")
    if cfg.lexicon_dir is not None and not os.path.isdir(cfg.lexicon_dir):
        raise UsageError(f"lexicon directory not found: {cfg.lexicon_dir!r}")
    if cfg.emoticon_map is not None and not os.path.isfile(cfg.emoticon_map):
        raise UsageError(f"--emoticon-map: no such file {cfg.emoticon_map!r}")
    for path in cfg.datasets:
        if not os.path.isfile(path):
            raise UsageError(f"dataset not found: {path!r}")
    if os.path.exists(cfg.out) and not os.path.isdir(cfg.out):
        raise UsageError(f"--out: {cfg.out!r} is not a directory")
    return cfg


def _bank(cfg: ExperimentConfig) -> MethodBank:
    return load_bank(cfg.lexicon_dir or default_lexicon_dir())


def _emoticons(cfg: ExperimentConfig) -> EmoticonMap:
    return load_emoticon_map(cfg.emoticon_map) if cfg.emoticon_map else default_emoticon_map()


def fixture_path() -> str:
    from importlib import resources
    return str(resources.files("tensent") / "data" / FIXTURE)


def _datasets(cfg: ExperimentConfig, command: str, default_fixture: bool = False) -> list[Dataset]:
    paths = cfg.datasets or ([fixture_path()] if default_fixture else [])
    if not paths:
        raise UsageError(f"{command}: no dataset given (positional argument or [data] datasets)")
    return [load_dataset(p) for p in paths]


def _benchmark_config(cfg: ExperimentConfig) -> BenchmarkConfig:
    return BenchmarkConfig(cfg.bootstrap, cfg.folds, cfg.seed, cfg.param_grid, cfg.inner_k,
                           cfg.weight_grid, cfg.macro_variant, cfg.threads)


def _write_tsv(path: str, header: tuple, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(str(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# commands

def cmd_predict(cfg: ExperimentConfig) -> int:
    bank, emo = _bank(cfg), _emoticons(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    for ds in _datasets(cfg, "predict", default_fixture=True):
        blind = ds.without_gold()
        result = bootstrap(blind, blind, bank, cfg.bootstrap, cfg.param_grid, emo, cfg.threads)
        path = os.path.join(cfg.out, f"{ds.name}.predictions.tsv")
        _write_tsv(path, ("id", "label", "confidence"),
                   ((rid, result.predictions[rid][0].text, repr(result.predictions[rid][1]))
                    for rid in blind.ids))
        print(f"{ds.name}: {len(blind)} sentences, seed set {result.seed_size}, "
              f"training set {result.final_size} -> {path}")
    return 0


def cmd_vote(cfg: ExperimentConfig) -> int:
    bank, emo = _bank(cfg), _emoticons(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    for ds in _datasets(cfg, "vote", default_fixture=True):
        matrix = run_base_methods(bank, ds, cfg.threads, list(emo.keys()))
        labels = majority_vote_codes(matrix.codes(ds.ids))
        path = os.path.join(cfg.out, f"{ds.name}.votes.tsv")
        _write_tsv(path, ("id", "label"), ((rid, lab.text) for rid, lab in zip(ds.ids, labels)))
        print(f"{ds.name}: {len(ds)} sentences -> {path}")
    return 0


def cmd_benchmark(cfg: ExperimentConfig) -> int:
    bank, emo = _bank(cfg), _emoticons(cfg)
    datasets = _datasets(cfg, "benchmark")
    bcfg = _benchmark_config(cfg)
    reports = []
    for ds in datasets:
        report = run_benchmark(ds, bank, bcfg, emo)
        write_report(report, cfg.out)
        print(format_report(report))
        print()
        reports.append(report)
    ranks = write_mean_ranks(reports, cfg.out)
    print("mean rank over datasets:")
    for method, rank in sorted(ranks.items(), key=lambda kv: (kv[1], kv[0])):
        print(f"  {method:<28} {rank:6.3f}")
    return 0


def sweep_grid(ds: Dataset, bank: MethodBank, cfg: ExperimentConfig, emo: EmoticonMap,
               agreements=SWEEP_AGREEMENT, confidences=SWEEP_CONFIDENCE) -> dict[tuple[int, float], float | None]:
    """Mean test Macro-F1 of 10SENT per (A, C).

    None marks cells where A exceeds the number of methods or some fold has no seed sentence.
    """
    keys = list(emo.keys())
    ds = annotate_emoticons(ds, emo)
    matrix = run_base_methods(bank, ds, cfg.threads, keys)
    tokens = {r.id: tokenize(r.text, keys) for r in ds.records}
    folds = split_folds(ds, cfg.folds, cfg.seed)
    sums: dict[tuple[int, float], float | None] = {(a, c): 0.0 for a in agreements for c in confidences}
    for fold in range(cfg.folds):
        train, test = folds.split(ds, fold)
        truth = [r.gold for r in test.records]
        for a in agreements:
            boot = dataclasses.replace(cfg.bootstrap, agreement_threshold=a)
            if a > len(bank.names):
                for c in confidences:
                    sums[(a, c)] = None
                continue
            try:
                results = bootstrap_confidence_sweep(train.without_gold(), test.without_gold(), bank, boot,
                                                     confidences, cfg.param_grid, emo, cfg.threads,
                                                     matrix, tokens)
            except TensentError:
                for c in confidences:
                    sums[(a, c)] = None
                continue
            for c, res in results.items():
                if sums[(a, c)] is not None:
                    pred = [res.predictions[r.id][0] for r in test.records]
                    sums[(a, c)] += macro_f1(confusion_matrix(truth, pred), cfg.macro_variant)
    return {k: (None if v is None else v / cfg.folds) for k, v in sums.items()}


def cmd_sweep(cfg: ExperimentConfig) -> int:
    bank, emo = _bank(cfg), _emoticons(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    for ds in _datasets(cfg, "sweep"):
        if not ds.fully_labeled:
            raise TensentError(f"dataset {ds.name!r} needs gold labels for a sweep")
        grid = sweep_grid(ds, bank, cfg, emo)
        path = os.path.join(cfg.out, f"{ds.name}.sweep.tsv")
        header = ("agreement",) + tuple(f"C={c:g}" for c in SWEEP_CONFIDENCE)
        rows = [(a,) + tuple("" if grid[(a, c)] is None else repr(grid[(a, c)]) for c in SWEEP_CONFIDENCE)
                for a in SWEEP_AGREEMENT]
        _write_tsv(path, header, rows)
        print(f"{ds.name}: Macro-F1 (%) by agreement (rows) and confidence (columns)")
        print("   A " + " ".join(f"{c:>6g}" for c in SWEEP_CONFIDENCE))
        for a in SWEEP_AGREEMENT:
            cells = " ".join("     -" if grid[(a, c)] is None else f"{100 * grid[(a, c)]:6.2f}"
                             for c in SWEEP_CONFIDENCE)
            print(f"  {a:2d} {cells}")
        print(f"-> {path}")
    return 0


def cmd_weights(cfg: ExperimentConfig) -> int:
    bank, emo = _bank(cfg), _emoticons(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    grid = cfg.weight_grid or DEFAULT_WEIGHT_GRID
    for ds in _datasets(cfg, "weights"):
        if not ds.fully_labeled:
            raise TensentError(f"dataset {ds.name!r} needs gold labels for a weight search")
        matrix = run_base_methods(bank, ds, cfg.threads, list(emo.keys()))
        weights, f1 = exhaustive_weight_search(matrix.codes(ds.ids), [r.gold for r in ds.records],
                                               grid, cfg.threads)
        path = os.path.join(cfg.out, f"{ds.name}.weights.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"dataset": ds.name, "grid": list(grid), "macro_f1": f1,
                       "weights": dict(zip(bank.names, weights.weights))}, fh, indent=1, sort_keys=True)
            fh.write("\n")
        print(f"{ds.name}: Macro-F1 {100 * f1:.2f}")
        for name, w in zip(bank.names, weights.weights):
            print(f"  {name:<20} {w:g}")
    return 0


def cmd_emoticons(cfg: ExperimentConfig) -> int:
    emo = _emoticons(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    for ds in _datasets(cfg, "emoticons"):
        quality = emoticon_quality(ds, emo)
        path = os.path.join(cfg.out, f"{ds.name}.emoticons.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"dataset": ds.name, "accuracy": quality.accuracy, "coverage": quality.coverage},
                      fh, indent=1, sort_keys=True)
            fh.write("\n")
        acc = "-" if quality.accuracy is None else f"{quality.accuracy:.4f}"
        print(f"{ds.name}: emoticon accuracy {acc}, coverage {quality.coverage:.4f}")
    return 0


def cmd_synth(cfg: ExperimentConfig, size: int, count: int, seed: int) -> int:
    if size < 2 or count < 1:
        raise UsageError("--size/--count: too small")
    family = generate_family(count, size, seed=seed)
    # emoticons on 10% of sentences, always matching the gold label
    family.append(generate_dataset(0, size, seed=seed, emoticon_rate=0.10, emoticon_noise=0.0,
                                   name="synth_emoticons"))
    for path in write_family(cfg.out, family):
        print(path)
    return 0


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
        if args.command == "synth":
            return cmd_synth(cfg, args.size, args.count, SYNTH_SEED if args.seed is None else args.seed)
        return {"predict": cmd_predict, "vote": cmd_vote, "benchmark": cmd_benchmark,
                "sweep": cmd_sweep, "weights": cmd_weights, "emoticons": cmd_emoticons}[args.command](cfg)
    except UsageError as exc:
        print(f"tensent: error: {exc}", file=sys.stderr)
        return 1
    except (TensentError, ValueError, OSError) as exc:
        print(f"tensent: data error: {exc}", file=sys.stderr)
        return 2


def main(argv: list[str] | None = None) -> int:
    try:
        return dispatch(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1


if __name__ == "__main__":
    sys.exit(main())
