"""Command line entry point: ``dragsim run``, ``dragsim sweep``, ``dragsim make-dataset``."""

from __future__ import annotations

import argparse
import ast
import logging
import sys
from dataclasses import fields
from pathlib import Path

from dragsim.harness import (
    ALL_SCHEMES,
    PLACEMENTS,
    SCORERS,
    ExperimentConfig,
    expand_grid,
    run_experiment,
    run_sweep,
    synthetic_records,
    write_records,
)
from dragsim.engine import CRAG_VARIANTS

# flag -> ExperimentConfig field
FLAGS = {
    "dataset": "dataset",
    "scheme": "scheme",
    "peers": "n",
    "connectivity": "m",
    "k": "k",
    "h_max": "h_max",
    "theta": "theta",
    "placement": "placement",
    "crag_variant": "crag_variant",
    "lm": "lm",
    "lm_url": "lm_url",
    "model": "model",
    "scorer": "scorer",
    "queries": "n_queries",
    "seed_topology": "seed_topology",
    "seed_placement": "seed_placement",
    "seed_walk": "seed_walk",
    "out_dir": "out_dir",
}

_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def read_config_file(path: str | Path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment. Keys are flag or field names."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        if "=" not in line:
            raise SystemExit(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        key = FLAGS.get(key, key)
        if key not in _FIELD_TYPES:
            raise SystemExit(f"{path}:{lineno}: unknown key {key!r}")
        parsed = _literal(value)
        if isinstance(parsed, (tuple, list)):
            # several values: a sweep axis
            out[key] = ",".join(str(v) for v in parsed)
        else:
            out[key] = _coerce(key, parsed)
    return out


def _literal(value: str):
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    try:
        return ast.literal_eval(value)
    except (ValueError, SyntaxError):
        return value


def _coerce(key: str, value):
    kind = str(_FIELD_TYPES[key])
    if kind.startswith("int"):
        return int(value)
    if kind.startswith("float"):
        return float(value)
    if kind.startswith("bool"):
        return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
    return None if value == "" else str(value)


def _add_common(p: argparse.ArgumentParser, sweep: bool) -> None:
    many = "comma-separated values sweep this axis" if sweep else None

    def opt(flag, **kw):
        if sweep:
            kw.pop("choices", None)
            kw["help"] = (kw.get("help", "") + f" ({many})").strip()
            kw["type"] = str
        p.add_argument(flag, default=None, **kw)

    p.add_argument("--config", help="key = value config file; command-line flags win")
    opt("--dataset", help="normalized JSONL dataset; synthetic data when omitted")
    opt("--scheme", choices=ALL_SCHEMES)
    opt("--peers", type=int, help="number of peers n")
    opt("--connectivity", type=int, help="Barabasi-Albert edges per new peer m")
    opt("--k", type=int, help="neighbours forwarded to per hop")
    opt("--h-max", type=int, help="hop limit")
    opt("--theta", type=float, help="relevance threshold")
    opt("--placement", choices=PLACEMENTS)
    opt("--crag-variant", choices=CRAG_VARIANTS)
    opt("--lm", choices=("mock", "http"))
    opt("--lm-url", help="base URL of the model server")
    opt("--model", help="model name sent to the server")
    opt("--scorer", choices=SCORERS, help="relevance backend")
    opt("--queries", type=int, help="number of queries")
    opt("--seed-topology", type=int)
    opt("--seed-placement", type=int)
    opt("--seed-walk", type=int)
    p.add_argument("--out-dir", default=None, help="where traces/answers/report files go")
    p.add_argument("--no-normalize", action="store_true", help="score answers on raw whitespace tokens")
    p.add_argument("--no-learn", action="store_true", help="freeze expertise caches")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dragsim", description="Distributed RAG overlay simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment")
    _add_common(run, sweep=False)
    sw = sub.add_parser("sweep", help="run a grid of experiments into one CSV")
    _add_common(sw, sweep=True)
    sw.add_argument("--workers", type=int, default=1)
    mk = sub.add_parser("make-dataset", help="write a synthetic JSONL dataset")
    mk.add_argument("path")
    mk.add_argument("--records", type=int, default=400)
    mk.add_argument("--topics", type=int, default=40)
    mk.add_argument("--seed", type=int, default=0)
    return parser


def _settings(args: argparse.Namespace) -> dict:
    settings = read_config_file(args.config) if args.config else {}
    for flag, name in FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            settings[name] = value
    if args.no_normalize:
        settings["normalize"] = False
    if args.no_learn:
        settings["learn"] = False
    return settings


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING)

    if args.command == "make-dataset":
        write_records(synthetic_records(args.records, args.topics, args.seed), args.path)
        return 0

    settings = _settings(args)
    if args.command == "run":
        report = run_experiment(ExperimentConfig(**settings))
        print(report.to_json())
        return 0

    axes = {}
    fixed = {}
    for name, value in settings.items():
        if isinstance(value, str) and "," in value and name in FLAGS.values():
            axes[name] = [_coerce(name, _literal(v.strip())) for v in value.split(",")]
        elif name in FLAGS.values() and name != "out_dir":
            fixed[name] = _coerce(name, _literal(value) if isinstance(value, str) else value)
        else:
            fixed[name] = value
    out_dir = Path(fixed.pop("out_dir", None) or ".")
    base = ExperimentConfig(**fixed)
    out_dir.mkdir(parents=True, exist_ok=True)
    text = run_sweep(expand_grid(base, axes), workers=args.workers, out_path=out_dir / "sweep.csv")
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
