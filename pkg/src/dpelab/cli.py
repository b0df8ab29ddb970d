"""Command line entry point: ``dpelab run|sweep|check-lemmas|emit-plot``.

Failures exit nonzero after printing one JSON line to stderr, e.g.
``{"error": "config", "key": "M", "message": "..."}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .harness import (
    ConfigError,
    LemmaConfig,
    TraceFormatError,
    check_lemmas,
    parse_config,
    run_experiment,
    sweep,
    write_csv,
)
from .plot import emit_plot, summary_path


def _fail(kind: str, message: str, **extra) -> int:
    print(json.dumps({"error": kind, **extra, "message": message}), file=sys.stderr)
    return 2 if kind in ("config", "usage") else 1


def _load_config(path: str):
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _lemma_config(path: str | None) -> LemmaConfig:
    if not path:
        return LemmaConfig()
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    known = set(asdict(LemmaConfig()))
    unknown = set(data) - known
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    return LemmaConfig(**data)


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    out = args.out or cfg.output_path
    if not out:
        raise ConfigError("output_path", "no output path given (--out or output_path=)")
    rows, summary, results = run_experiment(cfg)
    write_csv(rows, out)
    summary_path(out).write_text(summary.to_json())
    failed = [r for r in results if r.error]
    print(json.dumps({"rows": len(rows), "runs": len(results), "failed_runs": len(failed),
                      "out": str(out)}))
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    out = args.out or cfg.output_path
    if not out:
        raise ConfigError("output_path", "no output path given (--out or output_path=)")
    try:
        horizons = [int(float(h)) for h in args.horizons.split(",") if h.strip()]
    except ValueError:
        raise ConfigError("horizons", f"cannot parse {args.horizons!r}") from None
    if not horizons or min(horizons) < 1:
        raise ConfigError("horizons", "need positive horizons")
    rows, summaries = sweep(cfg, horizons)
    write_csv(rows, out)
    summary_path(out).write_text(json.dumps([asdict(s) for s in summaries], indent=2))
    print(json.dumps({"rows": len(rows), "horizons": horizons, "out": str(out)}))
    return 0


def cmd_check_lemmas(args) -> int:
    report = check_lemmas(_lemma_config(args.config))
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return 0 if report["passed"] else 1


def cmd_emit_plot(args) -> int:
    emit_plot(args.inp, args.out, args.lower_bound)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dpelab", description="Multiplayer bandit simulations with the DPE protocol."
    )
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment configuration")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a configuration at several horizons")
    s.add_argument("--config", required=True)
    s.add_argument("--horizons", required=True, help="comma separated, e.g. 1e4,1e5")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("check-lemmas", help="numeric checks of the concentration constants")
    c.add_argument("--out")
    c.add_argument("--config", help="JSON file overriding the default grids")
    c.set_defaults(func=cmd_check_lemmas)

    e = sub.add_parser("emit-plot", help="SVG regret chart from a trace CSV")
    e.add_argument("--in", dest="inp", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--lower-bound", type=float)
    e.set_defaults(func=cmd_emit_plot)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail("config", exc.message, key=exc.key)
    except TraceFormatError as exc:
        return _fail("csv", str(exc))
    except (OSError, json.JSONDecodeError) as exc:
        return _fail("io", str(exc))


if __name__ == "__main__":
    sys.exit(main())
