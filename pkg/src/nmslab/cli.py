"""Command-line front end: ``nms run | validate | list-experiments``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nms", description="Fractional minimal surface experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment configuration")
    r.add_argument("config")
    r.add_argument("--out", default=".", help="output directory (default: current directory)")
    r.add_argument("--threads", type=int, default=None, help="thread count for the numeric libraries")
    r.add_argument("--cache", default=None, help="result cache directory (default: $NMS_CACHE_DIR)")
    v = sub.add_parser("validate", help="parse and check a configuration without running it")
    v.add_argument("config")
    sub.add_parser("list-experiments", help="list experiment ids")
    return p


def _error(record: dict, out_dir: str | None = None) -> int:
    text = json.dumps({"status": "error", "error": record}, sort_keys=True)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / "error.json").write_text(text + "\n", encoding="utf-8")
        except OSError:
            pass
    return 2


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if getattr(args, "threads", None):
        if args.threads < 1:
            return _error({"kind": "usage", "message": "--threads must be positive"})
        # must happen before numpy / scipy start their thread pools
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)

    from .config import SCHEMAS, load_config
    from .errors import NmsError

    if args.command == "list-experiments":
        for key, (desc, _, _) in SCHEMAS.items():
            print(f"{key}\t{desc}")
        return 0
    try:
        cfg = load_config(args.config)
    except NmsError as exc:
        return _error(exc.to_record())
    except OSError as exc:
        return _error({"kind": "filesystem", "message": str(exc)})
    if args.command == "validate":
        print(json.dumps({"status": "ok", "experiment": cfg.experiment, "config_hash": cfg.hash()}))
        return 0

    from .experiments import run_and_write

    try:
        report = run_and_write(cfg, args.out, cache=args.cache)
    except NmsError as exc:
        return _error(exc.to_record(), args.out)
    except OSError as exc:
        return _error({"kind": "filesystem", "message": str(exc)}, args.out)
    print(json.dumps({"status": "ok", "experiment": cfg.experiment, "rows": len(report.rows),
                      "config_hash": report.config_hash, "cached": report.cached}))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
