"""Command line entry point.

    simname <experiment> --config FILE [--workers K] [--out DIR] [--fail-fast] [--server URL]
    simname validate --config FILE [--experiment NAME]
    simname serve [--host H] [--port P]

Without ``--server`` everything runs in this process.  With it the command
submits the config to a running service, waits, and downloads the outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import yaml

from .config import EXPERIMENTS, ConfigError, load_config, validate
from .runner import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, WORKERS_ENV, resolve_workers, run


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simname", description="Collective NV-ensemble experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--workers", type=int, default=None,
                        help=f"parallel cells (default: ${WORKERS_ENV}, then config, then 1)")
        sp.add_argument("--out", type=Path, default=None, help="output directory")
        sp.add_argument("--fail-fast", action="store_true", default=None)
        sp.add_argument("--server", default=None, help="base URL of a running simname service")
        sp.add_argument("--poll", type=float, default=1.0, help=argparse.SUPPRESS)
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("--config", required=True, type=Path)
    v.add_argument("--experiment", choices=EXPERIMENTS, default=None)
    s = sub.add_parser("serve", help="start the HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    s.add_argument("--runs-dir", default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _print_errors(errors) -> None:
    for e in errors:
        print(f"config error: {e}", file=sys.stderr)


def _cmd_validate(args) -> int:
    try:
        data = yaml.safe_load(args.config.read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        _print_errors([f"cannot read {args.config}: {exc}"])
        return EXIT_CONFIG
    report = validate(data, args.experiment)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK if report["valid"] else EXIT_CONFIG


def _cmd_run_local(args, cfg) -> int:
    try:
        workers = resolve_workers(args.workers, cfg)
    except ValueError as exc:
        _print_errors([str(exc)])
        return EXIT_CONFIG
    res = run(cfg, workers=workers, out_dir=args.out, fail_fast=args.fail_fast)
    for e in res.errors:
        print(f"cell failed: {json.dumps(e, sort_keys=True)}", file=sys.stderr)
    print(f"{cfg.experiment}: {res.manifest['status']} -> {res.out_dir}")
    return res.exit_code


def _cmd_run_remote(args, cfg) -> int:
    import httpx

    base = args.server.rstrip("/")
    body = {"config": cfg.model_dump(mode="json"), "workers": args.workers,
            "fail_fast": args.fail_fast}
    with httpx.Client(base_url=base, timeout=60.0) as client:
        r = client.post("/runs", json=body)
        if r.status_code == 422:
            _print_errors(r.json().get("detail", []))
            return EXIT_CONFIG
        r.raise_for_status()
        run_id = r.json()["run_id"]
        while True:
            info = client.get(f"/runs/{run_id}").json()
            if info["status"] in ("done", "failed"):
                break
            time.sleep(args.poll)
        out = Path(args.out or cfg.output_path)
        out.mkdir(parents=True, exist_ok=True)
        names = list(info["files"]) + ["manifest.json"] + (["errors.json"] if info["errors"] else [])
        for name in names:
            f = client.get(f"/runs/{run_id}/files/{name}")
            if f.status_code == 200:
                (out / name).write_bytes(f.content)
    for e in info["errors"]:
        print(f"cell failed: {json.dumps(e, sort_keys=True)}", file=sys.stderr)
    if info.get("detail"):
        print(info["detail"], file=sys.stderr)
    print(f"{cfg.experiment}: {info['status']} -> {out}")
    return info["exit_code"] if info["exit_code"] is not None else EXIT_NUMERICAL


def _cmd_serve(args) -> int:
    import uvicorn

    from ..service.app import create_app

    uvicorn.run(create_app(args.runs_dir), host=args.host, port=args.port)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "validate":
        return _cmd_validate(args)
    if args.command == "serve":
        return _cmd_serve(args)
    try:
        cfg = load_config(args.config, args.command)
    except ConfigError as exc:
        _print_errors(exc.errors)
        return EXIT_CONFIG
    if args.server:
        return _cmd_run_remote(args, cfg)
    return _cmd_run_local(args, cfg)


if __name__ == "__main__":
    sys.exit(main())
