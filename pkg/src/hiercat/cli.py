"""Command-line interface.

Client subcommands talk to a running server (--addr) or open a data
directory directly (--data-dir) for offline use. All output is JSON lines.

Exit codes: 0 success, 2 syntax, 3 precondition, 4 conflict, 5 not found,
1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

from .client import CatalogClient
from .config import load_config
from .engine import CatalogEngine
from .errors import CatalogError
from .wire import WireError

_EXIT_CODES = {"syntax": 2, "precondition": 3, "conflict": 4, "not_found": 5, "internal": 1}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hiercat", description=__doc__)
    parser.add_argument("--addr", default=None, help="server address host:port")
    parser.add_argument("--data-dir", default=None, help="open a data directory directly")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the catalog server")
    serve.add_argument("--config", default=None, help="INI config file")
    serve.add_argument("--listen", default=None, help="listen address host:port")
    serve.add_argument("--workers-validate", type=int, default=None)
    serve.add_argument("--workers-write", type=int, default=None)
    serve.add_argument("--batch-size", type=int, default=None)
    serve.add_argument("--cc-scheme", choices=("ospl", "osl", "mgl"), default=None)

    query = sub.add_parser("query", help="execute a path query")
    query.add_argument("text")
    group = query.add_mutually_exclusive_group()
    group.add_argument("--at", type=int, default=None, help="read at this vid")
    group.add_argument("--snapshot", default=None, help="read at a named snapshot")

    commit = sub.add_parser("commit", help="commit a write set from a JSON file")
    commit.add_argument("--file", required=True, help="write-set JSON file ('-' = stdin)")

    snapshot = sub.add_parser("snapshot", help="create a named snapshot")
    snapshot.add_argument("name")
    snapshot.add_argument("--vid", type=int, default=None)

    clone = sub.add_parser("clone", help="clone a subtree")
    clone.add_argument("src")
    clone.add_argument("dest")
    clone.add_argument("--vid", type=int, default=None)

    sub.add_parser("status", help="show engine status")
    return parser


def _emit(obj):
    sys.stdout.write(json.dumps(obj, separators=(",", ":")) + "\n")


def _load_write_set(path: str) -> list:
    raw = sys.stdin.read() if path == "-" else open(path).read()
    write_set = json.loads(raw)
    if not isinstance(write_set, list):
        raise ValueError("write set must be a JSON array")
    return write_set


def _run_serve(args) -> int:
    config = load_config(
        args.config,
        listen=args.listen,
        data_dir=args.data_dir,
        cc_scheme=args.cc_scheme,
        workers_validate=args.workers_validate,
        workers_write=args.workers_write,
        batch_size=args.batch_size,
    )
    from .server import serve

    _emit({"listening": config.listen, "data_dir": config.engine.data_dir})
    serve(config)
    return 0


def _run_remote(args) -> int:
    host, port = (args.addr or "127.0.0.1:7421").rsplit(":", 1)
    with CatalogClient(host, int(port)) as client:
        if args.command == "query":
            for row in client.query(args.text, vid=args.at, snapshot=args.snapshot):
                _emit(row)
        elif args.command == "commit":
            vid = client.commit(_load_write_set(args.file))
            _emit({"committed_vid": vid})
        elif args.command == "snapshot":
            result = client.snapshot(args.name, args.vid)
            _emit({"name": result["name"], "vid": result["vid"]})
        elif args.command == "clone":
            vid = client.clone(args.src, args.dest, args.vid)
            _emit({"committed_vid": vid})
        elif args.command == "status":
            result = client.status()
            _emit({k: result[k] for k in ("read_vid", "active_txns", "watermark")})
    return 0


def _run_embedded(args) -> int:
    with CatalogEngine(data_dir=args.data_dir) as engine:
        if args.command == "query":
            rows = engine.execute_query(args.text, at=args.at, snapshot=args.snapshot)
            for path, doc in rows:
                _emit({"path": str(path), "value": doc.to_json_obj()})
        elif args.command == "commit":
            txn = engine.start_transaction("read_write")
            vid = engine.commit(txn, _load_write_set(args.file))
            _emit({"committed_vid": vid})
        elif args.command == "snapshot":
            entry = engine.snapshot(args.name, args.vid)
            _emit({"name": entry.name, "vid": entry.vid})
        elif args.command == "clone":
            vid = engine.clone(args.src, args.dest, args.vid)
            _emit({"committed_vid": vid})
        elif args.command == "status":
            _emit(engine.status())
    return 0


def main(argv: Optional[list] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            return _run_serve(args)
        if args.data_dir is not None and args.addr is None:
            return _run_embedded(args)
        return _run_remote(args)
    except WireError as exc:
        _emit({"error": exc.code, "message": exc.message})
        return _EXIT_CODES.get(exc.code, 1)
    except CatalogError as exc:
        _emit({"error": exc.wire_code, "message": str(exc)})
        return _EXIT_CODES.get(exc.wire_code, 1)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        _emit({"error": "internal", "message": str(exc)})
        return 1


if __name__ == "__main__":
    sys.exit(main())
