"""Sidecar entry point: serve the HTTP API or export a CEMB store."""

from __future__ import annotations

import argparse
import sys

from .app import create_app
from .encoders import EncodingError, make_encoder
from .export import export_store, load_manifest
from .wordvec import WordVecTable


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="craft-sidecar", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("serve", help="run the embedding service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8791)
    p.add_argument("--model", default="hashed",
                   help="'hashed' (deterministic fixture encoder) or 'clip:<ref>'")
    p.add_argument("--wordvec", default=None,
                   help="word-vector table for /similarity")

    p = sub.add_parser("export", help="encode a manifest into a CEMB file")
    p.add_argument("--manifest", required=True,
                   help='JSON {"texts": [...], "images": [...]}')
    p.add_argument("--out", required=True)
    p.add_argument("--model", default="hashed")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1
    try:
        if args.command == "serve":
            import uvicorn

            encoder = make_encoder(args.model)
            wordvec = WordVecTable(args.wordvec) if args.wordvec else None
            uvicorn.run(create_app(encoder, wordvec), host=args.host, port=args.port)
            return 0
        if args.command == "export":
            encoder = make_encoder(args.model)
            report = export_store(encoder, load_manifest(args.manifest), args.out)
            print(f"wrote {report.written} entries to {args.out}")
            for key, reason in report.skipped:
                print(f"skipped {key}: {reason}", file=sys.stderr)
            return 0
    except (EncodingError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
