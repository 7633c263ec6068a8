"""Service launcher: ``oracle-service serve --weights FILE --bind HOST:PORT``."""

import argparse
import sys

import uvicorn

from .app import create_app, load_weights_file
from .models import WeightsError


def parse_bind(text: str) -> tuple[str, int]:
    host, sep, port_text = text.rpartition(":")
    if not sep or not host:
        raise ValueError(f"bind address must look like HOST:PORT, got {text!r}")
    try:
        port = int(port_text)
    except ValueError as exc:
        raise ValueError(f"bind port must be an integer, got {port_text!r}") from exc
    if not 0 <= port <= 65535:
        raise ValueError(f"bind port {port} outside 0..65535")
    return host, port


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oracle-service")
    sub = parser.add_subparsers(dest="command", required=True)
    serve = sub.add_parser("serve", help="serve a weights file over the v1 protocol")
    serve.add_argument("--weights", required=True, help="path to a weights JSON file")
    serve.add_argument("--bind", default="127.0.0.1:8787", help="HOST:PORT to listen on")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        host, port = parse_bind(args.bind)
        doc = load_weights_file(args.weights)
    except (WeightsError, ValueError) as exc:
        print(f"oracle-service: {exc}", file=sys.stderr)
        return 2
    uvicorn.run(create_app(doc), host=host, port=port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
