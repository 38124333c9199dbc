"""CLI: mugcat-adapter serve --stage embed --checkpoint <path-or-id> ..."""

import argparse
import logging
from typing import Optional

from .config import AdapterConfig
from .server import serve_adapter


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="mugcat-adapter", description="serve a pretrained model behind the mugcat backend protocol")
    sub = parser.add_subparsers(dest="command", required=True)
    serve = sub.add_parser("serve", help="run one adapter")
    serve.add_argument("--stage", required=True, choices=["recognize", "synthesize", "caption", "embed", "image_features"])
    serve.add_argument("--checkpoint", required=True, help="path or model identifier for the stage's framework")
    serve.add_argument("--name", default="adapter")
    serve.add_argument("--version", default="0")
    serve.add_argument("--device", default="cpu")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=9200)
    serve.add_argument("--embedding-dim", type=int, default=None)
    serve.add_argument("--vocabulary-size", type=int, default=None)
    serve.add_argument("--input-resolution", default=None, help="WxH the recognizer expects, e.g. 224x224")
    serve.add_argument("--lazy", action="store_true", help="defer checkpoint load to the first request")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    resolution = None
    if args.input_resolution:
        w, h = args.input_resolution.lower().split("x")
        resolution = (int(w), int(h))
    config = AdapterConfig(
        stage=args.stage,
        checkpoint=args.checkpoint,
        name=args.name,
        version=args.version,
        device=args.device,
        embedding_dim=args.embedding_dim,
        vocabulary_size=args.vocabulary_size,
        input_resolution=resolution,
    )
    serve_adapter(config, host=args.host, port=args.port, eager=not args.lazy)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
