"""Command-line interface: export-labels and export-captions."""

from __future__ import annotations

import argparse
import sys

from .encoders import EncoderUnavailable, get_encoder
from .export import (DEFAULT_LABEL_TEMPLATE, export_caption_embeddings,
                     export_label_embeddings, load_captions)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embexport",
        description="Build embedding databases for the brain-signal codec")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-labels", help="label texts -> EMBD database")
    p.add_argument("--labels", required=True,
                   help="text file, one label per line")
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=768)
    p.add_argument("--backend", choices=("hashed", "st"), default="hashed")
    p.add_argument("--model", help="sentence-transformers model (st backend)")
    p.add_argument("--template", default=DEFAULT_LABEL_TEMPLATE,
                   help="prompt wrapped around each label")

    p = sub.add_parser("export-captions", help="captions JSON -> EMBD database")
    p.add_argument("--captions", required=True,
                   help="JSON {index: text} or a dataset manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--backend", choices=("hashed", "st"), default="hashed")
    p.add_argument("--model")
    return parser


def run(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        encoder = get_encoder(args.backend, args.dim, args.model)
        if args.command == "export-labels":
            with open(args.labels, encoding="utf-8") as fh:
                labels = [line.strip() for line in fh if line.strip()]
            count = export_label_embeddings(labels, args.out, encoder,
                                            template=args.template)
        else:
            count = export_caption_embeddings(load_captions(args.captions),
                                              args.out, encoder)
    except EncoderUnavailable as exc:
        print(f"encoder unavailable: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {count} embeddings to {args.out}")
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
