"""Command line front end for the export jobs."""

from __future__ import annotations

import argparse
import sys

from .encoders import (load_image_encoder, load_text_encoder,
                       tiny_random_image_encoder, tiny_random_text_encoder)
from .export import export_images, export_texts
from .format import ExportError


def _image_encoder(name: str):
    if name == "tiny-random":
        return tiny_random_image_encoder()
    return load_image_encoder(name)


def _text_encoder(name: str):
    if name == "tiny-random":
        return tiny_random_text_encoder()
    return load_text_encoder(name)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Dump encoder token features in the engine's "
                    "embedding file format.")
    sub = parser.add_subparsers(dest="command", required=True)

    img = sub.add_parser("images", help="export patch features for images")
    img.add_argument("--inputs", nargs="+", required=True,
                     help="image files, one embedding instance each")
    img.add_argument("--encoder", default="tiny-random",
                     help="checkpoint name, or 'tiny-random'")
    img.add_argument("--out", required=True, help="output embedding file")

    txt = sub.add_parser("texts", help="export token features for captions")
    txt.add_argument("--captions", required=True,
                     help="tab-separated image_id, caption_id, text")
    txt.add_argument("--encoder", default="tiny-random",
                     help="checkpoint name, or 'tiny-random'")
    txt.add_argument("--out", required=True, help="output embedding file")
    txt.add_argument("--manifest", required=True,
                     help="output manifest fragment")
    txt.add_argument("--split-captions", action="store_true",
                     help="derive uniform captions from long descriptions")
    txt.add_argument("--split", default="train",
                     choices=("train", "val", "test"),
                     help="split tag written to the manifest")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "images":
            n = export_images(args.inputs, _image_encoder(args.encoder),
                              args.out)
        else:
            n = export_texts(args.captions, _text_encoder(args.encoder),
                             args.out, args.manifest,
                             split_captions=args.split_captions,
                             split=args.split)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"exported {n} instances")
    return 0


if __name__ == "__main__":
    sys.exit(main())
