"""Command line for the embedding exporter."""

from __future__ import annotations

import argparse
import logging
import sys

from .dataset import DatasetError
from .encoders import DEFAULT_TEXT_MODEL, EncoderError
from .export import ExportError, ExportJob, run_export
from .meb import MebError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="magic-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="encode a dataset's text and images into a MEB1 store")
    p.add_argument("--data", required=True, help="JSON-lines dataset")
    p.add_argument("--images", default=None, help="directory holding the referenced image files")
    p.add_argument("--out", required=True, help="MEB1 output path")
    p.add_argument("--raw-image-features", action="store_true",
                   help="skip the projection; write 2048-dim image rows to a sibling store")
    p.add_argument("--text-model", default=DEFAULT_TEXT_MODEL,
                   help="transformer name or local path (default: %(default)s)")
    p.add_argument("--image-weights", default=None,
                   help="local .pth state dict for the image backbone (default: download pretrained)")
    p.add_argument("--mean-pool", action="store_true",
                   help="mean-pool token vectors instead of taking the classification token")
    p.add_argument("--device", default="cpu")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--projection-seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _build_parser().parse_args(argv)
    job = ExportJob(
        dataset_path=args.data,
        output_path=args.out,
        images_dir=args.images,
        text_model=args.text_model,
        image_weights=args.image_weights,
        raw_image_features=args.raw_image_features,
        mean_pool=args.mean_pool,
        device=args.device,
        batch_size=args.batch_size,
        projection_seed=args.projection_seed,
    )
    try:
        written = run_export(job)
    except (DatasetError, EncoderError, ExportError, MebError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"exported {written} rows to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
