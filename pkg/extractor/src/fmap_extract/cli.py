"""fmap-extract: image -> feature grid files for fmap.

Single-image mode: --image/--backbone/--layer/--out (optional --bbox,
--size). Pair mode: --pair-config CONFIG.json runs all four extractions and
writes a manifest. Exit codes: 0 ok, 2 usage, 3 bad input, 4 backbone
unavailable.
"""

import argparse
import json
import sys

from fmap import FormatError, ShapeError, ValidationError

from .backbones import REGISTRY
from .errors import BackboneUnavailableError
from .extract import extract
from .manifest import extract_pair_manifest


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fmap-extract", description=__doc__)
    ap.add_argument("--image", help="input image path")
    ap.add_argument("--backbone", choices=sorted(REGISTRY), default="dinov2-b14")
    ap.add_argument("--layer", type=int, default=11)
    ap.add_argument("--bbox", default=None, metavar="X,Y,W,H",
                    help="crop before extraction")
    ap.add_argument("--size", type=int, default=None,
                    help="rescale long side to this many pixels (default: keep scale)")
    ap.add_argument("--native-size", action="store_true",
                    help="use the backbone's native input size (e.g. 518 for dinov2)")
    ap.add_argument("--out", help="output .npy path")
    ap.add_argument("--pair-config", default=None,
                    help="JSON config; extract all four grids for a pair instead")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.pair_config:
            manifest = extract_pair_manifest(args.pair_config)
            print(json.dumps(manifest["files"], sort_keys=True, indent=2))
            return 0
        if not args.image or not args.out:
            build_parser().error("--image and --out are required without --pair-config")
        bbox = tuple(int(v) for v in args.bbox.split(",")) if args.bbox else None
        if bbox is not None and len(bbox) != 4:
            raise ValidationError(f"--bbox needs four integers, got {args.bbox!r}")
        size = REGISTRY[args.backbone].native_size if args.native_size else args.size
        grid = extract(args.image, args.backbone, args.layer, args.out,
                       bbox=bbox, size=size)
        print(f"extract backbone={args.backbone} layer={args.layer} "
              f"grid={grid.h}x{grid.w}x{grid.d} out={args.out}")
        return 0
    except (FileNotFoundError, FormatError, ShapeError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except BackboneUnavailableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
