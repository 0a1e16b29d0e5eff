"""Generate a circularly-shifted synthetic feature pair plus ground truth.

Writes m.npy / n.npy (feature grids), gt_flow.npy and mask.npy under --out,
ready for `fmap match` and `fmap eval`.
"""

import argparse
from pathlib import Path

import numpy as np

from fmap import save_feature_grid, save_tensor, shift_ground_truth, shifted_pair


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=int, default=24)
    ap.add_argument("--w", type=int, default=24)
    ap.add_argument("--d", type=int, default=64)
    ap.add_argument("--shift", type=int, nargs=2, default=(3, 2), metavar=("DY", "DX"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--smoothing", type=int, default=4)
    ap.add_argument("--scale", type=float, default=10.0)
    ap.add_argument("--offset", type=float, default=30.0,
                    help="DC offset; keeps the median kernel bandwidth content-bearing")
    ap.add_argument("--noise", type=float, default=0.0, help="per-pixel feature noise std")
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    gm, gn = shifted_pair(args.h, args.w, args.d, shift=tuple(args.shift), seed=args.seed,
                          smoothing=args.smoothing, scale=args.scale, offset=args.offset)
    if args.noise > 0:
        rng = np.random.default_rng(args.seed + 1)
        from fmap import FeatureGrid
        gm = FeatureGrid(data=(gm.data + rng.normal(0, args.noise, gm.data.shape)).astype(np.float32))
        gn = FeatureGrid(data=(gn.data + rng.normal(0, args.noise, gn.data.shape)).astype(np.float32))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_feature_grid(gm, out / "m.npy")
    save_feature_grid(gn, out / "n.npy")
    gt, mask = shift_ground_truth(args.h, args.w, tuple(args.shift))
    save_tensor(out / "gt_flow.npy", gt.astype(np.float32))
    save_tensor(out / "mask.npy", mask.astype(np.float32))
    print(f"wrote {out}/m.npy n.npy gt_flow.npy mask.npy "
          f"({args.h}x{args.w}x{args.d}, shift={tuple(args.shift)}, noise={args.noise})")


if __name__ == "__main__":
    main()
