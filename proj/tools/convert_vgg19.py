#!/usr/bin/env python3
"""Convert torchvision VGG19 weights into an mrsr tensor archive.

    # from a downloaded state dict (e.g. vgg19-dcbb9e9d.pth)
    python3 tools/convert_vgg19.py --state-dict vgg19-dcbb9e9d.pth --out vgg19.mrsr

    # seeded random init, for tests
    python3 tools/convert_vgg19.py --random-seed 0 --out vgg19_random.mrsr

Only the convolutional "features.N.weight/bias" tensors are kept. Point
perceptual.weights_path (or $MRSR_VGG19_WEIGHTS) at the output.
"""

import argparse
import hashlib
import os
import sys

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
import tensor_archive  # noqa: E402


def feature_tensors(state_dict):
    out = {}
    for name, t in state_dict.items():
        if name.startswith("features."):
            out[name] = t.detach().cpu().numpy().astype(np.float32)
    if len(out) != 32:
        raise SystemExit(f"expected 16 conv layers (32 tensors), found {len(out)}")
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--state-dict", help="torchvision vgg19 .pth file")
    src.add_argument("--random-seed", type=int, help="use torchvision's random init with this seed")
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    import torch
    import torchvision

    if args.state_dict:
        state = torch.load(args.state_dict, map_location="cpu")
        with open(args.state_dict, "rb") as f:
            source = {"source": os.path.basename(args.state_dict),
                      "sha256": hashlib.sha256(f.read()).hexdigest()}
    else:
        torch.manual_seed(args.random_seed)
        state = torchvision.models.vgg19(weights=None).state_dict()
        source = {"source": "torchvision random init", "seed": args.random_seed}
    tensor_archive.save(args.out, feature_tensors(state), {"format": "vgg19-features", **source})
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
