#!/usr/bin/env python3
"""Reference perceptual loss computed with torchvision's VGG19 in float64.

Writes a seeded random backbone (via convert_vgg19.py) and a reference
archive holding two grayscale images and the expected loss:

    python3 tools/perceptual_reference.py --weights w.mrsr --reference ref.mrsr

Recipe: replicate the gray channel 3x, ImageNet mean/std normalisation,
pre-activation outputs of conv1_2, conv2_2, conv3_4, conv4_4, conv5_4 with
weights 0.1, 0.1, 1, 1, 1, mean absolute difference per tap.
"""

import argparse
import os
import subprocess
import sys

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
import tensor_archive  # noqa: E402

TAPS = {2: 0.1, 7: 0.1, 16: 1.0, 25: 1.0, 34: 1.0}  # torchvision features index -> weight
MEAN = (0.485, 0.456, 0.406)
STD = (0.229, 0.224, 0.225)


def perceptual(model, x, y):
    import torch

    mean = torch.tensor(MEAN, dtype=torch.float64).view(1, 3, 1, 1)
    std = torch.tensor(STD, dtype=torch.float64).view(1, 3, 1, 1)
    hx, hy = ((t.repeat(1, 3, 1, 1) - mean) / std for t in (x, y))
    total = 0.0
    for i, layer in enumerate(model.features[:max(TAPS) + 1]):
        hx, hy = layer(hx), layer(hy)
        if i in TAPS:
            total += TAPS[i] * (hx - hy).abs().mean().item()
    return total


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--weights", required=True)
    ap.add_argument("--reference", required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--size", type=int, default=32)
    args = ap.parse_args()

    import torch
    import torchvision

    here = os.path.dirname(os.path.abspath(__file__))
    subprocess.run([sys.executable, os.path.join(here, "convert_vgg19.py"), "--random-seed",
                    str(args.seed), "--out", args.weights], check=True, stdout=subprocess.DEVNULL)
    weights, _ = tensor_archive.load(args.weights)
    model = torchvision.models.vgg19(weights=None).double().eval()
    model.load_state_dict({k: torch.from_numpy(v.astype(np.float64)) for k, v in weights.items()},
                          strict=False)

    rng = np.random.default_rng(args.seed)
    x = rng.uniform(0, 1, (1, 1, args.size, args.size)).astype(np.float32)
    y = np.clip(x + rng.normal(0, 0.1, x.shape), 0, 1).astype(np.float32)
    with torch.no_grad():
        loss = perceptual(model, torch.from_numpy(x.astype(np.float64)), torch.from_numpy(y.astype(np.float64)))
    tensor_archive.save(args.reference, {"x": x, "y": y}, {"loss": loss})
    print(f"loss {loss:.17g}")


if __name__ == "__main__":
    main()
