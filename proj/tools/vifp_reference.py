#!/usr/bin/env python3
"""Reference pixel-domain VIF and the golden test pair.

    python3 tools/vifp_reference.py --write-pair tests/data
        writes vif_gt.f32 / vif_pred.f32 (64x64 float32, little-endian) and
        prints the VIF of the pair

    python3 tools/vifp_reference.py GT.f32 PRED.f32 --size 64
        prints the VIF of two raw float32 images

The definition matches the C++ library: images scaled to 0..255, noise
variance 2, four scales with Gaussian windows of 17/9/5/3 taps (sigma =
taps/5), 'valid' filtering, decimation by 2 between scales, and the usual
clamps on the local variances and gain. The gain is the exact ratio
cov/var(ref) wherever var(ref) >= 1e-10.
"""

import argparse
import os
import sys

import numpy as np


def gaussian(taps):
    sigma = taps / 5.0
    half = taps // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x[:, None] ** 2 + x[None, :] ** 2) / (2 * sigma * sigma))
    return g / g.sum()


def filter_valid(img, win):
    n = win.shape[0]
    rows, cols = img.shape[0] - n + 1, img.shape[1] - n + 1
    out = np.zeros((rows, cols))
    for i in range(n):
        for j in range(n):
            out += win[i, j] * img[i:i + rows, j:j + cols]
    return out


def vifp(ref, dist):
    ref = ref.astype(np.float64) * 255.0
    dist = dist.astype(np.float64) * 255.0
    sigma_nsq = 2.0
    eps = 1e-10
    num = den = 0.0
    for scale in range(1, 5):
        taps = 2 ** (4 - scale + 1) + 1
        win = gaussian(taps)
        if scale > 1:
            ref = filter_valid(ref, win)[::2, ::2]
            dist = filter_valid(dist, win)[::2, ::2]
        mu1 = filter_valid(ref, win)
        mu2 = filter_valid(dist, win)
        s1 = np.maximum(filter_valid(ref * ref, win) - mu1 * mu1, 0)
        s2 = np.maximum(filter_valid(dist * dist, win) - mu2 * mu2, 0)
        s12 = filter_valid(ref * dist, win) - mu1 * mu2

        ok = s1 >= eps
        g = np.where(ok, s12 / np.where(ok, s1, 1.0), 0.0)
        sv = np.where(ok, s2 - g * s12, s2)
        s1 = np.where(ok, s1, 0.0)
        low2 = s2 < eps
        g = np.where(low2, 0.0, g)
        sv = np.where(low2, 0.0, sv)
        neg = g < 0
        sv = np.where(neg, s2, sv)
        g = np.where(neg, 0.0, g)
        sv = np.maximum(sv, eps)

        num += np.sum(np.log10(1 + g * g * s1 / (sv + sigma_nsq)))
        den += np.sum(np.log10(1 + s1 / sigma_nsq))
    return num / den


def golden_pair(size=64, seed=2006):
    rng = np.random.RandomState(seed)
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    r = np.hypot((xx - size / 2) / (0.38 * size), (yy - size / 2) / (0.42 * size))
    gt = np.where(r < 1, 0.4 + 0.15 * np.sin(0.4 * xx) * np.cos(0.3 * yy), 0.0)
    gt += 0.3 * np.exp(-((xx - 0.4 * size) ** 2 + (yy - 0.55 * size) ** 2) / (0.01 * size * size))
    gt = np.clip(gt, 0, 1)
    blurred = filter_valid(np.pad(gt, 2, mode="edge"), gaussian(5))
    pred = np.clip(blurred + 0.02 * rng.standard_normal(gt.shape), 0, 1)
    return gt.astype(np.float32), pred.astype(np.float32)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("files", nargs="*")
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--write-pair", metavar="DIR")
    args = ap.parse_args()

    if args.write_pair:
        gt, pred = golden_pair()
        os.makedirs(args.write_pair, exist_ok=True)
        gt.astype("<f4").tofile(os.path.join(args.write_pair, "vif_gt.f32"))
        pred.astype("<f4").tofile(os.path.join(args.write_pair, "vif_pred.f32"))
        print(f"{vifp(gt, pred):.17g}")
        return
    if len(args.files) != 2:
        ap.error("expected GT and PRED files")
    a, b = (np.fromfile(f, dtype="<f4").reshape(args.size, args.size) for f in args.files)
    print(f"{vifp(a, b):.17g}")


if __name__ == "__main__":
    sys.exit(main())
