#!/usr/bin/env python3
"""Closed-form parameter counts for the generator and discriminator.

Counts are derived layer by layer from the architecture description, without
building any network, so they can be compared against the C++ models.

    python3 tools/param_count.py            # default configs, human readable
    python3 tools/param_count.py --json     # machine readable
"""

import argparse
import json


def conv(cin, cout, k=3, bias=True):
    return cin * cout * k * k + (cout if bias else 0)


def generator(in_ch=1, out_ch=1, nf=64, gc=32, blocks=23, dense=3, convs=5):
    layers = [("conv_first", conv(in_ch, nf))]
    per_dense = sum(conv(nf + c * gc, nf if c == convs - 1 else gc) for c in range(convs))
    layers.append(("trunk", blocks * dense * per_dense))
    layers += [("conv_body", conv(nf, nf)), ("conv_up1", conv(nf, nf)),
               ("conv_up2", conv(nf, nf)), ("conv_hr", conv(nf, nf)),
               ("conv_last", conv(nf, out_ch))]
    return layers


def discriminator(in_ch=1, nf=64, stages=3):
    layers = [("conv0", conv(in_ch, nf))]
    for s in range(stages):
        layers.append((f"down{s + 1}", conv(nf << s, nf << (s + 1), k=4, bias=False)))
    for s in range(stages, 0, -1):
        layers.append((f"up{stages - s + 1}", conv(nf << s, nf << (s - 1), bias=False)))
    layers += [("refine1", conv(nf, nf, bias=False)), ("refine2", conv(nf, nf, bias=False)),
               ("logits", conv(nf, 1))]
    return layers


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--json", action="store_true")
    ap.add_argument("--base", type=int, default=64)
    ap.add_argument("--growth", type=int, default=32)
    ap.add_argument("--blocks", type=int, default=23)
    args = ap.parse_args()

    g = generator(nf=args.base, gc=args.growth, blocks=args.blocks)
    d = discriminator()
    totals = {"generator": sum(n for _, n in g), "discriminator": sum(n for _, n in d)}
    if args.json:
        print(json.dumps(totals))
        return
    for title, layers in (("generator", g), ("discriminator", d)):
        print(title)
        for name, n in layers:
            print(f"  {name:<12} {n:>12,}")
        print(f"  {'total':<12} {totals[title]:>12,}")


if __name__ == "__main__":
    main()
