#!/usr/bin/env python3
"""Read and write mrsr tensor archives (checkpoints, backbone weights).

Layout, little-endian:

    b"MRSRARCH" | uint32 version (1) | uint64 header length | JSON header | payload

The header holds {"metadata": {...}, "tensors": [{"name", "dtype", "shape",
"offset", "nbytes"}, ...]}; offsets are relative to the payload start.

    python3 tools/tensor_archive.py list run/checkpoints/iter_10.ckpt
"""

import argparse
import json
import struct

import numpy as np

MAGIC = b"MRSRARCH"
VERSION = 1
DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


def save(path, tensors, metadata=None):
    """tensors: mapping name -> array (float32 or float64)."""
    index, blobs, offset = [], [], 0
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        tag = "f64" if arr.dtype == np.float64 else "f32"
        data = np.ascontiguousarray(arr, dtype=DTYPES[tag]).tobytes()
        index.append({"name": name, "dtype": tag, "shape": list(arr.shape),
                      "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    header = json.dumps({"metadata": metadata or {}, "tensors": index}).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", VERSION, len(header)))
        f.write(header)
        for b in blobs:
            f.write(b)


def load(path):
    """Returns (tensors, metadata)."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path} is not a tensor archive")
    version, length = struct.unpack_from("<IQ", raw, 8)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported archive version {version}")
    header = json.loads(raw[20:20 + length])
    payload = 20 + length
    tensors = {}
    for t in header["tensors"]:
        start = payload + t["offset"]
        arr = np.frombuffer(raw[start:start + t["nbytes"]], dtype=DTYPES[t["dtype"]])
        tensors[t["name"]] = arr.reshape(t["shape"]).copy()
    return tensors, header.get("metadata", {})


def main():
    ap = argparse.ArgumentParser(description="Inspect a tensor archive.")
    ap.add_argument("command", choices=["list", "metadata"])
    ap.add_argument("path")
    args = ap.parse_args()
    tensors, metadata = load(args.path)
    if args.command == "metadata":
        print(json.dumps(metadata, indent=2))
        return
    for name, arr in tensors.items():
        print(f"{name:<48} {str(arr.dtype):<8} {tuple(arr.shape)}")


if __name__ == "__main__":
    main()
