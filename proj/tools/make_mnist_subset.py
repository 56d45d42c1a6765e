#!/usr/bin/env python3
# Copyright 2026 The onchip Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Convert the 10,000-digit MNIST sample shipped in the `mnist` npm package
(https://www.npmjs.com/package/mnist, src/digits/<d>.json) into gzipped IDX
files with the standard MNIST names.

Usage:
    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 tools/make_mnist_subset.py package/src/digits data/mnist

The samples are shuffled with a fixed seed; the first 8,000 become the
training split and the remaining 2,000 the test split.
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

TRAIN_COUNT = 8000
SIDE = 28


def write_idx(path, magic, dims, payload):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + payload)


def main():
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)
    samples = []
    for digit in range(10):
        flat = json.loads((src / f"{digit}.json").read_text())["data"]
        n = len(flat) // (SIDE * SIDE)
        for k in range(n):
            px = flat[k * SIDE * SIDE:(k + 1) * SIDE * SIDE]
            samples.append((digit, bytes(int(round(v * 255.0)) for v in px)))
    random.Random(20200926).shuffle(samples)
    splits = {"train": samples[:TRAIN_COUNT], "t10k": samples[TRAIN_COUNT:]}
    for name, rows in splits.items():
        write_idx(dst / f"{name}-images-idx3-ubyte.gz", 0x803, (len(rows), SIDE, SIDE),
                  b"".join(px for _, px in rows))
        write_idx(dst / f"{name}-labels-idx1-ubyte.gz", 0x801, (len(rows),),
                  bytes(label for label, _ in rows))
        print(name, len(rows))


if __name__ == "__main__":
    main()
