#!/usr/bin/env python3
"""Build a small MNIST fixture in IDX format.

Source: the digits shipped with the `mnist` npm package (src/digits/<d>.json,
each a flat list of pixel intensities in [0, 1] with three decimals, 784 per
image). Intensities are mapped back to bytes with round(v * 255).

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 tools/make_mnist_fixture.py package/src/digits tests/data/mnist --per-digit 250
"""

import argparse
import json
import pathlib
import random
import struct

PIXELS = 28 * 28


def load_digit(path: pathlib.Path) -> list[bytes]:
    values = json.loads(path.read_text())["data"]
    if len(values) % PIXELS:
        raise SystemExit(f"{path}: {len(values)} values is not a multiple of {PIXELS}")
    images = []
    for start in range(0, len(values), PIXELS):
        chunk = values[start:start + PIXELS]
        images.append(bytes(min(255, max(0, round(v * 255))) for v in chunk))
    return images


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("digits_dir", type=pathlib.Path)
    parser.add_argument("out_dir", type=pathlib.Path)
    parser.add_argument("--per-digit", type=int, default=250)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    examples = []
    for digit in range(10):
        images = load_digit(args.digits_dir / f"{digit}.json")
        if len(images) < args.per_digit:
            raise SystemExit(f"digit {digit}: only {len(images)} images")
        examples.extend((img, digit) for img in images[:args.per_digit])
    random.Random(args.seed).shuffle(examples)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    with open(args.out_dir / "images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(examples), 28, 28))
        for img, _ in examples:
            f.write(img)
    with open(args.out_dir / "labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(examples)))
        f.write(bytes(label for _, label in examples))
    print(f"wrote {len(examples)} examples to {args.out_dir}")


if __name__ == "__main__":
    main()
