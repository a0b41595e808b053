#!/usr/bin/env python3
"""Export the UCI handwritten digits bundled with scikit-learn as IDX files.

The 8x8 images (values 0..16) are rescaled to 0..255 bytes. The C++ side
upsamples them to 28x28 when it builds the audio-visual digit corpus.
"""
import struct
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits


def main(out_dir: Path) -> None:
    digits = load_digits()
    images = np.clip(np.rint(digits.images * (255.0 / 16.0)), 0, 255).astype(np.uint8)
    labels = digits.target.astype(np.uint8)
    out_dir.mkdir(parents=True, exist_ok=True)
    n, rows, cols = images.shape
    with open(out_dir / "digits8x8-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.tobytes())
    with open(out_dir / "digits8x8-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels.tobytes())


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "data"))
