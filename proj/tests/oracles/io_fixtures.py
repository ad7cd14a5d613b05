"""Writes byte-level fixtures for the .flo and PGM codecs with the stdlib only."""

import pathlib
import struct
import sys


def main():
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures")
    # 1x1 flow field (1.0, -2.0).
    (out / "one_pixel.flo").write_bytes(struct.pack("<fiiff", 202021.25, 1, 1, 1.0, -2.0))
    # 5x3 raw P5 graymap with a ramp.
    pixels = bytes((17 * i * 3) % 256 for i in range(15))
    (out / "ramp_5x3.pgm").write_bytes(b"P5\n5 3\n255\n" + pixels)


if __name__ == "__main__":
    main()
