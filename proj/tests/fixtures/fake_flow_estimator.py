#!/usr/bin/env python3
"""Stand-in external flow estimator: `fake_flow_estimator.py FRAME_DIR OUT.flow`.

Writes a FlowFile whose every vector is (0.5, -0.25). Exits with status 3 when
FAKE_FLOW_FAIL is set, to exercise error propagation.
"""
import os
import struct
import sys


def png_size(path):
    with open(path, "rb") as f:
        head = f.read(24)
    if head[:8] != b"\x89PNG\r\n\x1a\n":
        raise SystemExit(f"not a png: {path}")
    width, height = struct.unpack(">II", head[16:24])
    return height, width


def main():
    if os.environ.get("FAKE_FLOW_FAIL"):
        return 3
    frame_dir, out_path = sys.argv[1], sys.argv[2]
    frames = sorted(p for p in os.listdir(frame_dir) if p.endswith(".png"))
    h, w = png_size(os.path.join(frame_dir, frames[0]))
    t = len(frames) - 1
    n = t * h * w
    with open(out_path, "wb") as f:
        f.write(b"DTVF" + struct.pack("<III", t, h, w))
        f.write(struct.pack("<f", 0.5) * n)
        f.write(struct.pack("<f", -0.25) * n)
    return 0


if __name__ == "__main__":
    sys.exit(main())
