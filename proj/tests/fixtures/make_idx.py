#!/usr/bin/env python3
# Copyright 2026 The AirFL Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Writes the small IDX files used by the reader tests.

Run from this directory: python3 make_idx.py
"""

import struct
from pathlib import Path

HERE = Path(__file__).resolve().parent


def idx_bytes(magic, extents, payload):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", e) for e in extents)
    return header + bytes(payload)


def main():
    # Image k has pixel (r, c) = (k * 50 + r + c) mod 256, so the reader test
    # can recompute any pixel without the file.
    images = [(k * 50 + r + c) % 256 for k in range(4) for r in range(28) for c in range(28)]
    (HERE / "images4.idx3").write_bytes(idx_bytes(0x00000803, [4, 28, 28], images))
    (HERE / "labels4.idx1").write_bytes(idx_bytes(0x00000801, [4], [3, 1, 4, 1]))
    (HERE / "labels3.idx1").write_bytes(idx_bytes(0x00000801, [3], [3, 1, 4]))
    (HERE / "empty.idx").write_bytes(b"")
    (HERE / "bad_magic.idx").write_bytes(idx_bytes(0x00000D03, [1, 1, 1], [0]))
    # Header promises 4 images but only 100 pixel bytes follow.
    (HERE / "truncated.idx3").write_bytes(idx_bytes(0x00000803, [4, 28, 28], images[:100]))


if __name__ == "__main__":
    main()
