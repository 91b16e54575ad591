"""Write the synthetic 64x64 island map used by the shortest-path tests (P5 plus a P2 twin).

Land (black, 0) is a union of six axis-aligned ellipses; sea is white (255).
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from shepard_dp.pgm import write_pgm

# (center x, center y, radius x, radius y) in pixel units
ISLANDS = [(20, 18, 7, 5), (42, 30, 6, 9), (16, 44, 9, 4), (46, 52, 5, 5), (30, 8, 3, 3), (8, 28, 3, 6)]


def archipelago(n: int = 64) -> np.ndarray:
    yy, xx = np.mgrid[0:n, 0:n] + 0.5
    land = np.zeros((n, n), dtype=bool)
    for cx, cy, rx, ry in ISLANDS:
        land |= ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
    return np.where(land, 0, 255).astype(np.uint8)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests" / "data"))
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    img = archipelago()
    write_pgm(out / "archipelago64.pgm", img, binary=True)
    write_pgm(out / "archipelago64_ascii.pgm", img, binary=False)
    print(f"wrote {out / 'archipelago64.pgm'} and its P2 twin ({int((img >= 128).sum())} sea pixels)")


if __name__ == "__main__":
    main()
