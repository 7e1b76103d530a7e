#!/usr/bin/env python3
"""Writes the 2-D two-cluster semi-paired toy: source.csv, target.csv, keypoints.csv."""
import random
import sys
from pathlib import Path

out = Path(sys.argv[1] if len(sys.argv) > 1 else "configs/data")
out.mkdir(parents=True, exist_ok=True)
rng = random.Random(7)
n = 16
std = 0.5

def cluster(cx, cy):
    return [(cx + rng.gauss(0, std), cy + rng.gauss(0, std)) for _ in range(n)]

# source clusters A (left), B (right); target clusters C (left), D (right)
source = cluster(-3, 0) + cluster(3, 0)
target = cluster(-3, 4) + cluster(3, 4)
# keypoints cross over: A -> D, B -> C
keypoints = [(0, n), (n, 0)]

for name, pts in (("semi_source.csv", source), ("semi_target.csv", target)):
    with open(out / name, "w") as f:
        for x, y in pts:
            f.write(f"{x:.17g},{y:.17g}\n")
with open(out / "semi_keypoints.csv", "w") as f:
    f.write("source,target\n")
    for a, b in keypoints:
        f.write(f"{a},{b}\n")
