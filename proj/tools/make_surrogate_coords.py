#!/usr/bin/env python3
"""Generate the synthetic district-centroid surrogate used by the simulation designs.

Draws 205 points uniformly over the convex hull of a coarse outline of
Afghanistan (degrees lat/lon) with a fixed seed. The output file is bundled
under data/ so runs do not depend on this script.
"""
import csv
import sys

import numpy as np

OUTLINE = [  # (lon, lat)
    (60.9, 29.9), (66.3, 29.5), (69.5, 31.2), (71.2, 34.0), (74.9, 37.2),
    (71.5, 38.4), (67.8, 37.2), (65.0, 37.6), (62.0, 35.5), (60.5, 33.5),
]


def convex_hull(points):
    pts = sorted(set(points))

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def inside(hull, p):
    n = len(hull)
    for i in range(n):
        a, b = hull[i], hull[(i + 1) % n]
        if (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) < 0:
            return False
    return True


def main(path, n=205, seed=20140405):
    hull = convex_hull(OUTLINE)
    lons = [p[0] for p in hull]
    lats = [p[1] for p in hull]
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        p = (rng.uniform(min(lons), max(lons)), rng.uniform(min(lats), max(lats)))
        if inside(hull, p):
            out.append(p)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit_id", "lat", "lon"])
        for i, (lon, lat) in enumerate(out, start=1):
            w.writerow([i, f"{lat:.6f}", f"{lon:.6f}"])


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/districts_surrogate.csv")
