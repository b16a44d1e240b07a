#!/usr/bin/env python3
"""Writes the golden sinogram for tests/data/radon_gaussian.json.

The Radon transform of exp(-|x|^2/2) along {x . theta = s} is sqrt(2 pi) exp(-s^2/2),
independent of theta. Node coordinates follow the grid rules of the scenario format.
"""
import argparse
import json
import math
import pathlib


def axis(spec):
    if isinstance(spec, list):
        return spec
    if "linspace" in spec:
        a, b, n = spec["linspace"]
        return [a if n == 1 else a + (b - a) * i / (n - 1) for i in range(n)]
    a, b, n = spec["centers"]
    return [a + (b - a) * (i + 0.5) / n for i in range(n)]


def main():
    here = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data"
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenario", default=here / "radon_gaussian.json", type=pathlib.Path)
    ap.add_argument("--out", default=here / "radon_gaussian_golden.csv", type=pathlib.Path)
    args = ap.parse_args()

    grid = json.loads(args.scenario.read_text())["transform"]["grid"]
    names = grid["names"]
    ws, ss = (axis(a) for a in grid["axes"])
    lines = [f"# axes: {', '.join(names)}; shape: {len(ws)}, {len(ss)}", ",".join(names) + ",value,error"]
    for w in ws:
        for s in ss:
            v = math.sqrt(2 * math.pi) * math.exp(-s * s / 2)
            lines.append(f"{w:.17g},{s:.17g},{v:.17g},")
    args.out.write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
