"""Regenerate reference.json with mpmath at 50 significant digits.

Run from the repository root: ``python tests/fixtures/make_reference.py``.
The samples are drawn once with a fixed seed; everything downstream is
computed in arbitrary precision, independently of the package.
"""
from __future__ import annotations

import json
from pathlib import Path

import mpmath as mp
import numpy as np

mp.mp.dps = 50


def welch(a, b):
    a = [mp.mpf(repr(x)) for x in a]
    b = [mp.mpf(repr(x)) for x in b]
    n1, n2 = len(a), len(b)
    m1, m2 = mp.fsum(a) / n1, mp.fsum(b) / n2
    v1 = mp.fsum((x - m1) ** 2 for x in a) / (n1 - 1)
    v2 = mp.fsum((x - m2) ** 2 for x in b) / (n2 - 1)
    se1, se2 = v1 / n1, v2 / n2
    t = (m1 - m2) / mp.sqrt(se1 + se2)
    dof = (se1 + se2) ** 2 / (se1**2 / (n1 - 1) + se2**2 / (n2 - 1))
    p = mp.betainc(dof / 2, mp.mpf(1) / 2, 0, dof / (dof + t * t), regularized=True)
    return float(t), float(p), float(dof)


def main():
    rng = np.random.default_rng(20240611)
    cases = [{"a": [1, 2, 3, 4, 5], "b": [2, 3, 4, 5, 6]}]
    while len(cases) < 50:
        n1, n2 = rng.integers(2, 40, size=2)
        s1, s2 = rng.uniform(0.05, 5.0, size=2)
        shift = rng.uniform(-3.0, 3.0)
        a = rng.normal(0.0, s1, size=n1)
        b = rng.normal(shift, s2, size=n2)
        cases.append({"a": a.tolist(), "b": b.tolist()})
    for c in cases:
        c["t"], c["p"], c["dof"] = welch(c["a"], c["b"])

    beta = []
    for a in (0.5, 1.0, 2.5, 7.0, 30.0, 150.0):
        for b in (0.5, 1.5, 4.0, 25.0):
            for x in (0.001, 0.05, 0.3, 0.5, 0.77, 0.95, 0.999):
                beta.append({"a": a, "b": b, "x": x,
                             "value": float(mp.betainc(a, b, 0, x, regularized=True))})
    out = {"welch": cases, "betainc": beta}
    Path(__file__).with_name("reference.json").write_text(json.dumps(out, indent=1))


if __name__ == "__main__":
    main()
