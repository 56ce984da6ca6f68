#!/usr/bin/env python3
"""Freeze high-precision reference values for the statistics tests.

Welch (t, df, p) and the regularized incomplete beta are evaluated with
mpmath at 60 significant digits; W1 distances are computed exactly with
rational arithmetic over the float inputs.

    python3 scripts/make_stats_oracle.py > crates/core/tests/fixtures/stats_oracle.json
"""
import json
from fractions import Fraction

import mpmath
import numpy as np

mpmath.mp.dps = 60


def welch(a, b):
    a = [mpmath.mpf(x) for x in a]
    b = [mpmath.mpf(x) for x in b]
    na, nb = len(a), len(b)
    ma, mb = sum(a) / na, sum(b) / nb
    va = sum((x - ma) ** 2 for x in a) / (na - 1)
    vb = sum((x - mb) ** 2 for x in b) / (nb - 1)
    sa, sb = va / na, vb / nb
    t = (ma - mb) / mpmath.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa ** 2 / (na - 1) + sb ** 2 / (nb - 1))
    p = mpmath.betainc(df / 2, mpmath.mpf(1) / 2, 0, df / (df + t * t), regularized=True)
    return float(t), float(df), float(p)


def w1(a, b):
    a = sorted(Fraction(x) for x in a)
    b = sorted(Fraction(x) for x in b)
    pts = sorted(set(a) | set(b))
    total = Fraction(0)
    ia = ib = 0
    for lo, hi in zip(pts, pts[1:]):
        while ia < len(a) and a[ia] <= lo:
            ia += 1
        while ib < len(b) and b[ib] <= lo:
            ib += 1
        total += abs(Fraction(ia, len(a)) - Fraction(ib, len(b))) * (hi - lo)
    return float(total)


def main():
    rng = np.random.default_rng(20250314)
    pairs = []
    for _ in range(100):
        na, nb = (int(v) for v in rng.integers(5, 301, size=2))
        a = rng.normal(rng.uniform(-1, 1), rng.uniform(0.05, 2.0), size=na).tolist()
        b = rng.normal(rng.uniform(-1, 1), rng.uniform(0.05, 2.0), size=nb).tolist()
        t, df, p = welch(a, b)
        pairs.append({"a": a, "b": b, "t": t, "df": df, "p": p, "w1": w1(a, b)})
    betas = []
    for _ in range(60):
        x = float(rng.uniform(0, 1))
        alpha = float(rng.uniform(0.1, 200))
        beta = float(rng.choice([0.5, float(rng.uniform(0.1, 50))]))
        value = mpmath.betainc(alpha, beta, 0, x, regularized=True)
        betas.append({"x": x, "a": alpha, "b": beta, "value": float(value)})
    json.dump({"pairs": pairs, "incomplete_beta": betas}, __import__("sys").stdout)


if __name__ == "__main__":
    main()
