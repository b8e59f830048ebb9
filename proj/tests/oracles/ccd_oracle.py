"""Straight-line high-precision evaluation of the CCD scaling and logit adjustment.

Writes tests/data/ccd_oracle.json. Run: python3 ccd_oracle.py
"""
import json
import random
from pathlib import Path

from mpmath import mp, mpf, exp, log, fsum

mp.dps = 50


def sigmoid(z):
    return 1 / (1 + exp(-z))


def sgn(x):
    return (x > 0) - (x < 0)


def f(x, y, t):
    x, y, t = mpf(x), mpf(y), mpf(t)
    return exp(sgn(x) * (sigmoid((x - y) / t) - mpf("0.5")))


def adjust(logit_d, logit_a, r, t):
    order = sorted(range(len(logit_d)), key=lambda k: (-logit_d[k], k))
    rank = {k: i + 1 for i, k in enumerate(order)}
    pre = []
    for k, (d, a) in enumerate(zip(logit_d, logit_a)):
        pre.append(mpf(d) if rank[k] <= r else mpf(d) * f(d, a, t))
    lse = log(fsum(exp(v) for v in pre))
    return [v - lse for v in pre]


def main():
    out = {
        "f_3_1_2": mp.nstr(f(3, 1, 2), 20),
        "f_m2_0_2": mp.nstr(f(-2, 0, 2), 20),
        "fixture": {
            "logit_d": [2.0, 1.0, 0.5, 0.0, -1.0, -2.0],
            "logit_a": [0.0, 2.0, 0.5, 1.0, 0.0, -3.0],
            "r": 2,
            "t": 2.0,
        },
    }
    fx = out["fixture"]
    fx["expected"] = [mp.nstr(v, 20) for v in adjust(fx["logit_d"], fx["logit_a"], fx["r"], fx["t"])]

    rng = random.Random(20240611)
    cases = []
    for _ in range(100):
        n = rng.randint(2, 64)
        d = [round(rng.uniform(-10, 10), 6) for _ in range(n)]
        # a few exact ties exercise the index tie-break
        if n > 3 and rng.random() < 0.3:
            d[rng.randrange(n)] = d[0]
        a = [round(rng.uniform(-10, 10), 6) for _ in range(n)]
        r = rng.randint(0, n - 1)
        t = round(rng.uniform(0.1, 5.0), 4)
        cases.append({"logit_d": d, "logit_a": a, "r": r, "t": t,
                      "expected": [mp.nstr(v, 20) for v in adjust(d, a, r, t)]})
    out["random_cases"] = cases
    path = Path(__file__).resolve().parents[1] / "data" / "ccd_oracle.json"
    path.write_text(json.dumps(out, indent=1) + "\n")
    print(out["f_3_1_2"], out["f_m2_0_2"])
    print(fx["expected"])


if __name__ == "__main__":
    main()
