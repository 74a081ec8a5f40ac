#!/usr/bin/env python3
"""Builds the scripted three-epoch replay fixture.

Steps the uncertainty, correlation, weighting, and sampling formulas with
plain Python floats over a fixed sequence of batches and predictions, then
writes the expected selector state (U, C, w, P, pressure) as JSON.  The
replay test feeds the same batches and predictions to the Rust selector
and compares every value, so this script must stay an independent
implementation: formulas written out by hand, no calls into the crate.

Trace shape: 4 instances, 2 labels, window 2, 1 warm-up epoch, 2 bins,
lambda1 0.5, pressure decaying from 4 over epochs 2..4.
"""

import copy
import json
import math
from pathlib import Path

N, Q, T, TAU = 4, 2, 2, 2
LAMBDA1 = 0.5
S0, T_START, T_END = 4.0, 2, 4
WARMUP = 1
BATCH = 2

# epoch -> (batches of instance indices, matching prediction rows)
SCRIPT = {
    1: (
        [[0, 1], [2, 3]],
        [
            [[0.1, 0.9], [0.5, 0.1]],
            [[0.2, 0.5], [0.95, 0.6]],
        ],
    ),
    2: (
        [[0, 1], [2, 3]],
        [
            [[0.15, 0.85], [0.9, 0.5]],
            [[0.8, 0.5], [0.05, 0.4]],
        ],
    ),
    3: (
        [[0, 2], [1, 3]],
        [
            [[0.4, 0.5], [0.3, 0.35]],
            [[0.8, 0.45], [0.5, 0.95]],
        ],
    ),
}


def entropy(p):
    h = 0.0
    if p > 0.0:
        h -= p * math.log2(p)
    if p < 1.0:
        h -= (1.0 - p) * math.log2(1.0 - p)
    return h


def mutual_information(bins_a, bins_b):
    x, y = (bins_a, bins_b) if bins_a <= bins_b else (bins_b, bins_a)
    n = len(x)
    joint = [[0.0] * TAU for _ in range(TAU)]
    for a, b in zip(x, y):
        joint[a][b] += 1.0
    for a in range(TAU):
        for b in range(TAU):
            joint[a][b] /= n
    ma = [sum(joint[a]) for a in range(TAU)]
    mb = [sum(joint[a][b] for a in range(TAU)) for b in range(TAU)]
    out = 0.0
    for a in range(TAU):
        for b in range(TAU):
            pab = joint[a][b]
            if pab > 0.0:
                out += pab * math.log2(pab / (ma[a] * mb[b]))
    return max(out, 0.0)


def pressure(epoch):
    frac = (epoch - T_START) / (T_END - T_START)
    return S0 ** (1.0 - frac)


def quantize(w):
    return min(int(math.floor((1.0 - w) * N + 1e-9)), N)


def distribution(u, epoch):
    """What the selector computes when epoch `epoch` begins."""
    bins = [
        [min(int(math.floor(u[i][j] * TAU)), TAU - 1) for i in range(N)]
        for j in range(Q)
    ]
    c = [[1.0 if a == b else 0.0 for b in range(Q)] for a in range(Q)]
    for a in range(Q):
        for b in range(a + 1, Q):
            v = mutual_information(bins[a], bins[b])
            c[a][b] = v
            c[b][a] = v
    ubar = [
        [sum(u[i][k] * c[k][j] for k in range(Q)) for j in range(Q)]
        for i in range(N)
    ]
    sums = [sum(row) for row in ubar]
    lo, hi = min(sums), max(sums)
    if hi == lo:
        w = [0.5] * N
    else:
        span = hi - lo
        w = [(v - lo) / span for v in sums]
    s_t = pressure(epoch)
    factors = [s_t ** (-quantize(wi) / N) for wi in w]
    z = sum(factors)
    return c, w, [f / z for f in factors], s_t


def main():
    histories = [[[] for _ in range(Q)] for _ in range(N)]
    u = [[0.0] * Q for _ in range(N)]
    epochs_out = []
    checks = []
    for epoch in sorted(SCRIPT):
        batches, preds = SCRIPT[epoch]
        if epoch > WARMUP:
            c, w, p, s_t = distribution(u, epoch)
            checks.append(
                {
                    "epoch": epoch,
                    "u": copy.deepcopy(u),
                    "c": c,
                    "w": w,
                    "p": p,
                    "pressure": s_t,
                }
            )
        for idx, pred in zip(batches, preds):
            for row, i in enumerate(idx):
                for j in range(Q):
                    hist = histories[i][j]
                    hist.append(pred[row][j])
                    if len(hist) >= T:
                        window = hist[-T:]
                        d = sum(
                            abs(window[k] - window[k - 1]) for k in range(1, T)
                        ) / (T - 1)
                        e = entropy(window[-1])
                        u[i][j] = LAMBDA1 * d + (1.0 - LAMBDA1) * e
        epochs_out.append({"epoch": epoch, "batches": batches, "preds": preds})

    fixture = {
        "config": {
            "n": N,
            "q": Q,
            "batch": BATCH,
            "window": T,
            "tau": TAU,
            "lambda1": LAMBDA1,
            "warmup": WARMUP,
            "s0": S0,
            "t_start": T_START,
            "t_end": T_END,
        },
        "epochs": epochs_out,
        "checks": checks,
        "final_u": u,
    }
    out = (
        Path(__file__).resolve().parents[1]
        / "crates"
        / "core"
        / "tests"
        / "fixtures"
        / "toy_trace.json"
    )
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w") as f:
        json.dump(fixture, f, indent=1)
        f.write("\n")
    print(f"wrote {out}")
    for check in checks:
        print(f"epoch {check['epoch']}: pressure {check['pressure']}, w {check['w']}")


if __name__ == "__main__":
    main()
