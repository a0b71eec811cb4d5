#!/usr/bin/env python3
"""Generate the bundled daily BTC-USD style fixture.

The sandbox that produced this repository had no access to market data
endpoints, so the fixture is a seeded synthetic series: a Brownian bridge in
log-price pinned to approximate historical BTC-USD closing levels, with
OHLC bars and volumes derived from it. Regenerating with the same seed
yields a byte-identical file.

Usage: python3 scripts/make_btc_fixture.py [out_csv]
"""
import datetime as dt
import hashlib
import json
import sys

import numpy as np

SEED = 20230406
START = dt.date(2015, 12, 31)
END = dt.date(2023, 4, 6)
DAILY_VOL = 0.032

# Approximate closing levels used as bridge anchors.
ANCHORS = [
    (dt.date(2015, 12, 31), 430.0),
    (dt.date(2016, 6, 17), 750.0),
    (dt.date(2016, 12, 31), 960.0),
    (dt.date(2017, 6, 11), 2950.0),
    (dt.date(2017, 12, 17), 19100.0),
    (dt.date(2018, 2, 5), 6950.0),
    (dt.date(2018, 12, 15), 3240.0),
    (dt.date(2019, 6, 26), 12900.0),
    (dt.date(2019, 12, 17), 6640.0),
    (dt.date(2020, 3, 12), 4970.0),
    (dt.date(2020, 12, 31), 29000.0),
    (dt.date(2021, 4, 13), 63500.0),
    (dt.date(2021, 7, 20), 29800.0),
    (dt.date(2021, 11, 8), 67500.0),
    (dt.date(2022, 6, 18), 19000.0),
    (dt.date(2022, 11, 21), 15800.0),
    (dt.date(2023, 3, 10), 20100.0),
    (dt.date(2023, 4, 6), 28000.0),
]


def bridge(rng, a, b, n):
    """Log-space Brownian bridge of n+1 points from a to b."""
    steps = rng.normal(0.0, DAILY_VOL, n)
    walk = np.concatenate([[0.0], np.cumsum(steps)])
    t = np.linspace(0.0, 1.0, n + 1)
    walk = walk - t * walk[-1]
    return np.log(a) + t * (np.log(b) - np.log(a)) + walk


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "fixtures/btc_usd_daily.csv"
    rng = np.random.default_rng(SEED)
    log_close = [np.log(ANCHORS[0][1])]
    for (d0, p0), (d1, p1) in zip(ANCHORS, ANCHORS[1:]):
        seg = bridge(rng, p0, p1, (d1 - d0).days)
        log_close.extend(seg[1:])
    close = np.exp(np.array(log_close))
    n = len(close)
    assert n == (END - START).days + 1

    gap = rng.normal(0.0, 0.004, n)
    open_ = np.empty(n)
    open_[0] = close[0] * (1.0 + gap[0])
    open_[1:] = close[:-1] * (1.0 + gap[1:])
    wick_hi = np.abs(rng.normal(0.0, 0.012, n))
    wick_lo = np.abs(rng.normal(0.0, 0.012, n))
    high = np.maximum(open_, close) * (1.0 + wick_hi)
    low = np.minimum(open_, close) * (1.0 - wick_lo)
    ret = np.abs(np.diff(np.log(close), prepend=np.log(close[0])))
    volume = np.round(
        2.0e7 * (close / close[0]) ** 1.1 * np.exp(rng.normal(0.0, 0.35, n) + 8.0 * ret)
    )

    lines = ["Date,Open,High,Low,Close,Adj Close,Volume"]
    for k in range(n):
        day = START + dt.timedelta(days=k)
        lines.append(
            "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%d"
            % (day.isoformat(), open_[k], high[k], low[k], close[k], close[k], volume[k])
        )
    body = ("\n".join(lines) + "\n").encode("utf-8")
    with open(out, "wb") as fh:
        fh.write(body)

    manifest = {
        "file": "btc_usd_daily.csv",
        "rows": n,
        "first_date": START.isoformat(),
        "last_date": END.isoformat(),
        "sha256": hashlib.sha256(body).hexdigest(),
        "generator": "scripts/make_btc_fixture.py",
        "generator_seed": SEED,
        "synthetic": True,
    }
    with open(out.replace(".csv", ".manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


if __name__ == "__main__":
    main()
