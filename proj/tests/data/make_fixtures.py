#!/usr/bin/env python3
"""Regenerate the synthetic chain fixtures in this directory.

Writes blocks.csv, stale.csv, propagation.csv, hashrate.csv (three 20000-block
periods plus a short remainder), two small fit fixtures and
../fixture_counts.hpp. Output is deterministic.
"""

import datetime
import math
import os

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
PERIOD = 20000
START_HEIGHT = 600000
START_TIME = 1600000000
BLOCK_TIME = 600.0
RETARGET = 2016


def power_counts(n, exponent, total):
    w = np.arange(1, n + 1, dtype=float) ** -exponent
    c = np.floor(total * w / w.sum()).astype(int)
    c[0] += total - c.sum()
    return [int(x) for x in c]


def counts_35():
    """35 miners, shares ~ k^-1.2, 20000 blocks."""
    return power_counts(35, 1.2, PERIOD)


def period_counts():
    p0 = counts_35()
    p1 = power_counts(20, 1.0, PERIOD - 6) + [1, 2, 3]
    p2 = power_counts(30, 1.3, PERIOD)
    return [p0, p1, p2]


def compact(target):
    """Compact encoding of an integer target (positive mantissa)."""
    size = (target.bit_length() + 7) // 8
    if size <= 3:
        mantissa = target << (8 * (3 - size))
    else:
        mantissa = target >> (8 * (size - 3))
    if mantissa & 0x00800000:
        mantissa >>= 8
        size += 1
    return (size << 24) | mantissa


def expected_hashes(bits):
    exp = bits >> 24
    target = (bits & 0xFFFFFF) << (8 * (exp - 3))
    return 2**256 / (target + 1)


def main():
    rng = np.random.default_rng(20240611)
    periods = period_counts()
    remainder = 137

    labels = []
    for k, counts in enumerate(periods):
        seq = []
        for i, c in enumerate(counts):
            seq += [f"pool{k}_{i:02d}" if k == 1 else f"pool_{i:02d}"] * c
        rng.shuffle(seq)
        labels += seq
    labels += [f"pool_{i:02d}" for i in rng.integers(0, 10, remainder)]

    n_blocks = len(labels)
    gaps = rng.exponential(BLOCK_TIME, n_blocks)
    times = START_TIME + np.floor(np.cumsum(gaps)).astype(np.int64)

    target = 0x110119 << (8 * 20)
    bits_seq = []
    for i in range(n_blocks):
        if i > 0 and i % RETARGET == 0:
            target = int(target * (1.0 + rng.normal(0.0, 0.02)))
        bits_seq.append(compact(target))

    with open(os.path.join(HERE, "blocks.csv"), "w", newline="\n") as f:
        f.write("height,timestamp,bits,miner_id\n")
        for i in range(n_blocks):
            f.write(f"{START_HEIGHT + i},{times[i]},0x{bits_seq[i]:08x},{labels[i]}\n")

    # Hash rate per UTC day: that day's mean difficulty / 600 s, with noise.
    day_diff = {}
    for i in range(n_blocks):
        day = int(times[i] // 86400)
        day_diff.setdefault(day, []).append(expected_hashes(bits_seq[i]))
    with open(os.path.join(HERE, "hashrate.csv"), "w", newline="\n") as f:
        f.write("date,hashes_per_second\n")
        for day in sorted(day_diff):
            rate = np.mean(day_diff[day]) / BLOCK_TIME * (1.0 + rng.normal(0.0, 0.03))
            date = datetime.date(1970, 1, 1) + datetime.timedelta(days=day)
            f.write(f"{date.isoformat()},{rate:.6e}\n")

    stale_counts = [56, 41, 70]
    rows = []
    for k, n_stale in enumerate(stale_counts):
        lo = START_HEIGHT + k * PERIOD
        heights = rng.choice(PERIOD, n_stale, replace=False) + lo
        rows += [int(h) for h in heights]
        rows += [int(h) for h in heights[:3]]  # duplicate reports
    rows += [START_HEIGHT + 3 * PERIOD + 5]  # in the remainder
    rng.shuffle(rows)
    with open(os.path.join(HERE, "stale.csv"), "w", newline="\n") as f:
        f.write("height\n")
        for h in rows:
            f.write(f"{h}\n")

    with open(os.path.join(HERE, "propagation.csv"), "w", newline="\n") as f:
        f.write("timestamp,p50,p90,p99\n")
        t = START_TIME - 5 * 3600  # a few rows before the first block
        while t < times[-1] + 5 * 3600:
            p50 = rng.uniform(0.6, 1.2)
            p90 = p50 * rng.uniform(2.0, 3.0)
            p99 = p90 * rng.uniform(2.5, 4.0)
            f.write(f"{t},{p50:.4f},{p90:.4f},{p99:.4f}\n")
            t += 3600

    # Fit fixtures: equal counts, and 10 miners whose sample cv is exactly 2.
    with open(os.path.join(HERE, "equal_blocks.csv"), "w", newline="\n") as f:
        f.write("height,timestamp,bits,miner_id\n")
        for i in range(2000):
            f.write(f"{i},{START_TIME + 600 * i},0x1d00ffff,m{i % 4}\n")
    cv2 = cv2_counts()
    seq = [f"m{i}" for i, c in enumerate(cv2) for _ in range(c)]
    with open(os.path.join(HERE, "operating_point_blocks.csv"), "w", newline="\n") as f:
        f.write("height,timestamp,bits,miner_id\n")
        for i, m in enumerate(seq):
            f.write(f"{i},{START_TIME + 600 * i},0x1d00ffff,{m}\n")

    with open(os.path.join(HERE, "..", "fixture_counts.hpp"), "w", newline="\n") as f:
        f.write("#pragma once\n\n// Generated by tests/data/make_fixtures.py.\n\n")
        f.write("#include <array>\n#include <cstddef>\n#include <cstdint>\n\nnamespace fixture {\n\n")
        for name, c in (("kCounts35", periods[0]), ("kPeriod1", periods[1]), ("kPeriod2", periods[2]),
                        ("kOperatingPointCounts", cv2)):
            body = ", ".join(str(x) for x in c)
            f.write(f"inline constexpr std::array<std::int64_t, {len(c)}> {name} = {{{body}}};\n")
        f.write("\ninline constexpr std::array<int, 3> kStaleDistinct = {" +
                ", ".join(str(x) for x in stale_counts) + "};\n")
        f.write(f"inline constexpr std::int64_t kStartHeight = {START_HEIGHT};\n")
        f.write(f"inline constexpr std::size_t kRemainder = {remainder};\n")
        f.write("\n} // namespace fixture\n")


def cv2_counts():
    """Ten positive counts summing to 20000 with sample cv exactly 2.

    Needs N^2 sum b^2 = B^2 (5N - 4). The two smallest counts solve
    x + y = R, x^2 + y^2 = Q for the remainder.
    """
    n, total = 10, 20000
    want = total * total * (5 * n - 4) // (n * n)
    rest = [1200, 900, 800, 700, 600, 400]
    for c0 in range(13200, 13400):
        for c1 in range(1500, 1900):
            r = total - c0 - c1 - sum(rest)
            q = want - c0 * c0 - c1 * c1 - sum(x * x for x in rest)
            d2 = 2 * q - r * r
            if d2 < 0:
                continue
            d = math.isqrt(d2)
            if d * d != d2 or (r + d) % 2:
                continue
            x, y = (r + d) // 2, (r - d) // 2
            if y > 0:
                return [c0, c1] + rest + [x, y]
    raise RuntimeError("no solution")


if __name__ == "__main__":
    main()
