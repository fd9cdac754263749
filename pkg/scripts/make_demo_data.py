"""Write a synthetic month of 15-minute load and solar data for trying the CLI.

    python scripts/make_demo_data.py demo/ --days 30 --seed 7
"""

import argparse
import os
from datetime import datetime

import numpy as np

from bessrate.timeseries import IntervalSeries, write_csv


def synthetic_month(days, seed, peak_kw=600.0, solar_kw=250.0):
    rng = np.random.default_rng(seed)
    hours = np.arange(96) / 4.0
    base = 0.35 + 0.65 * np.exp(-0.5 * ((hours - 14.5) / 3.2) ** 2)
    sun = np.clip(np.sin(np.pi * (hours - 6.0) / 13.0), 0.0, None)
    load, solar = [], []
    for _ in range(days):
        scale = rng.uniform(0.75, 1.05)
        load.append(peak_kw * scale * base * (1 + 0.05 * rng.standard_normal(96)).clip(0.8, 1.2))
        solar.append(solar_kw * rng.uniform(0.5, 1.0) * sun)
    return np.concatenate(load), np.concatenate(solar)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    ap.add_argument("--days", type=int, default=30)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--start", default="2021-07-01")
    args = ap.parse_args()
    load, solar = synthetic_month(args.days, args.seed)
    start = datetime.fromisoformat(args.start)
    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "load.csv"), IntervalSeries(start, load, name="load"))
    write_csv(os.path.join(args.out, "solar.csv"), IntervalSeries(start, solar, name="solar"))


if __name__ == "__main__":
    main()
