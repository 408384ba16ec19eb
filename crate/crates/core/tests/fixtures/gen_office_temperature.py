"""Generates office_temperature.csv and prints reference filter results.

The series is 5000 one-minute indoor temperature readings: a daily cycle,
an occupancy step during working hours, slow drift, sensor noise quantised
to 0.01 degC, and a handful of malformed rows to exercise ingest.

The reference results come from a plain re-implementation of the filter and
zero-order-hold reconstruction, independent of the Rust code.
"""
import csv
import datetime as dt
import math
import random
import sys

N = 5000
START = dt.datetime(2014, 7, 20, 0, 0, 0)


def series():
    rng = random.Random(20140720)
    drift = 0.0
    rows = []
    for k in range(N):
        t = START + dt.timedelta(minutes=k)
        hour = t.hour + t.minute / 60.0
        daily = 1.2 * math.sin(2 * math.pi * (hour - 9.0) / 24.0)
        occupied = 1.5 if (t.weekday() < 5 and 8 <= hour < 18) else 0.0
        drift += rng.gauss(0.0, 0.01)
        noise = rng.gauss(0.0, 0.15)
        v = round(22.0 + daily + occupied + drift + noise, 2)
        rows.append((t.strftime("%Y-%m-%d %H:%M:%S"), v))
    return rows


def naive_filter(values, n, p):
    sent = []
    for i, v in enumerate(values):
        if i < n:
            sent.append(True)
            continue
        avg = sum(values[i - n:i]) / n
        hi, lo = avg + p * abs(avg), avg - p * abs(avg)
        sent.append(not (lo < v < hi))
    return sent


def score(values, sent):
    held = None
    errs = []
    for v, s in zip(values, sent):
        if s:
            held = v
        errs.append(abs(v - held))
    total = len(values)
    transmitted = sum(sent)
    return {
        "total": total,
        "transmitted": transmitted,
        "suppressed": total - transmitted,
        "avg_error": sum(errs) / total,
        "max_error": max(errs),
    }


def main(path):
    rows = series()
    bad = {100: "n/a", 2500: "", 4000: "ERR"}
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["timestamp", "zone_temp", "setpoint"])
        for k, (ts, v) in enumerate(rows):
            w.writerow([ts, bad.get(k, f"{v:.2f}"), "22.0"])
    values = [v for k, (_, v) in enumerate(rows) if k not in bad]
    for n, p in [(10, 0.05), (10, 0.1), (10, 0.01)]:
        print(n, p, repr(score(values, naive_filter(values, n, p))))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "office_temperature.csv")
