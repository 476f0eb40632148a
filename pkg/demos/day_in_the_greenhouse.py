"""Run one simulated day end to end and poke at what it left behind.

The engine writes an append-only event log while it runs; afterwards we
replay it, pull an energy report for the afternoon, and query the broker
history for the warmest zone reading. Takes a few seconds of wall time.
"""

import argparse
import tempfile
from pathlib import Path

from aerogreen.datalog import energy_report, replay
from aerogreen.config import SimConfig
from aerogreen.runtime import Engine


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default=None, help="log directory (default: temp)")
    args = ap.parse_args()

    out = Path(args.out) if args.out else Path(tempfile.mkdtemp(prefix="ghday-"))
    out.mkdir(parents=True, exist_ok=True)

    eng = Engine(SimConfig(seed=args.seed), log_dir=str(out))
    eng.run(86400.0)
    summary = eng.summary()

    print(f"log written to {out}")
    print(f"final air temperature  {summary['air_temp']:.2f} C")
    print(f"final humidity         {summary['rel_humidity']:.1f} %")
    print(f"water consumed         {summary['water_consumed']:.1f} L")
    print("energy by device:")
    for device, kwh in sorted(summary["energy_by_device"].items()):
        if kwh:
            print(f"  {device:<14} {kwh:8.3f} kWh")
    print(f"  {'total':<14} {summary['energy_total']:8.3f} kWh")

    records = list(replay(out))
    print(f"\nthe day log holds {len(records)} records")

    afternoon = energy_report(out, 43200.0, 64800.0)
    print(f"energy 12:00-18:00     {afternoon['total']:.3f} kWh")

    frames = eng.broker.history("gh/zone0/temp", 0.0, 86400.0)
    warmest = max(frames, key=lambda f: f["v"])
    print(f"warmest zone0 reading  {warmest['v']:.2f} C at t={warmest['ts']:.0f} s")

    eng.close()


if __name__ == "__main__":
    main()
