#!/usr/bin/env python3
"""Run the desk-scale preset and print the summary.

Usage: python scripts/run_desk_sim.py [seed] [output_dir]
"""

import sys
from dataclasses import replace
from pathlib import Path

from crowdgate.sim import format_summary, preset, run_simulation


def main() -> None:
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
    out = Path(sys.argv[2]) if len(sys.argv) > 2 else Path("out/desk")
    config, scenario = preset("desk", seed=seed)
    config = replace(config, log_path=str(out / "events.log"))
    report, _, _ = run_simulation(config, scenario, seed=seed, output_dir=out)
    print(format_summary(report))
    print(f"artifacts in {out}/")


if __name__ == "__main__":
    main()
