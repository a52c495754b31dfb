#!/usr/bin/env python3
"""Run one of the named reference coverage studies and print the report.

Usage: python scripts/coverage_study.py [name] [B]

Names: lowdim, highdim, highdim-oracle, univariate-oracle.
Set DLL_JOBS=2 (or more) to run replications in worker processes.
"""

import dataclasses
import json
import sys

from dll.cli import REFERENCE_CONFIGS, reference_config
from dll.simulate import monte_carlo


def main() -> int:
    name = sys.argv[1] if len(sys.argv) > 1 else "lowdim"
    if name not in REFERENCE_CONFIGS:
        print(f"unknown study {name!r}; choose from {sorted(REFERENCE_CONFIGS)}")
        return 2
    entry = reference_config(name)
    b = int(sys.argv[2]) if len(sys.argv) > 2 else entry["b"]
    report = monte_carlo(entry["config"], b, entry["options"], oracle=entry["oracle"])
    print(json.dumps(dataclasses.asdict(report), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
