"""Run the full pipeline on every reference config.

Usage: python scripts/run_references.py [OUT_DIR]
"""

import sys
from pathlib import Path

from gradleaf.cli import main

ROOT = Path(__file__).resolve().parent.parent


def run_all(out_root):
    codes = {}
    for config in sorted((ROOT / "configs").glob("*.json")):
        out = Path(out_root) / config.stem
        print(f"== {config.name} -> {out}")
        codes[config.name] = main(["all", "--config", str(config),
                                   "--out", str(out), "--seed", "0"])
    return codes


if __name__ == "__main__":
    out_root = sys.argv[1] if len(sys.argv) > 1 else "out"
    codes = run_all(out_root)
    bad = {k: v for k, v in codes.items() if v != 0}
    if bad:
        print(f"failures: {bad}")
        sys.exit(max(bad.values()))
    print("all reference runs passed")
