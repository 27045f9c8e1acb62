"""Run every YAML config in configs/ through the CLI and tabulate exit codes."""

import argparse
import time
from pathlib import Path

from quasicontact.cli import run

ROOT = Path(__file__).resolve().parent.parent


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--configs", type=Path, default=ROOT / "configs")
    parser.add_argument("--out", type=Path, default=ROOT / "runs")
    args = parser.parse_args()

    rows = []
    for path in sorted(args.configs.glob("*.yaml")):
        start = time.perf_counter()
        code = run(path, out=args.out / path.stem)
        rows.append((path.stem, code, time.perf_counter() - start))
    print(f"\n{'config':<20} {'exit':>4} {'seconds':>9}")
    for name, code, secs in rows:
        print(f"{name:<20} {code:>4} {secs:>9.1f}")
    raise SystemExit(max(code for _, code, _ in rows) if rows else 0)


if __name__ == "__main__":
    main()
