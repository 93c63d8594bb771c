"""Run every demo through the command-line front end and collect the reports.

    python3 scripts/reproduce.py --out results            # everything (about 2 minutes)
    python3 scripts/reproduce.py --out results --only counts weyl
"""

import argparse
import json
import sys
import tempfile
import time
from pathlib import Path

from fiosample import cli

RUNS = {
    "counts": ("counts", {}),
    "weyl": ("weyl", {"hs": [0.04, 0.02, 0.01]}),
    "alias-classical": ("alias-demo", {"mode": "classical"}),
    "alias-classical-shannon": ("alias-demo", {"mode": "classical", "interpolation": "shannon"}),
    "alias-angular": ("alias-demo", {"mode": "angular"}),
    "alias-angular-lanczos3": ("alias-demo", {"mode": "angular", "interpolation": "lanczos3"}),
    "alias-control": ("alias-demo", {"mode": "control"}),
    "alias-radial": ("alias-demo", {"mode": "radial"}),
    "resolution-diagram": ("resolution-diagram", {"R": 1.0}),
    "average-p": ("average-demo", {"variable": "p", "strength": 12.5}),
    "average-alpha": ("average-demo", {"variable": "alpha", "strength": 5.0}),
    "average-beta": ("average-demo", {"variable": "beta", "strength": 50.0}),
    "tat": ("tat-demo", {}),
    "random-gaussians": ("radon-fan", {"phantom": {"kind": "random_gaussians", "count": 6, "width": 0.02}, "seed": 1}),
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="results")
    ap.add_argument("--only", nargs="*", choices=sorted(RUNS))
    ap.add_argument("--format", choices=["png", "csv", "bin"], default="png")
    args = ap.parse_args(argv)
    root = Path(args.out)
    summary = {}
    with tempfile.TemporaryDirectory() as tmp:
        for name in args.only or RUNS:
            command, cfg = RUNS[name]
            path = Path(tmp) / f"{name}.json"
            path.write_text(json.dumps(cfg))
            t0 = time.perf_counter()
            code = cli.main([command, "--config", str(path), "--out", str(root / name), "--format", args.format])
            summary[name] = {"exit": code, "seconds": round(time.perf_counter() - t0, 1)}
            print(f"{name:26s} exit {code}  {summary[name]['seconds']:6.1f}s", flush=True)
    root.mkdir(parents=True, exist_ok=True)
    (root / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return max(s["exit"] for s in summary.values())


if __name__ == "__main__":
    sys.exit(main())
