"""Run shipped configs and print final regret per agent.

    python3 scripts/run_experiments.py                 # every config, full size
    python3 scripts/run_experiments.py configs/max_coupling.json --horizon 10000
"""

import argparse
import time
from pathlib import Path

from tscomplex.harness import ExperimentConfig, run_experiment

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser()
    p.add_argument("configs", nargs="*", type=Path)
    p.add_argument("--out", type=Path, default=ROOT / "results")
    p.add_argument("--horizon", type=int)
    p.add_argument("--replications", type=int)
    args = p.parse_args()

    for path in args.configs or sorted((ROOT / "configs").glob("*.json")):
        cfg = ExperimentConfig.load(path)
        if args.horizon:
            cfg.horizon = args.horizon
        if args.replications:
            cfg.replications = args.replications
        t0 = time.perf_counter()
        rep = run_experiment(cfg, args.out / path.stem)
        print(f"== {path.stem} (T={cfg.horizon}, R={cfg.replications}, seed={cfg.seed}, "
              f"{time.perf_counter() - t0:.1f}s)")
        for name, s in rep.agents.items():
            r = s.regret[str(cfg.horizon)]
            slope = "n/a" if s.slope is None else f"{s.slope:.2f}"
            print(f"  {name:20s} regret {r['mean']:10.2f} +/- {r['ci95_half_width']:.2f}   slope {slope}")
        if rep.bounds:
            b = rep.bounds
            keys = ("c_relaxation", "c_bruteforce", "prop2_bound", "cor2_constant", "cor3_bound",
                    "decoupled_constant")
            print("  bounds: " + ", ".join(f"{k}={b[k]:.4g}" for k in keys if b.get(k) is not None))


if __name__ == "__main__":
    main()
