"""Tabulate the bound constants of one config over a range of T."""

import argparse

import numpy as np

from tscomplex.harness import ExperimentConfig, build_from_config
from tscomplex.bounds import bound_report


def main():
    p = argparse.ArgumentParser()
    p.add_argument("config")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--bruteforce", action="store_true")
    p.add_argument("--decades", type=int, nargs=2, default=(2, 6))
    args = p.parse_args()

    built = build_from_config(ExperimentConfig.load(args.config).instance)
    cols = ("chi", "c_bruteforce", "c_relaxation", "prop2_bound", "cor2_constant", "cor3_bound")
    print("T".rjust(10) + "".join(c.rjust(15) for c in cols))
    for T in np.logspace(*args.decades, args.decades[1] - args.decades[0] + 1):
        rep = bound_report(built.instance, args.epsilon, T, args.bruteforce, env=built.env, truth=built.truth,
                           grid_beta=built.beta).as_dict()
        cells = ["-" if rep[c] is None else f"{rep[c]:.4g}" for c in cols]
        print(f"{T:10.0e}" + "".join(x.rjust(15) for x in cells))


if __name__ == "__main__":
    main()
