"""Response time and accuracy as k grows, at one dataset size.

    python3 scripts/run_k_sweep.py --size 100000 --ks 5,10,20,50,100
"""

import argparse
import json
import logging

from geomcm.bench import METHODS, DEFAULT_KS, WorkloadSpec, sweep
from geomcm.gmrtree import TreeParams
from geomcm.synth import SynthSpec


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--size", type=int, default=100_000)
    p.add_argument("--ks", default=",".join(map(str, DEFAULT_KS)))
    p.add_argument("--mu", type=float, default=0.5)
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--fanout", type=int, default=32)
    p.add_argument("--ell", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    report = sweep([args.size], [int(k) for k in args.ks.split(",")],
                   WorkloadSpec(0, args.queries, 1, args.mu, args.seed), SynthSpec(n=1000, seed=args.seed),
                   METHODS, gamma=16, params=TreeParams(args.fanout, None, args.ell), progress=logging.info)
    print(report.table())
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report.to_dict(), fh, indent=1)


if __name__ == "__main__":
    main()
