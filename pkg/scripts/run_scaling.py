"""Response time and traversal effort as the dataset grows (k fixed).

    python3 scripts/run_scaling.py --sizes 40000,80000,120000,160000,200000 --out scaling.json
"""

import argparse
import json
import logging

from geomcm.bench import METHODS, DEFAULT_SIZES, WorkloadSpec, sweep
from geomcm.gmrtree import TreeParams
from geomcm.synth import SynthSpec


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--sizes", default=",".join(map(str, DEFAULT_SIZES)))
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--mu", type=float, default=0.5)
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--spatial", choices=("uniform", "clustered"), default="uniform")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the report as JSON")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    template = SynthSpec(n=1000, spatial=args.spatial, seed=args.seed)
    report = sweep([int(s) for s in args.sizes.split(",")], [args.k],
                   WorkloadSpec(0, args.queries, args.k, args.mu, args.seed), template, METHODS,
                   gamma=16, params=TreeParams(), progress=logging.info)
    print(report.table())
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report.to_dict(), fh, indent=1)


if __name__ == "__main__":
    main()
