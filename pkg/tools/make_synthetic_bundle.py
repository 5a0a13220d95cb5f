"""Write a planted-partition citation bundle, for trying the pipeline without the real datasets.

    python3 tools/make_synthetic_bundle.py --out data/planted --nodes 2708 --classes 7 --features 1433
"""
import argparse
from pathlib import Path

import numpy as np

from gnnonline.data import write_bundle
from gnnonline.synthetic import planted_citation_bundle


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--nodes", type=int, default=1000)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--features", type=int, default=200)
    p.add_argument("--avg-degree", type=float, default=4.0)
    p.add_argument("--homophily", type=float, default=0.8)
    p.add_argument("--train", type=int, default=100, help="size of the predefined training mask")
    p.add_argument("--test", type=int, default=300, help="size of the predefined test mask")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    b = planted_citation_bundle(args.nodes, args.classes, args.features, args.avg_degree, args.homophily,
                                seed=args.seed, name=args.out.name)
    order = np.random.default_rng(args.seed).permutation(args.nodes)
    write_bundle(args.out, b.name, b.features, b.labels, b.edges, b.num_classes,
                 train_mask=np.sort(order[:args.train]),
                 test_mask=np.sort(order[args.train:args.train + args.test]))
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
