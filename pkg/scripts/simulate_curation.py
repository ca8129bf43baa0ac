#!/usr/bin/env python3
"""Simulate a multi-expert curation session against a running vote service.

Point it at a `ctxtail curate-serve` instance; each simulated expert accepts
clusters with the given probability, then the script finalizes the registry.

Example:
    ctxtail curate-serve --config cfg.ini --store store --port 8765 &
    python scripts/simulate_curation.py --url http://127.0.0.1:8765 --accept-rate 0.6
"""

import argparse

import numpy as np
import requests


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--url", default="http://127.0.0.1:8765")
    ap.add_argument("--experts", nargs="+", default=["expert1", "expert2", "expert3"])
    ap.add_argument("--accept-rate", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    total = requests.get(f"{args.url}/api/clusters", params={"size": 1}).json()["total"]
    ids = []
    page = 0
    while len(ids) < total:
        chunk = requests.get(f"{args.url}/api/clusters", params={"page": page, "size": 200}).json()
        ids.extend(c["cluster_id"] for c in chunk["clusters"])
        page += 1
    print(f"{total} clusters to vote on")

    for expert in args.experts:
        for cid in ids:
            decision = "accept" if rng.random() < args.accept_rate else "reject"
            r = requests.post(
                f"{args.url}/api/vote",
                json={"expert_id": expert, "cluster_id": cid, "decision": decision},
            )
            r.raise_for_status()
        print(f"{expert}: voted on {len(ids)} clusters")

    print(requests.get(f"{args.url}/api/progress").json())
    out = requests.post(f"{args.url}/api/finalize").json()
    print(f"finalized: {out['n_selected']} clusters selected -> {out.get('registry')}")


if __name__ == "__main__":
    main()
