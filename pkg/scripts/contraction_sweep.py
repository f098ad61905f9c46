#!/usr/bin/env python3
"""Randomised check of ||E[X|pi]|| <= ||X|| for every standard norm; JSON report on stdout."""
import argparse
import json
import math
import time

import numpy as np

from riskconv.config import RunConfig
from riskconv.norms import standard_norms, verify_contraction
from riskconv.probspace import FiniteSpace, Partition, RandomVariable


def sweep(trials: int, cfg: RunConfig) -> dict:
    rng = np.random.default_rng(cfg.seed)
    rows = {}
    for N in standard_norms():
        worst, bad = -math.inf, 0
        t0 = time.perf_counter()
        for _ in range(trials):
            n = int(rng.integers(1, 33))
            w = rng.random(n) + 0.05
            X = RandomVariable(FiniteSpace(w / w.sum()), rng.standard_normal(n) * rng.choice([0.1, 1.0, 10.0]))
            pi = Partition.from_labels(rng.integers(0, int(rng.integers(1, n + 1)), n))
            ok, rep = verify_contraction(N, X, pi, tol=cfg.tol)
            bad += not ok
            worst = max(worst, rep["excess"])
        rows[N.name] = {"trials": trials, "violations": bad, "max_excess": worst,
                        "seconds": round(time.perf_counter() - t0, 3)}
    return {"config": cfg.to_dict(), "norms": rows}


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=2000, help="trials per norm")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(json.dumps(sweep(args.trials, RunConfig.resolve(seed=args.seed)), indent=2))
