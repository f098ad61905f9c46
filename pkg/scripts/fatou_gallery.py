#!/usr/bin/env python3
"""Fatou probes for every measure/family/norm combination, plus the counterexample gallery."""
import argparse
import json

from riskconv.config import RunConfig
from riskconv.fatou import KINDS, SequenceFamily, gallery_bigexamp1, gallery_bigexamp2, probe, \
    pstar_consequence_probe
from riskconv.measures import RiskMeasure
from riskconv.norms import standard_norms


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--horizon", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = RunConfig.resolve(seed=args.seed)
    measures = [RiskMeasure.es(0.1), RiskMeasure.es(0.5), RiskMeasure.entropic(1.0),
                RiskMeasure.neg_expectation()]
    table = []
    for rho in measures:
        for kind in KINDS:
            norms = standard_norms() if kind == "norm_bounded_as" else standard_norms()[:1]
            for N in norms:
                rep = probe(rho, SequenceFamily(kind, N, seed=cfg.seed), args.trials, args.horizon, cfg.tol)
                table.append({"measure": rho.name, "kind": kind, "norm": N.name,
                              "violations": rep.violations, "max_violation": rep.max_violation})
    gallery = {"bigexamp2": gallery_bigexamp2(8), "bigexamp1": gallery_bigexamp1()}
    pstar = [pstar_consequence_probe(N, trials=args.trials, seed=cfg.seed) for N in standard_norms()]
    out = {"config": cfg.to_dict(), "probes": table, "gallery": gallery, "pstar": pstar}
    print(json.dumps(out, indent=2, default=str))


if __name__ == "__main__":
    main()
