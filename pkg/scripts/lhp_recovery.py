"""Simulate a linear Hawkes process by thinning and refit it by maximum likelihood."""

import argparse
import json

import numpy as np

from hyperhawkes.baselines import LHPParams, fit_lhp
from hyperhawkes.simulate import simulate_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--horizon", type=float, default=100.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    true = LHPParams([0.3, 0.2], [[0.5, 0.2], [0.1, 0.4]], [1.0, 2.0])
    ds = simulate_dataset(true, args.horizon, args.n, args.seed)
    fit, res = fit_lhp(ds)
    rel = {k: (np.asarray(getattr(fit, k)) / np.asarray(getattr(true, k)) - 1).tolist()
           for k in ("mu", "alpha", "beta")}
    print(json.dumps({"events": ds.n_events, "converged": bool(res.success),
                      "fit": {"mu": fit.mu.tolist(), "alpha": fit.alpha.tolist(), "beta": fit.beta.tolist()},
                      "relative_error": rel}, indent=2))


if __name__ == "__main__":
    main()
