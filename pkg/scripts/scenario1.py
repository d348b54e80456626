"""Trigger-memory experiment: train HHP and its ablations, compare with the
Poisson baseline and probe the intensity spike after each trigger."""

import argparse
import json
import logging

from hyperhawkes.experiments import ExperimentConfig, make_data, poisson_baseline_ll, run, spike_report


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ablations", nargs="+", default=["full", "not_stateful", "not_hyper", "not_latent"])
    ap.add_argument("--budget", type=float, default=600.0, help="training seconds per model")
    ap.add_argument("--lr", type=float, default=1e-2)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--save-dir", help="write one checkpoint per ablation here")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    cfg = ExperimentConfig(scenario="trigger-memory", lr=args.lr, seed=args.seed, time_budget_s=args.budget)
    data = make_data(cfg)
    out = {"poisson_test_ll": poisson_baseline_ll(data)}
    for ablation in args.ablations:
        res = run(cfg, data, ablation)
        row = {"test_ll": res.test_ll, "epochs": res.epochs, "seconds": round(res.seconds, 1)}
        if ablation == "full":
            spikes = spike_report(res.model, data.test)
            row.update(spike_fraction=spikes.fraction_spiking, follow_up_accuracy=spikes.follow_accuracy,
                       n_triggers=int(spikes.ratios.size))
        if args.save_dir:
            res.model.save(f"{args.save_dir}/scenario1_{ablation}.json")
        out[ablation] = row
        print(ablation, json.dumps(row), flush=True)
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
