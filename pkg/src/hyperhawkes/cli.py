"""Command-line entry point: ``hyperhawkes <command> [flags]``.

Settings come from built-in defaults, then an optional ``--config`` JSON
file, then explicit flags (flags win). Exit status is 0 on success, 1 on a
usage error and 2 on a runtime error.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys

from .data import DataError, dumps_dataset, load_dataset, save_dataset, split_dataset

log = logging.getLogger("hyperhawkes")

SCENARIOS = ("trigger-memory", "call-response", "poisson")
ABLATION_FLAGS = {"full": "full", "not-stateful": "not_stateful", "not-hyper": "not_hyper",
                  "not-latent": "not_latent"}
GRID_DEFAULT = {"d": [8, 16, 32, 64, 128, 256], "h": [16, 32, 64, 128, 256], "l": [1, 2], "r": [2, 4, 8]}


class UsageError(Exception):
    def __init__(self, message, parser=None):
        super().__init__(message)
        self.parser = parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, self)

# defaults per command; keys double as the accepted config-file keys
DEFAULTS = {
    "gen": dict(scenario="trigger-memory", n=2000, seed=0, out=None, horizon=100.0, rates=[1.0]),
    "train": dict(data=None, val_data=None, out="model.json", history=None, seed=0, d=32, h=8, l=1, r=2,
                  ablation="full", mc_samples=20, lr=1e-3, batch=32, epochs=100, patience=10, clip=10.0,
                  val_fraction=0.15),
    "eval": dict(checkpoint=None, data=None, out=None, seed=0, mc_samples=20),
    "predict": dict(checkpoint=None, data=None, out=None, seed=0),
    "simulate": dict(checkpoint=None, out=None, seed=0, n=10, horizon=100.0),
    "attribute": dict(checkpoint=None, data=None, out="attribution", sequence=0, grid=50, seed=0),
    "gridsearch": dict(data=None, val_data=None, out="grid.jsonl", seed=0, mc_samples=20, lr=1e-3, batch=32,
                       epochs=100, patience=10, clip=10.0, ablation="full", val_fraction=0.15,
                       grid=GRID_DEFAULT, workers=None),
}


REQUIRED = {"gen": ["out"], "train": ["data"], "eval": ["checkpoint", "data"], "predict": ["checkpoint", "data"],
            "simulate": ["checkpoint", "out"], "attribute": ["checkpoint", "data"], "gridsearch": ["data"]}


def build_parser() -> _Parser:
    p = _Parser(prog="hyperhawkes", description="Hyper Hawkes process toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def cmd(name, help_):
        c = sub.add_parser(name, help=help_, argument_default=argparse.SUPPRESS)
        c.add_argument("--config", help="JSON file with settings; flags override it")
        c.add_argument("--seed", type=int)
        return c

    c = cmd("gen", "generate a synthetic dataset")
    c.add_argument("--scenario", choices=SCENARIOS)
    c.add_argument("--n", type=int)
    c.add_argument("--horizon", type=float)
    c.add_argument("--rates", type=float, nargs="+", help="per-mark rates for the poisson scenario")
    c.add_argument("--out")

    def model_flags(c):
        c.add_argument("--ablation", choices=list(ABLATION_FLAGS))
        c.add_argument("--mc-samples", dest="mc_samples", type=int)
        c.add_argument("--lr", type=float)
        c.add_argument("--batch", type=int)
        c.add_argument("--epochs", type=int)
        c.add_argument("--patience", type=int)
        c.add_argument("--clip", type=float)
        c.add_argument("--val-data", dest="val_data")
        c.add_argument("--val-fraction", dest="val_fraction", type=float)

    c = cmd("train", "fit an HHP and write a checkpoint")
    c.add_argument("--data")
    c.add_argument("--out")
    c.add_argument("--history", help="per-epoch CSV")
    for k in "dhlr":
        c.add_argument(f"--{k}", type=int)
    model_flags(c)

    c = cmd("eval", "metrics report as JSON")
    c.add_argument("--checkpoint")
    c.add_argument("--data")
    c.add_argument("--out")
    c.add_argument("--mc-samples", dest="mc_samples", type=int)

    c = cmd("predict", "next-event time and mark for every event")
    c.add_argument("--checkpoint")
    c.add_argument("--data")
    c.add_argument("--out")

    c = cmd("simulate", "sample sequences by thinning")
    c.add_argument("--checkpoint")
    c.add_argument("--out")
    c.add_argument("--n", type=int)
    c.add_argument("--horizon", type=float)

    c = cmd("attribute", "attribution CSVs for one sequence")
    c.add_argument("--checkpoint")
    c.add_argument("--data")
    c.add_argument("--out")
    c.add_argument("--sequence", type=int)
    c.add_argument("--grid", type=int, help="grid points per inter-event interval")

    c = cmd("gridsearch", "validation LL over a hyperparameter grid (resumable)")
    c.add_argument("--data")
    c.add_argument("--out")
    c.add_argument("--workers", type=int)
    model_flags(c)
    return p


def resolve(command: str, args: argparse.Namespace, parser) -> dict:
    cfg = dict(DEFAULTS[command])
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "verbose", "config")}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise UsageError("config file must hold a JSON object", parser)
        doc = {k.replace("-", "_"): v for k, v in doc.items()}
        unknown = sorted(set(doc) - set(cfg))
        if unknown:
            raise UsageError(f"unknown config keys for '{command}': {', '.join(unknown)}", parser)
        cfg.update(doc)
    cfg.update(flags)
    missing = [k for k in REQUIRED[command] if cfg.get(k) is None]
    if missing:
        raise UsageError(f"missing required settings: {', '.join('--' + m.replace('_', '-') for m in missing)}",
                         parser)
    if "ablation" in cfg:
        if cfg["ablation"] not in ABLATION_FLAGS and cfg["ablation"] not in ABLATION_FLAGS.values():
            raise UsageError(f"unknown ablation {cfg['ablation']!r}", parser)
        cfg["ablation"] = ABLATION_FLAGS.get(cfg["ablation"], cfg["ablation"])
    return cfg


def _load_model(path):
    from .model import HHP
    return HHP.load(path)


def _train_val(cfg):
    ds = load_dataset(cfg["data"])
    if cfg.get("val_data"):
        return ds, load_dataset(cfg["val_data"])
    f = cfg["val_fraction"]
    train, val, _ = split_dataset(ds, (1.0 - f, f, 0.0), seed=cfg["seed"])
    return train, val


def _fit(cfg, train_ds, val_ds, d, h, l, r, history=None):
    from .model import HHP, HHPConfig, empirical_base_rate
    from .train import TrainConfig, train

    K = train_ds.num_marks
    ablation = cfg["ablation"]
    mcfg = HHPConfig(K=K, d=K if ablation == "not_latent" else d, h=h, l=l, r=r, ablation=ablation)
    model = HHP.create(mcfg, seed=cfg["seed"], base_rate=empirical_base_rate(train_ds))
    if cfg["epochs"] == 0:
        return model, None
    tcfg = TrainConfig(lr=cfg["lr"], batch_size=cfg["batch"], max_epochs=cfg["epochs"], patience=cfg["patience"],
                       mc_per_interval=cfg["mc_samples"], clip_norm=cfg["clip"], seed=cfg["seed"])
    res = train(model, train_ds, val_ds, tcfg, history_path=history)
    return res.model, res


def cmd_gen(cfg):
    from . import synth

    sc, n, seed = cfg["scenario"], cfg["n"], cfg["seed"]
    if sc == "trigger-memory":
        ds = synth.gen_trigger_memory(synth.TriggerMemoryConfig(horizon=cfg["horizon"], n_sequences=n, seed=seed))
    elif sc == "call-response":
        ds = synth.gen_call_response(synth.CallResponseConfig(horizon=cfg["horizon"], n_sequences=n, seed=seed))
    else:
        ds = synth.gen_poisson(cfg["rates"], cfg["horizon"], n, seed)
    save_dataset(ds, cfg["out"])
    log.info("wrote %d sequences (%d events) to %s", len(ds), ds.n_events, cfg["out"])


def cmd_train(cfg):
    train_ds, val_ds = _train_val(cfg)
    model, res = _fit(cfg, train_ds, val_ds, cfg["d"], cfg["h"], cfg["l"], cfg["r"], cfg["history"])
    model.save(cfg["out"])
    if res is not None:
        log.info("best epoch %d, val ll %.4f", res.best_epoch, res.best_val_ll)
    log.info("checkpoint written to %s", cfg["out"])


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_eval(cfg):
    from .evaluation import EvalConfig, evaluate
    from .model import check_model_data

    model = _load_model(cfg["checkpoint"])
    ds = load_dataset(cfg["data"])
    check_model_data(model, ds)
    report = evaluate(model, ds, EvalConfig(mc_per_interval=cfg["mc_samples"], seed=cfg["seed"]))
    _emit(report.to_json() + "\n", cfg["out"])


def cmd_predict(cfg):
    from .evaluation import mark_probabilities, predict_next_mark, predict_next_time
    from .model import check_model_data

    model = _load_model(cfg["checkpoint"])
    ds = load_dataset(cfg["data"])
    check_model_data(model, ds)
    lines = []
    for idx, seq in enumerate(ds):
        runner = model.runner()
        rows = []
        for t, k in zip(seq.times, seq.marks):
            pred = predict_next_time(runner)
            rows.append({"t_prev": runner.t_last, "pred_dt": pred.mean, "true_dt": float(t - runner.t_last),
                         "truncated": pred.truncated, "pred_mark": predict_next_mark(runner, t),
                         "true_mark": int(k), "mark_probs": mark_probabilities(runner, t).tolist()})
            runner.observe(t, k)
        lines.append(json.dumps({"sequence": idx, "predictions": rows}))
    _emit("\n".join(lines) + "\n", cfg["out"])


def cmd_simulate(cfg):
    from .simulate import simulate_dataset

    model = _load_model(cfg["checkpoint"])
    ds = simulate_dataset(model, cfg["horizon"], cfg["n"], cfg["seed"])
    with open(cfg["out"], "w") as fh:
        fh.write(dumps_dataset(ds))
    log.info("simulated %d sequences (%d events)", len(ds), ds.n_events)


def cmd_attribute(cfg):
    from .interpret import attribution_report, write_report
    from .model import check_model_data

    model = _load_model(cfg["checkpoint"])
    ds = load_dataset(cfg["data"])
    check_model_data(model, ds)
    i = cfg["sequence"]
    if not 0 <= i < len(ds):
        raise UsageError(f"--sequence {i} out of range [0, {len(ds)})")
    report = attribution_report(model, ds[i], cfg["grid"])
    paths = write_report(report, cfg["out"], model.fingerprint(),
                         {"sequence": i, "grid_per_interval": cfg["grid"], "data": os.path.abspath(cfg["data"])})
    for p in paths:
        log.info("wrote %s", p)


def _grid_cells(grid):
    keys = ["d", "h", "l", "r"]
    unknown = set(grid) - set(keys)
    if unknown:
        raise UsageError(f"unknown grid keys: {sorted(unknown)}")
    values = [list(grid.get(k, GRID_DEFAULT[k])) for k in keys]
    return [dict(zip(keys, v)) for v in itertools.product(*values)]


def _run_cell(cfg, train_ds, val_ds, cell):
    from .model import dataset_log_likelihood

    model, res = _fit(cfg, train_ds, val_ds, cell["d"], cell["h"], cell["l"], cell["r"])
    val_ll = res.best_val_ll if res is not None else \
        dataset_log_likelihood(model, val_ds, cfg["mc_samples"], cfg["seed"])[0]
    return {**cell, "val_ll": val_ll, "n_parameters": model.n_parameters()}


def cmd_gridsearch(cfg):
    from concurrent.futures import ProcessPoolExecutor

    from .evaluation import default_workers

    train_ds, val_ds = _train_val(cfg)
    cells = _grid_cells(cfg["grid"])
    done = set()
    if os.path.exists(cfg["out"]):
        with open(cfg["out"]) as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    done.add(tuple(rec[k] for k in "dhlr"))
    todo = [c for c in cells if tuple(c[k] for k in "dhlr") not in done]
    log.info("%d cells, %d already done", len(cells), len(cells) - len(todo))
    workers = cfg["workers"] or default_workers()
    with open(cfg["out"], "a") as fh:
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                futures = [pool.submit(_run_cell, cfg, train_ds, val_ds, c) for c in todo]
                for fut in futures:
                    fh.write(json.dumps(fut.result()) + "\n")
                    fh.flush()
        else:
            for c in todo:
                fh.write(json.dumps(_run_cell(cfg, train_ds, val_ds, c)) + "\n")
                fh.flush()


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "predict": cmd_predict,
            "simulate": cmd_simulate, "attribute": cmd_attribute, "gridsearch": cmd_gridsearch}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required", parser)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        try:
            cfg = resolve(args.command, args, sub)
            logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                                format="%(levelname)s %(message)s")
            COMMANDS[args.command](cfg)
        except UsageError as e:
            e.parser = e.parser or sub
            raise
    except UsageError as e:
        target = e.parser or parser
        target.print_help(sys.stderr)
        print(f"\nerror: {e}", file=sys.stderr)
        return 1
    except (DataError, ValueError, OSError, RuntimeError, KeyError, IndexError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
