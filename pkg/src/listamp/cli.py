"""Command-line driver: ``listamp {gen-dataset,train,eval,roc}``."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from ._container import FormatError
from .falnet import TrainingConfig, layer_dims, load_model, save_model, train
from .harness import (ALGORITHMS, DATASET_AMP_ITERATIONS, ExperimentSpec, default_thresholds,
                      format_csv, generate_dataset, load_config_file, monte_carlo_nmse,
                      read_dataset, roc_curve, write_dataset, write_text)
from .pipeline import ModelMismatchError
from .sysmodel import ExperimentConfig

EVAL_COLUMNS = ("iteration", "algorithm", "nmse_db", "trials", "skipped", "seed", "config_hash")
ROC_COLUMNS = ("delta", "mean_pf", "mean_pm", "algorithm", "iteration", "trials", "seed",
               "config_hash")


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _thresholds(text):
    """``a,b,c`` or ``geom:start:stop:count``."""
    if text.startswith("geom:"):
        _, a, b, n = text.split(":")
        return np.geomspace(float(a), float(b), int(n))
    return np.array([float(v) for v in text.split(",")])


def _add_scenario_args(p, trials_default):
    p.add_argument("--config", help="flat key = value file with ExperimentConfig keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--pilot-seed", type=int,
                   help="fix one pilot matrix drawn from this seed (default: redraw per trial)")
    p.add_argument("--snr-db", type=float)
    q = p.add_mutually_exclusive_group()
    q.add_argument("--bits", type=int, dest="quant_bits")
    q.add_argument("--unquantized", action="store_true")
    p.add_argument("--trials", type=int, default=trials_default)
    p.add_argument("--out", default="-")


def _config(args) -> ExperimentConfig:
    values = load_config_file(args.config) if args.config else {}
    if args.seed is not None:
        values["seed"] = args.seed
    if args.pilot_seed is not None:
        values["pilot_seed"] = args.pilot_seed
    if args.snr_db is not None:
        values["snr_db"] = args.snr_db
    if args.unquantized:
        values["quant_bits"] = None
    elif args.quant_bits is not None:
        values["quant_bits"] = args.quant_bits
    return ExperimentConfig(**values)


def cmd_gen_dataset(args):
    cfg = _config(args)
    f, e, header = generate_dataset(cfg, args.trials, args.amp_iters)
    write_dataset(args.out, f, e, header)
    print(f"wrote {len(f)} rows ({f.shape[1]} features, {e.shape[1]} labels) to {args.out}")


def cmd_train(args):
    f, e, header = read_dataset(args.dataset)
    dims = layer_dims(header["pilot_length"], header["n_devices"])
    if f.shape[1] != dims[0] or e.shape[1] != dims[-1]:
        raise ValueError(f"dataset widths ({f.shape[1]}, {e.shape[1]}) do not fit network {dims}")
    tcfg = TrainingConfig(learning_rate=args.lr, batch_size=args.batch, max_epochs=args.epochs,
                          validation_fraction=args.val_frac, patience=args.patience,
                          seed=args.seed)
    meta = {
        "scenario": header["scenario"],
        "snr_db": header["snr_db"],
        "config_hash": header["config_hash"],
        "dataset_seed": header["seed"],
        "amp_iterations": header["amp_iterations"],
    }
    params, hist = train(f, e, tcfg, meta)
    save_model(params, args.out)
    val = hist.val_loss[hist.best_epoch] if hist.val_loss else float("nan")
    print(f"architecture {params.layer_dims}  epochs {len(hist.train_loss)}  "
          f"best epoch {hist.best_epoch}")
    print(f"final train loss {hist.train_loss[-1]:.6g}  validation loss {val:.6g}")


def _spec(args, iterations):
    return ExperimentSpec(_config(args), args.algorithm, iterations, args.trials,
                          args.model, args.out, args.genie)


def cmd_eval(args):
    spec = _spec(args, _int_list(args.iters))
    cfg = spec.config
    net = load_model(spec.model_path) if spec.model_path and not spec.genie else None
    res = monte_carlo_nmse(cfg, spec.algorithm, spec.iterations, spec.trials, net, spec.genie)
    rows = [(t, spec.algorithm, r["nmse_db"], r["trials"], r["skipped"], cfg.seed,
             cfg.fingerprint()) for t, r in sorted(res.items())]
    write_text(spec.output_path, format_csv(EVAL_COLUMNS, rows))


def cmd_roc(args):
    spec = _spec(args, [args.iters])
    cfg = spec.config
    net = load_model(spec.model_path) if spec.model_path and not spec.genie else None
    grid = _thresholds(args.thresholds) if args.thresholds else default_thresholds()
    curve = roc_curve(cfg, spec.algorithm, grid, spec.trials, args.iters, net, spec.genie)
    rows = [(d, pf, pm, spec.algorithm, args.iters, spec.trials, cfg.seed, cfg.fingerprint())
            for d, pf, pm in curve]
    write_text(spec.output_path, format_csv(ROC_COLUMNS, rows))


def build_parser():
    p = argparse.ArgumentParser(prog="listamp", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-dataset", help="simulate round-1 AMP and write a training set")
    _add_scenario_args(g, 200_000)
    g.add_argument("--amp-iters", type=int, default=DATASET_AMP_ITERATIONS)
    g.set_defaults(func=cmd_gen_dataset)

    t = sub.add_parser("train", help="train the FAL network on a dataset file")
    t.add_argument("--dataset", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--lr", type=float, default=0.001)
    t.add_argument("--batch", type=int, default=600)
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--patience", type=int, default=10)
    t.add_argument("--val-frac", type=float, default=0.1)
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_train)

    for name, func, iters, help_ in (
            ("eval", cmd_eval, "3,5,10,20", "Monte-Carlo NMSE per iteration count"),
            ("roc", cmd_roc, None, "mean P_f / P_m over a threshold grid")):
        e = sub.add_parser(name, help=help_)
        _add_scenario_args(e, 10_000)
        e.add_argument("--algorithm", choices=ALGORITHMS, default="amp-mmse")
        e.add_argument("--model")
        e.add_argument("--genie", action="store_true",
                       help="dl-lamp with the genie selector in place of the network")
        if iters is None:
            e.add_argument("--iters", type=int, default=100)
            e.add_argument("--thresholds", help="a,b,c or geom:start:stop:count")
        else:
            e.add_argument("--iters", default=iters, help="comma-separated iteration counts")
        e.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ModelMismatchError, FormatError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: ValueError: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: OSError: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
