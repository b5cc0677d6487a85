"""Command-line entry point.

Verbs: generate, train, eval, resonance-sweep, gradcheck.  Exit codes:
0 success, 1 usage/config error, 2 numerical failure.  OSCNET_THREADS
(read at package import) caps BLAS threads for reproducible timings.
"""

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import dataio, dynamics, tasks, training
from .config import TASK_DIMS, build_dataset, build_network, parse_config
from .errors import (
    ConfigError,
    DivergenceError,
    NumericalCheckError,
    UsageError,
)
from .layers import HopfLayer, OCNNBlock
from .tensor import as_tensor, grad_check
from .training import Adam, LossModel, mse_loss


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    parser = _Parser(prog="oscnet",
                     description="Oscillatory neural network toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a dataset file")
    p.add_argument("task", help="task id, e.g. signal-generation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output dataset path")
    p.add_argument("--config", help="optional config supplying [dataset] "
                                    "arguments")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a configured network")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="override the config output directory")
    p.add_argument("--dataset", help="pregenerated dataset file (default: "
                                     "generate from the config)")
    p.add_argument("--checkpoint", help="resume from this checkpoint")
    p.add_argument("--epochs-override", type=int, dest="epochs_override")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=("all", "train", "val"),
                   default="all",
                   help="evaluate everything or one side of the training "
                        "split (default: all)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("resonance-sweep",
                       help="forced-oscillator tuning curve")
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=-100.0)
    p.add_argument("--force", type=float, default=0.2)
    p.add_argument("--omega-min", type=float, default=-6.0)
    p.add_argument("--omega-max", type=float, default=6.0)
    p.add_argument("--omega-points", type=int, default=41)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--steps", type=int, default=40000)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_resonance_sweep)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of a configured "
                            "architecture")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def _read_config(path, seed=None, epochs=None):
    try:
        with open(path, "r") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError("cannot read config %s: %s" % (path, exc)) from exc
    return _apply_overrides(text, seed, epochs)


def _apply_overrides(text, seed=None, epochs=None):
    config = parse_config(text)
    if seed is not None:
        config.seed = seed
        config.training = dataclasses.replace(config.training, seed=seed)
    if epochs is not None:
        if epochs < 0:
            raise UsageError("--epochs-override must be >= 0")
        config.training = dataclasses.replace(config.training,
                                              epochs=epochs)
    echo = {"text": text, "seed": config.seed,
            "epochs": config.training.epochs}
    return config, echo


def _check_dt(network, dataset):
    problems = []
    for layer in network.layers:
        if isinstance(layer, (HopfLayer, OCNNBlock)):
            if dataset.task != "moving-squares" and \
                    layer.config.dt != dataset.dt:
                problems.append(
                    "layer %r integrates at dt=%g but the dataset is "
                    "sampled at dt=%g" % (layer.name, layer.config.dt,
                                          dataset.dt))
    if problems:
        raise ConfigError(problems)


def cmd_generate(args):
    if args.task not in tasks.TASK_GENERATORS:
        raise UsageError("unknown task %r; valid tasks: %s"
                         % (args.task,
                            ", ".join(sorted(tasks.TASK_GENERATORS))))
    kwargs = {}
    if args.config:
        config, _ = _read_config(args.config)
        if config.task != args.task:
            raise UsageError("config is for task %r, not %r"
                             % (config.task, args.task))
        kwargs = dict(config.dataset)
    dataset = tasks.TASK_GENERATORS[args.task](args.seed, **kwargs)
    dataio.save_dataset(args.out, dataset)
    first = dataset.samples[0]
    print("wrote %s: %d samples, input %s, target %s, dt %g"
          % (args.out, len(dataset.samples), list(first.input.shape),
             list(first.target.shape), dataset.dt))
    return 0


def cmd_train(args):
    config, echo = _read_config(args.config, seed=args.seed,
                                epochs=args.epochs_override)
    out_dir = args.out or config.out_dir
    if args.dataset:
        dataset = dataio.load_dataset(args.dataset)
        if dataset.task != config.task:
            raise UsageError("dataset file is for task %r but the config "
                             "trains %r" % (dataset.task, config.task))
    else:
        dataset = build_dataset(config)
    network = build_network(config)
    _check_dt(network, dataset)

    optimizer = None
    rng = None
    start_epoch = 0
    if args.checkpoint:
        ckpt = dataio.load_checkpoint(args.checkpoint)
        dataio.restore_network(network, ckpt)
        optimizer = Adam(network.parameters(), config.training)
        optimizer.load_state_arrays(ckpt["adam_arrays"], ckpt["adam_t"])
        rng = dataio.restore_rng(ckpt["rng_state"])
        start_epoch = ckpt["epoch"]

    if optimizer is None:
        optimizer = Adam(network.parameters(), config.training)
    if rng is None:
        rng = training.epoch_rng(config.training)

    history = training.train(network, dataset, config.training,
                             optimizer=optimizer, rng=rng,
                             start_epoch=start_epoch)

    os.makedirs(out_dir, exist_ok=True)
    dataio.write_metrics_csv(os.path.join(out_dir, "metrics.csv"), history)
    dataio.write_history_csv(os.path.join(out_dir, "history.csv"), history)
    dataio.save_checkpoint(os.path.join(out_dir, "checkpoint.bin"), network,
                           optimizer, config.training.epochs, rng,
                           config_echo=echo)
    _write_traces(out_dir, network, dataset, config)

    if len(history):
        print("trained %d epochs: train_loss %.6g, val_loss %.6g"
              % (len(history), history.train_loss[-1], history.val_loss[-1]))
        if not np.isnan(history.accuracy[-1]):
            print("accuracy %.4f" % history.accuracy[-1])
    else:
        print("trained 0 epochs (checkpoint of initial parameters written)")
    print("outputs in %s" % out_dir)
    return 0


def _write_traces(out_dir, network, dataset, config, limit=8):
    """Prediction traces (time, desired, predicted) for plotting; vector
    tasks only, video frames do not fit a per-timestep CSV row."""
    if TASK_DIMS.get(config.task) is None:
        return
    trace_dir = os.path.join(out_dir, "traces")
    os.makedirs(trace_dir, exist_ok=True)
    _, val_idx = training.split_indices(len(dataset.samples),
                                        config.training)
    indices = list(val_idx[:limit]) or list(range(min(limit,
                                                      len(dataset.samples))))
    for i in indices:
        s = dataset.samples[i]
        pred = network.forward(as_tensor(s.input))
        times = np.arange(s.target.shape[-1]) * s.dt
        dataio.write_trace_csv(
            os.path.join(trace_dir, "sample_%03d.csv" % i),
            times, s.target, pred.re)


def cmd_eval(args):
    ckpt = dataio.load_checkpoint(args.checkpoint)
    if not ckpt.get("config"):
        raise UsageError("checkpoint carries no config echo; cannot "
                         "rebuild the network")
    config, _ = _apply_overrides(ckpt["config"]["text"],
                                 seed=ckpt["config"].get("seed"),
                                 epochs=ckpt["config"].get("epochs"))
    dataset = dataio.load_dataset(args.dataset)
    if dataset.task != config.task:
        raise UsageError("dataset is for task %r but the checkpoint was "
                         "trained on %r" % (dataset.task, config.task))
    if len(dataset.samples) == 0:
        raise UsageError("dataset is empty")
    network = build_network(config)
    dataio.restore_network(network, ckpt)

    samples = dataset.samples
    if args.split != "all":
        tr, va = training.split_indices(len(samples), config.training)
        chosen = tr if args.split == "train" else va
        samples = [samples[i] for i in chosen]
        if not samples:
            raise UsageError("the %r split of this dataset is empty"
                             % args.split)
    loss, acc = training.evaluate(network, samples,
                                  config.training.batch_size)
    print("loss %.17g" % loss)
    if not np.isnan(acc):
        print("accuracy %.4f" % acc)
    return 0


def cmd_resonance_sweep(args):
    if args.omega_points < 1:
        raise UsageError("--omega-points must be >= 1")
    grid = np.linspace(args.omega_min, args.omega_max, args.omega_points)
    sweep = dynamics.resonance_sweep(args.mu, args.beta, args.force, grid,
                                     dt=args.dt, n_steps=args.steps)
    dataio.write_sweep_csv(args.out, sweep)
    peak = int(np.nanargmax(sweep["amplitude"]))
    print("wrote %s: %d points, peak amplitude %.6g at domega %.4g"
          % (args.out, len(grid), sweep["amplitude"][peak],
             sweep["domega"][peak]))
    if np.any(sweep["diverged"]):
        print("warning: %d grid points diverged"
              % int(np.sum(sweep["diverged"])))
    if np.any(~sweep["settled"]):
        print("note: %d grid points had not settled by the last 10%% of "
              "steps" % int(np.sum(~sweep["settled"])))
    return 0


def cmd_gradcheck(args):
    config, _ = _read_config(args.config, seed=args.seed)
    network = build_network(config)
    rng = np.random.default_rng(config.seed)
    dims = TASK_DIMS[config.task]
    T = 5
    if dims is None:
        x = rng.uniform(0.0, 1.0, size=(40, 40, 1, T))
        y = rng.uniform(0.0, 1.0, size=(40, 40, 1, T))
    else:
        d_in, d_out = dims
        x = rng.normal(size=(d_in, T))
        y = rng.normal(size=(d_out, T))
    report = grad_check(LossModel(network), sample=(x, y), tolerance=1e-3)
    print("checked %d coordinates: max relative error %.3e"
          % (report.n_coords, report.max_rel_err))
    if report.passed:
        print("gradcheck PASS")
        return 0
    name, index, part = report.worst
    print("gradcheck FAIL at parameter %r[%d].%s" % (name, index, part))
    return 2


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # --help and friends
        code = exc.code
        return 0 if code is None else int(code)
    except UsageError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except ConfigError as exc:
        print("config error:", file=sys.stderr)
        for problem in exc.problems:
            print("  - %s" % problem, file=sys.stderr)
        return 1
    except (DivergenceError, NumericalCheckError) as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
