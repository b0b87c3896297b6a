"""``sparsedan`` command line: train, quantize, eval, sweep and report.

All tabular output is CSV with a header row. Exit codes: 0 on success,
1 when a command fails at run time, 2 for bad flags.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .classifier import ClassifierHead, HeadConfig, accuracy, train_head
from .mnist import IdxError, default_data_dir, load_split, subsample
from .modelfile import ModelFileError, load_model, save_model
from .numerics import ContractError, DomainError, Rng
from .quantize import QuantMode, features, memory_report, quantize, sigma
from .rbm import TrainConfig
from .regularizer import RegKind, mixed_norm
from .stack import DanModel

RUNTIME_ERRORS = (ContractError, DomainError, IdxError, ModelFileError, OSError)


def fmt(value):
    """Stable text for CSV cells."""
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6g}"
    return str(value)


def write_csv(rows, header, out=None):
    text = [",".join(header)] + [",".join(fmt(v) for v in row) for row in rows]
    payload = "\n".join(text) + "\n"
    if out is None or str(out) == "-":
        sys.stdout.write(payload)
    else:
        Path(out).write_text(payload)
    return payload


def _int_list(text):
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if len(values) < 2 or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError("need at least two positive layer sizes")
    return tuple(values)


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive_int(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _nonneg_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _data_dir(args, parser):
    path = args.data_dir or default_data_dir()
    if not path:
        parser.error("--data-dir is required (or set DAN_DATA_DIR)")
    return path


# -- train ---------------------------------------------------------------------

def cmd_train(args, parser):
    if not 0.0 <= args.gamma <= 1.0:
        parser.error("--gamma must lie in [0, 1]")
    data_dir = _data_dir(args, parser)
    preset = ex.Preset(
        "cli", args.layers, args.n_train, 1,
        TrainConfig(lr=args.lr, epochs=args.epochs, batch_size=args.batch,
                    cd_steps=args.cd_steps, seed=args.seed),
        lam=args.lam, gamma=args.gamma, per_case_decay=args.decay == "per-case",
    )
    train = subsample(Rng(args.seed).child(ex.CHILD_TRAIN_DATA), load_split(data_dir, "train"), args.n_train)
    if train.images.shape[1] != args.layers[0]:
        raise ContractError(f"data has {train.images.shape[1]} inputs, --layers starts with {args.layers[0]}")
    split = ex.Split(train.images, train.labels, train.images[:0], train.labels[:0], train.source_hash)
    reg = preset.reg(args.reg, lam=0.0 if args.reg == "none" else args.lam)

    log_rows = []

    def progress(layer, epoch, err, params):
        log_rows.append((layer, epoch, err, sigma(params.W, ex.SIGMA_PROBE_U),
                         mixed_norm(params.W), mixed_norm(params.W.T)))
        if args.verbose:
            print(f"layer {layer} epoch {epoch} recon {err:.5f}", file=sys.stderr)

    model = ex.train_model(preset, split, args.seed, reg, ex.ModelCache(args.cache_dir), progress)
    save_model(model, args.out)
    log_path = args.log or f"{args.out}.progress.csv"
    if log_rows:
        write_csv(log_rows, ("layer", "epoch", "recon_error", "sigma_u0.1", "mixed_norm", "mixed_norm_T"),
                  log_path)
    print(f"wrote {args.out}", file=sys.stderr)
    return 0


# -- quantize --------------------------------------------------------------------

def cmd_quantize(args, parser):
    if (args.threshold is None) == (args.sigma is None):
        parser.error("give exactly one of --threshold or --sigma")
    if args.sigma is not None and not 0.0 < args.sigma <= 1.0:
        parser.error("--sigma must lie in (0, 1]")
    model = load_model(args.model)
    if not isinstance(model, DanModel):
        raise ContractError(f"{args.model} is already quantised ({model.mode.label})")
    q = quantize(model, args.mode, threshold=args.threshold, target_sigma=args.sigma)
    save_model(q, args.out)
    rep = memory_report(q)
    write_csv(rep.rows(), rep.CSV_HEADER, args.report)
    return 0


# -- eval ------------------------------------------------------------------------

def _variant_name(model):
    return "dense" if isinstance(model, DanModel) else model.mode.label


def cmd_eval(args, parser):
    data_dir = _data_dir(args, parser)
    if args.head[0] not in ("retrain", "load") or (args.head[0] == "load") != (len(args.head) == 2) \
            or len(args.head) > 2:
        parser.error("--head takes 'retrain' or 'load PATH'")
    model = load_model(args.model)
    preset = ex.Preset("eval", (), args.n_train, args.n_test, TrainConfig())
    split = ex.load_data(data_dir, preset, args.seed)
    n_in = model.layers[0].n_visible if model.depth else split.test_x.shape[1]
    if n_in != split.test_x.shape[1]:
        raise ContractError(f"model expects {n_in} inputs, data has {split.test_x.shape[1]}")
    if args.head[0] == "load":
        head = ClassifierHead.load(args.head[1])
    else:
        head = train_head(Rng(args.seed).child(ex.CHILD_HEAD), features(model, split.train_x),
                          split.train_y, HeadConfig())
        if args.save_head:
            head.save(args.save_head)
    test_features = features(model, split.test_x)
    if head.W.shape[0] != test_features.shape[1]:
        raise ContractError(f"head expects {head.W.shape[0]} features, model gives {test_features.shape[1]}")
    acc = accuracy(head, test_features, split.test_y)
    s = memory_report(model).reserved / max(memory_report(model).total_weights, 1)
    write_csv([(_variant_name(model), s, acc)], ("variant", "sigma", "accuracy"))
    return 0


# -- sweep / report --------------------------------------------------------------

def _preset_from(args):
    overrides = {}
    for flag, name in (("epochs", "epochs"), ("n_train", "n_train"), ("n_test", "n_test"),
                       ("layers", "layers"), ("lam", "lam"), ("gamma", "gamma")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "decay", None) is not None:
        overrides["per_case_decay"] = args.decay == "per-case"
    return ex.get_preset(args.preset, **overrides)


def cmd_sweep(args, parser):
    data_dir = _data_dir(args, parser)
    if args.param == "gamma" and any(not 0 <= v <= 1 for v in args.values):
        parser.error("gamma values must lie in [0, 1]")
    if args.param == "sigma" and any(not 0 < v <= 1 for v in args.values):
        parser.error("sigma values must lie in (0, 1]")
    if args.param == "lambda" and any(v < 0 for v in args.values):
        parser.error("lambda values must be >= 0")
    preset = _preset_from(args)
    split = ex.load_data(data_dir, preset, args.seed)
    rows = ex.sweep_rows(args.param, args.values, preset, split, args.seed,
                         ex.ModelCache(args.cache_dir), baselines=args.baselines)
    header = ex.sweep_header(len(preset.layers) - 1)
    write_csv(rows, header, args.out)
    if args.figures:
        from .plotting import plot_sweep
        plot_sweep(rows, header, args.param, Path(args.figures) / f"sweep_{args.param}.png")
    return 0


def cmd_report(args, parser):
    data_dir = _data_dir(args, parser)
    preset = _preset_from(args)
    split = ex.load_data(data_dir, preset, args.seed)
    rows, _ = ex.table2_rows(preset, split, args.seed, ex.ModelCache(args.cache_dir))
    write_csv(rows, ex.TABLE_HEADER, args.out)
    if args.figures:
        from .plotting import plot_table
        plot_table(rows, Path(args.figures) / f"report_{preset.name}.png")
    return 0


# -- parser ------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="sparsedan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data-dir", help="directory with the MNIST IDX files (default: $DAN_DATA_DIR)")
    data.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", parents=[data], help="train a DBN or DAN stack")
    t.add_argument("--layers", type=_int_list, default=(784, 800, 800))
    t.add_argument("--lambda", dest="lam", type=_nonneg_float, default=1e-4)
    t.add_argument("--gamma", type=float, default=0.5)
    t.add_argument("--epochs", type=_positive_int, default=50)
    t.add_argument("--batch", type=_positive_int, default=100)
    t.add_argument("--lr", type=_nonneg_float, default=0.05)
    t.add_argument("--cd-steps", type=_positive_int, default=1)
    t.add_argument("--reg", choices=[k.value for k in RegKind], default="mixed")
    t.add_argument("--decay", choices=["per-case", "per-batch"], default="per-case",
                   help="apply the weight decay once per training case or once per mini-batch")
    t.add_argument("--n-train", type=_positive_int, default=10000)
    t.add_argument("--cache-dir")
    t.add_argument("--out", required=True, help="DANM file to write")
    t.add_argument("--log", help="progress CSV (default: OUT.progress.csv)")
    t.add_argument("-v", "--verbose", action="store_true")
    t.set_defaults(func=cmd_train)

    q = sub.add_parser("quantize", help="sparsify / binarise a trained model")
    q.add_argument("--model", required=True)
    q.add_argument("--mode", choices=[m.value for m in QuantMode], required=True)
    q.add_argument("--threshold", type=_nonneg_float)
    q.add_argument("--sigma", type=float)
    q.add_argument("--out", required=True)
    q.add_argument("--report", help="memory report CSV (default: stdout)")
    q.set_defaults(func=cmd_quantize)

    e = sub.add_parser("eval", parents=[data], help="accuracy of a model with a softmax head")
    e.add_argument("--model", required=True)
    e.add_argument("--head", nargs="+", default=["retrain"], metavar="retrain|load PATH")
    e.add_argument("--save-head")
    e.add_argument("--n-train", type=_positive_int, default=10000)
    e.add_argument("--n-test", type=_positive_int, default=10000)
    e.set_defaults(func=cmd_eval)

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--preset", choices=sorted(ex.PRESETS), default="table2")
    grid.add_argument("--epochs", type=_positive_int)
    grid.add_argument("--n-train", type=_positive_int)
    grid.add_argument("--n-test", type=_positive_int)
    grid.add_argument("--layers", type=_int_list)
    grid.add_argument("--decay", choices=["per-case", "per-batch"])
    grid.add_argument("--cache-dir")
    grid.add_argument("--out", help="CSV file (default: stdout)")
    grid.add_argument("--figures", help="also render PNG figures into this directory")

    s = sub.add_parser("sweep", parents=[data, grid], help="sweep lambda, gamma or sigma")
    s.add_argument("--param", choices=ex.SWEEP_PARAMS, required=True)
    s.add_argument("--values", type=_float_list, required=True)
    s.add_argument("--lambda", dest="lam", type=_nonneg_float)
    s.add_argument("--gamma", type=float)
    s.add_argument("--baselines", action="store_true", help="include L1/L2 weight-decay DBNs")
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", parents=[data, grid], help="DBN / DAN / DAN_s / DAN_b / DAN_B table")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except RUNTIME_ERRORS as exc:
        print(f"sparsedan {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
