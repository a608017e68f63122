"""Command-line front end tying the pipeline together.

Exit codes: 0 success, 1 usage or configuration error, 2 data error
(missing or malformed inputs), 3 invariant failure.  Diagnostics go to
stderr; results and output paths are printed to stdout.
"""

import argparse
import csv
import os
import sys

import numpy as np

from . import autodiff as ad
from . import config as config_mod
from . import dataio
from . import lemma as lemma_mod
from . import metrics
from . import model as model_mod
from . import morphology
from . import trainer


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags by default; the contract reserves 2
    # for data errors, so remap usage problems to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _load_run_config(path):
    if path is None:
        return config_mod.RunConfig(train=trainer.TrainConfig(),
                                    data=dataio.SyntheticSpec())
    return config_mod.parse_config_file(path)


def _load_dataset(root):
    try:
        return dataio.load_dataset(root)
    except (OSError, ValueError) as e:
        raise DataError(f"cannot load dataset at {root}: {e}") from None


def _load_map(path):
    try:
        arr = dataio.load_pnm(path)
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from None
    if arr.ndim != 2:
        raise DataError(f"{path}: expected a single-channel map")
    return arr


def _load_gt(path):
    try:
        return dataio.load_mask(path)
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from None


# -- subcommands --------------------------------------------------------------

def cmd_gen_data(args):
    run = _load_run_config(args.spec)
    spec = run.data
    if args.count is not None:
        spec.count = args.count
    if args.size is not None:
        spec.size = args.size
    if args.seed is not None:
        spec.seed = args.seed
    if args.hole_fraction is not None:
        spec.hole_fraction = args.hole_fraction
    try:
        spec.validate()
    except ValueError as e:
        raise config_mod.ConfigError(str(e)) from None
    samples = dataio.generate_synthetic(spec)
    dataio.save_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def _split_train_val(samples):
    # deterministic held-out tail when no separate validation set is given
    n_val = max(1, len(samples) // 5)
    if n_val >= len(samples):
        raise DataError("dataset too small to hold out a validation split")
    return samples[:-n_val], samples[-n_val:]


def cmd_train(args):
    run = _load_run_config(args.config)
    cfg = run.train
    for flag, attr in (("epochs", "epochs"), ("batch_size", "batch_size"),
                       ("lr", "lr"), ("seed", "seed"),
                       ("eval_every", "eval_every")):
        v = getattr(args, flag)
        if v is not None:
            setattr(cfg, attr, v)
    try:
        cfg.validate()
    except ValueError as e:
        raise config_mod.ConfigError(str(e)) from None
    data_dir = args.data or run.data_dir
    if not data_dir:
        raise config_mod.ConfigError("no training data directory "
                                     "(give --data or [paths] data_dir)")
    samples = _load_dataset(data_dir)
    val_dir = args.val or run.val_dir
    if val_dir:
        train_samples, val_samples = samples, _load_dataset(val_dir)
    else:
        train_samples, val_samples = _split_train_val(samples)
    out_dir = args.out or run.out_dir
    if not out_dir:
        raise config_mod.ConfigError("no output directory "
                                     "(give --out or [paths] out_dir)")
    result = trainer.train(cfg, train_samples, val_samples, out_dir,
                           probe_index=args.probe, resume=args.resume)
    last = result.history[-1]
    print(f"finished epoch {last['epoch']}: overall={last['overall']:.6f} "
          f"val_maxF={last['val_maxF']:.6f} val_MAE={last['val_MAE']:.6f}")
    print(f"checkpoint: {result.ckpt_path}")
    return 0


def cmd_infer(args):
    try:
        ck = trainer.load_checkpoint(args.ckpt)
    except (OSError, ValueError) as e:
        raise DataError(f"cannot load checkpoint {args.ckpt}: {e}") from None
    run = config_mod.parse_config(ck["config_text"])
    cfg = run.train
    params = {n: ad.Tensor(a) for n, a in ck["params"].items()}
    expected = model_mod.param_shapes(cfg.model)
    got = {n: p.data.shape for n, p in params.items()}
    if got != expected:
        raise DataError("checkpoint parameters do not match its embedded config")
    samples = _load_dataset(args.data)
    os.makedirs(args.out, exist_ok=True)
    size = cfg.model.input_size
    bs = cfg.batch_size
    for lo in range(0, len(samples), bs):
        chunk = samples[lo : lo + bs]
        prepped = [trainer._prepared(s, size) for s in chunk]
        imgs, _ = trainer._to_batch(prepped)
        out = trainer.predict(params, cfg, imgs)
        for i, s in enumerate(chunk):
            h, w = s.image.shape[:2]
            pred = dataio.resize_map(out[i, 0], h, w)
            dataio.save_pnm(pred, os.path.join(args.out, f"{s.id}.pgm"))
    print(f"wrote {len(samples)} maps to {args.out}")
    return 0


def cmd_eval(args):
    names = sorted(f for f in os.listdir(args.pred) if f.endswith(".pgm"))
    if not names:
        raise DataError(f"no .pgm maps in {args.pred}")
    preds, gts = [], []
    for name in names:
        gt_path = os.path.join(args.gt, name)
        if not os.path.exists(gt_path):
            raise DataError(f"no matching mask {gt_path}")
        pred = _load_map(os.path.join(args.pred, name))
        gt = _load_gt(gt_path)
        if pred.shape != gt.shape:
            raise DataError(f"{name}: map {pred.shape} vs mask {gt.shape}")
        preds.append(pred)
        gts.append(gt)
    report = metrics.evaluate_dataset(preds, gts, aggregation=args.aggregation)
    os.makedirs(args.out, exist_ok=True)
    metrics.write_metrics_csv(report, os.path.join(args.out, "metrics.csv"),
                              os.path.basename(os.path.normpath(args.pred)))
    metrics.write_pr_csv(report, os.path.join(args.out, "pr_curve.csv"))
    print(f"maxF={report.max_f:.6f} MAE={report.mae:.6f} "
          f"({len(preds)} images, {report.empty_gt_count} empty masks)")
    return 0


def cmd_psg_target(args):
    if args.kernel < 1 or args.kernel % 2 == 0:
        raise config_mod.ConfigError(f"kernel must be odd and >= 1; got {args.kernel}")
    pred = _load_map(args.pred)
    gt = _load_gt(args.gt)
    try:
        target = morphology.psg_target(pred, gt, args.kernel)
    except ValueError as e:
        raise DataError(str(e)) from None
    dataio.save_pnm(target, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_closing(args):
    if args.kernel < 1 or args.kernel % 2 == 0:
        raise config_mod.ConfigError(f"kernel must be odd and >= 1; got {args.kernel}")
    if not (0.0 <= args.threshold <= 1.0):
        raise config_mod.ConfigError(f"threshold must lie in [0, 1]; got {args.threshold}")
    pred = _load_map(args.pred)
    closed = morphology.postprocess_close(pred, args.kernel, args.threshold)
    dataio.save_pnm(closed.astype(np.float64), args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_lemma(args):
    if args.samples < 1:
        raise config_mod.ConfigError(f"samples must be >= 1; got {args.samples}")
    rep = lemma_mod.verify_lemma(args.samples, args.seed)
    print(f"checked={rep.checked} violations={rep.violations} "
          f"min_margin={rep.min_margin:.6e}")
    if rep.violations:
        sys.stderr.write("distance-contraction claim violated\n")
        return 3
    return 0


def _read_pr_csv(path):
    try:
        with open(path, "r", encoding="ascii", newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from None
    if not rows or rows[0] != ["threshold", "precision", "recall"]:
        raise DataError(f"{path}: not a pr_curve.csv file")
    try:
        return [(float(r[1]), float(r[2])) for r in rows[1:]]
    except (IndexError, ValueError):
        raise DataError(f"{path}: malformed row") from None


def _svg_plot(points):
    # recall on x, precision on y, both axes fixed to [0, 1]
    width, height, ml, mr, mt, mb = 480, 400, 56, 16, 16, 44
    px = lambda r: ml + r * (width - ml - mr)
    py = lambda p: height - mb - p * (height - mt - mb)
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        x, y = px(frac), py(frac)
        lines.append(f'<line x1="{x:.1f}" y1="{py(0):.1f}" x2="{x:.1f}" '
                     f'y2="{py(1):.1f}" stroke="#dddddd" stroke-width="1"/>')
        lines.append(f'<line x1="{px(0):.1f}" y1="{y:.1f}" x2="{px(1):.1f}" '
                     f'y2="{y:.1f}" stroke="#dddddd" stroke-width="1"/>')
        lines.append(f'<text x="{x:.1f}" y="{height - mb + 16}" font-size="11" '
                     f'text-anchor="middle">{frac:g}</text>')
        lines.append(f'<text x="{ml - 8}" y="{y + 4:.1f}" font-size="11" '
                     f'text-anchor="end">{frac:g}</text>')
    lines.append(f'<rect x="{px(0):.1f}" y="{py(1):.1f}" '
                 f'width="{px(1) - px(0):.1f}" height="{py(0) - py(1):.1f}" '
                 f'fill="none" stroke="black" stroke-width="1"/>')
    pts = " ".join(f"{px(r):.2f},{py(p):.2f}" for p, r in points)
    lines.append(f'<polyline points="{pts}" fill="none" stroke="#c0392b" '
                 f'stroke-width="1.5"/>')
    lines.append(f'<text x="{(px(0) + px(1)) / 2:.1f}" y="{height - 6}" '
                 f'font-size="12" text-anchor="middle">recall</text>')
    lines.append(f'<text x="14" y="{(py(0) + py(1)) / 2:.1f}" font-size="12" '
                 f'text-anchor="middle" transform="rotate(-90 14 '
                 f'{(py(0) + py(1)) / 2:.1f})">precision</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def cmd_plot(args):
    points = _read_pr_csv(args.curve)
    with open(args.out, "w", encoding="ascii", newline="\n") as f:
        f.write(_svg_plot(points))
    print(f"wrote {args.out}")
    return 0


# -- wiring -------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="sodkit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic dataset")
    g.add_argument("--spec", help="config file; [data] section applies")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int)
    g.add_argument("--size", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--hole-fraction", type=float, dest="hole_fraction")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config", help="config file")
    t.add_argument("--data", help="training dataset directory")
    t.add_argument("--val", help="validation dataset directory; without it "
                                 "the last fifth of --data is held out")
    t.add_argument("--out", help="output directory for checkpoint and log")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int, dest="batch_size")
    t.add_argument("--lr", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--eval-every", type=int, dest="eval_every")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--probe", type=int, help="training-set index to dump "
                                             "per-epoch map pairs for")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="write predicted maps for a dataset")
    i.add_argument("--ckpt", required=True)
    i.add_argument("--data", required=True)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="score predicted maps against masks")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--aggregation", default="average_then_f",
                   choices=("average_then_f", "f_then_average"))
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("psg-target", help="dump the self-guided target for "
                                          "a map/mask pair")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--kernel", type=int, default=3)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_psg_target)

    c = sub.add_parser("closing", help="threshold a map and apply a closing")
    c.add_argument("--pred", required=True)
    c.add_argument("--kernel", type=int, default=3)
    c.add_argument("--threshold", type=float, default=0.5)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_closing)

    l = sub.add_parser("lemma", help="verify the distance-contraction claim "
                                     "on random configurations")
    l.add_argument("--samples", type=int, default=10000)
    l.add_argument("--seed", type=int, default=0)
    l.set_defaults(func=cmd_lemma)

    pl = sub.add_parser("plot", help="render pr_curve.csv as an SVG chart")
    pl.add_argument("--curve", required=True)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)
    return p


def entry(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except config_mod.ConfigError as e:
        sys.stderr.write(f"config error: {e}\n")
        return 1
    except dataio.PnmError as e:
        sys.stderr.write(f"data error: {e}\n")
        return 2
    except DataError as e:
        sys.stderr.write(f"data error: {e}\n")
        return 2
    except OSError as e:
        sys.stderr.write(f"i/o error: {e}\n")
        return 2


if __name__ == "__main__":
    sys.exit(entry())
