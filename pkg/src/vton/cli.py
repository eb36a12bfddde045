"""Command-line entry point.

Subcommands: synth, train, warp, tryon, eval, gradcheck. Exit codes:
0 success, 1 runtime/assertion failure, 2 usage error.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import data, gradcheck, metrics, nn, pipeline


def _parse_size(s: str):
    try:
        h, w = s.lower().split("x")
        return int(h), int(w)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"size must be HxW, got {s!r}") from e


def _load_model(ckpt_path, image_size):
    params = nn.load_checkpoint(ckpt_path)
    return pipeline.model_from_checkpoint(params, image_size)


def cmd_synth(args):
    data.make_dataset(args.out, args.count, args.seed, image_size=args.size)
    print(f"wrote {args.count} samples to {args.out}")
    return 0


def cmd_train(args):
    if args.config:
        cfg = cfgmod.parse_config(Path(args.config).read_text())
    else:
        cfg = pipeline.TrainConfig()
    dataset = data.load_dataset(args.data)
    got = dataset[0].clothing.shape[1:]
    if got != tuple(cfg.image_size):
        raise ValueError(f"dataset images are {got[0]}x{got[1]} but config says "
                         f"{cfg.image_size[0]}x{cfg.image_size[1]}")
    init = nn.load_checkpoint(args.init) if args.init else None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    def progress(row):
        if row["step"] % 50 == 0 or row["step"] == 1:
            print(f"step {row['step']}: loss {row['total']:.6f}")

    params, history = pipeline.train(dataset, cfg, mode=args.mode, params=init,
                                     checkpoint_dir=out.parent, progress=progress)
    nn.save_checkpoint(out, params)
    hist_path = out.with_suffix(out.suffix + ".history.csv")
    hist_path.write_text(pipeline.history_csv(history))
    print(f"saved checkpoint to {out}, history to {hist_path}")
    return 0


def cmd_warp(args):
    sample = data.load_sample(args.sample)
    model = _load_model(args.ckpt, sample.clothing.shape[1:])
    pn = nn.bind(model.params, trainable=False)
    s1 = pipeline.stage1_forward(model, pn, sample)
    out = Path(args.out)
    data.save_image(out, np.clip(s1["warped_c"].value, 0.0, 1.0))
    mask_path = out.with_name(out.stem + "_mask" + out.suffix)
    data.save_image(mask_path, np.clip(s1["warped_cm"].value, 0.0, 1.0))
    print(f"wrote {out} and {mask_path}")
    return 0


def cmd_tryon(args):
    sample = data.load_sample(args.sample)
    model = _load_model(args.ckpt, sample.clothing.shape[1:])
    result = pipeline.infer(model, sample)
    out = Path(args.out)
    data.save_image(out, np.clip(result["i_o"], 0.0, 1.0))
    mask_path = out.with_name(out.stem + "_mask" + out.suffix)
    render_path = out.with_name(out.stem + "_render" + out.suffix)
    data.save_image(mask_path, np.clip(result["m_o"], 0.0, 1.0))
    data.save_image(render_path, np.clip(result["i_r"], 0.0, 1.0))
    print(f"wrote {out}, {mask_path}, {render_path}")
    return 0


def cmd_eval(args):
    dataset_dir = Path(args.data)
    dirs = sorted(p for p in dataset_dir.iterdir() if p.is_dir())
    if not dirs:
        raise ValueError(f"no sample directories under {dataset_dir}")
    first = data.load_sample(dirs[0])
    model = _load_model(args.ckpt, first.clothing.shape[1:])
    lines = ["id,iou,ssim"]
    ious, ssims = [], []
    for d in dirs:
        sample = data.load_sample(d)
        result = pipeline.infer(model, sample)
        iou_v = metrics.iou(result["warped_cm"], sample.gt_onbody_mask)
        ssim_v = metrics.ssim(np.clip(result["i_o"], 0.0, 1.0), sample.gt_image)
        ious.append(iou_v)
        ssims.append(ssim_v)
        lines.append(f"{d.name},{iou_v:.6f},{ssim_v:.6f}")
    lines.append(f"mean,{np.mean(ious):.6f},{np.mean(ssims):.6f}")
    Path(args.out).write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def cmd_gradcheck(args):
    rows = gradcheck.run(args.module)
    failed = False
    print(f"{'module':<10} {'check':<26} {'max_rel_err':>12} {'tol':>8}  status")
    for mod, name, err, tol in rows:
        ok = err < tol
        failed |= not ok
        print(f"{mod:<10} {name:<26} {err:>12.3e} {tol:>8.0e}  {'pass' if ok else 'FAIL'}")
    return 1 if failed else 0


def build_parser():
    parser = argparse.ArgumentParser(prog="vton",
                                     description="Two-stage virtual try-on toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=_parse_size, default=(256, 192))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train stage1, stage2, or jointly")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("stage1", "stage2", "joint"), default="stage1")
    p.add_argument("--config")
    p.add_argument("--init", help="checkpoint to start from")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("warp", help="emit warped clothing and mask for one sample")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--sample", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("tryon", help="emit try-on output, mask, and rendered person")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--sample", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tryon)

    p = sub.add_parser("eval", help="IoU/SSIM over a dataset, CSV output")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="run finite-difference gradient suites")
    p.add_argument("--module", choices=sorted(gradcheck.SUITES), default=None)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, ArithmeticError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
