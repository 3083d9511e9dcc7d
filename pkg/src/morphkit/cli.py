"""Command-line entry points for every pipeline stage.

    morphkit gen-data     render a triplet dataset to disk
    morphkit train        distill the teacher into a generator
    morphkit morph        morph two images at (alpha_c, alpha_s, tau)
    morphkit grid         n x n content-style manifold montage
    morphkit multimorph   weighted morph of 2..8 images
    morphkit transfer     apply a target image's style to a source
    morphkit interp-video insert morphed frames between video frames
    morphkit eval         reconstruction / morph-quality reports
    morphkit serve        HTTP inference service

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


class UsageError(Exception):
    pass


def _existing(path: str, kind: str = "file") -> Path:
    p = Path(path)
    if kind == "file" and not p.is_file():
        raise UsageError(f"{path}: no such file")
    if kind == "dir" and not p.is_dir():
        raise UsageError(f"{path}: no such directory")
    return p


def _load_image(path: str):
    from .images import load_png

    return load_png(_existing(path))


def _save_image(image, path: str) -> None:
    from .images import save_png

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    save_png(image, path)


def _model(checkpoint: str):
    from .engine import MorphModel

    _existing(checkpoint)
    return MorphModel.from_checkpoint(checkpoint)


def _note_resampled(model, *images) -> None:
    if any(model.needs_resample(im) for im in images):
        h, w = model.config.image_size
        print(f"note: input resampled to model size {h}x{w}", file=sys.stderr)


def cmd_gen_data(args) -> int:
    from .config import build_teacher
    from .dataset import export_dataset

    teacher = build_teacher(args.teacher, image_size=args.size)
    manifest = export_dataset(teacher, args.count, args.out, args.seed, size=(args.size, args.size))
    print(f"wrote {len(manifest.records)} triplets to {args.out}")
    return 0


def cmd_train(args) -> int:
    from .config import LossWeights, TrainConfig
    from .training import train

    if args.config:
        config = TrainConfig.from_file(_existing(args.config))
    else:
        config = TrainConfig()
    overrides = {}
    for key in ("iterations", "batch_size", "seed", "out_dir", "preset", "teacher", "device"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    if args.lr_g is not None:
        overrides["lr_g"] = args.lr_g
    if args.lr_d is not None:
        overrides["lr_d"] = args.lr_d
    if args.image_size is not None:
        overrides["image_size"] = (args.image_size, args.image_size)
    if overrides:
        d = config.to_dict()
        d.update(overrides)
        config = TrainConfig.from_dict(d)
    if args.disable:
        flags = {f"use_{name}": False for name in args.disable}
        config = TrainConfig.from_dict(
            {**config.to_dict(), "weights": {**config.weights.to_dict(), **flags}}
        )
    resume = _existing(args.resume) if args.resume else None
    path = train(config, resume_from=resume)
    print(f"final checkpoint: {path}")
    return 0


def cmd_morph(args) -> int:
    from .engine import MorphParams

    model = _model(args.checkpoint)
    x_a, x_b = _load_image(args.a), _load_image(args.b)
    _note_resampled(model, x_a, x_b)
    alpha_c = args.alpha if args.alpha_c is None else args.alpha_c
    alpha_s = args.alpha if args.alpha_s is None else args.alpha_s
    out = model.morph(x_a, x_b, MorphParams(alpha_c, alpha_s, args.tau))
    _save_image(out, args.out)
    print(args.out)
    return 0


def cmd_grid(args) -> int:
    from .images import montage

    model = _model(args.checkpoint)
    x_a, x_b = _load_image(args.a), _load_image(args.b)
    _note_resampled(model, x_a, x_b)
    cells = model.manifold_grid(x_a, x_b, args.n, args.tau)
    if args.frames_dir:
        out_dir = Path(args.frames_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for i in range(args.n):
            for j in range(args.n):
                _save_image(cells[i, j], str(out_dir / f"cell_s{i}_c{j}.png"))
    _save_image(montage(cells), args.out)
    print(args.out)
    return 0


def cmd_multimorph(args) -> int:
    model = _model(args.checkpoint)
    images = [_load_image(p) for p in args.images]
    if args.w_c is None:
        args.w_c = [1.0 / len(images)] * len(images)
    if args.w_s is None:
        args.w_s = [1.0 / len(images)] * len(images)
    _note_resampled(model, *images)
    out = model.multi_morph(images, args.w_c, args.w_s)
    _save_image(out, args.out)
    print(args.out)
    return 0


def cmd_transfer(args) -> int:
    model = _model(args.checkpoint)
    src, tgt = _load_image(args.source), _load_image(args.target)
    _note_resampled(model, src, tgt)
    _save_image(model.appearance_transfer(src, tgt), args.out)
    print(args.out)
    return 0


def cmd_interp_video(args) -> int:
    model = _model(args.checkpoint)
    if len(args.frames) == 1 and Path(args.frames[0]).is_dir():
        paths = sorted(Path(args.frames[0]).glob("*.png"))
        if not paths:
            raise UsageError(f"{args.frames[0]}: contains no .png frames")
    else:
        paths = [_existing(p) for p in args.frames]
    frames = [_load_image(str(p)) for p in paths]
    out = model.interpolate_frames(frames, args.factor)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(out):
        _save_image(frame, str(out_dir / f"frame_{i:05d}.png"))
    print(f"wrote {len(out)} frames to {out_dir}")
    return 0


def cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint
    from .metrics import DiscriminatorFeatures, evaluate_morphs, evaluate_reconstruction
    from .training import sample_eval_triplets

    model = _model(args.checkpoint)
    ckpt = load_checkpoint(_existing(args.checkpoint))
    teacher_desc = ckpt.train_config.teacher if ckpt.train_config else "procedural:8"
    from .config import build_teacher

    teacher = build_teacher(teacher_desc)
    triplets = sample_eval_triplets(
        teacher, args.seed, args.pairs, model.config.image_size, alpha=0.5
    )
    pairs = [(t.x_a, t.x_b) for t in triplets]
    reports = []
    if args.protocol in ("reconstruction", "both"):
        reports.append(evaluate_reconstruction(model, pairs))
    if args.protocol in ("morph", "both"):
        extractor = DiscriminatorFeatures(args.checkpoint)
        reports.append(
            evaluate_morphs(model, pairs, [t.x_mid for t in triplets], extractor, extractor.name)
        )
    for report in reports:
        print(report.table())
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True))
        print(f"report written to {args.out}")
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    _existing(args.checkpoint)
    serve(args.checkpoint, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="morphkit", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render a triplet dataset to disk")
    p.add_argument("--count", type=int, required=True, help="number of triplets")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64, help="square image size")
    p.add_argument("--teacher", default="procedural:8")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train the morphing generator")
    p.add_argument("--config", help="JSON training-config file")
    p.add_argument("--iters", dest="iterations", type=int, default=None)
    p.add_argument("--batch", dest="batch_size", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", dest="out_dir", default=None)
    p.add_argument("--preset", choices=["paper", "desk", "micro"], default=None)
    p.add_argument("--teacher", default=None)
    p.add_argument("--image-size", type=int, default=None)
    p.add_argument("--lr-g", type=float, default=None)
    p.add_argument("--lr-d", type=float, default=None)
    p.add_argument("--device", default=None)
    p.add_argument(
        "--disable",
        nargs="*",
        choices=["identity", "morphing", "swapping", "cycle"],
        default=None,
        help="loss terms to ablate",
    )
    p.add_argument("--resume", help="checkpoint to resume from")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("morph", help="morph two images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--a", required=True, help="first image (content/style source at alpha 0)")
    p.add_argument("--b", required=True, help="second image")
    p.add_argument("--alpha", type=float, default=0.5, help="basic transition position")
    p.add_argument("--alpha-c", type=float, default=None, help="content position (overrides --alpha)")
    p.add_argument("--alpha-s", type=float, default=None, help="style position (overrides --alpha)")
    p.add_argument("--tau", type=float, default=0.0, help="truncation strength")
    p.add_argument("--out", default="morph.png")
    p.set_defaults(fn=cmd_morph)

    p = sub.add_parser("grid", help="n x n content-style manifold montage")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--tau", type=float, default=0.3)
    p.add_argument("--out", default="grid.png")
    p.add_argument("--frames-dir", help="also write individual cells here")
    p.set_defaults(fn=cmd_grid)

    p = sub.add_parser("multimorph", help="weighted morph of several images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--images", nargs="+", required=True)
    p.add_argument("--w-c", type=float, nargs="+", default=None, help="content weights (sum 1)")
    p.add_argument("--w-s", type=float, nargs="+", default=None, help="style weights (sum 1)")
    p.add_argument("--out", default="multimorph.png")
    p.set_defaults(fn=cmd_multimorph)

    p = sub.add_parser("transfer", help="apply the target's style to the source")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", default="transfer.png")
    p.set_defaults(fn=cmd_transfer)

    p = sub.add_parser("interp-video", help="insert morphed frames between video frames")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--frames", nargs="+", required=True, help="frame files or one directory")
    p.add_argument("--factor", type=int, default=2, help="output frames per input frame")
    p.add_argument("--out-dir", default="interp_frames")
    p.set_defaults(fn=cmd_interp_video)

    p = sub.add_parser("eval", help="quality reports on held-out teacher pairs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pairs", type=int, default=32)
    p.add_argument("--seed", type=int, default=12345)
    p.add_argument("--protocol", choices=["reconstruction", "morph", "both"], default="both")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None, help="default MORPH_PORT or 8700")
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130
    except Exception as err:  # runtime failure -> exit 1 with message
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
