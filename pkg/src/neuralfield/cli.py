"""Command line entry point: ``neuralfield {train,eval,render,budget}``.

Exit codes: 0 success, 2 configuration or input-file error, 3 runtime or
numeric error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from contextlib import contextmanager
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import io as nfio
from .config import RunConfig, TaskSection, load_config
from .encoding import param_count
from .errors import ConfigError, FormatError, NeuralFieldError
from .fields import ImageField, ImageTask, SdfTask, iou, make_demo_scene, make_test_image
from .metrics import psnr, ssim
from .model import build_model
from .numerics import Rng
from .optim import train, new_train_state
from .render import Camera, TraceConfig, default_matcap, render

log = logging.getLogger("neuralfield")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

EVAL_BATCH = 65536
SDF_ERROR_SAMPLES = 1 << 16
# evaluation draws from its own stream so it never perturbs training samples
EVAL_STREAM = 7


@contextmanager
def thread_mode(threads: int):
    """``0`` pins BLAS to one thread for bit-reproducible runs."""
    with threadpool_limits(limits=1 if threads == 0 else threads):
        yield


def build_task(task: TaskSection):
    if task.kind == "image":
        image = nfio.read_image(task.image) if task.image else make_test_image(task.image_size)
        return ImageTask(image)
    if task.sdf_grid:
        return SdfTask(nfio.read_sdf_grid(task.sdf_grid))
    return SdfTask(make_demo_scene(task.scene))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _loss_rows(history):
    return [(i, repr(loss), "" if ms is None else f"{ms:.3f}") for i, loss, ms in history]


def _checkpoint_meta(cfg: RunConfig) -> dict:
    return {"task": asdict(cfg.task), "training": asdict(cfg.training)}


def run_train(cfg: RunConfig, out_dir: Path, resume: Path | None = None):
    """Train per ``cfg`` and write checkpoint, loss CSV, resolved config and figure."""
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.resolved.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    task = build_task(cfg.task)
    if resume is not None:
        state, meta = nfio.load_checkpoint(resume)
        if meta.get("task", {}).get("kind") != cfg.task.kind or state.model.config != cfg.encoding:
            raise ConfigError(f"checkpoint {resume} does not match the configured task/encoding")
    else:
        model = build_model(cfg.encoding, cfg.training.seed, cfg.network.hidden, cfg.output_dim,
                            cfg.output_activation, cfg.network.leaky_slope)
        state = new_train_state(model, cfg.training)
    meta = _checkpoint_meta(cfg)

    def on_checkpoint(st):
        nfio.save_checkpoint(out_dir / f"checkpoint_{st.iteration:06d}.nflb", st, meta)

    state = train(task, state, cfg.training, on_checkpoint, timing=cfg.output.timing)
    nfio.save_checkpoint(out_dir / "checkpoint.nflb", state, meta)
    _write_csv(out_dir / "loss.csv", ["iteration", "loss", "wall_ms"], _loss_rows(state.history))
    if cfg.output.figures:
        from . import plotting
        plotting.loss_curve(state.history, out_dir / "loss.png",
                            f"{cfg.encoding.kind} on {cfg.task.kind}, seed {cfg.training.seed}")
    log.info("trained %d iterations, final loss %.6g", len(state.history), state.history[-1][1])
    return state


def evaluate(state, task, iou_samples: int = 1 << 20, seed: int = 0) -> dict:
    """PSNR/SSIM of the full reconstruction, or IoU and mean |error| for SDFs."""
    model = state.model
    if isinstance(task, ImageTask):
        if model.mlp.dims[-1] != 3 or model.config.input_dim != 2:
            raise ConfigError("checkpoint is not an image model")
        ref = task.image
        pred = model.predict(ref.coordinates(), EVAL_BATCH).reshape(ref.height, ref.width, 3)
        recon = ImageField(np.clip(pred, 0, 1))
        return {"psnr_db": psnr(ref, recon), "ssim": ssim(ref, recon), "reconstruction": recon}
    if model.mlp.dims[-1] != 1 or model.config.input_dim != 3:
        raise ConfigError("checkpoint is not an SDF model")
    rng = Rng(seed, EVAL_STREAM)
    pts = rng.uniform_array(0.0, 1.0, (SDF_ERROR_SAMPLES, 3))
    err = np.abs(model.sdf(pts) - task.scene(pts))
    return {
        "iou": iou(task.scene, model.sdf, iou_samples, Rng(seed, EVAL_STREAM + 1)),
        "mean_abs_sdf_error": float(np.mean(err)),
    }


def run_eval(ckpt: Path, out_dir: Path, cfg: RunConfig | None = None) -> dict:
    state, meta = nfio.load_checkpoint(ckpt)
    task_section = TaskSection(**meta["task"])
    iou_samples = 1 << 20
    figures = True
    if cfg is not None:
        if cfg.task.kind != task_section.kind:
            raise ConfigError(f"checkpoint was trained on a {task_section.kind} task, "
                              f"config asks for {cfg.task.kind}")
        task_section = cfg.task
        iou_samples = cfg.output.iou_samples
        figures = cfg.output.figures
    task = build_task(task_section)
    report = evaluate(state, task, iou_samples)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = {k: v for k, v in report.items() if k != "reconstruction"}
    _write_csv(out_dir / "metrics.csv", ["metric", "value"], [(k, repr(v)) for k, v in metrics.items()])
    lines = [f"{k:>20s}  {v:.6f}" for k, v in metrics.items()]
    (out_dir / "metrics.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    if figures:
        from . import plotting
        if "reconstruction" in report:
            plotting.image_comparison(task.image, report["reconstruction"], out_dir / "comparison.png",
                                      report["psnr_db"], report["ssim"])
        else:
            plotting.sdf_slices(task.scene, state.model.sdf, out_dir / "sdf_slice.png")
    if "reconstruction" in report:
        nfio.write_image(out_dir / "reconstruction.ppm", report["reconstruction"])
    return report


def run_render(args) -> Path:
    if args.checkpoint:
        state, meta = nfio.load_checkpoint(args.checkpoint)
        if meta.get("task", {}).get("kind") != "sdf" or state.model.mlp.dims[-1] != 1:
            raise ConfigError("render needs an SDF checkpoint, got an image model")
        sdf = state.model.sdf
    elif args.sdf_grid:
        sdf = nfio.read_sdf_grid(args.sdf_grid)
    else:
        sdf = make_demo_scene(args.scene or "csg-demo")
    matcap = None
    if args.matcap:
        if Path(args.matcap).exists():
            matcap = nfio.read_image(args.matcap)
        else:
            log.warning("matcap %s not found, using the procedural default", args.matcap)
    if matcap is None:
        matcap = default_matcap()
    camera = Camera(position=args.eye, look_at=args.look_at, up=args.up, fov_degrees=args.fov,
                    width=args.width, height=args.height)
    img = render(sdf, camera, matcap, TraceConfig())
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    nfio.write_image(out, img)
    return out


def budget_rows(cfg: RunConfig):
    enc = param_count(cfg.encoding)
    dims = [cfg.encoding.output_dim(), *cfg.network.hidden, cfg.output_dim]
    mlp = sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
    return enc, mlp


def run_budget(cfg: RunConfig, out_dir: Path | None = None) -> dict:
    enc, mlp = budget_rows(cfg)
    rows = [("encoding", enc), ("mlp", mlp), ("total", enc + mlp)]
    print(f"{'component':<12s}{'parameters':>14s}")
    for name, count in rows:
        print(f"{name:<12s}{count:>14,d}")
    print("note: grid values are counted on the (N+1)^d vertex lattice; "
          "cell-based counts (N^d) come out smaller.")
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_csv(out_dir / "budget.csv", ["component", "parameters"], rows)
        if cfg.output.figures:
            from . import plotting
            plotting.budget_bars([(cfg.encoding.kind, enc, mlp)], out_dir / "budget.png")
    return dict(rows)


def _vec3(text: str):
    try:
        parts = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    return parts


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neuralfield", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override training.seed")
    common.add_argument("--out", type=Path, help="output directory (overrides output.directory)")
    common.add_argument("--threads", type=int, default=0,
                        help="BLAS threads; 0 = deterministic single-threaded (default)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--resume", type=Path, help="continue from a checkpoint")

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)

    p = sub.add_parser("render", parents=[common], help="sphere-trace an SDF to an image")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--checkpoint", type=Path)
    src.add_argument("--scene", choices=["sphere", "csg-demo"])
    src.add_argument("--sdf-grid", type=Path)
    p.add_argument("--matcap", type=Path)
    p.add_argument("--output", type=Path, default=Path("render.ppm"))
    defaults = Camera()
    p.add_argument("--width", type=int, default=defaults.width)
    p.add_argument("--height", type=int, default=defaults.height)
    p.add_argument("--fov", type=float, default=defaults.fov_degrees)
    p.add_argument("--eye", type=_vec3, default=defaults.position)
    p.add_argument("--look-at", type=_vec3, default=defaults.look_at)
    p.add_argument("--up", type=_vec3, default=defaults.up)

    sub.add_parser("budget", parents=[common], help="count trainable parameters")
    return parser


def _resolved(args) -> RunConfig:
    if args.config is None:
        raise ConfigError("--config is required for this command")
    cfg = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 1 << 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg.training = replace(cfg.training, seed=args.seed)
    if args.out is not None:
        cfg.output.directory = str(args.out)
    return cfg


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.threads < 0:
            raise ConfigError("--threads must be >= 0")
        with thread_mode(args.threads):
            if args.command == "train":
                cfg = _resolved(args)
                run_train(cfg, Path(cfg.output.directory), args.resume)
            elif args.command == "eval":
                cfg = _resolved(args) if args.config else None
                out = args.out or (Path(cfg.output.directory) if cfg else args.checkpoint.parent)
                run_eval(args.checkpoint, Path(out), cfg)
            elif args.command == "render":
                run_render(args)
            elif args.command == "budget":
                cfg = _resolved(args)
                run_budget(cfg, args.out)
    except (ConfigError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NeuralFieldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
