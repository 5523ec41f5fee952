"""Command-line entry point: data generation, training, tracking,
evaluation, curve plotting and kernel benchmarks.

The data root may be given per command or through the MEMTRACK3D_DATA_ROOT
environment variable.  ``--seed`` overrides the config seed and fixes all
randomness.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import benchmark, kernels
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, dump_config, load_config, parse_config
from .data.samples import make_training_samples  # noqa: F401  (re-export convenience)
from .data.synthetic import (
    SynthConfig,
    generate_sequence,
    load_dataset,
    load_sequence_dir,
    save_dataset,
)
from .metrics import (
    aggregate,
    format_table,
    ope_run,
    precision_curve,
    success_curve,
)
from .model import TrackNet
from .tracker import OracleTracker, Tracker, save_trajectory
from .train import train_on_sequences, write_loss_log


class CliError(Exception):
    pass


def _resolve_data(path: str | None) -> Path:
    root = path or os.environ.get("MEMTRACK3D_DATA_ROOT", "")
    if not root:
        raise CliError("no data directory given (flag or MEMTRACK3D_DATA_ROOT)")
    root = Path(root)
    if not root.exists():
        raise CliError(f"data directory does not exist: {root}")
    return root


def _load_run_config(args) -> RunConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise CliError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        overrides[key.strip()] = val.strip()
    return load_config(args.config, overrides)


def _build_net(checkpoint_path) -> tuple[TrackNet, RunConfig]:
    params, cfg_text = load_checkpoint(checkpoint_path)
    cfg = parse_config(cfg_text)
    net = TrackNet(cfg, np.random.default_rng(cfg.seed))
    net.store.load_state_dict(params)
    return net, cfg


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_generate_data(args) -> int:
    out = Path(args.out)
    templates = (
        ["car", "pedestrian"] if args.template == "mixed" else [args.template]
    )
    if args.occlusion_period > 0:
        schedule = [0.0] * args.occlusion_period
        schedule[-1] = args.occlusion
    else:
        schedule = [args.occlusion]
    sequences = []
    for i in range(args.num_sequences):
        cfg = SynthConfig(
            template=templates[i % len(templates)],
            points_per_frame=args.points,
            occlusion=tuple(schedule),
            distractors=args.distractors,
            noise_std=args.noise_std,
            max_step=args.max_step,
            seed=args.seed + i,
        )
        sequences.append(generate_sequence(cfg, args.length))
    save_dataset(sequences, out)
    print(f"wrote {len(sequences)} sequences to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    root = _resolve_data(args.data or cfg.data_root)
    sequences = load_dataset(root)

    def progress(record):
        print(
            f"epoch {record['epoch']:>4d}  total {record.get('total', 0):.4f}",
            flush=True,
        )

    result = train_on_sequences(cfg, sequences, progress=progress if args.verbose else None)
    save_checkpoint(args.out, result.net.store.state_dict(), dump_config(cfg))
    if args.loss_log:
        write_loss_log(args.loss_log, result.history)
    print(f"checkpoint written to {args.out}")
    return 0


def cmd_track(args) -> int:
    net, cfg = _build_net(args.checkpoint)
    seq = load_sequence_dir(Path(args.sequence))
    tracker = Tracker(net, memory_size=args.memory_size, seed=args.seed)
    tracker.init(seq.frames[0], seq.gt_boxes[0])
    boxes = [seq.gt_boxes[0]]
    statuses = [tracker.state.status]
    for frame in seq.frames[1:]:
        box, _, status = tracker.step(frame)
        boxes.append(box)
        statuses.append(status)
    save_trajectory(args.out, boxes, statuses)
    print(f"trajectory written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    root = _resolve_data(args.data)
    sequences = load_dataset(root)
    if args.oracle:
        cfg = RunConfig()
        factories = {seq.id: (lambda s=seq: OracleTracker(s.gt_boxes)) for seq in sequences}
    else:
        if not args.checkpoint:
            raise CliError("eval needs --checkpoint (or --oracle)")
        net, cfg = _build_net(args.checkpoint)
        factories = {
            seq.id: (
                lambda: Tracker(net, memory_size=args.memory_size, seed=args.seed)
            )
            for seq in sequences
        }
    results = []
    all_ious, all_dists = [], []
    for seq in sequences:
        res = ope_run(
            factories[seq.id],
            seq,
            include_first=cfg.include_first_frame,
            step=cfg.auc_step,
            beyond_range=cfg.precision_beyond_range,
        )
        results.append((seq.category, res))
        all_ious.append(res.ious)
        all_dists.append(res.distances)
    table = aggregate(results)
    text = format_table(table)
    print(text)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "results.txt").write_text(text + "\n")
    rows = ["category\tsuccess\tprecision\tframes"]
    for row in [*table.rows, table.mean]:
        rows.append(f"{row.category}\t{row.success:.6f}\t{row.precision:.6f}\t{row.frames}")
    (out_dir / "results.tsv").write_text("\n".join(rows) + "\n")
    ious = np.concatenate(all_ious)
    dists = np.concatenate(all_dists)
    for name, (thr, ratio) in (
        ("success_curve.tsv", success_curve(ious)),
        ("precision_curve.tsv", precision_curve(dists)),
    ):
        lines = ["threshold\tratio"] + [
            f"{t:.6f}\t{r:.6f}" for t, r in zip(thr, ratio)
        ]
        (out_dir / name).write_text("\n".join(lines) + "\n")
    print(f"results and curves written to {out_dir}")
    return 0


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    curve_dir = Path(args.curves)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    specs = [
        ("success_curve.tsv", "IoU threshold", "fraction of frames", "success.png"),
        ("precision_curve.tsv", "center distance threshold (m)", "fraction of frames", "precision.png"),
    ]
    written = []
    for fname, xlabel, ylabel, outname in specs:
        path = curve_dir / fname
        if not path.exists():
            raise CliError(f"curve file not found: {path}")
        rows = np.loadtxt(path, skiprows=1)
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.plot(rows[:, 0], rows[:, 1])
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_ylim(0, 1.05)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(out_dir / outname, dpi=120)
        plt.close(fig)
        written.append(outname)
    print(f"wrote {', '.join(written)} to {out_dir}")
    return 0


def cmd_bench(args) -> int:
    rows = benchmark.run_benchmarks(scale=args.scale, repeats=args.repeats)
    print(f"active backend: {kernels.BACKEND}")
    print(benchmark.format_rows(rows))
    return 0


def cmd_show_config(args) -> int:
    cfg = _load_run_config(args)
    sys.stdout.write(dump_config(cfg))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memtrack3d",
        description="memory-based 3D single-object tracking on point clouds",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="write a synthetic dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--num-sequences", type=int, default=16)
    p.add_argument("--length", type=int, default=12)
    p.add_argument("--template", choices=["car", "pedestrian", "mixed"], default="mixed")
    p.add_argument("--points", type=int, default=192)
    p.add_argument("--distractors", type=int, default=2)
    p.add_argument("--noise-std", type=float, default=0.01)
    p.add_argument("--max-step", type=float, default=0.12)
    p.add_argument("--occlusion", type=float, default=0.0)
    p.add_argument("--occlusion-period", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("train", help="train a tracker on a dataset directory")
    p.add_argument("--data")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--loss-log")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("track", help="run the tracker over one sequence directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sequence", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--memory-size", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="one-pass evaluation over a dataset directory")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--memory-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--oracle", action="store_true", help="echo ground truth (harness check)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render curve files to images")
    p.add_argument("--curves", required=True, help="directory holding *_curve.tsv")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("bench", help="time numba kernels against numpy fallbacks")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--repeats", type=int, default=5)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("show-config", help="print the resolved configuration")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_show_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
