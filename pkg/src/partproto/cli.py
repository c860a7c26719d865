"""Command-line entry point.

Subcommands:
    eval       episodic evaluation over archives or synthetic episodes
    train      SGD on the message weight matrix, emits a weight archive
    synth-gen  write synthetic episode archives
    ablate     parametric vs nonparametric vs no-refinement comparison

Exit status: 0 success, 1 validation error, 2 I/O error. Errors print
one machine-parsable line on stderr: "error: <Kind>: <message>".
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from .archive import read_weights_archive, write_episode_archive, write_weights_archive
from .episodes import HyperParams
from .errors import MalformedArchive, PartProtoError
from .evaluate import (
    ablate_synthetic,
    derived_seed,
    dump_report,
    evaluate_archives,
    evaluate_synthetic,
)
from .refine import MessageWeights
from .synthetic import SynthConfig, generate_synthetic_episode
from .training import train_message_weights

VALIDATION_EXIT = 1
IO_EXIT = 2


def _add_hyper_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline")
    g.add_argument("--n-parts", type=int, default=5, help="part prototypes per class")
    g.add_argument("--n-regions", type=int, default=100,
                   help="total region budget over the unlabeled grids")
    g.add_argument("--sigma", type=float, default=0.0,
                   help="region relevance threshold")
    g.add_argument("--lambda-p", type=float, default=0.8,
                   help="class context mixing scale")
    g.add_argument("--lambda-r", type=float, default=0.2,
                   help="region refinement mixing scale")
    g.add_argument("--temperature", type=float, default=20.0,
                   help="softmax temperature on cosine scores")
    g.add_argument("--nonparametric-gnn", action="store_true",
                   help="drop the linear map from message passing")
    g.add_argument("--kmeans-max-iter", type=int, default=50)
    g.add_argument("--kmeans-tol", type=float, default=1e-6)
    g.add_argument("--slic-compactness", type=float, default=0.1)
    g.add_argument("--slic-iters", type=int, default=10)


def _add_shape_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("episode shape")
    g.add_argument("--n-way", type=int, default=1)
    g.add_argument("--k-shot", type=int, default=1)
    g.add_argument("--n-unlabeled", type=int, default=6,
                   help="unlabeled support grids per episode")
    g.add_argument("--n-query", type=int, default=1)


def _add_synth_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("synthetic data")
    g.add_argument("--channels", type=int, default=64)
    g.add_argument("--grid-size", type=int, default=32,
                   help="feature grid height and width")
    g.add_argument("--jitter", type=float, default=0.4,
                   help="intra-class feature noise scale")
    g.add_argument("--separation", type=float, default=1.0,
                   help="distance between class mean vectors")
    g.add_argument("--blobs", type=int, default=2, help="blobs per class")
    g.add_argument("--blob-min", type=int, default=6)
    g.add_argument("--blob-max", type=int, default=14)
    g.add_argument("--mask-scale", type=int, default=1,
                   help="image resolution as a multiple of the grid")


def _hyper(args) -> HyperParams:
    return HyperParams(
        n_parts=args.n_parts,
        n_regions=args.n_regions,
        sigma=args.sigma,
        lambda_p=args.lambda_p,
        lambda_r=args.lambda_r,
        score_temperature=args.temperature,
        nonparametric_gnn=args.nonparametric_gnn,
        kmeans_max_iter=args.kmeans_max_iter,
        kmeans_tol=args.kmeans_tol,
        slic_compactness=args.slic_compactness,
        slic_iters=args.slic_iters,
    )


def _synth_cfg(args, seed: int) -> SynthConfig:
    return SynthConfig(
        channels=args.channels,
        height=args.grid_size,
        width=args.grid_size,
        blob_count=args.blobs,
        blob_min=args.blob_min,
        blob_max=args.blob_max,
        jitter=args.jitter,
        separation=args.separation,
        seed=seed,
        c_way=args.n_way,
        k_shot=args.k_shot,
        n_unlabeled=args.n_unlabeled,
        n_query=args.n_query,
        mask_scale=args.mask_scale,
    )


def _load_weights(args, channels: int) -> MessageWeights:
    if args.weights:
        matrix, nonparametric = read_weights_archive(args.weights)
        return MessageWeights(matrix, nonparametric or args.nonparametric_gnn)
    return MessageWeights.initial(channels, args.nonparametric_gnn)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="partproto",
        description="Part-aware prototype pipeline for few-shot segmentation "
        "on precomputed feature grids.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("eval", help="episodic evaluation")
    p_eval.add_argument("--episodes-dir", type=str, default=None,
                        help="directory of episode archives")
    p_eval.add_argument("--synth", action="store_true",
                        help="evaluate on generated synthetic episodes")
    p_eval.add_argument("--runs", type=int, default=5,
                        help="independent evaluation runs (reference protocol: 5)")
    p_eval.add_argument("--tasks", type=int, default=100,
                        help="tasks per run (reference protocol: 1000)")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--jobs", type=int, default=1)
    p_eval.add_argument("--weights", type=str, default=None,
                        help="weight archive; defaults to damped identity")
    p_eval.add_argument("--out", type=str, default="metrics.json")
    _add_hyper_flags(p_eval)
    _add_shape_flags(p_eval)
    _add_synth_flags(p_eval)

    p_train = sub.add_parser("train", help="train the message weights")
    p_train.add_argument("--steps", type=int, default=200)
    p_train.add_argument("--lr", type=float, default=5e-4,
                         help="SGD learning rate (reference optimizer default)")
    p_train.add_argument("--momentum", type=float, default=0.9)
    p_train.add_argument("--weight-decay", type=float, default=1e-4)
    p_train.add_argument("--tasks", type=int, default=16,
                         help="episodes in the training stream")
    p_train.add_argument("--episodes-dir", type=str, default=None)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--weights", type=str, default=None,
                         help="warm-start weight archive")
    p_train.add_argument("--out", type=str, default="weights.zip")
    _add_hyper_flags(p_train)
    _add_shape_flags(p_train)
    _add_synth_flags(p_train)

    p_gen = sub.add_parser("synth-gen", help="write synthetic episode archives")
    p_gen.add_argument("--count", type=int, default=10)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out-dir", type=str, required=True)
    _add_shape_flags(p_gen)
    _add_synth_flags(p_gen)

    p_abl = sub.add_parser("ablate", help="compare refinement variants")
    p_abl.add_argument("--runs", type=int, default=1)
    p_abl.add_argument("--tasks", type=int, default=200)
    p_abl.add_argument("--seed", type=int, default=0)
    p_abl.add_argument("--jobs", type=int, default=1)
    p_abl.add_argument("--weights", type=str, default=None)
    p_abl.add_argument("--out", type=str, default="ablation.json")
    _add_hyper_flags(p_abl)
    _add_shape_flags(p_abl)
    _add_synth_flags(p_abl)

    return parser


def _cmd_eval(args) -> int:
    hp = _hyper(args)
    if bool(args.episodes_dir) == bool(args.synth):
        raise ValueError("pass exactly one of --episodes-dir or --synth")
    if args.synth:
        cfg = _synth_cfg(args, seed=0)
        weights = _load_weights(args, cfg.channels)
        report = evaluate_synthetic(
            cfg, hp, weights, args.runs, args.tasks, args.seed, args.jobs
        )
    else:
        from .archive import read_episode_archive
        from .archive import find_episode_archives

        first = read_episode_archive(find_episode_archives(args.episodes_dir)[0])
        weights = _load_weights(args, first.channels)
        report = evaluate_archives(args.episodes_dir, hp, weights, args.seed, args.jobs)
    dump_report(report, args.out)
    print(
        f"mean_iou {report['mean_iou']:.4f} binary_iou {report['binary_iou']:.4f} "
        f"episodes {report['episodes']} -> {args.out}"
    )
    return 0


def _cmd_train(args) -> int:
    hp = _hyper(args)
    if hp.nonparametric_gnn:
        raise ValueError("cannot train with --nonparametric-gnn")
    if args.episodes_dir:
        from .archive import find_episode_archives, read_episode_archive

        episodes = [
            read_episode_archive(p) for p in find_episode_archives(args.episodes_dir)
        ]
    else:
        cfg = _synth_cfg(args, seed=0)
        episodes = [
            generate_synthetic_episode(
                SynthConfig(**{**cfg.to_dict(), "seed": derived_seed(args.seed, i)})
            )
            for i in range(args.tasks)
        ]
    weights = _load_weights(args, episodes[0].channels)
    result = train_message_weights(
        episodes,
        weights,
        hp,
        args.lr,
        args.steps,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        seed=args.seed,
    )
    write_weights_archive(result.weights.matrix, False, args.out)
    print(
        f"steps {args.steps} loss {result.losses[0]:.6f} -> {result.losses[-1]:.6f} "
        f"weights -> {args.out}"
    )
    return 0


def _cmd_synth_gen(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        cfg = _synth_cfg(args, seed=derived_seed(args.seed, i))
        episode = generate_synthetic_episode(cfg)
        write_episode_archive(episode, out_dir / f"episode_{i:04d}.zip")
    print(f"wrote {args.count} episode archives to {out_dir}")
    return 0


def _cmd_ablate(args) -> int:
    hp = _hyper(args)
    cfg = _synth_cfg(args, seed=0)
    weights = _load_weights(args, cfg.channels)
    report = ablate_synthetic(
        cfg, hp, weights, args.runs, args.tasks, args.seed, args.jobs
    )
    dump_report(report, args.out)
    v = report["variants"]
    print(
        "mean_iou parametric {:.4f} nonparametric {:.4f} no_refine {:.4f} "
        "w_invariant {} -> {}".format(
            v["parametric"]["mean_iou"],
            v["nonparametric"]["mean_iou"],
            v["no_refine"]["mean_iou"],
            report["nonparametric_w_invariant"],
            args.out,
        )
    )
    return 0


_COMMANDS = {
    "eval": _cmd_eval,
    "train": _cmd_train,
    "synth-gen": _cmd_synth_gen,
    "ablate": _cmd_ablate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (MalformedArchive, OSError) as e:
        sys.stderr.write(f"error: {type(e).__name__}: {e}\n")
        return IO_EXIT
    except (PartProtoError, ValueError) as e:
        sys.stderr.write(f"error: {type(e).__name__}: {e}\n")
        return VALIDATION_EXIT


if __name__ == "__main__":
    sys.exit(main())
