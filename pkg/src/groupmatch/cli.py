"""Command-line interface.

Subcommands: ``synth`` (generate synthetic data), ``features`` (descriptor
extraction from images), ``match`` (rank a gallery camera against one probe
image), ``eval`` (CMC evaluation over random splits) and ``oracle-check``
(brute-force verification of the transport and matching solvers).

Exit codes: 0 success, 1 validation error, 2 runtime error.
A ``--config`` file supplies module tunables; flags override file values.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import EngineConfig, load_engine_config
from .dataset import Dataset, load_dataset
from .descriptors import compute_bundle
from .errors import EngineError, RuntimeFailure, ValidationError
from .evaluate import PairMatcher, emit_report, run_evaluation, score_matrix
from .features_io import bundles_from_records, load_features, save_features
from .importance import iterate_weights
from .matcher import build_association_graph, extract_mapping, objective_value, solve_rrw
from .model import FeatureBundle
from .oracle import brute_force_mapping, exhaustive_wasserstein, random_instance
from .synth import SynthConfig, synthesize_to_dir
from .transport import wasserstein1


def _engine_config(args) -> EngineConfig:
    overrides = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ValidationError("invalid-config", f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return load_engine_config(getattr(args, "config", None), overrides)


def _load_bundles(args, dataset: Dataset, cfg: EngineConfig) -> dict[str, FeatureBundle]:
    feature_path = getattr(args, "features", None)
    if feature_path is None and dataset.feature_file:
        feature_path = str(Path(args.dataset).parent / dataset.feature_file)
    if feature_path is not None:
        dim, records = load_features(feature_path)
        return bundles_from_records(list(dataset.images), dim, records, cfg.spatial)
    # descriptor mode: extract stripe features from the referenced images
    return _extract_bundles(dataset, cfg)


def _extract_bundles(dataset: Dataset, cfg: EngineConfig) -> dict[str, FeatureBundle]:
    from PIL import Image

    bundles = {}
    for obs in dataset.images:
        if obs.image_path is None or not Path(obs.image_path).exists():
            raise ValidationError(
                "missing-image", f"image {obs.image_id!r}: no readable file at {obs.image_path!r}"
            )
        with Image.open(obs.image_path) as img:
            pixels = np.asarray(img.convert("RGB"))
        bundles[obs.image_id] = compute_bundle(obs, pixels, cfg.descriptor, cfg.spatial)
    return bundles


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        n_groups=args.groups,
        size_range=tuple(int(s) for s in args.size_range.split("-")),
        feature_dim=args.feature_dim,
        feature_noise=args.noise,
        layout_jitter=args.layout_jitter,
        member_change_prob=args.member_change,
        seed=args.seed,
    )
    ds_path, feat_path = synthesize_to_dir(cfg, args.out, args.format)
    print(f"dataset: {ds_path}")
    print(f"features: {feat_path}")
    return 0


def cmd_features(args) -> int:
    cfg = _engine_config(args)
    dataset = load_dataset(args.dataset, require_images=True)
    bundles = _extract_bundles(dataset, cfg)
    records = {
        obs.image_id: {
            "global": bundles[obs.image_id].global_appearance,
            "persons": bundles[obs.image_id].person_appearance,
        }
        for obs in dataset.images
    }
    fmt = "text" if str(args.out).endswith(".json") else "binary"
    save_features(args.out, records, cfg.descriptor.dim, fmt=fmt)
    print(f"features: {args.out} ({len(records)} images, dim {cfg.descriptor.dim})")
    return 0


def cmd_match(args) -> int:
    cfg = _engine_config(args)
    dataset = load_dataset(args.dataset)
    if args.probe not in dataset.by_id:
        raise ValidationError("invalid-dataset", f"probe image {args.probe!r} not in dataset")
    probe = dataset.by_id[args.probe]
    galleries = dataset.camera_images(args.gallery_camera)
    if not galleries:
        raise ValidationError("invalid-dataset", f"no images in camera {args.gallery_camera!r}")
    bundles = _load_bundles(args, dataset, cfg)
    matcher = PairMatcher(bundles, cfg)
    iteration = iterate_weights([probe], galleries, bundles, matcher, cfg.importance)
    ranked = sorted(
        ((g, iteration.results[(probe.image_id, g.image_id)]) for g in galleries),
        key=lambda item: (-item[1].fused_score, item[0].image_id),
    )
    doc = {
        "probe": probe.image_id,
        "gallery_camera": args.gallery_camera,
        "results": [
            {
                "gallery": g.image_id,
                "group_id": g.group_id,
                "fused_score": r.fused_score,
                "objective": r.objective,
                "mapping": [[c.probe_person, c.gallery_person] for c in r.mapping],
                "per_order_scores": r.per_order_scores,
            }
            for g, r in ranked
        ],
    }
    Path(args.out).write_text(json.dumps(doc, indent=1))
    print(f"match results: {args.out} (best: {ranked[0][0].image_id})")
    return 0


def cmd_eval(args) -> int:
    cfg = _engine_config(args)
    dataset = load_dataset(args.dataset)
    bundles = _load_bundles(args, dataset, cfg)
    ranks = tuple(int(r) for r in args.ranks.split(","))
    report = run_evaluation(dataset, bundles, cfg, n_splits=args.splits, seed=args.seed, ranks=ranks)
    emit_report(report, args.out, fmt="csv" if str(args.out).endswith(".csv") else "structured")
    pretty = ", ".join(f"r{r}={v:.3f}" for r, v in zip(report.ranks, report.mean))
    print(f"mean CMC over {args.splits} splits: {pretty}")
    print(f"per-pair time: {report.seconds_per_pair * 1e3:.2f} ms over {report.pairs_evaluated} pairs")
    print(f"report: {args.out}")
    return 0


def cmd_oracle_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    max_set = min(args.max_size, 4)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(args.trials):
        m = int(rng.integers(1, max_set + 1))
        n = int(rng.integers(1, max_set + 1))
        d = int(rng.integers(1, 9))
        a = rng.normal(size=(m, d))
        b = rng.normal(size=(n, d))
        worst = max(worst, abs(wasserstein1(a, b) - exhaustive_wasserstein(a, b)))
    w1_ok = worst <= 1e-9
    print(f"[{'PASS' if w1_ok else 'FAIL'}] transport: {args.trials} trials, max |prod - oracle| = {worst:.3e}")

    cfg = EngineConfig()
    matching_trials = args.trials
    q_hits = 0
    map_hits = 0
    ratios = []
    for _ in range(matching_trials):
        np_p = int(rng.integers(2, min(args.max_size, 4) + 1))
        n_g = int(rng.integers(2, min(args.max_size, 4) + 1))
        inst = random_instance(rng, np_p, n_g)
        graph = build_association_graph(
            inst.probe_bundle, inst.gallery_bundle, inst.probe_weights, inst.gallery_weights, cfg.solver
        )
        x, _ = solve_rrw(graph, cfg.solver)
        mapping = extract_mapping(x, graph, cfg.solver)
        q_solver = objective_value(mapping, graph, cfg.solver)
        oracle_mapping, q_oracle = brute_force_mapping(
            inst.probe_bundle, inst.gallery_bundle, inst.probe_weights, inst.gallery_weights,
            cfg.solver, graph=graph,
        )
        ratio = q_solver / q_oracle if q_oracle > 0 else 1.0
        ratios.append(ratio)
        q_hits += ratio >= 0.95
        map_hits += mapping == oracle_mapping
    q_rate = q_hits / matching_trials
    map_rate = map_hits / matching_trials
    match_ok = q_rate >= 0.90 and map_rate >= 0.80
    print(
        f"[{'PASS' if match_ok else 'FAIL'}] matching: Q >= 0.95*opt on {q_rate:.1%}, "
        f"mapping equal on {map_rate:.1%}, worst ratio {min(ratios):.3f}"
    )
    print(f"total time: {time.perf_counter() - t0:.1f} s")
    return 0 if (w1_ok and match_ok) else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groupmatch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key/value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override")

    p = sub.add_parser("synth", help="generate a synthetic two-camera dataset")
    p.add_argument("--groups", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.0, help="feature noise sigma")
    p.add_argument("--member-change", type=float, default=0.0, help="membership change probability")
    p.add_argument("--layout-jitter", type=float, default=0.0, help="position jitter sigma")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--feature-dim", type=int, default=32)
    p.add_argument("--size-range", default="2-6", help="group size range, e.g. 2-6")
    p.add_argument("--format", choices=("text", "binary"), default="text")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="extract stripe descriptors from dataset images")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="feature file (.json for text form)")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("match", help="rank one gallery camera against a probe image")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--features", help="feature file (defaults to the dataset's reference)")
    p.add_argument("--probe", required=True, help="probe image id")
    p.add_argument("--gallery-camera", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", help="CMC evaluation over random splits")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--features")
    p.add_argument("--splits", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ranks", default="1,5,10,15,20")
    p.add_argument("--out", required=True, help="report file (.csv for CSV form)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle-check", help="verify solvers against brute force")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--max-size", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
