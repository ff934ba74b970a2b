"""CMC evaluation over random splits, score matrices and report files.

The protocol splits evaluable groups 50/50 into train/validation per split
(the train half is loaded but unused by this training-free pipeline, kept
for protocol compatibility), runs the full iterative-weighting matcher over
all validation probe x gallery pairs, and reports rank-k match rates per
split plus their mean and the mean per-pair matcher wall time.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import EngineConfig
from .dataset import Dataset
from .errors import ValidationError
from .importance import WeightIterationResult, equal_importance, iterate_weights
from .matcher import MatchResult, match_pair, prepare_pair
from .model import FeatureBundle, GroupObservation


class PairMatcher:
    """Callable wrapper around match_pair with context caching and timing.

    Feature geometry of a pair never changes across weight iterations, so
    the prepared context is cached per (probe id, gallery id).
    """

    def __init__(self, bundles: dict[str, FeatureBundle], cfg: EngineConfig):
        self.bundles = bundles
        self.cfg = cfg
        self._ctx = {}
        self.calls = 0
        self.seconds = 0.0

    def __call__(self, probe_obs, gallery_obs, probe_weights, gallery_weights) -> MatchResult:
        key = (probe_obs.image_id, gallery_obs.image_id)
        t0 = time.perf_counter()
        ctx = self._ctx.get(key)
        pb = self.bundles[probe_obs.image_id]
        gb = self.bundles[gallery_obs.image_id]
        if ctx is None:
            ctx = prepare_pair(pb, gb, self.cfg.solver)
            self._ctx[key] = ctx
        result = match_pair(
            probe_obs, gallery_obs, pb, gb, probe_weights, gallery_weights, self.cfg.solver, ctx
        )
        self.seconds += time.perf_counter() - t0
        self.calls += 1
        return result


def evaluate_pairs(
    probes: Sequence[GroupObservation],
    galleries: Sequence[GroupObservation],
    bundles: dict[str, FeatureBundle],
    cfg: EngineConfig,
    use_importance: bool = True,
) -> tuple[dict[tuple[str, str], MatchResult], PairMatcher, WeightIterationResult | None]:
    """Match every probe against every gallery.

    With ``use_importance`` the dynamic weights are refined iteratively;
    otherwise a single pass runs with every object weighted 1.
    """
    matcher = PairMatcher(bundles, cfg)
    if use_importance:
        iteration = iterate_weights(probes, galleries, bundles, matcher, cfg.importance)
        return iteration.results, matcher, iteration
    weights = {obs.image_id: equal_importance(obs) for obs in list(probes) + list(galleries)}
    results = {
        (p.image_id, g.image_id): matcher(p, g, weights[p.image_id], weights[g.image_id])
        for p in probes
        for g in galleries
    }
    return results, matcher, None


def score_matrix(
    probes: Sequence[GroupObservation],
    galleries: Sequence[GroupObservation],
    results: dict[tuple[str, str], MatchResult],
    lambda_r: float | None = None,
) -> np.ndarray:
    """Fused scores as a (probes, galleries) matrix, optionally rescored."""
    out = np.empty((len(probes), len(galleries)))
    for pi, p in enumerate(probes):
        for gi, g in enumerate(galleries):
            r = results[(p.image_id, g.image_id)]
            out[pi, gi] = r.fused_score if lambda_r is None else r.rescored(lambda_r)
    return out


def global_only_scores(
    probes: Sequence[GroupObservation],
    galleries: Sequence[GroupObservation],
    bundles: dict[str, FeatureBundle],
    eps_dist: float = 1e-6,
) -> np.ndarray:
    """Reciprocal global-feature distances (the global-only baseline)."""
    gp = np.stack([bundles[p.image_id].global_appearance for p in probes])
    gg = np.stack([bundles[g.image_id].global_appearance for g in galleries])
    d = np.sqrt(((gp[:, None, :] - gg[None, :, :]) ** 2).sum(axis=2))
    return 1.0 / np.maximum(d, eps_dist)


def cmc_curve(
    scores: np.ndarray,
    probe_group_ids: Sequence[int],
    gallery_group_ids: Sequence[int],
    ranks: Sequence[int],
) -> tuple[tuple[float, ...], int]:
    """Rank-k correct match rates.

    For each probe the rank of its best-scoring true match is found, with
    score ties broken by gallery index; probes with no true match in the
    gallery are excluded and counted.  Returns (rates, excluded).
    """
    scores = np.asarray(scores, dtype=np.float64)
    probe_gids = np.asarray(probe_group_ids)
    gallery_gids = np.asarray(gallery_group_ids)
    n_gallery = scores.shape[1]
    found_ranks = []
    excluded = 0
    for p in range(scores.shape[0]):
        truth = gallery_gids == probe_gids[p]
        if not truth.any():
            excluded += 1
            continue
        order = np.lexsort((np.arange(n_gallery), -scores[p]))
        pos = int(np.nonzero(truth[order])[0][0])
        found_ranks.append(pos + 1)
    if not found_ranks:
        return tuple(0.0 for _ in ranks), excluded
    arr = np.asarray(found_ranks)
    return tuple(float(np.mean(arr <= r)) for r in ranks), excluded


@dataclass(frozen=True)
class CmcReport:
    """CMC rates per split and their mean; rates are non-decreasing in rank."""

    ranks: tuple[int, ...]
    per_split: tuple[tuple[float, ...], ...]
    mean: tuple[float, ...]
    seconds_per_pair: float
    pairs_evaluated: int
    excluded_probes: int

    def __post_init__(self):
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
        object.__setattr__(self, "per_split", tuple(tuple(float(x) for x in row) for row in self.per_split))
        object.__setattr__(self, "mean", tuple(float(x) for x in self.mean))


def run_evaluation(
    dataset: Dataset,
    bundles: dict[str, FeatureBundle],
    cfg: EngineConfig | None = None,
    n_splits: int | None = None,
    seed: int | None = None,
    ranks: Sequence[int] | None = None,
    use_importance: bool = True,
    global_only: bool = False,
) -> CmcReport:
    """Full protocol: random 50/50 group splits, matching, CMC per split."""
    cfg = cfg or EngineConfig()
    n_splits = cfg.eval.n_splits if n_splits is None else n_splits
    seed = cfg.eval.seed if seed is None else seed
    ranks = tuple(cfg.eval.ranks if ranks is None else ranks)

    evaluable = list(dataset.evaluable_group_ids)
    if len(evaluable) < 2:
        raise ValidationError("dataset-too-small", f"{len(evaluable)} evaluable groups, need >= 2")
    probe_camera = dataset.cameras[0]
    rng = np.random.default_rng(seed)

    per_split = []
    excluded_total = 0
    seconds = 0.0
    calls = 0
    for _ in range(n_splits):
        shuffled = list(evaluable)
        rng.shuffle(shuffled)
        val_groups = set(shuffled[len(shuffled) // 2 :])  # train half stays unused
        val_obs = [obs for obs in dataset.images if obs.group_id in val_groups]
        galleries = [obs for obs in val_obs if obs.camera_id != probe_camera]
        gallery_gids = [g.group_id for g in galleries]
        probes = [
            obs
            for obs in val_obs
            if obs.camera_id == probe_camera and obs.group_id in set(gallery_gids)
        ]
        excluded_total += sum(
            1
            for obs in val_obs
            if obs.camera_id == probe_camera and obs.group_id not in set(gallery_gids)
        )
        if not probes or not galleries:
            raise ValidationError("dataset-too-small", "a split produced no evaluable probes")
        if global_only:
            scores = global_only_scores(probes, galleries, bundles, cfg.solver.eps_dist)
        else:
            results, matcher, _ = evaluate_pairs(probes, galleries, bundles, cfg, use_importance)
            scores = score_matrix(probes, galleries, results)
            seconds += matcher.seconds
            calls += matcher.calls
        rates, excluded = cmc_curve(scores, [p.group_id for p in probes], gallery_gids, ranks)
        excluded_total += excluded
        per_split.append(rates)

    mean = tuple(float(np.mean([row[i] for row in per_split])) for i in range(len(ranks)))
    return CmcReport(
        ranks=ranks,
        per_split=tuple(per_split),
        mean=mean,
        seconds_per_pair=seconds / calls if calls else 0.0,
        pairs_evaluated=calls,
        excluded_probes=excluded_total,
    )


def emit_report(report: CmcReport, path: str | Path, fmt: str = "structured") -> None:
    """Write a report as JSON ("structured") or CSV; output is bit-stable."""
    path = Path(path)
    if fmt == "structured":
        path.write_text(json.dumps(asdict(report), indent=1, sort_keys=True))
        return
    if fmt != "csv":
        raise ValidationError("invalid-config", f"unknown report format {fmt!r}")
    lines = ["rank,split,rate"]
    for split_idx, row in enumerate(report.per_split):
        for rank, rate in zip(report.ranks, row):
            lines.append(f"{rank},{split_idx},{rate!r}")
    for rank, rate in zip(report.ranks, report.mean):
        lines.append(f"{rank},mean,{rate!r}")
    path.write_text("\n".join(lines) + "\n")


def load_report(path: str | Path) -> CmcReport:
    doc = json.loads(Path(path).read_text())
    return CmcReport(
        ranks=tuple(doc["ranks"]),
        per_split=tuple(tuple(row) for row in doc["per_split"]),
        mean=tuple(doc["mean"]),
        seconds_per_pair=doc["seconds_per_pair"],
        pairs_evaluated=doc["pairs_evaluated"],
        excluded_probes=doc["excluded_probes"],
    )
