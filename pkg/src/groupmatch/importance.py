"""Importance weights for granular objects, static and dynamic.

The static part measures geometric stability: relative local density for
single persons, inverse spatial distance for pairs, and similarity of the
center triangle to an equilateral one for triples.

The dynamic part is driven by intermediate matching results: saliency (how
far a person sits from the bulk of the people matched to them in the other
camera) and purity (how separated their matched set is from the matched
sets of their group peers, by exact Wasserstein-1 distance).  Both families
are normalized to unit sum per image.  Dynamic terms start at 1 and are
refined by alternating matching passes with weight updates until the fine
weights stabilize.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .config import ImportanceConfig
from .model import FeatureBundle, GroupObservation
from .transport import wasserstein1

__all__ = [
    "ImportanceMap",
    "MatchSet",
    "local_density",
    "static_weight_fine",
    "pair_stability",
    "triangle_stability",
    "medium_weight",
    "coarse_weight",
    "saliency_terms",
    "purity_terms",
    "build_match_sets",
    "initial_importance",
    "iterate_weights",
    "WeightIterationResult",
    "wasserstein1",
]


@dataclass(frozen=True)
class ImportanceMap:
    """Importance weight per granular object of one observation.

    The global object always carries weight exactly 1.
    """

    fine: np.ndarray
    medium: dict[tuple[int, int], float]
    coarse: dict[tuple[int, int, int], float]
    global_weight: float = 1.0

    def __post_init__(self):
        fine = np.asarray(self.fine, dtype=np.float64)
        if fine.ndim != 1 or fine.size < 1:
            raise ValueError("fine weights must be a non-empty vector")
        if not np.all(np.isfinite(fine)) or np.any(fine < 0):
            raise ValueError("importance weights must be finite and non-negative")
        if self.global_weight != 1.0:
            raise ValueError("the global object weight is fixed at 1")
        fine.flags.writeable = False
        object.__setattr__(self, "fine", fine)

    def of_members(self, members: tuple[int, ...]) -> float:
        """Weight of the object with these members (any granularity)."""
        if len(members) == 1:
            return float(self.fine[members[0]])
        if len(members) == 2:
            return self.medium[members]
        if len(members) == 3:
            return self.coarse[members]
        return self.global_weight


@dataclass
class MatchSet:
    """Features of the persons matched to one person across the other camera.

    At most one entry per opposite-camera image (mappings are one-to-one
    within each image pair).
    """

    person: int
    features: list[np.ndarray] = field(default_factory=list)
    sources: list[tuple[str, int]] = field(default_factory=list)  # (image id, person)

    def add(self, feature: np.ndarray, source_image: str, source_person: int) -> None:
        if any(src == source_image for src, _ in self.sources):
            raise ValueError(f"duplicate match-set entry for image {source_image!r}")
        self.features.append(np.asarray(feature, dtype=np.float64))
        self.sources.append((source_image, source_person))

    def __len__(self) -> int:
        return len(self.features)

    def signature(self) -> tuple:
        return tuple(sorted(self.sources))


def _center_distances(obs: GroupObservation) -> np.ndarray:
    centers = np.asarray(obs.centers())
    diff = centers[:, None, :] - centers[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def local_densities(obs: GroupObservation, k_density: int = 2) -> np.ndarray:
    """Local reachability density of every person from box-center geometry.

    reach-dist(i, n) = max(dist(i, n), k-dist(n)) over the k nearest
    neighbors of i; the density is k divided by the summed reach distances.
    A single-person group has density 1 by convention.
    """
    n = obs.n_persons
    if n == 1:
        return np.ones(1)
    k = min(k_density, n - 1)
    dist = _center_distances(obs)
    masked = dist.copy()
    np.fill_diagonal(masked, np.inf)
    order = np.argsort(masked, axis=1, kind="stable")
    knn = order[:, :k]
    kdist = dist[np.arange(n), order[:, k - 1]]
    rho = np.empty(n)
    for i in range(n):
        reach = np.maximum(dist[i, knn[i]], kdist[knn[i]])
        total = reach.sum()
        rho[i] = k / total if total > 0 else np.inf
    # coincident centers give infinite density; cap so ratios stay finite
    finite = rho[np.isfinite(rho)]
    cap = (finite.max() if finite.size else 1.0) * 1e6
    return np.minimum(rho, max(cap, 1.0))


def local_density(i: int, obs: GroupObservation, k_density: int = 2) -> float:
    return float(local_densities(obs, k_density)[i])


def static_weights_fine(
    obs: GroupObservation, k_density: int = 2, eps: float = 1e-9
) -> np.ndarray:
    """Stability of every person: sum of density ratios against the peers."""
    n = obs.n_persons
    if n == 1:
        return np.ones(1)
    rho = local_densities(obs, k_density)
    out = np.empty(n)
    for i in range(n):
        others = np.delete(rho, i)
        out[i] = float(np.sum(rho[i] / np.maximum(others, eps)))
    return out


def static_weight_fine(i: int, obs: GroupObservation, k_density: int = 2) -> float:
    return float(static_weights_fine(obs, k_density)[i])


def pair_stability(i1: int, i2: int, obs: GroupObservation, eps: float = 1e-6) -> float:
    """Inverse normalized center distance of a two-person subgroup."""
    c1 = obs.boxes[i1].center
    c2 = obs.boxes[i2].center
    d_norm = math.hypot(c1[0] - c2[0], c1[1] - c2[1]) / obs.diagonal
    return 1.0 / (d_norm + eps)


_SIN60 = math.sin(math.pi / 3.0)


def triangle_stability(i1: int, i2: int, i3: int, obs: GroupObservation) -> float:
    """Similarity of the center triangle to an equilateral one, in (0, 1]."""
    pts = [obs.boxes[i].center for i in (i1, i2, i3)]
    sides = []
    for a, b in ((0, 1), (1, 2), (0, 2)):
        sides.append(math.hypot(pts[a][0] - pts[b][0], pts[a][1] - pts[b][1]))
    if min(sides) <= 0.0:
        angles = [0.0, 0.0, math.pi]  # duplicate centers degenerate to collinear
    else:
        d12, d23, d13 = sides
        angles = [
            math.acos(max(-1.0, min(1.0, (d12**2 + d13**2 - d23**2) / (2 * d12 * d13)))),
            math.acos(max(-1.0, min(1.0, (d12**2 + d23**2 - d13**2) / (2 * d12 * d23)))),
            math.acos(max(-1.0, min(1.0, (d13**2 + d23**2 - d12**2) / (2 * d13 * d23)))),
        ]
    return math.exp(-2.0 * sum(abs(math.sin(t) - _SIN60) for t in angles))


def medium_weight(fine: np.ndarray, i1: int, i2: int, t2: float) -> float:
    return float(fine[i1] + fine[i2] + t2)


def coarse_weight(medium: dict[tuple[int, int], float], i1: int, i2: int, i3: int, t3: float) -> float:
    a, b, c = sorted((i1, i2, i3))
    return medium[(a, b)] + medium[(b, c)] + medium[(a, c)] + t3


@dataclass(frozen=True)
class StaticGeometry:
    """Per-observation static stability terms, computed once."""

    t1: np.ndarray
    t2: dict[tuple[int, int], float]
    t3: dict[tuple[int, int, int], float]


def static_geometry(obs: GroupObservation, cfg: ImportanceConfig | None = None) -> StaticGeometry:
    cfg = cfg or ImportanceConfig()
    n = obs.n_persons
    t1 = static_weights_fine(obs, cfg.k_density, cfg.eps_density)
    t2 = {
        (i, j): pair_stability(i, j, obs, cfg.eps_dist)
        for i, j in itertools.combinations(range(n), 2)
    }
    t3 = {
        (i, j, k): triangle_stability(i, j, k, obs)
        for i, j, k in itertools.combinations(range(n), 3)
    }
    return StaticGeometry(t1=t1, t2=t2, t3=t3)


def assemble_importance(
    static: StaticGeometry, saliency: np.ndarray, purity: np.ndarray
) -> ImportanceMap:
    """Combine static and dynamic terms into the full importance map."""
    fine = static.t1 + np.asarray(saliency) + np.asarray(purity)
    medium = {key: medium_weight(fine, key[0], key[1], t2) for key, t2 in static.t2.items()}
    coarse = {key: coarse_weight(medium, *key, t3) for key, t3 in static.t3.items()}
    return ImportanceMap(fine=fine, medium=medium, coarse=coarse)


def initial_importance(
    obs: GroupObservation, cfg: ImportanceConfig | None = None, static: StaticGeometry | None = None
) -> ImportanceMap:
    """Iteration-0 weights: both dynamic terms initialized to 1."""
    static = static or static_geometry(obs, cfg)
    n = obs.n_persons
    return assemble_importance(static, np.ones(n), np.ones(n))


def equal_importance(obs: GroupObservation) -> ImportanceMap:
    """All objects weighted 1 (the weight-ablation baseline)."""
    n = obs.n_persons
    return ImportanceMap(
        fine=np.ones(n),
        medium={k: 1.0 for k in itertools.combinations(range(n), 2)},
        coarse={k: 1.0 for k in itertools.combinations(range(n), 3)},
    )


def _normalize_unit_sum(raw: np.ndarray) -> np.ndarray:
    total = raw.sum()
    if not np.isfinite(total) or total <= 0.0:
        return np.full(raw.shape, 1.0 / raw.size)
    return raw / total


def saliency_terms(bundle: FeatureBundle, match_sets: Sequence[MatchSet]) -> np.ndarray:
    """Normalized saliency per person of one probe image.

    The reference feature is the ceil(|M|/2)-th nearest neighbor of the
    person inside its match set.  Persons with an empty match set take the
    maximum raw saliency seen in the image (a never-matched person counts
    as maximally discriminative); the whole family is normalized to sum 1.
    """
    n = bundle.n_persons
    raw = np.full(n, np.nan)
    for i in range(n):
        ms = match_sets[i]
        if len(ms) == 0:
            continue
        dists = np.sort(np.linalg.norm(np.asarray(ms.features) - bundle.person_appearance[i], axis=1))
        ref = dists[math.ceil(len(ms) / 2) - 1]
        raw[i] = ref / len(ms)
    if np.all(np.isnan(raw)):
        return np.full(n, 1.0 / n)
    raw = np.where(np.isnan(raw), np.nanmax(raw), raw)
    return _normalize_unit_sum(raw)


def purity_terms(
    match_sets: Sequence[MatchSet],
    w1_cache: dict | None = None,
    empty_fallback: float | None = None,
) -> tuple[np.ndarray, float]:
    """Normalized purity per person plus the max raw W1 observed.

    Pairwise terms with an empty set on either side contribute the supplied
    fallback (the per-dataset maximum observed W1); with no fallback known
    they contribute the in-image maximum.
    """
    n = len(match_sets)
    if n == 1:
        return np.ones(1), 0.0
    w1 = np.full((n, n), np.nan)
    local_max = 0.0
    for i, j in itertools.combinations(range(n), 2):
        a, b = match_sets[i], match_sets[j]
        if len(a) == 0 or len(b) == 0:
            continue
        if w1_cache is not None:
            key = (a.signature(), b.signature())
            val = w1_cache.get(key)
            if val is None:
                val = wasserstein1(np.asarray(a.features), np.asarray(b.features))
                w1_cache[key] = val
        else:
            val = wasserstein1(np.asarray(a.features), np.asarray(b.features))
        w1[i, j] = w1[j, i] = val
        local_max = max(local_max, val)
    fallback = empty_fallback if empty_fallback is not None else local_max
    w1 = np.where(np.isnan(w1), fallback, w1)
    np.fill_diagonal(w1, 0.0)
    return _normalize_unit_sum(w1.sum(axis=1)), local_max


def build_match_sets(
    observations: Sequence[GroupObservation],
    bundles: dict[str, FeatureBundle],
    mappings: dict[tuple[str, str], "object"],
    side: str,
) -> dict[str, list[MatchSet]]:
    """Collect per-person match sets from the per-pair one-to-one mappings.

    ``mappings`` maps (probe image id, gallery image id) to a Mapping (or
    anything with a ``mapping`` attribute).  ``side`` selects whether the
    observations are the probe or the gallery end of those pairs.
    """
    if side not in ("probe", "gallery"):
        raise ValueError("side must be 'probe' or 'gallery'")
    sets: dict[str, list[MatchSet]] = {
        obs.image_id: [MatchSet(person=i) for i in range(obs.n_persons)] for obs in observations
    }
    for (pid, gid), result in mappings.items():
        mapping = getattr(result, "mapping", result)
        if side == "probe":
            if pid not in sets:
                continue
            other_bundle = bundles[gid]
            for cand in mapping:
                sets[pid][cand.probe_person].add(
                    other_bundle.person_appearance[cand.gallery_person], gid, cand.gallery_person
                )
        else:
            if gid not in sets:
                continue
            other_bundle = bundles[pid]
            for cand in mapping:
                sets[gid][cand.gallery_person].add(
                    other_bundle.person_appearance[cand.probe_person], pid, cand.probe_person
                )
    return sets


@dataclass
class WeightIterationResult:
    """Final weights and the last matching pass of the iterative update."""

    weights: dict[str, ImportanceMap]
    results: dict[tuple[str, str], "object"]
    iterations: int
    converged: bool
    last_delta: dict[str, np.ndarray]
    max_delta_history: list[float]


def iterate_weights(
    probes: Sequence[GroupObservation],
    galleries: Sequence[GroupObservation],
    bundles: dict[str, FeatureBundle],
    matcher: Callable,
    cfg: ImportanceConfig | None = None,
    max_iter: int | None = None,
    tol: float | None = None,
) -> WeightIterationResult:
    """Alternate matching passes with dynamic weight updates.

    ``matcher(probe_obs, gallery_obs, probe_weights, gallery_weights)`` must
    return an object with a ``mapping`` attribute.  Dynamic terms start at 1;
    the loop stops when the largest fine-weight change drops below ``tol``
    or after ``max_iter`` passes.  Returns the final weights together with
    the last pass's match results.
    """
    cfg = cfg or ImportanceConfig()
    max_iter = cfg.max_iter if max_iter is None else max_iter
    tol = cfg.tol if tol is None else tol

    all_obs = list(probes) + [g for g in galleries if g.image_id not in {p.image_id for p in probes}]
    statics = {obs.image_id: static_geometry(obs, cfg) for obs in all_obs}
    weights = {
        obs.image_id: initial_importance(obs, cfg, statics[obs.image_id]) for obs in all_obs
    }
    results: dict[tuple[str, str], object] = {}
    last_delta = {obs.image_id: np.zeros(obs.n_persons) for obs in all_obs}
    history: list[float] = []
    converged = False
    iterations = 0
    w1_cache: dict = {}

    for _ in range(max_iter):
        iterations += 1
        results = {
            (p.image_id, g.image_id): matcher(p, g, weights[p.image_id], weights[g.image_id])
            for p in probes
            for g in galleries
        }
        probe_sets = build_match_sets(probes, bundles, results, side="probe")
        gallery_sets = build_match_sets(galleries, bundles, results, side="gallery")
        match_sets = {**probe_sets, **gallery_sets}

        # first pass collects the largest observed W1 for the empty-set rule
        purities: dict[str, np.ndarray] = {}
        max_seen = 0.0
        local_maxima: dict[str, float] = {}
        for obs in all_obs:
            _, local = purity_terms(match_sets[obs.image_id], w1_cache)
            local_maxima[obs.image_id] = local
            max_seen = max(max_seen, local)
        for obs in all_obs:
            purities[obs.image_id], _ = purity_terms(
                match_sets[obs.image_id], w1_cache, empty_fallback=max_seen
            )

        max_change = 0.0
        new_weights = {}
        for obs in all_obs:
            sal = saliency_terms(bundles[obs.image_id], match_sets[obs.image_id])
            new_map = assemble_importance(statics[obs.image_id], sal, purities[obs.image_id])
            delta = np.abs(new_map.fine - weights[obs.image_id].fine)
            last_delta[obs.image_id] = delta
            max_change = max(max_change, float(delta.max()))
            new_weights[obs.image_id] = new_map
        weights = new_weights
        history.append(max_change)
        if max_change < tol:
            converged = True
            break

    return WeightIterationResult(
        weights=weights,
        results=results,
        iterations=iterations,
        converged=converged,
        last_delta=last_delta,
        max_delta_history=history,
    )
