"""Synthetic cross-camera group generator.

Each group gets latent member identities (unit-norm Gaussian vectors) and a
random layout in the unit square for camera A.  The camera B view jitters
the layout, perturbs the features with additive Gaussian noise followed by
renormalization, independently drops each member with probability p/2 and
adds a fresh distractor identity with probability p/2.  Distractor
identities are never reused, so group identity stays unambiguous under the
majority-membership convention.  Output is deterministic given the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset, save_dataset
from .errors import ValidationError
from .features_io import save_features
from .model import BoundingBox, GroupObservation

IMAGE_SIZE = (1000, 1000)
PERSON_W = 50.0
PERSON_H = 120.0
MIN_SEPARATION = 0.1  # people occupy space; keeps pair stabilities bounded
_PLACEMENT_TRIES = 40


@dataclass(frozen=True)
class SynthConfig:
    n_groups: int
    size_range: tuple[int, int] = (2, 6)
    feature_dim: int = 32
    feature_noise: float = 0.0  # additive sigma before renormalization
    layout_jitter: float = 0.0  # position sigma in unit-square units
    member_change_prob: float = 0.0
    seed: int = 0
    # pedestrian appearance clusters heavily (similar clothing); identities
    # are drawn around a small archetype pool so distinct people can look
    # alike, the regime that makes saliency weighting informative
    n_archetypes: int = 5
    archetype_spread: float = 0.25
    # members of one group reuse the group's archetype with this probability
    # (teams and families dress alike), creating within-group look-alikes
    team_prob: float = 0.45
    # whole-group descriptors degrade faster across cameras than person
    # crops (background, layout); the global vector takes feature noise
    # amplified by this factor
    global_noise_scale: float = 0.8

    def __post_init__(self):
        if self.n_groups < 1:
            raise ValidationError("invalid-config", "n_groups must be >= 1")
        lo, hi = self.size_range
        if lo < 1 or hi < lo:
            raise ValidationError("invalid-config", f"bad size_range {self.size_range}")
        if not 0.0 <= self.member_change_prob <= 1.0:
            raise ValidationError("invalid-config", "member_change_prob must be in [0, 1]")
        if self.feature_noise < 0 or self.layout_jitter < 0:
            raise ValidationError("invalid-config", "noise levels must be non-negative")
        if self.feature_dim < 1:
            raise ValidationError("invalid-config", "feature_dim must be >= 1")


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    return mat / np.linalg.norm(mat, axis=1, keepdims=True)


def _place_spread(rng: np.random.Generator, count: int) -> np.ndarray:
    """Formation-style group layout with near-uniform member spacing.

    Walking groups keep roughly even interpersonal distance, which keeps
    local densities comparable across members; members sit on a randomly
    rotated ring with the chosen spacing, lightly perturbed.
    """
    center = rng.uniform(0.35, 0.65, size=2)
    spacing = rng.uniform(0.18, 0.33)
    if count == 1:
        return np.clip(center[None, :] + rng.normal(0.0, 0.05, size=(1, 2)), 0.0, 1.0)
    radius = spacing / (2.0 * math.sin(math.pi / count))
    phase = rng.uniform(0.0, 2.0 * math.pi)
    angles = phase + 2.0 * math.pi * np.arange(count) / count
    ring = center + radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    ring = ring + rng.uniform(-0.1 * spacing, 0.1 * spacing, size=ring.shape)
    return np.clip(ring, 0.0, 1.0)


def _jitter_spread(rng: np.random.Generator, base: np.ndarray, sigma: float) -> np.ndarray:
    """Per-member position jitter of marginal scale sigma.

    Cross-camera layout change is largely coherent (the group moves, the
    viewpoint shifts), so the jitter splits into a shared offset and an
    individual part; members are re-drawn a few times if they collapse
    together.
    """
    shared = rng.normal(0.0, 0.9 * sigma, size=2)
    ind = math.sqrt(1.0 - 0.9**2) * sigma
    out: list[np.ndarray] = []
    for pos in base:
        cand = pos + shared + rng.normal(0.0, ind, size=2)
        for _ in range(_PLACEMENT_TRIES):
            if all(np.linalg.norm(cand - q) >= MIN_SEPARATION / 2 for q in out):
                break
            cand = pos + shared + rng.normal(0.0, ind, size=2)
        out.append(cand)
    return np.asarray(out)


def _boxes_from_positions(positions: np.ndarray) -> tuple[BoundingBox, ...]:
    """Person boxes centered on unit-square positions, kept inside the image."""
    w, h = IMAGE_SIZE
    boxes = []
    for px, py in positions:
        cx = PERSON_W / 2 + 1 + float(np.clip(px, 0.0, 1.0)) * (w - PERSON_W - 2)
        cy = PERSON_H / 2 + 1 + float(np.clip(py, 0.0, 1.0)) * (h - PERSON_H - 2)
        boxes.append(BoundingBox(cx - PERSON_W / 2, cy - PERSON_H / 2, PERSON_W, PERSON_H))
    return tuple(boxes)


def synthesize(cfg: SynthConfig) -> tuple[Dataset, int, dict[str, dict]]:
    """Generate a two-camera dataset plus its feature records.

    Returns (dataset, feature_dim, records) where records feed
    ``features_io.save_features``.
    """
    ds, dim, records, _ = synthesize_with_truth(cfg)
    return ds, dim, records


def synthesize_with_truth(
    cfg: SynthConfig,
) -> tuple[Dataset, int, dict[str, dict], dict[str, tuple[int, ...]]]:
    """Like synthesize, also returning per-image member identity labels.

    Identities are global person ids; distractors get fresh ids.  Useful
    for person-level diagnostics, never written to the dataset files.
    """
    rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.size_range
    p_half = cfg.member_change_prob / 2.0
    observations: list[GroupObservation] = []
    records: dict[str, dict] = {}
    identities: dict[str, tuple[int, ...]] = {}
    next_person_id = 0
    archetypes = _unit_rows(rng.normal(size=(cfg.n_archetypes, cfg.feature_dim)))

    def fresh_identities(count: int, team_kind: int | None = None) -> np.ndarray:
        kinds = rng.integers(0, cfg.n_archetypes, size=count)
        if team_kind is not None and cfg.team_prob > 0:
            take_team = rng.random(count) < cfg.team_prob
            kinds = np.where(take_team, team_kind, kinds)
        offsets = rng.normal(0.0, cfg.archetype_spread, size=(count, cfg.feature_dim))
        return _unit_rows(archetypes[kinds] + offsets)

    for g in range(cfg.n_groups):
        n = int(rng.integers(lo, hi + 1))
        team_kind = int(rng.integers(0, cfg.n_archetypes))
        latent = fresh_identities(n, team_kind)
        pos_a = _place_spread(rng, n)

        sigma_g = cfg.global_noise_scale * cfg.feature_noise

        def polluted_global(member_features: np.ndarray) -> np.ndarray:
            mean = member_features.mean(axis=0, keepdims=True)
            if sigma_g > 0:
                mean = mean + rng.normal(0.0, sigma_g, size=mean.shape)
            return _unit_rows(mean)[0]

        id_a = f"g{g:04d}_a"
        observations.append(
            GroupObservation(
                image_id=id_a,
                camera_id="A",
                group_id=g,
                boxes=_boxes_from_positions(pos_a),
                image_size=IMAGE_SIZE,
            )
        )
        records[id_a] = {
            "global": polluted_global(latent),
            "persons": latent,
        }
        member_ids = tuple(range(next_person_id, next_person_id + n))
        next_person_id += n
        identities[id_a] = member_ids

        if cfg.layout_jitter > 0:
            pos_b = _jitter_spread(rng, pos_a, cfg.layout_jitter)
        else:
            pos_b = pos_a
        if cfg.feature_noise > 0:
            feat_b = _unit_rows(latent + rng.normal(0.0, cfg.feature_noise, size=latent.shape))
        else:
            feat_b = latent

        if p_half > 0:
            keep = rng.random(n) >= p_half
            if not keep.any():
                keep[0] = True  # a view cannot be empty
            add_distractor = bool(rng.random() < p_half)
        else:
            keep = np.ones(n, dtype=bool)
            add_distractor = False

        pos_view = pos_b[keep]
        feat_view = feat_b[keep]
        view_ids = tuple(mid for mid, k in zip(member_ids, keep) if k)
        if add_distractor:
            extra = fresh_identities(1)
            epos = rng.uniform(0.0, 1.0, size=2)
            for _ in range(_PLACEMENT_TRIES):
                if all(np.linalg.norm(epos - q) >= MIN_SEPARATION / 2 for q in pos_view):
                    break
                epos = rng.uniform(0.0, 1.0, size=2)
            pos_view = np.concatenate([pos_view, epos[None]])
            feat_view = np.concatenate([feat_view, extra])
            view_ids = view_ids + (next_person_id,)
            next_person_id += 1

        id_b = f"g{g:04d}_b"
        observations.append(
            GroupObservation(
                image_id=id_b,
                camera_id="B",
                group_id=g,
                boxes=_boxes_from_positions(pos_view),
                image_size=IMAGE_SIZE,
            )
        )
        records[id_b] = {
            "global": polluted_global(feat_view),
            "persons": feat_view,
        }
        identities[id_b] = view_ids

    ds = Dataset(version=1, cameras=("A", "B"), images=tuple(observations))
    return ds, cfg.feature_dim, records, identities


def synthesize_to_dir(
    cfg: SynthConfig, out_dir: str | Path, feature_format: str = "text"
) -> tuple[Path, Path]:
    """Write dataset.json and a feature file into a directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds, dim, records = synthesize(cfg)
    feat_name = "features.json" if feature_format == "text" else "features.gmf"
    feat_path = out / feat_name
    save_features(feat_path, records, dim, fmt=feature_format)
    ds = Dataset(version=ds.version, cameras=ds.cameras, images=ds.images, feature_file=feat_name)
    ds_path = out / "dataset.json"
    save_dataset(ds, ds_path)
    return ds_path, feat_path
