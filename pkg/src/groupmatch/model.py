"""Core domain types for group observations and multi-grained objects.

A group observation is one camera view of one group of people.  The order
of its bounding boxes defines the canonical (0-based) person index used by
every other module: feature index = importance index = matching index.

A group is decomposed into *granular objects*: every single person (fine),
every unordered pair (medium), every unordered triple (coarse, only for
groups of three or more) and the whole group (global).  For a two-person
group the single pair object is flagged as the coarse level; there is no
medium level in that case.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Optional

import numpy as np

LEVEL_FINE = "fine"
LEVEL_MEDIUM = "medium"
LEVEL_COARSE = "coarse"
LEVEL_GLOBAL = "global"

ALL_LEVELS = (LEVEL_FINE, LEVEL_MEDIUM, LEVEL_COARSE, LEVEL_GLOBAL)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned person box: top-left corner (x, y) plus extent (w, h)."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"non-finite bounding box field {name}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"bounding box extent must be positive, got w={self.w}, h={self.h}")

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)


@dataclass(frozen=True)
class GroupObservation:
    """One camera view of one group.

    Box order is the canonical person index i = 0..N-1 used everywhere
    downstream.  Boxes must lie inside the declared image size.
    """

    image_id: str
    camera_id: str
    group_id: int
    boxes: tuple[BoundingBox, ...]
    image_size: tuple[int, int]  # (width, height) in pixels
    image_path: Optional[str] = None

    def __post_init__(self):
        if not self.boxes:
            raise ValueError(f"observation {self.image_id!r} has no boxes")
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise ValueError(f"observation {self.image_id!r} has empty image size")
        for i, b in enumerate(self.boxes):
            if b.x < 0 or b.y < 0 or b.x + b.w > w or b.y + b.h > h:
                raise ValueError(
                    f"observation {self.image_id!r}: box {i} exceeds image size {self.image_size}"
                )
        object.__setattr__(self, "boxes", tuple(self.boxes))

    @property
    def n_persons(self) -> int:
        return len(self.boxes)

    def centers(self) -> list[tuple[float, float]]:
        return [b.center for b in self.boxes]

    @property
    def diagonal(self) -> float:
        w, h = self.image_size
        return math.hypot(w, h)


@dataclass(frozen=True)
class GranularObject:
    """A person subset at one granularity level.

    ``members`` is the canonical form of an unordered subset: strictly
    increasing person indices.  The paper-style ordered tuples with distinct
    indices collapse onto these subsets, so each subset appears exactly once.
    """

    level: str
    members: tuple[int, ...]

    def __post_init__(self):
        if self.level not in ALL_LEVELS:
            raise ValueError(f"unknown granularity level {self.level!r}")
        if not self.members:
            raise ValueError("granular object needs at least one member")
        if any(b <= a for a, b in zip(self.members, self.members[1:])):
            raise ValueError(f"members must be strictly increasing, got {self.members}")
        n = len(self.members)
        expected = {LEVEL_FINE: (1,), LEVEL_MEDIUM: (2,), LEVEL_COARSE: (2, 3)}
        if self.level in expected and n not in expected[self.level]:
            raise ValueError(f"level {self.level} cannot have {n} members")

    @property
    def size(self) -> int:
        return len(self.members)


def enumerate_granular_objects(obs: GroupObservation) -> list[GranularObject]:
    """All granular objects of an observation, in deterministic order.

    Fine objects by person index, then unordered pairs and triples in
    lexicographic order, then the global object.  A two-person group has its
    single pair flagged as the coarse level; triples exist only for N >= 3.
    """
    n = obs.n_persons
    out = [GranularObject(LEVEL_FINE, (i,)) for i in range(n)]
    pair_level = LEVEL_COARSE if n == 2 else LEVEL_MEDIUM
    for pair in itertools.combinations(range(n), 2):
        out.append(GranularObject(pair_level, pair))
    if n >= 3:
        for triple in itertools.combinations(range(n), 3):
            out.append(GranularObject(LEVEL_COARSE, triple))
    out.append(GranularObject(LEVEL_GLOBAL, tuple(range(n))))
    return out


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class FeatureBundle:
    """All feature vectors of one observation's granular objects.

    ``person_appearance`` is an (N, d_a) matrix in canonical person order.
    ``edge_spatial`` maps each unordered pair (i, j), i < j, to a spatial
    descriptor; subgroup dicts map member tuples to aggregated vectors.
    All appearance vectors share one dimension d_a, all spatial vectors
    share one dimension d_s, and everything is finite.
    """

    person_appearance: np.ndarray
    edge_spatial: dict[tuple[int, int], np.ndarray]
    subgroup_appearance: dict[tuple[int, ...], np.ndarray]
    subgroup_spatial: dict[tuple[int, ...], np.ndarray]
    global_appearance: np.ndarray

    def __post_init__(self):
        pa = _freeze(self.person_appearance)
        if pa.ndim != 2 or pa.shape[0] < 1:
            raise ValueError("person_appearance must be a non-empty (N, d_a) matrix")
        ga = _freeze(self.global_appearance)
        d_a = pa.shape[1]
        if ga.shape != (d_a,):
            raise ValueError("global feature dimension differs from person features")
        edge = {tuple(k): _freeze(v) for k, v in self.edge_spatial.items()}
        sub_a = {tuple(k): _freeze(v) for k, v in self.subgroup_appearance.items()}
        sub_s = {tuple(k): _freeze(v) for k, v in self.subgroup_spatial.items()}
        dims_s = {v.shape for v in edge.values()} | {v.shape for v in sub_s.values()}
        if len(dims_s) > 1:
            raise ValueError(f"spatial vectors disagree on dimension: {dims_s}")
        for v in sub_a.values():
            if v.shape != (d_a,):
                raise ValueError("subgroup appearance dimension differs from person features")
        for arr in [pa, ga, *edge.values(), *sub_a.values(), *sub_s.values()]:
            if not np.all(np.isfinite(arr)):
                raise ValueError("feature vectors must be finite")
        object.__setattr__(self, "person_appearance", pa)
        object.__setattr__(self, "global_appearance", ga)
        object.__setattr__(self, "edge_spatial", edge)
        object.__setattr__(self, "subgroup_appearance", sub_a)
        object.__setattr__(self, "subgroup_spatial", sub_s)

    @property
    def n_persons(self) -> int:
        return int(self.person_appearance.shape[0])

    @property
    def appearance_dim(self) -> int:
        return int(self.person_appearance.shape[1])

    @cached_property
    def pair_keys(self) -> tuple[tuple[int, int], ...]:
        return tuple(itertools.combinations(range(self.n_persons), 2))

    @cached_property
    def triple_keys(self) -> tuple[tuple[int, int, int], ...]:
        return tuple(itertools.combinations(range(self.n_persons), 3))

    @cached_property
    def pair_features(self) -> np.ndarray:
        """(C(N,2), d_a + d_s) concatenated [appearance, spatial] per pair."""
        rows = [
            np.concatenate([self.subgroup_appearance[k], self.subgroup_spatial[k]])
            for k in self.pair_keys
        ]
        return np.asarray(rows) if rows else np.zeros((0, self.appearance_dim))

    @cached_property
    def triple_features(self) -> np.ndarray:
        rows = [
            np.concatenate([self.subgroup_appearance[k], self.subgroup_spatial[k]])
            for k in self.triple_keys
        ]
        return np.asarray(rows) if rows else np.zeros((0, self.appearance_dim))

    @cached_property
    def pair_row(self) -> dict[tuple[int, int], int]:
        return {k: t for t, k in enumerate(self.pair_keys)}

    @cached_property
    def triple_row(self) -> dict[tuple[int, int, int], int]:
        return {k: t for t, k in enumerate(self.triple_keys)}


@dataclass(frozen=True)
class MatchCandidate:
    """A candidate match between probe person i and gallery person j."""

    probe_person: int
    gallery_person: int

    def __post_init__(self):
        if self.probe_person < 0 or self.gallery_person < 0:
            raise ValueError("person indices must be non-negative")

    def as_pair(self) -> tuple[int, int]:
        return (self.probe_person, self.gallery_person)


@dataclass(frozen=True)
class Mapping:
    """A one-to-one set of match candidates.

    No probe index and no gallery index appears twice.  Pairs are stored
    sorted by (probe, gallery) so equal mappings compare equal.
    """

    pairs: tuple[MatchCandidate, ...] = field(default_factory=tuple)

    def __post_init__(self):
        ordered = tuple(sorted(self.pairs, key=lambda c: c.as_pair()))
        probes = [c.probe_person for c in ordered]
        galleries = [c.gallery_person for c in ordered]
        if len(set(probes)) != len(probes) or len(set(galleries)) != len(galleries):
            raise ValueError(f"mapping is not one-to-one: {[c.as_pair() for c in ordered]}")
        object.__setattr__(self, "pairs", ordered)

    @classmethod
    def from_pairs(cls, pairs) -> "Mapping":
        return cls(tuple(MatchCandidate(int(i), int(j)) for i, j in pairs))

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[MatchCandidate]:
        return iter(self.pairs)

    def probe_to_gallery(self) -> dict[int, int]:
        return {c.probe_person: c.gallery_person for c in self.pairs}

    def matched_probes(self) -> frozenset[int]:
        return frozenset(c.probe_person for c in self.pairs)

    def matched_galleries(self) -> frozenset[int]:
        return frozenset(c.gallery_person for c in self.pairs)
