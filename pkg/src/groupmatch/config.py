"""Tunable configuration for every stage, plus a key/value config file parser.

The config file is plain text, one ``section.key = value`` per line, ``#``
starts a comment.  CLI flags override file values.  Example::

    # solver tuning
    solver.jump_prob = 0.25
    solver.orders = fine,medium,coarse,global
    importance.max_iter = 5
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError

ORDER_NAMES = ("fine", "medium", "coarse", "global")


@dataclass(frozen=True)
class SpatialHistogramConfig:
    """Binning of the pairwise spatial-relation descriptor.

    Distances are log of center distance normalized by the image diagonal,
    clamped into [log d_min, log d_max]; angles live on [0, 2pi) with
    circular wrap-around smoothing.
    """

    n_dist_bins: int = 10
    n_angle_bins: int = 9
    sigma_dist: float = 1.0  # in bins
    sigma_angle: float = 1.0  # in bins
    d_min: float = 0.01
    d_max: float = math.sqrt(2.0)

    def __post_init__(self):
        if self.n_dist_bins < 2 or self.n_angle_bins < 2:
            raise ValidationError("invalid-config", "histogram needs at least 2 bins")
        if self.sigma_dist <= 0 or self.sigma_angle <= 0:
            raise ValidationError("invalid-config", "histogram sigmas must be positive")
        if self.d_min <= 0 or self.d_min >= self.d_max:
            raise ValidationError("invalid-config", "need 0 < d_min < d_max")

    @property
    def dist_range(self) -> tuple[float, float]:
        return (math.log(self.d_min), math.log(self.d_max))

    @property
    def dim(self) -> int:
        return self.n_dist_bins + self.n_angle_bins


@dataclass(frozen=True)
class DescriptorConfig:
    """Stripe appearance descriptor: resize, stripe count, histogram bins."""

    n_stripes: int = 18
    resize_h: int = 128
    resize_w: int = 48
    color_bins: int = 16
    grad_bins: int = 8

    def __post_init__(self):
        if self.n_stripes < 1 or self.n_stripes > self.resize_h:
            raise ValidationError("invalid-config", "need 1 <= n_stripes <= resize_h")
        if self.color_bins < 2 or self.grad_bins < 2:
            raise ValidationError("invalid-config", "histogram bins must be >= 2")

    @property
    def dim(self) -> int:
        # 3 color spaces x 3 channels x color_bins, plus one gradient histogram
        return self.n_stripes * (9 * self.color_bins + self.grad_bins)


@dataclass(frozen=True)
class ImportanceConfig:
    """Importance weighting: density neighborhood and iteration control."""

    k_density: int = 2
    max_iter: int = 5
    tol: float = 1e-3
    eps_density: float = 1e-9  # floor on density ratios
    eps_dist: float = 1e-6  # floor in the pair-stability inverse distance

    def __post_init__(self):
        if self.k_density < 1:
            raise ValidationError("invalid-config", "k_density must be >= 1")
        if self.max_iter < 0:
            raise ValidationError("invalid-config", "max_iter must be >= 0")


@dataclass(frozen=True)
class SolverConfig:
    """Association graph construction and random-walk solver parameters."""

    prune_k: int = 5
    jump_prob: float = 0.2
    max_rw_iters: int = 300
    rw_tol: float = 1e-6
    eps_dist: float = 1e-6  # distance floor in reciprocal-distance scores
    sinkhorn_iters: int = 10
    lambda_r: float = 0.5  # unmatched-object balance in the fused score
    # matched objects whose plain feature similarity 1/d falls below this are
    # demoted into the unmatched sets; 0 keeps every mapped object
    reliability_threshold: float = 0.8
    orders: tuple[str, ...] = ORDER_NAMES
    use_inter_order: bool = True
    # optional per-order balance multipliers (unit by default)
    scale_fine: float = 1.0
    scale_medium: float = 1.0
    scale_coarse: float = 1.0
    scale_global: float = 1.0
    scale_inter: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.jump_prob <= 1.0:
            raise ValidationError("invalid-config", "jump_prob must be in [0, 1]")
        if self.prune_k < 1:
            raise ValidationError("invalid-config", "prune_k must be >= 1")
        orders = tuple(self.orders)
        for o in orders:
            if o not in ORDER_NAMES:
                raise ValidationError("invalid-config", f"unknown order {o!r}")
        if "fine" not in orders:
            raise ValidationError("invalid-config", "the fine order cannot be disabled")
        object.__setattr__(self, "orders", orders)

    def order_enabled(self, name: str) -> bool:
        return name in self.orders


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation protocol: random 50/50 splits and CMC ranks."""

    n_splits: int = 5
    seed: int = 0
    ranks: tuple[int, ...] = (1, 5, 10, 15, 20)

    def __post_init__(self):
        if self.n_splits < 1:
            raise ValidationError("invalid-config", "n_splits must be >= 1")
        if not self.ranks or any(r < 1 for r in self.ranks):
            raise ValidationError("invalid-config", "ranks must be positive")
        object.__setattr__(self, "ranks", tuple(self.ranks))


@dataclass(frozen=True)
class EngineConfig:
    """Aggregate of all module configs."""

    spatial: SpatialHistogramConfig = field(default_factory=SpatialHistogramConfig)
    descriptor: DescriptorConfig = field(default_factory=DescriptorConfig)
    importance: ImportanceConfig = field(default_factory=ImportanceConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


_SECTIONS = {
    "spatial": SpatialHistogramConfig,
    "descriptor": DescriptorConfig,
    "importance": ImportanceConfig,
    "solver": SolverConfig,
    "eval": EvalConfig,
}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``section.key = value`` lines into a flat dict of strings."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError("invalid-config", f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _coerce(field_obj: dataclasses.Field, raw: str):
    tp = field_obj.type
    if tp.startswith("tuple[str") or field_obj.name == "orders":
        return tuple(s.strip() for s in raw.split(",") if s.strip())
    if tp.startswith("tuple[int"):
        return tuple(int(s) for s in raw.split(",") if s.strip())
    if tp == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValidationError("invalid-config", f"cannot parse bool from {raw!r}")
    if tp == "int":
        return int(raw)
    if tp == "float":
        return float(raw)
    return raw


def engine_config_from_mapping(values: dict[str, str]) -> EngineConfig:
    """Build an EngineConfig from flat ``section.key`` -> string values."""
    per_section: dict[str, dict] = {name: {} for name in _SECTIONS}
    for key, raw in values.items():
        if "." not in key:
            raise ValidationError("invalid-config", f"key {key!r} is missing its section prefix")
        section, name = key.split(".", 1)
        cls = _SECTIONS.get(section)
        if cls is None:
            raise ValidationError("invalid-config", f"unknown config section {section!r}")
        fields = {f.name: f for f in dataclasses.fields(cls)}
        if name not in fields:
            raise ValidationError("invalid-config", f"unknown key {key!r}")
        try:
            per_section[section][name] = _coerce(fields[name], raw)
        except ValidationError:
            raise
        except ValueError as exc:
            raise ValidationError("invalid-config", f"{key}: {exc}") from exc
    return EngineConfig(**{name: cls(**per_section[name]) for name, cls in _SECTIONS.items()})


def load_engine_config(path: str | Path | None, overrides: dict[str, str] | None = None) -> EngineConfig:
    """Load a config file (optional) and apply flat overrides on top."""
    values: dict[str, str] = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ValidationError("invalid-config", f"config file not found: {p}")
        values.update(parse_config_text(p.read_text()))
    if overrides:
        values.update({k: str(v) for k, v in overrides.items()})
    return engine_config_from_mapping(values)
