"""Hand-crafted appearance and spatial-relation descriptors.

Appearance: a crop is resized to a fixed resolution, cut into equal
horizontal stripes, and each stripe is described by unit-sum histograms of
RGB, HSV and LAB channels plus one gradient-orientation histogram.

Spatial relation: the edge between two people is a smoothed log-distance
histogram concatenated with a circular angle histogram; the edge direction
is canonicalized so the descriptor is symmetric in its arguments, and the
distance is normalized by the image diagonal so the descriptor is invariant
to a common rescaling of image and boxes.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .config import DescriptorConfig, SpatialHistogramConfig
from .errors import ValidationError
from .model import BoundingBox, FeatureBundle, GranularObject, GroupObservation

_TWO_PI = 2.0 * math.pi


def log_distance_histogram(rho: float, cfg: SpatialHistogramConfig) -> np.ndarray:
    """Discrete Gaussian over distance bins, centered on the bin holding rho.

    rho is a log-distance, clamped into cfg.dist_range before binning; the
    result is normalized to unit sum.
    """
    lo, hi = cfg.dist_range
    n = cfg.n_dist_bins
    rho = min(max(float(rho), lo), hi)
    width = (hi - lo) / n
    m = min(int((rho - lo) / width), n - 1)
    k = np.arange(n)
    vals = np.exp(-((k - m) ** 2) / (2.0 * cfg.sigma_dist**2))
    return vals / vals.sum()


def angle_histogram(theta: float, cfg: SpatialHistogramConfig) -> np.ndarray:
    """Circular discrete Gaussian over angle bins.

    The window is wrapped by adding copies centered one full turn away on
    both sides, so the histogram is shift-equivariant on the ring.
    """
    n = cfg.n_angle_bins
    theta = float(theta) % _TWO_PI
    width = _TWO_PI / n
    m = min(int(theta / width), n - 1)
    d = np.arange(n) - m
    s2 = 2.0 * cfg.sigma_angle**2
    vals = np.exp(-(d**2) / s2) + np.exp(-((d - n) ** 2) / s2) + np.exp(-((d + n) ** 2) / s2)
    return vals / vals.sum()


def edge_spatial_feature(
    b_i: BoundingBox,
    b_j: BoundingBox,
    image_size: tuple[int, int],
    cfg: SpatialHistogramConfig,
) -> np.ndarray:
    """Spatial descriptor of the edge between two boxes: [distance, angle].

    Direction runs from the leftmost center to the rightmost (topmost first
    on ties), which makes the descriptor symmetric in (b_i, b_j).
    Coincident centers clamp to the lowest distance bin with angle 0.
    """
    ci = b_i.center
    cj = b_j.center
    if (ci[0], ci[1]) <= (cj[0], cj[1]):
        src, dst = ci, cj
    else:
        src, dst = cj, ci
    dx = dst[0] - src[0]
    dy = dst[1] - src[1]
    diag = math.hypot(image_size[0], image_size[1])
    dist = math.hypot(dx, dy) / diag
    if dist <= 0.0:
        rho = math.log(cfg.d_min)
        theta = 0.0
    else:
        rho = math.log(dist)
        theta = math.atan2(dy, dx)
    return np.concatenate([log_distance_histogram(rho, cfg), angle_histogram(theta, cfg)])


def _rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    delta = maxc - minc
    safe = np.where(delta == 0, 1.0, delta)
    h = np.zeros_like(maxc)
    h = np.where(maxc == r, ((g - b) / safe) % 6.0, h)
    h = np.where((maxc == g) & (maxc != r), (b - r) / safe + 2.0, h)
    h = np.where((maxc == b) & (maxc != r) & (maxc != g), (r - g) / safe + 4.0, h)
    h = np.where(delta == 0, 0.0, h) / 6.0
    s = np.where(maxc == 0, 0.0, delta / np.where(maxc == 0, 1.0, maxc))
    return np.stack([h, s, maxc], axis=-1)


def _rgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    lin = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    r, g, b = lin[..., 0], lin[..., 1], lin[..., 2]
    x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047
    y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b
    z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883
    eps = (6.0 / 29.0) ** 3

    def f(t):
        return np.where(t > eps, np.cbrt(t), t / (3.0 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)

    fx, fy, fz = f(x), f(y), f(z)
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


# channel value ranges used for histogram binning
_CHANNEL_RANGES = [
    (0.0, 1.0), (0.0, 1.0), (0.0, 1.0),          # R, G, B
    (0.0, 1.0), (0.0, 1.0), (0.0, 1.0),          # H, S, V
    (0.0, 100.0), (-128.0, 128.0), (-128.0, 128.0),  # L, a, b
]


def _resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = img.shape[:2]
    ys = (np.arange(out_h) + 0.5) * h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * w / out_w - 0.5
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    top = img[y0c][:, x0c] * (1 - wx) + img[y0c][:, x1c] * wx
    bot = img[y1c][:, x0c] * (1 - wx) + img[y1c][:, x1c] * wx
    return top * (1 - wy) + bot * wy


def _as_float_rgb(crop: np.ndarray) -> np.ndarray:
    arr = np.asarray(crop)
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    if arr.ndim != 3 or arr.shape[2] < 3:
        raise ValidationError("empty-crop", f"expected HxWx3 pixels, got shape {arr.shape}")
    arr = arr[..., :3].astype(np.float64)
    if arr.max(initial=0.0) > 1.0:
        arr = arr / 255.0
    return np.clip(arr, 0.0, 1.0)


def stripe_appearance_feature(
    crop: np.ndarray,
    n_stripes: int | None = None,
    cfg: DescriptorConfig | None = None,
) -> np.ndarray:
    """Striped color + gradient histogram descriptor of one person crop.

    Output dimension: n_stripes * (9 color histograms * color_bins + grad_bins);
    every histogram sums to one.
    """
    cfg = cfg or DescriptorConfig()
    if n_stripes is not None:
        cfg = DescriptorConfig(
            n_stripes=n_stripes,
            resize_h=cfg.resize_h,
            resize_w=cfg.resize_w,
            color_bins=cfg.color_bins,
            grad_bins=cfg.grad_bins,
        )
    arr = np.asarray(crop)
    if arr.size == 0:
        raise ValidationError("empty-crop", "cannot describe an empty crop")
    rgb = _as_float_rgb(arr)
    rgb = _resize_bilinear(rgb, cfg.resize_h, cfg.resize_w)

    channels = np.concatenate([rgb, _rgb_to_hsv(rgb), _rgb_to_lab(rgb)], axis=-1)
    nb = cfg.color_bins
    bin_idx = np.empty(channels.shape, dtype=np.int64)
    for c, (lo, hi) in enumerate(_CHANNEL_RANGES):
        scaled = (channels[..., c] - lo) / (hi - lo) * nb
        bin_idx[..., c] = np.clip(scaled.astype(np.int64), 0, nb - 1)

    gray = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    gy, gx = np.gradient(gray)
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), math.pi)
    grad_idx = np.clip((ang / math.pi * cfg.grad_bins).astype(np.int64), 0, cfg.grad_bins - 1)

    bounds = np.round(np.linspace(0, cfg.resize_h, cfg.n_stripes + 1)).astype(int)
    parts = []
    for s in range(cfg.n_stripes):
        rows = slice(bounds[s], bounds[s + 1])
        for c in range(9):
            counts = np.bincount(bin_idx[rows, :, c].ravel(), minlength=nb).astype(np.float64)
            parts.append(counts / counts.sum())
        w = mag[rows, :].ravel()
        if w.sum() < 1e-12:
            parts.append(np.full(cfg.grad_bins, 1.0 / cfg.grad_bins))
        else:
            gh = np.bincount(grad_idx[rows, :].ravel(), weights=w, minlength=cfg.grad_bins)
            parts.append(gh / gh.sum())
    return np.concatenate(parts)


def union_box(obs: GroupObservation) -> BoundingBox:
    x0 = min(b.x for b in obs.boxes)
    y0 = min(b.y for b in obs.boxes)
    x1 = max(b.x + b.w for b in obs.boxes)
    y1 = max(b.y + b.h for b in obs.boxes)
    return BoundingBox(x0, y0, x1 - x0, y1 - y0)


def crop_pixels(image: np.ndarray, box: BoundingBox) -> np.ndarray:
    x0 = int(math.floor(box.x))
    y0 = int(math.floor(box.y))
    x1 = max(x0 + 1, int(math.ceil(box.x + box.w)))
    y1 = max(y0 + 1, int(math.ceil(box.y + box.h)))
    return image[y0:y1, x0:x1]


def global_feature(
    image: np.ndarray,
    obs: GroupObservation,
    cfg: DescriptorConfig | None = None,
    whole_image: bool = False,
) -> np.ndarray:
    """Stripe descriptor of the union of all person boxes (or whole image)."""
    crop = image if whole_image else crop_pixels(image, union_box(obs))
    return stripe_appearance_feature(crop, cfg=cfg)


def aggregate_subgroup(
    bundle: FeatureBundle, obj: GranularObject
) -> tuple[np.ndarray, np.ndarray]:
    """Aggregate member features into subgroup features by mean pooling.

    Appearance is the element-wise mean of member vectors; spatial is the
    mean of all internal edge descriptors.  Both are invariant to member
    ordering and preserve dimensions.
    """
    if obj.size not in (2, 3):
        raise ValueError(f"subgroup aggregation needs 2 or 3 members, got {obj.size}")
    return _aggregate(bundle.person_appearance, bundle.edge_spatial, obj.members)


def _aggregate(person_appearance, edge_spatial, members):
    app = person_appearance[list(members)].mean(axis=0)
    edges = [edge_spatial[pair] for pair in itertools.combinations(sorted(members), 2)]
    return app, np.mean(edges, axis=0)


def build_bundle(
    obs: GroupObservation,
    person_appearance: np.ndarray,
    global_appearance: np.ndarray,
    spatial_cfg: SpatialHistogramConfig | None = None,
    edge_vectors: dict[tuple[int, int], np.ndarray] | None = None,
) -> FeatureBundle:
    """Assemble a full FeatureBundle from per-person and global vectors.

    Edge descriptors are computed from the boxes unless supplied explicitly;
    subgroup features are mean aggregates of their members.
    """
    spatial_cfg = spatial_cfg or SpatialHistogramConfig()
    n = obs.n_persons
    person_appearance = np.asarray(person_appearance, dtype=np.float64)
    if person_appearance.shape[0] != n:
        raise ValidationError(
            "missing-features",
            f"{obs.image_id!r}: {person_appearance.shape[0]} person vectors for {n} boxes",
        )
    edges: dict[tuple[int, int], np.ndarray] = {}
    for i, j in itertools.combinations(range(n), 2):
        if edge_vectors is not None and (i, j) in edge_vectors:
            edges[(i, j)] = np.asarray(edge_vectors[(i, j)], dtype=np.float64)
        else:
            edges[(i, j)] = edge_spatial_feature(obs.boxes[i], obs.boxes[j], obs.image_size, spatial_cfg)
    sub_a: dict[tuple[int, ...], np.ndarray] = {}
    sub_s: dict[tuple[int, ...], np.ndarray] = {}
    for size in (2, 3):
        for members in itertools.combinations(range(n), size):
            sub_a[members], sub_s[members] = _aggregate(person_appearance, edges, members)
    return FeatureBundle(
        person_appearance=person_appearance,
        edge_spatial=edges,
        subgroup_appearance=sub_a,
        subgroup_spatial=sub_s,
        global_appearance=np.asarray(global_appearance, dtype=np.float64),
    )


def compute_bundle(
    obs: GroupObservation,
    image: np.ndarray,
    desc_cfg: DescriptorConfig | None = None,
    spatial_cfg: SpatialHistogramConfig | None = None,
) -> FeatureBundle:
    """Descriptor-mode bundle: stripe features for persons and union box."""
    desc_cfg = desc_cfg or DescriptorConfig()
    persons = np.stack([
        stripe_appearance_feature(crop_pixels(image, b), cfg=desc_cfg) for b in obs.boxes
    ])
    glob = global_feature(image, obs, cfg=desc_cfg)
    return build_bundle(obs, persons, glob, spatial_cfg)
