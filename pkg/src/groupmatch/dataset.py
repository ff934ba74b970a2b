"""Dataset schema, loading and validation.

A dataset is one JSON document::

    {
      "version": 1,
      "cameras": ["A", "B"],
      "features": "features.json",        # optional default feature file
      "images": [
        {"id": "g0_a", "camera": "A", "group_id": 0, "path": null,
         "image_size": [1000, 1000],
         "boxes": [{"x": 10, "y": 20, "w": 50, "h": 120}, ...]},
        ...
      ]
    }

Group identity follows the cross-camera membership-overlap convention of
the evaluation protocol: images sharing a ``group_id`` are views of the
same group.  Groups present in a single camera load fine but are flagged
non-evaluable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

from .errors import ValidationError
from .model import BoundingBox, GroupObservation

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Dataset:
    version: int
    cameras: tuple[str, ...]
    images: tuple[GroupObservation, ...]
    feature_file: str | None = None

    def __post_init__(self):
        seen = set()
        for obs in self.images:
            if obs.image_id in seen:
                raise ValidationError("invalid-dataset", f"duplicate image id {obs.image_id!r}")
            seen.add(obs.image_id)
            if obs.camera_id not in self.cameras:
                raise ValidationError(
                    "invalid-dataset", f"image {obs.image_id!r} uses undeclared camera {obs.camera_id!r}"
                )

    @cached_property
    def by_id(self) -> dict[str, GroupObservation]:
        return {obs.image_id: obs for obs in self.images}

    def camera_images(self, camera: str) -> list[GroupObservation]:
        return [obs for obs in self.images if obs.camera_id == camera]

    @cached_property
    def evaluable_group_ids(self) -> tuple[int, ...]:
        """Groups observed in at least two cameras."""
        cams: dict[int, set[str]] = {}
        for obs in self.images:
            cams.setdefault(obs.group_id, set()).add(obs.camera_id)
        return tuple(sorted(g for g, c in cams.items() if len(c) >= 2))

    @cached_property
    def non_evaluable_group_ids(self) -> tuple[int, ...]:
        evaluable = set(self.evaluable_group_ids)
        return tuple(sorted({obs.group_id for obs in self.images} - evaluable))


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ValidationError("invalid-dataset", f"{where}.{key}: missing field")
    return doc[key]


def _parse_observation(entry: dict, idx: int) -> GroupObservation:
    where = f"images[{idx}]"
    image_id = _require(entry, "id", where)
    camera = _require(entry, "camera", where)
    group_id = _require(entry, "group_id", where)
    size = _require(entry, "image_size", where)
    raw_boxes = _require(entry, "boxes", where)
    if not isinstance(raw_boxes, list) or not raw_boxes:
        raise ValidationError("invalid-dataset", f"{where}.boxes: must be a non-empty list")
    if not isinstance(size, (list, tuple)) or len(size) != 2:
        raise ValidationError("invalid-dataset", f"{where}.image_size: expected [width, height]")
    boxes = []
    for b_idx, b in enumerate(raw_boxes):
        try:
            boxes.append(
                BoundingBox(float(b["x"]), float(b["y"]), float(b["w"]), float(b["h"]))
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(
                "invalid-dataset", f"{where}.boxes[{b_idx}]: missing or bad field ({exc})"
            ) from exc
        except ValueError as exc:
            raise ValidationError("invalid-dataset", f"{where}.boxes[{b_idx}]: {exc}") from exc
    try:
        return GroupObservation(
            image_id=str(image_id),
            camera_id=str(camera),
            group_id=int(group_id),
            boxes=tuple(boxes),
            image_size=(int(size[0]), int(size[1])),
            image_path=entry.get("path"),
        )
    except ValueError as exc:
        raise ValidationError("invalid-dataset", f"{where}: {exc}") from exc


def load_dataset(path: str | Path, require_images: bool = False) -> Dataset:
    """Load and validate a dataset document.

    ``require_images`` additionally checks that every observation has an
    existing image file (descriptor mode).
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError("invalid-dataset", f"dataset file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError("invalid-dataset", f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ValidationError("invalid-dataset", "top level must be an object")
    version = _require(doc, "version", "$")
    cameras = _require(doc, "cameras", "$")
    images = _require(doc, "images", "$")
    if not isinstance(cameras, list) or not cameras:
        raise ValidationError("invalid-dataset", "$.cameras: must be a non-empty list")
    if not isinstance(images, list):
        raise ValidationError("invalid-dataset", "$.images: must be a list")
    observations = [_parse_observation(entry, i) for i, entry in enumerate(images)]
    ds = Dataset(
        version=int(version),
        cameras=tuple(str(c) for c in cameras),
        images=tuple(observations),
        feature_file=doc.get("features"),
    )
    if require_images:
        for obs in ds.images:
            if obs.image_path is None or not Path(obs.image_path).exists():
                raise ValidationError(
                    "missing-image", f"image {obs.image_id!r}: no readable file at {obs.image_path!r}"
                )
    return ds


def dataset_to_document(ds: Dataset) -> dict:
    return {
        "version": ds.version,
        "cameras": list(ds.cameras),
        **({"features": ds.feature_file} if ds.feature_file else {}),
        "images": [
            {
                "id": obs.image_id,
                "camera": obs.camera_id,
                "group_id": obs.group_id,
                "path": obs.image_path,
                "image_size": list(obs.image_size),
                "boxes": [{"x": b.x, "y": b.y, "w": b.w, "h": b.h} for b in obs.boxes],
            }
            for obs in ds.images
        ],
    }


def save_dataset(ds: Dataset, path: str | Path) -> None:
    Path(path).write_text(json.dumps(dataset_to_document(ds), indent=1, sort_keys=True))
