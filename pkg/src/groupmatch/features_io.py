"""Reading and writing precomputed feature files.

Two on-disk forms carry the same content:

* text: a single JSON document
  ``{"version": 1, "dim": d, "images": {id: {"global": [...], "persons": [[...], ...]}}}``
  with an optional per-image ``"edges": {"i-j": [...]}`` map of spatial
  vectors keyed by 0-based person index pairs;
* binary: magic ``GMF1`` then little-endian u32 version, u32 dim,
  u32 image count, and per image a u16-length utf-8 id, u32 person count,
  the global vector and the person matrix as little-endian float32.

Person vectors are stored in box order.  Loading attaches edge and subgroup
features computed from the observation geometry unless the file supplies
per-edge vectors.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import SpatialHistogramConfig
from .descriptors import build_bundle
from .errors import ValidationError
from .model import FeatureBundle, GroupObservation

_MAGIC = b"GMF1"
FORMAT_VERSION = 1


def save_features(
    path: str | Path,
    records: dict[str, dict],
    dim: int,
    fmt: str | None = None,
) -> None:
    """Write feature records; ``fmt`` is "text", "binary" or None (by suffix).

    ``records`` maps image id to ``{"global": vector, "persons": matrix}``
    plus an optional ``"edges"`` dict.
    """
    path = Path(path)
    if fmt is None:
        fmt = "text" if path.suffix == ".json" else "binary"
    if fmt == "text":
        doc = {"version": FORMAT_VERSION, "dim": int(dim), "images": {}}
        for image_id in records:
            rec = records[image_id]
            entry = {
                "global": [float(x) for x in np.asarray(rec["global"]).ravel()],
                "persons": [[float(x) for x in row] for row in np.asarray(rec["persons"])],
            }
            if "edges" in rec and rec["edges"]:
                entry["edges"] = {
                    f"{i}-{j}": [float(x) for x in vec] for (i, j), vec in sorted(rec["edges"].items())
                }
            doc["images"][image_id] = entry
        path.write_text(json.dumps(doc, indent=1, sort_keys=True))
        return
    if fmt != "binary":
        raise ValidationError("invalid-features", f"unknown feature format {fmt!r}")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, int(dim), len(records)))
        for image_id in records:
            rec = records[image_id]
            raw = image_id.encode("utf-8")
            persons = np.asarray(rec["persons"], dtype="<f4")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", persons.shape[0]))
            fh.write(np.asarray(rec["global"], dtype="<f4").tobytes())
            fh.write(persons.tobytes())


def load_features(path: str | Path) -> tuple[int, dict[str, dict]]:
    """Read a feature file (either form); returns (dim, records)."""
    path = Path(path)
    if not path.exists():
        raise ValidationError("missing-features", f"feature file not found: {path}")
    blob = path.read_bytes()
    if blob[:4] == _MAGIC:
        return _load_binary(blob, path)
    try:
        doc = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError("invalid-features", f"{path}: {exc}") from exc
    return _load_text(doc, path)


def _load_text(doc: dict, path: Path) -> tuple[int, dict[str, dict]]:
    if not isinstance(doc, dict) or "dim" not in doc or "images" not in doc:
        raise ValidationError("invalid-features", f"{path}: missing dim/images fields")
    dim = int(doc["dim"])
    records: dict[str, dict] = {}
    for image_id, entry in doc["images"].items():
        rec = {
            "global": np.asarray(entry["global"], dtype=np.float64),
            "persons": np.asarray(entry["persons"], dtype=np.float64),
        }
        if rec["persons"].ndim == 1:  # single person stored as a flat row
            rec["persons"] = rec["persons"].reshape(1, -1)
        if "edges" in entry:
            edges = {}
            for key, vec in entry["edges"].items():
                i, j = (int(s) for s in key.split("-"))
                edges[(min(i, j), max(i, j))] = np.asarray(vec, dtype=np.float64)
            rec["edges"] = edges
        records[image_id] = rec
    return dim, records


def _load_binary(blob: bytes, path: Path) -> tuple[int, dict[str, dict]]:
    off = 4
    try:
        version, dim, count = struct.unpack_from("<III", blob, off)
        off += 12
        records: dict[str, dict] = {}
        for _ in range(count):
            (id_len,) = struct.unpack_from("<H", blob, off)
            off += 2
            image_id = blob[off : off + id_len].decode("utf-8")
            off += id_len
            (n_persons,) = struct.unpack_from("<I", blob, off)
            off += 4
            glob = np.frombuffer(blob, dtype="<f4", count=dim, offset=off).astype(np.float64)
            off += 4 * dim
            persons = (
                np.frombuffer(blob, dtype="<f4", count=n_persons * dim, offset=off)
                .astype(np.float64)
                .reshape(n_persons, dim)
            )
            off += 4 * n_persons * dim
            records[image_id] = {"global": glob, "persons": persons}
    except (struct.error, ValueError) as exc:
        raise ValidationError("invalid-features", f"{path}: truncated binary file") from exc
    if version != FORMAT_VERSION:
        raise ValidationError("invalid-features", f"{path}: unsupported version {version}")
    return dim, records


def bundles_from_records(
    observations: list[GroupObservation],
    dim: int,
    records: dict[str, dict],
    spatial_cfg: SpatialHistogramConfig | None = None,
) -> dict[str, FeatureBundle]:
    """Attach file records to observations, building full bundles.

    Raises ``missing-features`` when an observation has no record or the
    person count disagrees with the box count, and ``inconsistent-feature-dim``
    when any vector disagrees with the declared dimension.
    """
    bundles: dict[str, FeatureBundle] = {}
    for obs in observations:
        rec = records.get(obs.image_id)
        if rec is None:
            raise ValidationError("missing-features", f"no features for image {obs.image_id!r}")
        persons = np.asarray(rec["persons"], dtype=np.float64)
        glob = np.asarray(rec["global"], dtype=np.float64)
        if persons.ndim != 2 or persons.shape[1] != dim or glob.shape != (dim,):
            raise ValidationError(
                "inconsistent-feature-dim",
                f"image {obs.image_id!r}: vectors disagree with declared dim {dim}",
            )
        if persons.shape[0] != obs.n_persons:
            raise ValidationError(
                "missing-features",
                f"image {obs.image_id!r}: {persons.shape[0]} person vectors for {obs.n_persons} boxes",
            )
        bundles[obs.image_id] = build_bundle(
            obs, persons, glob, spatial_cfg, edge_vectors=rec.get("edges")
        )
    return bundles


def load_external_features(
    path: str | Path,
    observations: list[GroupObservation],
    spatial_cfg: SpatialHistogramConfig | None = None,
) -> dict[str, FeatureBundle]:
    """Load a feature file and build one bundle per observation."""
    dim, records = load_features(path)
    return bundles_from_records(observations, dim, records, spatial_cfg)
