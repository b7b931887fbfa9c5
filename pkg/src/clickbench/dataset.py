"""Click-dataset ingestion: CSV records, validity rules, manifests.

The click CSV schema has one row per collected click:

    dataset,image_stem,object_stem,model_type,click_type,full_stem,device,x,y,w,h

``model_type`` is empty for first-round clicks; ``click_type`` is one
of first/fp/fn; ``device`` is pc or mobile; (x, y) are pixel
coordinates inside the (w, h) presentation resolution recorded per
row.  A click is valid when it lands inside the object mask or within
one click radius (1% of the image diagonal) of it; a batch of 10
clicks is valid when at least 7 of them are.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clicksim import click_radius
from .imaging import as_mask, distance_to_foreground

CSV_COLUMNS = (
    "dataset",
    "image_stem",
    "object_stem",
    "model_type",
    "click_type",
    "full_stem",
    "device",
    "x",
    "y",
    "w",
    "h",
)

CLICK_TYPES = ("first", "fp", "fn")
DEVICES = ("pc", "mobile")


class ClicksFormatError(ValueError):
    """Schema or value error in a clicks CSV; carries the 1-based row."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(message if row is None else f"row {row}: {message}")


@dataclass(frozen=True)
class ClickRecord:
    dataset: str
    image_stem: str
    object_stem: str
    model_type: str
    click_type: str
    full_stem: str
    device: str
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.click_type not in CLICK_TYPES:
            raise ValueError(f"click_type must be one of {CLICK_TYPES}, got {self.click_type!r}")
        if self.device not in DEVICES:
            raise ValueError(f"device must be one of {DEVICES}, got {self.device!r}")
        if self.click_type == "first" and self.model_type:
            raise ValueError("first-round clicks must have an empty model_type")
        if self.w < 1 or self.h < 1:
            raise ValueError(f"image dims must be >= 1, got {self.w}x{self.h}")
        if not (0 <= self.x < self.w and 0 <= self.y < self.h):
            raise ValueError(
                f"click ({self.x}, {self.y}) outside image dims {self.w}x{self.h}"
            )


def parse_clicks_csv(path) -> list[ClickRecord]:
    """Parse a clicks CSV with strict schema checks.

    All schema columns must be present (any column order); unknown
    columns, bad integers and out-of-range coordinates raise
    :class:`ClicksFormatError` naming the offending 1-based row.
    """
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ClicksFormatError("empty file: missing header") from None
        missing = set(CSV_COLUMNS) - set(header)
        extra = set(header) - set(CSV_COLUMNS)
        if missing or extra:
            raise ClicksFormatError(
                f"bad header: missing {sorted(missing)}, unknown {sorted(extra)}", row=1
            )
        col = {name: header.index(name) for name in CSV_COLUMNS}
        records = []
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ClicksFormatError(
                    f"expected {len(header)} fields, got {len(row)}", row=row_no
                )
            values = {name: row[col[name]] for name in CSV_COLUMNS}
            try:
                record = ClickRecord(
                    dataset=values["dataset"],
                    image_stem=values["image_stem"],
                    object_stem=values["object_stem"],
                    model_type=values["model_type"],
                    click_type=values["click_type"],
                    full_stem=values["full_stem"],
                    device=values["device"],
                    x=int(values["x"]),
                    y=int(values["y"]),
                    w=int(values["w"]),
                    h=int(values["h"]),
                )
            except ValueError as exc:
                raise ClicksFormatError(str(exc), row=row_no) from None
            records.append(record)
    return records


def write_clicks_csv(records, path_or_buf) -> None:
    """Serialize records in the canonical column order (lossless inverse)."""

    def _write(f):
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow([getattr(r, name) for name in CSV_COLUMNS])

    if hasattr(path_or_buf, "write"):
        _write(path_or_buf)
    else:
        with open(path_or_buf, "w", newline="", encoding="utf-8") as f:
            _write(f)


def rescale_point(
    x: int, y: int, src_dims: tuple[int, int], dst_dims: tuple[int, int]
) -> tuple[int, int]:
    """Nearest-pixel mapping of (x, y) from (w, h) ``src_dims`` to ``dst_dims``."""
    sw, sh = src_dims
    dw, dh = dst_dims
    nx = int(np.clip(np.rint((x + 0.5) * dw / sw - 0.5), 0, dw - 1))
    ny = int(np.clip(np.rint((y + 0.5) * dh / sh - 0.5), 0, dh - 1))
    return nx, ny


def mask_distance_field(mask) -> np.ndarray:
    """Distance of every pixel to the mask, for batched click validation."""
    return distance_to_foreground(mask)


def validate_click(click, mask, diag_fraction: float = 0.01, dist_field=None) -> bool:
    """True when the click is inside the mask or within one click radius of it.

    ``click`` is a ClickRecord (coordinates rescaled from its recorded
    (w, h) to the mask resolution by nearest-pixel mapping) or a plain
    (x, y) already in mask coordinates.  The radius is ``diag_fraction``
    of the mask-resolution image diagonal; the comparison is inclusive.
    Pass a precomputed ``dist_field`` (see :func:`mask_distance_field`)
    to validate many clicks against one mask cheaply.
    """
    mask = as_mask(mask)
    mh, mw = mask.shape
    if isinstance(click, ClickRecord):
        x, y = rescale_point(click.x, click.y, (click.w, click.h), (mw, mh))
    else:
        x, y = int(click[0]), int(click[1])
    if not (0 <= x < mw and 0 <= y < mh):
        return False
    if mask[y, x]:
        return True
    if dist_field is None:
        dist_field = distance_to_foreground(mask)
    return bool(dist_field[y, x] <= click_radius(mw, mh, diag_fraction))


def validate_batch(valid_flags) -> bool:
    """True when at least 7 of the batch's exactly 10 clicks are valid."""
    flags = list(valid_flags)
    if len(flags) != 10:
        raise ValueError(f"a batch has exactly 10 clicks, got {len(flags)}")
    return sum(bool(v) for v in flags) >= 7


def clicks_by_instance(
    records,
    device: str | None = None,
    click_type: str | None = None,
    model_type: str | None = None,
) -> dict[str, list[ClickRecord]]:
    """Group records by full_stem after optional exact-match filters.

    Ordering is stable: groups appear in first-seen order and keep the
    input order of their rows, so grouping then flattening reproduces
    the filtered input.
    """
    grouped: dict[str, list[ClickRecord]] = {}
    for r in records:
        if device is not None and r.device != device:
            continue
        if click_type is not None and r.click_type != click_type:
            continue
        if model_type is not None and r.model_type != model_type:
            continue
        grouped.setdefault(r.full_stem, []).append(r)
    return grouped


# ---------------------------------------------------------------------------
# manifests


class ManifestError(ValueError):
    """Structural problem in a dataset manifest."""


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    gt_mask: Path
    image: Path | None = None
    prev_masks: dict = field(default_factory=dict)
    description: str | None = None


def load_manifest(path) -> list[ManifestEntry]:
    """Load a dataset manifest (JSON) and check every referenced file.

    Layout: ``{"instances": [{"id", "gt_mask", "image"?, "prev_masks"?,
    "description"?}, ...]}`` with paths relative to the manifest file.
    Missing files and duplicate ids raise :class:`ManifestError`.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("instances"), list):
        raise ManifestError(f"{path}: manifest must be an object with an 'instances' list")
    root = path.parent
    entries = []
    seen = set()
    for i, item in enumerate(doc["instances"]):
        if not isinstance(item, dict) or "id" not in item or "gt_mask" not in item:
            raise ManifestError(f"{path}: instance #{i} needs 'id' and 'gt_mask'")
        iid = str(item["id"])
        if iid in seen:
            raise ManifestError(f"{path}: duplicate instance id {iid!r}")
        seen.add(iid)
        gt_mask = _resolve(root, item["gt_mask"], path, iid)
        image = _resolve(root, item["image"], path, iid) if item.get("image") else None
        prev_masks = {
            str(model): _resolve(root, p, path, iid)
            for model, p in (item.get("prev_masks") or {}).items()
        }
        entries.append(
            ManifestEntry(
                id=iid,
                gt_mask=gt_mask,
                image=image,
                prev_masks=prev_masks,
                description=item.get("description"),
            )
        )
    return entries


def _resolve(root: Path, rel, manifest: Path, iid: str) -> Path:
    p = root / rel
    if not p.is_file():
        raise ManifestError(f"{manifest}: instance {iid!r} references missing file {p}")
    return p
