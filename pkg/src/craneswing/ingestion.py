"""Detection datasets: CSV/JSONL loading, validation, rope-length joins, canonical saving.

Malformed rows are rejected with a reason code rather than aborting the load,
but a load fails outright once the rejected share exceeds a threshold.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Iterator

import numpy as np

from .errors import ConfigError, JoinConflictError, LoadFailureError

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "frame_id",
    "timestamp",
    "center_x",
    "center_y",
    "bbox_w",
    "bbox_h",
    "confidence",
    "rope_length_m",
)
REQUIRED = ("frame_id", "center_x", "center_y")
_FLOAT_FIELDS = ("center_x", "center_y", "bbox_w", "bbox_h", "confidence", "rope_length_m")
META_SUFFIX = ".meta.json"


@dataclass(frozen=True)
class DetectionRecord:
    """One frame's detected payload centre, in pixel coordinates."""

    frame_id: int
    center_x: float
    center_y: float
    timestamp: str | None = None
    bbox_w: float | None = None
    bbox_h: float | None = None
    confidence: float | None = None
    rope_length_m: float | None = None

    def as_row(self) -> dict[str, Any]:
        return {name: getattr(self, name) for name in CSV_COLUMNS}


@dataclass(frozen=True)
class Reject:
    row: int
    reason: str
    detail: str = ""


@dataclass(frozen=True)
class Dataset:
    records: tuple[DetectionRecord, ...]
    image_width: int
    image_height: int
    source: dict[str, Any] = field(default_factory=dict, compare=False)
    rejects: tuple[Reject, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if not (self.image_width > 0 and self.image_height > 0):
            raise ConfigError("image dimensions must be positive", width=self.image_width, height=self.image_height)
        ids = [r.frame_id for r in self.records]
        if ids != sorted(ids):
            object.__setattr__(self, "records", tuple(sorted(self.records, key=lambda r: r.frame_id)))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[DetectionRecord]:
        return iter(self.records)

    @property
    def frame_ids(self) -> np.ndarray:
        return np.fromiter((r.frame_id for r in self.records), dtype=np.int64, count=len(self.records))

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        n = len(self.records)
        x = np.fromiter((r.center_x for r in self.records), dtype=float, count=n)
        y = np.fromiter((r.center_y for r in self.records), dtype=float, count=n)
        return x, y

    def out_of_bounds(self) -> list[int]:
        """Frames whose centre falls outside the image; kept, only flagged."""
        return [
            r.frame_id
            for r in self.records
            if not (0 <= r.center_x <= self.image_width and 0 <= r.center_y <= self.image_height)
        ]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.image_width}x{self.image_height}\n".encode())
        h.update(dumps_csv(self.records).encode("utf-8"))
        return "sha256:" + h.hexdigest()


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dumps_csv(records: Iterable[DetectionRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        writer.writerow([_fmt(getattr(rec, name)) for name in CSV_COLUMNS])
    return buf.getvalue()


def dumps_jsonl(records: Iterable[DetectionRecord]) -> str:
    return "".join(json.dumps(rec.as_row(), ensure_ascii=False) + "\n" for rec in records)


def _parse_float(raw: Any, name: str) -> float | None:
    if raw is None or (isinstance(raw, str) and raw.strip() == ""):
        return None
    if isinstance(raw, bool):
        raise ValueError(f"parse:{name}")
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise ValueError(f"parse:{name}") from None
    if not math.isfinite(value):
        raise ValueError(f"nonfinite:{name}")
    return value


def _parse_frame_id(raw: Any) -> int:
    if raw is None or (isinstance(raw, str) and raw.strip() == ""):
        raise ValueError("missing:frame_id")
    if isinstance(raw, bool):
        raise ValueError("parse:frame_id")
    if isinstance(raw, int):
        return raw
    if isinstance(raw, float):
        if raw.is_integer():
            return int(raw)
        raise ValueError("parse:frame_id")
    try:
        return int(str(raw).strip())
    except ValueError:
        raise ValueError("parse:frame_id") from None


def parse_row(row: dict[str, Any]) -> DetectionRecord:
    """Validate one raw row; raises ``ValueError`` whose message is the reason code."""
    frame_id = _parse_frame_id(row.get("frame_id"))
    values: dict[str, float | None] = {}
    for name in _FLOAT_FIELDS:
        values[name] = _parse_float(row.get(name), name)
    for name in ("center_x", "center_y"):
        if values[name] is None:
            raise ValueError(f"missing:{name}")
    for name in ("bbox_w", "bbox_h"):
        if values[name] is not None and values[name] < 0:
            raise ValueError(f"range:{name}")
    conf = values["confidence"]
    if conf is not None and not 0.0 <= conf <= 1.0:
        raise ValueError("range:confidence")
    rope = values["rope_length_m"]
    if rope is not None and rope <= 0:
        raise ValueError("range:rope_length_m")
    ts = row.get("timestamp")
    ts = None if ts is None or str(ts) == "" else str(ts)
    return DetectionRecord(frame_id=frame_id, timestamp=ts, **values)


def _iter_csv(path: Path) -> Iterator[tuple[int, dict[str, Any] | None]]:
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return
        missing = [c for c in REQUIRED if c not in reader.fieldnames]
        if missing:
            raise LoadFailureError("CSV header lacks required columns", path=str(path), missing=missing)
        for row in reader:
            yield reader.line_num, row


def _iter_jsonl(path: Path) -> Iterator[tuple[int, dict[str, Any] | None]]:
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                yield lineno, None
                continue
            yield lineno, obj if isinstance(obj, dict) else None


def infer_format(path: str | Path, fmt: str | None = None) -> str:
    if fmt:
        fmt = fmt.lower()
    else:
        suffix = Path(path).suffix.lower()
        fmt = {".csv": "csv", ".jsonl": "jsonl", ".ndjson": "jsonl"}.get(suffix, "")
    if fmt not in ("csv", "jsonl"):
        raise LoadFailureError("unknown dataset format", path=str(path), format=fmt or None)
    return fmt


def read_meta(path: str | Path) -> dict[str, Any]:
    """Image-size metadata stored next to a dataset file, if any."""
    meta = Path(str(path) + META_SUFFIX)
    if not meta.exists():
        return {}
    return json.loads(meta.read_text(encoding="utf-8"))


def load_dataset(
    path: str | Path,
    fmt: str | None = None,
    *,
    image_width: int | None = None,
    image_height: int | None = None,
    max_reject_fraction: float = 0.5,
) -> Dataset:
    """Load and validate detections; bad rows go to ``Dataset.rejects``.

    Image dimensions come from the arguments, else from a ``<path>.meta.json``
    sidecar.
    """
    path = Path(path)
    fmt = infer_format(path, fmt)
    if not path.is_file():
        raise LoadFailureError("dataset file not found", path=str(path))
    if image_width is None or image_height is None:
        meta = read_meta(path)
        image_width = image_width or meta.get("image_width")
        image_height = image_height or meta.get("image_height")
    if image_width is None or image_height is None:
        raise ConfigError("image dimensions unknown for dataset", path=str(path))

    rows = _iter_csv(path) if fmt == "csv" else _iter_jsonl(path)
    accepted: dict[int, DetectionRecord] = {}
    rejects: list[Reject] = []
    total = 0
    try:
        for lineno, raw in rows:
            total += 1
            if raw is None:
                rejects.append(Reject(lineno, "parse:row"))
                continue
            try:
                rec = parse_row(raw)
            except ValueError as exc:
                rejects.append(Reject(lineno, str(exc)))
                continue
            if rec.frame_id in accepted:
                rejects.append(Reject(lineno, "duplicate:frame_id", str(rec.frame_id)))
                continue
            accepted[rec.frame_id] = rec
    except (UnicodeDecodeError, csv.Error) as exc:
        raise LoadFailureError("dataset file is unreadable", path=str(path), reason=str(exc)) from exc

    if total and len(rejects) / total > max_reject_fraction:
        raise LoadFailureError(
            "too many rejected rows",
            path=str(path),
            rejected=len(rejects),
            total=total,
            first=[(r.row, r.reason) for r in rejects[:10]],
        )
    for rej in rejects:
        logger.info("rejected row %d of %s: %s", rej.row, path, rej.reason)
    ds = Dataset(
        records=tuple(sorted(accepted.values(), key=lambda r: r.frame_id)),
        image_width=int(image_width),
        image_height=int(image_height),
        source={"path": str(path), "format": fmt, "rows": total},
        rejects=tuple(rejects),
    )
    oob = ds.out_of_bounds()
    if oob:
        logger.warning("%d detections fall outside the %dx%d image", len(oob), ds.image_width, ds.image_height)
    return ds


def save_dataset(ds: Dataset, path: str | Path, fmt: str | None = None, *, write_meta: bool = True) -> Path:
    path = Path(path)
    fmt = infer_format(path, fmt)
    text = dumps_csv(ds.records) if fmt == "csv" else dumps_jsonl(ds.records)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")
    if write_meta:
        meta = {"image_width": ds.image_width, "image_height": ds.image_height}
        Path(str(path) + META_SUFFIX).write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")
    return path


def reject_report(ds: Dataset) -> list[dict[str, Any]]:
    return [{"row": r.row, "reason": r.reason, "detail": r.detail} for r in ds.rejects]


def load_rope_lengths(rope_file: str | Path) -> dict[int, float]:
    """Read a ``frame_id,rope_length_m`` sidecar; repeated identical entries are fine."""
    path = Path(rope_file)
    if not path.is_file():
        raise LoadFailureError("rope file not found", path=str(path))
    seen: dict[int, set[float]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"frame_id", "rope_length_m"} <= set(reader.fieldnames):
            raise LoadFailureError("rope file needs frame_id,rope_length_m columns", path=str(path))
        for row in reader:
            try:
                fid = _parse_frame_id(row["frame_id"])
                length = _parse_float(row["rope_length_m"], "rope_length_m")
            except ValueError as exc:
                raise LoadFailureError("bad rope file row", path=str(path), row=reader.line_num, reason=str(exc)) from None
            if length is None or length <= 0:
                raise LoadFailureError("bad rope file row", path=str(path), row=reader.line_num, reason="range:rope_length_m")
            seen.setdefault(fid, set()).add(length)
    conflicts = sorted(fid for fid, vals in seen.items() if len(vals) > 1)
    if conflicts:
        raise JoinConflictError("frames mapped to more than one rope length", frame_ids=conflicts)
    return {fid: next(iter(vals)) for fid, vals in seen.items()}


def join_rope_lengths(ds: Dataset, rope_file: str | Path | dict[int, float]) -> Dataset:
    """Fill ``rope_length_m`` from a sidecar, leaving positions untouched.

    Frames missing from the sidecar keep whatever they had; the join summary is
    stored under ``source["rope_join"]``.
    """
    lengths = rope_file if isinstance(rope_file, dict) else load_rope_lengths(rope_file)
    conflicts = [
        r.frame_id
        for r in ds.records
        if r.frame_id in lengths and r.rope_length_m is not None and r.rope_length_m != lengths[r.frame_id]
    ]
    if conflicts:
        raise JoinConflictError("rope file disagrees with lengths already in the dataset", frame_ids=conflicts)
    records = tuple(
        replace(r, rope_length_m=lengths[r.frame_id]) if r.frame_id in lengths else r for r in ds.records
    )
    ids = {r.frame_id for r in ds.records}
    missing = [r.frame_id for r in records if r.rope_length_m is None]
    summary = {
        "matched": sum(1 for r in ds.records if r.frame_id in lengths),
        "missing_frames": missing,
        "unused_rope_frames": sorted(set(lengths) - ids),
    }
    if missing:
        logger.info("%d frames have no rope length after join", len(missing))
    source = dict(ds.source, rope_join=summary)
    return replace(ds, records=records, source=source)
