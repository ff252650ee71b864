"""Bit-exact file formats: JSONL manifests, PPM/PGM images, IVMH heatmaps.

Also parameter vectors (``.npy``), training history CSV, whole-dataset
directories and the area-ratio statistics over a manifest.

IVMH layout (little-endian)::

    b"IVMH" | version u8 = 1 | width u32 | height u32 | width*height f32, row-major
"""
from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from .dwsl.networks import DiscriminatorParams, GeneratorParams
from .dwsl.features import DISC_IN, GEN_IN, OUT_DIM
from .errors import (
    BadMagic,
    BadVersion,
    DuplicateId,
    MalformedLine,
    RecordIOError,
    SizeMismatch,
    TruncatedFile,
    UnsupportedFormat,
    ValueOutOfRange,
)
from .heatmap import BBox, Heatmap, ImageBuffer, threshold
from .records import AnnotationRecord

PathLike = Union[str, Path]

IVMH_MAGIC = b"IVMH"
IVMH_VERSION = 1
_IVMH_HEADER = struct.Struct("<4sBII")

# manifest keys with a dedicated field; everything else round-trips via ``meta``
_FIELDS = ("id", "image_path", "instruction", "label_path", "source", "split", "bbox")
_REQUIRED = ("id", "instruction", "source", "split")


# --- manifests ----------------------------------------------------------------


def record_to_json(rec: AnnotationRecord) -> str:
    obj = {
        "id": rec.id,
        "image_path": rec.image_path,
        "instruction": rec.instruction,
        "label_path": rec.label_path,
        "source": rec.source,
        "split": rec.split,
    }
    if rec.bbox is not None:
        obj["bbox"] = list(rec.bbox.as_tuple())
    clash = set(rec.meta) & set(_FIELDS)
    if clash:
        raise ValueError(f"meta keys shadow record fields: {sorted(clash)}")
    for k in sorted(rec.meta):
        obj[k] = rec.meta[k]
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def record_from_json(obj: dict) -> AnnotationRecord:
    missing = [k for k in _REQUIRED if k not in obj]
    if missing:
        raise ValueError(f"missing fields {missing}")
    bbox = obj.get("bbox")
    return AnnotationRecord(
        id=str(obj["id"]),
        instruction=obj["instruction"],
        source=obj["source"],
        split=obj["split"],
        image_path=obj.get("image_path"),
        label_path=obj.get("label_path"),
        bbox=BBox(*bbox) if bbox is not None else None,
        meta={k: v for k, v in obj.items() if k not in _FIELDS},
    )


def write_manifest(path: PathLike, records: Iterable[AnnotationRecord]) -> None:
    """One JSON object per line; an empty sequence writes a zero-byte file."""
    lines, seen = [], set()
    for rec in records:
        if rec.id in seen:
            raise DuplicateId(rec.id)
        seen.add(rec.id)
        lines.append(record_to_json(rec) + "\n")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)


def read_manifest(path: PathLike) -> List[AnnotationRecord]:
    """Parse a manifest; blank lines are skipped, line numbers are 1-based."""
    out, seen = [], set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(line_no, exc.msg) from exc
            if not isinstance(obj, dict):
                raise MalformedLine(line_no, "not a JSON object")
            try:
                rec = record_from_json(obj)
            except (ValueError, TypeError) as exc:
                raise MalformedLine(line_no, str(exc)) from exc
            if rec.id in seen:
                raise DuplicateId(f"line {line_no}: {rec.id!r}")
            seen.add(rec.id)
            out.append(rec)
    return out


# --- PPM / PGM ----------------------------------------------------------------


def encode_pnm(img: ImageBuffer) -> bytes:
    magic = b"P6" if img.channels == 3 else b"P5"
    return magic + f"\n{img.width} {img.height}\n255\n".encode("ascii") + img.tobytes()


def decode_pnm(data: bytes) -> ImageBuffer:
    """Binary PGM (P5) or PPM (P6) with maxval 255; ``#`` comments allowed in the header."""
    if data[:2] not in (b"P5", b"P6"):
        raise UnsupportedFormat(f"expected P5 or P6, got {data[:2]!r}")
    channels = 3 if data[:2] == b"P6" else 1
    pos, fields = 2, []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise TruncatedFile("header ends early")
        try:
            fields.append(int(data[start:pos]))
        except ValueError as exc:
            raise UnsupportedFormat(f"bad header token {data[start:pos]!r}") from exc
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise TruncatedFile("missing whitespace after header")
    pos += 1
    width, height, maxval = fields
    if maxval != 255:
        raise UnsupportedFormat(f"only maxval 255 is supported, got {maxval}")
    if width < 1 or height < 1:
        raise UnsupportedFormat(f"bad dimensions {width}x{height}")
    n = width * height * channels
    payload = data[pos : pos + n]
    if len(payload) < n:
        raise TruncatedFile(f"expected {n} payload bytes, got {len(payload)}")
    return ImageBuffer(np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels).copy())


def write_image(path: PathLike, img: ImageBuffer) -> None:
    Path(path).write_bytes(encode_pnm(img))


def read_image(path: PathLike) -> ImageBuffer:
    return decode_pnm(Path(path).read_bytes())


# --- IVMH heatmaps ------------------------------------------------------------


def encode_ivmh(h: Heatmap) -> bytes:
    v = np.asarray(h.values, dtype=np.float64)
    if v.min() < 0.0 or v.max() > 1.0:
        raise ValueOutOfRange("heatmap values must lie in [0, 1]")
    return _IVMH_HEADER.pack(IVMH_MAGIC, IVMH_VERSION, h.width, h.height) + v.astype("<f4").tobytes()


def decode_ivmh(data: bytes) -> Heatmap:
    if len(data) < 4 or data[:4] != IVMH_MAGIC:
        raise BadMagic(f"expected {IVMH_MAGIC!r}, got {data[:4]!r}")
    if len(data) < _IVMH_HEADER.size:
        raise TruncatedFile("IVMH header ends early")
    _, version, width, height = _IVMH_HEADER.unpack_from(data)
    if version != IVMH_VERSION:
        raise BadVersion(f"unsupported IVMH version {version}")
    payload = data[_IVMH_HEADER.size :]
    if len(payload) != 4 * width * height or width < 1 or height < 1:
        raise SizeMismatch(f"{width}x{height} map needs {4 * width * height} bytes, got {len(payload)}")
    v = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
        raise ValueOutOfRange("payload values outside [0, 1]")
    return Heatmap(v.reshape(height, width))


def write_heatmap(path: PathLike, h: Heatmap) -> None:
    Path(path).write_bytes(encode_ivmh(h))


def read_heatmap(path: PathLike) -> Heatmap:
    return decode_ivmh(Path(path).read_bytes())


# --- parameters and history ---------------------------------------------------


def save_params(path: PathLike, params: Union[GeneratorParams, DiscriminatorParams]) -> None:
    """Flat float64 ``.npy`` (no zip container, so the bytes are reproducible)."""
    with open(path, "wb") as fh:
        np.save(fh, params.flat, allow_pickle=False)


def _hidden_from_size(n: int, per_hidden: int, const: int) -> int:
    h, rem = divmod(n - const, per_hidden)
    if rem or h < 1:
        raise SizeMismatch(f"{n} values do not match any hidden size")
    return h


def load_generator(path: PathLike) -> GeneratorParams:
    flat = np.load(path, allow_pickle=False)
    # h*(GEN_IN + 1) + OUT_DIM*(h + 1)
    return GeneratorParams(flat, _hidden_from_size(flat.size, GEN_IN + 1 + OUT_DIM, OUT_DIM))


def load_discriminator(path: PathLike) -> DiscriminatorParams:
    flat = np.load(path, allow_pickle=False)
    # h*(DISC_IN + 2) + 1
    return DiscriminatorParams(flat, _hidden_from_size(flat.size, DISC_IN + 2, 1))


HISTORY_COLUMNS = ("step", "stage", "loss", "mean_weight_e", "mean_weight_o")


def history_csv(history: Sequence) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_COLUMNS)
    for row in history:
        w.writerow([row.step, row.stage, repr(row.loss), repr(row.mean_weight_e), repr(row.mean_weight_o)])
    return buf.getvalue()


def write_history(path: PathLike, history: Sequence) -> None:
    Path(path).write_text(history_csv(history), encoding="utf-8")


# --- dataset directories ------------------------------------------------------


def write_dataset(directory: PathLike, manifest_name: str, records: Sequence[AnnotationRecord]) -> Path:
    """Write payloads under ``images/``, ``labels/`` (and ``gt/``) plus the manifest.

    Paths in the manifest are relative to its directory.  A record whose
    evaluation ground truth differs from its label also gets ``gt_path``.
    """
    root = Path(directory)
    for sub in ("images", "labels", "gt"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    out = []
    for rec in records:
        try:
            img_rel, lab_rel = f"images/{rec.id}.ppm", f"labels/{rec.id}.ivmh"
            write_image(root / img_rel, rec.image)
            write_heatmap(root / lab_rel, rec.heatmap)
            meta = dict(rec.meta)
            if rec.ground_truth is not None:
                if rec.ground_truth == rec.heatmap:
                    meta["gt_path"] = lab_rel
                else:
                    meta["gt_path"] = f"gt/{rec.id}.ivmh"
                    write_heatmap(root / meta["gt_path"], rec.ground_truth)
        except OSError as exc:
            raise RecordIOError(rec.id, exc) from exc
        out.append(
            AnnotationRecord(rec.id, rec.instruction, rec.source, rec.split, img_rel, lab_rel, rec.bbox, meta)
        )
    path = root / manifest_name
    write_manifest(path, out)
    return path


def load_dataset(manifest: PathLike, *, payloads: bool = True) -> List[AnnotationRecord]:
    """Read a manifest and, optionally, the image/label/ground-truth files it names."""
    manifest = Path(manifest)
    records = read_manifest(manifest)
    if not payloads:
        return records
    root = manifest.parent
    for rec in records:
        try:
            if rec.image_path:
                rec.image = read_image(root / rec.image_path)
            if rec.label_path:
                rec.heatmap = read_heatmap(root / rec.label_path)
            gt = rec.meta.get("gt_path")
            if gt:
                rec.ground_truth = rec.heatmap if gt == rec.label_path else read_heatmap(root / gt)
        except (OSError, ValueError) as exc:
            raise RecordIOError(rec.id, exc) from exc
    return records


# --- statistics ---------------------------------------------------------------


@dataclass
class DatasetStats:
    n_bins: int
    tau: float
    histograms: Dict[str, np.ndarray] = field(default_factory=dict)
    n_records: int = 0
    n_below: int = 0

    @property
    def fraction_below(self) -> float:
        """Share of records whose activated area ratio is below 0.4."""
        return self.n_below / self.n_records if self.n_records else 0.0

    def lines(self) -> List[str]:
        out = [f"records={self.n_records}", f"fraction_below_0.4={self.fraction_below:.4f}"]
        for src in sorted(self.histograms):
            out.append(f"source={src} bins={','.join(str(int(c)) for c in self.histograms[src])}")
        return out


def dataset_stats(
    records: Union[PathLike, Sequence[AnnotationRecord]],
    tau: float = 0.0,
    n_bins: int = 10,
) -> DatasetStats:
    """Per-source histogram of label area ratios over ``n_bins`` equal bins of [0, 1].

    Bins are computed in integer arithmetic, ``floor(active * n_bins / total)``,
    with a ratio of exactly 1 folded into the last bin.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be positive")
    if isinstance(records, (str, Path)):
        records = load_dataset(records)
    stats = DatasetStats(n_bins, tau)
    for rec in records:
        if rec.heatmap is None:
            raise RecordIOError(rec.id, ValueError("label not loaded"))
        active = threshold(rec.heatmap, tau).popcount()
        total = rec.heatmap.values.size
        b = min(active * n_bins // total, n_bins - 1)
        hist = stats.histograms.setdefault(rec.source, np.zeros(n_bins, dtype=np.int64))
        hist[b] += 1
        stats.n_records += 1
        # ratio < 0.4 exactly, without float rounding
        stats.n_below += int(5 * active < 2 * total)
    return stats
