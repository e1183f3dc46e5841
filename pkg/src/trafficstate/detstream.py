"""Parsing and validation of per-frame detection streams.

One detection per line, comma-delimited:

    frame,x,y,w,h,conf,class[,e0,e1,...,e{D-1}]

Lines starting with '#' are comments. Optional trailing columns form an
appearance descriptor; every line that carries one must carry the same
number of embedding columns. Rows must arrive in non-decreasing frame
order so the stream can be consumed online.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import ParseError, ValidationError

# Registered road-user classes of the default catalog; override per run.
DEFAULT_CLASS_NAMES = (
    "Ambulance",
    "Auto Rickshaw",
    "Bicycle",
    "Bus",
    "Human Hauler",
    "Microbus",
    "Minibus",
    "Motor Cycle",
    "Pedestrian",
    "Pickup",
    "Private Passenger Car",
    "Rickshaw",
    "Special Purpose Vehicle",
    "Truck",
)

UNIT_NORM_TOL = 1e-9


@dataclass
class Detection:
    """One detector output for one frame.

    bbox is (x_topleft, y_topleft, width, height) in pixels. The appearance
    descriptor, when present, is unit-norm.
    """

    frame: int
    class_id: int
    bbox: tuple[float, float, float, float]
    confidence: float
    appearance: Optional[np.ndarray] = None

    @property
    def centroid(self) -> tuple[float, float]:
        x, y, w, h = self.bbox
        return x + w / 2.0, y + h / 2.0


@dataclass(frozen=True)
class ClassCatalog:
    """Ordered, unique class names; ids index into this list."""

    names: tuple[str, ...] = DEFAULT_CLASS_NAMES

    def __post_init__(self):
        if len(self.names) == 0:
            raise ValidationError("class catalog must not be empty")
        if len(set(self.names)) != len(self.names):
            raise ValidationError("class names must be unique")

    @property
    def count(self) -> int:
        return len(self.names)

    def name_of(self, class_id: int) -> str:
        if not 0 <= class_id < self.count:
            raise ValidationError(
                f"class id {class_id} outside catalog of {self.count} classes"
            )
        return self.names[class_id]


def normalize_appearance(v: np.ndarray) -> np.ndarray:
    """Scale a descriptor to unit Euclidean norm.

    Vectors already unit-norm within 1e-9 pass through unchanged, so
    serialization round-trips bit for bit.
    """
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0 or not np.isfinite(norm):
        raise ValidationError("appearance descriptor has zero or non-finite norm")
    if abs(norm - 1.0) <= UNIT_NORM_TOL:
        return v
    return v / norm


def parse_row(parts: Sequence[str], line_no: int, path) -> tuple[int, Detection, int]:
    """Returns (frame, detection, embedding_dim); dim 0 means no descriptor."""
    try:
        frame = int(parts[0])
        x, y, w, h = (float(p) for p in parts[1:5])
        conf = float(parts[5])
        class_id = int(parts[6])
    except ValueError as exc:
        raise ParseError(f"unparseable field ({exc})", line_no, path) from None

    if frame < 1:
        raise ValidationError(f"line {line_no}: frame index must be >= 1, got {frame}")
    if class_id < 0:
        raise ValidationError(f"line {line_no}: class id must be >= 0, got {class_id}")
    if not (w > 0 and h > 0):
        raise ValidationError(
            f"line {line_no}: bounding box width/height must be positive, got ({w}, {h})"
        )
    if not 0.0 <= conf <= 1.0:
        raise ValidationError(f"line {line_no}: confidence must be in [0,1], got {conf}")

    appearance = None
    dim = len(parts) - 7
    if dim > 0:
        try:
            raw = np.array([float(p) for p in parts[7:]], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"unparseable embedding ({exc})", line_no, path) from None
        if not np.all(np.isfinite(raw)):
            raise ValidationError(f"line {line_no}: non-finite embedding value")
        appearance = normalize_appearance(raw)

    det = Detection(frame=frame, class_id=class_id, bbox=(x, y, w, h),
                    confidence=conf, appearance=appearance)
    return frame, det, dim


def parse_detections(
    source: IO[str] | Iterable[str],
    expected_embedding_dim: Optional[int] = None,
    min_confidence: float = 0.0,
    path=None,
) -> Iterator[tuple[int, list[Detection]]]:
    """Stream (frame, detections) batches from delimited text.

    Batches come out in strictly increasing frame order; frames absent from
    the input yield no batch (see iter_frames for gap filling). Detections
    below min_confidence are dropped at ingest.
    """
    embed_dim = expected_embedding_dim
    current_frame: Optional[int] = None
    batch: list[Detection] = []

    for line_no, line in enumerate(source, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) < 7:
            raise ParseError(
                f"expected at least 7 comma-separated columns, got {len(parts)}",
                line_no, path,
            )
        frame, det, dim = parse_row(parts, line_no, path)

        if embed_dim is None:
            embed_dim = dim
        elif dim != embed_dim:
            raise ValidationError(
                f"line {line_no}: embedding dimension {dim} does not match "
                f"expected {embed_dim}"
            )

        if current_frame is None:
            current_frame = frame
        elif frame < current_frame:
            raise ParseError(
                f"frame {frame} after frame {current_frame}; stream must be "
                "ordered by frame", line_no, path,
            )
        elif frame > current_frame:
            yield current_frame, batch
            current_frame, batch = frame, []

        if det.confidence >= min_confidence:
            batch.append(det)

    if current_frame is not None:
        yield current_frame, batch


def iter_frames(
    batches: Iterable[tuple[int, list[Detection]]],
    first_frame: int = 1,
) -> Iterator[tuple[int, list[Detection]]]:
    """Fill frame gaps with empty batches so every frame index gets stepped.

    Track lifecycles count frames, not batches, so frames with no
    detections still matter downstream.
    """
    next_frame = first_frame
    for frame, batch in batches:
        while next_frame < frame:
            yield next_frame, []
            next_frame += 1
        yield frame, batch
        next_frame = frame + 1


def format_detection(det: Detection) -> str:
    fields = [str(det.frame)]
    fields += [repr(float(v)) for v in det.bbox]
    fields.append(repr(float(det.confidence)))
    fields.append(str(det.class_id))
    if det.appearance is not None:
        fields += [repr(float(v)) for v in det.appearance]
    return ",".join(fields)


def write_detections(out: IO[str], batches: Iterable[tuple[int, list[Detection]]]) -> None:
    """Serialize batches back to the line format; parse round-trips exactly."""
    for _, batch in batches:
        for det in batch:
            out.write(format_detection(det))
            out.write("\n")
