"""Per-frame tracking: predict, two-stage matching, update, lifecycle.

Stage 1 associates confirmed tracks to detections through the gated
motion/appearance cost matrix, in a cascade that prefers recently updated
tracks. Stage 2 mops up with plain IoU matching. New tracks start
tentative and must associate in each of their first n_init frames;
confirmed tracks survive up to max_age missed frames.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import assoc, motion
from .detstream import Detection
from .errors import ContractError, ValidationError

DEFAULT_MAX_AGE = 3
DEFAULT_N_INIT = 3
DEFAULT_LAMBDA = 0.0


class TrackStatus(enum.Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    DELETED = "deleted"


@dataclass
class TrackSnapshot:
    """Per-frame public view of one live track."""

    frame: int
    track_id: int
    status: TrackStatus
    class_id: int
    bbox: tuple[float, float, float, float]
    centroid: tuple[float, float]


class Track:
    """One persistent identity with Kalman state, gallery, and vote counts."""

    def __init__(self, track_id: int, state: motion.TrackState,
                 gallery_capacity: int = assoc.GALLERY_CAPACITY):
        self.id = track_id
        self.status = TrackStatus.TENTATIVE
        self.state = state
        self.gallery = assoc.AppearanceGallery(gallery_capacity)
        self.class_votes: dict[int, int] = {}
        self.hits = 0
        self.time_since_update = 0
        self.history: list[tuple[int, float, float, float, float]] = []
        self._best_class: Optional[int] = None

    def vote(self, class_id: int) -> None:
        count = self.class_votes.get(class_id, 0) + 1
        self.class_votes[class_id] = count
        if self._best_class is None or count > self.class_votes[self._best_class] \
                or (count == self.class_votes[self._best_class]
                    and class_id < self._best_class):
            self._best_class = class_id

    @property
    def class_id(self) -> int:
        return class_of(self)

    def record(self, frame: int, bbox) -> None:
        x, y, w, h = bbox
        self.history.append((frame, x + w / 2.0, y + h / 2.0, w, h))

    def predicted_bbox(self) -> tuple[float, float, float, float]:
        return motion.bbox_from_state(self.state.mean)


def class_of(track: Track) -> int:
    """Majority class over the track's lifetime; ties break low."""
    if track._best_class is None:
        raise ContractError(f"track {track.id} has no class votes")
    return track._best_class


@dataclass
class TrackerConfig:
    cost_lambda: float = DEFAULT_LAMBDA
    motion_gate: float = assoc.CHI2_95_4DOF
    appearance_gate: float = assoc.DEFAULT_APPEARANCE_GATE
    iou_gate: float = assoc.DEFAULT_IOU_GATE
    max_age: int = DEFAULT_MAX_AGE
    n_init: int = DEFAULT_N_INIT
    gallery_capacity: int = assoc.GALLERY_CAPACITY

    def __post_init__(self):
        if self.max_age < 1 or self.n_init < 1:
            raise ValidationError("max_age and n_init must be >= 1")


class Tracker:
    """Sequential multi-object tracker; one instance per detection stream."""

    def __init__(self, config: Optional[TrackerConfig] = None,
                 kf: Optional[motion.KalmanFilter] = None):
        self.config = config or TrackerConfig()
        self.kf = kf or motion.KalmanFilter()
        self.tracks: list[Track] = []
        self._next_id = 1
        self._last_frame = 0

    # -- public API ----------------------------------------------------------

    def step(self, frame: int, detections: Sequence[Detection]) -> list[TrackSnapshot]:
        """Advance one frame and return snapshots of all live tracks."""
        if frame <= self._last_frame:
            raise ContractError(
                f"frame {frame} not after previous frame {self._last_frame}"
            )
        for det in detections:
            if det.frame != frame:
                raise ContractError(
                    f"detection for frame {det.frame} in batch for frame {frame}"
                )
        self._last_frame = frame

        self._predict_all()
        measurements = assoc.measurements_of(detections)
        matches, unmatched_tracks, unmatched_dets = self._match(detections, measurements)

        matched_bbox: dict[int, tuple] = {}
        if matches:
            self._update_matched(matches, detections, measurements)
            for trk, det_idx in matches:
                matched_bbox[trk.id] = detections[det_idx].bbox

        for trk in unmatched_tracks:
            trk.time_since_update += 1
            if trk.status is TrackStatus.TENTATIVE:
                trk.status = TrackStatus.DELETED
            elif trk.time_since_update > self.config.max_age:
                trk.status = TrackStatus.DELETED

        for det_idx in unmatched_dets:
            self._start_track(detections[det_idx])
            matched_bbox[self.tracks[-1].id] = detections[det_idx].bbox

        for trk in self.tracks:
            if trk.status is TrackStatus.TENTATIVE and trk.hits >= self.config.n_init:
                trk.status = TrackStatus.CONFIRMED

        snapshots = []
        for trk in self.tracks:
            if trk.status is TrackStatus.DELETED:
                continue
            bbox = matched_bbox.get(trk.id, None)
            if bbox is None:
                bbox = trk.predicted_bbox()
            trk.record(frame, bbox)
            x, y, w, h = bbox
            snapshots.append(TrackSnapshot(
                frame=frame, track_id=trk.id, status=trk.status,
                class_id=trk.class_id, bbox=bbox,
                centroid=(x + w / 2.0, y + h / 2.0),
            ))
        self.tracks = [t for t in self.tracks if t.status is not TrackStatus.DELETED]
        return snapshots

    # -- internals -------------------------------------------------------------

    def _predict_all(self) -> None:
        if not self.tracks:
            return
        means = np.stack([t.state.mean for t in self.tracks])
        covs = np.stack([t.state.covariance for t in self.tracks])
        means, covs = self.kf.predict_many(means, covs)
        for i, trk in enumerate(self.tracks):
            trk.state = motion.TrackState(mean=means[i], covariance=covs[i])

    def _match(self, detections: Sequence[Detection], measurements: np.ndarray):
        """Two-stage matching; returns (matches, unmatched tracks, det indices)."""
        confirmed = [t for t in self.tracks if t.status is TrackStatus.CONFIRMED]
        tentative = [t for t in self.tracks if t.status is TrackStatus.TENTATIVE]
        remaining = list(range(len(detections)))
        matches: list[tuple[Track, int]] = []

        # stage 1: gated cost matrix over confirmed tracks, freshest first
        projections = self._project_all(confirmed)
        unmatched_confirmed: list[Track] = []
        for age in sorted({t.time_since_update for t in confirmed}):
            group = [i for i, t in enumerate(confirmed) if t.time_since_update == age]
            group.sort(key=lambda i: confirmed[i].id)
            cost = assoc.build_cost_matrix(
                [projections[i] for i in group],
                [confirmed[i].gallery for i in group],
                [detections[j] for j in remaining],
                lam=self.config.cost_lambda,
                t1=self.config.motion_gate,
                t2=self.config.appearance_gate,
                measurements=measurements[remaining],
            )
            result = assoc.solve_assignment(cost)
            for gi, rj in result.matches:
                matches.append((confirmed[group[gi]], remaining[rj]))
            taken = {remaining[rj] for _, rj in result.matches}
            remaining = [j for j in remaining if j not in taken]
            unmatched_confirmed += [confirmed[group[gi]] for gi in result.unmatched_tracks]

        # stage 2: IoU matching over everything still unmatched
        stage2_tracks = sorted(tentative + unmatched_confirmed, key=lambda t: t.id)
        if stage2_tracks and remaining:
            cost = assoc.build_iou_cost_matrix(
                [t.predicted_bbox() for t in stage2_tracks],
                [detections[j] for j in remaining],
                max_distance=self.config.iou_gate,
            )
            result = assoc.solve_assignment(cost)
            for ti, rj in result.matches:
                matches.append((stage2_tracks[ti], remaining[rj]))
            unmatched_tracks = [stage2_tracks[ti] for ti in result.unmatched_tracks]
            taken = {remaining[rj] for _, rj in result.matches}
            remaining = [j for j in remaining if j not in taken]
        else:
            unmatched_tracks = stage2_tracks

        return matches, unmatched_tracks, remaining

    def _project_all(self, tracks: Sequence[Track]):
        if not tracks:
            return []
        means = np.stack([t.state.mean for t in tracks])
        covs = np.stack([t.state.covariance for t in tracks])
        ys, ss, ok = self.kf.project_many(means, covs)
        return [
            motion.MeasurementProjection(y=ys[i], s=ss[i]) if ok[i] else None
            for i in range(len(tracks))
        ]

    def _update_matched(self, matches: list[tuple[Track, int]],
                        detections: Sequence[Detection],
                        measurements: np.ndarray) -> None:
        means = np.stack([t.state.mean for t, _ in matches])
        covs = np.stack([t.state.covariance for t, _ in matches])
        zs = measurements[[j for _, j in matches]]
        means, covs = self.kf.update_many(means, covs, zs)
        for i, (trk, det_idx) in enumerate(matches):
            det = detections[det_idx]
            trk.state = motion.TrackState(mean=means[i], covariance=covs[i])
            if det.appearance is not None:
                trk.gallery.add(det.appearance)
            trk.vote(det.class_id)
            trk.hits += 1
            trk.time_since_update = 0

    def _start_track(self, det: Detection) -> None:
        state = self.kf.initiate(det.bbox)
        trk = Track(self._next_id, state, self.config.gallery_capacity)
        self._next_id += 1
        if det.appearance is not None:
            trk.gallery.add(det.appearance)
        trk.vote(det.class_id)
        trk.hits = 1
        self.tracks.append(trk)


def format_track_row(snap: TrackSnapshot) -> str:
    """One line of the tracks output file: frame, id, class, u, v, w, h."""
    x, y, w, h = snap.bbox
    u, v = snap.centroid
    cols = [str(snap.frame), str(snap.track_id), str(snap.class_id)]
    cols += [f"{val:.6g}" for val in (u, v, w, h)]
    return "\t".join(cols)
