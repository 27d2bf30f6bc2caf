"""Motion clips: ``.clot.jsonl`` format, resampling, dataset statistics and
difficulty-aware clip sampling.

A clip file is one canonical JSON header line followed by one CSV row per
frame::

    t, qw, qx, qy, qz, px, py, pz, k0x, k0y, k0z, ..., j0..j{n-1}, tau0..., c0...

Joint, torque and contact columns are present only when the header declares
them. Floats are written with ``repr`` so a canonical file survives
``serialize(parse(f))`` byte for byte.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .transforms import QUAT_NORM_TOL, RigidTransform, quat_slerp

CATEGORIES = (
    "WALK", "RUN", "BALANCE", "HIGH_DYNAMIC", "UNLAB", "SWING", "KUNGFU",
    "FREE", "CYCLE", "BOXING", "CROUCHING", "PICK", "DANCE", "LATERAL",
)

# Share of the collected human dataset per category, in percent.
DATASET_SHARE_PERCENT = {
    "WALK": 21.0, "RUN": 13.5, "BALANCE": 10.6, "HIGH_DYNAMIC": 8.9, "UNLAB": 9.4,
    "SWING": 9.4, "KUNGFU": 1.7, "FREE": 7.0, "CYCLE": 5.0, "BOXING": 4.1,
    "CROUCHING": 3.3, "PICK": 2.3, "DANCE": 2.2, "LATERAL": 1.7,
}

FORMAT_NAME = "clot-clip"
FORMAT_VERSION = 1
TIMESTAMP_TOL = 1e-6


class ClipFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class MotionFrame:
    t: float
    root: RigidTransform
    keypoints: np.ndarray  # (N_k, 3)
    joint_pos: np.ndarray | None = None
    torque: np.ndarray | None = None
    contacts: tuple[bool, ...] | None = None

    def __post_init__(self):
        kp = np.asarray(self.keypoints, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "keypoints", kp)
        if self.joint_pos is not None:
            object.__setattr__(self, "joint_pos", np.asarray(self.joint_pos, dtype=float).reshape(-1))
        if self.torque is not None:
            object.__setattr__(self, "torque", np.asarray(self.torque, dtype=float).reshape(-1))
        if self.contacts is not None:
            object.__setattr__(self, "contacts", tuple(bool(c) for c in self.contacts))
        for arr in (kp, self.joint_pos, self.torque):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ValueError("motion frame values must be finite")
        if not math.isfinite(self.t):
            raise ValueError("timestamp must be finite")

    def same_as(self, other: "MotionFrame", tol: float = 0.0) -> bool:
        def close(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and bool(np.all(np.abs(a - b) <= tol))

        return (
            abs(self.t - other.t) <= tol
            and close(self.root.rotation, other.root.rotation)
            and close(self.root.translation, other.root.translation)
            and close(self.keypoints, other.keypoints)
            and close(self.joint_pos, other.joint_pos)
            and close(self.torque, other.torque)
            and self.contacts == other.contacts
        )


@dataclass(frozen=True)
class MotionClip:
    id: str
    category: str
    fps: float
    frames: tuple[MotionFrame, ...]

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        validate_clip(self)

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def num_keypoints(self) -> int:
        return self.frames[0].keypoints.shape[0]

    @property
    def duration(self) -> float:
        """Covered time: frame count times frame period."""
        return len(self.frames) / self.fps

    @property
    def times(self) -> np.ndarray:
        return np.array([f.t for f in self.frames])

    def keypoint_array(self) -> np.ndarray:
        return np.stack([f.keypoints for f in self.frames])

    def root_positions(self) -> np.ndarray:
        return np.stack([f.root.translation for f in self.frames])

    def root_rotations(self) -> np.ndarray:
        return np.stack([f.root.rotation for f in self.frames])

    def joint_array(self) -> np.ndarray | None:
        if self.frames[0].joint_pos is None:
            return None
        return np.stack([f.joint_pos for f in self.frames])

    def torque_array(self) -> np.ndarray | None:
        if self.frames[0].torque is None:
            return None
        return np.stack([f.torque for f in self.frames])


def _layout(frame: MotionFrame) -> tuple[int, int, int, int]:
    return (
        frame.keypoints.shape[0],
        0 if frame.joint_pos is None else frame.joint_pos.shape[0],
        0 if frame.torque is None else frame.torque.shape[0],
        0 if frame.contacts is None else len(frame.contacts),
    )


def validate_clip(clip: MotionClip) -> None:
    if clip.category not in CATEGORIES:
        raise ClipFormatError(f"unknown category {clip.category!r}")
    if not (math.isfinite(clip.fps) and clip.fps > 0):
        raise ClipFormatError(f"fps must be positive, got {clip.fps}")
    if len(clip.frames) < 2:
        raise ClipFormatError("a clip needs at least 2 frames")
    layout = _layout(clip.frames[0])
    period = 1.0 / clip.fps
    for i, f in enumerate(clip.frames):
        if _layout(f) != layout:
            raise ClipFormatError(f"frame {i}: keypoint/joint count drift")
        if i:
            dt = f.t - clip.frames[i - 1].t
            if dt <= 0:
                raise ClipFormatError(f"frame {i}: non-monotone timestamps")
            if abs(dt - period) >= TIMESTAMP_TOL:
                raise ClipFormatError(f"frame {i}: timestamp spacing {dt} does not match fps {clip.fps}")


# -- file format --------------------------------------------------------------


def _header(clip: MotionClip) -> dict:
    nk, nj, nt, nc = _layout(clip.frames[0])
    return {
        "category": clip.category,
        "format": FORMAT_NAME,
        "fps": float(clip.fps),
        "id": clip.id,
        "num_contacts": nc,
        "num_frames": clip.num_frames,
        "num_joints": nj,
        "num_keypoints": nk,
        "num_torques": nt,
        "version": FORMAT_VERSION,
    }


def serialize_clip(clip: MotionClip) -> bytes:
    out = io.StringIO()
    out.write(json.dumps(_header(clip), sort_keys=True, separators=(",", ":")))
    out.write("\n")
    for f in clip.frames:
        values = [f.t, *f.root.rotation, *f.root.translation, *f.keypoints.ravel()]
        if f.joint_pos is not None:
            values.extend(f.joint_pos)
        if f.torque is not None:
            values.extend(f.torque)
        cells = [repr(float(v)) for v in values]
        if f.contacts is not None:
            cells.extend("1" if c else "0" for c in f.contacts)
        out.write(",".join(cells))
        out.write("\n")
    return out.getvalue().encode("utf-8")


def _count(header: dict, key: str) -> int:
    value = header.get(key, 0)
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise ClipFormatError(f"malformed header: {key} must be a non-negative integer", line=1)
    return value


def parse_clip(data) -> MotionClip:
    """Parse a clip from bytes, text or a binary/text stream."""
    if hasattr(data, "read"):
        data = data.read()
    if isinstance(data, (bytes, bytearray)):
        try:
            data = bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ClipFormatError(f"not UTF-8: {exc}") from None
    lines = data.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ClipFormatError("malformed header: empty file", line=1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ClipFormatError(f"malformed header: {exc.msg}", line=1) from None
    if not isinstance(header, dict):
        raise ClipFormatError("malformed header: expected a JSON object", line=1)
    if header.get("format", FORMAT_NAME) != FORMAT_NAME:
        raise ClipFormatError(f"malformed header: unknown format {header.get('format')!r}", line=1)
    if header.get("version", FORMAT_VERSION) != FORMAT_VERSION:
        raise ClipFormatError(f"malformed header: unsupported version {header.get('version')!r}", line=1)
    for key in ("id", "category", "fps"):
        if key not in header:
            raise ClipFormatError(f"malformed header: missing {key!r}", line=1)
    fps = header["fps"]
    if not isinstance(fps, (int, float)) or isinstance(fps, bool) or not fps > 0:
        raise ClipFormatError("malformed header: fps must be a positive number", line=1)
    if header["category"] not in CATEGORIES:
        raise ClipFormatError(f"malformed header: unknown category {header['category']!r}", line=1)
    nk = _count(header, "num_keypoints")
    nj = _count(header, "num_joints")
    nt = _count(header, "num_torques")
    nc = _count(header, "num_contacts")
    n_float = 8 + 3 * nk + nj + nt
    n_cols = n_float + nc

    frames = []
    prev_t = None
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != n_cols:
            raise ClipFormatError(
                f"keypoint-count drift: row has {len(cells)} values, header implies {n_cols}", line=lineno
            )
        try:
            values = np.array([float(c) for c in cells[:n_float]])
        except ValueError:
            raise ClipFormatError("unparseable number", line=lineno) from None
        if not np.all(np.isfinite(values)):
            raise ClipFormatError("NaN or infinite value", line=lineno)
        contacts = None
        if nc:
            raw = cells[n_float:]
            if any(c not in ("0", "1") for c in raw):
                raise ClipFormatError("contact flags must be 0 or 1", line=lineno)
            contacts = tuple(c == "1" for c in raw)
        t = float(values[0])
        if prev_t is not None:
            if t <= prev_t:
                raise ClipFormatError("non-monotone timestamps", line=lineno)
            if abs(t - prev_t - 1.0 / fps) >= TIMESTAMP_TOL:
                raise ClipFormatError(f"timestamp spacing does not match fps {fps}", line=lineno)
        prev_t = t
        quat = values[1:5]
        if abs(np.linalg.norm(quat) - 1.0) > QUAT_NORM_TOL:
            raise ClipFormatError("root quaternion is not unit norm", line=lineno)
        off = 8 + 3 * nk
        frames.append(
            MotionFrame(
                t=t,
                root=RigidTransform(quat, values[5:8]),
                keypoints=values[8:off].reshape(nk, 3),
                joint_pos=values[off:off + nj] if nj else None,
                torque=values[off + nj:off + nj + nt] if nt else None,
                contacts=contacts,
            )
        )
    declared = header.get("num_frames")
    if declared is not None and declared != len(frames):
        raise ClipFormatError(f"header declares {declared} frames, file has {len(frames)}")
    if len(frames) < 2:
        raise ClipFormatError("a clip needs at least 2 frames")
    return MotionClip(id=str(header["id"]), category=header["category"], fps=float(fps), frames=frames)


def load_clip(path) -> MotionClip:
    return parse_clip(Path(path).read_bytes())


def save_clip(clip: MotionClip, path) -> None:
    Path(path).write_bytes(serialize_clip(clip))


# -- resampling ---------------------------------------------------------------


def _lerp(a, b, w):
    if a is None:
        return None
    if w == 0.0:
        return a.copy()
    return a + w * (b - a)


def interpolate_frame(a: MotionFrame, b: MotionFrame, w: float) -> MotionFrame:
    """Blend two frames: linear for positions, slerp for the root rotation."""
    if w == 0.0:
        return a
    if w == 1.0:
        return b
    rot = quat_slerp(a.root.rotation, b.root.rotation, w)
    rot = rot / np.linalg.norm(rot)
    return MotionFrame(
        t=a.t + w * (b.t - a.t),
        root=RigidTransform(rot, _lerp(a.root.translation, b.root.translation, w)),
        keypoints=_lerp(a.keypoints, b.keypoints, w),
        joint_pos=_lerp(a.joint_pos, b.joint_pos, w),
        torque=_lerp(a.torque, b.torque, w),
        contacts=a.contacts if w < 0.5 else b.contacts,
    )


def frame_at(clip: MotionClip, t: float) -> MotionFrame:
    """Interpolated frame at absolute time ``t`` (held at the clip ends)."""
    u = (t - clip.frames[0].t) * clip.fps
    if u <= 0:
        return clip.frames[0]
    last = clip.num_frames - 1
    if u >= last:
        return clip.frames[last]
    i = int(math.floor(u))
    return interpolate_frame(clip.frames[i], clip.frames[i + 1], u - i)


def resample(clip: MotionClip, target_fps: float) -> MotionClip:
    if not target_fps > 0:
        raise ValueError("target_fps must be > 0")
    if clip.num_frames < 2:
        raise ValueError("clip shorter than 2 frames")
    last = clip.num_frames - 1
    span = last / clip.fps
    count = int(math.floor(span * target_fps + 1e-9)) + 1
    ratio = clip.fps / target_fps
    frames = []
    for k in range(count):
        u = k * ratio
        i = min(int(math.floor(u + 1e-9)), last)
        w = u - i
        if i == last or abs(w) < 1e-9:
            f = clip.frames[i]
            if k and abs(f.t - frames[0].t - k / target_fps) >= TIMESTAMP_TOL:
                f = replace(f, t=frames[0].t + k / target_fps)
            frames.append(f)
        else:
            frames.append(interpolate_frame(clip.frames[i], clip.frames[i + 1], w))
    if len(frames) < 2:
        raise ValueError("resampled clip would have fewer than 2 frames")
    return MotionClip(clip.id, clip.category, float(target_fps), frames)


# -- dataset statistics -------------------------------------------------------


def load_manifest(path) -> list[MotionClip]:
    path = Path(path)
    entries = json.loads(path.read_text())
    if not isinstance(entries, list):
        raise ValueError("manifest must be a JSON array of clip paths")
    return [load_clip(path.parent / entry) for entry in entries]


def dataset_stats(clips: Iterable[MotionClip]) -> dict[str, float]:
    """Percentage of total duration per category (all 14 categories listed)."""
    totals = dict.fromkeys(CATEGORIES, 0.0)
    count = 0
    for clip in clips:
        totals[clip.category] += clip.duration
        count += 1
    if count == 0:
        raise ValueError("empty manifest")
    grand = sum(totals.values())
    return {cat: 100.0 * sec / grand for cat, sec in totals.items()}


def stats_table_csv(clips: Sequence[MotionClip]) -> str:
    pct = dataset_stats(clips)
    seconds = dict.fromkeys(CATEGORIES, 0.0)
    for clip in clips:
        seconds[clip.category] += clip.duration
    rows = ["category,percent,seconds"]
    rows += [f"{cat},{pct[cat]:.1f},{seconds[cat]:.3f}" for cat in CATEGORIES]
    return "\n".join(rows) + "\n"


# -- adaptive sampling --------------------------------------------------------

DIFFICULTY_FLOOR = 1e-6


def clip_probabilities(weights, p_min: float, p_max: float, max_iter: int | None = None) -> np.ndarray:
    """Normalize ``weights`` into a distribution bounded by ``[p_min, p_max]``.

    Iterative clip-and-renormalize: entries pushed past a bound are pinned
    there and the remaining mass is shared proportionally among the rest.
    """
    w = np.asarray(weights, dtype=float)
    n = len(w)
    if n == 0:
        raise ValueError("no clips")
    if n * p_min > 1 + 1e-12 or n * p_max < 1 - 1e-12:
        raise ValueError(f"bounds [{p_min}, {p_max}] infeasible for {n} clips")
    pinned = np.full(n, np.nan)
    p = w / w.sum()
    for _ in range(max_iter or n + 1):
        free = np.isnan(pinned)
        mass = 1.0 - np.nansum(pinned)
        p = np.where(free, 0.0, pinned)
        if free.any():
            p[free] = w[free] / w[free].sum() * mass
        high = free & (p > p_max)
        low = free & (p < p_min)
        if not (high.any() or low.any()):
            break
        pinned[high] = p_max
        pinned[low] = p_min
    return p / p.sum()


@dataclass(frozen=True)
class SamplerState:
    clip_ids: tuple[str, ...]
    difficulty: np.ndarray
    ema: float = 0.1
    p_min: float = 0.0
    p_max: float = 1.0
    probabilities: np.ndarray = field(default=None)

    def __post_init__(self):
        d = np.asarray(self.difficulty, dtype=float)
        if d.shape != (len(self.clip_ids),):
            raise ValueError("one difficulty per clip required")
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise ValueError("difficulties must be finite and >= 0")
        if not 0.0 <= self.ema <= 1.0:
            raise ValueError("EMA coefficient must be in [0, 1]")
        object.__setattr__(self, "clip_ids", tuple(self.clip_ids))
        object.__setattr__(self, "difficulty", d)
        probs = clip_probabilities(np.maximum(d, DIFFICULTY_FLOOR), self.p_min, self.p_max)
        object.__setattr__(self, "probabilities", probs)

    @classmethod
    def create(cls, clip_ids: Sequence[str], ema: float = 0.1, p_min: float | None = None,
               p_max: float = 1.0) -> "SamplerState":
        """Fresh sampler; default floor keeps every clip at >= 20% of uniform."""
        if p_min is None:
            p_min = 0.2 / len(clip_ids)
        return cls(tuple(clip_ids), np.zeros(len(clip_ids)), ema, p_min, p_max)

    def index(self, clip_id: str) -> int:
        try:
            return self.clip_ids.index(clip_id)
        except ValueError:
            raise KeyError(f"unknown clip id {clip_id!r}") from None


def update_difficulty(sampler: SamplerState, clip_id: str, episode_error: float) -> SamplerState:
    if not episode_error >= 0:
        raise ValueError("episode error must be >= 0")
    i = sampler.index(clip_id)
    d = sampler.difficulty.copy()
    d[i] = (1.0 - sampler.ema) * d[i] + sampler.ema * episode_error
    return replace(sampler, difficulty=d, probabilities=None)


def adaptive_sample(sampler: SamplerState, rng: np.random.Generator) -> str:
    idx = rng.choice(len(sampler.clip_ids), p=sampler.probabilities)
    return sampler.clip_ids[int(idx)]
