"""Binary mocap frame codec and length-prefixed stream framing.

Frame layout (little-endian):
  magic "CLOT" | version u8 | timestamp_us u64 | count u16 |
  root quat wxyz + pos xyz (7 x f32) | keypoints (count x 3 x f32)
On a byte stream every frame is preceded by its length as u32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..motion_data import MotionFrame
from ..transforms import RigidTransform, quat_normalize

MAGIC = b"CLOT"
VERSION = 1
HEADER = struct.Struct("<4sBQH7f")
HEADER_SIZE = HEADER.size  # 43
LENGTH_PREFIX = struct.Struct("<I")
MAX_COUNT = 0xFFFF
MAX_FRAME_SIZE = HEADER_SIZE + 12 * MAX_COUNT


class WireError(ValueError):
    pass


@dataclass(frozen=True)
class WireFrame:
    timestamp_us: int
    root: np.ndarray  # (7,) float32: quat wxyz, pos xyz
    keypoints: np.ndarray  # (count, 3) float32

    def __post_init__(self):
        root = np.asarray(self.root, dtype=np.float32).reshape(7)
        kp = np.asarray(self.keypoints, dtype=np.float32).reshape(-1, 3)
        if not 0 <= int(self.timestamp_us) < 1 << 64:
            raise WireError("timestamp out of u64 range")
        if len(kp) > MAX_COUNT:
            raise WireError(f"too many keypoints ({len(kp)} > {MAX_COUNT})")
        object.__setattr__(self, "timestamp_us", int(self.timestamp_us))
        object.__setattr__(self, "root", root)
        object.__setattr__(self, "keypoints", kp)

    @property
    def count(self) -> int:
        return len(self.keypoints)

    def __eq__(self, other) -> bool:
        if not isinstance(other, WireFrame):
            return NotImplemented
        return (self.timestamp_us == other.timestamp_us
                and self.root.tobytes() == other.root.tobytes()
                and self.keypoints.tobytes() == other.keypoints.tobytes())

    def __hash__(self):
        return hash((self.timestamp_us, self.root.tobytes(), self.keypoints.tobytes()))

    @classmethod
    def from_motion(cls, frame: MotionFrame) -> "WireFrame":
        root = np.concatenate([frame.root.rotation, frame.root.translation])
        return cls(int(round(frame.t * 1e6)), root, frame.keypoints)

    def to_motion(self) -> MotionFrame:
        """Back to a motion frame; the float32 quaternion is renormalized."""
        r = self.root.astype(float)
        quat = r[:4]
        if abs(float(np.dot(quat, quat)) - 1.0) > 1e-12:
            quat = quat_normalize(quat)
        return MotionFrame(self.timestamp_us / 1e6, RigidTransform(quat, r[4:]), self.keypoints.astype(float))


def frame_size(count: int) -> int:
    return HEADER_SIZE + 12 * count


def encode_frame(f: WireFrame) -> bytes:
    head = HEADER.pack(MAGIC, VERSION, f.timestamp_us, f.count, *f.root.tolist())
    return head + f.keypoints.astype("<f4").tobytes()


def decode_frame(buf) -> WireFrame:
    buf = bytes(buf)
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise WireError("bad magic")
    if len(buf) < HEADER_SIZE:
        raise WireError(f"truncated payload: {len(buf)} bytes, header needs {HEADER_SIZE}")
    _, version, ts, count, *root = HEADER.unpack_from(buf)
    if version != VERSION:
        raise WireError(f"unknown version {version}")
    expected = frame_size(count)
    if len(buf) < expected:
        raise WireError(f"truncated payload: {len(buf)} bytes, count {count} needs {expected}")
    if len(buf) > expected:
        raise WireError(f"count mismatch: {len(buf)} bytes for count {count}")
    kp = np.frombuffer(buf, dtype="<f4", count=3 * count, offset=HEADER_SIZE).reshape(count, 3)
    return WireFrame(ts, np.array(root, dtype=np.float32), kp.astype(np.float32))


def pack_message(f: WireFrame) -> bytes:
    body = encode_frame(f)
    return LENGTH_PREFIX.pack(len(body)) + body


class FrameAssembler:
    """Incremental decoder for length-prefixed frames split arbitrarily.

    After a protocol error the assembler is poisoned and emits nothing more.
    """

    def __init__(self):
        self._buf = bytearray()
        self.error: WireError | None = None

    def feed(self, data: bytes) -> list[WireFrame]:
        if self.error is not None:
            raise self.error
        self._buf += data
        out = []
        while True:
            if len(self._buf) < LENGTH_PREFIX.size:
                break
            (length,) = LENGTH_PREFIX.unpack_from(self._buf)
            if not HEADER_SIZE <= length <= MAX_FRAME_SIZE:
                self.error = WireError(f"protocol violation: frame length {length}")
                raise self.error
            # check the magic as soon as it arrives so garbage fails fast
            head = self._buf[LENGTH_PREFIX.size:LENGTH_PREFIX.size + 4]
            if len(head) == 4 and head != MAGIC:
                self.error = WireError("bad magic")
                raise self.error
            end = LENGTH_PREFIX.size + length
            if len(self._buf) < end:
                break
            body = bytes(self._buf[LENGTH_PREFIX.size:end])
            try:
                frame = decode_frame(body)
            except WireError as exc:
                self.error = exc
                raise
            del self._buf[:end]
            out.append(frame)
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)
