import struct
import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clot.motion_data import MotionClip, MotionFrame
from clot.pipeline.stream import LatestWins, StreamServer, consume_stream, pump_stream, receive_clip, serve_stream
from clot.pipeline.wire import (
    HEADER_SIZE,
    FrameAssembler,
    WireError,
    WireFrame,
    decode_frame,
    encode_frame,
    frame_size,
    pack_message,
)
from clot.transforms import RigidTransform, quat_normalize

f32 = st.floats(-1e6, 1e6, width=32)


def random_frame(rng, count=None, ts=None):
    count = int(rng.integers(0, 40)) if count is None else count
    ts = int(rng.integers(0, 1 << 63)) if ts is None else ts
    return WireFrame(ts, rng.normal(size=7), rng.normal(size=(count, 3)))


def float32_clip(n=30, count=4, fps=120.0) -> MotionClip:
    """A clip whose values survive the float32 wire exactly."""
    rng = np.random.default_rng(0)
    frames = []
    for k in range(n):
        quat = quat_normalize(np.array([1.0, 0.0, 0.0, 0.0]))
        pos = rng.normal(size=3).astype(np.float32).astype(float)
        kp = rng.normal(size=(count, 3)).astype(np.float32).astype(float)
        frames.append(MotionFrame(round(k / fps, 6), RigidTransform(quat, pos), kp))
    return MotionClip("f32", "WALK", fps, frames)


def test_header_size():
    assert HEADER_SIZE == 43
    assert frame_size(5) == 103
    assert len(encode_frame(random_frame(np.random.default_rng(0), 5))) == 103


@settings(max_examples=200, deadline=None)
@given(ts=st.integers(0, (1 << 64) - 1), root=st.lists(f32, min_size=7, max_size=7),
       kp=st.lists(st.tuples(f32, f32, f32), max_size=30))
def test_round_trip_property(ts, root, kp):
    f = WireFrame(ts, root, np.array(kp, dtype=np.float32).reshape(-1, 3))
    assert decode_frame(encode_frame(f)) == f


def test_round_trip_many(rng):
    for _ in range(2000):
        f = random_frame(rng)
        assert decode_frame(encode_frame(f)) == f


def test_one_byte_fragmentation(rng):
    frames = [random_frame(rng) for _ in range(20)]
    stream = b"".join(pack_message(f) for f in frames)
    asm = FrameAssembler()
    got = []
    for i in range(len(stream)):
        got.extend(asm.feed(stream[i:i + 1]))
    assert got == frames and asm.pending == 0


def test_random_fragmentation(rng):
    frames = [random_frame(rng) for _ in range(50)]
    stream = b"".join(pack_message(f) for f in frames)
    cuts = np.sort(rng.integers(0, len(stream), 80))
    asm = FrameAssembler()
    got = []
    for a, b in zip(np.r_[0, cuts], np.r_[cuts, len(stream)]):
        got.extend(asm.feed(stream[a:b]))
    assert got == frames


def test_malformed_frames(rng):
    good = encode_frame(random_frame(rng, 3))
    with pytest.raises(WireError, match="bad magic"):
        decode_frame(b"XXXX" + good[4:])
    with pytest.raises(WireError, match="truncated payload"):
        decode_frame(good[:20])
    with pytest.raises(WireError, match="truncated payload"):
        decode_frame(good[:-1])
    with pytest.raises(WireError, match="unknown version"):
        decode_frame(good[:4] + b"\x07" + good[5:])
    with pytest.raises(WireError, match="count mismatch"):
        decode_frame(good + b"\x00" * 12)


def test_frame_validation():
    with pytest.raises(WireError, match="u64"):
        WireFrame(-1, np.zeros(7), np.zeros((0, 3)))
    with pytest.raises(WireError, match="too many"):
        WireFrame(0, np.zeros(7), np.zeros((70000, 3)))


def test_assembler_poisoned_after_error(rng):
    asm = FrameAssembler()
    bad = struct.pack("<I", 50) + b"NOPE" + b"\x00" * 46
    with pytest.raises(WireError, match="bad magic"):
        asm.feed(bad)
    with pytest.raises(WireError):
        asm.feed(pack_message(random_frame(rng, 2)))
    with pytest.raises(WireError, match="frame length"):
        FrameAssembler().feed(struct.pack("<I", 3))


def test_assembler_rejects_bad_version_in_stream(rng):
    msg = bytearray(pack_message(random_frame(rng, 1)))
    msg[8] = 9
    with pytest.raises(WireError, match="unknown version"):
        FrameAssembler().feed(bytes(msg))


def test_motion_conversion():
    clip = float32_clip(3)
    f = WireFrame.from_motion(clip.frames[1])
    assert f.timestamp_us == 8333
    back = f.to_motion()
    np.testing.assert_array_equal(back.keypoints, clip.frames[1].keypoints)
    np.testing.assert_array_equal(back.root.translation, clip.frames[1].root.translation)


def test_loopback_float32_exact():
    clip = float32_clip()
    server = serve_stream(clip, chunk_size=7)
    got = receive_clip(*server.address, clip.id, clip.category, clip.fps)
    server.join(5)
    assert len(got.frames) == len(clip.frames)
    for a, b in zip(got.frames, clip.frames):
        assert a.t == b.t
        assert a.keypoints.tobytes() == b.keypoints.tobytes()
        assert a.root.translation.tobytes() == b.root.translation.tobytes()


def test_stream_closed_mid_frame():
    import socket

    srv = socket.create_server(("127.0.0.1", 0))
    addr = srv.getsockname()[:2]

    def serve():
        conn, _ = srv.accept()
        conn.sendall(pack_message(WireFrame(0, np.zeros(7), np.zeros((2, 3))))[:-5])
        conn.close()
        srv.close()

    th = threading.Thread(target=serve)
    th.start()
    with pytest.raises(WireError, match="mid-frame"):
        list(consume_stream(*addr))
    th.join()


def test_client_disconnect_is_not_an_error():
    clip = float32_clip(n=2000)
    server = StreamServer(clip, rate_hz=2000).start()
    stream = consume_stream(*server.address)
    next(stream)
    stream.close()
    server.join(10)
    assert server.disconnected or server.sent == len(clip.frames)


def test_latest_wins():
    box = LatestWins()
    for i in range(5):
        box.put(i)
    assert box.take(0) == 4 and box.dropped == 4
    assert box.take(0.01) is None
    box.close()
    assert box.take(None) is None


def test_pump_closes_mailbox():
    clip = float32_clip(5)
    server = serve_stream(clip)
    box = LatestWins()
    pump_stream(*server.address, box).join(5)
    server.join(5)
    assert box.closed
    assert box.take(0).timestamp_us == WireFrame.from_motion(clip.frames[-1]).timestamp_us
