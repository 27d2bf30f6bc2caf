"""TCP transport for mocap frames and a latest-wins mailbox for real-time use."""

from __future__ import annotations

import logging
import socket
import threading
import time
from typing import Iterator

from ..motion_data import MotionClip
from .wire import FrameAssembler, WireError, WireFrame, pack_message

log = logging.getLogger(__name__)


class StreamServer:
    """Serves one client: sends every clip frame, then closes the connection.

    ``rate_hz`` paces frames in wall-clock time (None sends as fast as
    possible); ``chunk_size`` splits the byte stream into small writes.
    """

    def __init__(self, clip: MotionClip, host: str = "127.0.0.1", port: int = 0,
                 rate_hz: float | None = None, chunk_size: int | None = None, accept_timeout: float = 30.0):
        self.frames = [WireFrame.from_motion(f) for f in clip.frames]
        self.rate_hz = rate_hz
        self.chunk_size = chunk_size
        self._sock = socket.create_server((host, port))
        self._sock.settimeout(accept_timeout)
        self.address = self._sock.getsockname()[:2]
        self._thread: threading.Thread | None = None
        self.error: BaseException | None = None
        self.sent = 0
        self.disconnected = False

    def _send(self, conn: socket.socket, data: bytes) -> None:
        if self.chunk_size is None:
            conn.sendall(data)
            return
        for i in range(0, len(data), self.chunk_size):
            conn.sendall(data[i:i + self.chunk_size])

    def serve_once(self) -> None:
        try:
            conn, _ = self._sock.accept()
            with conn:
                conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                start = time.monotonic()
                for i, frame in enumerate(self.frames):
                    if self.rate_hz:
                        delay = start + i / self.rate_hz - time.monotonic()
                        if delay > 0:
                            time.sleep(delay)
                    self._send(conn, pack_message(frame))
                    self.sent += 1
        except (BrokenPipeError, ConnectionResetError):
            # a client may stop listening early; that ends the session normally
            self.disconnected = True
            log.info("client disconnected after %d frames", self.sent)
        except BaseException as exc:  # reported to the owner thread
            self.error = exc
            log.warning("stream server failed: %s", exc)
        finally:
            self._sock.close()

    def start(self) -> "StreamServer":
        self._thread = threading.Thread(target=self.serve_once, daemon=True)
        self._thread.start()
        return self

    def join(self, timeout: float | None = None) -> None:
        if self._thread is not None:
            self._thread.join(timeout)
        if self.error is not None:
            raise self.error


def serve_stream(clip: MotionClip, host: str = "127.0.0.1", port: int = 0, rate_hz: float | None = None,
                 chunk_size: int | None = None) -> StreamServer:
    """Start serving ``clip`` in a background thread; the bound address is ``.address``."""
    return StreamServer(clip, host, port, rate_hz, chunk_size).start()


def consume_stream(host: str, port: int, timeout: float = 10.0, recv_size: int = 65536) -> Iterator[WireFrame]:
    """Yield frames until the server closes; protocol violations raise WireError."""
    assembler = FrameAssembler()
    with socket.create_connection((host, port), timeout=timeout) as sock:
        while True:
            data = sock.recv(recv_size)
            if not data:
                break
            yield from assembler.feed(data)
    if assembler.pending:
        raise WireError(f"connection closed mid-frame ({assembler.pending} bytes pending)")


def receive_clip(host: str, port: int, clip_id: str, category: str, fps: float, timeout: float = 10.0) -> MotionClip:
    frames = [f.to_motion() for f in consume_stream(host, port, timeout)]
    return MotionClip(clip_id, category, fps, frames)


class LatestWins:
    """Single-slot mailbox: a newer item replaces an unread older one."""

    def __init__(self):
        self._cond = threading.Condition()
        self._item = None
        self._seq = 0
        self.dropped = 0
        self.closed = False

    def put(self, item) -> None:
        with self._cond:
            if self._item is not None:
                self.dropped += 1
            self._item = item
            self._seq += 1
            self._cond.notify_all()

    def close(self) -> None:
        with self._cond:
            self.closed = True
            self._cond.notify_all()

    def take(self, timeout: float | None = None):
        """Newest unread item, waiting up to ``timeout``; None if nothing new."""
        with self._cond:
            if self._item is None and not self.closed:
                self._cond.wait(timeout)
            item, self._item = self._item, None
            return item


def pump_stream(host: str, port: int, mailbox: LatestWins, timeout: float = 10.0) -> threading.Thread:
    """Receive frames in the background into ``mailbox``."""

    def run():
        try:
            for frame in consume_stream(host, port, timeout):
                mailbox.put(frame)
        except (OSError, WireError) as exc:
            log.warning("stream consumer stopped: %s", exc)
        finally:
            mailbox.close()

    th = threading.Thread(target=run, daemon=True)
    th.start()
    return th
