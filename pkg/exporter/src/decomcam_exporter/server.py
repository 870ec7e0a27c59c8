"""Minimal scoring endpoint speaking a length-prefixed binary protocol.

    frame    := body_len u32 LE, body
    request  := C u32, H u32, W u32, C*H*W float32 LE image values,
                prompt_len u32, prompt UTF-8
    response := status u8, payload
                status 0 -> score float32 LE
                status 1 -> malformed frame (UTF-8 message)
                status 2 -> bad request (empty prompt, bad shape)
                status 3 -> compute error

Requests are handled sequentially (model inference is the bottleneck);
the protocol is stateless, so one connection may carry many frames and
several exporter processes can serve in parallel.
"""

from __future__ import annotations

import socket
import struct
import threading

import numpy as np

MAX_BODY = 256 * 1024 * 1024

STATUS_OK = 0
STATUS_MALFORMED = 1
STATUS_BAD_REQUEST = 2
STATUS_COMPUTE_ERROR = 3


def _error_frame(status: int, message: str) -> bytes:
    payload = message.encode("utf-8")
    return struct.pack("<IB", 1 + len(payload), status) + payload


def _ok_frame(score: float) -> bytes:
    return struct.pack("<IB", 5, STATUS_OK) + struct.pack("<f", np.float32(score))


def _parse_request(body: bytes) -> tuple[np.ndarray, str]:
    if len(body) < 16:
        raise ValueError("request body shorter than its fixed header")
    c, h, w = struct.unpack("<III", body[:12])
    if c != 3 or h == 0 or w == 0:
        raise ValueError(f"unsupported image shape ({c}, {h}, {w})")
    n_bytes = 4 * c * h * w
    if len(body) < 12 + n_bytes + 4:
        raise ValueError("image payload truncated")
    img = np.frombuffer(body[12 : 12 + n_bytes], dtype="<f4").reshape(c, h, w)
    (prompt_len,) = struct.unpack("<I", body[12 + n_bytes : 16 + n_bytes])
    prompt_bytes = body[16 + n_bytes : 16 + n_bytes + prompt_len]
    if len(prompt_bytes) != prompt_len:
        raise ValueError("prompt truncated")
    return img.copy(), prompt_bytes.decode("utf-8")


class ScoreServer:
    """Sequential scoring server bound to one adapter."""

    def __init__(self, adapter, host: str = "127.0.0.1", port: int = 0):
        self.adapter = adapter
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind((host, port))
        self.sock.listen(4)
        self.host, self.port = self.sock.getsockname()
        self._stop = threading.Event()

    def _recv_exact(self, conn: socket.socket, n: int) -> bytes | None:
        data = b""
        while len(data) < n:
            chunk = conn.recv(n - len(data))
            if not chunk:
                return None
            data += chunk
        return data

    def _handle_connection(self, conn: socket.socket) -> None:
        with conn:
            while not self._stop.is_set():
                head = self._recv_exact(conn, 4)
                if head is None:
                    return
                (body_len,) = struct.unpack("<I", head)
                if body_len > MAX_BODY:
                    conn.sendall(_error_frame(STATUS_MALFORMED, f"body {body_len} exceeds limit"))
                    return
                body = self._recv_exact(conn, body_len)
                if body is None:
                    return
                conn.sendall(self._respond(body))

    def _respond(self, body: bytes) -> bytes:
        try:
            img, prompt = _parse_request(body)
        except ValueError as e:
            return _error_frame(STATUS_MALFORMED, str(e))
        if not prompt.strip():
            return _error_frame(STATUS_BAD_REQUEST, "empty concept prompt")
        try:
            return _ok_frame(self.adapter.score(img, prompt))
        except ValueError as e:
            return _error_frame(STATUS_BAD_REQUEST, str(e))
        except Exception as e:
            return _error_frame(STATUS_COMPUTE_ERROR, f"{type(e).__name__}: {e}")

    def serve_forever(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self.sock.accept()
            except OSError:
                return
            self._handle_connection(conn)

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread

    def close(self) -> None:
        self._stop.set()
        self.sock.close()
