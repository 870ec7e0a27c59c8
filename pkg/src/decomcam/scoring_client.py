"""Client for the length-prefixed binary scoring protocol.

A scoring endpoint accepts one request frame per score:

    frame    := body_len u32 LE, body
    request  := C u32, H u32, W u32, C*H*W float32 LE image values,
                prompt_len u32, prompt UTF-8
    response := status u8 (0 = ok), payload
                status 0: score float32 LE
                else:     UTF-8 error message

Frames above MAX_BODY bytes are rejected by conforming servers. The
protocol is stateless; one connection may carry many frames.
"""

from __future__ import annotations

import socket
import struct

import numpy as np

from .errors import ComputationFailedError, InvalidArgumentError
from .tensorops import as_image

MAX_BODY = 256 * 1024 * 1024

STATUS_OK = 0
STATUS_MALFORMED = 1
STATUS_BAD_REQUEST = 2
STATUS_COMPUTE_ERROR = 3


def encode_request(img: np.ndarray, prompt: str) -> bytes:
    img = as_image(img)
    prompt_bytes = prompt.encode("utf-8")
    body = struct.pack("<III", *img.shape)
    body += np.ascontiguousarray(img, dtype="<f4").tobytes()
    body += struct.pack("<I", len(prompt_bytes)) + prompt_bytes
    if len(body) > MAX_BODY:
        raise InvalidArgumentError(f"request body {len(body)} bytes exceeds limit {MAX_BODY}")
    return struct.pack("<I", len(body)) + body


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ComputationFailedError("scoring endpoint closed the connection mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


class EndpointScorer:
    """Scorer that forwards every call to a live scoring endpoint."""

    concurrency_safe = False  # one socket, sequential frames

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self.host = host
        self.port = port
        self.timeout = timeout
        self._sock: socket.socket | None = None

    def _connection(self) -> socket.socket:
        if self._sock is None:
            self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
        return self._sock

    def close(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def score(self, img: np.ndarray, concept: str) -> float:
        frame = encode_request(img, concept)
        try:
            sock = self._connection()
            sock.sendall(frame)
            (body_len,) = struct.unpack("<I", _recv_exact(sock, 4))
            body = _recv_exact(sock, body_len)
        except OSError as e:
            self.close()
            raise ComputationFailedError(
                f"scoring endpoint {self.host}:{self.port} unreachable: {e}"
            ) from e
        if not body:
            raise ComputationFailedError("scoring endpoint returned an empty frame")
        status = body[0]
        if status != STATUS_OK:
            message = body[1:].decode("utf-8", errors="replace")
            raise ComputationFailedError(f"scoring endpoint error {status}: {message}")
        if len(body) != 5:
            raise ComputationFailedError(f"unexpected ok-frame length {len(body)}")
        return float(struct.unpack("<f", body[1:5])[0])

    def __enter__(self) -> "EndpointScorer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
