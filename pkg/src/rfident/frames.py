"""Inter-stage frame protocol.

Little-endian header followed by the image payload::

    magic     4s   b"SPTF"
    version   u8
    index     u64
    t0_ns     u64
    n_bins    u32
    n_rows    u32
    channels  u8   1 = gray, 3 = RGB
    payload   n_rows * n_bins * channels bytes, row-major, channel-interleaved
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadMagic, FrameError, TruncatedPayload, VersionUnsupported

MAGIC = b"SPTF"
VERSION = 1
HEADER = struct.Struct("<4sBQQIIB")
HEADER_SIZE = HEADER.size


@dataclass(frozen=True)
class FrameMessage:
    frame_index: int
    t0_ns: int
    n_bins: int
    n_rows: int
    channels: int
    payload: bytes
    version: int = VERSION

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise FrameError(f"channels must be 1 or 3, got {self.channels}")
        if len(self.payload) != self.payload_size:
            raise FrameError("payload length does not match header")

    @property
    def payload_size(self) -> int:
        return self.n_rows * self.n_bins * self.channels

    @classmethod
    def from_image(cls, img, frame_index: int = 0, t0_ns: int = 0) -> "FrameMessage":
        img = np.ascontiguousarray(img, dtype=np.uint8)
        channels = 1 if img.ndim == 2 else img.shape[2]
        return cls(frame_index, t0_ns, img.shape[1], img.shape[0], channels, img.tobytes())

    def image(self) -> np.ndarray:
        arr = np.frombuffer(self.payload, dtype=np.uint8)
        if self.channels == 1:
            return arr.reshape(self.n_rows, self.n_bins)
        return arr.reshape(self.n_rows, self.n_bins, self.channels)


def encode_frame(msg: FrameMessage) -> bytes:
    header = HEADER.pack(MAGIC, msg.version, msg.frame_index, msg.t0_ns,
                         msg.n_bins, msg.n_rows, msg.channels)
    return header + bytes(msg.payload)


def _parse_header(buf):
    if len(buf) < HEADER_SIZE:
        if bytes(buf[:4]) != MAGIC[: min(4, len(buf))]:
            raise BadMagic("bad magic")
        raise TruncatedPayload(f"header needs {HEADER_SIZE} bytes, got {len(buf)}")
    magic, version, index, t0, n_bins, n_rows, channels = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionUnsupported(f"version {version}")
    if channels not in (1, 3):
        raise FrameError(f"channels must be 1 or 3, got {channels}")
    return version, index, t0, n_bins, n_rows, channels


def decode_frame(data: bytes) -> FrameMessage:
    buf = memoryview(data)
    version, index, t0, n_bins, n_rows, channels = _parse_header(buf)
    size = n_bins * n_rows * channels
    body = buf[HEADER_SIZE:]
    if len(body) < size:
        raise TruncatedPayload(f"payload needs {size} bytes, got {len(body)}")
    if len(body) > size:
        raise FrameError(f"{len(body) - size} trailing bytes after payload")
    return FrameMessage(index, t0, n_bins, n_rows, channels, bytes(body), version)


def read_frame(stream) -> FrameMessage | None:
    """Read one frame from a binary file object; None at a clean EOF."""
    head = stream.read(HEADER_SIZE)
    if not head:
        return None
    _, _, _, n_bins, n_rows, channels = _parse_header(head)
    size = n_bins * n_rows * channels
    body = stream.read(size)
    if len(body) < size:
        raise TruncatedPayload(f"payload needs {size} bytes, got {len(body)}")
    return decode_frame(head + body)


def write_frame(stream, msg: FrameMessage) -> int:
    data = encode_frame(msg)
    stream.write(data)
    return len(data)
