"""UDP estimation service: fixed-size request/response datagrams.

Wire format (little-endian throughout):

- request, 2067 bytes: magic "MELF" (4s) | version=1 (u8) | seq (u32) |
  t_end_us (u64) | n_samples=512 (u16) | 512 float32 samples.
- response, 14 bytes: magic | version | seq echoed (u32) |
  estimate (float32, N) | status (u8): 0 ok, 1 model-not-loaded,
  2 bad-request.

The server is stateless across requests apart from the loaded checkpoint;
the client is fire-and-wait with a per-request sequence number, returning
None (a stale marker) on timeout so the control loop holds its previous
estimate.  Set MELFORCE_LOG=debug for per-datagram logging.
"""

from __future__ import annotations

import logging
import os
import socket
import struct
import threading
from dataclasses import dataclass, field

import numpy as np

from .dsp import WINDOW_SAMPLES

MAGIC = b"MELF"
VERSION = 1
REQUEST_STRUCT = struct.Struct(f"<4sBIQH{WINDOW_SAMPLES}f")
RESPONSE_STRUCT = struct.Struct("<4sBIfB")
REQUEST_SIZE = REQUEST_STRUCT.size
RESPONSE_SIZE = RESPONSE_STRUCT.size
assert REQUEST_SIZE == 2067 and RESPONSE_SIZE == 14

STATUS_OK = 0
STATUS_MODEL_NOT_LOADED = 1
STATUS_BAD_REQUEST = 2

_SEQ_SLICE = slice(5, 9)  # byte range of the seq field, shared by both frames

log = logging.getLogger("melforce.service")
log.setLevel(
    logging.DEBUG if os.environ.get("MELFORCE_LOG", "").lower() == "debug" else logging.INFO
)


class WireFormatError(ValueError):
    """Decode failure; names the offending field."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class EstimateRequest:
    seq: int
    t_end_us: int
    samples: np.ndarray  # float32[512]

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float32)
        if samples.shape != (WINDOW_SAMPLES,):
            raise ValueError(f"request must carry {WINDOW_SAMPLES} samples")
        object.__setattr__(self, "samples", samples)
        if not 0 <= self.seq <= 0xFFFFFFFF:
            raise ValueError("seq out of u32 range")
        if not 0 <= self.t_end_us <= 0xFFFFFFFFFFFFFFFF:
            raise ValueError("t_end_us out of u64 range")


@dataclass(frozen=True)
class EstimateResponse:
    seq: int
    estimate: float
    status: int = STATUS_OK

    def __post_init__(self):
        if not 0 <= self.seq <= 0xFFFFFFFF:
            raise ValueError("seq out of u32 range")
        if self.status not in (STATUS_OK, STATUS_MODEL_NOT_LOADED, STATUS_BAD_REQUEST):
            raise ValueError(f"unknown status {self.status}")


def encode_request(req: EstimateRequest) -> bytes:
    return REQUEST_STRUCT.pack(
        MAGIC, VERSION, req.seq, req.t_end_us, WINDOW_SAMPLES, *req.samples
    )


def decode_request(data: bytes) -> EstimateRequest:
    if len(data) != REQUEST_SIZE:
        raise WireFormatError("length", f"expected {REQUEST_SIZE} bytes, got {len(data)}")
    magic, version, seq, t_end_us, n_samples = struct.unpack_from("<4sBIQH", data)
    if magic != MAGIC:
        raise WireFormatError("magic", f"expected {MAGIC!r}, got {magic!r}")
    if version != VERSION:
        raise WireFormatError("version", f"expected {VERSION}, got {version}")
    if n_samples != WINDOW_SAMPLES:
        raise WireFormatError("n_samples", f"bad sample count {n_samples}")
    samples = np.frombuffer(data, dtype="<f4", count=WINDOW_SAMPLES, offset=19)
    return EstimateRequest(seq=seq, t_end_us=t_end_us, samples=samples.copy())


def encode_response(rsp: EstimateResponse) -> bytes:
    return RESPONSE_STRUCT.pack(MAGIC, VERSION, rsp.seq, rsp.estimate, rsp.status)


def decode_response(data: bytes) -> EstimateResponse:
    if len(data) != RESPONSE_SIZE:
        raise WireFormatError("length", f"expected {RESPONSE_SIZE} bytes, got {len(data)}")
    magic, version, seq, estimate, status = RESPONSE_STRUCT.unpack(data)
    if magic != MAGIC:
        raise WireFormatError("magic", f"expected {MAGIC!r}, got {magic!r}")
    if version != VERSION:
        raise WireFormatError("version", f"expected {VERSION}, got {version}")
    if status not in (STATUS_OK, STATUS_MODEL_NOT_LOADED, STATUS_BAD_REQUEST):
        raise WireFormatError("status", f"unknown status {status}")
    return EstimateResponse(seq=seq, estimate=estimate, status=status)


def _recoverable_seq(data: bytes) -> int | None:
    """Sequence number of a malformed datagram, if it can be trusted."""
    if len(data) < _SEQ_SLICE.stop:
        return None
    if data[:4] != MAGIC or data[4] != VERSION:
        return None
    return int.from_bytes(data[_SEQ_SLICE], "little")


class UdpEstimatorServer:
    """Single-socket request/response server around a ForceEstimator."""

    def __init__(self, estimator=None, host: str = "127.0.0.1", port: int = 0):
        self.estimator = estimator
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            self._sock.bind((host, port))
        except OSError:
            self._sock.close()
            raise
        self._sock.settimeout(0.2)
        self._stop = threading.Event()
        self.requests_served = 0

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()

    def handle_datagram(self, data: bytes) -> bytes | None:
        """Response bytes for one datagram, or None to stay silent."""
        try:
            req = decode_request(data)
        except WireFormatError as err:
            seq = _recoverable_seq(data)
            log.debug("dropping malformed datagram (%s)", err)
            if seq is None:
                return None
            return encode_response(
                EstimateResponse(seq=seq, estimate=0.0, status=STATUS_BAD_REQUEST)
            )
        if self.estimator is None:
            return encode_response(
                EstimateResponse(seq=req.seq, estimate=0.0, status=STATUS_MODEL_NOT_LOADED)
            )
        value = self.estimator(req.samples.astype(np.float64))
        self.requests_served += 1
        return encode_response(EstimateResponse(seq=req.seq, estimate=value))

    def serve_forever(self):
        """Serve until shutdown() is called from another thread or a signal."""
        while not self._stop.is_set():
            try:
                data, addr = self._sock.recvfrom(4096)
            except socket.timeout:
                continue
            except OSError:
                break
            response = self.handle_datagram(data)
            if response is not None:
                try:
                    self._sock.sendto(response, addr)
                except OSError:
                    log.debug("send failed to %s", addr)
        self._sock.close()

    def shutdown(self):
        self._stop.set()


@dataclass
class EstimatorClient:
    """Blocking poll client with sequence matching and latency accounting."""

    address: tuple[str, int]
    timeout_s: float = 0.010
    latencies_s: list = field(default_factory=list)

    def __post_init__(self):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind(("0.0.0.0", 0))  # fixed local port for the reply path
        self._seq = 0

    def close(self):
        self._sock.close()

    def poll(self, samples: np.ndarray, t_end_us: int = 0) -> float | None:
        """One request/response round trip.

        Returns the estimate, or None (stale marker) on timeout / socket
        error so the caller can hold its previous value.  Out-of-order
        responses with old sequence numbers are ignored.
        """
        import time

        self._seq = (self._seq + 1) & 0xFFFFFFFF
        request = encode_request(
            EstimateRequest(seq=self._seq, t_end_us=t_end_us, samples=samples)
        )
        start = time.perf_counter()
        deadline = start + self.timeout_s
        try:
            self._sock.sendto(request, self.address)
            while True:
                remaining = deadline - time.perf_counter()
                if remaining <= 0:
                    return None
                self._sock.settimeout(remaining)
                try:
                    data, _ = self._sock.recvfrom(4096)
                except socket.timeout:
                    return None
                try:
                    rsp = decode_response(data)
                except WireFormatError:
                    continue
                if rsp.seq != self._seq:
                    continue  # stale response from an earlier poll
                if rsp.status != STATUS_OK:
                    return None
                self.latencies_s.append(time.perf_counter() - start)
                return float(rsp.estimate)
        except OSError as err:
            log.debug("poll failed: %s", err)
            return None

    def latency_percentile(self, q: float) -> float:
        if not self.latencies_s:
            return float("nan")
        return float(np.percentile(self.latencies_s, q))
