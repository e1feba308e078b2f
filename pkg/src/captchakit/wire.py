"""Adapter wire protocol, version 1.

Every request and response body is one framed message:

    u32 big-endian: length of the JSON header that follows
    header: UTF-8 JSON object; always carries "protocol_version": 1 and
        "parts": [{"id": str, "length": int}, ...] describing the binary
        attachments in order
    parts: the attachments' raw bytes, concatenated in header order

Attachments carry things JSON should not: PNG images and logits
matrices. A logits matrix is serialized as

    u32 T, u32 K (= C+1 classes, blank last), u32 L, L bytes of UTF-8
    alphabet, then T*K float32 log-probabilities, row-major.

float32 truncation can leave rows summing to 1 only approximately, so
decoding re-normalizes each row with a float64 log-softmax.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .ctc import LogitsMatrix

PROTOCOL_VERSION = 1

_U32 = struct.Struct(">I")


class WireError(ValueError):
    """Raised on malformed frames or version mismatches."""


def pack_message(header: dict, parts: list[tuple[str, bytes]] | None = None) -> bytes:
    """Frame a header plus binary attachments into one message."""
    parts = parts or []
    head = dict(header)
    head["protocol_version"] = PROTOCOL_VERSION
    head["parts"] = [{"id": pid, "length": len(data)} for pid, data in parts]
    head_bytes = json.dumps(head, sort_keys=True).encode("utf-8")
    chunks = [_U32.pack(len(head_bytes)), head_bytes]
    chunks.extend(data for _, data in parts)
    return b"".join(chunks)


def unpack_message(blob: bytes) -> tuple[dict, dict[str, bytes]]:
    """Parse a framed message into (header, parts by id)."""
    if len(blob) < 4:
        raise WireError("message shorter than its length prefix")
    (head_len,) = _U32.unpack_from(blob, 0)
    if len(blob) < 4 + head_len:
        raise WireError("header truncated")
    try:
        header = json.loads(blob[4 : 4 + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise WireError(f"bad header: {e}") from e
    if not isinstance(header, dict):
        raise WireError("header must be a JSON object")
    version = header.get("protocol_version")
    if version != PROTOCOL_VERSION:
        raise WireError(f"unsupported protocol_version {version!r}")
    parts: dict[str, bytes] = {}
    offset = 4 + head_len
    for spec in header.get("parts", []):
        pid, length = spec["id"], spec["length"]
        if offset + length > len(blob):
            raise WireError(f"part {pid!r} truncated")
        if pid in parts:
            raise WireError(f"duplicate part id {pid!r}")
        parts[pid] = blob[offset : offset + length]
        offset += length
    if offset != len(blob):
        raise WireError(f"{len(blob) - offset} trailing bytes after last part")
    return header, parts


def encode_logits(logits: LogitsMatrix) -> bytes:
    """Serialize a logits matrix to its wire form."""
    alpha = logits.alphabet.encode("utf-8")
    t, k = logits.log_probs.shape
    head = _U32.pack(t) + _U32.pack(k) + _U32.pack(len(alpha)) + alpha
    body = np.ascontiguousarray(logits.log_probs, dtype=">f4").tobytes()
    return head + body


def decode_logits(blob: bytes) -> LogitsMatrix:
    """Parse the wire form back into a LogitsMatrix (rows re-normalized)."""
    if len(blob) < 12:
        raise WireError("logits blob shorter than its fixed header")
    t, k, alpha_len = struct.unpack_from(">III", blob, 0)
    offset = 12 + alpha_len
    if len(blob) < offset:
        raise WireError("logits alphabet truncated")
    alphabet = blob[12:offset].decode("utf-8")
    if k != len(alphabet) + 1:
        raise WireError(f"class count {k} != alphabet size {len(alphabet)} + blank")
    expect = t * k * 4
    if len(blob) != offset + expect:
        raise WireError(f"logits body length {len(blob) - offset} != {expect}")
    raw = np.frombuffer(blob, dtype=">f4", count=t * k, offset=offset)
    lp = raw.reshape(t, k).astype(np.float64)
    # float64 log-softmax per row to absorb float32 round-off
    lp = lp - lp.max(axis=1, keepdims=True)
    lp = lp - np.log(np.exp(lp).sum(axis=1, keepdims=True))
    return LogitsMatrix(lp, alphabet)
