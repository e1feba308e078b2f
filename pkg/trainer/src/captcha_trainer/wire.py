"""Framing for adapter protocol v1, server side.

One message per request/response body:

    u32 big-endian: length of the JSON header that follows
    header: UTF-8 JSON object carrying "protocol_version": 1 and
        "parts": [{"id": str, "length": int}, ...]
    parts: the attachments' raw bytes, concatenated in header order

Logits attachments: u32 T, u32 K (classes incl. trailing blank), u32 L,
L bytes of UTF-8 alphabet, then T*K big-endian float32 log-probs in
row-major order. Decoding re-normalizes rows in float64 because the
float32 round trip breaks exact row sums.
"""

from __future__ import annotations

import json
import struct

import numpy as np

PROTOCOL_VERSION = 1

_U32 = struct.Struct(">I")


class WireError(ValueError):
    pass


def pack_message(header: dict, parts: list[tuple[str, bytes]] | None = None) -> bytes:
    parts = parts or []
    head = dict(header)
    head["protocol_version"] = PROTOCOL_VERSION
    head["parts"] = [{"id": pid, "length": len(data)} for pid, data in parts]
    head_bytes = json.dumps(head, sort_keys=True).encode("utf-8")
    chunks = [_U32.pack(len(head_bytes)), head_bytes]
    chunks.extend(data for _, data in parts)
    return b"".join(chunks)


def unpack_message(blob: bytes) -> tuple[dict, dict[str, bytes]]:
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
    if header.get("protocol_version") != PROTOCOL_VERSION:
        raise WireError(f"unsupported protocol_version {header.get('protocol_version')!r}")
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


def encode_logits(log_probs: np.ndarray, alphabet: str) -> bytes:
    """Serialize a (T, C+1) log-prob matrix, blank in the last column."""
    t, k = log_probs.shape
    if k != len(alphabet) + 1:
        raise WireError(f"class count {k} != alphabet size {len(alphabet)} + blank")
    alpha = alphabet.encode("utf-8")
    head = _U32.pack(t) + _U32.pack(k) + _U32.pack(len(alpha)) + alpha
    return head + np.ascontiguousarray(log_probs, dtype=">f4").tobytes()


def decode_logits(blob: bytes) -> tuple[np.ndarray, str]:
    if len(blob) < 12:
        raise WireError("logits blob shorter than its fixed header")
    t, k, alpha_len = struct.unpack_from(">III", blob, 0)
    offset = 12 + alpha_len
    if len(blob) < offset:
        raise WireError("logits alphabet truncated")
    alphabet = blob[12:offset].decode("utf-8")
    if k != len(alphabet) + 1:
        raise WireError(f"class count {k} != alphabet size {len(alphabet)} + blank")
    if len(blob) != offset + t * k * 4:
        raise WireError(f"logits body length {len(blob) - offset} != {t * k * 4}")
    raw = np.frombuffer(blob, dtype=">f4", count=t * k, offset=offset)
    lp = raw.reshape(t, k).astype(np.float64)
    lp = lp - lp.max(axis=1, keepdims=True)
    lp = lp - np.log(np.exp(lp).sum(axis=1, keepdims=True))
    return lp, alphabet
