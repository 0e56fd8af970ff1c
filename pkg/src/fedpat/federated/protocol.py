"""Length-prefixed JSON messages exchanged between federation clients and server.

Every frame is a 4-byte big-endian unsigned length followed by a UTF-8 JSON
body ``{"type", "round", "client_id", "payload"}``.
"""

from __future__ import annotations

import json
import socket
import struct
from typing import Any, Optional

HEADER = struct.Struct(">I")
MAX_MESSAGE_SIZE = 256 * 1024 * 1024

HELLO = "HELLO"
GLOBAL = "GLOBAL"
UPDATE = "UPDATE"
SUM = "SUM"
BYE = "BYE"
ERROR = "ERROR"
MESSAGE_TYPES = frozenset({HELLO, GLOBAL, UPDATE, SUM, BYE, ERROR})


class ProtocolError(RuntimeError):
    pass


def make_message(type_: str, round_: int = 0, client_id: Optional[int] = None,
                 payload: Optional[dict] = None) -> dict:
    if type_ not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown message type {type_!r}")
    return {"type": type_, "round": int(round_), "client_id": client_id, "payload": payload or {}}


def encode_message(msg: dict) -> bytes:
    body = json.dumps(msg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    if len(body) > MAX_MESSAGE_SIZE:
        raise ProtocolError("message too large")
    return HEADER.pack(len(body)) + body


def decode_body(body: bytes) -> dict:
    try:
        msg = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed message body: {exc}") from exc
    if not isinstance(msg, dict) or not {"type", "round", "client_id", "payload"} <= msg.keys():
        raise ProtocolError("message lacks required fields")
    if msg["type"] not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown message type {msg['type']!r}")
    return msg


def decode_message(frame: bytes) -> dict:
    """Decode one complete frame (header included)."""
    if len(frame) < HEADER.size:
        raise ProtocolError("truncated header")
    (length,) = HEADER.unpack_from(frame)
    if len(frame) - HEADER.size != length:
        raise ProtocolError(f"frame length {len(frame) - HEADER.size} does not match header {length}")
    return decode_body(frame[HEADER.size:])


def _recv_exactly(sock: socket.socket, size: int) -> bytes:
    chunks = []
    remaining = size
    while remaining:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            raise ProtocolError("connection closed mid-message")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def send_message(sock: socket.socket, msg: dict) -> None:
    sock.sendall(encode_message(msg))


def recv_message(sock: socket.socket) -> dict:
    (length,) = HEADER.unpack(_recv_exactly(sock, HEADER.size))
    if length > MAX_MESSAGE_SIZE:
        raise ProtocolError("message too large")
    return decode_body(_recv_exactly(sock, length))


def expect(msg: dict, type_: str, round_: Optional[int] = None) -> dict:
    if msg["type"] == ERROR:
        raise ProtocolError(f"peer reported error: {msg['payload'].get('reason')}")
    if msg["type"] != type_:
        raise ProtocolError(f"expected {type_}, got {msg['type']}")
    if round_ is not None and msg["round"] != round_:
        raise ProtocolError(f"expected round {round_}, got {msg['round']}")
    return msg["payload"]


def ciphertext_payload(values: list[int], shape: tuple[int, int], exponent: int) -> dict[str, Any]:
    return {"shape": list(shape), "exponent": exponent, "ciphertexts": [str(v) for v in values]}


def parse_ciphertext_payload(payload: dict) -> tuple[list[int], tuple[int, int], int]:
    try:
        shape = tuple(int(s) for s in payload["shape"])
        values = [int(v) for v in payload["ciphertexts"]]
        exponent = int(payload["exponent"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"bad ciphertext payload: {exc}") from exc
    if len(shape) != 2 or shape[0] * shape[1] != len(values):
        raise ProtocolError(f"{len(values)} ciphertexts do not fill shape {shape}")
    return values, shape, exponent
