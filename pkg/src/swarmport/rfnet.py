"""Byte-exact radio framing and a seeded multi-channel medium.

Hub and vehicles exchange four message kinds over per-vehicle channels.
Frames carry a CRC-16/CCITT-FALSE over everything between the sync byte
and the checksum; the medium drops or delays frames deterministically
from a seeded generator.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

from .errors import (
    BadLength,
    BadSync,
    BadVersion,
    CrcMismatch,
    IoFailure,
    PayloadTooLarge,
    UnknownKind,
    VehicleLimitExceeded,
)
from .grid import NodeId

SYNC = 0x7E
VERSION = 0x01
MAX_PAYLOAD = 26
CHANNEL_COUNT = 128


class Channel(NamedTuple):
    index: int


class MessageKind(IntEnum):
    ACTIVATE = 0x01
    ASSIGN_DESTINATION = 0x02
    TELEMETRY = 0x03
    ACK = 0x04


@dataclass
class Message:
    kind: MessageKind
    vehicle_id: int
    dest: NodeId | None = None
    x_mm: int = 0
    y_mm: int = 0
    speed_mm_s: int = 0
    heading_cdeg: int = 0


def assign_channel(vehicle_id: int) -> Channel:
    """One distinct frequency per vehicle; the transceiver offers 128."""
    if not 0 <= vehicle_id < CHANNEL_COUNT:
        raise VehicleLimitExceeded(f"vehicle_id {vehicle_id} outside 0..{CHANNEL_COUNT - 1}")
    return Channel(vehicle_id)


def crc16_ccitt_false(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection."""
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            if crc & 0x8000:
                crc = ((crc << 1) ^ 0x1021) & 0xFFFF
            else:
                crc = (crc << 1) & 0xFFFF
    return crc


def _payload_bytes(message: Message) -> bytes:
    if message.kind == MessageKind.ASSIGN_DESTINATION:
        if message.dest is None:
            raise PayloadTooLarge("ASSIGN_DESTINATION requires a destination node")
        return struct.pack(">HH", message.dest[0], message.dest[1])
    if message.kind == MessageKind.TELEMETRY:
        return struct.pack(
            ">HHHH", message.x_mm, message.y_mm, message.speed_mm_s, message.heading_cdeg
        )
    return b""


def encode(message: Message) -> bytes:
    """Serialize to the fixed wire layout; deterministic bytes."""
    payload = _payload_bytes(message)
    if len(payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    body = bytes([VERSION, message.kind, message.vehicle_id, len(payload)]) + payload
    return bytes([SYNC]) + body + struct.pack(">H", crc16_ccitt_false(body))


def decode(data: bytes) -> Message:
    """Inverse of encode; names the first failing check."""
    if len(data) < 1 or data[0] != SYNC:
        raise BadSync("missing 0x7E sync byte")
    if len(data) < 2 or data[1] != VERSION:
        raise BadVersion(f"unsupported version byte")
    if len(data) < 7:
        raise BadLength(f"frame too short: {len(data)} bytes")
    length = data[4]
    if length > MAX_PAYLOAD or len(data) != 7 + length:
        raise BadLength(f"length byte {length} inconsistent with {len(data)}-byte frame")
    body = data[1:-2]
    (crc,) = struct.unpack(">H", data[-2:])
    if crc != crc16_ccitt_false(body):
        raise CrcMismatch("checksum does not match frame body")
    kind_byte, vehicle_id = data[2], data[3]
    try:
        kind = MessageKind(kind_byte)
    except ValueError:
        raise UnknownKind(f"unknown message kind 0x{kind_byte:02x}") from None
    payload = data[5:-2]
    if kind == MessageKind.ASSIGN_DESTINATION:
        if length != 4:
            raise BadLength(f"ASSIGN_DESTINATION payload must be 4 bytes, got {length}")
        ix, iy = struct.unpack(">HH", payload)
        return Message(kind, vehicle_id, dest=NodeId(ix, iy))
    if kind == MessageKind.TELEMETRY:
        if length != 8:
            raise BadLength(f"TELEMETRY payload must be 8 bytes, got {length}")
        x_mm, y_mm, speed, heading = struct.unpack(">HHHH", payload)
        return Message(kind, vehicle_id, x_mm=x_mm, y_mm=y_mm, speed_mm_s=speed, heading_cdeg=heading)
    if length != 0:
        raise BadLength(f"{kind.name} payload must be empty, got {length} bytes")
    return Message(kind, vehicle_id)


@dataclass
class Radio:
    channel: Channel
    inbox: list[tuple[int, int, bytes]] = field(default_factory=list)


class Medium:
    """Broadcast radio: each attached radio on a channel hears every send.

    Loss is decided once per transmission (the whole broadcast drops), and
    latency is a constant tick delay, so a fixed seed replays identically.
    """

    def __init__(self, loss_probability: float = 0.0, latency_ticks: int = 0, seed: int = 0,
                 capture: bool = False) -> None:
        if not 0.0 <= loss_probability <= 1.0:
            raise ValueError(f"loss_probability must be in [0, 1], got {loss_probability}")
        if latency_ticks < 0:
            raise ValueError("latency_ticks must be >= 0")
        self.loss_probability = loss_probability
        self.latency_ticks = latency_ticks
        self._rng = random.Random(seed)
        self._radios: list[Radio] = []
        self._seq = 0
        self.capture: list[tuple[int, int, bytes]] | None = [] if capture else None

    def attach(self, radio: Radio) -> Radio:
        self._radios.append(radio)
        return radio

    def send(self, channel: Channel, frame: bytes, current_tick: int) -> None:
        if self.capture is not None:
            self.capture.append((current_tick, channel.index, frame))
        if self.loss_probability > 0.0 and self._rng.random() < self.loss_probability:
            return
        due = current_tick + self.latency_ticks
        self._seq += 1
        for radio in self._radios:
            if radio.channel == channel:
                radio.inbox.append((due, self._seq, frame))

    def poll(self, radio: Radio, current_tick: int) -> list[bytes]:
        """Frames due by now on the radio's channel, in send order."""
        if not radio.inbox:
            return []
        ready = [entry for entry in radio.inbox if entry[0] <= current_tick]
        if not ready:
            return []
        radio.inbox = [entry for entry in radio.inbox if entry[0] > current_tick]
        ready.sort(key=lambda e: (e[0], e[1]))
        return [frame for _, _, frame in ready]


def write_capture(records: list[tuple[int, int, bytes]], out_path) -> None:
    """Binary capture: (tick u32 BE, channel u8, frame bytes) per record."""
    try:
        with open(out_path, "wb") as fh:
            for tick, channel, frame in records:
                fh.write(struct.pack(">IB", tick, channel) + frame)
    except OSError as exc:
        raise IoFailure(f"cannot write capture to {out_path}: {exc}") from exc
