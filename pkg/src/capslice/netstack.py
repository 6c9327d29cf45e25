"""Minimal Ethernet II + IPv4 + UDP framing and the echo application.

Just enough stack for raw request/response traffic between two statically
configured endpoints: no ARP (peers are known on a direct cable), no
fragmentation, no options, no TCP. Frame layout is bit-exact standard
Ethernet II / RFC 791 / RFC 768.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

ETHERTYPE_IPV4 = 0x0800
IP_PROTO_UDP = 17

ETH_HEADER = 14
IPV4_HEADER = 20
UDP_HEADER = 8
HEADERS = ETH_HEADER + IPV4_HEADER + UDP_HEADER

MAX_PAYLOAD = 1472            # MTU-limited UDP payload
MAX_FRAME = HEADERS + MAX_PAYLOAD  # 1514, no FCS

_IPV4 = struct.Struct("!BBHHHBBH4s4s")
_UDP = struct.Struct("!HHHH")


@dataclass(frozen=True)
class UdpEndpoint:
    mac: bytes
    ipv4: bytes
    port: int

    def __post_init__(self):
        assert len(self.mac) == 6 and len(self.ipv4) == 4


class Reject(Enum):
    RUNT = "frame shorter than headers"
    ETHERTYPE = "not IPv4"
    IP_VERSION = "bad IP version or header length"
    IP_LENGTH = "IP total length inconsistent"
    IP_CHECKSUM = "IP header checksum mismatch"
    PROTOCOL = "not UDP"
    UDP_LENGTH = "UDP length inconsistent"
    UDP_CHECKSUM = "UDP checksum mismatch"


class DecodeError(Exception):
    def __init__(self, reason: Reject):
        super().__init__(reason.value)
        self.reason = reason


def ones_complement_sum(data: bytes) -> int:
    """RFC 1071 checksum over `data` (padded with a trailing zero if odd)."""
    if len(data) % 2:
        data = data + b"\x00"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return total


def _checksum(data: bytes) -> int:
    return (~ones_complement_sum(data)) & 0xFFFF


def encode_udp(src: UdpEndpoint, dst: UdpEndpoint, payload: bytes) -> bytes:
    """Build one Ethernet+IPv4+UDP frame. Deterministic: fixed id/ttl/flags."""
    if len(payload) > MAX_PAYLOAD:
        raise ValueError(f"payload {len(payload)} exceeds {MAX_PAYLOAD}")

    udp_len = UDP_HEADER + len(payload)
    ip_len = IPV4_HEADER + udp_len

    ip = _IPV4.pack(0x45, 0, ip_len, 0, 0, 64, IP_PROTO_UDP, 0, src.ipv4, dst.ipv4)
    ip = ip[:10] + struct.pack("!H", _checksum(ip)) + ip[12:]

    pseudo = src.ipv4 + dst.ipv4 + struct.pack("!BBH", 0, IP_PROTO_UDP, udp_len)
    udp = _UDP.pack(src.port, dst.port, udp_len, 0)
    csum = _checksum(pseudo + udp + payload)
    if csum == 0:
        csum = 0xFFFF  # transmitted checksum of zero means "none"; never emit it
    udp = udp[:6] + struct.pack("!H", csum)

    return dst.mac + src.mac + struct.pack("!H", ETHERTYPE_IPV4) + ip + udp + payload


def decode_udp(frame: bytes) -> tuple[UdpEndpoint, UdpEndpoint, bytes]:
    """Parse and fully validate a frame; returns (src, dst, payload)."""
    if len(frame) < HEADERS:
        raise DecodeError(Reject.RUNT)
    dst_mac, src_mac = frame[0:6], frame[6:12]
    if struct.unpack("!H", frame[12:14])[0] != ETHERTYPE_IPV4:
        raise DecodeError(Reject.ETHERTYPE)

    ip = frame[ETH_HEADER:ETH_HEADER + IPV4_HEADER]
    ver_ihl, _tos, ip_len, _id, _frag, _ttl, proto, _csum, src_ip, dst_ip = _IPV4.unpack(ip)
    if ver_ihl != 0x45:
        raise DecodeError(Reject.IP_VERSION)
    if ones_complement_sum(ip) != 0xFFFF:
        raise DecodeError(Reject.IP_CHECKSUM)
    if ip_len < IPV4_HEADER + UDP_HEADER or ETH_HEADER + ip_len > len(frame):
        raise DecodeError(Reject.IP_LENGTH)
    if proto != IP_PROTO_UDP:
        raise DecodeError(Reject.PROTOCOL)

    udp_off = ETH_HEADER + IPV4_HEADER
    sport, dport, udp_len, udp_csum = _UDP.unpack(frame[udp_off:udp_off + UDP_HEADER])
    if udp_len != ip_len - IPV4_HEADER:
        raise DecodeError(Reject.UDP_LENGTH)
    payload = bytes(frame[udp_off + UDP_HEADER:ETH_HEADER + ip_len])
    if udp_csum == 0:
        raise DecodeError(Reject.UDP_CHECKSUM)
    pseudo = src_ip + dst_ip + struct.pack("!BBH", 0, IP_PROTO_UDP, udp_len)
    if ones_complement_sum(pseudo + frame[udp_off:ETH_HEADER + ip_len]) != 0xFFFF:
        raise DecodeError(Reject.UDP_CHECKSUM)

    return (
        UdpEndpoint(bytes(src_mac), src_ip, sport),
        UdpEndpoint(bytes(dst_mac), dst_ip, dport),
        payload,
    )


def echo_reply(frame: bytes) -> bytes | None:
    """Echo-server step: swap MACs/IPs/ports, keep the payload byte-identical.

    Returns None for anything that is not a valid UDP frame.
    """
    try:
        src, dst, payload = decode_udp(frame)
    except DecodeError:
        return None
    return encode_udp(dst, src, payload)
