import random

import pytest

from capslice.netstack import (
    DecodeError,
    HEADERS,
    MAX_PAYLOAD,
    Reject,
    UdpEndpoint,
    decode_udp,
    echo_reply,
    encode_udp,
    ones_complement_sum,
)

A = UdpEndpoint(mac=b"\x02\x00\x00\x00\x00\x02", ipv4=bytes([10, 0, 0, 2]), port=40000)
B = UdpEndpoint(mac=b"\x02\x00\x00\x00\x00\x01", ipv4=bytes([10, 0, 0, 1]), port=7)


def ref_ones_complement(data):
    # independent straight-line oracle: byte pairs, end-around carry each step
    if len(data) % 2:
        data = data + b"\x00"
    total = 0
    for i in range(0, len(data), 2):
        total += (data[i] << 8) | data[i + 1]
        total = (total & 0xFFFF) + (total >> 16)
    return total


def test_frame_length_arithmetic():
    assert len(encode_udp(A, B, b"x")) == 43  # 14 + 20 + 8 + 1
    assert len(encode_udp(A, B, b"")) == 42
    assert len(encode_udp(A, B, b"q" * MAX_PAYLOAD)) == 1514


def test_payload_too_large_rejected():
    with pytest.raises(ValueError):
        encode_udp(A, B, b"q" * (MAX_PAYLOAD + 1))


def test_ip_header_self_verifies():
    frame = encode_udp(A, B, b"hello")
    ip = frame[14:34]
    assert ones_complement_sum(ip) == 0xFFFF


def test_fixed_vector_against_independent_oracle():
    # 18-byte payload, values frozen from the straight-line reference above
    payload = bytes(range(0x41, 0x41 + 18))
    frame = encode_udp(A, B, payload)
    udp_csum = int.from_bytes(frame[40:42], "big")
    ip_csum = int.from_bytes(frame[24:26], "big")
    assert udp_csum == 0xBBD3
    assert ip_csum == 0x66BD
    # and the oracle agrees when recomputed from scratch
    pseudo = A.ipv4 + B.ipv4 + bytes([0, 17]) + (8 + 18).to_bytes(2, "big")
    udp_zeroed = frame[34:40] + b"\x00\x00" + payload
    assert (~ref_ones_complement(pseudo + udp_zeroed)) & 0xFFFF == 0xBBD3


def test_checksum_helper_matches_reference_on_random_buffers():
    rng = random.Random(3)
    for _ in range(200):
        data = rng.randbytes(rng.randrange(0, 64))
        assert ones_complement_sum(data) == ref_ones_complement(data)


def test_roundtrip_every_interesting_size():
    rng = random.Random(4)
    for size in [0, 1, 2, 3, 17, 64, 512, 1024, 1471, 1472]:
        payload = rng.randbytes(size)
        src, dst, got = decode_udp(encode_udp(A, B, payload))
        assert (src, dst, got) == (A, B, payload)


def test_flipped_payload_bit_rejected():
    frame = bytearray(encode_udp(A, B, b"payload!"))
    frame[-1] ^= 0x01
    with pytest.raises(DecodeError) as err:
        decode_udp(bytes(frame))
    assert err.value.reason is Reject.UDP_CHECKSUM


def test_truncated_frame_rejected():
    frame = encode_udp(A, B, b"payload!")
    with pytest.raises(DecodeError) as err:
        decode_udp(frame[:33])  # 19-byte IPv4 header
    assert err.value.reason is Reject.RUNT
    with pytest.raises(DecodeError) as err:
        decode_udp(frame[:45])  # headers fit, payload cut
    assert err.value.reason is Reject.IP_LENGTH


def test_wrong_ethertype_rejected():
    frame = bytearray(encode_udp(A, B, b"x"))
    frame[12:14] = b"\x08\x06"  # ARP
    with pytest.raises(DecodeError) as err:
        decode_udp(bytes(frame))
    assert err.value.reason is Reject.ETHERTYPE


def test_bad_ip_version_rejected():
    frame = bytearray(encode_udp(A, B, b"x"))
    frame[14] = 0x46  # IHL 6: options unsupported
    with pytest.raises(DecodeError) as err:
        decode_udp(bytes(frame))
    assert err.value.reason is Reject.IP_VERSION


def test_every_checksummed_header_bit_is_protected():
    # exhaustive over one fixed frame: ethertype + IP header + UDP header
    frame = encode_udp(A, B, bytes(range(32)))
    for byte in range(12, HEADERS):
        for bit in range(8):
            mutated = bytearray(frame)
            mutated[byte] ^= 1 << bit
            with pytest.raises(DecodeError):
                decode_udp(bytes(mutated))


# -- echo -------------------------------------------------------------------------

def test_echo_swaps_and_preserves():
    payload = b"ping"
    assert echo_reply(encode_udp(A, B, payload)) == encode_udp(B, A, payload)


def test_echo_boundary_sizes():
    for size in (1, MAX_PAYLOAD):
        payload = bytes(size)
        reply = echo_reply(encode_udp(A, B, payload))
        src, dst, got = decode_udp(reply)
        assert (src, dst) == (B, A)
        assert got == payload


def test_echo_ignores_non_ipv4():
    frame = bytearray(encode_udp(A, B, b"x"))
    frame[12:14] = b"\x08\x06"
    assert echo_reply(bytes(frame)) is None


def test_echo_ignores_corrupt_frames():
    frame = bytearray(encode_udp(A, B, b"x"))
    frame[-1] ^= 0xFF
    assert echo_reply(bytes(frame)) is None
