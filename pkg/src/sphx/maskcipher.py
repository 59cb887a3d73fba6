"""Mask packing, stream-cipher encryption and integrity checking.

The mask travels inside the image XORed with a SplitMix64 keystream; a
CRC-32 of the packed plaintext makes a wrong device key or a tampered
image fail loudly at load time instead of silently executing garbage.
Key provisioning stands in for device-unique hardware: the key is a
deterministic function of (device_secret, challenge).
"""

from __future__ import annotations

from dataclasses import dataclass

from .obfuscator import MaskBits
from .rng import MASK64, SplitMix64


class BadKeyOrCorrupt(Exception):
    """Mask checksum mismatch: wrong device key or tampered ciphertext."""


@dataclass(frozen=True)
class DeviceKey:
    key: int
    key_id: int


@dataclass(frozen=True)
class MaskCiphertext:
    words: tuple[int, ...]
    bit_len: int
    crc32: int


def keystream(key: int, n: int) -> list[int]:
    """First n words of the SplitMix64 sequence seeded with `key`."""
    rng = SplitMix64(key)
    return [rng.next_u64() for _ in range(n)]


def derive_key(device_secret: int, challenge: int) -> DeviceKey:
    seed = (device_secret ^ challenge) & MASK64
    return DeviceKey(key=keystream(seed, 1)[0], key_id=challenge & MASK64)


def pack_mask(mask: MaskBits) -> list[int]:
    """LSB-first bit packing into 64-bit words; trailing bits zero."""
    words = [0] * ((len(mask) + 63) // 64)
    for i, bit in enumerate(mask):
        if bit:
            words[i >> 6] |= 1 << (i & 63)
    return words


def unpack_mask(words, bit_len: int) -> MaskBits:
    return MaskBits((words[i >> 6] >> (i & 63)) & 1 for i in range(bit_len))


def words_to_bytes(words) -> bytes:
    return b"".join(w.to_bytes(8, "little") for w in words)


def _crc_table() -> tuple[int, ...]:
    table = []
    for byte in range(256):
        c = byte
        for _ in range(8):
            c = (c >> 1) ^ 0xEDB88320 if c & 1 else c >> 1
        table.append(c)
    return tuple(table)


_CRC_TABLE = _crc_table()


def crc32(data: bytes) -> int:
    c = 0xFFFFFFFF
    for b in data:
        c = (c >> 8) ^ _CRC_TABLE[(c ^ b) & 0xFF]
    return c ^ 0xFFFFFFFF


def encrypt_mask(mask: MaskBits, key: DeviceKey) -> MaskCiphertext:
    plain = pack_mask(mask)
    checksum = crc32(words_to_bytes(plain))
    ks = keystream(key.key, len(plain))
    return MaskCiphertext(
        words=tuple(p ^ k for p, k in zip(plain, ks)),
        bit_len=len(mask),
        crc32=checksum,
    )


def decrypt_mask(ct: MaskCiphertext, key: DeviceKey) -> MaskBits:
    if len(ct.words) != (ct.bit_len + 63) // 64:
        raise ValueError(
            f"ciphertext of {len(ct.words)} words cannot hold {ct.bit_len} bits")
    ks = keystream(key.key, len(ct.words))
    plain = [c ^ k for c, k in zip(ct.words, ks)]
    if crc32(words_to_bytes(plain)) != ct.crc32:
        raise BadKeyOrCorrupt("mask checksum mismatch")
    return unpack_mask(plain, ct.bit_len)
