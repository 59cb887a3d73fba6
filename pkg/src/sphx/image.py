"""Loadable image container ("SPHX" format, little-endian).

Layout: fixed header, then text words, data bytes, and -- for obfuscated
images -- the encrypted mask as 64-bit words.  Emission is a pure function
of the inputs, so identical builds are byte-identical.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .isa import MemoryImage
from .maskcipher import MaskCiphertext

MAGIC = 0x53504858  # "SPHX"
VERSION = 1
FLAG_OBFUSCATED = 0x0001

_HEADER = struct.Struct("<IHHIIIIIIQIQII")


class ImageFormatError(Exception):
    pass


@dataclass(frozen=True)
class ImageHeader:
    flags: int
    entry: int
    text_base: int
    text_count: int
    data_base: int
    data_len: int
    entropy_ppm: int
    build_seed: int
    real_count: int
    key_id: int
    mask_bit_len: int
    mask_crc32: int

    @property
    def obfuscated(self) -> bool:
        return bool(self.flags & FLAG_OBFUSCATED)


def write_image(image: MemoryImage, *, ciphertext: MaskCiphertext | None = None,
                entropy_ppm: int = 0, build_seed: int = 0,
                real_count: int | None = None, key_id: int = 0) -> bytes:
    obfuscated = ciphertext is not None
    if real_count is None:
        real_count = len(image.text)
    header = _HEADER.pack(
        MAGIC, VERSION,
        FLAG_OBFUSCATED if obfuscated else 0,
        image.entry, image.text_base, len(image.text),
        image.data_base, len(image.data),
        entropy_ppm, build_seed, real_count,
        key_id if obfuscated else 0,
        ciphertext.bit_len if obfuscated else 0,
        ciphertext.crc32 if obfuscated else 0,
    )
    parts = [header]
    parts.append(b"".join(w.to_bytes(4, "little") for w in image.text))
    parts.append(image.data)
    if obfuscated:
        parts.append(b"".join(w.to_bytes(8, "little") for w in ciphertext.words))
    return b"".join(parts)


def parse_image(blob: bytes) -> tuple[ImageHeader, MemoryImage, MaskCiphertext | None]:
    if len(blob) < _HEADER.size:
        raise ImageFormatError("truncated header")
    (magic, version, flags, entry, text_base, text_count, data_base,
     data_len, entropy_ppm, build_seed, real_count, key_id, mask_bit_len,
     mask_crc32) = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ImageFormatError(f"bad magic {magic:#010x}")
    if version != VERSION:
        raise ImageFormatError(f"unsupported version {version}")
    header = ImageHeader(flags, entry, text_base, text_count, data_base,
                         data_len, entropy_ppm, build_seed, real_count,
                         key_id, mask_bit_len, mask_crc32)
    off = _HEADER.size
    end_text = off + 4 * text_count
    end_data = end_text + data_len
    if len(blob) < end_data:
        raise ImageFormatError("truncated text/data payload")
    text = [int.from_bytes(blob[i:i + 4], "little")
            for i in range(off, end_text, 4)]
    data = blob[end_text:end_data]
    ciphertext = None
    if header.obfuscated:
        if mask_bit_len != text_count:
            raise ImageFormatError(
                f"mask bit length {mask_bit_len} != text words {text_count}")
        n_words = (mask_bit_len + 63) // 64
        end_mask = end_data + 8 * n_words
        if len(blob) < end_mask:
            raise ImageFormatError("truncated mask ciphertext")
        words = tuple(int.from_bytes(blob[i:i + 8], "little")
                      for i in range(end_data, end_mask, 8))
        ciphertext = MaskCiphertext(words=words, bit_len=mask_bit_len,
                                    crc32=mask_crc32)
        end_data = end_mask
    if len(blob) != end_data:
        raise ImageFormatError("trailing bytes after image payload")
    image = MemoryImage(text_base=text_base, text=text, data_base=data_base,
                        data=data, entry=entry)
    return header, image, ciphertext
