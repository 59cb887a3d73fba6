"""Independent reference assembler: clang's riscv32 integrated assembler.

Renders decoded instructions back to canonical assembly (labels for
branch/jump targets), assembles with `clang -target riscv32-unknown-elf
-march=rv32i`, and extracts the raw .text words from the ELF object.
Completely independent of sphx's encoder.
"""

from __future__ import annotations

import shutil
import struct
import subprocess
import tempfile
from pathlib import Path

CLANG = shutil.which("clang")


def clang_available() -> bool:
    if CLANG is None:
        return False
    try:
        words = assemble_text("addi x1, x0, 5\n")
    except Exception:
        return False
    return words == [0x00500093]


def _elf_text_words(blob: bytes) -> list[int]:
    if blob[:4] != b"\x7fELF" or blob[4] != 1 or blob[5] != 1:
        raise ValueError("not a little-endian ELF32 object")
    e_shoff = struct.unpack_from("<I", blob, 0x20)[0]
    e_shentsize = struct.unpack_from("<H", blob, 0x2E)[0]
    e_shnum = struct.unpack_from("<H", blob, 0x30)[0]
    e_shstrndx = struct.unpack_from("<H", blob, 0x32)[0]
    sections = []
    for i in range(e_shnum):
        base = e_shoff + i * e_shentsize
        name_off, _, _, _, offset, size = struct.unpack_from("<IIIII I".replace(" ", ""), blob, base)[:6]
        sections.append((name_off, offset, size))
    str_off = sections[e_shstrndx][1]
    for name_off, offset, size in sections:
        end = blob.index(b"\x00", str_off + name_off)
        name = blob[str_off + name_off:end].decode()
        if name == ".text":
            data = blob[offset:offset + size]
            return [int.from_bytes(data[i:i + 4], "little")
                    for i in range(0, len(data), 4)]
    raise ValueError("no .text section")


def assemble_text(asm: str) -> list[int]:
    with tempfile.TemporaryDirectory() as tmp:
        src = Path(tmp) / "ref.s"
        obj = Path(tmp) / "ref.o"
        src.write_text(asm, encoding="utf-8")
        subprocess.run(
            [CLANG, "-target", "riscv32-unknown-elf", "-march=rv32i",
             "-mno-relax", "-c", "-x", "assembler", str(src), "-o", str(obj)],
            check=True, capture_output=True)
        return _elf_text_words(obj.read_bytes())


def render_instruction(ins, word_index: int, label_of: dict[int, str]) -> str:
    """One decoded instruction as clang-compatible assembly."""
    op = ins.op.lower()
    if ins.cls == "ALU":
        return f"{op} x{ins.rd}, x{ins.rs1}, x{ins.rs2}"
    if ins.cls == "ALU_IMM":
        return f"{op} x{ins.rd}, x{ins.rs1}, {ins.imm}"
    if ins.cls == "LUI":
        return f"lui x{ins.rd}, {ins.imm}"
    if ins.cls == "LOAD":
        return f"lw x{ins.rd}, {ins.imm}(x{ins.rs1})"
    if ins.cls == "STORE":
        return f"sw x{ins.rs2}, {ins.imm}(x{ins.rs1})"
    if ins.cls == "BRANCH":
        target = word_index + ins.imm // 4
        return f"{op} x{ins.rs1}, x{ins.rs2}, {label_of[target]}"
    if ins.cls == "JAL":
        target = word_index + ins.imm // 4
        return f"jal x{ins.rd}, {label_of[target]}"
    if ins.cls == "JALR":
        return f"jalr x{ins.rd}, x{ins.rs1}, {ins.imm}"
    return "ecall"


def reference_words(text_words: list[int]) -> list[int]:
    """Re-assemble decoded text with clang; labels at every word."""
    from sphx.isa import decode

    label_of = {i: f"L{i}" for i in range(len(text_words) + 1)}
    lines = [".text"]
    for i, word in enumerate(text_words):
        ins = decode(word)
        lines.append(f"L{i}: {render_instruction(ins, i, label_of)}")
    lines.append(f"L{len(text_words)}: ecall")  # terminal label anchor
    out = assemble_text("\n".join(lines) + "\n")
    return out[:len(text_words)]
