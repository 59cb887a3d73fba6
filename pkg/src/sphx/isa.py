"""RV32I-subset instruction model, two-pass assembler, and word codecs.

The subset covers the base integer ALU ops, LUI, LW/SW, conditional
branches, JAL/JALR and ECALL.  FENCE, CSR ops, AUIPC and sub-word memory
access are deliberately absent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

TEXT_BASE = 0x0000_0000
DATA_BASE = 0x0001_0000

# Instruction classes, in the fixed order the execution cores index them.
CLASS_ORDER = (
    "ALU", "ALU_IMM", "LUI", "LOAD", "STORE",
    "BRANCH", "JAL", "JALR", "SYSTEM", "DECOY_DISCARD",
)
CLASS_IDS = {name: i for i, name in enumerate(CLASS_ORDER)}

# Mnemonic order is load-bearing: the numeric op ids baked into the
# execution cores are indexes into this tuple.
OPS = (
    "ADD", "SUB", "AND", "OR", "XOR", "SLT", "SLTU", "SLL", "SRL", "SRA",
    "ADDI", "ANDI", "ORI", "XORI", "SLTI", "SLTIU", "SLLI", "SRLI", "SRAI",
    "LUI", "LW", "SW",
    "BEQ", "BNE", "BLT", "BGE", "BLTU", "BGEU",
    "JAL", "JALR", "ECALL",
)
OP_IDS = {name: i for i, name in enumerate(OPS)}

OP_CLASS = {
    "ADD": "ALU", "SUB": "ALU", "AND": "ALU", "OR": "ALU", "XOR": "ALU",
    "SLT": "ALU", "SLTU": "ALU", "SLL": "ALU", "SRL": "ALU", "SRA": "ALU",
    "ADDI": "ALU_IMM", "ANDI": "ALU_IMM", "ORI": "ALU_IMM", "XORI": "ALU_IMM",
    "SLTI": "ALU_IMM", "SLTIU": "ALU_IMM",
    "SLLI": "ALU_IMM", "SRLI": "ALU_IMM", "SRAI": "ALU_IMM",
    "LUI": "LUI", "LW": "LOAD", "SW": "STORE",
    "BEQ": "BRANCH", "BNE": "BRANCH", "BLT": "BRANCH", "BGE": "BRANCH",
    "BLTU": "BRANCH", "BGEU": "BRANCH",
    "JAL": "JAL", "JALR": "JALR", "ECALL": "SYSTEM",
}

SHIFT_OPS = frozenset({"SLLI", "SRLI", "SRAI"})

REGISTERS = {f"x{i}": i for i in range(32)}
REGISTERS.update({
    "zero": 0, "ra": 1, "sp": 2, "gp": 3, "tp": 4,
    "t0": 5, "t1": 6, "t2": 7,
    "s0": 8, "fp": 8, "s1": 9,
    "a0": 10, "a1": 11, "a2": 12, "a3": 13,
    "a4": 14, "a5": 15, "a6": 16, "a7": 17,
    "s2": 18, "s3": 19, "s4": 20, "s5": 21, "s6": 22, "s7": 23,
    "s8": 24, "s9": 25, "s10": 26, "s11": 27,
    "t3": 28, "t4": 29, "t5": 30, "t6": 31,
})


class AsmError(Exception):
    """Parse or assembly failure, with a source line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class IllegalInstruction(Exception):
    """Word is not a valid encoding in the supported subset."""


def _imm_bounds(op: str) -> tuple[int, int, int]:
    """(lo, hi, multiple) for the mnemonic's immediate field."""
    if op in SHIFT_OPS:
        return 0, 31, 1
    cls = OP_CLASS[op]
    if cls in ("ALU_IMM", "LOAD", "STORE", "JALR"):
        return -2048, 2047, 1
    if cls == "BRANCH":
        return -4096, 4094, 2
    if cls == "LUI":
        return 0, 0xFFFFF, 1
    if cls == "JAL":
        return -(1 << 20), (1 << 20) - 2, 2
    return 0, 0, 1  # ALU / SYSTEM: no immediate


@dataclass(frozen=True)
class Instruction:
    op: str
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    imm: int = 0

    def __post_init__(self):
        if self.op not in OP_CLASS:
            raise ValueError(f"unknown mnemonic: {self.op}")
        for name in ("rd", "rs1", "rs2"):
            r = getattr(self, name)
            if not 0 <= r < 32:
                raise ValueError(f"{name} out of range: {r}")
        lo, hi, mult = _imm_bounds(self.op)
        if not lo <= self.imm <= hi:
            raise ValueError(f"{self.op} immediate out of range: {self.imm}")
        if self.imm % mult:
            raise ValueError(f"{self.op} immediate misaligned: {self.imm}")
        if self.op == "ECALL" and (self.rd or self.rs1 or self.rs2 or self.imm):
            raise ValueError("ECALL takes no operands")

    @property
    def cls(self) -> str:
        return OP_CLASS[self.op]


# opcode / funct3 / funct7 per mnemonic (funct7 doubles as the shift
# high-bits field for SLLI/SRLI/SRAI).
_R_ENC = {
    "ADD": (0, 0x00), "SUB": (0, 0x20), "SLL": (1, 0x00), "SLT": (2, 0x00),
    "SLTU": (3, 0x00), "XOR": (4, 0x00), "SRL": (5, 0x00), "SRA": (5, 0x20),
    "OR": (6, 0x00), "AND": (7, 0x00),
}
_I_ENC = {
    "ADDI": 0, "SLTI": 2, "SLTIU": 3, "XORI": 4, "ORI": 6, "ANDI": 7,
    "SLLI": 1, "SRLI": 5, "SRAI": 5,
}
_SHIFT_F7 = {"SLLI": 0x00, "SRLI": 0x00, "SRAI": 0x20}
_B_ENC = {"BEQ": 0, "BNE": 1, "BLT": 4, "BGE": 5, "BLTU": 6, "BGEU": 7}

_OPC_ALU = 0x33
_OPC_ALU_IMM = 0x13
_OPC_LOAD = 0x03
_OPC_STORE = 0x23
_OPC_BRANCH = 0x63
_OPC_LUI = 0x37
_OPC_JAL = 0x6F
_OPC_JALR = 0x67
_OPC_SYSTEM = 0x73


def encode(instr: Instruction) -> int:
    op, rd, rs1, rs2 = instr.op, instr.rd, instr.rs1, instr.rs2
    imm = instr.imm
    cls = instr.cls
    if cls == "ALU":
        f3, f7 = _R_ENC[op]
        return f7 << 25 | rs2 << 20 | rs1 << 15 | f3 << 12 | rd << 7 | _OPC_ALU
    if cls == "ALU_IMM":
        f3 = _I_ENC[op]
        if op in SHIFT_OPS:
            hi = _SHIFT_F7[op] << 5 | imm
        else:
            hi = imm & 0xFFF
        return hi << 20 | rs1 << 15 | f3 << 12 | rd << 7 | _OPC_ALU_IMM
    if cls == "LOAD":
        return (imm & 0xFFF) << 20 | rs1 << 15 | 2 << 12 | rd << 7 | _OPC_LOAD
    if cls == "STORE":
        v = imm & 0xFFF
        return ((v >> 5) << 25 | rs2 << 20 | rs1 << 15 | 2 << 12
                | (v & 0x1F) << 7 | _OPC_STORE)
    if cls == "BRANCH":
        f3 = _B_ENC[op]
        v = imm & 0x1FFF
        return ((v >> 12 & 1) << 31 | (v >> 5 & 0x3F) << 25 | rs2 << 20
                | rs1 << 15 | f3 << 12 | (v >> 1 & 0xF) << 8
                | (v >> 11 & 1) << 7 | _OPC_BRANCH)
    if cls == "LUI":
        return imm << 12 | rd << 7 | _OPC_LUI
    if cls == "JAL":
        v = imm & 0x1FFFFF
        return ((v >> 20 & 1) << 31 | (v >> 1 & 0x3FF) << 21
                | (v >> 11 & 1) << 20 | (v >> 12 & 0xFF) << 12
                | rd << 7 | _OPC_JAL)
    if cls == "JALR":
        return (imm & 0xFFF) << 20 | rs1 << 15 | rd << 7 | _OPC_JALR
    return _OPC_SYSTEM  # ECALL


def _sext(value: int, bits: int) -> int:
    sign = 1 << (bits - 1)
    return (value & (sign - 1)) - (value & sign)


def decode(word: int) -> Instruction:
    if not 0 <= word <= 0xFFFFFFFF:
        raise IllegalInstruction(f"not a 32-bit word: {word:#x}")
    opc = word & 0x7F
    rd = word >> 7 & 0x1F
    f3 = word >> 12 & 0x7
    rs1 = word >> 15 & 0x1F
    rs2 = word >> 20 & 0x1F
    f7 = word >> 25 & 0x7F
    if opc == _OPC_ALU:
        for op, (cf3, cf7) in _R_ENC.items():
            if f3 == cf3 and f7 == cf7:
                return Instruction(op, rd=rd, rs1=rs1, rs2=rs2)
        raise IllegalInstruction(f"bad R-type funct: {word:#010x}")
    if opc == _OPC_ALU_IMM:
        if f3 == 1 or f3 == 5:
            shamt = rs2
            if f3 == 1:
                if f7 != 0x00:
                    raise IllegalInstruction(f"bad SLLI funct7: {word:#010x}")
                return Instruction("SLLI", rd=rd, rs1=rs1, imm=shamt)
            if f7 == 0x00:
                return Instruction("SRLI", rd=rd, rs1=rs1, imm=shamt)
            if f7 == 0x20:
                return Instruction("SRAI", rd=rd, rs1=rs1, imm=shamt)
            raise IllegalInstruction(f"bad shift funct7: {word:#010x}")
        for op, cf3 in _I_ENC.items():
            if op not in SHIFT_OPS and cf3 == f3:
                return Instruction(op, rd=rd, rs1=rs1, imm=_sext(word >> 20, 12))
        raise IllegalInstruction(f"bad I-type funct3: {word:#010x}")
    if opc == _OPC_LOAD:
        if f3 != 2:
            raise IllegalInstruction(f"unsupported load width: {word:#010x}")
        return Instruction("LW", rd=rd, rs1=rs1, imm=_sext(word >> 20, 12))
    if opc == _OPC_STORE:
        if f3 != 2:
            raise IllegalInstruction(f"unsupported store width: {word:#010x}")
        return Instruction("SW", rs1=rs1, rs2=rs2,
                           imm=_sext(f7 << 5 | rd, 12))
    if opc == _OPC_BRANCH:
        for op, cf3 in _B_ENC.items():
            if cf3 == f3:
                v = ((word >> 31 & 1) << 12 | (word >> 7 & 1) << 11
                     | (word >> 25 & 0x3F) << 5 | (word >> 8 & 0xF) << 1)
                return Instruction(op, rs1=rs1, rs2=rs2, imm=_sext(v, 13))
        raise IllegalInstruction(f"bad branch funct3: {word:#010x}")
    if opc == _OPC_LUI:
        return Instruction("LUI", rd=rd, imm=word >> 12)
    if opc == _OPC_JAL:
        v = ((word >> 31 & 1) << 20 | (word >> 12 & 0xFF) << 12
             | (word >> 20 & 1) << 11 | (word >> 21 & 0x3FF) << 1)
        return Instruction("JAL", rd=rd, imm=_sext(v, 21))
    if opc == _OPC_JALR:
        if f3 != 0:
            raise IllegalInstruction(f"bad JALR funct3: {word:#010x}")
        return Instruction("JALR", rd=rd, rs1=rs1, imm=_sext(word >> 20, 12))
    if opc == _OPC_SYSTEM:
        if word == _OPC_SYSTEM:
            return Instruction("ECALL")
        raise IllegalInstruction(f"unsupported system word: {word:#010x}")
    raise IllegalInstruction(f"unknown opcode: {word:#010x}")


# ---------------------------------------------------------------------------
# Program representation (pre-layout)

@dataclass(frozen=True)
class LabelRef:
    """Branch/jump target resolved during assembly."""
    name: str


@dataclass(frozen=True)
class HiRef:
    """Upper 20 bits of a data label's address (from `la` expansion)."""
    name: str


@dataclass(frozen=True)
class LoRef:
    """Sign-adjusted low 12 bits of a data label's address."""
    name: str


@dataclass(frozen=True)
class SourceInstr:
    op: str
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    imm: object = 0  # int | LabelRef | HiRef | LoRef
    line: int = 0


@dataclass(frozen=True)
class LabelDef:
    name: str
    line: int = 0


@dataclass(frozen=True)
class Directive:
    name: str  # ".text" | ".data" | ".word" | ".space"
    arg: int | None = None
    line: int = 0


@dataclass
class Program:
    items: list = field(default_factory=list)

    def instructions(self) -> list[SourceInstr]:
        return [it for it in self.items if isinstance(it, SourceInstr)]


@dataclass
class MemoryImage:
    text_base: int
    text: list[int]
    data_base: int
    data: bytes
    entry: int
    symbols: dict[str, int] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Parser

def _parse_reg(token: str, line: int) -> int:
    reg = REGISTERS.get(token.strip().lower())
    if reg is None:
        raise AsmError(f"bad register {token.strip()!r}", line)
    return reg


def _parse_int(token: str, line: int) -> int:
    t = token.strip().lower()
    try:
        return int(t, 0)
    except ValueError:
        raise AsmError(f"bad integer {token.strip()!r}", line) from None


def _imm_or_label(token: str, line: int):
    t = token.strip()
    try:
        return int(t.lower(), 0)
    except ValueError:
        pass
    if _is_label(t):
        return LabelRef(t)
    raise AsmError(f"bad immediate or label {t!r}", line)


def _is_label(name: str) -> bool:
    return bool(name) and (name[0].isalpha() or name[0] == "_") and all(
        c.isalnum() or c in "_." for c in name)


def _split_operands(rest: str, n: int, line: int, op: str) -> list[str]:
    parts = [p.strip() for p in rest.split(",")] if rest.strip() else []
    if len(parts) != n or any(not p for p in parts):
        raise AsmError(f"{op} expects {n} operand(s)", line)
    return parts


def _parse_mem_operand(token: str, line: int) -> tuple[int, int]:
    """'imm(reg)' -> (imm, reg)."""
    t = token.strip()
    open_p = t.find("(")
    if open_p < 0 or not t.endswith(")"):
        raise AsmError(f"expected offset(reg), got {t!r}", line)
    imm = _parse_int(t[:open_p] or "0", line)
    reg = _parse_reg(t[open_p + 1:-1], line)
    return imm, reg


def _parse_instruction(op: str, rest: str, line: int) -> list[SourceInstr]:
    cls = OP_CLASS.get(op)
    if op == "LA":
        a = _split_operands(rest, 2, line, "la")
        rd = _parse_reg(a[0], line)
        if not _is_label(a[1]):
            raise AsmError(f"la needs a label, got {a[1]!r}", line)
        return [
            SourceInstr("LUI", rd=rd, imm=HiRef(a[1]), line=line),
            SourceInstr("ADDI", rd=rd, rs1=rd, imm=LoRef(a[1]), line=line),
        ]
    if cls is None:
        raise AsmError(f"unknown mnemonic {op.lower()!r}", line)
    if cls == "ALU":
        a = _split_operands(rest, 3, line, op)
        return [SourceInstr(op, rd=_parse_reg(a[0], line),
                            rs1=_parse_reg(a[1], line),
                            rs2=_parse_reg(a[2], line), line=line)]
    if cls == "ALU_IMM":
        a = _split_operands(rest, 3, line, op)
        return [SourceInstr(op, rd=_parse_reg(a[0], line),
                            rs1=_parse_reg(a[1], line),
                            imm=_parse_int(a[2], line), line=line)]
    if cls == "LOAD":
        a = _split_operands(rest, 2, line, op)
        imm, rs1 = _parse_mem_operand(a[1], line)
        return [SourceInstr(op, rd=_parse_reg(a[0], line), rs1=rs1, imm=imm,
                            line=line)]
    if cls == "STORE":
        a = _split_operands(rest, 2, line, op)
        imm, rs1 = _parse_mem_operand(a[1], line)
        return [SourceInstr(op, rs1=rs1, rs2=_parse_reg(a[0], line), imm=imm,
                            line=line)]
    if cls == "BRANCH":
        a = _split_operands(rest, 3, line, op)
        return [SourceInstr(op, rs1=_parse_reg(a[0], line),
                            rs2=_parse_reg(a[1], line),
                            imm=_imm_or_label(a[2], line), line=line)]
    if cls == "LUI":
        a = _split_operands(rest, 2, line, op)
        return [SourceInstr(op, rd=_parse_reg(a[0], line),
                            imm=_parse_int(a[1], line), line=line)]
    if cls == "JAL":
        a = _split_operands(rest, 2, line, op)
        return [SourceInstr(op, rd=_parse_reg(a[0], line),
                            imm=_imm_or_label(a[1], line), line=line)]
    if cls == "JALR":
        a = _split_operands(rest, 3, line, op)
        return [SourceInstr(op, rd=_parse_reg(a[0], line),
                            rs1=_parse_reg(a[1], line),
                            imm=_parse_int(a[2], line), line=line)]
    # SYSTEM
    if rest.strip():
        raise AsmError("ecall takes no operands", line)
    return [SourceInstr(op, line=line)]


def parse_assembly(text: str) -> Program:
    """Parse the assembly dialect into a Program, `la` expanded to LUI+ADDI."""
    items: list = []
    seen_labels: set[str] = set()
    section = ".text"
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        while line:
            colon = line.find(":")
            head = line[:colon] if colon >= 0 else ""
            if colon >= 0 and _is_label(head.strip()):
                name = head.strip()
                if name in seen_labels:
                    raise AsmError(f"duplicate label {name!r}", lineno)
                seen_labels.add(name)
                items.append(LabelDef(name, line=lineno))
                line = line[colon + 1:].strip()
                continue
            break
        if not line:
            continue
        if line.startswith("."):
            parts = line.split(None, 1)
            name = parts[0].lower()
            if name in (".text", ".data"):
                if len(parts) > 1:
                    raise AsmError(f"{name} takes no argument", lineno)
                section = name
                items.append(Directive(name, line=lineno))
            elif name in (".word", ".space"):
                if section != ".data":
                    raise AsmError(f"{name} only allowed in .data", lineno)
                if len(parts) != 2:
                    raise AsmError(f"{name} needs one argument", lineno)
                arg = _parse_int(parts[1], lineno)
                if name == ".space" and arg < 0:
                    raise AsmError(".space needs a non-negative size", lineno)
                items.append(Directive(name, arg=arg, line=lineno))
            else:
                raise AsmError(f"unknown directive {name!r}", lineno)
            continue
        if section != ".text":
            raise AsmError("instructions only allowed in .text", lineno)
        parts = line.split(None, 1)
        op = parts[0].upper()
        rest = parts[1] if len(parts) > 1 else ""
        items.extend(_parse_instruction(op, rest, lineno))
    return Program(items)


# ---------------------------------------------------------------------------
# Two-pass assembler

def _hi20(addr: int) -> int:
    return ((addr + 0x800) >> 12) & 0xFFFFF


def _lo12(addr: int) -> int:
    return ((addr & 0xFFF) ^ 0x800) - 0x800


def assemble(program: Program,
             text_base: int = TEXT_BASE,
             data_base: int = DATA_BASE) -> MemoryImage:
    # Pass 1: addresses.
    symbols: dict[str, int] = {}
    instrs: list[SourceInstr] = []
    data = bytearray()
    section = ".text"
    for item in program.items:
        if isinstance(item, Directive):
            if item.name in (".text", ".data"):
                section = item.name
            elif item.name == ".word":
                data += (item.arg & 0xFFFFFFFF).to_bytes(4, "little")
            else:  # .space
                data += bytes(item.arg)
        elif isinstance(item, LabelDef):
            if item.name in symbols:
                raise AsmError(f"duplicate label {item.name!r}", item.line)
            if section == ".text":
                symbols[item.name] = text_base + 4 * len(instrs)
            else:
                symbols[item.name] = data_base + len(data)
        else:
            instrs.append(item)
    if not instrs:
        raise AsmError("no entry: program has no text")
    if text_base + 4 * len(instrs) > data_base:
        raise AsmError("text segment overlaps data base")

    # Pass 2: resolve and encode.
    text = []
    for idx, si in enumerate(instrs):
        addr = text_base + 4 * idx
        imm = si.imm
        if isinstance(imm, LabelRef):
            target = symbols.get(imm.name)
            if target is None:
                raise AsmError(f"undefined label {imm.name!r}", si.line)
            imm = target - addr
        elif isinstance(imm, (HiRef, LoRef)):
            target = symbols.get(imm.name)
            if target is None:
                raise AsmError(f"undefined label {imm.name!r}", si.line)
            imm = _hi20(target) if isinstance(imm, HiRef) else _lo12(target)
        try:
            instr = Instruction(si.op, rd=si.rd, rs1=si.rs1, rs2=si.rs2,
                                imm=imm)
        except ValueError as exc:
            raise AsmError(str(exc), si.line) from None
        text.append(encode(instr))
    return MemoryImage(text_base=text_base, text=text, data_base=data_base,
                       data=bytes(data), entry=text_base, symbols=symbols)
