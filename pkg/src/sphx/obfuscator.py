"""Program diversification: decoy insertion, data shuffling, mask, stats.

Decoys are inserted before assembly so that ordinary label re-resolution
repairs every real branch; their own branch targets are patched afterwards
to random instruction-aligned spots so nothing about them is malformed.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, replace

from . import isa
from .isa import Directive, Instruction, LabelDef, Program, SourceInstr
from .rng import SplitMix64, probability_threshold

# SYSTEM is excluded: decoys must never look like syscalls.
ELIGIBLE_DECOY_CLASSES = (
    "ALU", "ALU_IMM", "LUI", "LOAD", "STORE", "BRANCH", "JAL", "JALR",
)
_CLASS_MNEMONICS = {
    cls: tuple(op for op in isa.OPS if isa.OP_CLASS[op] == cls)
    for cls in ELIGIBLE_DECOY_CLASSES
}

# Reachable word distance of patched decoy targets, per jump kind.
_B_RANGE_WORDS = (-1024, 1023)
_J_RANGE_WORDS = (-(1 << 18), (1 << 18) - 1)


class ObfuscationError(Exception):
    pass


@dataclass(frozen=True)
class ObfuscationParams:
    entropy: float
    seed: int
    window: int = 16
    data_shuffle: bool = True
    max_pad_words: int = 4

    def __post_init__(self):
        if not 0.0 <= self.entropy < 1.0:
            raise ObfuscationError(f"entropy must be in [0, 1): {self.entropy}")
        if self.window < 1:
            raise ObfuscationError(f"window must be >= 1: {self.window}")
        if self.max_pad_words < 0:
            raise ObfuscationError("max_pad_words must be >= 0")


class MaskBits:
    """One bit per text word; 1 = real instruction, 0 = decoy."""

    __slots__ = ("_bits",)

    def __init__(self, bits) -> None:
        self._bits = bytes(bits)
        if any(b > 1 for b in self._bits):
            raise ValueError("mask bits must be 0 or 1")

    @classmethod
    def all_real(cls, n: int) -> "MaskBits":
        return cls(b"\x01" * n)

    def __len__(self) -> int:
        return len(self._bits)

    def __getitem__(self, i: int) -> int:
        return self._bits[i]

    def __iter__(self):
        return iter(self._bits)

    def __eq__(self, other) -> bool:
        return isinstance(other, MaskBits) and self._bits == other._bits

    def __hash__(self) -> int:
        return hash(self._bits)

    def __repr__(self) -> str:
        return f"MaskBits({len(self._bits)} bits, {self.popcount()} real)"

    def popcount(self) -> int:
        return sum(self._bits)

    def to_bytes01(self) -> bytes:
        return self._bits


@dataclass
class ObfuscationStats:
    real_count: int
    decoy_count: int
    decoy_fraction: float
    run_length_histogram: dict[int, int]
    decoy_class_histogram: dict[str, int]


def collect_stats(mask: MaskBits, decoys: list[Instruction]) -> ObfuscationStats:
    decoy_count = len(mask) - mask.popcount()
    if len(decoys) != decoy_count:
        raise ValueError(
            f"decoy list length {len(decoys)} != mask zeros {decoy_count}")
    run_hist: Counter[int] = Counter()
    run = 0
    for bit in mask:
        if bit:
            run_hist[run] += 1
            run = 0
        else:
            run += 1
    total = len(mask)
    return ObfuscationStats(
        real_count=mask.popcount(),
        decoy_count=decoy_count,
        decoy_fraction=decoy_count / total if total else 0.0,
        run_length_histogram=dict(sorted(run_hist.items())),
        decoy_class_histogram=dict(Counter(d.cls for d in decoys)),
    )


def gen_decoy(window_history, rng: SplitMix64) -> Instruction:
    """Draw one decoy imitating the class mix of recent real instructions."""
    hist = Counter(c for c in window_history if c in _CLASS_MNEMONICS)
    if hist:
        total = sum(hist.values())
        pick = rng.randbelow(total)
        for cls in ELIGIBLE_DECOY_CLASSES:
            pick -= hist.get(cls, 0)
            if pick < 0:
                break
    else:
        cls = ELIGIBLE_DECOY_CLASSES[rng.randbelow(len(ELIGIBLE_DECOY_CLASSES))]
    ops = _CLASS_MNEMONICS[cls]
    op = ops[rng.randbelow(len(ops))] if len(ops) > 1 else ops[0]
    if cls == "ALU":
        return Instruction(op, rd=rng.randbelow(32), rs1=rng.randbelow(32),
                           rs2=rng.randbelow(32))
    if cls == "ALU_IMM":
        rd, rs1 = rng.randbelow(32), rng.randbelow(32)
        if op in isa.SHIFT_OPS:
            return Instruction(op, rd=rd, rs1=rs1, imm=rng.randbelow(32))
        return Instruction(op, rd=rd, rs1=rs1, imm=rng.randbelow(4096) - 2048)
    if cls == "LUI":
        return Instruction(op, rd=rng.randbelow(32),
                           imm=rng.randbelow(1 << 20))
    if cls == "LOAD":
        return Instruction(op, rd=rng.randbelow(32), rs1=rng.randbelow(32),
                           imm=rng.randbelow(4096) - 2048)
    if cls == "STORE":
        return Instruction(op, rs1=rng.randbelow(32), rs2=rng.randbelow(32),
                           imm=rng.randbelow(4096) - 2048)
    if cls == "BRANCH":
        # Target patched after layout; placeholder keeps the word encodable.
        return Instruction(op, rs1=rng.randbelow(32), rs2=rng.randbelow(32))
    if cls == "JAL":
        return Instruction(op, rd=rng.randbelow(32))
    return Instruction(op, rd=rng.randbelow(32), rs1=rng.randbelow(32),
                       imm=rng.randbelow(4096) - 2048)  # JALR


def _identity_result(program: Program):
    instrs = program.instructions()
    mask = MaskBits.all_real(len(instrs))
    return program, mask, collect_stats(mask, [])


@dataclass
class _Unit:
    labels: tuple[str, ...]
    instr: SourceInstr
    is_decoy: bool


def _split_sections(program: Program):
    """Group text into (labels, instr) units and data into labelled objects.

    Labels bind the way the assembler binds them: a text label attaches to
    the next instruction (or the text end), a data label to the next data
    directive (or the data end), regardless of intervening section
    switches.  Sentinel labels at the very end of .data glue to the last
    object's tail so "one past this array" keeps meaning that after a
    shuffle.
    """
    section = ".text"
    text_units: list[tuple[tuple[str, ...], SourceInstr]] = []
    data_objects: list[list] = []  # mixed LabelDef / data Directive items
    pend_text: list[str] = []
    pend_data: list[str] = []
    for item in program.items:
        if isinstance(item, Directive) and item.name in (".text", ".data"):
            section = item.name
        elif isinstance(item, LabelDef):
            (pend_text if section == ".text" else pend_data).append(item.name)
        elif isinstance(item, SourceInstr):
            text_units.append((tuple(pend_text), item))
            pend_text.clear()
        else:  # data directive
            if pend_data or not data_objects:
                data_objects.append(
                    [LabelDef(n) for n in pend_data] + [item])
                pend_data.clear()
            else:
                data_objects[-1].append(item)
    if pend_data:
        target = data_objects[-1] if data_objects else []
        target.extend(LabelDef(n) for n in pend_data)
        if not data_objects:
            data_objects.append(target)
    return text_units, pend_text, data_objects


def _patch_decoy_targets(units: list[_Unit], rng: SplitMix64) -> None:
    total = len(units)
    for idx, unit in enumerate(units):
        if not unit.is_decoy:
            continue
        cls = isa.OP_CLASS[unit.instr.op]
        if cls == "BRANCH":
            lo_w, hi_w = _B_RANGE_WORDS
        elif cls == "JAL":
            lo_w, hi_w = _J_RANGE_WORDS
        else:
            continue
        lo = max(0, idx + lo_w)
        hi = min(total - 1, idx + hi_w)
        target = lo + rng.randbelow(hi - lo + 1)
        unit.instr = replace(unit.instr, imm=(target - idx) * 4)


def _fix_real_branch_ranges(units: list[_Unit], trailing: list[str],
                            rng: SplitMix64) -> None:
    """Drop decoys inside over-stretched branch spans until offsets encode."""
    while True:
        label_at = {}
        for i, u in enumerate(units):
            for name in u.labels:
                label_at[name] = i
        for name in trailing:
            label_at[name] = len(units)
        violation = None
        for i, u in enumerate(units):
            if u.is_decoy or not isinstance(u.instr.imm, isa.LabelRef):
                continue
            t = label_at.get(u.instr.imm.name)
            if t is None:
                continue  # undefined label; assemble() reports it
            offset = (t - i) * 4
            cls = isa.OP_CLASS[u.instr.op]
            lo, hi = ((-4096, 4094) if cls == "BRANCH"
                      else (-(1 << 20), (1 << 20) - 2))
            if not lo <= offset <= hi:
                violation = (i, t)
                break
        if violation is None:
            return
        i, t = violation
        span = range(min(i, t), max(i, t) + 1)
        decoy_idxs = [k for k in span if k < len(units) and units[k].is_decoy]
        if not decoy_idxs:
            raise ObfuscationError(
                "branch span exceeds encodable range with no decoys left")
        del units[decoy_idxs[rng.randbelow(len(decoy_idxs))]]


def _shuffle_data(data_objects, params: ObfuscationParams, rng: SplitMix64):
    objects = list(data_objects)
    rng.shuffle(objects)
    out: list = []
    for i, items in enumerate(objects):
        if i > 0 and params.max_pad_words:
            for _ in range(rng.randbelow(params.max_pad_words + 1)):
                out.append(Directive(".word", arg=rng.next_u64() & 0xFFFFFFFF))
        out.extend(items)
    return out


def _assemble_items(units, trailing, data_items):
    items: list = [Directive(".text")]
    for u in units:
        items.extend(LabelDef(name) for name in u.labels)
        items.append(u.instr)
    items.extend(LabelDef(name) for name in trailing)
    if data_items:
        items.append(Directive(".data"))
        items.extend(data_items)
    return Program(items)


def diversify(program: Program, params: ObfuscationParams):
    """Insert decoys and shuffle data; return (program, mask, stats).

    Entropy 0 is the identity transform: the input program comes back
    untouched (no decoys, no data shuffle) with an all-ones mask.
    """
    if params.entropy == 0.0:
        return _identity_result(program)

    rng = SplitMix64(params.seed)
    threshold = probability_threshold(params.entropy)
    text_units, trailing, data_objects = _split_sections(program)
    if not text_units:
        raise ObfuscationError("program has no instructions")

    history: deque = deque(maxlen=params.window)
    units: list[_Unit] = []
    i = 0
    while i < len(text_units):
        if rng.chance(threshold):
            decoy = gen_decoy(history, rng)
            units.append(_Unit((), SourceInstr(
                decoy.op, rd=decoy.rd, rs1=decoy.rs1, rs2=decoy.rs2,
                imm=decoy.imm), True))
        else:
            labels, instr = text_units[i]
            units.append(_Unit(labels, instr, False))
            history.append(isa.OP_CLASS[instr.op])
            i += 1

    _fix_real_branch_ranges(units, trailing, rng)
    _patch_decoy_targets(units, rng)

    if params.data_shuffle and data_objects:
        data_items = _shuffle_data(data_objects, params, rng)
    else:
        data_items = [item for obj in data_objects for item in obj]

    mask = MaskBits(0 if u.is_decoy else 1 for u in units)
    decoys = [Instruction(u.instr.op, rd=u.instr.rd, rs1=u.instr.rs1,
                          rs2=u.instr.rs2, imm=u.instr.imm)
              for u in units if u.is_decoy]
    stats = collect_stats(mask, decoys)
    return _assemble_items(units, trailing, data_items), mask, stats
