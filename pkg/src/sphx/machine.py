"""Reference execution semantics: one-instruction `step` plus a run loop.

This module is the pure-Python execution core.  The compiled core in
`_speedups` re-implements exactly this behaviour (including the order of
random draws), so both produce bit-identical traces for the same inputs;
the parity suite holds them together.

Memory map, for a memory of N bytes:
  [0, data_base)            text and gap, readable, not writable
  [data_base, N - 4096)     data, read/write
  [N - 4096, N)             decoy scratch page, invisible to real code
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .rng import SplitMix64

M32 = 0xFFFFFFFF
SCRATCH_BYTES = 4096
DEFAULT_MEM_BYTES = 1 << 20

# Status codes shared with the compiled core.
ST_EXIT = 0
ST_TRAP_ILLEGAL = 1
ST_TRAP_MISALIGNED = 2
ST_TRAP_OOB = 3
ST_TRAP_SYSCALL = 4
ST_FUEL = 5
STATUS_NAMES = ("exit", "trap_illegal", "trap_misaligned", "trap_oob",
                "trap_syscall", "fuel")

_CLS_DECOY_DISCARD = 9

# Op ids: indexes into isa.OPS, duplicated here as constants for the
# dispatch chain (cross-checked against isa.OPS by the test suite).
(OP_ADD, OP_SUB, OP_AND, OP_OR, OP_XOR, OP_SLT, OP_SLTU, OP_SLL, OP_SRL,
 OP_SRA, OP_ADDI, OP_ANDI, OP_ORI, OP_XORI, OP_SLTI, OP_SLTIU, OP_SLLI,
 OP_SRLI, OP_SRAI, OP_LUI, OP_LW, OP_SW, OP_BEQ, OP_BNE, OP_BLT, OP_BGE,
 OP_BLTU, OP_BGEU, OP_JAL, OP_JALR, OP_ECALL) = range(31)


def sext32(v: int) -> int:
    return v - 0x1_0000_0000 if v & 0x8000_0000 else v


@dataclass
class MachineState:
    pc: int
    regs: list[int] = field(default_factory=lambda: [0] * 32)
    mem: bytearray = field(default_factory=lambda: bytearray(DEFAULT_MEM_BYTES))
    cycle: int = 0


class ExecEnv:
    """Everything `step` needs besides the machine state."""

    __slots__ = (
        "valid", "cls_id", "op_id", "rd", "rs1", "rs2", "imm", "mask01",
        "text_base", "n_words", "data_base", "scratch_base",
        "shadow", "randomize", "noise_amp",
        "prof_cycles", "prof_power", "prof_n", "branch_taken_extra",
        "rng", "power", "ev_cycle", "ev_kind", "ev_addr", "out_values",
        "exit_code",
    )

    def __init__(self, *, valid, cls_id, op_id, rd, rs1, rs2, imm, mask01,
                 text_base, data_base, mem_bytes, shadow, randomize,
                 noise_amp, prof_cycles, prof_power, prof_n,
                 branch_taken_extra, run_seed):
        self.valid = valid
        self.cls_id = cls_id
        self.op_id = op_id
        self.rd = rd
        self.rs1 = rs1
        self.rs2 = rs2
        self.imm = imm
        self.mask01 = mask01
        self.text_base = text_base
        self.n_words = len(op_id)
        self.data_base = data_base
        self.scratch_base = mem_bytes - SCRATCH_BYTES
        self.shadow = shadow
        self.randomize = randomize
        self.noise_amp = noise_amp
        self.prof_cycles = prof_cycles
        self.prof_power = prof_power
        self.prof_n = prof_n
        self.branch_taken_extra = branch_taken_extra
        self.rng = SplitMix64(run_seed)
        self.power: list[int] = []
        self.ev_cycle: list[int] = []
        self.ev_kind: list[int] = []
        self.ev_addr: list[int] = []
        self.out_values: list[int] = []
        self.exit_code = 0


def step(st: MachineState, env: ExecEnv) -> int | None:
    """Execute one instruction; None to continue, else a status code.

    A trapping instruction consumes no cycles: its fetch event is
    recorded (the fetch happened) but no power samples are emitted.
    """
    pc = st.pc
    widx = (pc - env.text_base) >> 2
    if pc < env.text_base or widx >= env.n_words:
        return ST_TRAP_OOB
    cyc0 = st.cycle
    env.ev_cycle.append(cyc0 + 1)
    env.ev_kind.append(0)
    env.ev_addr.append(pc)

    is_real = env.mask01[widx] != 0
    if is_real or env.shadow:
        cls = env.cls_id[widx]
        decode_needed = True
    else:
        cls = _CLS_DECOY_DISCARD
        decode_needed = False
    cand = env.rng.randbelow(env.prof_n[cls]) if env.randomize else 0
    cycles = env.prof_cycles[cls][cand]
    bpower = env.prof_power[cls][cand]

    extra = 0
    hw_val = 0
    next_pc = pc + 4
    pend_kind = -1
    pend_addr = 0
    status = None

    if decode_needed:
        if not env.valid[widx]:
            return ST_TRAP_ILLEGAL
        op = env.op_id[widx]
        regs = st.regs
        rd = env.rd[widx]
        a = regs[env.rs1[widx]]
        b = regs[env.rs2[widx]]
        im = env.imm[widx]
        wb = None

        if op == OP_ADD:
            wb = (a + b) & M32
        elif op == OP_SUB:
            wb = (a - b) & M32
        elif op == OP_AND:
            wb = a & b
        elif op == OP_OR:
            wb = a | b
        elif op == OP_XOR:
            wb = a ^ b
        elif op == OP_SLT:
            wb = 1 if sext32(a) < sext32(b) else 0
        elif op == OP_SLTU:
            wb = 1 if a < b else 0
        elif op == OP_SLL:
            wb = (a << (b & 31)) & M32
        elif op == OP_SRL:
            wb = a >> (b & 31)
        elif op == OP_SRA:
            wb = (sext32(a) >> (b & 31)) & M32
        elif op == OP_ADDI:
            wb = (a + im) & M32
        elif op == OP_ANDI:
            wb = a & im & M32
        elif op == OP_ORI:
            wb = (a | im & M32)
        elif op == OP_XORI:
            wb = (a ^ im & M32)
        elif op == OP_SLTI:
            wb = 1 if sext32(a) < im else 0
        elif op == OP_SLTIU:
            wb = 1 if a < (im & M32) else 0
        elif op == OP_SLLI:
            wb = (a << im) & M32
        elif op == OP_SRLI:
            wb = a >> im
        elif op == OP_SRAI:
            wb = (sext32(a) >> im) & M32
        elif op == OP_LUI:
            wb = im
        elif op == OP_LW:
            ea = (a + im) & M32
            if is_real:
                if ea & 3:
                    return ST_TRAP_MISALIGNED
                if ea + 4 > env.scratch_base:
                    return ST_TRAP_OOB
                addr = ea
            else:
                addr = env.scratch_base + (ea & 0xFFC)
            wb = int.from_bytes(st.mem[addr:addr + 4], "little")
            pend_kind = 1
            pend_addr = addr
        elif op == OP_SW:
            ea = (a + im) & M32
            if is_real:
                if ea & 3:
                    return ST_TRAP_MISALIGNED
                if ea < env.data_base or ea + 4 > env.scratch_base:
                    return ST_TRAP_OOB
                addr = ea
            else:
                addr = env.scratch_base + (ea & 0xFFC)
            st.mem[addr:addr + 4] = b.to_bytes(4, "little")
            hw_val = (b & M32).bit_count()
            pend_kind = 2
            pend_addr = addr
        elif OP_BEQ <= op <= OP_BGEU:
            if op == OP_BEQ:
                cond = a == b
            elif op == OP_BNE:
                cond = a != b
            elif op == OP_BLT:
                cond = sext32(a) < sext32(b)
            elif op == OP_BGE:
                cond = sext32(a) >= sext32(b)
            elif op == OP_BLTU:
                cond = a < b
            else:
                cond = a >= b
            if cond:
                extra = env.branch_taken_extra
                if is_real:
                    t = pc + im
                    if t & 3:
                        return ST_TRAP_MISALIGNED
                    next_pc = t
        elif op == OP_JAL:
            wb = (pc + 4) & M32
            if is_real:
                t = pc + im
                if t & 3:
                    return ST_TRAP_MISALIGNED
                next_pc = t
        elif op == OP_JALR:
            wb = (pc + 4) & M32
            if is_real:
                t = (a + im) & M32 & ~1
                if t & 3:
                    return ST_TRAP_MISALIGNED
                next_pc = t
        elif op == OP_ECALL:
            if is_real:
                service = regs[17]
                if service == 1:
                    env.out_values.append(sext32(regs[10]))
                elif service == 93:
                    env.exit_code = regs[10] & 0xFF
                    status = ST_EXIT
                else:
                    return ST_TRAP_SYSCALL

        if wb is not None and rd != 0:
            if is_real:
                regs[rd] = wb
            hw_val = wb.bit_count()

    total_c = cycles + extra
    noise_amp = env.noise_amp
    rng = env.rng
    power = env.power
    for j in range(1, total_c + 1):
        s = bpower
        if j == total_c:
            s += hw_val
        if noise_amp:
            s += rng.randbelow(noise_amp + 1)
        power.append(s)
    if pend_kind >= 0:
        env.ev_cycle.append(cyc0 + total_c)
        env.ev_kind.append(pend_kind)
        env.ev_addr.append(pend_addr)
    st.cycle = cyc0 + total_c
    st.pc = next_pc if is_real else pc + 4
    return status


def run_core(*, valid, cls_id, op_id, rd, rs1, rs2, imm, mask01, mem,
             text_base, data_base, entry, prof_cycles, prof_power, prof_n,
             branch_taken_extra, shadow, randomize, noise_amp, max_cycles,
             run_seed):
    """Pure-Python run loop; same contract as _speedups.run_core."""
    env = ExecEnv(valid=valid, cls_id=cls_id, op_id=op_id, rd=rd, rs1=rs1,
                  rs2=rs2, imm=imm, mask01=mask01, text_base=text_base,
                  data_base=data_base, mem_bytes=len(mem), shadow=shadow,
                  randomize=randomize, noise_amp=noise_amp,
                  prof_cycles=prof_cycles, prof_power=prof_power,
                  prof_n=prof_n, branch_taken_extra=branch_taken_extra,
                  run_seed=run_seed)
    st = MachineState(pc=entry, mem=mem)
    status = ST_FUEL
    while st.cycle < max_cycles:
        result = step(st, env)
        if result is not None:
            status = result
            break
    return {
        "status": status,
        "exit_code": env.exit_code,
        "out_values": env.out_values,
        "total_cycles": st.cycle,
        "power": env.power,
        "ev_cycle": env.ev_cycle,
        "ev_kind": env.ev_kind,
        "ev_addr": env.ev_addr,
    }
