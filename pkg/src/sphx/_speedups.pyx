# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled execution core.

Mirrors sphx.machine.run_core instruction for instruction, including the
order of generator draws, so traces are bit-identical across cores.  The
parity test suite enforces this.
"""

from libc.stdint cimport int16_t, int32_t, int64_t, uint8_t, uint32_t, uint64_t

import numpy as np

cdef extern from *:
    int __builtin_popcount(unsigned int x)

# Keep in sync with sphx.isa.OPS; verified by the test suite.
OP_ORDER = (
    "ADD", "SUB", "AND", "OR", "XOR", "SLT", "SLTU", "SLL", "SRL", "SRA",
    "ADDI", "ANDI", "ORI", "XORI", "SLTI", "SLTIU", "SLLI", "SRLI", "SRAI",
    "LUI", "LW", "SW",
    "BEQ", "BNE", "BLT", "BGE", "BLTU", "BGEU",
    "JAL", "JALR", "ECALL",
)

cdef enum:
    ST_EXIT = 0
    ST_TRAP_ILLEGAL = 1
    ST_TRAP_MISALIGNED = 2
    ST_TRAP_OOB = 3
    ST_TRAP_SYSCALL = 4
    ST_FUEL = 5
    CLS_DECOY_DISCARD = 9
    SCRATCH_BYTES = 4096

cdef uint64_t _GOLDEN = 0x9E3779B97F4A7C15UL
cdef uint64_t _MIX1 = 0xBF58476D1CE4E5B9UL
cdef uint64_t _MIX2 = 0x94D049BB133111EBUL


cdef inline uint64_t _rng_next(uint64_t *state):
    state[0] += _GOLDEN
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * _MIX1
    z = (z ^ (z >> 27)) * _MIX2
    return z ^ (z >> 31)


def run_core(*, valid, cls_id, op_id, rd, rs1, rs2, imm, mask01, mem,
             text_base, data_base, entry, prof_cycles, prof_power, prof_n,
             branch_taken_extra, shadow, randomize, noise_amp, max_cycles,
             run_seed):
    cdef const uint8_t[::1] v_valid = valid
    cdef const uint8_t[::1] v_cls = cls_id
    cdef const int16_t[::1] v_op = op_id
    cdef const uint8_t[::1] v_rd = rd
    cdef const uint8_t[::1] v_rs1 = rs1
    cdef const uint8_t[::1] v_rs2 = rs2
    cdef const int64_t[::1] v_imm = imm
    cdef const uint8_t[::1] v_mask = mask01
    cdef uint8_t[::1] v_mem = mem
    cdef const int32_t[:, ::1] v_pcyc = prof_cycles
    cdef const int32_t[:, ::1] v_ppow = prof_power
    cdef const int32_t[::1] v_pn = prof_n

    cdef int64_t c_text_base = text_base
    cdef int64_t c_data_base = data_base
    cdef int64_t c_max_cycles = max_cycles
    cdef int64_t c_noise = noise_amp
    cdef int c_extra_taken = branch_taken_extra
    cdef bint c_shadow = shadow
    cdef bint c_rand = randomize
    cdef uint64_t rng_state = run_seed
    cdef int64_t n_words = v_op.shape[0]
    cdef int64_t mem_len = v_mem.shape[0]
    cdef int64_t scratch_base = mem_len - SCRATCH_BYTES

    cdef uint32_t regs[32]
    cdef int i
    for i in range(32):
        regs[i] = 0

    # Growable output buffers.
    cdef int64_t cap_power = 1 << 14
    cdef int64_t n_power = 0
    power_arr = np.empty(cap_power, dtype=np.int64)
    cdef int64_t[::1] power = power_arr
    cdef int64_t cap_ev = 1 << 12
    cdef int64_t n_ev = 0
    evc_arr = np.empty(cap_ev, dtype=np.int64)
    evk_arr = np.empty(cap_ev, dtype=np.uint8)
    eva_arr = np.empty(cap_ev, dtype=np.uint32)
    cdef int64_t[::1] evc = evc_arr
    cdef uint8_t[::1] evk = evk_arr
    cdef uint32_t[::1] eva = eva_arr
    out_values = []

    cdef int64_t pc = entry
    cdef int64_t cycle = 0
    cdef int status = ST_FUEL
    cdef int exit_code = 0

    cdef int64_t widx, cyc0, t, im, next_pc, s
    cdef int cls, cand, op, rd_i, total_c, hw_val, extra, pend_kind, j
    cdef int32_t cycles, bpower
    cdef uint32_t a, b, wb, ea, addr, pend_addr
    cdef bint is_real, has_wb, cond

    while cycle < c_max_cycles:
        widx = (pc - c_text_base) >> 2
        if pc < c_text_base or widx >= n_words:
            status = ST_TRAP_OOB
            break
        cyc0 = cycle
        if n_ev + 2 > cap_ev:
            cap_ev <<= 1
            new_evc = np.empty(cap_ev, dtype=np.int64)
            new_evk = np.empty(cap_ev, dtype=np.uint8)
            new_eva = np.empty(cap_ev, dtype=np.uint32)
            new_evc[:n_ev] = evc_arr[:n_ev]
            new_evk[:n_ev] = evk_arr[:n_ev]
            new_eva[:n_ev] = eva_arr[:n_ev]
            evc_arr, evk_arr, eva_arr = new_evc, new_evk, new_eva
            evc, evk, eva = evc_arr, evk_arr, eva_arr
        evc[n_ev] = cyc0 + 1
        evk[n_ev] = 0
        eva[n_ev] = <uint32_t>pc
        n_ev += 1

        is_real = v_mask[widx] != 0
        if is_real or c_shadow:
            cls = v_cls[widx]
        else:
            cls = CLS_DECOY_DISCARD
        if c_rand:
            cand = <int>(_rng_next(&rng_state) % <uint64_t>v_pn[cls])
        else:
            cand = 0
        cycles = v_pcyc[cls, cand]
        bpower = v_ppow[cls, cand]

        extra = 0
        hw_val = 0
        next_pc = pc + 4
        pend_kind = -1
        pend_addr = 0

        if is_real or c_shadow:
            if not v_valid[widx]:
                status = ST_TRAP_ILLEGAL
                break
            op = v_op[widx]
            rd_i = v_rd[widx]
            a = regs[v_rs1[widx]]
            b = regs[v_rs2[widx]]
            im = v_imm[widx]
            has_wb = False
            wb = 0

            if op == 0:      # ADD
                wb = a + b; has_wb = True
            elif op == 1:    # SUB
                wb = a - b; has_wb = True
            elif op == 2:    # AND
                wb = a & b; has_wb = True
            elif op == 3:    # OR
                wb = a | b; has_wb = True
            elif op == 4:    # XOR
                wb = a ^ b; has_wb = True
            elif op == 5:    # SLT
                wb = 1 if <int32_t>a < <int32_t>b else 0; has_wb = True
            elif op == 6:    # SLTU
                wb = 1 if a < b else 0; has_wb = True
            elif op == 7:    # SLL
                wb = a << (b & 31); has_wb = True
            elif op == 8:    # SRL
                wb = a >> (b & 31); has_wb = True
            elif op == 9:    # SRA
                wb = <uint32_t>((<int32_t>a) >> (b & 31)); has_wb = True
            elif op == 10:   # ADDI
                wb = a + <uint32_t>im; has_wb = True
            elif op == 11:   # ANDI
                wb = a & <uint32_t>im; has_wb = True
            elif op == 12:   # ORI
                wb = a | <uint32_t>im; has_wb = True
            elif op == 13:   # XORI
                wb = a ^ <uint32_t>im; has_wb = True
            elif op == 14:   # SLTI
                wb = 1 if <int32_t>a < im else 0; has_wb = True
            elif op == 15:   # SLTIU
                wb = 1 if a < <uint32_t>im else 0; has_wb = True
            elif op == 16:   # SLLI
                wb = a << im; has_wb = True
            elif op == 17:   # SRLI
                wb = a >> im; has_wb = True
            elif op == 18:   # SRAI
                wb = <uint32_t>((<int32_t>a) >> im); has_wb = True
            elif op == 19:   # LUI
                wb = <uint32_t>im; has_wb = True
            elif op == 20:   # LW
                ea = a + <uint32_t>im
                if is_real:
                    if ea & 3:
                        status = ST_TRAP_MISALIGNED
                        break
                    if (<int64_t>ea) + 4 > scratch_base:
                        status = ST_TRAP_OOB
                        break
                    addr = ea
                else:
                    addr = <uint32_t>(scratch_base + (ea & 0xFFC))
                wb = (v_mem[addr] | (<uint32_t>v_mem[addr + 1] << 8)
                      | (<uint32_t>v_mem[addr + 2] << 16)
                      | (<uint32_t>v_mem[addr + 3] << 24))
                has_wb = True
                pend_kind = 1
                pend_addr = addr
            elif op == 21:   # SW
                ea = a + <uint32_t>im
                if is_real:
                    if ea & 3:
                        status = ST_TRAP_MISALIGNED
                        break
                    if (<int64_t>ea) < c_data_base or (<int64_t>ea) + 4 > scratch_base:
                        status = ST_TRAP_OOB
                        break
                    addr = ea
                else:
                    addr = <uint32_t>(scratch_base + (ea & 0xFFC))
                v_mem[addr] = <uint8_t>(b & 0xFF)
                v_mem[addr + 1] = <uint8_t>((b >> 8) & 0xFF)
                v_mem[addr + 2] = <uint8_t>((b >> 16) & 0xFF)
                v_mem[addr + 3] = <uint8_t>((b >> 24) & 0xFF)
                hw_val = __builtin_popcount(b)
                pend_kind = 2
                pend_addr = addr
            elif 22 <= op <= 27:  # BEQ..BGEU
                if op == 22:
                    cond = a == b
                elif op == 23:
                    cond = a != b
                elif op == 24:
                    cond = <int32_t>a < <int32_t>b
                elif op == 25:
                    cond = <int32_t>a >= <int32_t>b
                elif op == 26:
                    cond = a < b
                else:
                    cond = a >= b
                if cond:
                    extra = c_extra_taken
                    if is_real:
                        t = pc + im
                        if t & 3:
                            status = ST_TRAP_MISALIGNED
                            break
                        next_pc = t
            elif op == 28:   # JAL
                wb = <uint32_t>(pc + 4); has_wb = True
                if is_real:
                    t = pc + im
                    if t & 3:
                        status = ST_TRAP_MISALIGNED
                        break
                    next_pc = t
            elif op == 29:   # JALR
                wb = <uint32_t>(pc + 4); has_wb = True
                if is_real:
                    t = <int64_t>((a + <uint32_t>im) & 0xFFFFFFFEU)
                    if t & 3:
                        status = ST_TRAP_MISALIGNED
                        break
                    next_pc = t
            elif op == 30:   # ECALL
                if is_real:
                    if regs[17] == 1:
                        out_values.append(<int32_t>regs[10])
                    elif regs[17] == 93:
                        exit_code = regs[10] & 0xFF
                        status = ST_EXIT
                    else:
                        status = ST_TRAP_SYSCALL
                        break

            if has_wb and rd_i != 0:
                if is_real:
                    regs[rd_i] = wb
                hw_val = __builtin_popcount(wb)

        total_c = cycles + extra
        if n_power + total_c > cap_power:
            while n_power + total_c > cap_power:
                cap_power <<= 1
            new_power = np.empty(cap_power, dtype=np.int64)
            new_power[:n_power] = power_arr[:n_power]
            power_arr = new_power
            power = power_arr
        for j in range(1, total_c + 1):
            s = bpower
            if j == total_c:
                s += hw_val
            if c_noise:
                s += <int64_t>(_rng_next(&rng_state) % <uint64_t>(c_noise + 1))
            power[n_power] = s
            n_power += 1
        if pend_kind >= 0:
            evc[n_ev] = cyc0 + total_c
            evk[n_ev] = <uint8_t>pend_kind
            eva[n_ev] = pend_addr
            n_ev += 1
        cycle = cyc0 + total_c
        pc = next_pc if is_real else pc + 4
        if status != ST_FUEL:
            break

    return {
        "status": status,
        "exit_code": exit_code,
        "out_values": out_values,
        "total_cycles": cycle,
        "power": power_arr[:n_power].copy(),
        "ev_cycle": evc_arr[:n_ev].copy(),
        "ev_kind": evk_arr[:n_ev].copy(),
        "ev_addr": eva_arr[:n_ev].copy(),
    }
