import numpy as np
import pytest

import sphx.vm as vm_mod
from sphx import machine
from sphx.isa import MemoryImage, assemble, encode, Instruction, parse_assembly
from sphx.maskcipher import BadKeyOrCorrupt
from sphx.obfuscator import MaskBits, ObfuscationParams, diversify
from sphx.profiles import ProfileTable
from sphx.vm import (LoadedImage, RunConfig, VmError, execute,
                     expected_sphinx_cycles, load_image, predecode, run)

HELLO = ("addi a0, zero, 7\naddi a7, zero, 1\necall\n"
         "addi a0, zero, 0\naddi a7, zero, 93\necall\n")

EXIT0 = "addi a0, zero, 0\naddi a7, zero, 93\necall\n"


def _image(src):
    return assemble(parse_assembly(src))


def _baseline(src, **cfg):
    return execute(_image(src), None, RunConfig(mode="baseline", **cfg))


def test_hello_example_cycles_output():
    t = _baseline(HELLO)
    assert t.status == "exit"
    assert t.guest_exit_code == 0
    assert t.guest_output == b"7\n"
    assert t.total_cycles == 10  # 4 x 1-cycle ALU + 2 x 3-cycle SYSTEM


def test_addi_power_sample():
    t = _baseline("addi x1, x0, 5\n" + EXIT0)
    # candidate 0 for ALU_IMM is (1 cycle, base 2); hamming(5) = 2.
    assert t.power[0] == 4


def test_x0_stays_zero():
    t = _baseline("addi x0, x0, 5\naddi a0, x0, 0\naddi a7, zero, 1\necall\n"
                  + EXIT0)
    assert t.guest_output == b"0\n"


def test_print_negative_value():
    t = _baseline("addi a0, zero, -5\naddi a7, zero, 1\necall\n" + EXIT0)
    assert t.guest_output == b"-5\n"


def test_arithmetic_semantics():
    src = """
        addi t0, zero, -1
        srli t1, t0, 28       # 0xF
        addi a0, t1, 0
        addi a7, zero, 1
        ecall                  # 15
        srai t2, t0, 4
        addi a0, t2, 0
        ecall                  # -1 (arithmetic shift keeps sign)
        addi t3, zero, 5
        slt  t4, t0, t3
        addi a0, t4, 0
        ecall                  # 1 (signed -1 < 5)
        sltu t5, t0, t3
        addi a0, t5, 0
        ecall                  # 0 (unsigned max > 5)
        sub  t6, t3, t0
        addi a0, t6, 0
        ecall                  # 6
    """ + EXIT0
    t = _baseline(src)
    assert t.guest_output == b"15\n-1\n1\n0\n6\n"


def test_memory_roundtrip_and_events():
    src = ("la s0, buf\naddi t0, zero, 77\nsw t0, 4(s0)\nlw a0, 4(s0)\n"
           "addi a7, zero, 1\necall\n" + EXIT0 +
           ".data\nbuf: .word 0\n.word 0\n")
    t = _baseline(src)
    assert t.guest_output == b"77\n"
    events = list(t.iter_mem_events())
    writes = [e for e in events if e[1] == "W"]
    reads = [e for e in events if e[1] == "R"]
    assert len(writes) == 1 and len(reads) == 1
    assert writes[0][2] == reads[0][2]
    cycles = [e[0] for e in events]
    assert cycles == sorted(cycles)


def test_trap_misaligned_load():
    t = _baseline("addi t0, zero, 2\nlw a0, 0(t0)\n" + EXIT0)
    assert t.status == "trap_misaligned"
    assert t.guest_exit_code is None


def test_trap_oob_load():
    t = _baseline("lui t0, 1024\nlw a0, 0(t0)\n" + EXIT0)  # 4 MiB > memory
    assert t.status == "trap_oob"


def test_trap_store_to_text():
    t = _baseline("addi t0, zero, 0\nsw t0, 0(t0)\n" + EXIT0)
    assert t.status == "trap_oob"


def test_store_to_scratch_page_traps():
    # Top 4 KiB is the decoy scratch page, not architectural memory.
    t = _baseline("lui t0, 256\naddi t0, t0, -4\nsw t0, 0(t0)\n" + EXIT0)
    assert t.status == "trap_oob"


def test_trap_illegal_instruction():
    image = MemoryImage(text_base=0, text=[0xFFFFFFFF], data_base=0x10000,
                        data=b"", entry=0)
    t = execute(image, None, RunConfig(mode="baseline"))
    assert t.status == "trap_illegal"


def test_trap_bad_syscall():
    t = _baseline("addi a7, zero, 5\necall\n" + EXIT0)
    assert t.status == "trap_syscall"


def test_trap_pc_off_end():
    t = _baseline("addi t0, zero, 1\n")
    assert t.status == "trap_oob"


def test_trap_jalr_misaligned():
    t = _baseline("addi t0, zero, 6\njalr x0, t0, 0\n" + EXIT0)
    assert t.status == "trap_misaligned"


def test_fuel_exhaustion():
    t = _baseline("loop: jal x0, loop\n", max_cycles=10)
    assert t.status == "fuel"
    assert t.total_cycles >= 10


def test_trapping_instruction_consumes_no_cycles():
    t = _baseline("addi t0, zero, 2\nlw a0, 0(t0)\n" + EXIT0)
    assert t.total_cycles == 1  # only the ADDI retired
    assert len(t.power) == 1
    # Fetch of the trapping LW is still recorded.
    assert t.dynamic_instructions() == 2


def test_decoy_shadow_store_goes_to_scratch():
    # Word 0 is a decoy SW; registers are all zero so it targets ea=0,
    # which remaps into the scratch page.
    decoy = encode(Instruction("SW", rs1=0, rs2=0, imm=0))
    base = _image(HELLO)
    image = MemoryImage(text_base=0, text=[decoy] + base.text,
                        data_base=0x10000, data=b"", entry=0)
    mask = MaskBits([0] + [1] * len(base.text))
    t = execute(image, mask, RunConfig(mode="sphinx", shadow_decoys=True,
                                       profile_randomization=False))
    assert t.status == "exit" and t.guest_output == b"7\n"
    writes = [e for e in t.iter_mem_events() if e[1] == "W"]
    assert len(writes) == 1
    scratch_base = machine.DEFAULT_MEM_BYTES - machine.SCRATCH_BYTES
    assert writes[0][2] >= scratch_base


def test_decoy_shadow_never_writes_registers():
    # Decoy ADDI a0, zero, 99 must not change a0.
    decoy = encode(Instruction("ADDI", rd=10, rs1=0, imm=99))
    base = _image(HELLO)
    image = MemoryImage(text_base=0, text=[decoy] + base.text,
                        data_base=0x10000, data=b"", entry=0)
    mask = MaskBits([0] + [1] * len(base.text))
    t = execute(image, mask, RunConfig(mode="sphinx"))
    assert t.guest_output == b"7\n"


def test_decoy_branch_never_redirects():
    # Decoy BEQ x0, x0 (always true) jumping backwards; real flow continues.
    decoy = encode(Instruction("BEQ", rs1=0, rs2=0, imm=0))
    base = _image(HELLO)
    image = MemoryImage(text_base=0, text=[decoy] + base.text,
                        data_base=0x10000, data=b"", entry=0)
    mask = MaskBits([0] + [1] * len(base.text))
    t = execute(image, mask, RunConfig(mode="sphinx",
                                       profile_randomization=False))
    assert t.status == "exit" and t.guest_output == b"7\n"
    # Taken decoy branch pays the +1 cycle: 2 cycles + hello's 10.
    assert t.total_cycles == 12


def test_discard_profile_when_shadow_off():
    decoy = encode(Instruction("LW", rd=5, rs1=0, imm=16))
    base = _image(HELLO)
    image = MemoryImage(text_base=0, text=[decoy] + base.text,
                        data_base=0x10000, data=b"", entry=0)
    mask = MaskBits([0] + [1] * len(base.text))
    t = execute(image, mask, RunConfig(mode="sphinx", shadow_decoys=False,
                                       profile_randomization=False))
    assert t.total_cycles == 11  # DECOY_DISCARD is 1 cycle
    assert t.power[0] == 1       # and power 1, no hamming term
    # No R event: the discarded load never touches memory.
    assert all(kind != "R" for _, kind, _ in t.iter_mem_events())


def test_sphinx_mode_requires_mask():
    with pytest.raises(VmError, match="requires an obfuscated image"):
        execute(_image(HELLO), None, RunConfig(mode="sphinx"))


def test_mask_length_mismatch_rejected():
    with pytest.raises(VmError, match="mask length"):
        execute(_image(HELLO), MaskBits([1, 1]), RunConfig(mode="sphinx"))


def test_determinism_bit_identical():
    program = parse_assembly(HELLO)
    out, mask, _ = diversify(program, ObfuscationParams(entropy=0.4, seed=2))
    image = assemble(out)
    cfg = RunConfig(mode="sphinx", run_seed=99, noise_amplitude=3)
    a = execute(image, mask, cfg)
    b = execute(image, mask, cfg)
    assert np.array_equal(a.power, b.power)
    assert np.array_equal(a.mem_cycles, b.mem_cycles)
    assert np.array_equal(a.mem_addrs, b.mem_addrs)
    assert a.guest_output == b.guest_output
    assert a.total_cycles == b.total_cycles


def test_profile_randomization_changes_timing():
    program = parse_assembly(HELLO)
    out, mask, _ = diversify(program, ObfuscationParams(entropy=0.0, seed=0))
    image = assemble(out)
    base = execute(image, mask, RunConfig(mode="sphinx",
                                          profile_randomization=False))
    assert base.total_cycles == 10
    randomized = {execute(image, mask, RunConfig(mode="sphinx", run_seed=s)
                          ).total_cycles for s in range(8)}
    assert len(randomized) > 1


def test_noise_adds_bounded_offsets():
    amp = 5
    quiet = _baseline(HELLO)
    noisy = _baseline(HELLO, noise_amplitude=amp, run_seed=4)
    assert len(quiet.power) == len(noisy.power)
    deltas = noisy.power - quiet.power
    assert deltas.min() >= 0 and deltas.max() <= amp


def test_profile_override_changes_cycles(tmp_path):
    table = ProfileTable.from_text("ALU_IMM 4,1\nSYSTEM 2,2\n")
    t = execute(_image(HELLO), None, RunConfig(mode="baseline"),
                profiles=table)
    assert t.total_cycles == 4 * 4 + 2 * 2


def test_image_file_roundtrip(tmp_path):
    from sphx.image import write_image
    from sphx.maskcipher import derive_key, encrypt_mask

    program = parse_assembly(HELLO)
    out, mask, stats = diversify(program, ObfuscationParams(entropy=0.5,
                                                            seed=6))
    image = assemble(out)
    key = derive_key(0xAA, 0xBB)
    blob = write_image(image, ciphertext=encrypt_mask(mask, key),
                       entropy_ppm=500000, build_seed=6,
                       real_count=stats.real_count, key_id=key.key_id)
    path = tmp_path / "prog.img"
    path.write_bytes(blob)

    loaded = load_image(path, device_secret=0xAA)
    assert loaded.mask == mask
    assert loaded.header.real_count == mask.popcount()
    assert loaded.image.text == image.text

    with pytest.raises(BadKeyOrCorrupt):
        load_image(path, device_secret=0xAB)

    t = run(path, RunConfig(mode="sphinx", device_secret=0xAA))
    assert t.guest_output == b"7\n"


def test_sphinx_refused_for_plain_image_file(tmp_path):
    from sphx.image import write_image
    path = tmp_path / "plain.img"
    path.write_bytes(write_image(_image(HELLO)))
    with pytest.raises(VmError, match="refused"):
        run(path, RunConfig(mode="sphinx", device_secret=0))


def test_maskless_execution_of_obfuscated_image():
    program = parse_assembly(HELLO)
    out, mask, _ = diversify(program, ObfuscationParams(entropy=0.5, seed=1))
    image = assemble(out)
    t = execute(image, None, RunConfig(mode="baseline"))
    base = _baseline(HELLO)
    diverged = (t.status != "exit"
                or t.guest_output != base.guest_output
                or t.guest_exit_code != base.guest_exit_code)
    assert diverged


def test_trace_csv_roundtrip(tmp_path):
    from sphx.trace import read_power_csv
    t = _baseline(HELLO)
    p = tmp_path / "power.csv"
    t.write_power_csv(p)
    assert p.read_text().splitlines()[0] == "cycle,power"
    assert np.array_equal(read_power_csv(p), t.power)
    m = tmp_path / "mem.csv"
    t.write_mem_csv(m)
    lines = m.read_text().splitlines()
    assert lines[0] == "cycle,kind,addr"
    assert lines[1].split(",")[1] == "F"
    assert lines[1].split(",")[2].startswith("0x")


def test_predecode_matches_decode():
    image = _image(HELLO)
    dec = predecode(image.text)
    assert dec.valid.all()
    assert dec.op_id[2] == 30  # ECALL


def test_core_op_order_matches_isa():
    from sphx.isa import OPS
    if vm_mod._speedups is not None:
        assert vm_mod._speedups.OP_ORDER == OPS
    names = ("OP_" + op for op in OPS)
    for i, n in enumerate(names):
        assert getattr(machine, n) == i


@pytest.mark.skipif(vm_mod._speedups is None,
                    reason="compiled core not built")
def test_core_parity(monkeypatch, corpus_programs):
    """Compiled and pure cores produce bit-identical traces."""
    scenarios = [
        dict(mode="baseline"),
        dict(mode="sphinx", run_seed=5),
        dict(mode="sphinx", run_seed=9, shadow_decoys=False),
        dict(mode="sphinx", run_seed=3, noise_amplitude=4),
    ]
    for name in ("fibonacci", "bubble_sort", "dot_product"):
        program = corpus_programs[name]
        out, mask, _ = diversify(program, ObfuscationParams(entropy=0.5,
                                                            seed=14))
        image = assemble(out)
        for scn in scenarios:
            cfg = RunConfig(**scn)
            use_mask = mask if scn["mode"] == "sphinx" else None
            fast = execute(image, use_mask, cfg)
            with monkeypatch.context() as m:
                m.setattr(vm_mod, "_speedups", None)
                slow = execute(image, use_mask, cfg)
            assert fast.status == slow.status
            assert fast.total_cycles == slow.total_cycles
            assert fast.guest_output == slow.guest_output
            assert np.array_equal(fast.power, slow.power)
            assert np.array_equal(fast.mem_cycles, slow.mem_cycles)
            assert np.array_equal(fast.mem_kinds, slow.mem_kinds)
            assert np.array_equal(fast.mem_addrs, slow.mem_addrs)


def test_step_api_single_instruction():
    """machine.step drives one instruction on a MachineState."""
    image = _image("addi x1, x0, 5\n" + EXIT0)
    dec = predecode(image.text)
    env = machine.ExecEnv(
        valid=dec.valid.tolist(), cls_id=dec.cls_id.tolist(),
        op_id=dec.op_id.tolist(), rd=dec.rd.tolist(),
        rs1=dec.rs1.tolist(), rs2=dec.rs2.tolist(), imm=dec.imm.tolist(),
        mask01=[1] * len(image.text), text_base=0, data_base=0x10000,
        mem_bytes=1 << 20, shadow=True, randomize=False, noise_amp=0,
        prof_cycles=[[1, 2, 3], [1, 2, 3], [1, 2, 3], [2, 3, 5], [2, 4, 0],
                     [1, 2, 0], [1, 2, 0], [1, 2, 0], [3, 0, 0], [1, 0, 0]],
        prof_power=[[2, 1, 1], [2, 1, 1], [2, 1, 1], [3, 2, 1], [3, 2, 0],
                    [2, 2, 0], [2, 2, 0], [2, 2, 0], [2, 0, 0], [1, 0, 0]],
        prof_n=[3, 3, 3, 3, 2, 2, 2, 2, 1, 1],
        branch_taken_extra=1, run_seed=0)
    st = machine.MachineState(pc=0)
    assert machine.step(st, env) is None
    assert st.regs[1] == 5
    assert st.pc == 4
    assert st.cycle == 1
    assert env.power == [4]


def test_expected_cycles_zero_entropy_exact(corpus_programs,
                                            baseline_traces):
    program = corpus_programs["fibonacci"]
    out, mask, _ = diversify(program, ObfuscationParams(entropy=0.0, seed=0))
    image = assemble(out)
    cfg = RunConfig(mode="sphinx", profile_randomization=False)
    predicted = expected_sphinx_cycles(baseline_traces["fibonacci"], image,
                                       mask, cfg)
    measured = execute(image, mask, cfg).total_cycles
    assert predicted == pytest.approx(measured)
