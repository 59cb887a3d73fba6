import pytest
from hypothesis import given, settings, strategies as st

from sphx.isa import (AsmError, IllegalInstruction, Instruction, LabelRef,
                      Program, SourceInstr, assemble, decode, encode,
                      parse_assembly, OPS, OP_CLASS, SHIFT_OPS)

import refasm


def test_parse_alias_resolution():
    program = parse_assembly("addi a0, zero, 7")
    (ins,) = program.instructions()
    assert ins == SourceInstr("ADDI", rd=10, rs1=0, imm=7, line=1)


def test_parse_empty_file():
    assert parse_assembly("").items == []


def test_parse_self_referential_label():
    program = parse_assembly("loop: beq x1, x2, loop")
    (ins,) = program.instructions()
    assert ins.op == "BEQ"
    assert ins.imm == LabelRef("loop")


def test_parse_comments_stripped():
    program = parse_assembly("# header\naddi x1, x0, 1  # trailing\n")
    assert len(program.instructions()) == 1


def test_parse_duplicate_label_rejected():
    with pytest.raises(AsmError, match="duplicate label"):
        parse_assembly("a: addi x1, x0, 0\na: addi x2, x0, 0")


def test_parse_unknown_mnemonic():
    with pytest.raises(AsmError, match="unknown mnemonic"):
        parse_assembly("frobnicate x1, x2, x3")


def test_parse_bad_register():
    with pytest.raises(AsmError, match="bad register"):
        parse_assembly("addi x32, x0, 1")


def test_parse_data_directive_in_text_rejected():
    with pytest.raises(AsmError, match="only allowed in .data"):
        parse_assembly(".word 5")


def test_assemble_single_addi():
    image = assemble(parse_assembly("addi x1, x0, 5"))
    assert image.text == [0x00500093]


def test_assemble_backward_branch_offset():
    src = "L: addi x1, x0, 0\naddi x2, x0, 0\nbeq x1, x2, L\n"
    image = assemble(parse_assembly(src))
    branch = decode(image.text[2])
    assert branch.op == "BEQ"
    assert branch.imm == -8


def test_assemble_empty_text_is_error():
    with pytest.raises(AsmError, match="no entry"):
        assemble(parse_assembly(".data\nv: .word 1\n"))


def test_assemble_undefined_label():
    with pytest.raises(AsmError, match="undefined label"):
        assemble(parse_assembly("beq x0, x0, nowhere"))


def test_assemble_branch_out_of_range():
    body = "\n".join("add x1, x1, x2" for _ in range(1100))
    src = f"top: {body}\nbeq x0, x0, top\n"
    with pytest.raises(AsmError, match="immediate out of range"):
        assemble(parse_assembly(src))


def test_assemble_la_expands_to_lui_addi():
    src = "la a0, v\nlw a1, 0(a0)\naddi a7, zero, 93\necall\n.data\nv: .word 42\n"
    image = assemble(parse_assembly(src))
    lui = decode(image.text[0])
    addi = decode(image.text[1])
    assert lui.op == "LUI" and addi.op == "ADDI" and addi.rs1 == lui.rd == 10
    resolved = ((lui.imm << 12) + addi.imm) & 0xFFFFFFFF
    assert resolved == image.symbols["v"] == image.data_base


def test_assemble_determinism():
    from sphx.corpus import CORPUS
    for case in CORPUS:
        a = assemble(parse_assembly(case.source))
        b = assemble(parse_assembly(case.source))
        assert a.text == b.text and a.data == b.data


def test_branch_offsets_hit_their_labels():
    from sphx.corpus import CORPUS
    for case in CORPUS:
        image = assemble(parse_assembly(case.source))
        addr_syms = {addr for addr in image.symbols.values()}
        for i, word in enumerate(image.text):
            ins = decode(word)
            if ins.cls in ("BRANCH", "JAL"):
                target = image.text_base + 4 * i + ins.imm
                assert target in addr_syms or ins.op == "JALR"


def test_encode_examples():
    assert encode(Instruction("ADDI", rd=1, rs1=0, imm=5)) == 0x00500093
    assert encode(Instruction("LUI", rd=5, imm=0x12345)) == 0x123452B7
    assert encode(Instruction("ECALL")) == 0x00000073


def test_decode_example():
    assert decode(0x00500093) == Instruction("ADDI", rd=1, rs1=0, imm=5)


def test_decode_rejects_garbage():
    for word in (0xFFFFFFFF, 0x00000000, 0x0000007F, 0x12345678):
        with pytest.raises(IllegalInstruction):
            decode(word)


def test_instruction_validation():
    with pytest.raises(ValueError):
        Instruction("ADDI", rd=1, rs1=0, imm=4096)
    with pytest.raises(ValueError):
        Instruction("BEQ", rs1=0, rs2=0, imm=3)  # odd branch offset
    with pytest.raises(ValueError):
        Instruction("SLLI", rd=1, rs1=1, imm=32)
    with pytest.raises(ValueError):
        Instruction("ADD", rd=32, rs1=0, rs2=0)


def _instructions():
    def build(draw_op, rd, rs1, rs2, i_imm, sh, b_imm, u_imm, j_imm):
        cls = OP_CLASS[draw_op]
        if cls == "ALU":
            return Instruction(draw_op, rd=rd, rs1=rs1, rs2=rs2)
        if cls == "ALU_IMM":
            imm = sh if draw_op in SHIFT_OPS else i_imm
            return Instruction(draw_op, rd=rd, rs1=rs1, imm=imm)
        if cls in ("LOAD", "JALR"):
            return Instruction(draw_op, rd=rd, rs1=rs1, imm=i_imm)
        if cls == "STORE":
            return Instruction(draw_op, rs1=rs1, rs2=rs2, imm=i_imm)
        if cls == "BRANCH":
            return Instruction(draw_op, rs1=rs1, rs2=rs2, imm=b_imm * 2)
        if cls == "LUI":
            return Instruction(draw_op, rd=rd, imm=u_imm)
        if cls == "JAL":
            return Instruction(draw_op, rd=rd, imm=j_imm * 2)
        return Instruction("ECALL")

    return st.builds(
        build,
        st.sampled_from(OPS),
        st.integers(0, 31), st.integers(0, 31), st.integers(0, 31),
        st.integers(-2048, 2047), st.integers(0, 31),
        st.integers(-2048, 2047), st.integers(0, 0xFFFFF),
        st.integers(-(1 << 19), (1 << 19) - 1),
    )


@settings(max_examples=500)
@given(_instructions())
def test_roundtrip_decode_encode(ins):
    assert decode(encode(ins)) == ins


@pytest.mark.skipif(not refasm.clang_available(),
                    reason="clang riscv32 reference assembler unavailable")
@settings(max_examples=60, deadline=None)
@given(_instructions())
def test_encoding_matches_reference_assembler(ins):
    label_of = {0: "L0", 1: "L1"}
    if ins.cls in ("BRANCH", "JAL"):
        # Anchor at word 0 so the label lands inside the two-word window.
        ins = Instruction(ins.op, rd=ins.rd, rs1=ins.rs1, rs2=ins.rs2,
                          imm=4)
    asm = f"L0: {refasm.render_instruction(ins, 0, label_of)}\nL1: ecall\n"
    words = refasm.assemble_text(".text\n" + asm)
    assert words[0] == encode(ins)
