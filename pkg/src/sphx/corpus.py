"""Benchmark corpus: six micro-kernels with independently computed outputs.

Each case carries its expected output, derived here in plain Python from
the same constants the assembly embeds -- never from running the VM.
Kernels print only values, never addresses, so output is invariant under
diversification and data shuffling.
"""

from __future__ import annotations

from dataclasses import dataclass

_M32 = 0xFFFFFFFF

# Software multiply used by the matmul and dot-product kernels
# (non-negative operands; RV32I has no MUL).
_MUL_SOFT = """\
mul_soft:
        addi a0, zero, 0
mul_loop:
        beq  a2, zero, mul_ret
        andi t0, a2, 1
        beq  t0, zero, mul_even
        add  a0, a0, a1
mul_even:
        slli a1, a1, 1
        srli a2, a2, 1
        jal  zero, mul_loop
mul_ret:
        jalr zero, ra, 0
"""


@dataclass(frozen=True)
class BenchmarkCase:
    name: str
    source: str
    expected_output: bytes
    expected_exit: int


def _lines(values) -> bytes:
    return b"".join(b"%d\n" % v for v in values)


def _words(values) -> str:
    return "\n".join(f"        .word {v}" for v in values)


def _fibonacci() -> BenchmarkCase:
    n = 30
    source = f"""\
.text
        addi s0, zero, 0
        addi s1, zero, 1
        addi s2, zero, {n}
fib_loop:
        beq  s2, zero, fib_done
        addi a0, s0, 0
        addi a7, zero, 1
        ecall
        add  t0, s0, s1
        addi s0, s1, 0
        addi s1, t0, 0
        addi s2, s2, -1
        jal  zero, fib_loop
fib_done:
        addi a0, zero, 0
        addi a7, zero, 93
        ecall
"""
    fibs = []
    a, b = 0, 1
    for _ in range(n):
        fibs.append(a)
        a, b = b, a + b
    return BenchmarkCase("fibonacci", source, _lines(fibs), 0)


_SORT_VALUES = [170, -42, 9023, 7, -900, 333, 2, 88, -7, 4096, 15, 0,
                -1, 777, 13, 512, -256, 99, 1024, 5, -37, 60000, 21, -8888]


def _bubble_sort() -> BenchmarkCase:
    values = _SORT_VALUES
    n = len(values)
    source = f"""\
.text
        la   s0, arr
        addi s1, zero, {n}
        addi t0, zero, 0
sort_outer:
        addi t6, s1, -1
        bge  t0, t6, sort_done
        addi t1, zero, 0
        sub  t2, s1, t0
        addi t2, t2, -1
sort_inner:
        bge  t1, t2, inner_done
        slli t3, t1, 2
        add  t3, t3, s0
        lw   t4, 0(t3)
        lw   t5, 4(t3)
        bge  t5, t4, no_swap
        sw   t5, 0(t3)
        sw   t4, 4(t3)
no_swap:
        addi t1, t1, 1
        jal  zero, sort_inner
inner_done:
        addi t0, t0, 1
        jal  zero, sort_outer
sort_done:
        addi t0, zero, 0
        addi s2, zero, 0
print_loop:
        bge  t0, s1, print_done
        slli t1, t0, 2
        add  t1, t1, s0
        lw   a0, 0(t1)
        add  s2, s2, a0
        addi a7, zero, 1
        ecall
        addi t0, t0, 1
        jal  zero, print_loop
print_done:
        addi a0, s2, 0
        addi a7, zero, 1
        ecall
        addi a0, zero, 0
        addi a7, zero, 93
        ecall
.data
arr:
{_words(values)}
"""
    expected = sorted(values) + [sum(values)]
    return BenchmarkCase("bubble_sort", source, _lines(expected), 0)


def _matmul8() -> BenchmarkCase:
    dim = 8
    mat_a = [(3 * i + 5 * j + 1) % 13 for i in range(dim) for j in range(dim)]
    mat_b = [(7 * i + 2 * j + 3) % 11 for i in range(dim) for j in range(dim)]
    source = f"""\
.text
        la   s0, mat_a
        la   s1, mat_b
        la   s2, mat_c
        addi s3, zero, 0
mm_i:
        addi t0, zero, {dim}
        bge  s3, t0, mm_done
        addi s4, zero, 0
mm_j:
        addi t0, zero, {dim}
        bge  s4, t0, mm_i_next
        addi s5, zero, 0
        addi s6, zero, 0
mm_k:
        addi t0, zero, {dim}
        bge  s5, t0, mm_k_done
        slli t1, s3, 3
        add  t1, t1, s5
        slli t1, t1, 2
        add  t1, t1, s0
        lw   a1, 0(t1)
        slli t2, s5, 3
        add  t2, t2, s4
        slli t2, t2, 2
        add  t2, t2, s1
        lw   a2, 0(t2)
        jal  ra, mul_soft
        add  s6, s6, a0
        addi s5, s5, 1
        jal  zero, mm_k
mm_k_done:
        slli t3, s3, 3
        add  t3, t3, s4
        slli t3, t3, 2
        add  t3, t3, s2
        sw   s6, 0(t3)
        addi a0, s6, 0
        addi a7, zero, 1
        ecall
        addi s4, s4, 1
        jal  zero, mm_j
mm_i_next:
        addi s3, s3, 1
        jal  zero, mm_i
mm_done:
        addi a0, zero, 0
        addi a7, zero, 93
        ecall
{_MUL_SOFT}\
.data
mat_a:
{_words(mat_a)}
mat_b:
{_words(mat_b)}
mat_c:
        .space {4 * dim * dim}
"""
    expected = []
    for i in range(dim):
        for j in range(dim):
            expected.append(sum(mat_a[i * dim + k] * mat_b[k * dim + j]
                                for k in range(dim)))
    return BenchmarkCase("matmul8", source, _lines(expected), 0)


def _dot_product() -> BenchmarkCase:
    n = 64
    vec_u = [(5 * i + 3) % 31 for i in range(n)]
    vec_v = [(2 * i + 7) % 29 for i in range(n)]
    source = f"""\
.text
        la   s0, vec_u
        la   s1, vec_v
        addi s2, zero, {n}
        addi s3, zero, 0
        addi s4, zero, 0
dot_loop:
        bge  s3, s2, dot_done
        slli t1, s3, 2
        add  t2, t1, s0
        lw   a1, 0(t2)
        add  t3, t1, s1
        lw   a2, 0(t3)
        jal  ra, mul_soft
        add  s4, s4, a0
        addi s3, s3, 1
        jal  zero, dot_loop
dot_done:
        addi a0, s4, 0
        addi a7, zero, 1
        ecall
        addi a0, zero, 0
        addi a7, zero, 93
        ecall
{_MUL_SOFT}\
.data
vec_u:
{_words(vec_u)}
vec_v:
{_words(vec_v)}
"""
    dot = sum(u * v for u, v in zip(vec_u, vec_v))
    return BenchmarkCase("dot_product", source, _lines([dot]), 0)


def _memcpy_checksum() -> BenchmarkCase:
    n = 192
    block = [(i * 0x9E3779B1 + 0x7F4A7C15) & _M32 for i in range(n)]
    source = f"""\
.text
        la   s0, src_block
        la   s1, dst_block
        addi s2, zero, {n}
        addi t0, zero, 0
copy_loop:
        bge  t0, s2, copy_done
        slli t1, t0, 2
        add  t2, t1, s0
        lw   t3, 0(t2)
        add  t4, t1, s1
        sw   t3, 0(t4)
        addi t0, t0, 1
        jal  zero, copy_loop
copy_done:
        addi t0, zero, 0
        addi s3, zero, 0
sum_loop:
        bge  t0, s2, sum_done
        slli t1, t0, 2
        add  t1, t1, s1
        lw   t2, 0(t1)
        slli t3, s3, 1
        srli t4, s3, 31
        or   s3, t3, t4
        xor  s3, s3, t2
        addi t0, t0, 1
        jal  zero, sum_loop
sum_done:
        addi a0, s3, 0
        addi a7, zero, 1
        ecall
        addi a0, zero, 0
        addi a7, zero, 93
        ecall
.data
src_block:
{_words(block)}
dst_block:
        .space {4 * n}
"""
    c = 0
    for w in block:
        c = ((c << 1) & _M32) | (c >> 31)
        c ^= w
    signed = c - 0x1_0000_0000 if c & 0x8000_0000 else c
    return BenchmarkCase("memcpy_checksum", source, _lines([signed]), 0)


def _collatz_count() -> BenchmarkCase:
    last = 80
    source = f"""\
.text
        addi s0, zero, 1
        addi s1, zero, {last}
        addi s2, zero, 0
        addi s3, zero, 1
seed_loop:
        blt  s1, s0, report
        addi t0, s0, 0
collatz:
        beq  t0, s3, seed_next
        andi t1, t0, 1
        bne  t1, zero, odd_step
        srli t0, t0, 1
        addi s2, s2, 1
        jal  zero, collatz
odd_step:
        slli t2, t0, 1
        add  t0, t2, t0
        addi t0, t0, 1
        addi s2, s2, 1
        jal  zero, collatz
seed_next:
        addi s0, s0, 1
        jal  zero, seed_loop
report:
        addi a0, s2, 0
        addi a7, zero, 1
        ecall
        addi a0, zero, 0
        addi a7, zero, 93
        ecall
"""
    total = 0
    for seed in range(1, last + 1):
        n = seed
        while n != 1:
            n = n // 2 if n % 2 == 0 else 3 * n + 1
            total += 1
    return BenchmarkCase("collatz_count", source, _lines([total]), 0)


CORPUS: tuple[BenchmarkCase, ...] = (
    _fibonacci(),
    _bubble_sort(),
    _matmul8(),
    _dot_product(),
    _memcpy_checksum(),
    _collatz_count(),
)


def names() -> list[str]:
    return [case.name for case in CORPUS]


def get(name: str) -> BenchmarkCase:
    for case in CORPUS:
        if case.name == name:
            return case
    raise KeyError(f"no benchmark named {name!r}")
