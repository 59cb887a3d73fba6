"""Mask-aware virtual machine: image loading, execution, trace capture.

Two interchangeable execution cores implement the same semantics: a
compiled extension (`sphx._speedups`) and the pure-Python reference in
`sphx.machine`.  Selection happens at import; set SPHX_PURE=1 to force
the fallback.  Both produce bit-identical traces for identical inputs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import machine
from .image import ImageHeader, parse_image
from .isa import CLASS_IDS, IllegalInstruction, MemoryImage, OP_IDS, decode
from .maskcipher import decrypt_mask, derive_key
from .obfuscator import MaskBits
from .profiles import BRANCH_TAKEN_EXTRA, ProfileTable
from .trace import SideChannelTrace

try:
    from . import _speedups
except ImportError:  # pragma: no cover - build-environment dependent
    _speedups = None

if os.environ.get("SPHX_PURE"):
    _speedups = None

ACTIVE_CORE = "compiled" if _speedups is not None else "pure"


class VmError(Exception):
    """Host-side misuse (mode/flag mismatch); guest failures never raise."""


@dataclass
class RunConfig:
    mode: str = "baseline"  # "baseline" | "sphinx"
    run_seed: int = 0
    profile_randomization: bool = True
    shadow_decoys: bool = True
    noise_amplitude: int = 0
    max_cycles: int = 10**8
    device_secret: int = 0

    def __post_init__(self):
        if self.mode not in ("baseline", "sphinx"):
            raise VmError(f"unknown mode {self.mode!r}")
        if self.noise_amplitude < 0:
            raise VmError("noise_amplitude must be >= 0")


@dataclass
class LoadedImage:
    image: MemoryImage
    mask: MaskBits | None
    header: ImageHeader | None = None


@dataclass
class _Decoded:
    """Per-word predecode of a text segment (arrays indexed by word)."""

    valid: np.ndarray   # uint8
    cls_id: np.ndarray  # uint8
    op_id: np.ndarray   # int16
    rd: np.ndarray      # uint8
    rs1: np.ndarray     # uint8
    rs2: np.ndarray     # uint8
    imm: np.ndarray     # int64, semantics-ready (LUI pre-shifted)


def predecode(text: list[int]) -> _Decoded:
    n = len(text)
    valid = np.zeros(n, dtype=np.uint8)
    cls_id = np.zeros(n, dtype=np.uint8)
    op_id = np.zeros(n, dtype=np.int16)
    rd = np.zeros(n, dtype=np.uint8)
    rs1 = np.zeros(n, dtype=np.uint8)
    rs2 = np.zeros(n, dtype=np.uint8)
    imm = np.zeros(n, dtype=np.int64)
    for i, word in enumerate(text):
        try:
            ins = decode(word)
        except IllegalInstruction:
            continue
        valid[i] = 1
        cls_id[i] = CLASS_IDS[ins.cls]
        op_id[i] = OP_IDS[ins.op]
        rd[i] = ins.rd
        rs1[i] = ins.rs1
        rs2[i] = ins.rs2
        imm[i] = (ins.imm << 12) if ins.op == "LUI" else ins.imm
    return _Decoded(valid, cls_id, op_id, rd, rs1, rs2, imm)


def _flatten_profiles(table: ProfileTable):
    from .isa import CLASS_ORDER
    n_classes = len(CLASS_ORDER)
    max_c = max(len(table.candidates(c)) for c in CLASS_ORDER)
    cyc = np.zeros((n_classes, max_c), dtype=np.int32)
    pwr = np.zeros((n_classes, max_c), dtype=np.int32)
    n = np.zeros(n_classes, dtype=np.int32)
    for cls in CLASS_ORDER:
        cands = table.candidates(cls)
        i = CLASS_IDS[cls]
        n[i] = len(cands)
        for j, (c, p) in enumerate(cands):
            cyc[i, j] = c
            pwr[i, j] = p
    return cyc, pwr, n


def load_image(source, device_secret: int | None = None) -> LoadedImage:
    """Parse an image file; decrypt its mask when a secret is supplied."""
    if isinstance(source, (str, Path)):
        blob = Path(source).read_bytes()
    else:
        blob = bytes(source)
    header, image, ciphertext = parse_image(blob)
    mask = None
    if header.obfuscated and device_secret is not None:
        key = derive_key(device_secret, header.key_id)
        mask = decrypt_mask(ciphertext, key)  # raises BadKeyOrCorrupt
        if mask.popcount() != header.real_count:
            raise VmError(
                f"decrypted mask popcount {mask.popcount()} != header "
                f"real_count {header.real_count}")
    return LoadedImage(image=image, mask=mask, header=header)


def _build_memory(image: MemoryImage, mem_bytes: int) -> bytearray:
    mem = bytearray(mem_bytes)
    tb = image.text_base
    for i, word in enumerate(image.text):
        mem[tb + 4 * i:tb + 4 * i + 4] = word.to_bytes(4, "little")
    end = image.data_base + len(image.data)
    if end > mem_bytes - machine.SCRATCH_BYTES:
        raise VmError("data segment does not fit below the scratch page")
    mem[image.data_base:end] = image.data
    return mem


def execute(image: MemoryImage, mask: MaskBits | None, config: RunConfig,
            profiles: ProfileTable | None = None,
            mem_bytes: int = machine.DEFAULT_MEM_BYTES) -> SideChannelTrace:
    """Run a memory image under the given configuration."""
    sphinx = config.mode == "sphinx"
    if sphinx and mask is None:
        raise VmError("sphinx mode requires an obfuscated image with a mask")
    if mask is not None and len(mask) != len(image.text):
        raise VmError(f"mask length {len(mask)} != text words {len(image.text)}")
    table = profiles if profiles is not None else ProfileTable()
    dec = predecode(image.text)
    if sphinx:
        mask01 = np.frombuffer(mask.to_bytes01(), dtype=np.uint8)
    else:
        # Baseline mode ignores the mask entirely: every word is real.
        mask01 = np.ones(len(image.text), dtype=np.uint8)
    mem = _build_memory(image, mem_bytes)
    cyc, pwr, ncand = _flatten_profiles(table)
    randomize = config.profile_randomization and sphinx

    kwargs = dict(
        mask01=mask01, mem=mem,
        text_base=image.text_base, data_base=image.data_base,
        entry=image.entry,
        branch_taken_extra=BRANCH_TAKEN_EXTRA,
        shadow=config.shadow_decoys, randomize=randomize,
        noise_amp=config.noise_amplitude, max_cycles=config.max_cycles,
        run_seed=config.run_seed,
    )
    if _speedups is not None:
        res = _speedups.run_core(
            valid=dec.valid, cls_id=dec.cls_id, op_id=dec.op_id, rd=dec.rd,
            rs1=dec.rs1, rs2=dec.rs2, imm=dec.imm,
            prof_cycles=cyc, prof_power=pwr, prof_n=ncand,
            **{**kwargs, "mask01": np.ascontiguousarray(mask01)},
        )
    else:
        res = machine.run_core(
            valid=dec.valid.tolist(), cls_id=dec.cls_id.tolist(),
            op_id=dec.op_id.tolist(), rd=dec.rd.tolist(),
            rs1=dec.rs1.tolist(), rs2=dec.rs2.tolist(),
            imm=dec.imm.tolist(),
            prof_cycles=cyc.tolist(), prof_power=pwr.tolist(),
            prof_n=ncand.tolist(),
            **{**kwargs, "mask01": mask01.tolist()},
        )
    output = b"".join(b"%d\n" % v for v in res["out_values"])
    status = machine.STATUS_NAMES[res["status"]]
    return SideChannelTrace(
        power=np.asarray(res["power"], dtype=np.int64),
        mem_cycles=np.asarray(res["ev_cycle"], dtype=np.int64),
        mem_kinds=np.asarray(res["ev_kind"], dtype=np.uint8),
        mem_addrs=np.asarray(res["ev_addr"], dtype=np.uint32),
        total_cycles=res["total_cycles"],
        status=status,
        guest_exit_code=res["exit_code"] if status == "exit" else None,
        guest_output=output,
    )


def run(source, config: RunConfig,
        profiles: ProfileTable | None = None) -> SideChannelTrace:
    """Execute an image file (or LoadedImage) per the run configuration."""
    if isinstance(source, LoadedImage):
        loaded = source
    else:
        secret = config.device_secret if config.mode == "sphinx" else None
        loaded = load_image(source, device_secret=secret)
    if (config.mode == "sphinx" and loaded.header is not None
            and not loaded.header.obfuscated):
        raise VmError("sphinx mode refused: image is not obfuscated")
    return execute(loaded.image, loaded.mask, config, profiles)


def expected_sphinx_cycles(baseline: SideChannelTrace, image: MemoryImage,
                           mask: MaskBits, config: RunConfig,
                           profiles: ProfileTable | None = None) -> float:
    """Predicted mean total cycles of a sphinx run of (image, mask).

    Inputs are the baseline trace of the *unobfuscated* program plus the
    static obfuscated build.  Real execution counts come from the baseline
    fetch sequence; decoys in the gap before real instruction k execute
    once per arrival at k that walks the gap: sequential fallthrough plus
    computed-address jumps (JALR, the return idiom, lands at call_site+4
    and therefore walks the following gap, while branch/JAL arrivals land
    on a label and skip it).  Shadow-executed decoy branches are modelled
    as taken half the time.  Expectation is over profile draws.
    """
    table = profiles if profiles is not None else ProfileTable()
    randomized = config.profile_randomization
    dec = predecode(image.text)

    # Decoy class ids in the gap before each real ordinal (gap n = tail).
    n_real = mask.popcount()
    gap_classes: list[list[int]] = [[] for _ in range(n_real + 1)]
    ordinal = 0
    for i in range(len(image.text)):
        if mask[i]:
            ordinal += 1
        else:
            gap_classes[ordinal].append(int(dec.cls_id[i]))

    base_dec = predecode(_real_text(image, mask))
    jalr_id = OP_IDS["JALR"]
    branch_id = CLASS_IDS["BRANCH"]

    fetch_idx = np.flatnonzero(baseline.mem_kinds == 0)
    fetch_words = ((baseline.mem_addrs[fetch_idx].astype(np.int64)
                    - image.text_base) >> 2)
    exec_count = np.zeros(n_real, dtype=np.int64)
    fallthrough = np.zeros(n_real + 1, dtype=np.int64)
    gap_walks = np.zeros(n_real + 1, dtype=np.int64)
    gap_walks[0] = 1  # entry flows through any decoys before real #0
    prev = None
    for w in fetch_words.tolist():
        exec_count[w] += 1
        if prev is not None:
            if w == prev + 1:
                fallthrough[prev + 1] += 1
                gap_walks[prev + 1] += 1
            elif int(base_dec.op_id[prev]) == jalr_id:
                gap_walks[w] += 1
        prev = w

    from .isa import CLASS_ORDER
    mean_cyc = {CLASS_IDS[c]: table.mean_cycles(c, randomized)
                for c in CLASS_ORDER}

    total = 0.0
    for w in range(n_real):
        cls = int(base_dec.cls_id[w])
        total += exec_count[w] * mean_cyc[cls]
        # Taken-branch surcharge: arrivals at w+1 that are not sequential
        # fallthroughs from w mean the branch at w was taken.
        if cls == branch_id:
            taken = exec_count[w] - fallthrough[w + 1]
            total += taken * BRANCH_TAKEN_EXTRA
    if config.shadow_decoys:
        for k in range(n_real + 1):
            if gap_classes[k]:
                per_walk = sum(
                    mean_cyc[c] + (0.5 * BRANCH_TAKEN_EXTRA
                                   if c == branch_id else 0.0)
                    for c in gap_classes[k])
                total += gap_walks[k] * per_walk
    else:
        discard = mean_cyc[CLASS_IDS["DECOY_DISCARD"]]
        for k in range(n_real + 1):
            total += gap_walks[k] * len(gap_classes[k]) * discard
    return total


def _real_text(image: MemoryImage, mask: MaskBits) -> list[int]:
    return [w for i, w in enumerate(image.text) if mask[i]]
