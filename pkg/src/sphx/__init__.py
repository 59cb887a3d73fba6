"""Decoy-instruction diversification toolchain with a mask-aware simulator.

A program is assembled, diversified with decoy instructions under an
entropy knob, and packed together with an encrypted real/fake mask.  The
simulator discards (or shadow-executes) decoys per the mask, randomizes
per-instruction execution profiles, and captures side-channel traces the
analyzer uses to measure how well observable behaviour is decoupled from
functionality.
"""

__version__ = "0.1.0"

from .analyzer import DecouplingReport, decoupling_report, sweep
from .isa import MemoryImage, Program, assemble, parse_assembly
from .maskcipher import BadKeyOrCorrupt, derive_key
from .obfuscator import MaskBits, ObfuscationParams, ObfuscationStats, diversify
from .trace import SideChannelTrace
from .vm import ACTIVE_CORE, RunConfig, load_image, run

__all__ = [
    "ACTIVE_CORE",
    "BadKeyOrCorrupt",
    "DecouplingReport",
    "MaskBits",
    "MemoryImage",
    "ObfuscationParams",
    "ObfuscationStats",
    "Program",
    "RunConfig",
    "SideChannelTrace",
    "assemble",
    "decoupling_report",
    "derive_key",
    "diversify",
    "load_image",
    "parse_assembly",
    "run",
    "sweep",
    "__version__",
]
