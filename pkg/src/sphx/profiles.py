"""Execution profile candidates: (cycles, power per cycle) per class.

Candidate 0 is the fixed baseline profile; the remaining candidates give
the randomized modes their timing and power spread.  The table is data,
overridable from a text file of `CLASS cycles,power;cycles,power;...`
lines.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .isa import CLASS_ORDER

DEFAULT_PROFILES: dict[str, tuple[tuple[int, int], ...]] = {
    "ALU": ((1, 2), (2, 1), (3, 1)),
    "ALU_IMM": ((1, 2), (2, 1), (3, 1)),
    "LUI": ((1, 2), (2, 1), (3, 1)),
    "LOAD": ((2, 3), (3, 2), (5, 1)),
    "STORE": ((2, 3), (4, 2)),
    "BRANCH": ((1, 2), (2, 2)),
    "JAL": ((1, 2), (2, 2)),
    "JALR": ((1, 2), (2, 2)),
    "SYSTEM": ((3, 2),),
    "DECOY_DISCARD": ((1, 1),),
}

# Extra cycle consumed by a taken branch, on top of the chosen candidate.
BRANCH_TAKEN_EXTRA = 1


class ProfileError(Exception):
    pass


@dataclass(frozen=True)
class ProfileTable:
    profiles: Mapping[str, tuple[tuple[int, int], ...]] = field(
        default_factory=lambda: dict(DEFAULT_PROFILES))

    def __post_init__(self):
        for cls in CLASS_ORDER:
            cands = self.profiles.get(cls)
            if not cands:
                raise ProfileError(f"class {cls} has no profile candidates")
            for cycles, power in cands:
                if cycles < 1:
                    raise ProfileError(f"{cls}: cycles must be >= 1")
                if power < 0:
                    raise ProfileError(f"{cls}: power must be >= 0")

    def candidates(self, cls: str) -> tuple[tuple[int, int], ...]:
        return self.profiles[cls]

    def mean_cycles(self, cls: str, randomized: bool) -> float:
        cands = self.profiles[cls]
        if not randomized:
            return float(cands[0][0])
        return sum(c for c, _ in cands) / len(cands)

    @classmethod
    def from_text(cls, text: str) -> "ProfileTable":
        """Parse an override file; classes not mentioned keep their defaults."""
        table = dict(DEFAULT_PROFILES)
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ProfileError(f"line {lineno}: expected CLASS candidates")
            name, spec = parts[0].upper(), parts[1]
            if name not in CLASS_ORDER:
                raise ProfileError(f"line {lineno}: unknown class {name!r}")
            cands = []
            for chunk in spec.split(";"):
                chunk = chunk.strip()
                if not chunk:
                    continue
                try:
                    c, p = chunk.split(",")
                    cands.append((int(c), int(p)))
                except ValueError:
                    raise ProfileError(
                        f"line {lineno}: bad candidate {chunk!r}") from None
            table[name] = tuple(cands)
        return cls(table)

    @classmethod
    def from_file(cls, path) -> "ProfileTable":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read())
