"""Side-channel trace container and CSV import/export."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KIND_CHARS = ("F", "R", "W")
KIND_IDS = {c: i for i, c in enumerate(KIND_CHARS)}


@dataclass
class SideChannelTrace:
    """Per-cycle power samples plus timestamped memory events.

    power[i] is the sample for cycle i + 1; cycles are 1-based so that
    total_cycles equals the last cycle consumed.
    """

    power: np.ndarray       # int64, one sample per consumed cycle
    mem_cycles: np.ndarray  # int64
    mem_kinds: np.ndarray   # uint8, index into KIND_CHARS
    mem_addrs: np.ndarray   # uint32
    total_cycles: int
    status: str
    guest_exit_code: int | None
    guest_output: bytes

    def iter_power(self):
        for i, s in enumerate(self.power):
            yield i + 1, int(s)

    def iter_mem_events(self):
        for c, k, a in zip(self.mem_cycles, self.mem_kinds, self.mem_addrs):
            yield int(c), KIND_CHARS[k], int(a)

    def dynamic_instructions(self) -> int:
        return int(np.count_nonzero(self.mem_kinds == 0))

    def addresses(self, kinds=("F", "R", "W")) -> set[int]:
        wanted = {KIND_IDS[k] for k in kinds}
        sel = np.isin(self.mem_kinds, list(wanted))
        return set(self.mem_addrs[sel].tolist())

    def write_power_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("cycle,power\n")
            for cycle, sample in self.iter_power():
                fh.write(f"{cycle},{sample}\n")

    def write_mem_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("cycle,kind,addr\n")
            for cycle, kind, addr in self.iter_mem_events():
                fh.write(f"{cycle},{kind},0x{addr:08x}\n")


def read_power_csv(path) -> np.ndarray:
    """Samples column of a power CSV, in cycle order."""
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "cycle,power":
            raise ValueError(f"not a power trace CSV: header {header!r}")
        for line in fh:
            line = line.strip()
            if line:
                samples.append(int(line.split(",")[1]))
    return np.asarray(samples, dtype=np.int64)
