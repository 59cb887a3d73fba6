"""Decoupling measurements over traces: correlation, overlap, overhead.

The decoupling experiment compares diversified builds of one program
against each other and against the plain build: if diversification works,
functional output stays identical while timing, power shape and address
profiles drift apart.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .isa import Program, assemble
from .maskcipher import keystream
from .obfuscator import ObfuscationParams, diversify
from .profiles import ProfileTable
from .trace import SideChannelTrace
from .vm import LoadedImage, RunConfig, execute, run

DEFAULT_BUCKETS = 256


class ZeroVariance(Exception):
    """Correlation is undefined for a constant signal."""


class TraceTooShort(Exception):
    pass


@dataclass
class ResampledTrace:
    buckets: np.ndarray  # float64 means over contiguous cycle ranges


def resample(source, buckets: int = DEFAULT_BUCKETS) -> ResampledTrace:
    """Length-normalize a power trace into `buckets` contiguous means."""
    samples = source.power if isinstance(source, SideChannelTrace) else source
    samples = np.asarray(samples, dtype=np.float64)
    n = len(samples)
    if buckets < 2:
        raise ValueError("buckets must be >= 2")
    if n < buckets:
        raise TraceTooShort(f"{n} samples < {buckets} buckets")
    out = np.empty(buckets, dtype=np.float64)
    for i in range(buckets):
        lo = i * n // buckets
        hi = (i + 1) * n // buckets
        out[i] = samples[lo:hi].mean()
    return ResampledTrace(out)


def pearson(a, b) -> float:
    xa = a.buckets if isinstance(a, ResampledTrace) else np.asarray(a, float)
    xb = b.buckets if isinstance(b, ResampledTrace) else np.asarray(b, float)
    if len(xa) != len(xb):
        raise ValueError(f"length mismatch: {len(xa)} vs {len(xb)}")
    da = xa - xa.mean()
    db = xb - xb.mean()
    sa = float(da @ da)
    sb = float(db @ db)
    if sa == 0.0 or sb == 0.0:
        raise ZeroVariance("constant input")
    r = float(da @ db) / float(np.sqrt(sa * sb))
    return min(1.0, max(-1.0, r))


def cycle_overhead(obf: SideChannelTrace, base: SideChannelTrace) -> float:
    for t in (obf, base):
        if t.status != "exit":
            raise ValueError(f"trace did not complete cleanly: {t.status}")
    if base.total_cycles == 0:
        raise ValueError("baseline consumed zero cycles")
    return obf.total_cycles / base.total_cycles - 1.0


def address_jaccard(a: SideChannelTrace, b: SideChannelTrace,
                    kinds=("F", "R", "W")) -> float:
    sa = a.addresses(kinds)
    sb = b.addresses(kinds)
    union = sa | sb
    if not union:
        return 1.0
    return len(sa & sb) / len(union)


def experiment_seed(base: int, *indices: int) -> int:
    """Fixed seed schedule: one well-mixed 64-bit seed per index tuple."""
    s = base
    for v in indices:
        s = keystream((s ^ (v + 0x517CC1B727220A95)) & ((1 << 64) - 1), 1)[0]
    return s


@dataclass
class DecouplingReport:
    entropy: float
    build_seeds: tuple[int, int]
    run_seeds: tuple[int, int]
    buckets: int
    cycle_overhead: float
    cross_build_r: float
    same_build_cross_run_r: float
    fetch_jaccard: float
    data_jaccard: float
    decoy_fraction: float
    run_length_histogram: dict[int, int]
    outputs_equal: bool
    baseline_cycles: int
    obf_cycles_mean: float

    def __post_init__(self):
        for name in ("cross_build_r", "same_build_cross_run_r"):
            v = getattr(self, name)
            if not -1.0 <= v <= 1.0:
                raise ValueError(f"{name} out of range: {v}")
        for name in ("fetch_jaccard", "data_jaccard"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} out of range: {v}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["build_seeds"] = list(self.build_seeds)
        d["run_seeds"] = list(self.run_seeds)
        d["run_length_histogram"] = {
            str(k): v for k, v in self.run_length_histogram.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DecouplingReport":
        d = json.loads(text)
        d["build_seeds"] = tuple(d["build_seeds"])
        d["run_seeds"] = tuple(d["run_seeds"])
        d["run_length_histogram"] = {
            int(k): v for k, v in d["run_length_histogram"].items()}
        return cls(**d)


@dataclass
class _Cell:
    """One diversified build plus its runs."""

    trace_a: SideChannelTrace
    trace_b: SideChannelTrace
    decoy_fraction: float
    run_length_histogram: dict[int, int]


def _build_and_run(program: Program, params: ObfuscationParams,
                   run_seeds, config_proto: RunConfig,
                   profiles: ProfileTable | None) -> _Cell:
    obf_program, mask, stats = diversify(program, params)
    image = assemble(obf_program)
    loaded = LoadedImage(image=image, mask=mask)
    traces = []
    for rs in run_seeds:
        cfg = RunConfig(mode="sphinx", run_seed=rs,
                        profile_randomization=config_proto.profile_randomization,
                        shadow_decoys=config_proto.shadow_decoys,
                        noise_amplitude=config_proto.noise_amplitude,
                        max_cycles=config_proto.max_cycles)
        traces.append(run(loaded, cfg, profiles))
    return _Cell(trace_a=traces[0], trace_b=traces[1],
                 decoy_fraction=stats.decoy_fraction,
                 run_length_histogram=stats.run_length_histogram)


def _merge_hist(a: dict[int, int], b: dict[int, int]) -> dict[int, int]:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0) + v
    return dict(sorted(out.items()))


def decoupling_report(program: Program, entropy: float,
                      build_seeds: tuple[int, int],
                      run_seeds: tuple[int, int],
                      buckets: int = DEFAULT_BUCKETS,
                      *, window: int = 16, data_shuffle: bool = True,
                      max_pad_words: int = 4,
                      profile_randomization: bool = True,
                      shadow_decoys: bool = True,
                      noise_amplitude: int = 0,
                      max_cycles: int = 10**8,
                      profiles: ProfileTable | None = None) -> DecouplingReport:
    """Build two diversified images, run everything, measure decoupling."""
    base_image = assemble(program)
    base_cfg = RunConfig(mode="baseline", max_cycles=max_cycles)
    base_trace = execute(base_image, None, base_cfg, profiles)

    proto = RunConfig(mode="sphinx",
                      profile_randomization=profile_randomization,
                      shadow_decoys=shadow_decoys,
                      noise_amplitude=noise_amplitude, max_cycles=max_cycles)
    cells = []
    for bs in build_seeds:
        params = ObfuscationParams(entropy=entropy, seed=bs, window=window,
                                   data_shuffle=data_shuffle,
                                   max_pad_words=max_pad_words)
        cells.append(_build_and_run(program, params, run_seeds, proto,
                                    profiles))

    obf_traces = [cells[0].trace_a, cells[0].trace_b,
                  cells[1].trace_a, cells[1].trace_b]
    outputs_equal = all(
        t.status == "exit"
        and t.guest_output == base_trace.guest_output
        and t.guest_exit_code == base_trace.guest_exit_code
        for t in obf_traces) and base_trace.status == "exit"

    cross_build_r = pearson(resample(cells[0].trace_a, buckets),
                            resample(cells[1].trace_a, buckets))
    same_build_r = pearson(resample(cells[0].trace_a, buckets),
                           resample(cells[0].trace_b, buckets))
    overhead = (sum(t.total_cycles for t in obf_traces) / 4
                ) / base_trace.total_cycles - 1.0
    return DecouplingReport(
        entropy=entropy,
        build_seeds=tuple(build_seeds),
        run_seeds=tuple(run_seeds),
        buckets=buckets,
        cycle_overhead=overhead,
        cross_build_r=cross_build_r,
        same_build_cross_run_r=same_build_r,
        fetch_jaccard=address_jaccard(cells[0].trace_a, cells[1].trace_a,
                                      kinds=("F",)),
        data_jaccard=address_jaccard(cells[0].trace_a, cells[1].trace_a,
                                     kinds=("R", "W")),
        decoy_fraction=(cells[0].decoy_fraction + cells[1].decoy_fraction) / 2,
        run_length_histogram=_merge_hist(cells[0].run_length_histogram,
                                         cells[1].run_length_histogram),
        outputs_equal=outputs_equal,
        baseline_cycles=base_trace.total_cycles,
        obf_cycles_mean=sum(t.total_cycles for t in obf_traces) / 4,
    )


_SCALAR_FIELDS = ("cycle_overhead", "cross_build_r", "same_build_cross_run_r",
                  "fetch_jaccard", "data_jaccard", "decoy_fraction")


@dataclass
class SweepRow:
    entropy: float
    replicates: int
    aggregates: dict[str, dict[str, float]]  # field -> {mean,min,max}
    run_length_histogram: dict[int, int]
    outputs_equal: bool


@dataclass
class SweepReport:
    program: str
    base_seed: int
    n_seeds: int
    buckets: int
    entropies: list[float]
    rows: list[SweepRow] = field(default_factory=list)
    generated_by: str = ""

    def to_dict(self) -> dict:
        return {
            "generated_by": self.generated_by,
            "program": self.program,
            "base_seed": self.base_seed,
            "n_seeds": self.n_seeds,
            "buckets": self.buckets,
            "entropies": self.entropies,
            "rows": [
                {
                    "entropy": r.entropy,
                    "replicates": r.replicates,
                    "aggregates": r.aggregates,
                    "run_length_histogram": {
                        str(k): v for k, v in r.run_length_histogram.items()},
                    "outputs_equal": r.outputs_equal,
                }
                for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _aggregate(values: list[float]) -> dict[str, float]:
    return {"mean": sum(values) / len(values),
            "min": min(values), "max": max(values)}


def sweep(program: Program, entropies, n_seeds: int, *,
          buckets: int = DEFAULT_BUCKETS, base_seed: int = 0,
          program_name: str = "program", generated_by: str = "",
          **report_kwargs) -> SweepReport:
    """Decoupling reports over an entropy grid, fixed seed schedule."""
    entropies = list(entropies)
    if n_seeds < 2:
        raise ValueError("n_seeds must be >= 2")
    report = SweepReport(program=program_name, base_seed=base_seed,
                         n_seeds=n_seeds, buckets=buckets,
                         entropies=entropies, generated_by=generated_by)
    for ei, entropy in enumerate(entropies):
        reps: list[DecouplingReport] = []
        for r in range(n_seeds):
            build_seeds = (experiment_seed(base_seed, ei, r, 0),
                           experiment_seed(base_seed, ei, r, 1))
            run_seeds = (experiment_seed(base_seed, ei, r, 2),
                         experiment_seed(base_seed, ei, r, 3))
            reps.append(decoupling_report(program, entropy, build_seeds,
                                          run_seeds, buckets,
                                          **report_kwargs))
        aggregates = {
            name: _aggregate([getattr(rep, name) for rep in reps])
            for name in _SCALAR_FIELDS
        }
        hist: dict[int, int] = {}
        for rep in reps:
            hist = _merge_hist(hist, rep.run_length_histogram)
        report.rows.append(SweepRow(
            entropy=entropy, replicates=n_seeds, aggregates=aggregates,
            run_length_histogram=hist,
            outputs_equal=all(rep.outputs_equal for rep in reps)))
    return report
