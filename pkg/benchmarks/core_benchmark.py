#!/usr/bin/env python3
"""Benchmark the compiled execution core against the pure-Python fallback.

Runs each corpus kernel diversified at entropy 0.5 in sphinx mode with
both cores and reports guest cycles per host second plus the speedup.
Results are checked for bit-identity while we are at it.

Usage: python benchmarks/core_benchmark.py [--repeats N]
"""

import argparse
import time

import numpy as np

import sphx.vm as vm_mod
from sphx.corpus import CORPUS
from sphx.isa import assemble, parse_assembly
from sphx.obfuscator import ObfuscationParams, diversify
from sphx.vm import LoadedImage, RunConfig, run


def _time_runs(loaded, config, repeats):
    best = float("inf")
    trace = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        trace = run(loaded, config)
        best = min(best, time.perf_counter() - t0)
    return trace, best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repeats per cell (best-of)")
    args = parser.parse_args()

    if vm_mod._speedups is None:
        parser.error("compiled core is not built; build it first "
                     "(pip install -e . --no-build-isolation)")

    print(f"{'kernel':>16} {'cycles':>9} {'compiled':>12} {'pure':>12} "
          f"{'speedup':>8}")
    speedups = []
    for case in CORPUS:
        program = parse_assembly(case.source)
        out, mask, _ = diversify(program,
                                 ObfuscationParams(entropy=0.5, seed=1))
        loaded = LoadedImage(image=assemble(out), mask=mask)
        config = RunConfig(mode="sphinx", run_seed=2)

        fast_trace, fast = _time_runs(loaded, config, args.repeats)
        saved = vm_mod._speedups
        vm_mod._speedups = None
        try:
            slow_trace, slow = _time_runs(loaded, config, args.repeats)
        finally:
            vm_mod._speedups = saved

        assert fast_trace.total_cycles == slow_trace.total_cycles
        assert np.array_equal(fast_trace.power, slow_trace.power)
        cycles = fast_trace.total_cycles
        speedups.append(slow / fast)
        print(f"{case.name:>16} {cycles:>9} "
              f"{cycles / fast:>10.2e}/s {cycles / slow:>10.2e}/s "
              f"{slow / fast:>7.1f}x")
    print(f"\ngeometric-mean speedup: "
          f"{np.exp(np.mean(np.log(speedups))):.1f}x "
          f"(traces bit-identical across cores)")


if __name__ == "__main__":
    main()
