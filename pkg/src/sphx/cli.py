"""Command-line surface: asm, obfuscate, run, compare, sweep, bench.

Exit codes: 0 success; 1 failed sweep/bench invariant; 2 usage or build
error; 3 guest trap or fuel exhaustion; 4 wrong key / corrupt image.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, analyzer, corpus
from .image import ImageFormatError, write_image
from .isa import AsmError, assemble, parse_assembly
from .maskcipher import BadKeyOrCorrupt, derive_key, encrypt_mask
from .obfuscator import ObfuscationError, ObfuscationParams, diversify
from .profiles import ProfileError, ProfileTable
from .vm import RunConfig, VmError, load_image, run

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_USAGE = 2
EXIT_TRAP = 3
EXIT_BADKEY = 4

ENTROPY_GRID = (0.0, 0.1, 0.25, 0.5)
_BENCH_SEED_NS = 0xBE7C  # namespace for the bench seed schedule


def _hex_u64(text: str) -> int:
    value = int(text, 16)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError(f"not a 64-bit hex value: {text}")
    return value


def _entropy_list(text: str) -> list[float]:
    out = []
    for chunk in text.split(","):
        e = float(chunk)
        if not 0.0 <= e < 1.0:
            raise argparse.ArgumentTypeError(f"entropy out of [0,1): {chunk}")
        out.append(e)
    if not out:
        raise argparse.ArgumentTypeError("empty entropy list")
    return out


def _fail(message: str, code: int) -> int:
    print(f"sphx: error: {message}", file=sys.stderr)
    return code


def cmd_asm(args) -> int:
    try:
        program = parse_assembly(Path(args.input).read_text(encoding="utf-8"))
        image = assemble(program)
    except (AsmError, OSError) as exc:
        return _fail(str(exc), EXIT_USAGE)
    Path(args.output).write_bytes(write_image(image))
    return EXIT_OK


def cmd_obfuscate(args) -> int:
    try:
        program = parse_assembly(Path(args.input).read_text(encoding="utf-8"))
        assemble(program)  # must assemble unmodified before diversifying
        params = ObfuscationParams(
            entropy=args.entropy, seed=args.seed, window=args.window,
            data_shuffle=not args.no_data_shuffle,
            max_pad_words=args.max_pad_words)
        obf_program, mask, stats = diversify(program, params)
        image = assemble(obf_program)
        key = derive_key(args.device_secret, args.challenge)
        ciphertext = encrypt_mask(mask, key)
        blob = write_image(
            image, ciphertext=ciphertext,
            entropy_ppm=round(args.entropy * 1_000_000),
            build_seed=args.seed, real_count=stats.real_count,
            key_id=key.key_id)
    except (AsmError, ObfuscationError, OSError) as exc:
        return _fail(str(exc), EXIT_USAGE)
    Path(args.output).write_bytes(blob)
    print(json.dumps({
        "real_count": stats.real_count,
        "decoy_count": stats.decoy_count,
        "decoy_fraction": stats.decoy_fraction,
        "run_length_histogram": {str(k): v for k, v
                                 in stats.run_length_histogram.items()},
        "decoy_class_histogram": stats.decoy_class_histogram,
    }, sort_keys=True))
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        blob = Path(args.image).read_bytes()
        loaded = load_image(blob)
        obfuscated = loaded.header.obfuscated
        if args.maskless and not obfuscated:
            return _fail("--maskless only applies to obfuscated images",
                         EXIT_USAGE)
        sphinx = obfuscated and not args.maskless
        if sphinx and args.device_secret is None:
            return _fail("obfuscated image needs --device-secret", EXIT_USAGE)
        if not obfuscated and args.device_secret is not None:
            return _fail("image is not obfuscated; drop --device-secret",
                         EXIT_USAGE)
        profiles = (ProfileTable.from_file(args.profiles)
                    if args.profiles else None)
        config = RunConfig(
            mode="sphinx" if sphinx else "baseline",
            run_seed=args.run_seed,
            profile_randomization=not args.no_profile_rand,
            shadow_decoys=not args.no_shadow,
            noise_amplitude=args.noise,
            max_cycles=args.fuel,
            device_secret=args.device_secret or 0)
        if sphinx:
            loaded = load_image(blob, device_secret=args.device_secret)
        trace = run(loaded, config, profiles)
    except BadKeyOrCorrupt as exc:
        return _fail(str(exc), EXIT_BADKEY)
    except (ImageFormatError, VmError, ProfileError, OSError) as exc:
        return _fail(str(exc), EXIT_USAGE)
    sys.stdout.buffer.write(trace.guest_output)
    sys.stdout.flush()
    if args.trace:
        trace.write_power_csv(args.trace)
    if args.memtrace:
        trace.write_mem_csv(args.memtrace)
    if trace.status == "exit":
        print(f"exit={trace.guest_exit_code} cycles={trace.total_cycles}",
              file=sys.stderr)
        return EXIT_OK
    print(f"status={trace.status} cycles={trace.total_cycles}",
          file=sys.stderr)
    return EXIT_TRAP


def cmd_compare(args) -> int:
    from .trace import read_power_csv
    try:
        sa = read_power_csv(args.trace_a)
        sb = read_power_csv(args.trace_b)
        ra = analyzer.resample(sa, args.buckets)
        rb = analyzer.resample(sb, args.buckets)
        r = analyzer.pearson(ra, rb)
    except (analyzer.ZeroVariance, analyzer.TraceTooShort, ValueError,
            OSError) as exc:
        return _fail(str(exc), EXIT_USAGE)
    print(f"r={r:.6f} buckets={args.buckets}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        program = parse_assembly(Path(args.input).read_text(encoding="utf-8"))
        report = analyzer.sweep(
            program, args.entropies, args.seeds, buckets=args.buckets,
            base_seed=args.base_seed,
            program_name=Path(args.input).stem,
            generated_by=f"sphx {__version__}",
            profile_randomization=not args.no_profile_rand)
    except (AsmError, ObfuscationError, VmError, analyzer.TraceTooShort,
            analyzer.ZeroVariance, ValueError, OSError) as exc:
        return _fail(str(exc), EXIT_USAGE)
    text = report.to_json()
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    bad = [row.entropy for row in report.rows if not row.outputs_equal]
    if bad:
        return _fail(f"outputs diverged at entropies {bad}", EXIT_INVARIANT)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .analyzer import experiment_seed
    from .isa import assemble as asm_fn
    from .vm import LoadedImage, execute

    try:
        cases = (corpus.CORPUS if args.suite == "all"
                 else (corpus.get(args.suite),))
    except KeyError as exc:
        return _fail(str(exc), EXIT_USAGE)
    rows = []
    failures = []
    for case in cases:
        program = parse_assembly(case.source)
        base_image = asm_fn(program)
        base = execute(base_image, None, RunConfig(mode="baseline"))
        if (base.status != "exit" or base.guest_output != case.expected_output
                or base.guest_exit_code != case.expected_exit):
            failures.append((case.name, "baseline", 0, 0))
            continue
        name_ns = experiment_seed(_BENCH_SEED_NS,
                                  corpus.names().index(case.name))
        for ei, entropy in enumerate(ENTROPY_GRID):
            overheads = []
            for rep in range(args.seeds):
                build_seed = experiment_seed(name_ns, ei, rep)
                params = ObfuscationParams(entropy=entropy, seed=build_seed)
                obf_program, mask, _stats = diversify(program, params)
                image = asm_fn(obf_program)
                loaded = LoadedImage(image=image, mask=mask)
                for run_idx in range(2):
                    run_seed = experiment_seed(name_ns, ei, rep, run_idx)
                    cfg = RunConfig(mode="sphinx", run_seed=run_seed)
                    trace = run(loaded, cfg)
                    ok = (trace.status == "exit"
                          and trace.guest_output == case.expected_output
                          and trace.guest_exit_code == case.expected_exit)
                    if not ok:
                        failures.append((case.name, entropy, build_seed,
                                         run_seed))
                    overheads.append(
                        trace.total_cycles / base.total_cycles - 1.0)
            rows.append({
                "program": case.name,
                "entropy": entropy,
                "replicates": args.seeds,
                "runs": 2 * args.seeds,
                "cycle_overhead_mean": sum(overheads) / len(overheads),
                "cycle_overhead_min": min(overheads),
                "cycle_overhead_max": max(overheads),
                "outputs_equal": not any(f[0] == case.name and f[1] == entropy
                                         for f in failures),
            })
            print(f"{case.name:>16} e={entropy:<5} "
                  f"overhead={rows[-1]['cycle_overhead_mean']:+.3f} "
                  f"ok={rows[-1]['outputs_equal']}")
    report = {
        "generated_by": f"sphx {__version__}",
        "suite": args.suite,
        "seeds": args.seeds,
        "entropy_grid": list(ENTROPY_GRID),
        "rows": rows,
        "ok": not failures,
    }
    if args.report:
        Path(args.report).write_text(json.dumps(report, sort_keys=True,
                                                indent=2) + "\n",
                                     encoding="utf-8")
    if failures:
        for name, entropy, bs, rs in failures:
            print(f"sphx: bench mismatch: program={name} entropy={entropy} "
                  f"build_seed={bs:#x} run_seed={rs:#x}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sphx",
        description="Diversify programs with decoy instructions, execute "
                    "them on a mask-aware simulator, and measure how well "
                    "observable behaviour decouples from functionality.")
    parser.add_argument("--version", action="version",
                        version=f"sphx {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("asm", help="assemble an unobfuscated image")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_asm)

    p = sub.add_parser("obfuscate", help="diversify and build an image")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--entropy", type=float, required=True,
                   help="expected decoy fraction, in [0, 1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--device-secret", type=_hex_u64, default=0,
                   metavar="HEX")
    p.add_argument("--challenge", type=_hex_u64, default=0, metavar="HEX")
    p.add_argument("--no-data-shuffle", action="store_true")
    p.add_argument("--window", type=int, default=16)
    p.add_argument("--max-pad-words", type=int, default=4)
    p.set_defaults(func=cmd_obfuscate)

    p = sub.add_parser("run", help="execute an image")
    p.add_argument("image")
    p.add_argument("--run-seed", type=int, default=0)
    p.add_argument("--no-profile-rand", action="store_true")
    p.add_argument("--no-shadow", action="store_true")
    p.add_argument("--noise", type=int, default=0)
    p.add_argument("--device-secret", type=_hex_u64, default=None,
                   metavar="HEX")
    p.add_argument("--trace", metavar="CSV")
    p.add_argument("--memtrace", metavar="CSV")
    p.add_argument("--fuel", type=int, default=10**8)
    p.add_argument("--maskless", action="store_true",
                   help="execute an obfuscated image with every word "
                        "treated as real (attack experiment)")
    p.add_argument("--profiles", metavar="FILE",
                   help="profile table override file")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="Pearson r of two power trace CSVs")
    p.add_argument("trace_a")
    p.add_argument("trace_b")
    p.add_argument("--buckets", type=int, default=analyzer.DEFAULT_BUCKETS)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="decoupling reports over an entropy grid")
    p.add_argument("input")
    p.add_argument("--entropies", type=_entropy_list, required=True,
                   metavar="LIST", help="comma-separated, e.g. 0,0.25,0.5")
    p.add_argument("--seeds", type=int, default=2)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--report", metavar="JSON")
    p.add_argument("--buckets", type=int, default=analyzer.DEFAULT_BUCKETS)
    p.add_argument("--no-profile-rand", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="semantic-preservation matrix over the "
                                     "shipped corpus")
    p.add_argument("--suite", default="all")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--report", metavar="JSON")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
