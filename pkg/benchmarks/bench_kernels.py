"""Compare the compiled and pure-Python kernels.

    python benchmarks/bench_kernels.py [--repeat N] [--scenario-seconds S]

Kernel timings use timeit in-process for both backends.  The optional
scenario timing runs ``sv_attack`` in a subprocess per backend, since the
backend is chosen once at import (``SCSIM_PURE_PYTHON=1`` forces the
fallback).
"""

import argparse
import math
import os
import subprocess
import sys
import timeit

from scsim import kernels

DST = bytes.fromhex("010ccd040001")
SRC = bytes.fromhex("0030a7000001")
VALUES = (1414214, -707107, -707107, 0, 1126700, -563350, -563350, 0)
QUALITY = (0,) * 8
SAMPLES = [round(1_414_214 * math.sin(2 * math.pi * k / 80)) for k in range(80)]

SCENARIO_SNIPPET = """
import time
from scsim import kernels, presets
from scsim.simulation import Simulation
t = time.perf_counter()
Simulation(presets.bundled_scenario("sv_attack", duration={seconds})).run()
print(kernels.BACKEND, time.perf_counter() - t)
"""


def kernel_cases(mod):
    frame = mod.encode_sv_frame(DST, SRC, 0x4001, b"MU1/FDR", 4799, 1, 2, VALUES, QUALITY)
    window = mod.RmsWindow(80)
    for v in SAMPLES:
        window.push(v)

    def rms_stream():
        w = mod.RmsWindow(80)
        for v in SAMPLES:
            w.push(v)
        for v in SAMPLES:
            w.push(v)
        return w.rms()

    return {
        "encode_sv_frame": lambda: mod.encode_sv_frame(DST, SRC, 0x4001, b"MU1/FDR", 4799, 1, 2, VALUES, QUALITY),
        "decode_sv_apdu": lambda: mod.decode_sv_apdu(frame, 22, len(frame)),
        "read_tlv": lambda: mod.read_tlv(frame, 22, len(frame)),
        "rms_window_160_pushes": rms_stream,
        "window_rms_80": lambda: mod.window_rms(SAMPLES),
    }


def bench_kernels(repeat, number):
    backends = kernels.available_backends()
    results = {}
    for name, mod in backends.items():
        for case, fn in kernel_cases(mod).items():
            best = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
            results.setdefault(case, {})[name] = best
    return sorted(backends), results


def bench_scenario(seconds):
    out = {}
    for pure in ("1", "0"):
        env = dict(os.environ, SCSIM_PURE_PYTHON=pure)
        proc = subprocess.run([sys.executable, "-c", SCENARIO_SNIPPET.format(seconds=seconds)],
                              env=env, capture_output=True, text=True, check=True)
        backend, elapsed = proc.stdout.split()
        out[backend] = float(elapsed)
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--number", type=int, default=20000)
    parser.add_argument("--scenario-seconds", type=float, default=0.0,
                        help="also time sv_attack for this many virtual seconds per backend")
    args = parser.parse_args(argv)

    names, results = bench_kernels(args.repeat, args.number)
    print(f"{'kernel':24}" + "".join(f"{n:>14}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for case, by_backend in results.items():
        row = f"{case:24}" + "".join(f"{by_backend[n] * 1e6:>11.3f} us" for n in names)
        if "cython" in by_backend:
            row += f"{by_backend['python'] / by_backend['cython']:>11.1f}x"
        print(row)
    if "cython" not in names:
        print("compiled backend not built; only the pure-Python kernels were timed")

    if args.scenario_seconds > 0:
        times = bench_scenario(args.scenario_seconds)
        print(f"\nsv_attack, {args.scenario_seconds:g} virtual s:")
        for backend, elapsed in sorted(times.items()):
            print(f"  {backend:8} {elapsed:7.2f} s wall")


if __name__ == "__main__":
    main()
