"""Compare the compiled scheduling kernels with the pure-Python fallback.

Times the two hot paths on randomized partition states, then an end-to-end
overload run under CostModel (which projects queue starts for every arrival)
with each backend.

    python3 benchmarks/bench_kernels.py [--states 2000] [--repeat 5]
"""

import argparse
import os
import random
import subprocess
import sys
import timeit

from burstsim import _kernels_py

try:
    from burstsim import _kernels as compiled
except ImportError:
    compiled = None


def random_states(n, seed=0):
    rng = random.Random(seed)
    states = []
    for _ in range(n):
        cap = rng.randint(16, 512)
        running = [(rng.randint(1, 20000), rng.randint(1, 16)) for _ in range(rng.randint(0, 60))]
        used = sum(k for _, k in running)
        while used > cap:
            used -= running.pop()[1]
        pend = [(rng.randint(1, cap), rng.randint(60, 86400)) for _ in range(rng.randint(1, 120))]
        states.append((0, cap - used, [t for t, _ in running], [k for _, k in running],
                       [k for k, _ in pend], [w for _, w in pend]))
    return states


def time_kernel(mod, name, states, repeat):
    fn = getattr(mod, name)

    def work():
        for s in states:
            fn(*s, True)

    return min(timeit.repeat(work, number=1, repeat=repeat))


END_TO_END = (
    "import time; from burstsim import Scenario, Simulation, kernels; from burstsim.router import Policy;"
    "s = Scenario.load('overload'); t = time.perf_counter();"
    "Simulation.from_scenario(s, policy=Policy.parse('CostModel')).run();"
    "print(kernels.BACKEND, time.perf_counter() - t)"
)


def end_to_end(pure):
    env = dict(os.environ, BURSTSIM_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, check=True, capture_output=True, text=True)
    backend, seconds = out.stdout.split()
    return backend, float(seconds)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--states", type=int, default=2000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if compiled is None:
        print("compiled kernels not built; only the Python fallback is available")
    states = random_states(args.states)
    print(f"{'kernel':<16} {'python s':>10} {'cython s':>10} {'speedup':>8}")
    for name in ("easy_pass", "project_starts"):
        py = time_kernel(_kernels_py, name, states, args.repeat)
        if compiled is None:
            print(f"{name:<16} {py:>10.4f} {'-':>10} {'-':>8}")
            continue
        cy = time_kernel(compiled, name, states, args.repeat)
        print(f"{name:<16} {py:>10.4f} {cy:>10.4f} {py / cy:>7.1f}x")
    runs = [end_to_end(pure=True)] + ([end_to_end(pure=False)] if compiled is not None else [])
    for backend, seconds in runs:
        print(f"overload/CostModel end-to-end ({backend}): {seconds:.2f} s")


if __name__ == "__main__":
    main()
