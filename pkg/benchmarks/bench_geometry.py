"""Compare the compiled geometry kernels against the pure-Python ones.

Run as: python benchmarks/bench_geometry.py [--pairs N] [--repeat R]

Times the three hot operations (pairwise IoU, candidate scan, ensemble
IoU profile) on identical seeded data under both backends and prints the
speedup. Degrades gracefully when the extension is not built.
"""

from __future__ import annotations

import argparse
import random
import timeit

from groundbox.geometry import _pure

try:
    from groundbox.geometry import _fast
except ImportError:
    _fast = None


def random_quads(n: int, seed: int, span: int = 1000) -> list[tuple[int, int, int, int]]:
    rng = random.Random(seed)
    quads = []
    for _ in range(n):
        left = rng.randrange(span)
        top = rng.randrange(span)
        quads.append(
            (left, top, left + rng.randrange(1, span // 4), top + rng.randrange(1, span // 4))
        )
    return quads


def bench(label: str, pure_stmt, fast_stmt, repeat: int) -> None:
    pure_s = min(timeit.repeat(pure_stmt, number=1, repeat=repeat))
    if fast_stmt is None:
        print(f"{label:24s} pure {pure_s * 1000:8.2f} ms   (extension not built)")
        return
    fast_s = min(timeit.repeat(fast_stmt, number=1, repeat=repeat))
    print(
        f"{label:24s} pure {pure_s * 1000:8.2f} ms   "
        f"compiled {fast_s * 1000:8.2f} ms   x{pure_s / fast_s:5.1f}"
    )


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pairs", type=int, default=200_000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    a = random_quads(args.pairs, seed=1)
    b = random_quads(args.pairs, seed=2)
    candidates = random_quads(400, seed=3)
    ensembles = [random_quads(8, seed=10 + i, span=200) for i in range(2000)]

    def pairwise(mod):
        def run():
            iou = mod.iou_quad
            for qa, qb in zip(a, b):
                iou(qa, qb)
        return run

    def scan(mod):
        def run():
            first = mod.first_match_quad
            for q in a[:5000]:
                first(q, candidates, 0.6)
        return run

    def profile(mod):
        def run():
            prof = mod.mean_iou_profile_quad
            for quads in ensembles:
                prof(quads)
        return run

    print(f"pairs={args.pairs}  candidates={len(candidates)}  ensembles={len(ensembles)}")
    for label, maker in (
        (f"iou x{args.pairs}", pairwise),
        ("first_match 5k x 400", scan),
        ("mean_iou_profile 2k x 8", profile),
    ):
        bench(label, maker(_pure), maker(_fast) if _fast else None, args.repeat)


if __name__ == "__main__":
    main()
