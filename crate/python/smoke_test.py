#!/usr/bin/env python3
"""Smoke test for the formsim_py extension module.

Builds nothing itself: run `cargo build -p formsim-py` (or --release)
first, then `python3 python/smoke_test.py`. The script copies the cdylib
next to a temp directory under the importable name and drives the main
entry points end to end on the shipped pentagon scenario.
"""

import json
import pathlib
import shutil
import sys
import tempfile

REPO = pathlib.Path(__file__).resolve().parent.parent


def import_formsim_py():
    candidates = [
        REPO / "target" / "release" / "libformsim_py.so",
        REPO / "target" / "debug" / "libformsim_py.so",
        REPO / "target" / "release" / "libformsim_py.dylib",
        REPO / "target" / "debug" / "libformsim_py.dylib",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("build the extension first: cargo build -p formsim-py")
    staging = pathlib.Path(tempfile.mkdtemp(prefix="formsim-py-"))
    shutil.copy2(built, staging / "formsim_py.so")
    sys.path.insert(0, str(staging))
    import formsim_py

    return formsim_py


def main():
    fp = import_formsim_py()
    print(f"formsim_py {fp.__version__}")

    scenario = fp.Scenario.from_file(str(REPO / "scenarios" / "example1.json"))
    assert scenario.follower_count == 5 and scenario.dimension == 2
    print(f"loaded {scenario!r}")

    # Stability analysis.
    report = json.loads(fp.analyze(scenario))
    assert report["spanning_tree"] is True
    assert report["spectral_abscissa"] < 0
    assert report["lyapunov_residual"] < 1e-8
    print(
        "analysis: spanning tree, abscissa %.4f, residual %.2e"
        % (report["spectral_abscissa"], report["lyapunov_residual"])
    )

    # Paired runs: goal assignment on and off.
    with_swap = fp.run(scenario)
    baseline = fp.run(scenario, assignment=False)
    assert with_swap.accepted_exchanges() >= 1
    assert baseline.accepted_exchanges() == 0
    print(f"runs: {with_swap!r} vs {baseline!r}")

    # Every accepted exchange drops the Lyapunov value by half the
    # compounded-error improvement.
    jumps = json.loads(with_swap.jump_checks_json())
    for jump in jumps:
        drop = jump["v_pre"] - jump["v_post"]
        gain = 0.5 * (jump["e_cur"] - jump["e_new"])
        assert drop > 0 and abs(drop - gain) < 1e-8, jump
    print(f"jump law holds over {len(jumps)} exchange(s)")

    # Pointwise dominance after the first exchange.
    tau1 = jumps[0]["t"]
    times = with_swap.times()
    va, vb = with_swap.lyapunov(), baseline.lyapunov()
    assert all(
        a <= b + 1e-9 for t, a, b in zip(times, va, vb) if t > tau1
    ), "assignment run exceeded baseline"
    print("assignment run dominates the baseline after t=%.2f" % tau1)

    # Graph rewiring primitives round-trip. Returned edge lists are
    # normalized to (low, high) ordering.
    edges = [(1, 2), (2, 3), (3, 4), (4, 5), (5, 1)]
    normalized = sorted(tuple(sorted(e)) for e in edges)
    flags = [True, True, False, False, False]
    assert fp.has_spanning_tree(5, edges, flags)
    swapped_edges, swapped_flags = fp.exchange_neighbors(5, edges, flags, 1, 3)
    assert fp.has_spanning_tree(5, swapped_edges, swapped_flags)
    back_edges, back_flags = fp.exchange_neighbors(5, swapped_edges, swapped_flags, 1, 3)
    assert sorted(back_edges) == normalized and back_flags == flags
    print("neighbor exchange is an involution preserving the spanning tree")

    print("smoke test: PASS")


if __name__ == "__main__":
    main()
