#!/usr/bin/env python3
"""Smoke test for the plaplab_py extension module.

Builds nothing itself: run `cargo build -p plaplab-py` (or --release) first,
then `python3 python/smoke_test.py`. The script locates the compiled cdylib,
exposes it as an importable module and checks a few closed-form values.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def locate_cdylib() -> Path:
    candidates = [
        REPO / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libplaplab_py.so", "plaplab_py.dll", "libplaplab_py.dylib")
    ]
    for path in candidates:
        if path.exists():
            return path
    sys.exit("plaplab_py cdylib not found; run `cargo build -p plaplab-py` first")


def import_module():
    lib = locate_cdylib()
    staging = Path(tempfile.mkdtemp(prefix="plaplab_py_"))
    target = staging / ("plaplab_py" + {".so": ".so", ".dll": ".pyd", ".dylib": ".so"}[lib.suffix])
    shutil.copy2(lib, target)
    sys.path.insert(0, str(staging))
    import plaplab_py

    return plaplab_py


def approx(actual, expected, rel, label):
    ok = abs(actual - expected) <= rel * abs(expected)
    status = "PASS" if ok else "FAIL"
    print(f"{status} {label}: {actual:.6g} vs {expected:.6g} (rel tol {rel})")
    return ok


def main() -> int:
    lab = import_module()
    ok = True

    mesh = lab.Mesh.interval(0.0, 1.0, 256)
    print(mesh)
    assert mesh.n_nodes == 257 and mesh.dimension == 1
    ok &= approx(mesh.total_volume(), 1.0, 1e-12, "interval volume")

    # -u'' = 1 on (0,1): u(1/2) = 1/8
    sigma = lab.Measure.lebesgue(mesh)
    u, report = lab.solve(mesh, sigma, p=2.0)
    assert report["converged"]
    ok &= approx(u.eval([0.5]), 0.125, 1e-3, "Poisson midpoint value")
    ok &= approx(lab.measure_pairing(u, sigma), 1.0 / 12.0, 1e-3, "energy pairing")

    # trace constant at q = 1 is 1/sqrt(12)
    c1, _maximizer = lab.estimate_trace_constant(mesh, sigma, p=2.0, q=1.0)
    ok &= approx(c1, 1.0 / math.sqrt(12.0), 0.02, "trace constant")

    # interval condenser ([1/4, 3/4], (0,1)): capacity 8 at p = 2
    nodes = mesh.nodes()
    mask = [0.25 <= x[0] <= 0.75 for x in nodes]
    cap, _potential = lab.capacity(mesh, mask, p=2.0)
    ok &= approx(cap, 8.0, 0.01, "condenser capacity")

    # Wolff potential of a boundary atom: (R - |x|)/2
    atom = lab.Measure.point_atom(mesh, [0.0], 1.0)
    wolff = lab.wolff_potential(atom, [0.25], radius=1.0, p=2.0)
    ok &= approx(wolff, 0.375, 0.02, "Wolff atom oracle")

    # exhaustion dichotomy for power densities
    good = lab.Measure.power_density(mesh, 1.0)
    assert good.is_infinite
    _u, verdict, stages = lab.wa_potential(mesh, good, p=2.0)
    print(f"{'PASS' if verdict == 'converged' else 'FAIL'} exhaustion s=1 verdict: {verdict} ({len(stages)} stages)")
    ok &= verdict == "converged"
    bad = lab.Measure.power_density(mesh, 2.0)
    _u, verdict, _stages = lab.wa_potential(mesh, bad, p=2.0)
    print(f"{'PASS' if verdict == 'diverging' else 'FAIL'} exhaustion s=2 verdict: {verdict}")
    ok &= verdict == "diverging"

    # singular problem: integration-by-parts identity at gamma = 1
    u_sing, verdict, margin = lab.solve_singular(mesh, sigma, p=2.0, gamma=1.0)
    ok &= verdict == "converged" and margin >= -1e-6
    energy = lab.weighted_p_energy(u_sing, p=2.0)
    ok &= approx(energy, 1.0, 0.01, "singular energy identity")
    g_u = lab.g_transform(u_sing, gamma=1.0, p=2.0)
    ok &= g_u.sup_norm() <= 0.5 * u_sing.sup_norm() ** 2 + 1e-12

    # Hardy quotient on a finer mesh
    fine = lab.Mesh.interval(0.0, 1.0, 512)
    hardy = lab.hardy_check(fine, p=2.0, t=0.0)
    ok &= approx(hardy["constant"], hardy["oracle"], 0.05, "Hardy ascent vs oracle")

    # 2D sanity: L-shape area and a solve
    lmesh = lab.Mesh.lshape(0.125)
    ok &= approx(lmesh.total_volume(), 0.75, 1e-10, "L-shape area")
    u2, rep2 = lab.solve(lmesh, lab.Measure.lebesgue(lmesh), p=2.0)
    ok &= rep2["converged"] and u2.sup_norm() > 0.0
    print(f"PASS L-shape solve: sup u = {u2.sup_norm():.4f}")

    print("smoke test:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
