"""Smoke test for the pyramping extension.

Uses an installed `pyramping` when available (e.g. after `maturin develop`
in crates/py); otherwise builds the cdylib with cargo and loads it from a
temporary directory.
"""

import json
import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load():
    try:
        import pyramping

        return pyramping
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "--release", "-p", "pyramping"], cwd=ROOT, check=True
    )
    lib = ROOT / "target" / "release" / "libpyramping.so"
    if not lib.exists():
        lib = ROOT / "target" / "release" / "libpyramping.dylib"
    tmp = Path(tempfile.mkdtemp())
    shutil.copy(lib, tmp / "pyramping.so")
    sys.path.insert(0, str(tmp))
    import pyramping

    return pyramping


def main():
    pr = load()
    assert pr.SCHEMA_VERSION == 1

    params = json.dumps(
        {
            "schema_version": 1,
            "kind": "single",
            "K": 2,
            "d": 1,
            "M": 1,
            "flat": [0.1, 0.2, 0.2, -0.05, 0.1, 0.3],
            "birthrate": [[0.1], [0.2]],
            "interaction": [[[0.2, -0.05], [0.1, 0.3]]],
        }
    )
    p = pr.cond_prob(params, [[1, 0]])
    assert all(abs(a - b) < 1e-12 for a, b in zip(p, [0.3, 0.3])), p

    rows = pr.simulate(params, 3000, seed=4)
    assert rows == pr.simulate(params, 3000, seed=4)
    report = json.loads(pr.fit(rows, 1, objective="ml"))
    assert report["schema_version"] == 1
    flat = report["params"]["flat"]
    err = max(abs(a - b) for a, b in zip(flat, json.loads(params)["flat"]))
    bound = next(b["value"] for b in report["bounds"] if b["p"] == "inf")
    assert bound is None or err <= bound, (err, bound)

    t1, t2, tinf = pr.condition_numbers([[2.0, 1.0], [1.0, 2.0]])
    assert abs(t2 - 1.0) < 1e-9 and abs(tinf - 1.5) < 1e-9 and t1 <= t2

    b1 = pr.error_bound(9e-5, 9e-5, 819, 365.0)
    b2 = pr.error_bound(0.00668, 9e-5, 819, 365.0)
    assert abs(b1 / b2 - 24.53408 / 2.84776) < 2e-3 * b1 / b2
    assert math.isinf(pr.error_bound(0.0, 9e-5, 819, 365.0))

    states = pr.extract([250.0] * (4 * 40), 4, w1=5)
    assert states[:5] == [None] * 5 and set(states[5:]) == {0}

    assert abs(pr.f1_score(0.75, 0.6) - 2 / 3) < 1e-12
    try:
        pr.fit([[0, 1], [1]], 1)
    except ValueError:
        pass
    else:
        raise AssertionError("ragged events accepted")
    print("pyramping smoke test passed")


if __name__ == "__main__":
    main()
