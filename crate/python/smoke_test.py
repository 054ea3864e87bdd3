"""Smoke test of the nullpulse_py extension.

Uses an installed module when there is one (`maturin develop` in crates/py);
otherwise builds the cdylib with cargo and imports it from a temporary copy.
"""

import importlib
import json
import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load():
    try:
        return importlib.import_module("nullpulse_py")
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "--release", "-p", "nullpulse-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib = ROOT / "target" / "release" / "libnullpulse_py.so"
    tmp = pathlib.Path(tempfile.mkdtemp())
    shutil.copy(lib, tmp / "nullpulse_py.so")
    sys.path.insert(0, str(tmp))
    return importlib.import_module("nullpulse_py")


def main():
    np = load()

    r = np.radius_from_tortoise(np.tortoise(3.7))
    assert abs(r - 3.7) < 1e-12, r
    assert abs(np.tortoise(3.0)) < 1e-12

    slope, _, _ = np.fit_powerlaw([0.1, 0.2, 0.4], [x ** -0.5 for x in (0.1, 0.2, 0.4)])
    assert abs(slope + 0.5) < 1e-12

    text = np.default_config().replace("nu = 352", "nu = 64").replace("cells_per_delta = 128", "cells_per_delta = 32")
    out = np.run(text)
    assert out["status"] == "completed", out["failure"]
    assert math.isfinite(out["sup_phi"]) and out["sup_phi"] > 0

    rep = np.verify_suite(0.1, 4, 1)
    orders = {c["order"]["id"]: c["order"]["min_order"] for c in rep["commutators"]}
    assert orders["L_Y"] > 1.8, orders

    try:
        np.run("[grid]\nbogus = 1\n")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown config keys must be rejected")

    print(json.dumps({"sup_phi": out["sup_phi"], "orders": orders}, indent=2))
    print("smoke test passed")


if __name__ == "__main__":
    main()
