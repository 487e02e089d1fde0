import json
import os
import subprocess
import sys

import numpy as np
import pytest

from pensemble import _scan_py, kernels

_scan = pytest.importorskip("pensemble._scan")

SNIPPET = """
import json, numpy as np
from pensemble import kernels
from pensemble.models import build_degenerate_spin_bath, solve_statistical_temperature
from pensemble.sampler import ChainConfig, run_chain
model = build_degenerate_spin_bath(3)
ctx = solve_statistical_temperature(model, 1 / 0.45)
s = run_chain(model, ctx, ChainConfig(5000, 500, 1, 11, 2))
print(json.dumps({"backend": kernels.BACKEND, "z": s.z_values.tolist(), "acc": s.acceptance_rate}))
"""


def _run(pure):
    env = dict(os.environ)
    env.pop("PENSEMBLE_PURE_PYTHON", None)
    if pure:
        env["PENSEMBLE_PURE_PYTHON"] = "1"
    out = subprocess.run([sys.executable, "-c", SNIPPET], env=env, capture_output=True,
                         text=True, check=True)
    return json.loads(out.stdout)


def test_compiled_backend_selected():
    assert kernels.BACKEND == "cython"
    assert kernels.metropolis_scan is _scan.metropolis_scan


@pytest.mark.parametrize("bp", [0.0, 0.5, 30.0, np.inf])
def test_scan_backends_agree(rng, bp):
    e = rng.normal(size=5000)
    log_u = np.log1p(-rng.random(5000))
    a = _scan.metropolis_scan(e, log_u, bp, 0.3)
    b = _scan_py.metropolis_scan(e, log_u, bp, 0.3)
    for x, y in zip(a[:2], b[:2]):
        assert np.array_equal(x, y)
    assert a[2] == b[2]


def test_scan_contract():
    index, acc, last = _scan_py.metropolis_scan(np.array([1.0, 0.5, 2.0]), np.zeros(3), 1.0, 0.7)
    assert index.tolist() == [-1, 1, 1] and acc.tolist() == [0, 1, 0] and last == 0.5
    for mod in (_scan, _scan_py):
        index, acc, last = mod.metropolis_scan(np.empty(0), np.empty(0), 1.0, 0.25)
        assert index.size == 0 and acc.size == 0 and last == 0.25


def test_sampler_identical_under_both_backends():
    compiled, pure = _run(False), _run(True)
    assert compiled["backend"] == "cython" and pure["backend"] == "python"
    assert compiled["z"] == pure["z"] and compiled["acc"] == pure["acc"]
