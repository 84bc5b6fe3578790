"""Compiled kernels against the NumPy reference."""

import os
import subprocess
import sys

import numpy as np
import pytest

from prefall.net import NetConfig, init_params
from prefall.net import backend

from gradcheck import random_instance

compiled = pytest.importorskip("prefall.net._kernels", reason="compiled kernels not built")


@pytest.mark.parametrize("seed, H, K, B", [(0, 1, 1, 1), (1, 5, 15, 8), (2, 3, 7, 5), (3, 8, 20, 13)])
def test_compiled_matches_pure(seed, H, K, B):
    p, X, y = random_instance(seed, H, K, B)
    fc = compiled.forward(*p.blocks, X)
    fp = backend.pure.forward(*p.blocks, X)
    assert np.allclose(fc, fp, rtol=0, atol=1e-13)
    hc = compiled.hidden_states(*p.blocks, X)
    hp = backend.pure.hidden_states(*p.blocks, X)
    assert np.allclose(hc, hp, rtol=0, atol=1e-13)
    lc, *gc = compiled.loss_and_grad(*p.blocks, X, y.astype(np.int64))
    lp, *gp = backend.pure.loss_and_grad(*p.blocks, X, y.astype(np.int64))
    assert abs(lc - lp) < 1e-13
    for a, b in zip(gc, gp):
        assert np.allclose(a, b, rtol=1e-10, atol=1e-13)


@pytest.mark.skipif(os.environ.get("PREFALL_PURE_PYTHON", "") not in ("", "0"), reason="fallback forced")
def test_default_backend_is_compiled():
    assert backend.BACKEND == "cython"


def test_env_forces_pure_python():
    code = "from prefall.net import BACKEND; print(BACKEND)"
    env = {**os.environ, "PREFALL_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
