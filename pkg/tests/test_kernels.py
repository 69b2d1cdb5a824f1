"""The numba kernels and their numpy twins must agree exactly."""
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazegraph import _kernels as K

pytestmark = pytest.mark.skipif(K.JIT is None, reason="numba not installed")

tokens = st.lists(st.integers(0, 6), max_size=25)


@given(tokens, tokens)
def test_levenshtein_jit_matches_numpy(a, b):
    a, b = np.array(a, dtype=np.int64), np.array(b, dtype=np.int64)
    assert K.JIT.levenshtein(a, b) == K.NUMPY.levenshtein(a, b)


@settings(max_examples=40)
@given(st.integers(1, 40), st.floats(-1.0, 1.1), st.integers(0, 2**31 - 1))
def test_assign_nodes_jit_matches_numpy(k, rho, seed):
    rng = np.random.default_rng(seed)
    # few base directions so merges really happen
    base = rng.normal(size=(3, 5))
    emb = base[rng.integers(0, 3, k)] + 0.3 * rng.normal(size=(k, 5))
    unit = emb / np.linalg.norm(emb, axis=1, keepdims=True)
    a = K.JIT.assign_nodes(unit, rho)
    b = K.NUMPY.assign_nodes(unit, rho)
    assert len(a) == len(b)
    for x, y in zip(a, b):
        assert np.array_equal(np.asarray(x), np.asarray(y))


@settings(max_examples=30)
@given(st.integers(2, 400), st.integers(0, 2**31 - 1), st.floats(5.0, 200.0))
def test_ivt_jit_matches_numpy(n, seed, threshold):
    rng = np.random.default_rng(seed)
    t = np.cumsum(rng.uniform(0.5, 2.0, n))
    x = np.cumsum(rng.normal(0, 0.3, n)) + 100.0
    y = np.cumsum(rng.normal(0, 0.3, n)) + 100.0
    valid = rng.uniform(size=n) > 0.05
    a = K.JIT.ivt(t, x, y, valid, 600.0, threshold)
    b = K.NUMPY.ivt(t, x, y, valid, 600.0, threshold)
    for x1, x2 in zip(a, b):
        assert np.array_equal(np.asarray(x1), np.asarray(x2))


@given(st.integers(1, 30), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_segment_sum_jit_matches_numpy(n, n_seg, seed):
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=(n, 3))
    seg = rng.integers(0, n_seg, n).astype(np.int64)
    assert np.allclose(K.JIT.segment_sum(vals, seg, n_seg), K.NUMPY.segment_sum(vals, seg, n_seg), atol=1e-12)


def test_no_jit_env_flag_selects_numpy(tmp_path):
    code = "from gazegraph import _kernels as K; print(K.ACTIVE.name)"
    out = subprocess.run([sys.executable, "-c", code], env={"GAZEGRAPH_NO_JIT": "1", "PATH": ""},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_benchmark_script_runs(tmp_path):
    script = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    out = tmp_path / "bench.csv"
    res = subprocess.run([sys.executable, str(script), "--repeat", "1", "--csv", str(out)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    rows = out.read_text().splitlines()
    assert rows[0] == "kernel,numba_ms,numpy_ms,speedup" and len(rows) == 5
