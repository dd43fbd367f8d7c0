"""Bit-equality between the numba kernels and the NumPy fallback.

Each backend runs in its own subprocess (the env flag is read at import
time); results are compared byte-for-byte.
"""

from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

try:
    import numba  # noqa: F401
    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

WORKER = r"""
import sys
import numpy as np
import proxycull as pc
from proxycull.oracles import reference_cull_anchors

out_path = sys.argv[1]
rng = np.random.default_rng(123)
cam = pc.Camera.look_at((0, -1, 1.5), (0.3, 10, 1.0), 62.0, 112, 89, 0.4, 80.0)
n = 180
centers = np.stack([rng.uniform(-8, 8, n), rng.uniform(0.5, 25, n),
                    rng.uniform(-8, 8, n)], axis=1)
offs = rng.uniform(-2.0, 2.0, (n, 2, 3))
verts = np.concatenate([centers[:, None, :], centers[:, None, :] + offs],
                       axis=1).reshape(-1, 3)
verts[:21] -= np.array([0, 12.0, 0])  # force near-plane clipping
mesh = pc.TriangleMesh(verts, np.arange(3 * n, dtype=np.int32).reshape(-1, 3))

depth = pc.rasterize_depth(mesh, cam)
pyramid = pc.build_hiz(depth)
anchors = pc.AnchorSet(np.stack([rng.uniform(-12, 12, 30_000),
                                 rng.uniform(-5, 30, 30_000),
                                 rng.uniform(-12, 12, 30_000)], axis=1))
mask = pc.cull_anchors(anchors, cam, depth, 0.3)
np.savez(out_path, depth=depth.values, verdicts=mask.verdicts,
         apex=pyramid.levels[-1], mid=pyramid.levels[2],
         backend=np.array([pc.backend_name()], dtype="U8"))
"""


@pytest.mark.skipif(not HAS_NUMBA, reason="numba unavailable; only one backend")
def test_backends_bit_identical(tmp_path):
    results = {}
    for backend in ("numba", "numpy"):
        out = tmp_path / f"{backend}.npz"
        env = dict(os.environ, PROXYCULL_BACKEND=backend)
        subprocess.run([sys.executable, "-c", WORKER, str(out)], env=env,
                       check=True, capture_output=True)
        results[backend] = np.load(str(out))
    a, b = results["numba"], results["numpy"]
    assert a["backend"][0] == "numba"
    assert b["backend"][0] == "numpy"
    assert np.array_equal(a["depth"], b["depth"])
    assert np.array_equal(a["verdicts"], b["verdicts"])
    assert np.array_equal(a["apex"], b["apex"])
    assert np.array_equal(a["mid"], b["mid"])


@pytest.mark.skipif(not HAS_NUMBA, reason="numba unavailable")
def test_forced_numpy_backend_reports_itself(tmp_path):
    env = dict(os.environ, PROXYCULL_BACKEND="numpy")
    out = subprocess.run(
        [sys.executable, "-c", "import proxycull; print(proxycull.backend_name())"],
        env=env, check=True, capture_output=True, text=True)
    assert out.stdout.strip() == "numpy"


def test_invalid_backend_value_rejected(tmp_path):
    env = dict(os.environ, PROXYCULL_BACKEND="gpu")
    out = subprocess.run(
        [sys.executable, "-c", "import proxycull"],
        env=env, capture_output=True, text=True)
    assert out.returncode != 0
    assert "PROXYCULL_BACKEND" in out.stderr
