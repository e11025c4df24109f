"""The numba kernels and their pure-python twins must agree."""

import numpy as np
import pytest

from jointca import _kernels
from jointca.engine import TABLE1_UTILITIES
from jointca.oracle import _hall_system, _user_caps

from conftest import LOG_3, SIG_5_10, make_scenario

RATES = [1e-6, 0.3, 1.0, 9.99, 10.0, 17.5, 30.0, 99.0, 250.0]


@pytest.mark.parametrize("u", TABLE1_UTILITIES, ids=str)
def test_scalar_kernels_agree(u):
    args = u.kernel_args()
    for r in RATES:
        for name in ("log_utility", "utility", "slope"):
            a = getattr(_kernels.JIT, name)(*args, r)
            b = getattr(_kernels.PY, name)(*args, r)
            assert a == pytest.approx(b, rel=1e-13, abs=1e-300), (name, r)
        np.testing.assert_allclose(_kernels.JIT.slope_derivs(*args, r), _kernels.PY.slope_derivs(*args, r), rtol=1e-12)


@pytest.mark.parametrize("u", TABLE1_UTILITIES, ids=str)
def test_inverse_kernel_agrees(u):
    args = u.kernel_args()
    for p in [1e-3, 0.05, 0.4, 2.0, 7.0]:
        a = _kernels.JIT.inverse_slope(*args, p, 1e-6, 170.0, 1e-9)
        b = _kernels.PY.inverse_slope(*args, p, 1e-6, 170.0, 1e-9)
        assert a == b


def _scan_inputs(sc, res):
    _, member, cap = _hall_system(sc)
    cap_units = cap / res
    nmax = _user_caps(member, cap_units)
    m = len(sc.users)
    need_after = np.array([[member[s, j + 1:].sum() for j in range(m)] for s in range(member.shape[0])], dtype=float)
    kinds = np.array([u.utility.kernel_args()[0] for u in sc.users], dtype=np.int64)
    p0 = np.array([u.utility.kernel_args()[1] for u in sc.users])
    p1 = np.array([u.utility.kernel_args()[2] for u in sc.users])
    table = _kernels.PY.utility_table(kinds, p0, p1, nmax, res)
    np.testing.assert_allclose(_kernels.JIT.utility_table(kinds, p0, p1, nmax, res), table, rtol=1e-13)
    return table, member, cap_units, nmax, need_after


@pytest.mark.parametrize("caps, users, res", [
    ([40], [(SIG_5_10, (1,)), (LOG_3, (1,))], 0.1),
    ([12, 9], [(SIG_5_10, (1,)), (LOG_3, (1, 2)), (TABLE1_UTILITIES[5], (2,))], 0.25),
    ([6, 5], [(TABLE1_UTILITIES[3], (1, 2)), (LOG_3, (1,)), (TABLE1_UTILITIES[5], (2,)), (SIG_5_10, (1, 2))], 0.5),
])
def test_grid_scans_agree(caps, users, res):
    args = _scan_inputs(make_scenario(caps, users), res)
    jit = _kernels.JIT.grid_scan(*args)
    vec = _kernels.PY.grid_scan(*args)
    loop = _kernels.PY.grid_scan_loop(*args)
    for other in (vec, loop):
        assert list(other[0]) == list(jit[0])
        assert other[1] == pytest.approx(jit[1], abs=1e-12)


def test_env_flag_selects_backend(monkeypatch):
    monkeypatch.setenv("JOINTCA_DISABLE_NUMBA", "1")
    assert _kernels.active() is _kernels.PY and _kernels.backend_name() == "python"
    monkeypatch.delenv("JOINTCA_DISABLE_NUMBA")
    assert _kernels.active() is _kernels.JIT and _kernels.backend_name() == "numba"
