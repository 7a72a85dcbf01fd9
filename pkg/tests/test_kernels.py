import numpy as np
import pytest

from artifact import kernels
from artifact.jsq_engine import coupling_dominance, exact_stationary_small, simulate_stationary
from artifact.model_core import QueueParams

try:
    kernels.get("cython")
    HAVE_CYTHON = True
except ImportError:
    HAVE_CYTHON = False

needs_cython = pytest.mark.skipif(not HAVE_CYTHON, reason="compiled extension not built")

P = QueueParams(2.0, (0.7, 0.4), 0.3)
EST = ["p_empty", "zero_mass", "mean:0", "perp:2", "qhat:1.5", "tail:0.6,0.8:0.25"]


def test_backend_flag():
    assert kernels.BACKEND in ("python", "cython")


@needs_cython
@pytest.mark.parametrize("tie_rule", ["lexicographic", "uniform"])
def test_simulation_bit_identical(tie_rule):
    a = simulate_stationary(P, 3e3, 30, 17, EST, backend="python", tie_rule=tie_rule)
    b = simulate_stationary(P, 3e3, 30, 17, EST, backend="cython", tie_rule=tie_rule)
    for k in EST:
        assert a[k].value == b[k].value and a[k].ci_halfwidth == b[k].ci_halfwidth


@needs_cython
def test_coupling_bit_identical():
    for params in (P, QueueParams(2.0, (0.0, 0.0, 0.0), 0.5)):
        a = coupling_dominance(params, 5000, 23, backend="python")
        b = coupling_dominance(params, 5000, 23, backend="cython")
        assert a == b


@needs_cython
def test_gauss_seidel_backends_agree(monkeypatch):
    from artifact import jsq_engine
    q = QueueParams(2.0, (0.5, 0.5), 0.5)
    ref = exact_stationary_small(q, 25)
    monkeypatch.setattr(jsq_engine.kernels, "gauss_seidel", kernels.get("python").gauss_seidel)
    other = exact_stationary_small(q, 25)
    assert np.max(np.abs(ref.probs - other.probs)) <= 1e-12
