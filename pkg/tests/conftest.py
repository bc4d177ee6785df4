import numpy as np
import pytest

from mlse import builtin_example1, builtin_example2


@pytest.fixture(scope="session")
def example1():
    return builtin_example1()


@pytest.fixture(scope="session")
def example2():
    return builtin_example2()


def central_difference_gradient(fn, x, rel_step=1e-6):
    """Central finite differences with per-component step rel_step*max(1,|x_q|)."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for q in range(x.shape[0]):
        h = rel_step * max(1.0, abs(x[q]))
        hi = x.copy()
        lo = x.copy()
        hi[q] += h
        lo[q] -= h
        grad[q] = (fn(hi) - fn(lo)) / (2.0 * h)
    return grad


def assert_gradient_matches(fn, grad_fn, x, rel_err=1e-5, rel_step=1e-6):
    """Mixed relative/absolute check: |diff| <= rel_err * max(1, |fd|)."""
    fd = central_difference_gradient(fn, x, rel_step)
    analytic = np.asarray(grad_fn(x), dtype=float)
    scale = max(1.0, float(np.linalg.norm(fd)))
    err = float(np.linalg.norm(analytic - fd))
    assert err <= rel_err * scale, f"gradient mismatch at {x}: analytic {analytic}, fd {fd}, err {err}"
