"""Shared test helpers: finite-difference gradient checking."""

import numpy as np
import pytest


def numeric_gradient(f, array: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function wrt one array,
    perturbing elements in place."""
    grad = np.zeros_like(array)
    flat = array.ravel()
    out = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f()
        flat[i] = orig - step
        down = f()
        flat[i] = orig
        out[i] = (up - down) / (2.0 * step)
    return grad


def assert_grad_close(analytic: np.ndarray, numeric: np.ndarray,
                      rel: float = 1e-4, abs_floor: float = 1e-7):
    """Elementwise agreement within max(rel relative, abs_floor absolute)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    err = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    bad = (err > rel * scale) & (err > abs_floor)
    assert not bad.any(), (
        f"gradient mismatch at {np.argwhere(bad)[:5]}: "
        f"analytic {analytic[bad][:5]}, numeric {numeric[bad][:5]}"
    )


def check_gradients(build_loss, tensors, step: float = 1e-5,
                    rel: float = 1e-4, abs_floor: float = 1e-7):
    """Compare autodiff gradients of build_loss() against central
    differences for every tensor in ``tensors``."""
    loss = build_loss()
    for t in tensors:
        t.zero_grad()
    loss.backward()
    analytic = {id(t): (np.zeros_like(t.values) if t.grad is None else t.grad.copy())
                for t in tensors}
    for t in tensors:
        numeric = numeric_gradient(lambda: build_loss().item(), t.values, step)
        assert_grad_close(analytic[id(t)], numeric, rel, abs_floor)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
