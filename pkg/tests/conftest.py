import numpy as np
import pytest

from preddf import rng_stream


@pytest.fixture
def rng():
    return rng_stream(12345)


def brute_force_loocv(X, y, fitter):
    """Refit ``fitter(X_train, y_train) -> coef`` n times and pool the held-out squared errors."""
    n = X.shape[0]
    errs = np.empty(n)
    for i in range(n):
        keep = np.arange(n) != i
        coef = fitter(X[keep], y[keep])
        errs[i] = (y[i] - X[i] @ coef) ** 2
    return float(errs.mean())


def lstsq_coef(X, y):
    return np.linalg.lstsq(X, y, rcond=None)[0]


def ridge_coef(lam):
    def fitter(X, y):
        return np.linalg.solve(X.T @ X + lam * np.eye(X.shape[1]), X.T @ y)

    return fitter
