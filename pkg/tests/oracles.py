"""Independent reference computations shared by the tests."""

import numpy as np


def illustrative_field(x):
    a, b = x[..., 0], x[..., 1]
    return np.stack([
        -(a / 10.0) * (a - 2.0) * (a - 8.0) * (a - 12.0),
        -(b / 10.0) * (b - 2.0) * (b - 11.0) * (b - 12.0),
    ], axis=-1)


def rk4(rhs, y0, t_end, step):
    """Classical fixed-step fourth-order Runge-Kutta."""
    y = np.array(y0, dtype=np.float64)
    n = int(round(t_end / step))
    h = t_end / n
    for _ in range(n):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def logistic(x0, t):
    """Closed-form solution of x' = x (1 - x)."""
    return x0 * np.exp(t) / (1.0 - x0 + x0 * np.exp(t))
