"""Finite-difference Jacobians."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, JacobianError

# sqrt of the largest x with 1 - x != 1
DEFAULT_EPS = float(np.sqrt(np.finfo(float).epsneg))


@dataclass(frozen=True)
class JacobianConfig:
    eps: float = DEFAULT_EPS
    central: bool = False

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigurationError("eps must be positive")


def jacobian_fd(f, x0, config=None):
    """Forward-difference Jacobian of ``f`` at ``x0``.

    The step for coordinate j is ``eps * max(|x0_j|, 1)``, and each column
    is divided by the step actually realised in floating point. With
    ``config.central`` a two-sided difference is used instead.

    Returns
    -------
    ndarray of shape (len(f(x0)), len(x0))
    """
    config = config or JacobianConfig()
    x0 = np.asarray(x0, dtype=float).ravel()
    f0 = np.atleast_1d(np.asarray(f(x0), dtype=float)).ravel()
    jac = np.zeros((f0.shape[0], x0.shape[0]))
    for j in range(x0.shape[0]):
        h = config.eps * max(abs(x0[j]), 1.0)
        up = x0.copy()
        up[j] = x0[j] + h
        try:
            f_up = np.asarray(f(up), dtype=float).ravel()
            if config.central:
                down = x0.copy()
                down[j] = x0[j] - h
                f_down = np.asarray(f(down), dtype=float).ravel()
                jac[:, j] = (f_up - f_down) / (up[j] - down[j])
            else:
                jac[:, j] = (f_up - f0) / (up[j] - x0[j])
        except JacobianError:
            raise
        except Exception as exc:
            raise JacobianError(f"function evaluation failed for column {j}: {exc}",
                                column=j) from exc
    return jac
