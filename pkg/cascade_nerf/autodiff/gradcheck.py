"""Central finite differences, used as the gradient oracle in tests."""

from collections.abc import Callable, Mapping

import numpy as np

from ..errors import UsageError
from .params import ParamStore, Tensor


def finite_difference_gradient(
    f: Callable[[ParamStore], float], params: ParamStore, eps: float = 1e-5
) -> dict[str, Tensor]:
    """(f(p + eps) - f(p - eps)) / (2 eps) for every scalar parameter.

    Parameters are perturbed in place and restored exactly afterwards.
    """
    if eps <= 0.0:
        raise UsageError(f"eps must be positive, got {eps}")
    grads: dict[str, Tensor] = {}
    for name, tensor in params.items():
        grad = np.zeros_like(tensor)
        flat = tensor.reshape(-1)
        out = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            plus = float(f(params))
            flat[i] = original - eps
            minus = float(f(params))
            flat[i] = original
            out[i] = (plus - minus) / (2.0 * eps)
        grads[name] = grad
    return grads


def max_relative_error(
    analytic: Mapping[str, Tensor], numeric: Mapping[str, Tensor], floor: float = 1e-8
) -> float:
    """max |g_ad - g_fd| / max(floor, |g_fd|) over all shared entries."""
    worst = 0.0
    for name, fd in numeric.items():
        ad = analytic[name]
        if ad.shape != fd.shape:
            raise UsageError(f"gradient '{name}' has shape {ad.shape}, expected {fd.shape}")
        if fd.size == 0:
            continue
        err = np.abs(ad - fd) / np.maximum(floor, np.abs(fd))
        worst = max(worst, float(err.max()))
    return worst
