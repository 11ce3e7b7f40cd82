"""Central finite-difference gradient verification.

Checks run in double precision with h = 1e-5. Coordinates where the loss is
locally non-smooth (kinks of |.| or LeakyReLU) can be excluded by the caller
via ``skip_mask``.
"""

from __future__ import annotations

import numpy as np


def finite_difference_check(
    loss_fn,
    params,
    rng,
    n_coords=200,
    h=1e-5,
    rel_tol=1e-4,
    skip_mask=None,
):
    """Compare autodiff gradients of scalar ``loss_fn()`` against central differences.

    loss_fn: callable returning a scalar Tensor built from ``params``.
    params: list of leaf Tensors (float64) with requires_grad=True.
    skip_mask: optional callable (param_index, flat_coord) -> bool, True to skip.
    Returns (max_rel_err, n_checked); raises AssertionError on failure.
    """
    for p in params:
        if p.data.dtype != np.float64:
            raise ValueError("gradient checks require float64 parameters")
        p.zero_grad()
    loss = loss_fn()
    loss.backward()
    grads = [None if p.grad is None else p.grad.copy() for p in params]

    coords = []
    for i, p in enumerate(params):
        for j in range(p.data.size):
            coords.append((i, j))
    rng.shuffle(coords)

    max_rel = 0.0
    checked = 0
    for i, j in coords:
        if checked >= n_coords:
            break
        if skip_mask is not None and skip_mask(i, j):
            continue
        p = params[i]
        flat = p.data.reshape(-1)
        orig = flat[j]
        flat[j] = orig + h
        up = float(loss_fn().data)
        flat[j] = orig - h
        down = float(loss_fn().data)
        flat[j] = orig
        numeric = (up - down) / (2.0 * h)
        analytic = 0.0 if grads[i] is None else float(grads[i].reshape(-1)[j])
        denom = max(abs(numeric), abs(analytic))
        if denom < 1e-10:
            continue
        rel = abs(numeric - analytic) / denom
        max_rel = max(max_rel, rel)
        checked += 1
        if rel >= rel_tol:
            raise AssertionError(
                f"gradient mismatch at param {i} coord {j}: "
                f"analytic {analytic:.6e} vs numeric {numeric:.6e} (rel {rel:.2e})"
            )
    return max_rel, checked
