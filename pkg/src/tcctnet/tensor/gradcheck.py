"""Central finite-difference oracles for checking analytic gradients."""

from __future__ import annotations

from typing import Callable, Dict, Optional, Sequence

import numpy as np

from .core import DiffTensor


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Norm-wise relative error ``|a-b| / max(|a|, |b|)``."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def numerical_gradient(f: Callable[[], float], x: np.ndarray, step: float = 1e-5,
                       indices: Optional[Sequence[int]] = None) -> np.ndarray:
    """Central differences of the scalar ``f()`` w.r.t. entries of ``x`` (mutated in place).

    If ``indices`` is given only those flat positions are perturbed and the
    result holds just those entries.
    """
    flat = x.reshape(-1)
    positions = range(flat.size) if indices is None else indices
    out = []
    for i in positions:
        orig = flat[i]
        flat[i] = orig + step
        up = f()
        flat[i] = orig - step
        down = f()
        flat[i] = orig
        out.append((up - down) / (2 * step))
    grad = np.array(out, dtype=np.float64)
    return grad.reshape(x.shape) if indices is None else grad


def directional_derivative(f: Callable[[], float], x: np.ndarray, direction: np.ndarray,
                           step: float = 1e-5) -> float:
    """Central difference of ``f`` along ``direction`` (``x`` mutated and restored)."""
    orig = x.copy()
    x += step * direction
    up = f()
    x[...] = orig - step * direction
    down = f()
    x[...] = orig
    return (up - down) / (2 * step)


def check_tensors(loss_fn: Callable[[], DiffTensor], tensors: Dict[str, DiffTensor],
                  step: float = 1e-5, max_entries: int = 64,
                  rng: Optional[np.random.Generator] = None) -> Dict[str, float]:
    """Compare backprop gradients against finite differences.

    ``loss_fn`` must rebuild the graph from scratch on every call and be
    deterministic. Small tensors are checked entry by entry; larger ones on a
    random subset of ``max_entries`` entries plus one random direction
    covering every entry. Returns the relative error per tensor name.
    """
    rng = rng or np.random.default_rng(0)
    for t in tensors.values():
        t.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.values))
                for name, t in tensors.items()}

    def f() -> float:
        return float(loss_fn().values.reshape(-1)[0])

    errors = {}
    for name, t in tensors.items():
        ga = analytic[name].reshape(-1)
        if t.size <= max_entries:
            gn = numerical_gradient(f, t.values, step).reshape(-1)
            errors[name] = relative_error(ga, gn)
            continue
        idx = rng.choice(t.size, size=max_entries, replace=False)
        gn = numerical_gradient(f, t.values, step, idx)
        direction = rng.standard_normal(t.shape)
        dn = directional_derivative(f, t.values, direction, step)
        da = float(np.dot(ga, direction.reshape(-1)))
        errors[name] = max(relative_error(ga[idx], gn), relative_error(np.array([da]), np.array([dn])))
    return errors
