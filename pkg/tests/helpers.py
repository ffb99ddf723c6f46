"""Shared test oracles, all deliberately naive and independent of the
implementations they check."""

from __future__ import annotations

import numpy as np

from flightpatchnet.nn import Parameter


def matmul_oracle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Triple-loop matrix multiply."""
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def mse_oracle(pred: np.ndarray, target: np.ndarray) -> float:
    """Two-pass mean of squared differences."""
    diffs = [(p - t) for p, t in zip(pred.ravel().tolist(), target.ravel().tolist())]
    return sum(d * d for d in diffs) / len(diffs)


def attention_oracle(x: np.ndarray, heads: int, wq, bq, wk, wv, bv, wo, bo) -> np.ndarray:
    """Unvectorized per-head scaled dot-product attention."""
    seq, dim = x.shape
    head_dim = dim // heads
    q = x @ wq + bq
    k = x @ wk
    v = x @ wv + bv
    merged = np.zeros((seq, dim))
    for h in range(heads):
        sl = slice(h * head_dim, (h + 1) * head_dim)
        qh, kh, vh = q[:, sl], k[:, sl], v[:, sl]
        ctx = np.zeros((seq, head_dim))
        for i in range(seq):
            scores = np.array([qh[i] @ kh[j] / np.sqrt(head_dim) for j in range(seq)])
            scores -= scores.max()
            w = np.exp(scores)
            w /= w.sum()
            for j in range(seq):
                ctx[i] += w[j] * vh[j]
        merged[:, sl] = ctx
    return merged @ wo + bo


def finite_difference(f, params: list[Parameter], h: float = 1e-5,
                      max_coords: int | None = None, seed: int = 0) -> float:
    """Compare analytic gradients of scalar-valued `f` against central
    differences; returns the worst relative error over all checked
    coordinates. `f` must rebuild the graph from the current parameter
    values on every call.

    When `max_coords` is given, that many coordinates per parameter are
    sampled with a fixed-seed generator; otherwise every coordinate is
    checked.
    """
    for p in params:
        p.zero_grad()
    loss = f()
    loss.backward()
    grads = {p.name: p.grad.copy() for p in params}
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        flat = p.value.data.reshape(-1)
        n = flat.size
        if max_coords is None or n <= max_coords:
            coords = range(n)
        else:
            coords = rng.choice(n, size=max_coords, replace=False)
        for idx in coords:
            saved = flat[idx]
            flat[idx] = saved + h
            up = f().item()
            flat[idx] = saved - h
            down = f().item()
            flat[idx] = saved
            fd = (up - down) / (2.0 * h)
            an = grads[p.name].reshape(-1)[idx]
            rel = abs(an - fd) / max(abs(an), abs(fd), 1e-8)
            worst = max(worst, rel)
    return worst
