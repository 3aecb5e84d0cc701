"""Sparse contrastive and dense soft-argmax objectives with manual gradients.

All functions take post-processed, per-location L2-normalized feature grids
as float64 arrays and return the loss together with gradients with respect
to those grids. Keypoints are continuous grid coordinates; descriptors are
read by bilinear interpolation and re-normalized, and every backward pass
routes through that sampling.
"""

from __future__ import annotations

import numpy as np

from ..errors import InputError


def _bilinear_forward(arr: np.ndarray, x: float, y: float):
    """Border-clamped bilinear read; cache holds corner indices + weights."""
    h, w, _ = arr.shape
    if not (-0.5 <= x <= w - 0.5 and -0.5 <= y <= h - 0.5):
        raise InputError(f"grid point ({x}, {y}) outside {w}x{h} grid")
    x0 = int(np.floor(x))
    y0 = int(np.floor(y))
    fx = x - x0
    fy = y - y0
    xs = (min(max(x0, 0), w - 1), min(max(x0 + 1, 0), w - 1))
    ys = (min(max(y0, 0), h - 1), min(max(y0 + 1, 0), h - 1))
    ws = ((1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy)
    cells = ((ys[0], xs[0]), (ys[0], xs[1]), (ys[1], xs[0]), (ys[1], xs[1]))
    vec = sum(wt * arr[cy, cx] for wt, (cy, cx) in zip(ws, cells))
    return vec, (cells, ws)


def _bilinear_backward(d_vec: np.ndarray, cache, d_arr: np.ndarray) -> None:
    cells, ws = cache
    for wt, (cy, cx) in zip(ws, cells):
        d_arr[cy, cx] += wt * d_vec


def _unit_forward(v: np.ndarray):
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        raise InputError("degenerate sampled descriptor")
    q = v / n
    return q, (q, n)


def _unit_backward(d_q: np.ndarray, cache) -> np.ndarray:
    q, n = cache
    return (d_q - q * float(q @ d_q)) / n


def _descriptors(arr: np.ndarray, kps: np.ndarray):
    descs = []
    caches = []
    for x, y in kps:
        vec, bc = _bilinear_forward(arr, float(x), float(y))
        q, nc = _unit_forward(vec)
        descs.append(q)
        caches.append((bc, nc))
    return np.stack(descs), caches


def _scatter_descriptor_grads(d_descs: np.ndarray, caches, d_arr: np.ndarray) -> None:
    for d_q, (bc, nc) in zip(d_descs, caches):
        _bilinear_backward(_unit_backward(d_q, nc), bc, d_arr)


def contrastive_loss(desc_s: np.ndarray, desc_t: np.ndarray, temperature_c: float = 0.07):
    """CLIP-style symmetric cross-entropy against the identity pairing.

    Returns (loss, d_desc_s, d_desc_t). Descriptors must be unit vectors so
    the logit matrix is cosine similarity over temperature_c.
    """
    n = desc_s.shape[0]
    if n < 2:
        raise InputError(f"contrastive loss needs >= 2 pairs, got {n}")
    logits = desc_s @ desc_t.T / temperature_c
    # row direction: source i classifies its target among all targets
    row_max = logits.max(axis=1, keepdims=True)
    row_p = np.exp(logits - row_max)
    row_p /= row_p.sum(axis=1, keepdims=True)
    col_max = logits.max(axis=0, keepdims=True)
    col_p = np.exp(logits - col_max)
    col_p /= col_p.sum(axis=0, keepdims=True)
    diag = np.arange(n)
    loss = -0.5 * (np.log(row_p[diag, diag]).mean() + np.log(col_p[diag, diag]).mean())
    d_logits = 0.5 * (row_p + col_p) / n
    d_logits[diag, diag] -= 1.0 / n
    d_logits /= temperature_c
    return float(loss), d_logits @ desc_t, d_logits.T @ desc_s


def loss_sparse(fs: np.ndarray, ft: np.ndarray, kps_s: np.ndarray, kps_t: np.ndarray,
                temperature_c: float = 0.07):
    """Contrastive loss over sampled keypoint descriptors.

    Returns (loss, d_fs, d_ft) with gradients on the full feature grids.
    """
    kps_s = np.asarray(kps_s, dtype=np.float64)
    kps_t = np.asarray(kps_t, dtype=np.float64)
    if kps_s.shape != kps_t.shape or kps_s.ndim != 2:
        raise InputError("keypoint lists must be equal-length (n, 2) arrays")
    desc_s, cache_s = _descriptors(fs, kps_s)
    desc_t, cache_t = _descriptors(ft, kps_t)
    loss, d_desc_s, d_desc_t = contrastive_loss(desc_s, desc_t, temperature_c)
    d_fs = np.zeros_like(fs)
    d_ft = np.zeros_like(ft)
    _scatter_descriptor_grads(d_desc_s, cache_s, d_fs)
    _scatter_descriptor_grads(d_desc_t, cache_t, d_ft)
    return loss, d_fs, d_ft


def loss_dense(fs: np.ndarray, ft: np.ndarray, kps_s: np.ndarray, kps_t: np.ndarray,
               temperature: float = 0.04, perturb_std: float = 1.0,
               rng: np.random.Generator | None = None, eps: np.ndarray | None = None):
    """Sum over keypoints of the distance between the global soft-argmax of
    the similarity map and the Gaussian-perturbed ground truth.

    eps overrides the drawn perturbation (used by deterministic checks);
    otherwise it comes from rng as N(0, perturb_std^2) per coordinate.
    Returns (loss, d_fs, d_ft).
    """
    kps_s = np.asarray(kps_s, dtype=np.float64)
    kps_t = np.asarray(kps_t, dtype=np.float64)
    if kps_s.shape != kps_t.shape or kps_s.ndim != 2 or kps_s.shape[0] < 1:
        raise InputError("need >= 1 aligned keypoint pair")
    n = kps_s.shape[0]
    if eps is None:
        if perturb_std == 0.0:
            eps = np.zeros((n, 2), dtype=np.float64)
        else:
            if rng is None:
                raise InputError("perturb_std > 0 needs an rng (or explicit eps)")
            eps = rng.normal(0.0, perturb_std, size=(n, 2))
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != (n, 2):
        raise InputError(f"eps must be ({n}, 2)")

    h, w, _ = ft.shape
    xs = np.tile(np.arange(w, dtype=np.float64), h)
    ys = np.repeat(np.arange(h, dtype=np.float64), w)
    flat_t = ft.reshape(h * w, ft.shape[2])
    d_fs = np.zeros_like(fs)
    d_ft = np.zeros_like(ft)
    total = 0.0
    for i in range(n):
        vec, bc = _bilinear_forward(fs, float(kps_s[i, 0]), float(kps_s[i, 1]))
        q, nc = _unit_forward(vec)
        logits = flat_t @ q / temperature
        z = np.exp(logits - logits.max())
        weights = z / z.sum()
        px = float(weights @ xs)
        py = float(weights @ ys)
        diff = np.array([px - (kps_t[i, 0] + eps[i, 0]), py - (kps_t[i, 1] + eps[i, 1])])
        dist = float(np.linalg.norm(diff))
        total += dist
        if dist < 1e-12:
            continue
        d_p = diff / dist
        d_w = d_p[0] * xs + d_p[1] * ys
        d_logits = weights * (d_w - float(weights @ d_w)) / temperature
        d_ft += (d_logits[:, None] * q[None, :]).reshape(ft.shape)
        d_q = flat_t.T @ d_logits
        _bilinear_backward(_unit_backward(d_q, nc), bc, d_fs)
    return total, d_fs, d_ft


def total_loss(fs: np.ndarray, ft: np.ndarray, kps_s: np.ndarray, kps_t: np.ndarray,
               temperature: float = 0.04, temperature_c: float = 0.07,
               perturb_std: float = 1.0, rng: np.random.Generator | None = None,
               eps: np.ndarray | None = None):
    """Unweighted sum of the sparse and dense objectives.

    Returns (loss, d_fs, d_ft, loss_sparse_value, loss_dense_value).
    """
    ls, gs_s, gs_t = loss_sparse(fs, ft, kps_s, kps_t, temperature_c)
    ld, gd_s, gd_t = loss_dense(fs, ft, kps_s, kps_t, temperature, perturb_std, rng, eps)
    return ls + ld, gs_s + gd_s, gs_t + gd_t, ls, ld
