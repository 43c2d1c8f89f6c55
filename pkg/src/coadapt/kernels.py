"""Hot numeric kernels.

Two interchangeable implementations live here: numba @njit loops and pure
numpy. The active one is chosen at import time from the COADAPT_BACKEND
environment variable ("numba" or "numpy"; default is numba when importable).
Both produce the same values up to floating-point summation order, and each
is bit-deterministic on its own, which is what the determinism contracts
require. `benchmarks/bench_kernels.py` times one against the other.
"""

from __future__ import annotations

import os

import numpy as np

_ROW_EPS = 1e-300


# ---------------------------------------------------------------- numpy path


def _attention_maps_np(queries, keys, scale, weights, renorm):
    # queries: (T, R, D), keys: (n, D), weights: (n,) -> (T, R, n)
    logits = np.einsum("trd,jd->trj", queries, keys) * scale
    logits -= logits.max(axis=2, keepdims=True)
    maps = np.exp(logits)
    maps /= maps.sum(axis=2, keepdims=True)
    maps *= weights[None, None, :]
    if renorm:
        sums = maps.sum(axis=2, keepdims=True)
        np.divide(maps, sums, out=maps, where=np.abs(sums) > _ROW_EPS)
    return maps


def _mix_pixels_np(maps, blobs):
    # maps: (T, R, n), blobs: (n, R, C) -> clamped (R, C)
    img = np.einsum("trj,jrc->rc", maps, blobs) / maps.shape[0]
    return np.clip(img, 0.0, 1.0)


def _ssim_windows_np(a, b, win, stride, c1, c2):
    # single-channel mean SSIM over win x win windows at the given stride
    from numpy.lib.stride_tricks import sliding_window_view

    wa = sliding_window_view(a, (win, win))[::stride, ::stride]
    wb = sliding_window_view(b, (win, win))[::stride, ::stride]
    n = float(win * win)
    mu_a = wa.mean(axis=(2, 3))
    mu_b = wb.mean(axis=(2, 3))
    var_a = (wa * wa).sum(axis=(2, 3)) / n - mu_a * mu_a
    var_b = (wb * wb).sum(axis=(2, 3)) / n - mu_b * mu_b
    cov = (wa * wb).sum(axis=(2, 3)) / n - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


# ---------------------------------------------------------------- numba path

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

if _HAVE_NUMBA:

    @njit(cache=True)
    def _attention_maps_nb(queries, keys, scale, weights, renorm):
        t_gen, rows, dim = queries.shape
        n = keys.shape[0]
        out = np.empty((t_gen, rows, n))
        for t in range(t_gen):
            for r in range(rows):
                hi = -1e300
                for j in range(n):
                    acc = 0.0
                    for d in range(dim):
                        acc += queries[t, r, d] * keys[j, d]
                    acc *= scale
                    out[t, r, j] = acc
                    if acc > hi:
                        hi = acc
                total = 0.0
                for j in range(n):
                    e = np.exp(out[t, r, j] - hi)
                    out[t, r, j] = e
                    total += e
                for j in range(n):
                    out[t, r, j] = out[t, r, j] / total * weights[j]
                if renorm:
                    s = 0.0
                    for j in range(n):
                        s += out[t, r, j]
                    if abs(s) > _ROW_EPS:
                        for j in range(n):
                            out[t, r, j] /= s
        return out

    @njit(cache=True)
    def _mix_pixels_nb(maps, blobs):
        t_gen, rows, n = maps.shape
        chans = blobs.shape[2]
        img = np.zeros((rows, chans))
        for t in range(t_gen):
            for r in range(rows):
                for j in range(n):
                    m = maps[t, r, j]
                    for c in range(chans):
                        img[r, c] += m * blobs[j, r, c]
        img /= t_gen
        for r in range(rows):
            for c in range(chans):
                if img[r, c] < 0.0:
                    img[r, c] = 0.0
                elif img[r, c] > 1.0:
                    img[r, c] = 1.0
        return img

    @njit(cache=True)
    def _ssim_windows_nb(a, b, win, stride, c1, c2):
        h, w = a.shape
        n = float(win * win)
        total = 0.0
        count = 0
        for y in range(0, h - win + 1, stride):
            for x in range(0, w - win + 1, stride):
                sa = 0.0
                sb = 0.0
                saa = 0.0
                sbb = 0.0
                sab = 0.0
                for dy in range(win):
                    for dx in range(win):
                        va = a[y + dy, x + dx]
                        vb = b[y + dy, x + dx]
                        sa += va
                        sb += vb
                        saa += va * va
                        sbb += vb * vb
                        sab += va * vb
                mu_a = sa / n
                mu_b = sb / n
                var_a = saa / n - mu_a * mu_a
                var_b = sbb / n - mu_b * mu_b
                cov = sab / n - mu_a * mu_b
                num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
                den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
                total += num / den
                count += 1
        return total / count


# ------------------------------------------------------------ backend select

_BACKENDS = {"numpy": (_attention_maps_np, _mix_pixels_np, _ssim_windows_np)}
if _HAVE_NUMBA:
    _BACKENDS["numba"] = (_attention_maps_nb, _mix_pixels_nb, _ssim_windows_nb)


def _pick_backend() -> str:
    requested = os.environ.get("COADAPT_BACKEND", "").strip().lower()
    if requested in _BACKENDS:
        return requested
    if requested in ("", "auto"):
        return "numba" if _HAVE_NUMBA else "numpy"
    raise ValueError(
        f"COADAPT_BACKEND={requested!r} not recognized; use 'numba' or 'numpy'"
    )


_ACTIVE = _pick_backend()
attention_maps, mix_pixels, ssim_windows = _BACKENDS[_ACTIVE]


def active_backend() -> str:
    return _ACTIVE


def backend_impls(name: str):
    """Explicit (attention_maps, mix_pixels, ssim_windows) triple for a backend."""
    if name not in _BACKENDS:
        raise KeyError(f"backend {name!r} unavailable; have {sorted(_BACKENDS)}")
    return _BACKENDS[name]
