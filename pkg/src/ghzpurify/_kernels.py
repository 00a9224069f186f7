"""Hot pair-map kernels: numba-compiled loops with a pure-numpy fallback.

A protocol step on a diagonal state is a quadratic map: every ordered label
pair (l1, l2) either gets dropped or sends weight w[l1] * w[l2] * keep_w[p]
to a single output label out_idx[p], with p = l1 * dim + l2.  Threshold
bisections and efficiency sweeps apply this map millions of times on small
vectors, where per-call numpy overhead dominates, so the fused loop is
compiled with numba by default.

Set ``GHZPURIFY_DISABLE_NUMBA=1`` to select the numpy path instead (the
numpy path is also used automatically when numba is unavailable).
"""
from __future__ import annotations

import os

import numpy as np

__all__ = ["pair_map", "pair_map_numpy", "pair_map_numba", "active_backend", "set_backend"]

_ENV_FLAG = "GHZPURIFY_DISABLE_NUMBA"

_disabled = os.environ.get(_ENV_FLAG, "").strip().lower() in ("1", "true", "yes", "on")

if not _disabled:
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - depends on environment
        _HAVE_NUMBA = False
else:
    _HAVE_NUMBA = False


def pair_map_numpy(w: np.ndarray, keep_w: np.ndarray, out_idx: np.ndarray):
    """Vectorised fallback: outer product, mask, scatter-add via bincount."""
    kept = np.outer(w, w).ravel() * keep_w
    out = np.bincount(out_idx, weights=kept, minlength=w.size)
    return out, float(kept.sum())


if _HAVE_NUMBA:

    @njit(cache=True)
    def _pair_map_loop(w, keep_w, out_idx, out):  # pragma: no cover - compiled
        dim = w.shape[0]
        keep = 0.0
        for i in range(dim):
            wi = w[i]
            if wi == 0.0:
                continue
            base = i * dim
            for j in range(dim):
                kw = keep_w[base + j]
                if kw != 0.0:
                    v = wi * w[j] * kw
                    out[out_idx[base + j]] += v
                    keep += v
        return keep

    def pair_map_numba(w: np.ndarray, keep_w: np.ndarray, out_idx: np.ndarray):
        out = np.zeros(w.size)
        keep = _pair_map_loop(w, keep_w, out_idx, out)
        return out, float(keep)

else:
    pair_map_numba = None

_active = "numba" if _HAVE_NUMBA else "numpy"


def active_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    """Select the kernel implementation ("numba" or "numpy") at runtime."""
    global _active
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not _HAVE_NUMBA:
        raise RuntimeError("numba backend unavailable (not installed or disabled)")
    _active = name


def pair_map(w: np.ndarray, keep_w: np.ndarray, out_idx: np.ndarray):
    """Apply one quadratic pair map; returns (unnormalised output, keep prob)."""
    if _active == "numba":
        return pair_map_numba(w, keep_w, out_idx)
    return pair_map_numpy(w, keep_w, out_idx)
