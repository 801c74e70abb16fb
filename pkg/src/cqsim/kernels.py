"""Dense-network kernels for the drawer: numba fast path + pure-numpy fallback.

The backend is chosen once at import time from the CQSIM_BACKEND environment
variable: "numba" (require the jit path), "numpy" (force the fallback), or
"auto" (default: numba when importable). `benchmarks/bench_kernels.py`
compares the two paths on the same batches.

Head output layout per clipart (8 values):
    [0]    selection score (unbounded; drawn iff > 0)
    [1:4]  size logits (small, medium, large)
    [4:6]  flip logits (facing_left, facing_right)
    [6:8]  position logits, squashed to (x, y) via sigmoid
"""

from __future__ import annotations

import os

import numpy as np

HEAD_WIDTH = 8


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


# --- pure-numpy implementations -------------------------------------------

def _np_dense_forward(X, W1, b1, W2, b2, WH, bH):
    H1 = np.tanh(X @ W1.T + b1)
    H2 = np.tanh(H1 @ W2.T + b2)
    O = H2 @ WH.T + bH
    return H1, H2, O


def _np_head_loss_grads(O, sel, size_t, flip_t, pos_t, asym):
    """Loss summed over the batch plus gradient w.r.t. the raw head outputs.

    O: (B, G, 8) raw outputs; sel: (B, G) 0/1 selection targets;
    size_t/flip_t: (B, G) class indices; pos_t: (B, G, 2); asym: (G,) 0/1.
    Selection uses binary cross-entropy over every clipart; size/flip
    cross-entropy and squared position error apply to selected cliparts only,
    with the flip term restricted to asymmetric cliparts.
    """
    dO = np.zeros_like(O)
    s = O[:, :, 0]
    y = sel.astype(np.float64)
    loss = float(np.sum(np.maximum(s, 0.0) - s * y + np.log1p(np.exp(-np.abs(s)))))
    dO[:, :, 0] = _sigmoid(s) - y

    rows, cols = np.nonzero(sel)
    if rows.size:
        size_logits = O[rows, cols, 1:4]
        m = size_logits.max(axis=1, keepdims=True)
        ez = np.exp(size_logits - m)
        z = ez.sum(axis=1)
        p = ez / z[:, None]
        tgt = size_t[rows, cols]
        loss += float(np.sum(np.log(z) + m[:, 0] - size_logits[np.arange(rows.size), tgt]))
        dsize = p
        dsize[np.arange(rows.size), tgt] -= 1.0
        dO[rows, cols, 1:4] = dsize

        amask = asym[cols].astype(bool)
        if amask.any():
            fr, fc = rows[amask], cols[amask]
            flip_logits = O[fr, fc, 4:6]
            m2 = flip_logits.max(axis=1, keepdims=True)
            ez2 = np.exp(flip_logits - m2)
            z2 = ez2.sum(axis=1)
            p2 = ez2 / z2[:, None]
            ftgt = flip_t[fr, fc]
            loss += float(np.sum(np.log(z2) + m2[:, 0] - flip_logits[np.arange(fr.size), ftgt]))
            dflip = p2
            dflip[np.arange(fr.size), ftgt] -= 1.0
            dO[fr, fc, 4:6] = dflip

        pos = _sigmoid(O[rows, cols, 6:8])
        diff = pos - pos_t[rows, cols]
        loss += float(np.sum(diff * diff))
        dO[rows, cols, 6:8] = 2.0 * diff * pos * (1.0 - pos)

    return loss, dO


def _np_dense_backward(dO2, X, H1, H2, W1, W2, WH):
    dWH = dO2.T @ H2
    dbH = dO2.sum(axis=0)
    dH2 = (dO2 @ WH) * (1.0 - H2 * H2)
    dW2 = dH2.T @ H1
    db2 = dH2.sum(axis=0)
    dH1 = (dH2 @ W2) * (1.0 - H1 * H1)
    dW1 = dH1.T @ X
    db1 = dH1.sum(axis=0)
    dX = dH1 @ W1
    return dW1, db1, dW2, db2, dWH, dbH, dX


NUMPY_KERNELS = {
    "dense_forward": _np_dense_forward,
    "head_loss_grads": _np_head_loss_grads,
    "dense_backward": _np_dense_backward,
}


# --- numba implementations -------------------------------------------------

def _build_numba_kernels():
    from numba import njit

    @njit(cache=True)
    def nb_dense_forward(X, W1, b1, W2, b2, WH, bH):
        H1 = np.tanh(np.dot(X, W1.T) + b1)
        H2 = np.tanh(np.dot(H1, W2.T) + b2)
        O = np.dot(H2, WH.T) + bH
        return H1, H2, O

    @njit(cache=True)
    def nb_head_loss_grads(O, sel, size_t, flip_t, pos_t, asym):
        B, G, _ = O.shape
        dO = np.zeros_like(O)
        loss = 0.0
        for b in range(B):
            for g in range(G):
                s = O[b, g, 0]
                y = sel[b, g]
                loss += max(s, 0.0) - s * y + np.log1p(np.exp(-abs(s)))
                dO[b, g, 0] = 1.0 / (1.0 + np.exp(-s)) - y
                if y == 0.0:
                    continue
                # size cross-entropy (3-way softmax)
                m = O[b, g, 1]
                for k in range(2, 4):
                    if O[b, g, k] > m:
                        m = O[b, g, k]
                z = 0.0
                for k in range(1, 4):
                    z += np.exp(O[b, g, k] - m)
                tgt = size_t[b, g]
                loss += np.log(z) + m - O[b, g, 1 + tgt]
                for k in range(3):
                    p = np.exp(O[b, g, 1 + k] - m) / z
                    dO[b, g, 1 + k] = p - (1.0 if k == tgt else 0.0)
                # flip cross-entropy, asymmetric cliparts only (2-way softmax)
                if asym[g] != 0.0:
                    m2 = max(O[b, g, 4], O[b, g, 5])
                    z2 = np.exp(O[b, g, 4] - m2) + np.exp(O[b, g, 5] - m2)
                    ftgt = flip_t[b, g]
                    loss += np.log(z2) + m2 - O[b, g, 4 + ftgt]
                    for k in range(2):
                        p2 = np.exp(O[b, g, 4 + k] - m2) / z2
                        dO[b, g, 4 + k] = p2 - (1.0 if k == ftgt else 0.0)
                # squared position error through the sigmoid squash
                for k in range(2):
                    p3 = 1.0 / (1.0 + np.exp(-O[b, g, 6 + k]))
                    d = p3 - pos_t[b, g, k]
                    loss += d * d
                    dO[b, g, 6 + k] = 2.0 * d * p3 * (1.0 - p3)
        return loss, dO

    @njit(cache=True)
    def nb_dense_backward(dO2, X, H1, H2, W1, W2, WH):
        dWH = np.dot(dO2.T, H2)
        dbH = dO2.sum(axis=0)
        dH2 = np.dot(dO2, WH) * (1.0 - H2 * H2)
        dW2 = np.dot(dH2.T, H1)
        db2 = dH2.sum(axis=0)
        dH1 = np.dot(dH2, W2) * (1.0 - H1 * H1)
        dW1 = np.dot(dH1.T, X)
        db1 = dH1.sum(axis=0)
        dX = np.dot(dH1, W1)
        return dW1, db1, dW2, db2, dWH, dbH, dX

    return {
        "dense_forward": nb_dense_forward,
        "head_loss_grads": nb_head_loss_grads,
        "dense_backward": nb_dense_backward,
    }


def get_backend(name: str) -> dict:
    """Return the kernel table for "numpy" or "numba" (builds jits on demand)."""
    if name == "numpy":
        return NUMPY_KERNELS
    if name == "numba":
        return _build_numba_kernels()
    raise ValueError(f"unknown backend {name!r}")


def _select_backend() -> tuple[str, dict]:
    choice = os.environ.get("CQSIM_BACKEND", "auto").strip().lower()
    if choice not in {"auto", "numba", "numpy"}:
        raise ValueError(f"CQSIM_BACKEND must be auto|numba|numpy, got {choice!r}")
    if choice == "numpy":
        return "numpy", NUMPY_KERNELS
    try:
        return "numba", _build_numba_kernels()
    except ImportError:
        if choice == "numba":
            raise
        return "numpy", NUMPY_KERNELS


BACKEND, _KERNELS = _select_backend()

dense_forward = _KERNELS["dense_forward"]
head_loss_grads = _KERNELS["head_loss_grads"]
dense_backward = _KERNELS["dense_backward"]
