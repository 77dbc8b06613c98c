"""Pure-Python fallback kernels for the dense-network hot loops.

These mirror the Cython kernels in ``_ckernels.pyx`` operation for
operation: same loop structure, same accumulation order, same branch
structure in the stable sigmoid. Both backends therefore produce
bit-identical results on the same inputs (the extension is compiled with
FP contraction off), and either can back the network layer transparently.

All kernels take C-contiguous float64 numpy arrays and write into
preallocated outputs. Activation codes: 0 = linear, 1 = relu, 2 = sigmoid.
"""

from __future__ import annotations

import math

import numpy as np

ACT_LINEAR = 0
ACT_RELU = 1
ACT_SIGMOID = 2


def _sigmoid(z: float) -> float:
    # Branching keeps exp() arguments non-positive, so neither backend can
    # overflow; both backends pick the same branch for the same z.
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def dense_forward(x, w, b, act, out):
    """out = act(x @ w.T + b), accumulated in ascending-k order."""
    n, fin = x.shape
    fout = w.shape[0]
    xl = x.tolist()
    wl = w.tolist()
    bl = b.tolist()
    res = out.tolist()
    for i in range(n):
        xi = xl[i]
        row = res[i]
        for j in range(fout):
            wj = wl[j]
            acc = bl[j]
            for k in range(fin):
                acc += xi[k] * wj[k]
            if act == ACT_RELU:
                row[j] = acc if acc > 0.0 else 0.0
            elif act == ACT_SIGMOID:
                row[j] = _sigmoid(acc)
            else:
                row[j] = acc
    out[:] = res


def dense_backward(grad_out, a, x, w, act, gw, gb, gx):
    """Backward through one dense layer.

    grad_out is dL/d(activation output); ``a`` is the cached activation
    output (the derivative is reconstructed from it). Writes parameter
    gradients into gw/gb and, when gx is not None, the input gradient
    into gx.
    """
    n, fin = x.shape
    fout = w.shape[0]
    gl = grad_out.tolist()
    al = a.tolist()
    xl = x.tolist()
    wl = w.tolist()

    dz = [[0.0] * fout for _ in range(n)]
    for i in range(n):
        gi = gl[i]
        ai = al[i]
        di = dz[i]
        for j in range(fout):
            g = gi[j]
            if act == ACT_RELU:
                di[j] = g if ai[j] > 0.0 else 0.0
            elif act == ACT_SIGMOID:
                s = ai[j]
                di[j] = g * (s * (1.0 - s))
            else:
                di[j] = g

    gbl = [0.0] * fout
    gwl = [[0.0] * fin for _ in range(fout)]
    for i in range(n):
        di = dz[i]
        xi = xl[i]
        for j in range(fout):
            d = di[j]
            gbl[j] += d
            gwj = gwl[j]
            for k in range(fin):
                gwj[k] += d * xi[k]
    gw[:] = gwl
    gb[:] = gbl

    if gx is not None:
        gxl = [[0.0] * fin for _ in range(n)]
        for i in range(n):
            di = dz[i]
            gxi = gxl[i]
            for j in range(fout):
                d = di[j]
                wj = wl[j]
                for k in range(fin):
                    gxi[k] += d * wj[k]
        gx[:] = gxl


def adam_step(p, g, m, v, t, lr, b1, b2, eps):
    """One Adam update (bias-corrected), in place, over flat arrays."""
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    pl = p.tolist()
    gl = g.tolist()
    ml = m.tolist()
    vl = v.tolist()
    for i in range(len(pl)):
        gi = gl[i]
        mi = b1 * ml[i] + (1.0 - b1) * gi
        vi = b2 * vl[i] + (1.0 - b2) * (gi * gi)
        ml[i] = mi
        vl[i] = vi
        pl[i] -= lr * (mi / c1) / (math.sqrt(vi / c2) + eps)
    p[:] = pl
    m[:] = ml
    v[:] = vl


def mse_loss_grad(pred, target, grad):
    """Mean squared error over all elements; writes dL/dpred into grad."""
    pl = pred.tolist()
    tl = target.tolist()
    cnt = float(len(pl))
    acc = 0.0
    gl = [0.0] * len(pl)
    for i in range(len(pl)):
        d = pl[i] - tl[i]
        acc += d * d
        gl[i] = 2.0 * d / cnt
    grad[:] = gl
    return acc / cnt


def bce_loss_grad(p, y, grad, clamp_eps):
    """Mean binary cross-entropy with clamping; writes dL/dp into grad."""
    pl = p.tolist()
    yl = y.tolist()
    cnt = float(len(pl))
    lo = clamp_eps
    hi = 1.0 - clamp_eps
    acc = 0.0
    gl = [0.0] * len(pl)
    for i in range(len(pl)):
        pc = pl[i]
        if pc < lo:
            pc = lo
        elif pc > hi:
            pc = hi
        yi = yl[i]
        acc += -(yi * math.log(pc) + (1.0 - yi) * math.log(1.0 - pc))
        gl[i] = (pc - yi) / (pc * (1.0 - pc) * cnt)
    grad[:] = gl
    return acc / cnt
