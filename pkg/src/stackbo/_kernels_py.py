"""Pure-numpy MLP kernels, used when the compiled extension is unavailable.

Both backends share one flat parameter layout. For each affine layer ``l``
(mapping ``widths[l]`` -> ``widths[l + 1]``) the vector holds the weight
matrix of shape ``(out, in)`` in row-major order followed by the bias of
length ``out``. Every layer, including the last one, is followed by the
activation.
"""

import numpy as np

TANH = 0
RELU = 1


def mlp_forward(theta, widths, act, X):
    """Return the list of layer activations ``[X, h_1, ..., h_L]`` for a batch."""
    acts = [X]
    h = X
    off = 0
    for i in range(len(widths) - 1):
        n_in = widths[i]
        n_out = widths[i + 1]
        W = theta[off:off + n_out * n_in].reshape(n_out, n_in)
        off += n_out * n_in
        b = theta[off:off + n_out]
        off += n_out
        z = h @ W.T
        z += b
        if act == TANH:
            h = np.tanh(z, out=z)
        else:
            h = np.maximum(z, 0.0, out=z)
        acts.append(h)
    return acts


def mlp_backward(theta, widths, act, acts, G):
    """Vector-Jacobian product of the batch sum ``sum_n G[n] . h_L[n]``.

    Returns ``(grad_theta, grad_X)``; ``grad_theta`` is summed over the batch,
    ``grad_X`` has one row per input. ReLU uses the subgradient 0 at 0.
    """
    n_layers = len(widths) - 1
    offsets = []
    off = 0
    for i in range(n_layers):
        offsets.append(off)
        off += widths[i + 1] * widths[i] + widths[i + 1]
    grad = np.empty(off)
    delta = G
    for i in range(n_layers - 1, -1, -1):
        n_in = widths[i]
        n_out = widths[i + 1]
        h_out = acts[i + 1]
        if act == TANH:
            dz = delta * (1.0 - h_out * h_out)
        else:
            dz = delta * (h_out > 0.0)
        o = offsets[i]
        W = theta[o:o + n_out * n_in].reshape(n_out, n_in)
        grad[o:o + n_out * n_in] = (dz.T @ acts[i]).ravel()
        grad[o + n_out * n_in:o + n_out * n_in + n_out] = dz.sum(axis=0)
        delta = dz @ W
    return grad, delta
