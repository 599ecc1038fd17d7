"""Small dense feedforward networks producing the basis map.

A network maps an input vector through ``len(layer_widths) - 1`` affine
layers, each followed by the activation; the last layer's output is the
basis vector. Parameters live in one flat float64 vector (see
``_kernels_py`` for the layout) so optimizers can treat them as a unit.
"""

from dataclasses import dataclass

import numpy as np

from stackbo._backend import mlp_backward, mlp_forward
from stackbo._kernels_py import RELU, TANH

_ACTIVATIONS = {"tanh": TANH, "relu": RELU}


@dataclass(frozen=True)
class NetworkArchitecture:
    """Layer widths (input first, basis last) and the activation name."""

    layer_widths: tuple
    activation: str = "tanh"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if len(widths) < 2:
            raise ValueError("an architecture needs at least 2 layer widths")
        if any(w < 1 for w in widths):
            raise ValueError(f"layer widths must be >= 1, got {widths}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "layer_widths", widths)

    @classmethod
    def from_depth_width(cls, input_dim, depth, width, activation="tanh"):
        """``depth`` hidden layers of ``width`` units; the last one is the basis."""
        return cls((input_dim,) + (width,) * depth, activation)

    @property
    def input_dim(self):
        return self.layer_widths[0]

    @property
    def basis_dim(self):
        return self.layer_widths[-1]

    @property
    def act_code(self):
        return _ACTIVATIONS[self.activation]

    @property
    def n_params(self):
        w = self.layer_widths
        return sum(w[i + 1] * w[i] + w[i + 1] for i in range(len(w) - 1))

    def layer_slices(self):
        """Yield ``(weight_slice, bias_slice, (n_out, n_in))`` per layer."""
        off = 0
        w = self.layer_widths
        for i in range(len(w) - 1):
            n_in, n_out = w[i], w[i + 1]
            ws = slice(off, off + n_out * n_in)
            off += n_out * n_in
            bs = slice(off, off + n_out)
            off += n_out
            yield ws, bs, (n_out, n_in)


def init_params(arch, rng_seed):
    """Weights ~ N(0, 1/fan_in), biases zero; deterministic in ``rng_seed``."""
    rng = np.random.default_rng(rng_seed)
    theta = np.zeros(arch.n_params)
    for ws, _, (n_out, n_in) in arch.layer_slices():
        theta[ws] = rng.standard_normal(n_out * n_in) / np.sqrt(n_in)
    return theta


def _as_batch(arch, x):
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.ndim != 2 or X.shape[1] != arch.input_dim:
        raise ValueError(
            f"input has shape {np.shape(x)}, expected last dimension {arch.input_dim}"
        )
    return np.ascontiguousarray(X), single


def _check_theta(arch, theta):
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    if theta.shape != (arch.n_params,):
        raise ValueError(f"parameter vector has length {theta.size}, expected {arch.n_params}")
    return theta


def forward_basis(arch, theta, x):
    """Evaluate the basis map at one input (1-D) or a batch of inputs (2-D)."""
    theta = _check_theta(arch, theta)
    X, single = _as_batch(arch, x)
    phi = mlp_forward(theta, arch.layer_widths, arch.act_code, X)[-1]
    return phi[0] if single else phi


def backward(arch, theta, x, cotangent):
    """Return ``(grad_theta, grad_input)`` of ``cotangent . phi(x)``.

    For a batch, ``grad_theta`` is summed over rows and ``grad_input`` has one
    row per input.
    """
    theta = _check_theta(arch, theta)
    X, single = _as_batch(arch, x)
    G = np.atleast_2d(np.asarray(cotangent, dtype=np.float64))
    if G.shape != (X.shape[0], arch.basis_dim):
        raise ValueError(
            f"cotangent has shape {np.shape(cotangent)}, expected basis dimension {arch.basis_dim}"
        )
    acts = mlp_forward(theta, arch.layer_widths, arch.act_code, X)
    g_theta, g_x = mlp_backward(theta, arch.layer_widths, arch.act_code, acts, np.ascontiguousarray(G))
    return g_theta, (g_x[0] if single else g_x)
