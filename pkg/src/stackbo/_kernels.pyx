# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled MLP kernels.

Same contract and parameter layout as ``_kernels_py``. Matrix products go
through the BLAS exported by scipy; activations and their derivatives are
fused loops, so a full forward or backward pass costs one Python call.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

cdef enum:
    TANH = 0
    # above this many activations numpy's vectorized tanh beats the scalar loop
    _SIMD_TANH_MIN = 512


cdef inline double _tanh(double v) noexcept nogil:
    # exp-based form; faster than libm tanh and accurate to a few ulp
    cdef double t
    if v >= 0.0:
        t = exp(-2.0 * v)
        return (1.0 - t) / (1.0 + t)
    t = exp(2.0 * v)
    return (t - 1.0) / (1.0 + t)


cdef inline void _gemm(char ta, char tb, int m, int n, int k,
                       double *a, int lda, double *b, int ldb,
                       double beta, double *c, int ldc) noexcept nogil:
    cdef double one = 1.0
    dgemm(&ta, &tb, &m, &n, &k, &one, a, &lda, b, &ldb, &beta, c, &ldc)


def mlp_forward(const double[::1] theta, widths, int act, X):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] h_in = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] h_out
    cdef int n = h_in.shape[0]
    cdef int n_layers = len(widths) - 1
    cdef int i, r, c, n_in, n_out
    cdef Py_ssize_t off = 0
    cdef double *z
    cdef const double *bias
    cdef double v
    acts = [h_in]
    for i in range(n_layers):
        n_in = widths[i]
        n_out = widths[i + 1]
        h_out = np.empty((n, n_out))
        z = <double *> h_out.data
        if n > 0:
            # row-major Z (n x out) == col-major Z^T = W H^T
            _gemm(b'T', b'N', n_out, n, n_in,
                  <double *> &theta[off], n_in,
                  <double *> h_in.data, n_in,
                  0.0, z, n_out)
        off += n_out * n_in
        bias = &theta[off]
        off += n_out
        if act == TANH and n * n_out >= _SIMD_TANH_MIN:
            with nogil:
                for r in range(n):
                    for c in range(n_out):
                        z[r * n_out + c] += bias[c]
            np.tanh(h_out, out=h_out)
        else:
            with nogil:
                for r in range(n):
                    for c in range(n_out):
                        v = z[r * n_out + c] + bias[c]
                        if act == TANH:
                            z[r * n_out + c] = _tanh(v)
                        else:
                            z[r * n_out + c] = v if v > 0.0 else 0.0
        acts.append(h_out)
        h_in = h_out
    return acts


def mlp_backward(const double[::1] theta, widths, int act, acts, G):
    cdef int n_layers = len(widths) - 1
    cdef Py_ssize_t total = 0
    cdef int i, r, c, n_in, n_out, n
    cdef Py_ssize_t o
    offsets = []
    for i in range(n_layers):
        offsets.append(total)
        total += widths[i + 1] * widths[i] + widths[i + 1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] grad = np.empty(total)
    cdef double *g = <double *> grad.data
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] delta = np.ascontiguousarray(G, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] dz
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] h_out
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] h_in
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] new_delta
    cdef double *pdz
    cdef double *ph
    cdef double *pd
    cdef double hv
    n = delta.shape[0]
    for i in range(n_layers - 1, -1, -1):
        n_in = widths[i]
        n_out = widths[i + 1]
        h_out = acts[i + 1]
        h_in = np.ascontiguousarray(acts[i], dtype=np.float64)
        dz = np.empty((n, n_out))
        pdz = <double *> dz.data
        ph = <double *> h_out.data
        pd = <double *> delta.data
        o = offsets[i]
        with nogil:
            for r in range(n * n_out):
                hv = ph[r]
                if act == TANH:
                    pdz[r] = pd[r] * (1.0 - hv * hv)
                else:
                    pdz[r] = pd[r] if hv > 0.0 else 0.0
            for c in range(n_out):
                g[o + n_out * n_in + c] = 0.0
            for r in range(n):
                for c in range(n_out):
                    g[o + n_out * n_in + c] += pdz[r * n_out + c]
        if n > 0:
            # row-major gW (out x in) == col-major gW^T = H_in^T dZ
            _gemm(b'N', b'T', n_in, n_out, n,
                  <double *> h_in.data, n_in, pdz, n_out,
                  0.0, &g[o], n_in)
        else:
            grad[o:o + n_out * n_in] = 0.0
        new_delta = np.empty((n, n_in))
        if n > 0:
            # row-major dZ W (n x in) == col-major W^T dZ^T
            _gemm(b'N', b'N', n_in, n, n_out,
                  <double *> &theta[o], n_in, pdz, n_out,
                  0.0, <double *> new_delta.data, n_in)
        delta = new_delta
    return grad, delta
