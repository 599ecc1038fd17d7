import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stackbo import _backend
from stackbo.nn import NetworkArchitecture, backward, forward_basis, init_params


def _reference_forward(arch, theta, x):
    """Straight-line re-evaluation of the layer recurrence for one input."""
    act = np.tanh if arch.activation == "tanh" else (lambda z: np.maximum(z, 0.0))
    h = np.asarray(x, dtype=np.float64)
    off = 0
    w = arch.layer_widths
    for i in range(len(w) - 1):
        n_in, n_out = w[i], w[i + 1]
        W = theta[off:off + n_out * n_in].reshape(n_out, n_in)
        off += n_out * n_in
        b = theta[off:off + n_out]
        off += n_out
        h = act(W @ h + b)
    return h


def test_architecture_validation():
    with pytest.raises(ValueError):
        NetworkArchitecture((3,))
    with pytest.raises(ValueError):
        NetworkArchitecture((3, 0))
    with pytest.raises(ValueError):
        NetworkArchitecture((3, 4), "sigmoid")
    arch = NetworkArchitecture.from_depth_width(4, 3, 40)
    assert arch.layer_widths == (4, 40, 40, 40)
    assert arch.basis_dim == 40
    assert arch.n_params == 4 * 40 + 40 + 2 * (40 * 40 + 40)


def test_init_biases_zero_and_deterministic():
    arch = NetworkArchitecture((1, 1))
    theta = init_params(arch, 3)
    assert theta[1] == 0.0
    arch = NetworkArchitecture((3, 5, 4))
    a, b = init_params(arch, 11), init_params(arch, 11)
    np.testing.assert_array_equal(a, b)
    for _, bs, _ in arch.layer_slices():
        np.testing.assert_array_equal(a[bs], 0.0)


def test_init_weight_variance_matches_fan_in():
    arch = NetworkArchitecture((2, 32, 32))
    slices = list(arch.layer_slices())
    draws = [[] for _ in slices]
    for seed in range(10_000 // 100):
        theta = init_params(arch, 7 * 1000 + seed)
        for i, (ws, _, _) in enumerate(slices):
            draws[i].append(theta[ws])
    for (ws, _, (n_out, n_in)), d in zip(slices, draws):
        var = np.concatenate(d).var()
        assert abs(var * n_in - 1.0) < 0.3


def test_zero_network_and_identity_layer():
    arch = NetworkArchitecture((3, 4, 2), "relu")
    np.testing.assert_array_equal(forward_basis(arch, np.zeros(arch.n_params), [0.3, -1.0, 2.0]), 0.0)
    arch = NetworkArchitecture((3, 3))
    theta = np.concatenate([np.eye(3).ravel(), np.zeros(3)])
    x = np.array([0.2, -1.5, 3.0])
    np.testing.assert_allclose(forward_basis(arch, theta, x), np.tanh(x), rtol=0, atol=1e-15)


@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_forward_matches_reference(activation):
    rng = np.random.default_rng(0)
    arch = NetworkArchitecture((3, 7, 6, 5), activation)
    theta = rng.standard_normal(arch.n_params)
    X = rng.standard_normal((9, 3))
    batch = forward_basis(arch, theta, X)
    for x, row in zip(X, batch):
        np.testing.assert_allclose(row, _reference_forward(arch, theta, x), rtol=0, atol=1e-12)
        np.testing.assert_allclose(forward_basis(arch, theta, x), row, rtol=0, atol=1e-12)


def test_forward_is_bitwise_repeatable():
    rng = np.random.default_rng(1)
    arch = NetworkArchitecture((2, 16, 16))
    theta = rng.standard_normal(arch.n_params)
    X = rng.standard_normal((50, 2))
    np.testing.assert_array_equal(forward_basis(arch, theta, X), forward_basis(arch, theta, X))


def test_shape_errors():
    arch = NetworkArchitecture((3, 4))
    theta = np.zeros(arch.n_params)
    with pytest.raises(ValueError):
        forward_basis(arch, theta, np.zeros(2))
    with pytest.raises(ValueError):
        forward_basis(arch, np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        backward(arch, theta, np.zeros(3), np.zeros(5))


def test_zero_cotangent_gives_zero_gradients():
    rng = np.random.default_rng(2)
    arch = NetworkArchitecture((3, 5, 4))
    theta = rng.standard_normal(arch.n_params)
    gt, gx = backward(arch, theta, rng.standard_normal(3), np.zeros(4))
    np.testing.assert_array_equal(gt, 0.0)
    np.testing.assert_array_equal(gx, 0.0)


def test_linear_layer_input_gradient_is_transpose_action():
    # relu with positive pre-activations behaves as a linear map
    rng = np.random.default_rng(3)
    arch = NetworkArchitecture((3, 4), "relu")
    W = rng.uniform(0.1, 1.0, (4, 3))
    theta = np.concatenate([W.ravel(), np.ones(4)])
    c = rng.standard_normal(4)
    _, gx = backward(arch, theta, np.array([0.5, 0.2, 0.9]), c)
    np.testing.assert_allclose(gx, W.T @ c, rtol=1e-14)


def _fd_check(arch, theta, x, c, h=1e-5):
    gt, gx = backward(arch, theta, x, c)
    f = lambda th, xx: c @ forward_basis(arch, th, xx)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        fd = (f(theta + e, x) - f(theta - e, x)) / (2 * h)
        assert abs(fd - gt[i]) <= 1e-5 * abs(fd) + 1e-8
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fd = (f(theta, x + e) - f(theta, x - e)) / (2 * h)
        assert abs(fd - gx[i]) <= 1e-5 * abs(fd) + 1e-8


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), depth=st.integers(1, 3), width=st.integers(1, 6))
def test_tanh_gradients_match_finite_differences(seed, depth, width):
    rng = np.random.default_rng(seed)
    arch = NetworkArchitecture.from_depth_width(3, depth, width)
    theta = rng.standard_normal(arch.n_params)
    _fd_check(arch, theta, rng.standard_normal(3), rng.standard_normal(width))


def test_batch_gradient_is_sum_of_rows():
    rng = np.random.default_rng(4)
    arch = NetworkArchitecture((2, 6, 3))
    theta = rng.standard_normal(arch.n_params)
    X, C = rng.standard_normal((5, 2)), rng.standard_normal((5, 3))
    gt, gx = backward(arch, theta, X, C)
    parts = [backward(arch, theta, x, c) for x, c in zip(X, C)]
    np.testing.assert_allclose(gt, sum(p[0] for p in parts), rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(gx, np.array([p[1] for p in parts]), rtol=1e-12, atol=1e-14)


def test_relu_subgradient_zero_at_kink():
    # pre-activation exactly 0 for the single unit: output 0 and gradient 0
    arch = NetworkArchitecture((1, 1), "relu")
    theta = np.array([2.0, 0.0])
    gt, gx = backward(arch, theta, np.array([0.0]), np.array([1.0]))
    np.testing.assert_array_equal(gt, 0.0)
    np.testing.assert_array_equal(gx, 0.0)
    gt, gx = backward(arch, theta, np.array([1e-3]), np.array([1.0]))
    np.testing.assert_allclose(gx, [2.0])


@pytest.mark.skipif(_backend.compiled_kernels is None, reason="compiled kernels not built")
@pytest.mark.parametrize("act", [0, 1])
@pytest.mark.parametrize("n", [1, 7, 600])
def test_backends_agree(act, n):
    rng = np.random.default_rng(n)
    widths = (4, 9, 9, 6)
    theta = rng.standard_normal(sum(o * i + o for i, o in zip(widths[:-1], widths[1:])))
    X = rng.standard_normal((n, 4))
    G = rng.standard_normal((n, 6))
    a = _backend.python_kernels.mlp_forward(theta, widths, act, X)
    b = _backend.compiled_kernels.mlp_forward(theta, widths, act, X)
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, rtol=1e-13, atol=1e-14)
    ga = _backend.python_kernels.mlp_backward(theta, widths, act, a, G)
    gb = _backend.compiled_kernels.mlp_backward(theta, widths, act, b, G)
    np.testing.assert_allclose(ga[0], gb[0], rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(ga[1], gb[1], rtol=1e-12, atol=1e-12)


def test_backend_env_override(monkeypatch):
    import importlib

    monkeypatch.setenv("STACKBO_BACKEND", "python")
    mod = importlib.reload(_backend)
    try:
        assert mod.BACKEND == "python"
        assert mod.kernels is mod.python_kernels
    finally:
        monkeypatch.delenv("STACKBO_BACKEND")
        importlib.reload(_backend)


def test_kernel_benchmark_script_runs(capsys):
    import importlib.util
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    mod_spec = importlib.util.spec_from_file_location("bench_kernels", path)
    mod = importlib.util.module_from_spec(mod_spec)
    mod_spec.loader.exec_module(mod)
    mod.main(["--repeat", "1", "--min-time", "0.001"])
    assert "backward" in capsys.readouterr().out
