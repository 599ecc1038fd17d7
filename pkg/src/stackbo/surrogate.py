"""Stacked multi-fidelity network surrogate and its variational training.

Fidelity ``m`` is modelled as ``f_m(x) = w_m . phi_m([x; f_{m-1}(x)])`` (the
first fidelity sees ``x`` only). The output weights ``w_m`` carry a Gaussian
variational posterior ``N(mu_m, L_m L_m^T)`` against a standard normal prior;
network weights and noise variances are point estimates.

Internally inputs are mapped to the unit box and outputs are z-scored per
fidelity; the model stores those affine maps and the public functions take
and return raw units. Chained values ``f_{m-1}`` fed to the next network are
in the z-scored units of fidelity ``m - 1``.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np

from stackbo._backend import mlp_backward, mlp_forward
from stackbo.nn import NetworkArchitecture, init_params
from stackbo.optim import OptimizationError, adam_minimize

FORMAT_VERSION = 1
NOISE_FLOOR = 1e-8
LOG_NOISE_FLOOR = float(np.log(NOISE_FLOOR))
INIT_NOISE = 1e-2
INIT_L_SCALE = 0.1
_LOG_2PI = float(np.log(2 * np.pi))


class TrainingDivergence(RuntimeError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


@dataclass(frozen=True)
class FidelityLayer:
    arch: NetworkArchitecture
    theta: np.ndarray
    mu: np.ndarray
    L: np.ndarray
    log_sigma2: float = float(np.log(INIT_NOISE))

    @property
    def basis_dim(self):
        return self.arch.basis_dim

    @property
    def sigma2(self):
        return float(np.exp(max(self.log_sigma2, LOG_NOISE_FLOOR)))


@dataclass(frozen=True)
class MultiFidelityModel:
    layers: tuple
    input_dim: int
    x_offset: np.ndarray = None
    x_scale: np.ndarray = None
    y_offset: np.ndarray = None
    y_scale: np.ndarray = None

    def __post_init__(self):
        layers = tuple(self.layers)
        d = int(self.input_dim)
        if not layers:
            raise ValueError("a model needs at least one fidelity layer")
        for m, layer in enumerate(layers):
            want = d if m == 0 else d + 1
            if layer.arch.input_dim != want:
                raise ValueError(
                    f"layer {m + 1} takes {layer.arch.input_dim} inputs, expected {want}"
                )
        M = len(layers)
        defaults = {
            "x_offset": np.zeros(d),
            "x_scale": np.ones(d),
            "y_offset": np.zeros(M),
            "y_scale": np.ones(M),
        }
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "input_dim", d)
        for name, default in defaults.items():
            val = getattr(self, name)
            val = default if val is None else np.asarray(val, dtype=np.float64).copy()
            if val.shape != default.shape:
                raise ValueError(f"{name} has shape {val.shape}, expected {default.shape}")
            object.__setattr__(self, name, val)

    @property
    def M(self):
        return len(self.layers)

    def scale_x(self, x):
        return (np.asarray(x, dtype=np.float64) - self.x_offset) / self.x_scale

    def scale_f(self, f, m):
        """Raw value of fidelity ``m`` (1-based) to internal units."""
        return (np.asarray(f, dtype=np.float64) - self.y_offset[m - 1]) / self.y_scale[m - 1]

    def unscale_f(self, f, m):
        return np.asarray(f, dtype=np.float64) * self.y_scale[m - 1] + self.y_offset[m - 1]


@dataclass
class Dataset:
    """Observations per fidelity: ``X[m-1]`` is ``(N_m, d)``, ``y[m-1]`` is ``(N_m,)``."""

    X: list
    y: list

    @classmethod
    def empty(cls, M, d):
        return cls([np.zeros((0, d)) for _ in range(M)], [np.zeros(0) for _ in range(M)])

    @property
    def M(self):
        return len(self.X)

    @property
    def counts(self):
        return tuple(len(y) for y in self.y)

    def add(self, m, x, y):
        self.X[m - 1] = np.vstack([self.X[m - 1], np.asarray(x, dtype=np.float64)[None, :]])
        self.y[m - 1] = np.append(self.y[m - 1], float(y))

    def copy(self):
        return Dataset([a.copy() for a in self.X], [a.copy() for a in self.y])


@dataclass(frozen=True)
class WeightSample:
    weights: tuple = field(default_factory=tuple)


def build_model(domain, archs, rng_seed, activation=None):
    """Fresh model over ``domain`` with one architecture per fidelity.

    ``archs`` holds ``NetworkArchitecture`` objects whose input widths already
    account for the appended lower-fidelity output.
    """
    rng = np.random.default_rng(rng_seed)
    layers = []
    for arch in archs:
        if activation is not None:
            arch = replace(arch, activation=activation)
        theta = init_params(arch, int(rng.integers(2**63)))
        layers.append(_fresh_variational(arch, theta, rng))
    return MultiFidelityModel(
        layers=tuple(layers),
        input_dim=domain.dim,
        x_offset=domain.lower,
        x_scale=domain.width,
    )


def _fresh_variational(arch, theta, rng):
    D = arch.basis_dim
    mu = rng.standard_normal(D) / np.sqrt(D)
    L = INIT_L_SCALE * np.eye(D)
    return FidelityLayer(arch, np.asarray(theta, dtype=np.float64), mu, L, float(np.log(INIT_NOISE)))


def random_model(d, M, rng_seed, depth=2, width=8, activation="tanh", l_scale=0.3):
    """Untrained model on the unit box with random variational parameters.

    ``L`` gets a random lower triangle and a positive diagonal; useful for
    property checks that must hold for arbitrary models.
    """
    rng = np.random.default_rng(rng_seed)
    archs = [NetworkArchitecture.from_depth_width(d if m == 0 else d + 1, depth, width, activation)
             for m in range(M)]
    layers = []
    for arch in archs:
        D = arch.basis_dim
        theta = init_params(arch, int(rng.integers(2**63)))
        mu = rng.standard_normal(D)
        L = np.tril(l_scale * rng.standard_normal((D, D)) / np.sqrt(D), -1)
        L[np.diag_indices(D)] = l_scale * rng.uniform(0.2, 1.0, D)
        layers.append(FidelityLayer(arch, theta, mu, L, float(np.log(rng.uniform(1e-3, 1e-1)))))
    return MultiFidelityModel(layers=tuple(layers), input_dim=d)


def reset_variational(model, rng_seed):
    """Re-draw the variational parameters and noise, keeping network weights."""
    rng = np.random.default_rng(rng_seed)
    layers = tuple(_fresh_variational(l.arch, l.theta.copy(), rng) for l in model.layers)
    return replace(model, layers=layers)


def sample_weights(model, rng_seed):
    """One posterior draw ``mu_m + L_m eps`` per fidelity."""
    rng = np.random.default_rng(rng_seed)
    return WeightSample(
        tuple(l.mu + l.L @ rng.standard_normal(l.basis_dim) for l in model.layers)
    )


def _layer_input(Xn, f_prev):
    if f_prev is None:
        return Xn
    return np.concatenate([Xn, f_prev[:, None]], axis=1)


def chain_values(model, weights, Xn, m):
    """Internal-unit outputs ``f_1..f_m`` at scaled inputs ``Xn``; shape ``(N, m)``."""
    out = np.empty((Xn.shape[0], m))
    f = None
    for j in range(m):
        layer = model.layers[j]
        acts = mlp_forward(layer.theta, layer.arch.layer_widths, layer.arch.act_code, _layer_input(Xn, f))
        f = acts[-1] @ weights[j]
        out[:, j] = f
    return out


def chain_value_and_grad(model, weights, xn, m):
    """Internal-unit ``f_m`` at one scaled input and its gradient w.r.t. ``xn``."""
    Xn = xn[None, :]
    f = None
    tapes = []
    for j in range(m):
        layer = model.layers[j]
        widths, code = layer.arch.layer_widths, layer.arch.act_code
        acts = mlp_forward(layer.theta, widths, code, _layer_input(Xn, f))
        tapes.append(acts)
        f = acts[-1] @ weights[j]
    value = float(f[0])
    gx = np.zeros(xn.size)
    cf = 1.0
    for j in range(m - 1, -1, -1):
        layer = model.layers[j]
        _, g_in = mlp_backward(layer.theta, layer.arch.layer_widths, layer.arch.act_code,
                               tapes[j], cf * weights[j][None, :])
        gx += g_in[0, : xn.size]
        if j > 0:
            cf = g_in[0, xn.size]
    return value, gx


def deterministic_output(model, w, x, m):
    """Noiseless ``f_m(x)`` in raw units for fixed output weights ``w``."""
    if not 1 <= m <= model.M:
        raise ValueError(f"fidelity must be in 1..{model.M}, got {m}")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    Xn = np.atleast_2d(model.scale_x(x))
    vals = chain_values(model, w.weights, Xn, m)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("non-finite intermediate output in the fidelity chain")
    out = model.unscale_f(vals[:, m - 1], m)
    return float(out[0]) if single else out


def kl_to_prior(mu, L):
    """KL divergence from ``N(mu, L L^T)`` to ``N(0, I)``."""
    mu = np.asarray(mu, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    diag = np.diag(L)
    if np.any(diag <= 0):
        raise ValueError("Cholesky factor must have a strictly positive diagonal")
    return 0.5 * (np.sum(L * L) + mu @ mu - mu.size - 2.0 * np.sum(np.log(diag)))


class _Stacked:
    """Scaled training data, sorted by fidelity, so fidelities >= j form a suffix."""

    def __init__(self, model, data):
        if data.M != model.M:
            raise ValueError(f"dataset has {data.M} fidelities, model has {model.M}")
        self.counts = data.counts
        self.Xn = np.concatenate([model.scale_x(np.reshape(X, (-1, model.input_dim))) for X in data.X])
        self.yn = [model.scale_f(y, m + 1) for m, y in enumerate(data.y)]
        self.starts = np.concatenate([[0], np.cumsum(self.counts)]).astype(int)


def _elbo_core(model, stacked, eps):
    """ELBO estimate with one set of standard-normal draws ``eps`` (list per layer).

    Returns ``(value, grads)`` with per-layer dicts of gradients w.r.t.
    ``theta``, ``mu``, ``L`` (lower triangle) and ``log_sigma2``.
    """
    M = model.M
    d = model.input_dim
    starts = stacked.starts
    W = [l.mu + l.L @ e for l, e in zip(model.layers, eps)]
    tapes = [None] * M
    fvals = [None] * M
    f = None
    value = 0.0
    for j, layer in enumerate(model.layers):
        Xj = stacked.Xn[starts[j]:]
        if Xj.shape[0] == 0:
            break
        if f is not None:
            f = f[starts[j] - starts[j - 1]:]
        acts = mlp_forward(layer.theta, layer.arch.layer_widths, layer.arch.act_code, _layer_input(Xj, f))
        tapes[j] = acts
        f = acts[-1] @ W[j]
        fvals[j] = f

    grads = []
    for layer in model.layers:
        grads.append({
            "theta": np.zeros_like(layer.theta),
            "mu": -layer.mu.copy(),
            "L": -layer.L + np.diag(1.0 / np.diag(layer.L)),
            "log_sigma2": 0.0,
        })
        value -= kl_to_prior(layer.mu, layer.L)

    carry = None
    for j in range(M - 1, -1, -1):
        if tapes[j] is None:
            continue
        layer = model.layers[j]
        n_j = stacked.counts[j]
        n_rows = fvals[j].size
        c = np.zeros(n_rows)
        if n_j:
            s2 = layer.sigma2
            r = stacked.yn[j] - fvals[j][:n_j]
            value += -0.5 * n_j * (_LOG_2PI + np.log(s2)) - 0.5 * (r @ r) / s2
            c[:n_j] = r / s2
            if layer.log_sigma2 > LOG_NOISE_FLOOR:
                grads[j]["log_sigma2"] = -0.5 * n_j + 0.5 * (r @ r) / s2
        if carry is not None:
            c[n_j:] += carry
        phi = tapes[j][-1]
        gw = phi.T @ c
        grads[j]["mu"] += gw
        grads[j]["L"] += np.tril(np.outer(gw, eps[j]))
        g_theta, g_in = mlp_backward(layer.theta, layer.arch.layer_widths, layer.arch.act_code,
                                     tapes[j], np.outer(c, W[j]))
        grads[j]["theta"] += g_theta
        carry = g_in[:, d] if j > 0 else None
    return value, grads


def _draw_eps(model, rng):
    return [rng.standard_normal(l.basis_dim) for l in model.layers]


def elbo_estimate(model, data, eps_seed):
    """Single reparameterized-sample ELBO estimate and its gradients.

    The likelihood is evaluated in the model's internal (scaled) units.
    """
    stacked = _Stacked(model, data)
    eps = _draw_eps(model, np.random.default_rng(eps_seed))
    return _elbo_core(model, stacked, eps)


# -- flat unconstrained parameterization used by the trainer ------------------


def _layer_size(layer):
    D = layer.basis_dim
    return layer.arch.n_params + D + D * (D - 1) // 2 + D + 1


def pack(model):
    """Unconstrained vector: per layer theta, mu, strict-lower L, log diag(L), log sigma^2."""
    parts = []
    for l in model.layers:
        il = np.tril_indices(l.basis_dim, -1)
        parts += [l.theta, l.mu, l.L[il], np.log(np.diag(l.L)), [l.log_sigma2]]
    return np.concatenate([np.asarray(p, dtype=np.float64).ravel() for p in parts])


def unpack(model, vec):
    layers = []
    off = 0
    for l in model.layers:
        D = l.basis_dim
        n_th = l.arch.n_params
        theta = vec[off:off + n_th]; off += n_th
        mu = vec[off:off + D]; off += D
        n_lo = D * (D - 1) // 2
        L = np.zeros((D, D))
        L[np.tril_indices(D, -1)] = vec[off:off + n_lo]; off += n_lo
        L[np.diag_indices(D)] = np.exp(vec[off:off + D]); off += D
        log_s2 = float(vec[off]); off += 1
        layers.append(FidelityLayer(l.arch, theta.copy(), mu.copy(), L, log_s2))
    return replace(model, layers=tuple(layers))


def _pack_grads(model, grads):
    parts = []
    for l, g in zip(model.layers, grads):
        D = l.basis_dim
        il = np.tril_indices(D, -1)
        parts += [g["theta"], g["mu"], g["L"][il], np.diag(g["L"]) * np.diag(l.L), [g["log_sigma2"]]]
    return np.concatenate([np.asarray(p, dtype=np.float64).ravel() for p in parts])


def fit_output_scaling(model, data):
    """Set per-fidelity z-scoring from the data.

    A fidelity with fewer than two observations borrows the statistics of the
    nearest fidelity that has them.
    """
    M = model.M
    stats = [None] * M
    for m in range(M):
        y = np.asarray(data.y[m])
        if y.size >= 2:
            stats[m] = (float(y.mean()), float(max(y.std(), 1e-8)))
    for m in range(M):
        if stats[m] is None:
            donors = [k for k in range(M) if stats[k] is not None]
            if donors:
                stats[m] = stats[min(donors, key=lambda k: (abs(k - m), -k))]
            elif np.size(data.y[m]):
                stats[m] = (float(np.mean(data.y[m])), 1.0)
            else:
                stats[m] = (0.0, 1.0)
    off = np.array([s[0] for s in stats])
    sc = np.array([s[1] for s in stats])
    return replace(model, y_offset=off, y_scale=sc)


def train(model, data, adam_cfg, n_mc=1, rng_seed=0, rescale=True, trace=None):
    """Ascend the Monte-Carlo ELBO with ADAM for ``adam_cfg.max_epochs`` epochs.

    Returns the final iterate. If ``trace`` is a list, the per-epoch ELBO
    estimates are appended to it.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    if rescale:
        model = fit_output_scaling(model, data)
    stacked = _Stacked(model, data)
    rng = np.random.default_rng(rng_seed)
    epoch = [0]

    def objective(vec):
        current = unpack(model, vec)
        total = 0.0
        gtot = None
        for _ in range(n_mc):
            val, grads = _elbo_core(current, stacked, _draw_eps(current, rng))
            g = _pack_grads(current, grads)
            total += val
            gtot = g if gtot is None else gtot + g
        total /= n_mc
        if trace is not None:
            trace.append(total)
        epoch[0] += 1
        return -total, -gtot / n_mc

    try:
        vec, _ = adam_minimize(objective, pack(model), adam_cfg, keep_best=False)
    except OptimizationError as exc:
        raise TrainingDivergence(f"ELBO diverged at epoch {exc.iteration}", exc.iteration) from exc
    if not np.all(np.isfinite(vec)):
        raise TrainingDivergence(f"non-finite parameters after epoch {epoch[0]}", epoch[0])
    return unpack(model, vec)


# -- serialization ------------------------------------------------------------


def model_to_dict(model):
    return {
        "format_version": FORMAT_VERSION,
        "input_dim": model.input_dim,
        "x_offset": model.x_offset.tolist(),
        "x_scale": model.x_scale.tolist(),
        "y_offset": model.y_offset.tolist(),
        "y_scale": model.y_scale.tolist(),
        "layers": [
            {
                "layer_widths": list(l.arch.layer_widths),
                "activation": l.arch.activation,
                "theta": l.theta.tolist(),
                "mu": l.mu.tolist(),
                "L": l.L.tolist(),
                "log_sigma2": l.log_sigma2,
            }
            for l in model.layers
        ],
    }


def model_from_dict(obj):
    version = obj.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    layers = tuple(
        FidelityLayer(
            NetworkArchitecture(tuple(l["layer_widths"]), l["activation"]),
            np.array(l["theta"], dtype=np.float64),
            np.array(l["mu"], dtype=np.float64),
            np.array(l["L"], dtype=np.float64).reshape(len(l["mu"]), len(l["mu"])),
            float(l["log_sigma2"]),
        )
        for l in obj["layers"]
    )
    return MultiFidelityModel(
        layers=layers,
        input_dim=obj["input_dim"],
        x_offset=obj["x_offset"],
        x_scale=obj["x_scale"],
        y_offset=obj["y_offset"],
        y_scale=obj["y_scale"],
    )


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))
