"""Differentiable parametric functions for the critic and the actor.

Three architectures cover every experiment:

* :class:`Mlp` - tanh multilayer perceptron with optional input scaling,
  output scaling and bounded-output squashing (for actors);
* :class:`QuadraticValue` - ``V(x) = x^T P x (+ q^T x + c)``, the exact
  representation class for the linear-quadratic suite;
* :class:`LinearPolicy` - ``u = W x (+ b)``.

All expose a flat parameter vector, batched forward evaluation, and exact
reverse-mode gradients w.r.t. parameters and inputs given an upstream
weighting. :func:`fd_gradient` provides the central-difference oracle the
test-suite holds the analytic gradients against.
"""

from __future__ import annotations

import struct

import numpy as np

from .numkit import RngStream

__all__ = [
    "GradientError",
    "ParametricFn",
    "Mlp",
    "QuadraticValue",
    "LinearPolicy",
    "SgdOptimizer",
    "sgd_step",
    "fd_gradient",
    "save_params",
    "load_params",
]

CHECKPOINT_MAGIC = b"MXRL"
CHECKPOINT_VERSION = 1


class GradientError(ArithmeticError):
    """A gradient or update contained non-finite entries."""


class ParametricFn:
    """Interface shared by all approximators."""

    input_dim: int
    output_dim: int

    @property
    def params(self) -> np.ndarray:
        """Flat parameter vector (copy)."""
        return self._params.copy()

    @property
    def n_params(self) -> int:
        return self._params.size

    def set_params(self, params: np.ndarray) -> None:
        params = np.asarray(params, dtype=float)
        if params.shape != self._params.shape:
            raise ValueError(
                f"expected {self._params.size} parameters, got {params.size}"
            )
        self._params = params.copy()
        self._rebuild_views()

    def copy(self):
        import copy as _copy

        dup = _copy.copy(self)
        dup.set_params(self._params)
        return dup

    def _rebuild_views(self) -> None:
        pass

    def forward(self, X: np.ndarray) -> np.ndarray:
        """Batched evaluation, (B, input_dim) -> (B, output_dim)."""
        raise NotImplementedError

    def forward_one(self, x: np.ndarray) -> np.ndarray:
        return self.forward(np.asarray(x, dtype=float)[None, :])[0]

    def grad_params(self, X: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """Gradient of ``sum_b upstream_b . forward(X)_b`` w.r.t. parameters."""
        raise NotImplementedError

    def grad_input(self, X: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """Gradient of the same weighted sum w.r.t. each input row."""
        raise NotImplementedError

    def _check_input(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ValueError(
                f"expected input of shape (B, {self.input_dim}), got {X.shape}"
            )
        return X


class Mlp(ParametricFn):
    """Tanh network, optionally squashing its output into a box.

    ``layer_sizes`` runs input -> hidden... -> output. ``input_scale``
    multiplies inputs coordinate-wise (conditioning for heterogeneous state
    units), ``output_scale`` multiplies the raw output (lets a unit-scale
    network represent large values), and ``(squash_lo, squash_hi)`` map the
    scaled output through an affine tanh into the given box.
    """

    def __init__(
        self,
        layer_sizes,
        init_rng: RngStream | None = None,
        input_scale=None,
        output_scale: float = 1.0,
        squash_lo=None,
        squash_hi=None,
    ):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.layer_sizes = sizes
        self.input_dim = sizes[0]
        self.output_dim = sizes[-1]
        self.input_scale = (
            None if input_scale is None else np.asarray(input_scale, dtype=float)
        )
        self.output_scale = float(output_scale)
        if (squash_lo is None) != (squash_hi is None):
            raise ValueError("squash bounds must be given together")
        self.squash_lo = None if squash_lo is None else np.asarray(squash_lo, float)
        self.squash_hi = None if squash_hi is None else np.asarray(squash_hi, float)

        count = sum(
            sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(len(sizes) - 1)
        )
        self._params = np.zeros(count)
        self._rebuild_views()
        if init_rng is not None:
            self.initialize(init_rng)

    def _buf(self, key, shape) -> np.ndarray:
        # batched evaluation reuses per-shape scratch buffers: fresh large
        # temporaries every call dominate the runtime on hot paths
        buf = self._workspace.get(key)
        if buf is None or buf.shape != shape:
            buf = np.empty(shape)
            self._workspace[key] = buf
        return buf

    def initialize(self, rng: RngStream) -> None:
        """Seeded uniform fan-in init: W ~ U(+-1/sqrt(fan_in)), b = 0."""
        for W, b in self._layers:
            bound = 1.0 / np.sqrt(W.shape[0])
            W[...] = rng.uniform(-bound, bound, W.shape)
            b[...] = 0.0

    def _rebuild_views(self) -> None:
        self._layers = []
        self._workspace = {}
        offset = 0
        sizes = self.layer_sizes
        for i in range(len(sizes) - 1):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            W = self._params[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
            offset += fan_in * fan_out
            b = self._params[offset : offset + fan_out]
            offset += fan_out
            self._layers.append((W, b))

    def _forward_cached(self, X: np.ndarray):
        """Evaluate into reusable buffers; activations stay valid until the
        next call on this instance, so callers must consume them first."""
        X = self._check_input(X)
        nb = X.shape[0]
        if self.input_scale is None:
            h = X
        else:
            h = self._buf(("x",), X.shape)
            np.multiply(X, self.input_scale, out=h)
        acts = [h]
        for i, (W, b) in enumerate(self._layers[:-1]):
            z = self._buf(("h", i), (nb, W.shape[1]))
            np.matmul(h, W, out=z)
            z += b
            np.tanh(z, out=z)
            acts.append(z)
            h = z
        W, b = self._layers[-1]
        raw = self._buf(("h", len(self._layers) - 1), (nb, W.shape[1]))
        np.matmul(h, W, out=raw)
        raw += b
        if self.output_scale != 1.0:
            raw *= self.output_scale
        if self.squash_lo is None:
            return raw, acts, None
        t = self._buf(("sq",), raw.shape)
        np.tanh(raw, out=t)
        out = self._buf(("out",), raw.shape)
        np.multiply(t + 1.0, 0.5 * (self.squash_hi - self.squash_lo), out=out)
        out += self.squash_lo
        return out, acts, t

    def forward(self, X: np.ndarray) -> np.ndarray:
        return self._forward_cached(X)[0].copy()

    def _backward(self, X, upstream, want_params: bool, want_input: bool):
        _, acts, squash_t = self._forward_cached(X)
        up = np.asarray(upstream, dtype=float)
        if up.ndim == 1:
            up = up[:, None]
        nb = up.shape[0]
        G = self._buf(("g", len(self._layers)), up.shape)
        np.copyto(G, up)
        if squash_t is not None:
            np.square(squash_t, out=squash_t)
            np.subtract(1.0, squash_t, out=squash_t)
            squash_t *= 0.5 * (self.squash_hi - self.squash_lo)
            np.multiply(G, squash_t, out=G)
        if self.output_scale != 1.0:
            G *= self.output_scale

        grads = []
        for i in range(len(self._layers) - 1, -1, -1):
            W, _ = self._layers[i]
            if want_params:
                grads.append((acts[i].T @ G, G.sum(axis=0)))
            if i == 0 and not want_input:
                break
            G_prev = self._buf(("g", i), (nb, W.shape[0]))
            np.matmul(G, W.T, out=G_prev)
            G = G_prev
            if i > 0:
                # tanh derivative, consuming the activation buffer
                a = acts[i]
                np.square(a, out=a)
                np.subtract(1.0, a, out=a)
                np.multiply(G, a, out=G)

        flat = None
        if want_params:
            pieces = []
            for dW, db in reversed(grads):
                pieces.append(dW.ravel())
                pieces.append(db)
            flat = np.concatenate(pieces)
        dX = None
        if want_input:
            dX = G.copy() if self.input_scale is None else G * self.input_scale
        return flat, dX

    def grad_params(self, X, upstream):
        return self._backward(X, upstream, True, False)[0]

    def grad_input(self, X, upstream):
        return self._backward(X, upstream, False, True)[1]


class QuadraticValue(ParametricFn):
    """``V(x) = z^T P z (+ q^T z + c)`` on ``z = input_scale * x``.

    P is symmetric, packed triangularly. The optional coordinate scaling
    conditions gradient descent when state units differ by orders of
    magnitude; with ``input_scale=None`` the form is plain ``x^T P x``.
    """

    def __init__(self, dim: int, linear_terms: bool = True, input_scale=None):
        self.input_dim = int(dim)
        self.output_dim = 1
        self.linear_terms = bool(linear_terms)
        self.input_scale = (
            None if input_scale is None else np.asarray(input_scale, dtype=float)
        )
        self._iu = np.triu_indices(self.input_dim)
        count = self._iu[0].size + (self.input_dim + 1 if linear_terms else 0)
        self._params = np.zeros(count)
        self._rebuild_views()

    def _rebuild_views(self) -> None:
        n = self.input_dim
        k = self._iu[0].size
        packed = self._params[:k]
        P = np.zeros((n, n))
        P[self._iu] = packed
        self._P = P + P.T - np.diag(np.diagonal(P))
        if self.linear_terms:
            self._q = self._params[k : k + n]
            self._c = self._params[k + n]
        else:
            self._q = np.zeros(n)
            self._c = 0.0

    @property
    def matrix(self) -> np.ndarray:
        """Quadratic coefficient in *unscaled* coordinates."""
        if self.input_scale is None:
            return self._P.copy()
        return self._P * np.outer(self.input_scale, self.input_scale)

    def _scaled(self, X):
        return X if self.input_scale is None else X * self.input_scale

    def forward(self, X):
        Z = self._scaled(self._check_input(X))
        vals = ((Z @ self._P) * Z).sum(axis=1) + Z @ self._q + self._c
        return vals[:, None]

    def grad_params(self, X, upstream):
        Z = self._scaled(self._check_input(X))
        g = np.asarray(upstream, dtype=float).reshape(-1)
        Gfull = Z.T @ (g[:, None] * Z)
        M = Gfull + Gfull.T
        np.fill_diagonal(M, np.diagonal(Gfull))
        pieces = [M[self._iu]]
        if self.linear_terms:
            pieces.append(g @ Z)
            pieces.append(np.array([g.sum()]))
        return np.concatenate(pieces)

    def grad_input(self, X, upstream):
        Z = self._scaled(self._check_input(X))
        g = np.asarray(upstream, dtype=float).reshape(-1)
        dZ = g[:, None] * (2.0 * Z @ self._P + self._q)
        return dZ if self.input_scale is None else dZ * self.input_scale

    def project_psd(self, floor: float = 0.0) -> None:
        """Clamp the quadratic form's eigenvalues at ``floor``.

        Value functions of nonnegative stage costs are nonnegative; without
        this constraint semi-gradient updates can let weakly-identified
        curvature directions drift negative and then diverge.
        """
        w, V = np.linalg.eigh(self._P)
        if w.min() >= floor:
            return
        P = (V * np.maximum(w, floor)) @ V.T
        k = self._iu[0].size
        self._params[:k] = P[self._iu]
        self._rebuild_views()


class LinearPolicy(ParametricFn):
    """Affine policy ``u = W x + b`` (``b`` optional)."""

    def __init__(self, state_dim: int, action_dim: int, bias: bool = True):
        self.input_dim = int(state_dim)
        self.output_dim = int(action_dim)
        self.bias = bool(bias)
        count = state_dim * action_dim + (action_dim if bias else 0)
        self._params = np.zeros(count)
        self._rebuild_views()

    def _rebuild_views(self) -> None:
        n, m = self.input_dim, self.output_dim
        self._W = self._params[: n * m].reshape(m, n)
        self._b = self._params[n * m :] if self.bias else np.zeros(m)

    @property
    def gain(self) -> np.ndarray:
        """Gain matrix of shape (action_dim, state_dim): ``u = gain @ x + b``."""
        return self._W.copy()

    @property
    def offset(self) -> np.ndarray:
        return self._b.copy()

    def forward(self, X):
        X = self._check_input(X)
        return X @ self._W.T + self._b

    def grad_params(self, X, upstream):
        X = self._check_input(X)
        G = np.asarray(upstream, dtype=float)
        dW = G.T @ X
        pieces = [dW.ravel()]
        if self.bias:
            pieces.append(G.sum(axis=0))
        return np.concatenate(pieces)

    def grad_input(self, X, upstream):
        G = np.asarray(upstream, dtype=float)
        return G @ self._W


def sgd_step(params: np.ndarray, gradient: np.ndarray, rate: float) -> np.ndarray:
    """One plain gradient-descent step; rejects non-finite gradients."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    gradient = np.asarray(gradient, dtype=float)
    if not np.all(np.isfinite(gradient)):
        raise GradientError("gradient contains non-finite entries")
    return np.asarray(params, dtype=float) - rate * gradient


class SgdOptimizer:
    """Gradient descent with optional momentum and gradient-norm clipping.

    Updates a ParametricFn in place. ``clip_norm > 0`` rescales any gradient
    whose L2 norm exceeds it - a cap on the damage one high-leverage sample
    can do, not a tuning instrument.
    """

    def __init__(self, rate: float, momentum: float = 0.0, clip_norm: float = 0.0):
        if rate <= 0:
            raise ValueError("rate must be positive")
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        self.rate = float(rate)
        self.momentum = float(momentum)
        self.clip_norm = float(clip_norm)
        self._velocity = None

    def step(self, fn: ParametricFn, gradient: np.ndarray) -> None:
        gradient = np.asarray(gradient, dtype=float)
        if not np.all(np.isfinite(gradient)):
            raise GradientError("gradient contains non-finite entries")
        if self.clip_norm > 0.0:
            norm = float(np.linalg.norm(gradient))
            if norm > self.clip_norm:
                gradient = gradient * (self.clip_norm / norm)
        if self.momentum > 0.0:
            if self._velocity is None:
                self._velocity = np.zeros_like(gradient)
            self._velocity = self.momentum * self._velocity + gradient
            update = self._velocity
        else:
            update = gradient
        fn.set_params(fn._params - self.rate * update)

    def halve_rate(self, floor: float = 1e-12) -> None:
        self.rate = max(0.5 * self.rate, floor)
        self._velocity = None


def fd_gradient(scalar_fn, params: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of ``scalar_fn(params)``; the test oracle."""
    params = np.asarray(params, dtype=float)
    grad = np.empty_like(params)
    for i in range(params.size):
        hi = params.copy()
        lo = params.copy()
        hi[i] += step
        lo[i] -= step
        grad[i] = (scalar_fn(hi) - scalar_fn(lo)) / (2.0 * step)
    return grad


def save_params(path, params: np.ndarray) -> None:
    """Write a checkpoint: magic, u32 version, u64 count, little-endian f64s."""
    params = np.asarray(params, dtype=float).ravel()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", params.size))
        fh.write(params.astype("<f8").tobytes())


def load_params(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a parameter checkpoint (magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (count,) = struct.unpack("<Q", fh.read(8))
        data = fh.read()
    params = np.frombuffer(data, dtype="<f8")
    if params.size != count:
        raise ValueError(
            f"checkpoint truncated: header says {count} values, found {params.size}"
        )
    return params.astype(float)
