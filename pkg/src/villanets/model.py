"""Depth-2 net, ridge-regularized squared loss, and its closed-form calculus.

The model is f(x) = a . sigma(W x) with the outer weights a fixed and the
p-by-d matrix W trainable.  The training objective on n pairs (x_i, y_i) is

    mean_i 0.5 * (y_i - f(x_i))^2  +  (lam / 2) * ||W||_F^2

Gradient and Laplacian (trace of the Hessian) are hand-coded closed forms;
finite-difference oracles in the test suite certify them.  The module also
provides the two landscape constants used throughout:

  * ``lambda_c``  - the critical ridge strength 2 * d1_sup * lip * B_x^2 * ||a||^2
    above which the objective has the coercive tail structure the dynamics
    and mixing modules rely on;
  * ``glip_bound`` - a closed-form upper bound on the gradient-Lipschitz
    (smoothness) coefficient, available for bounded activations.

All batched evaluation is single-threaded numpy with a fixed reduction
order, so repeated calls are bitwise-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .activations import Activation


def _readonly(arr: np.ndarray, dtype=np.float64) -> np.ndarray:
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Immutable regression data with certified input/label bounds.

    ``x_bound`` = max_i ||x_i||_2 and ``y_bound`` = max_i |y_i| are always
    recomputed from the arrays at construction, never user-supplied, so the
    constants derived from them are certificates rather than assertions.
    """

    xs: np.ndarray
    ys: np.ndarray
    meta: dict | None = None
    x_bound: float = field(init=False)
    y_bound: float = field(init=False)

    def __post_init__(self):
        xs = _readonly(np.atleast_2d(self.xs))
        ys = _readonly(np.atleast_1d(self.ys))
        if xs.ndim != 2 or ys.ndim != 1:
            raise ValueError("xs must be (n, d), ys must be (n,)")
        if xs.shape[0] != ys.shape[0]:
            raise ValueError("xs and ys disagree on n")
        if xs.shape[0] < 1:
            raise ValueError("dataset needs at least one pair")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValueError("dataset entries must be finite")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "x_bound", float(np.max(np.linalg.norm(xs, axis=1))))
        object.__setattr__(self, "y_bound", float(np.max(np.abs(ys))))

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def d(self) -> int:
        return self.xs.shape[1]


@dataclass(frozen=True)
class Net:
    """Depth-2 net: fixed outer weights ``a`` (p,), trainable ``w`` (p, d)."""

    a: np.ndarray
    w: np.ndarray
    act: Activation
    a_norm: float = field(init=False)

    def __post_init__(self):
        a = _readonly(np.atleast_1d(self.a))
        w = _readonly(np.atleast_2d(self.w))
        if a.ndim != 1 or w.ndim != 2 or w.shape[0] != a.shape[0]:
            raise ValueError("a must be (p,) and w must be (p, d)")
        if a.shape[0] < 1 or w.shape[1] < 1:
            raise ValueError("p and d must be at least 1")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(w))):
            raise ValueError("net weights must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "a_norm", float(np.linalg.norm(a)))

    @property
    def p(self) -> int:
        return self.a.shape[0]

    @property
    def d(self) -> int:
        return self.w.shape[1]


def normalized_outer(p: int, x_bound: float, signed: bool = False) -> np.ndarray:
    """Outer weights of magnitude 1 / (sqrt(p) * x_bound), so ||a||_2 * x_bound = 1.

    This is the normalization used by the experiment harness; with it the
    critical ridge strength reduces to 2 * d1_sup * lip.  ``signed`` flips
    every other sign, which zeroes the net's output offset a . sigma(0) for
    even p (useful when the targets are not one-sided); the norm, and hence
    every constant derived from it, is unchanged.
    """
    if p < 1 or x_bound <= 0:
        raise ValueError("need p >= 1 and x_bound > 0")
    a = np.full(p, 1.0 / (math.sqrt(p) * x_bound))
    if signed:
        a = a * np.where(np.arange(p) % 2 == 0, 1.0, -1.0)
    return a


@dataclass(frozen=True)
class LossSpec:
    """Net + data + ridge strength; the unit every operation acts on.

    Immutable: derive variants with ``with_lambda`` / ``with_weights`` so all
    lambda-dependent constants are consistently recomputed.
    """

    net: Net
    data: Dataset
    lam: float

    def __post_init__(self):
        if self.lam < 0 or not math.isfinite(self.lam):
            raise ValueError("lam must be a finite nonnegative real")
        if self.net.d != self.data.d:
            raise ValueError(
                f"net input dim {self.net.d} does not match data dim {self.data.d}"
            )

    @property
    def p(self) -> int:
        return self.net.p

    @property
    def d(self) -> int:
        return self.net.d

    @property
    def n(self) -> int:
        return self.data.n

    def with_lambda(self, lam: float) -> "LossSpec":
        return LossSpec(self.net, self.data, lam)

    def with_weights(self, w: np.ndarray) -> "LossSpec":
        return LossSpec(Net(self.net.a, w, self.net.act), self.data, self.lam)


def _weights(spec: LossSpec, w) -> np.ndarray:
    if w is None:
        return spec.net.w
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (spec.p, spec.d):
        raise ValueError(f"weight override must have shape {(spec.p, spec.d)}")
    return w


def forward(net: Net, x: np.ndarray) -> float:
    """Evaluate f(x) = a . sigma(W x) for a single input."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.d,):
        raise ValueError(f"x must have shape ({net.d},)")
    return float(net.a @ net.act(net.w @ x))


def predict(spec: LossSpec, xs: np.ndarray, w=None) -> np.ndarray:
    """Net outputs for a batch of inputs (rows of xs)."""
    w = _weights(spec, w)
    pre = w @ np.asarray(xs, dtype=np.float64).T      # (p, n)
    return spec.net.a @ spec.net.act(pre)


def residuals(spec: LossSpec, w=None) -> np.ndarray:
    """f(x_i) - y_i over the training data."""
    return predict(spec, spec.data.xs, w) - spec.data.ys


def loss(spec: LossSpec, w=None) -> float:
    w = _weights(spec, w)
    r = residuals(spec, w)
    return float(0.5 * np.mean(r * r) + 0.5 * spec.lam * np.sum(w * w))


def data_term_grad(spec: LossSpec, indices=None, w=None) -> np.ndarray:
    """Average over the given sample indices of the unregularized per-sample
    loss gradients; all samples when ``indices`` is None.

    Row j is mean_i a_j * (f(x_i) - y_i) * sigma'(w_j . x_i) * x_i.
    """
    w = _weights(spec, w)
    xs, ys = spec.data.xs, spec.data.ys
    if indices is not None:
        indices = np.asarray(indices)
        if indices.size == 0:
            raise ValueError("index set must be non-empty")
        xs, ys = xs[indices], ys[indices]
    pre = w @ xs.T                                    # (p, b)
    r = spec.net.a @ spec.net.act(pre) - ys           # (b,)
    coef = (spec.net.a[:, None] * spec.net.act.d1(pre)) * r[None, :]
    return (coef @ xs) / xs.shape[0]


def grad(spec: LossSpec, w=None) -> np.ndarray:
    """Full gradient of the objective: data term average plus lam * W."""
    w = _weights(spec, w)
    return data_term_grad(spec, None, w) + spec.lam * w


def laplacian(spec: LossSpec, w=None) -> float:
    """Trace of the Hessian of the objective.

    Per row j:  mean_i [ a_j^2 sigma'(w_j.x_i)^2 ||x_i||^2
                         + (f(x_i) - y_i) a_j sigma''(w_j.x_i) ||x_i||^2 ]
    and the ridge contributes lam * d per row, lam * p * d in total.
    """
    w = _weights(spec, w)
    xs = spec.data.xs
    pre = w @ xs.T
    r = spec.net.a @ spec.net.act(pre) - spec.data.ys
    xsq = np.sum(xs * xs, axis=1)                     # (n,)
    d1 = spec.net.act.d1(pre)
    d2 = spec.net.act.d2(pre)
    a = spec.net.a
    sq_term = np.sum((a**2)[:, None] * d1 * d1 * xsq[None, :])
    curv_term = np.sum(a[:, None] * d2 * (r * xsq)[None, :])
    return float((sq_term + curv_term) / xs.shape[0] + spec.lam * spec.p * spec.d)


def lambda_c(net: Net, data: Dataset) -> float:
    """Critical ridge strength 2 * d1_sup * lip * x_bound^2 * ||a||_2^2."""
    act = net.act
    return 2.0 * act.d1_sup * act.lipschitz * data.x_bound**2 * net.a_norm**2


def glip_bound(spec: LossSpec) -> float:
    """Closed-form upper bound on the gradient-Lipschitz coefficient.

    Requires a bounded activation (the bound carries a sup|sigma| factor), so
    softplus is rejected.
    """
    act = spec.net.act
    if not act.bounded:
        raise ValueError(
            "smoothness bound needs a bounded activation; "
            f"{act.kind} has sup|sigma| = inf"
        )
    p = spec.p
    an, bx, by = spec.net.a_norm, spec.data.x_bound, spec.data.y_bound
    row = (
        an * bx * by * act.d1_lipschitz
        + math.sqrt(p) * an**2 * act.d1_sup**2 * bx**2
        + p * an**2 * bx**2 * act.d2_sup * act.sup_value
        + spec.lam
    )
    return math.sqrt(p) * row


def offset_norm(net: Net) -> float:
    """2-norm of the constant layer output sigma(0) * ones(p)."""
    return math.sqrt(net.p) * abs(net.act.at_zero)
