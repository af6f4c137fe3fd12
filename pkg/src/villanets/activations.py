"""Smooth scalar activations with exact derivatives and certified constants.

Each activation carries the constants every bound downstream needs:
the sup of |sigma|, the Lipschitz constant of sigma, the sups of the first
and second derivatives, the Lipschitz constant of sigma', and sigma(0).
All evaluation paths use overflow-safe forms so large pre-activations
(|beta*x| up to ~700) stay finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

KINDS = ("sigmoid", "tanh", "softplus")


def _check_finite(x):
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("activation input must be finite")
    return arr


@dataclass(frozen=True)
class Activation:
    """An elementwise nonlinearity plus its certified derivative constants.

    Attributes:
        kind: one of 'sigmoid', 'tanh', 'softplus'.
        beta: shape parameter (> 0); ignored for tanh.
        sup_value: sup |sigma(x)| over the reals (inf for softplus).
        lipschitz: Lipschitz constant of sigma.
        d1_sup: sup |sigma'(x)|.
        d2_sup: sup |sigma''(x)|.
        d1_lipschitz: Lipschitz constant of sigma'. For these C-infinity
            scalar maps it coincides with d2_sup, so the two are unified.
        at_zero: sigma(0). The constant offset vector for a width-p layer
            is sigma(0) * ones(p), with 2-norm sqrt(p) * |sigma(0)|.
    """

    kind: str
    beta: float
    sup_value: float
    lipschitz: float
    d1_sup: float
    d2_sup: float
    d1_lipschitz: float
    at_zero: float

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.sup_value)

    def __call__(self, x):
        x = _check_finite(x)
        if self.kind == "sigmoid":
            out = expit(self.beta * x)
        elif self.kind == "tanh":
            out = np.tanh(x)
        else:  # softplus: log(1 + e^(beta x)) / beta, via stable log-sum-exp
            out = np.logaddexp(0.0, self.beta * x) / self.beta
        return float(out) if np.isscalar(x) or out.ndim == 0 else out

    def d1(self, x):
        x = _check_finite(x)
        if self.kind == "sigmoid":
            s = expit(self.beta * x)
            out = self.beta * s * (1.0 - s)
        elif self.kind == "tanh":
            t = np.tanh(x)
            out = 1.0 - t * t
        else:  # softplus' is the sigmoid of beta*x
            out = expit(self.beta * x)
        return float(out) if np.isscalar(x) or out.ndim == 0 else out

    def d2(self, x):
        x = _check_finite(x)
        if self.kind == "sigmoid":
            s = expit(self.beta * x)
            out = self.beta**2 * s * (1.0 - s) * (1.0 - 2.0 * s)
        elif self.kind == "tanh":
            t = np.tanh(x)
            out = -2.0 * t * (1.0 - t * t)
        else:
            s = expit(self.beta * x)
            out = self.beta * s * (1.0 - s)
        return float(out) if np.isscalar(x) or out.ndim == 0 else out

    def table(self) -> dict:
        """Constant table for reporting (JSON-friendly)."""
        return {
            "kind": self.kind,
            "beta": self.beta,
            "sup_value": self.sup_value,
            "lipschitz": self.lipschitz,
            "d1_sup": self.d1_sup,
            "d2_sup": self.d2_sup,
            "d1_lipschitz": self.d1_lipschitz,
            "at_zero": self.at_zero,
        }


def make(kind: str, beta: float = 1.0) -> Activation:
    """Build an activation with all constant fields filled in.

    Closed forms for the derivative sups:
      sigmoid: sup|sigma'| = beta/4, sup|sigma''| = beta^2/(6*sqrt(3))
      tanh:    sup|sigma'| = 1,      sup|sigma''| = 4/(3*sqrt(3))
      softplus:sup|sigma'| = 1,      sup|sigma''| = beta/4
    """
    kind = kind.lower()
    if kind not in KINDS:
        raise ValueError(f"unknown activation kind {kind!r}; expected one of {KINDS}")
    if kind != "tanh" and beta <= 0:
        raise ValueError("beta must be positive")
    if kind == "sigmoid":
        d2 = beta**2 / (6.0 * math.sqrt(3.0))
        return Activation("sigmoid", beta, 1.0, beta / 4.0, beta / 4.0, d2, d2, 0.5)
    if kind == "tanh":
        d2 = 4.0 / (3.0 * math.sqrt(3.0))
        return Activation("tanh", 1.0, 1.0, 1.0, 1.0, d2, d2, 0.0)
    return Activation(
        "softplus", beta, math.inf, 1.0, 1.0, beta / 4.0, beta / 4.0, math.log(2.0) / beta
    )


def sigmoid(beta: float = 1.0) -> Activation:
    return make("sigmoid", beta)


def tanh() -> Activation:
    return make("tanh")


def softplus(beta: float = 1.0) -> Activation:
    return make("softplus", beta)
