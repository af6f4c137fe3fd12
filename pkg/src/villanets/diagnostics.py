"""Coercivity diagnostics for the regularized objective.

The central quantity is v_s(W) = ||grad||_F^2 / s - laplacian(W).  For ridge
strength above the critical value the objective's tail makes v_s blow up
along every direction, which is the property the Gibbs-measure mixing
results hinge on.  This module evaluates v_s, the closed-form pointwise
bounds that force the blow-up (a quadratic lower bound on the squared
gradient norm and an affine-in-||W|| upper bound on the Laplacian), and a
ray-scan that certifies divergence numerically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import model
from .model import LossSpec


def v_s(spec: LossSpec, s: float, w=None) -> float:
    """||grad||_F^2 / s - laplacian, the divergence diagnostic."""
    if s <= 0:
        raise ValueError("s must be positive")
    g = model.grad(spec, w)
    return float(np.sum(g * g) / s - model.laplacian(spec, w))


def ray_quadratic_coeff(spec: LossSpec) -> float:
    """Leading coefficient lam^2 - lam * lambda_c of the gradient lower bound.

    Strictly positive exactly when lam exceeds the critical ridge strength.
    """
    return spec.lam**2 - spec.lam * model.lambda_c(spec.net, spec.data)


def grad_lower_bound(spec: LossSpec, w=None) -> float:
    """Pointwise lower bound on ||grad(W)||_F^2.

    (lam^2 - lam * lambda_c) * ||W||_F^2
        - 2 * lam * d1_sup * x_bound * ||a|| * (y_bound + ||a|| * c_norm) * ||W||_F

    where c_norm = sqrt(p) * |sigma(0)|.  Exact inequality: any violation at
    a sampled point indicates an implementation bug, not numerical noise.
    """
    w = spec.net.w if w is None else np.asarray(w, dtype=np.float64)
    wn = float(np.linalg.norm(w))
    act = spec.net.act
    an, bx, by = spec.net.a_norm, spec.data.x_bound, spec.data.y_bound
    cn = model.offset_norm(spec.net)
    lin = 2.0 * spec.lam * act.d1_sup * bx * an * (by + an * cn)
    return ray_quadratic_coeff(spec) * wn**2 - lin * wn


def laplacian_upper_bound(spec: LossSpec, w=None) -> float:
    """Pointwise upper bound on the Hessian trace, affine in ||W||_F.

    p * [ d1_sup^2 x_bound^2 ||a||^2
          + ||a|| * (y_bound + ||a|| * (c_norm + lip * x_bound * ||W||_F)) * d2_sup * x_bound^2
          + lam * d ]
    """
    w = spec.net.w if w is None else np.asarray(w, dtype=np.float64)
    wn = float(np.linalg.norm(w))
    act = spec.net.act
    an, bx, by = spec.net.a_norm, spec.data.x_bound, spec.data.y_bound
    cn = model.offset_norm(spec.net)
    inner = (
        act.d1_sup**2 * bx**2 * an**2
        + an * (by + an * (cn + act.lipschitz * bx * wn)) * act.d2_sup * bx**2
        + spec.lam * spec.d
    )
    return spec.p * inner


@dataclass(frozen=True)
class VillaniReport:
    """Result of a divergence ray-scan.

    ``diverging`` is true only if on every ray the v_s values over the last
    three radii are all positive and non-decreasing.  Bound-violation counts
    should always be zero; they exist to catch regressions.
    """

    lam: float
    s: float
    lambda_c: float
    ray_count: int
    radii: np.ndarray
    v_values: np.ndarray  # (ray_count, len(radii))
    grad_bound_violations: int
    laplacian_bound_violations: int
    diverging: bool

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "s": self.s,
            "lambda_c": self.lambda_c,
            "ray_count": self.ray_count,
            "radii": self.radii.tolist(),
            "v_values": self.v_values.tolist(),
            "grad_bound_violations": self.grad_bound_violations,
            "laplacian_bound_violations": self.laplacian_bound_violations,
            "diverging": self.diverging,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def scan_radii(r_max: float) -> np.ndarray:
    """Geometric radii 1, 2, 4, ... capped with r_max as the last entry."""
    if r_max < 10:
        raise ValueError("r_max must be at least 10")
    radii = [1.0]
    while radii[-1] * 2.0 < r_max:
        radii.append(radii[-1] * 2.0)
    radii.append(float(r_max))
    return np.array(radii)


def villani_scan(
    spec: LossSpec,
    s: float,
    ray_count: int = 16,
    r_max: float = 1e3,
    seed: int = 0,
) -> VillaniReport:
    """Evaluate v_s along random unit-Frobenius-norm rays at geometric radii.

    Directions are normalized Gaussian matrices (uniform on the Frobenius
    sphere), drawn from a seeded generator for reproducibility.  Every
    evaluation point also checks the two pointwise bounds.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    if ray_count < 8:
        raise ValueError("ray_count must be at least 8")
    radii = scan_radii(r_max)
    rng = np.random.default_rng(seed)
    v_values = np.empty((ray_count, len(radii)))
    grad_viol = 0
    lap_viol = 0
    for i in range(ray_count):
        direction = rng.standard_normal((spec.p, spec.d))
        direction /= np.linalg.norm(direction)
        for k, r in enumerate(radii):
            w = r * direction
            g = model.grad(spec, w)
            gsq = float(np.sum(g * g))
            lap = model.laplacian(spec, w)
            v_values[i, k] = gsq / s - lap
            if gsq < grad_lower_bound(spec, w):
                grad_viol += 1
            if lap > laplacian_upper_bound(spec, w):
                lap_viol += 1
    tail = v_values[:, -3:]
    diverging = bool(
        np.all(tail > 0) and np.all(np.diff(tail, axis=1) >= 0)
    )
    return VillaniReport(
        lam=spec.lam,
        s=s,
        lambda_c=model.lambda_c(spec.net, spec.data),
        ray_count=ray_count,
        radii=radii,
        v_values=v_values,
        grad_bound_violations=grad_viol,
        laplacian_bound_violations=lap_viol,
        diverging=diverging,
    )
