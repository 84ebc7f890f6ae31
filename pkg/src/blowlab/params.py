"""Model constants, the flat profile family, and frame changes.

The physical problem is u_t = u_xx + |u|^{p-1} u with p > 1 and a flatness
index k >= 2. The self-similar frame is

    y = x (T-t)^{-1/2k},   s = -ln(T-t),   w = (T-t)^{1/(p-1)} u,

in which the candidate blowup profiles form the one-parameter family

    f_b(y) = (p-1 + b y^{2k})^{-1/(p-1)},   e_b(y) = (p-1 + b y^{2k})^{-1},

with f_b * e_b = f_b^p. Perturbations ride on the profile as
w = f_b (1 + e_b q), inverted by q = w f_b^{-p} - (p-1 + b y^{2k}).

All functions here are pure and vectorized over y / field values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModelParams",
    "AlphaConstants",
    "make_params",
    "scale_factor",
    "eval_profile",
    "profile_second_derivative",
    "e_b_series",
    "alpha_consts",
    "physical_to_selfsimilar",
    "selfsimilar_to_physical",
    "q_to_w",
    "w_to_q",
    "signed_power",
]


@dataclass(frozen=True)
class ModelParams:
    """Constants every operator consumes.

    M = 2kp/(p-1) is the polynomial growth degree of the weighted sup norm
    and the spectral cutoff; M_floor is the largest integer strictly below M
    (for integer M that is M - 1), so tracked modes run 0..M_floor.
    """

    p: float
    k: int
    kappa: float
    M: float
    M_floor: int

    @property
    def n_modes(self) -> int:
        return self.M_floor + 1


@dataclass(frozen=True)
class AlphaConstants:
    """Coefficients of the profile-curvature source term, quadratic in b."""

    alpha1: float
    alpha2: float
    alpha3: float
    alpha4: float


def make_params(p: float, k: int) -> ModelParams:
    """Build the derived constants for exponent p > 1 and flatness k >= 2."""
    if not p > 1:
        raise ValueError(f"exponent p must satisfy p > 1, got {p}")
    if int(k) != k or k < 2:
        raise ValueError(f"flatness index k must be an integer >= 2, got {k}")
    k = int(k)
    kappa = (p - 1.0) ** (-1.0 / (p - 1.0))
    M = 2.0 * k * p / (p - 1.0)
    if abs(M - round(M)) < 1e-12 * max(1.0, abs(M)):
        M_floor = int(round(M)) - 1
    else:
        M_floor = math.floor(M)
    return ModelParams(p=float(p), k=k, kappa=kappa, M=M, M_floor=M_floor)


def scale_factor(s, k: int):
    """I(s) = exp((s/2)(1 - 1/k)), the ratio of parabolic to flat scaling."""
    if k < 2:
        raise ValueError("k must be >= 2")
    return np.exp(0.5 * np.asarray(s, dtype=float) * (1.0 - 1.0 / k))


def eval_profile(y, b: float, params: ModelParams):
    """Return (f_b(y), e_b(y)) for b >= 0; both are positive and bounded."""
    F = params.p - 1.0 + b * np.abs(np.asarray(y, dtype=float)) ** (2 * params.k)
    f = F ** (-1.0 / (params.p - 1.0))
    e = 1.0 / F
    return f, e


def profile_second_derivative(y, b: float, params: ModelParams):
    """Closed form of f_b'' via the curvature coefficients: no symbolic algebra.

    f_b'' = y^{2k-2} (alpha1 + alpha2 y^{2k} e_b) f_b^p.
    """
    a = alpha_consts(b, params)
    y = np.asarray(y, dtype=float)
    f, e = eval_profile(y, b, params)
    y2k = np.abs(y) ** (2 * params.k)
    return y ** (2 * params.k - 2) * (a.alpha1 + a.alpha2 * y2k * e) * f**params.p


def e_b_series(y, b: float, params: ModelParams, depth: int):
    """Geometric expansion of e_b truncated at the given depth.

    Partial sum of (p-1)^{-1} sum_l (-b y^{2k}/(p-1))^l; the truncation error
    is |b y^{2k}/(p-1)|^{depth+1} e_b, small where the expansion ratio is < 1.
    """
    x = -b * np.abs(np.asarray(y, dtype=float)) ** (2 * params.k) / (params.p - 1.0)
    total = np.zeros_like(x)
    term = np.ones_like(x)
    for _ in range(depth + 1):
        total = total + term
        term = term * x
    return total / (params.p - 1.0)


def alpha_consts(b: float, params: ModelParams) -> AlphaConstants:
    p, k = params.p, params.k
    return AlphaConstants(
        alpha1=-2.0 * k * (2 * k - 1) * b / (p - 1.0),
        alpha2=4.0 * p * k**2 * b**2 / (p - 1.0) ** 2,
        alpha3=-2.0 * p * k * (2 * k - 1) * b / (p - 1.0),
        alpha4=4.0 * p * (2 * p - 1) * k**2 * b**2 / (p - 1.0) ** 2,
    )


def physical_to_selfsimilar(x, t, u, T: float, params: ModelParams):
    """Map (x, t, u) to (y, s, w); requires t < T."""
    t = np.asarray(t, dtype=float)
    if np.any(t >= T):
        raise ValueError("physical time must satisfy t < T")
    tau = T - t
    y = np.asarray(x, dtype=float) * tau ** (-1.0 / (2 * params.k))
    s = -np.log(tau)
    w = tau ** (1.0 / (params.p - 1.0)) * np.asarray(u, dtype=float)
    return y, s, w


def selfsimilar_to_physical(y, s, w, T: float, params: ModelParams):
    """Inverse of physical_to_selfsimilar; requires s >= -ln T."""
    s = np.asarray(s, dtype=float)
    if np.any(s < -np.log(T)):
        raise ValueError("scale time must satisfy s >= -ln T")
    tau = np.exp(-s)
    x = np.asarray(y, dtype=float) * tau ** (1.0 / (2 * params.k))
    t = T - tau
    u = tau ** (-1.0 / (params.p - 1.0)) * np.asarray(w, dtype=float)
    return x, t, u


def q_to_w(q, y, b: float, params: ModelParams):
    """w = f_b (1 + e_b q) on the given nodes."""
    f, e = eval_profile(y, b, params)
    return f * (1.0 + e * np.asarray(q, dtype=float))


def w_to_q(w, y, b: float, params: ModelParams):
    """q = w f_b^{-p} - (p - 1 + b y^{2k}), the exact inverse of q_to_w."""
    f, _ = eval_profile(y, b, params)
    F = params.p - 1.0 + b * np.abs(np.asarray(y, dtype=float)) ** (2 * params.k)
    return np.asarray(w, dtype=float) * f ** (-params.p) - F


def signed_power(x, p: float):
    """|x|^{p-1} x, the odd continuation of x^p to negative arguments."""
    x = np.asarray(x, dtype=float)
    return np.abs(x) ** (p - 1.0) * x
