"""Coefficient penalty functions and the subgradient zero test.

Supported kinds: ``none`` (J = 0), ``l1`` (J = |z|), ``l2`` (J = z^2),
``scad`` (linear up to lam, quadratically clipped up to a*lam, constant
beyond), and ``tanh_k`` (J = z * tanh(K z), a smooth approximation of |z|
with uniform error at most 1/K).

All penalties enter objectives as ``2 * lam * sum_j J(beta_j)``.  The SCAD
shape itself depends on ``lam``, so the same field drives both roles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCAD_A = 3.7

PENALTY_KINDS = ("none", "l1", "l2", "scad", "tanh_k")


@dataclass(frozen=True)
class PenaltySpec:
    kind: str
    lam: float = 0.0
    a: float = SCAD_A
    K: float = 0.0

    def __post_init__(self):
        if self.kind not in PENALTY_KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.kind == "scad" and not self.a > 2:
            raise ValueError("scad requires a > 2")
        if self.kind == "tanh_k" and not self.K > 0:
            raise ValueError("tanh_k requires K > 0")


def no_penalty() -> PenaltySpec:
    return PenaltySpec("none")


def l1_penalty(lam: float) -> PenaltySpec:
    return PenaltySpec("l1", lam)


def l2_penalty(lam: float) -> PenaltySpec:
    return PenaltySpec("l2", lam)


def scad_penalty(lam: float, a: float = SCAD_A) -> PenaltySpec:
    return PenaltySpec("scad", lam, a=a)


def tanh_penalty(lam: float, K: float) -> PenaltySpec:
    return PenaltySpec("tanh_k", lam, K=K)


def soft_threshold(z, t):
    """sign(z) * (|z| - t)_+, elementwise."""
    z = np.asarray(z, dtype=float)
    out = np.sign(z) * np.maximum(np.abs(z) - t, 0.0)
    return float(out) if out.ndim == 0 else out


def _check_kink(kind, z):
    if np.any(np.asarray(z) == 0.0):
        raise ValueError(
            f"{kind} penalty derivatives are undefined at 0; solvers must "
            "handle the zero coefficient through the threshold test")


def j(spec: PenaltySpec, z):
    """Penalty value J(z), elementwise."""
    z = np.asarray(z, dtype=float)
    a_z = np.abs(z)
    if spec.kind == "none":
        out = np.zeros_like(z)
    elif spec.kind == "l1":
        out = a_z
    elif spec.kind == "l2":
        out = z * z
    elif spec.kind == "tanh_k":
        out = z * np.tanh(spec.K * z)
    else:
        lam, a = spec.lam, spec.a
        if lam == 0.0:
            out = np.zeros_like(z)
        else:
            mid = -((a_z - a * lam) ** 2) / (2.0 * (a - 1.0) * lam) + lam * (a + 1.0) / 2.0
            out = np.where(a_z <= lam, a_z,
                           np.where(a_z <= a * lam, mid, lam * (a + 1.0) / 2.0))
    return float(out) if out.ndim == 0 else out


def j_prime(spec: PenaltySpec, z):
    """First derivative J'(z).  For l1 and scad the value at z = 0 is a
    contract violation; callers route zeros through soft_threshold_test."""
    z = np.asarray(z, dtype=float)
    if spec.kind == "none":
        out = np.zeros_like(z)
    elif spec.kind == "l1":
        _check_kink("l1", z)
        out = np.sign(z)
    elif spec.kind == "l2":
        out = 2.0 * z
    elif spec.kind == "tanh_k":
        u = spec.K * z
        th = np.tanh(u)
        out = th + u * (1.0 - th * th)
    else:
        _check_kink("scad", z)
        lam, a = spec.lam, spec.a
        a_z = np.abs(z)
        if lam == 0.0:
            out = np.zeros_like(z)
        else:
            mid = (a * lam - a_z) / ((a - 1.0) * lam)
            out = np.sign(z) * np.where(a_z <= lam, 1.0,
                                        np.where(a_z <= a * lam, mid, 0.0))
    return float(out) if out.ndim == 0 else out


def j_second(spec: PenaltySpec, z):
    """Second derivative J''(z); for tanh_k this is exact."""
    z = np.asarray(z, dtype=float)
    if spec.kind in ("none", "l1"):
        if spec.kind == "l1":
            _check_kink("l1", z)
        out = np.zeros_like(z)
    elif spec.kind == "l2":
        out = np.full_like(z, 2.0)
    elif spec.kind == "tanh_k":
        u = spec.K * z
        th = np.tanh(u)
        out = 2.0 * spec.K * (1.0 - th * th) * (1.0 - u * th)
    else:
        _check_kink("scad", z)
        lam, a = spec.lam, spec.a
        a_z = np.abs(z)
        if lam == 0.0:
            out = np.zeros_like(z)
        else:
            out = np.where((a_z > lam) & (a_z <= a * lam),
                           -1.0 / ((a - 1.0) * lam), 0.0)
    return float(out) if out.ndim == 0 else out


def soft_threshold_test(spec: PenaltySpec, score: float, second_moment: float) -> bool:
    """Whether an l1-penalized coefficient is shrunk exactly to zero.

    ``score`` is the cross moment of the coordinate with its partial
    residual; the coefficient is zero iff |score| <= lam (boundary
    inclusive, matching the subgradient condition |score| <= lam that
    characterizes an exact zero, equivalently |beta_LS| <= lam / E[x^2]).
    """
    if spec.kind != "l1":
        raise ValueError("soft_threshold_test applies to the l1 penalty only")
    if not second_moment > 0:
        raise ValueError("second_moment must be > 0")
    return bool(abs(score) <= spec.lam)
