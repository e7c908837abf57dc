"""Convex recovery programs: phaseless ANM, squared atomic norm, ANM, PhaseLift.

Phaseless ANM lifts the unknown Fourier vector to ``Q = X X^H`` and solves

    minimize    (1/m) tr Toep(u)
    subject to  Toep(u) - Q >= 0,  Q >= 0,  a_r^H Q a_r = b_r^2.

The bilinear program in ``(u, X, s)`` that precedes it (objective
``s tr Toep(u) / m``) is nonconvex because of the magnitude constraints and is
never solved here; substituting ``u' = s u`` and dropping ``rank Q = 1`` gives
the program above.  In canonical form the Toeplitz matrix is the block sum
``Q + S`` with a PSD slack ``S``, and ``(1/m) tr Toep(u) = u_0``.

Every solver rescales its data to unit size before calling the SDP engine and
undoes the scaling on the way out.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sdp
from .measurement import HermitianBand, MeasurementSet
from .signal import normalize_phase

__all__ = [
    "RANK1_RATIO",
    "PhaselessAnmSolution",
    "AnmSolution",
    "PhaseLiftSolution",
    "solve_phaseless_anm",
    "squared_atomic_norm",
    "standard_anm",
    "phaselift",
    "q_complete",
    "eig_ratio",
]

RANK1_RATIO = 1e-3
ZERO_DIAG = 1e-10


def eig_ratio(Q) -> tuple[float, float, float]:
    """Top two eigenvalues of ``Q`` and the ratio ``lambda_2 / lambda_1`` (0 for ``Q = 0``)."""
    w = np.linalg.eigvalsh(sdp.hermitian_part(Q))[::-1]
    l1 = float(w[0])
    l2 = float(w[1]) if w.size > 1 else 0.0
    if l1 <= 0:
        return l1, l2, 0.0 if l2 <= 0 else np.inf
    return l1, l2, max(l2, 0.0) / l1


def _solver_diagnostics(problem: sdp.SdpProblem, sol: sdp.SdpSolution) -> dict:
    res, min_eig = sdp.certify(problem, sol)
    return {
        "status": sol.status,
        "iterations": sol.iterations,
        "seconds": sol.seconds,
        "primal_residual": sol.primal_residual,
        "dual_residual": sol.dual_residual,
        "gap": sol.gap,
        "certified_residual": res,
        "certified_min_eig": min_eig,
    }


@dataclass
class PhaselessAnmSolution:
    Q_hat: np.ndarray
    u_hat: np.ndarray
    objective: float
    status: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == sdp.OPTIMAL


@dataclass
class AnmSolution:
    u: np.ndarray
    value: float
    status: str
    diagnostics: dict = field(default_factory=dict)

    def __iter__(self):
        # allows ``u, value = standard_anm(X)``
        return iter((self.u, self.value))


@dataclass
class PhaseLiftSolution:
    x_hat: np.ndarray
    W: np.ndarray
    status: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def rank1(self) -> bool:
        return self.diagnostics.get("eig_ratio", np.inf) <= RANK1_RATIO


def _lifted(ms: MeasurementSet) -> list[np.ndarray]:
    return [np.outer(a, a.conj()) for a in ms.vectors]


def solve_phaseless_anm(
    ms: MeasurementSet,
    tol: float = sdp.DEFAULT_TOL,
    max_iters: int = sdp.DEFAULT_MAX_ITERS,
    time_limit: float | None = None,
) -> PhaselessAnmSolution:
    """Phaseless ANM relaxation over the measurement window of ``ms``."""
    m = ms.m
    if ms.q < 1 or m < 2:
        raise ValueError("need at least one measurement and a window of size >= 2")
    b2 = ms.magnitudes**2
    scale = float(b2.max()) or 1.0

    builder = sdp.SdpBuilder([m, m])
    builder.minimize({0: sdp.entry_re(0, 0), 1: sdp.entry_re(0, 0)})
    sdp.add_toeplitz_constraints(builder, [0, 1], m)
    for A_r, rhs in zip(_lifted(ms), b2 / scale):
        builder.constrain({0: A_r}, rhs)
    problem = builder.build()
    sol = sdp.solve(problem, tol=tol, max_iters=max_iters, time_limit=time_limit)

    Q = sol.blocks[0] * scale
    u = sdp.toeplitz_generator(sol.blocks[0] + sol.blocks[1]) * scale
    diag = _solver_diagnostics(problem, sol)
    l1, l2, ratio = eig_ratio(Q)
    diag.update(lambda1=l1, lambda2=l2, eig_ratio=ratio)
    return PhaselessAnmSolution(Q, u, sol.objective_value * scale, sol.status, diag)


def squared_atomic_norm(
    Q,
    tol: float = sdp.DEFAULT_TOL,
    max_iters: int = sdp.DEFAULT_MAX_ITERS,
) -> float:
    """Optimal value of ``min (1/m) tr Toep(u)  s.t.  Toep(u) >= Q`` for rank-1 ``Q = X X^H``.

    For such ``Q`` the value is the squared atomic norm of ``X``.
    """
    Q = sdp.hermitian_part(Q)
    l1, l2, ratio = eig_ratio(Q)
    if l1 <= 0 and np.allclose(Q, 0):
        return 0.0
    if ratio > RANK1_RATIO:
        raise ValueError(f"Q is not rank one (lambda2/lambda1 = {ratio:.3g})")
    m = Q.shape[0]
    scale = float(np.max(np.abs(Q)))
    Qs = Q / scale
    builder = sdp.SdpBuilder([m])
    builder.minimize({0: sdp.entry_re(0, 0)})
    sdp.add_toeplitz_constraints(builder, [0], m, constant=Qs)
    sol = sdp.solve(builder.build(), tol=tol, max_iters=max_iters)
    if not sol.optimal:
        raise RuntimeError(f"squared atomic norm solve ended with status {sol.status}")
    return (sol.objective_value + Qs[0, 0].real) * scale


def standard_anm(
    X_obs,
    tol: float = sdp.DEFAULT_TOL,
    max_iters: int = sdp.DEFAULT_MAX_ITERS,
    time_limit: float | None = None,
) -> AnmSolution:
    """Atomic norm of fully observed ``X`` via ``min (tr Toep(u)/m + s)/2  s.t.  [[Toep(u), X], [X^H, s]] >= 0``."""
    X = np.asarray(X_obs, dtype=complex).ravel()
    m = X.size
    scale = float(np.max(np.abs(X)))
    if scale == 0:
        return AnmSolution(np.zeros(m, dtype=complex), 0.0, sdp.OPTIMAL, {"status": sdp.OPTIMAL})
    Xs = X / scale
    builder = sdp.SdpBuilder([m + 1])
    builder.minimize({0: sdp.entry_re(0, 0, 0.5) + sdp.entry_re(m, m, 0.5)})
    sdp.add_toeplitz_constraints(builder, [0], m)
    for j in range(m):
        builder.constrain({0: sdp.entry_re(j, m)}, Xs[j].real)
        builder.constrain({0: sdp.entry_im(j, m)}, Xs[j].imag)
    problem = builder.build()
    sol = sdp.solve(problem, tol=tol, max_iters=max_iters, time_limit=time_limit)
    u = sdp.toeplitz_generator(sol.blocks[0][:m, :m]) * scale
    return AnmSolution(u, sol.objective_value * scale, sol.status, _solver_diagnostics(problem, sol))


def phaselift(
    ms: MeasurementSet,
    tol: float = sdp.DEFAULT_TOL,
    max_iters: int = sdp.DEFAULT_MAX_ITERS,
    time_limit: float | None = None,
) -> PhaseLiftSolution:
    """Trace-minimizing lift ``min tr W  s.t.  a_r^H W a_r = b_r^2, W >= 0`` and its top eigenvector."""
    m = ms.m
    b2 = ms.magnitudes**2
    scale = float(b2.max())
    if scale == 0:
        z = np.zeros(m, dtype=complex)
        return PhaseLiftSolution(z, np.zeros((m, m), complex), sdp.OPTIMAL,
                                 {"status": sdp.OPTIMAL, "eig_ratio": 0.0})
    builder = sdp.SdpBuilder([m])
    builder.minimize({0: np.eye(m)})
    for A_r, rhs in zip(_lifted(ms), b2 / scale):
        builder.constrain({0: A_r}, rhs)
    problem = builder.build()
    sol = sdp.solve(problem, tol=tol, max_iters=max_iters, time_limit=time_limit)
    W = sol.blocks[0] * scale
    w, U = np.linalg.eigh(W)
    x = normalize_phase(np.sqrt(max(w[-1], 0.0)) * U[:, -1])
    diag = _solver_diagnostics(problem, sol)
    l1, l2, ratio = eig_ratio(W)
    diag.update(lambda1=l1, lambda2=l2, eig_ratio=ratio)
    return PhaseLiftSolution(x, W, sol.status, diag)


def q_complete(band: HermitianBand) -> tuple[np.ndarray, np.ndarray]:
    """Complete a rank-one PSD matrix from its diagonal and first superdiagonal.

    With every ``X_j`` nonzero the band fixes ``X`` up to a global phase:
    ``X_0 = sqrt(Q_00)`` and ``X_{j+1} = conj(Q_{j,j+1} / X_j)``.  Returns
    ``(X X^H, X)`` with the phase normalized.
    """
    d = band.diag
    if d.size == 0 or d.max() <= 0 or np.any(d <= ZERO_DIAG * d.max()):
        raise ValueError("completion needs every diagonal entry (|X_j|^2) to be nonzero")
    X = np.empty(d.size, dtype=complex)
    X[0] = np.sqrt(d[0])
    for j, s in enumerate(band.superdiag):
        X[j + 1] = np.conj(s / X[j])
    err = np.abs(np.abs(X) ** 2 - d) / d
    if np.any(err > 1e-8):
        raise ValueError(f"band is not the band of a rank-one matrix (relative mismatch {err.max():.2g})")
    X = normalize_phase(X)
    return np.outer(X, X.conj()), X
