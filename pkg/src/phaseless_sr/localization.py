"""Impulse locations from a PSD Toeplitz matrix, and the recovery error metric."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment, nnls

from .recovery import RANK1_RATIO, eig_ratio
from .sdp import toeplitz_realize
from .signal import ImpulseSignal, atom_matrix, cyclic_distance, normalize_phase

__all__ = [
    "VandermondeDecomposition",
    "RecoveryResult",
    "toeplitz_vandermonde",
    "extract_signal",
    "localize",
    "time_error",
    "matched_distances",
]

DEFAULT_RANK_TOL = 1e-6
PSD_TOL = 1e-5


@dataclass(frozen=True)
class VandermondeDecomposition:
    """``Toep(u) ~= sum_j powers[j] a(times[j]) a(times[j])^H``."""

    times: np.ndarray
    powers: np.ndarray
    order: int
    degenerate: bool
    eigenvalues: np.ndarray = field(repr=False)
    residual: float = np.nan

    def __iter__(self):
        return iter((self.times, self.powers))


def toeplitz_vandermonde(u, rank_tol: float = DEFAULT_RANK_TOL) -> VandermondeDecomposition:
    """Matrix-pencil Vandermonde decomposition of the PSD Toeplitz matrix ``Toep(u)``.

    The model order is the number of eigenvalues at or above
    ``rank_tol * lambda_max``.  The signal subspace ``U`` satisfies the shift
    relation ``U[1:] = U[:-1] Phi``; the generalized eigenvalues of the pencil
    ``(U[:-1]^H U[1:], U[:-1]^H U[:-1])`` are ``exp(-i 2 pi t_j)``.  Powers
    come from nonnegative least squares on ``u = V d`` (the first column of
    ``V D V^H``).  A full-rank matrix has no impulse structure and is
    reported as degenerate.
    """
    u = np.asarray(u, dtype=complex).ravel()
    m = u.size
    T = toeplitz_realize(u)
    w, U = np.linalg.eigh(T)
    w, U = w[::-1], U[:, ::-1]
    empty = np.zeros(0)
    if w[0] <= 0:
        return VandermondeDecomposition(empty, empty, 0, True, w)
    if w[-1] < -PSD_TOL * w[0]:
        raise ValueError(f"Toep(u) is not PSD (min/max eigenvalue {w[-1] / w[0]:.2g})")
    order = int(np.sum(w >= rank_tol * w[0]))
    if order >= m:
        return VandermondeDecomposition(empty, empty, order, True, w)

    Us = U[:, :order]
    U1, U2 = Us[:-1], Us[1:]
    G = U1.conj().T @ U1
    if np.linalg.cond(G) > 1e12:
        return VandermondeDecomposition(empty, empty, order, True, w)
    z = sla.eig(U1.conj().T @ U2, G, right=False)
    times = np.mod(-np.angle(z) / (2 * np.pi), 1.0)
    times = np.sort(times)

    V = atom_matrix(times, m)
    powers, _ = nnls(np.vstack([V.real, V.imag]), np.concatenate([u.real, u.imag]))
    keep = powers > 0
    times, powers = times[keep], powers[keep]
    V = V[:, keep]
    resid = np.linalg.norm((V * powers) @ V.conj().T - T) / np.linalg.norm(T)
    return VandermondeDecomposition(times, powers, order, False, w, float(resid))


@dataclass
class RecoveryResult:
    """Estimated impulse train plus diagnostics; ``ok`` is False when extraction failed."""

    signal: ImpulseSignal
    x_hat: np.ndarray
    method: str
    ok: bool
    reason: str = ""
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "ok": self.ok,
            "reason": self.reason,
            "signal": self.signal.to_dict(),
            "x_hat": [[float(z.real), float(z.imag)] for z in self.x_hat],
            "diagnostics": _jsonable(self.diagnostics),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else str(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    return obj


def _failed(x_hat, method, reason, diagnostics) -> RecoveryResult:
    return RecoveryResult(ImpulseSignal([], []), np.asarray(x_hat, complex), method, False, reason, diagnostics)


def localize(x_hat, u_hat, method: str, rank_tol: float = DEFAULT_RANK_TOL, diagnostics=None) -> RecoveryResult:
    """Times from ``Toep(u_hat)`` and least-squares amplitudes against ``x_hat``."""
    diagnostics = dict(diagnostics or {})
    x_hat = np.asarray(x_hat, dtype=complex)
    try:
        dec = toeplitz_vandermonde(u_hat, rank_tol)
    except ValueError as exc:
        return _failed(x_hat, method, str(exc), diagnostics)
    diagnostics.update(
        model_order=dec.order,
        pencil_eigenvalues=dec.eigenvalues[: min(dec.eigenvalues.size, dec.order + 2)],
        vandermonde_residual=dec.residual,
        powers=dec.powers,
    )
    if dec.degenerate or dec.times.size == 0:
        return _failed(x_hat, method, "degenerate Toeplitz pencil", diagnostics)
    V = atom_matrix(dec.times, x_hat.size)
    amps, *_ = np.linalg.lstsq(V, x_hat, rcond=None)
    diagnostics["amplitude_residual"] = float(np.linalg.norm(V @ amps - x_hat))
    try:
        sig = ImpulseSignal(dec.times, amps)
    except ValueError as exc:
        return _failed(x_hat, method, str(exc), diagnostics)
    return RecoveryResult(sig, x_hat, method, True, "", diagnostics)


def extract_signal(Q_hat, u_hat, rank_tol: float = DEFAULT_RANK_TOL, method: str = "phaseless_anm",
                   diagnostics=None) -> RecoveryResult:
    """Rank-one eigen-extraction of ``X`` from ``Q_hat`` followed by :func:`localize`."""
    diagnostics = dict(diagnostics or {})
    Q_hat = np.asarray(Q_hat, dtype=complex)
    l1, l2, ratio = eig_ratio(Q_hat)
    diagnostics.update(lambda1=l1, lambda2=l2, eig_ratio=ratio)
    m = Q_hat.shape[0]
    if l1 <= 0:
        return _failed(np.zeros(m, complex), method, "zero matrix", diagnostics)
    if ratio > RANK1_RATIO:
        return _failed(np.zeros(m, complex), method, f"not rank one (ratio {ratio:.2g})", diagnostics)
    w, U = np.linalg.eigh((Q_hat + Q_hat.conj().T) / 2)
    x_hat = normalize_phase(np.sqrt(w[-1]) * U[:, -1])
    return localize(x_hat, u_hat, method, rank_tol, diagnostics)


def matched_distances(est: ImpulseSignal, truth: ImpulseSignal) -> np.ndarray:
    """Cyclic distances of the optimal one-to-one pairing of estimated and true times."""
    if est.k != truth.k or est.k == 0:
        return np.full(truth.k, np.inf)
    D = cyclic_distance(est.times[:, None], truth.times[None, :])
    rows, cols = linear_sum_assignment(D**2)
    return D[rows, cols][np.argsort(cols)]


def time_error(est: ImpulseSignal, truth: ImpulseSignal) -> float:
    """Euclidean norm of matched cyclic time distances; ``inf`` when impulse counts differ."""
    d = matched_distances(est, truth)
    return float(np.sqrt(np.sum(d**2))) if np.all(np.isfinite(d)) else np.inf
