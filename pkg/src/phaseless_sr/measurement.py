"""Magnitude-only linear measurements of a Fourier vector.

Every measurement is a pair ``(a_r, b_r)`` with ``b_r = |<a_r, X>|`` and the
inner product ``<a, X> = sum_f conj(a_f) X_f`` (``np.vdot``).  Lifting with
``Q = X X^H`` turns each one into the linear constraint ``a_r^H Q a_r = b_r^2``.

A time-domain mask ``D(t)`` multiplies the impulse train before the Fourier
integral, so the observed coefficient is a short linear combination of
neighbouring ``X_l``.  The mask ``1 + exp(-i 2 pi t)`` gives ``|X_l + X_{l+1}|``;
masks are therefore stored directly as their frequency-domain vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "THEOREM2_MASKS",
    "RANDOM",
    "MeasurementSet",
    "HermitianBand",
    "theorem2_masks",
    "random_measurements",
    "band_from_masks",
]

THEOREM2_MASKS = "theorem2_masks"
RANDOM = "random"
_KINDS = (THEOREM2_MASKS, RANDOM)


@dataclass(frozen=True)
class MeasurementSet:
    vectors: np.ndarray  # (q, m) complex, one a_r per row
    magnitudes: np.ndarray  # (q,) nonnegative b_r
    kind: str

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vectors, dtype=complex))
        b = np.asarray(self.magnitudes, dtype=float).ravel()
        if v.shape[0] != b.size:
            raise ValueError(f"{v.shape[0]} vectors but {b.size} magnitudes")
        if np.any(b < 0):
            raise ValueError("magnitudes must be nonnegative")
        if self.kind not in _KINDS:
            raise ValueError(f"unknown measurement kind {self.kind!r}")
        v.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "magnitudes", b)

    @property
    def q(self) -> int:
        return int(self.magnitudes.size)

    @property
    def m(self) -> int:
        return int(self.vectors.shape[1])

    def measure(self, X) -> np.ndarray:
        """Magnitudes ``|<a_r, X>|`` of another vector under the same ``a_r``."""
        return np.abs(self.vectors.conj() @ np.asarray(X, dtype=complex))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "m": self.m,
            "vectors": [[[float(z.real), float(z.imag)] for z in row] for row in self.vectors],
            "magnitudes": self.magnitudes.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MeasurementSet":
        vec = np.array(d["vectors"], dtype=float)
        vectors = vec[..., 0] + 1j * vec[..., 1]
        if vectors.shape[1] != d["m"]:
            raise ValueError("vector length does not match m")
        return cls(vectors, d["magnitudes"], d["kind"])


@dataclass(frozen=True)
class HermitianBand:
    """Main diagonal and first superdiagonal of a Hermitian matrix."""

    diag: np.ndarray  # (m,) real, Q[j, j]
    superdiag: np.ndarray  # (m-1,) complex, Q[j, j+1]

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=float).ravel()
        s = np.asarray(self.superdiag, dtype=complex).ravel()
        if s.size != max(d.size - 1, 0):
            raise ValueError("superdiag must have length m - 1")
        if np.any(d < 0):
            raise ValueError("band diagonal must be nonnegative")
        excess = np.abs(s) ** 2 - d[:-1] * d[1:]
        if np.any(excess > 1e-9 * np.maximum(1.0, d[:-1] * d[1:])):
            raise ValueError("band violates |Q[j,j+1]|^2 <= Q[j,j] Q[j+1,j+1]; magnitudes are inconsistent")
        d.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "superdiag", s)

    @property
    def m(self) -> int:
        return int(self.diag.size)

    @classmethod
    def of(cls, Q) -> "HermitianBand":
        Q = np.asarray(Q)
        return cls(np.real(np.diag(Q)), np.diag(Q, 1))


def theorem2_masks(X) -> MeasurementSet:
    """The 3m - 2 magnitudes ``|X_j|``, ``|X_j + X_{j+1}|`` and ``|X_j - i X_{j+1}|``."""
    X = np.asarray(X, dtype=complex).ravel()
    m = X.size
    if m < 2:
        raise ValueError("mask family needs a window of at least 2 frequencies")
    eye = np.eye(m, dtype=complex)
    pair_sum = eye[:-1] + eye[1:]
    # conj(i) = -i, so <e_j + i e_{j+1}, X> = X_j - i X_{j+1}
    pair_shift = eye[:-1] + 1j * eye[1:]
    vectors = np.vstack([eye, pair_sum, pair_shift])
    return MeasurementSet(vectors, np.abs(vectors.conj() @ X), THEOREM2_MASKS)


def random_measurements(X, q: int, seed) -> MeasurementSet:
    """``q`` magnitudes against i.i.d. standard complex Gaussian vectors."""
    if q < 1:
        raise ValueError("q must be >= 1")
    X = np.asarray(X, dtype=complex).ravel()
    rng = np.random.default_rng(seed)
    vectors = (rng.standard_normal((q, X.size)) + 1j * rng.standard_normal((q, X.size))) / np.sqrt(2)
    return MeasurementSet(vectors, np.abs(vectors.conj() @ X), RANDOM)


def band_from_masks(ms: MeasurementSet) -> HermitianBand:
    """Solve the squared magnitudes for the diagonal and superdiagonal of ``X X^H``.

    Each mask touches at most two adjacent frequencies ``j, j+1``, so
    ``b^2 = |a_j|^2 Q_jj + |a_{j+1}|^2 Q_{j+1,j+1} + 2 Re(conj(a_j) a_{j+1} Q_{j,j+1})``
    is linear in the band.  The stacked system must determine the band uniquely.
    """
    if ms.kind != THEOREM2_MASKS:
        raise ValueError(f"band recovery needs {THEOREM2_MASKS!r} measurements, got {ms.kind!r}")
    m = ms.m
    # unknowns: diag (m), Re superdiag (m-1), Im superdiag (m-1)
    M = np.zeros((ms.q, 3 * m - 2))
    for r, a in enumerate(ms.vectors):
        support = np.flatnonzero(a)
        if support.size == 0 or support.size > 2 or np.ptp(support) > 1:
            raise ValueError(f"measurement {r} is not supported on one adjacent frequency pair")
        j = support[0]
        M[r, j] = abs(a[j]) ** 2
        if support.size == 2:
            M[r, j + 1] = abs(a[j + 1]) ** 2
            w = np.conj(a[j]) * a[j + 1]
            # 2 Re(w s) = 2 Re(w) Re(s) - 2 Im(w) Im(s)
            M[r, m + j] = 2 * w.real
            M[r, 2 * m - 1 + j] = -2 * w.imag
    if np.linalg.matrix_rank(M) < 3 * m - 2:
        raise ValueError("mask measurements do not determine the band")
    sol, *_ = np.linalg.lstsq(M, ms.magnitudes**2, rcond=None)
    diag = sol[:m]
    scale = max(float(np.max(np.abs(diag))), 1e-300)
    if np.any(diag < -1e-12 * scale):
        raise ValueError("negative squared magnitude in band; magnitudes are inconsistent")
    diag = np.clip(diag, 0.0, None)
    return HermitianBand(diag, sol[m : 2 * m - 1] + 1j * sol[2 * m - 1 :])
