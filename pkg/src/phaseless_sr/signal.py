"""Continuous-domain impulse trains and their low-frequency Fourier samples."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "ImpulseSignal",
    "atom",
    "atom_matrix",
    "fourier_synthesize",
    "min_separation",
    "cyclic_distance",
    "random_instance",
    "normalize_phase",
]

MAX_REJECTIONS = 10_000


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ImpulseSignal:
    """Sum of ``k`` Dirac impulses at ``times`` in [0, 1) with complex ``amps``.

    Times are reduced modulo 1 on construction.  Both arrays are read-only.
    An empty signal (k = 0) stands for "nothing recovered".
    """

    times: np.ndarray
    amps: np.ndarray

    def __init__(self, times: Sequence[float], amps: Sequence[complex]):
        t = np.mod(np.asarray(times, dtype=float).ravel(), 1.0)
        c = np.asarray(amps, dtype=complex).ravel()
        if t.shape != c.shape:
            raise ValueError(f"times and amps differ in length ({t.size} vs {c.size})")
        if np.any(c == 0):
            raise ValueError("impulse amplitudes must be nonzero")
        if np.unique(t).size != t.size:
            raise ValueError("impulse times must be distinct")
        object.__setattr__(self, "times", _frozen(t))
        object.__setattr__(self, "amps", _frozen(c))

    @property
    def k(self) -> int:
        return int(self.times.size)

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "amps": [[float(z.real), float(z.imag)] for z in self.amps],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImpulseSignal":
        amps = [complex(re, im) for re, im in d["amps"]]
        return cls(d["times"], amps)


def atom(time: float, phase: float, size: int) -> np.ndarray:
    """Frequency-domain atom with entries ``exp(-i(2 pi f time - phase))``, f = 0..size-1."""
    f = np.arange(size)
    return np.exp(-1j * (2 * np.pi * f * time - phase))


def atom_matrix(times: Sequence[float], size: int) -> np.ndarray:
    """Vandermonde matrix whose columns are the zero-phase atoms of ``times``."""
    f = np.arange(size)[:, None]
    return np.exp(-2j * np.pi * f * np.asarray(times, dtype=float)[None, :])


def fourier_synthesize(sig: ImpulseSignal, size: int) -> np.ndarray:
    """Fourier coefficients ``X_f = sum_j c_j exp(-i 2 pi f t_j)`` for f = 0..size-1."""
    if size < 1:
        raise ValueError("window size must be >= 1")
    return atom_matrix(sig.times, size) @ sig.amps


def cyclic_distance(a, b):
    """Wrap-around distance on the unit circle [0, 1)."""
    d = np.abs(np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), 1.0))
    return np.minimum(d, 1.0 - d)


def min_separation(sig_or_times) -> float:
    """Smallest cyclic distance between two distinct impulse times.

    A single impulse has no pair to compare, so 1.0 is returned.
    """
    times = sig_or_times.times if isinstance(sig_or_times, ImpulseSignal) else np.asarray(sig_or_times, float)
    if times.size < 2:
        return 1.0
    d = cyclic_distance(times[:, None], times[None, :])
    iu = np.triu_indices(times.size, 1)
    return float(d[iu].min())


def _open_unit(rng: np.random.Generator, size: int) -> np.ndarray:
    # open interval (0, 1): redraw the (measure-zero) exact zeros
    u = rng.random(size)
    while np.any(u == 0.0):
        u[u == 0.0] = rng.random(int(np.sum(u == 0.0)))
    return u


def random_instance(k: int, separation: float, seed) -> ImpulseSignal:
    """Draw a random ``k``-impulse signal with cyclic separation at least ``separation``.

    For k = 2 the second impulse sits exactly ``separation`` after the first
    (mod 1).  For k > 2 times are rejection sampled.  Real and imaginary
    amplitude parts are uniform on (0, 1).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > 1 and k * separation >= 1.0:
        raise ValueError(f"k * separation = {k * separation:g} >= 1 is infeasible on the circle")
    rng = np.random.default_rng(seed)
    t0 = rng.random()
    if k == 1:
        times = np.array([t0])
    elif k == 2:
        times = np.array([t0, t0 + separation])
    else:
        for _ in range(MAX_REJECTIONS):
            times = rng.random(k)
            if min_separation(times) >= separation:
                break
        else:
            raise RuntimeError(
                f"no {k}-impulse configuration with separation {separation:g} "
                f"after {MAX_REJECTIONS} draws"
            )
    amps = _open_unit(rng, k) + 1j * _open_unit(rng, k)
    return ImpulseSignal(times, amps)


PIVOT_RTOL = 1e-6


def normalize_phase(X) -> np.ndarray:
    """Rotate ``X`` so its largest-magnitude entry is real and positive.

    Exact magnitude ties are common (equispaced impulses give periodic
    ``|X_f|``), so the pivot is the first entry within ``PIVOT_RTOL`` of the
    maximum; solver noise then cannot flip the choice.
    """
    X = np.asarray(X, dtype=complex)
    if X.size == 0:
        return X.copy()
    mag = np.abs(X)
    if mag.max() == 0:
        return X.copy()
    j = int(np.flatnonzero(mag >= (1 - PIVOT_RTOL) * mag.max())[0])
    return X * (mag[j] / X[j])
