"""Small dense conic solver for SDPs over Hermitian PSD blocks.

Problem form::

    minimize    sum_b Re tr(C_b^H Z_b)
    subject to  sum_b Re tr(F_{i,b}^H Z_b) = rhs_i,   i = 1..K
                Z_b Hermitian PSD.

A linear functional is a mapping ``block -> Hermitian coefficient matrix``;
on Hermitian blocks ``Re tr(F^H Z) = tr(F Z)`` is real.  Internally each block
is flattened to interleaved (Re, Im) pairs in row-major order, so a complex
block and its real vector share memory (``v.view(complex)``).

The solver is a dual alternating-direction augmented Lagrangian method: one
linear solve with ``A A^T`` (sparse LU, factored once) and one Hermitian
eigendecomposition per block per iteration, accelerated by Anderson mixing.
Every iterate's primal blocks are exactly PSD and complementary to the dual
slack.
"""

from __future__ import annotations

import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "Functional",
    "SdpProblem",
    "SdpSolution",
    "SdpBuilder",
    "solve",
    "certify",
    "certification_log",
    "psd_project",
    "real_embed",
    "real_extract",
    "toeplitz_realize",
    "toeplitz_generator",
    "add_toeplitz_constraints",
    "entry_re",
    "entry_im",
    "OPTIMAL",
    "MAX_ITERS",
    "INFEASIBLE",
]

OPTIMAL = "optimal"
MAX_ITERS = "max_iters"
INFEASIBLE = "infeasible"

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITERS = 50_000

_certification_logs: list[list[dict]] = []


@contextmanager
def certification_log():
    """Collect an independent :func:`certify` record for every solve in the block."""
    log: list[dict] = []
    _certification_logs.append(log)
    try:
        yield log
    finally:
        _certification_logs.remove(log)


# --------------------------------------------------------------------------
# Hermitian helpers


def hermitian_part(M) -> np.ndarray:
    M = np.asarray(M, dtype=complex)
    return (M + M.conj().T) / 2


def real_embed(M) -> np.ndarray:
    """Real symmetric embedding ``[[Re M, -Im M], [Im M, Re M]]`` of a Hermitian matrix."""
    M = np.asarray(M, dtype=complex)
    return np.block([[M.real, -M.imag], [M.imag, M.real]])


def real_extract(E) -> np.ndarray:
    """Inverse of :func:`real_embed`, averaging the duplicated blocks."""
    E = np.asarray(E, dtype=float)
    n = E.shape[0] // 2
    re = (E[:n, :n] + E[n:, n:]) / 2
    im = (E[n:, :n] - E[:n, n:]) / 2
    return re + 1j * im


def psd_project(M, via_real_embedding: bool = False) -> np.ndarray:
    """Frobenius-nearest PSD matrix: clip negative eigenvalues to zero.

    With ``via_real_embedding`` the projection is done on the real symmetric
    embedding (each eigenvalue appears twice) and mapped back.
    """
    if via_real_embedding:
        E = real_embed(hermitian_part(M))
        w, U = np.linalg.eigh(E)
        return real_extract((U * np.clip(w, 0, None)) @ U.T)
    w, U = np.linalg.eigh(hermitian_part(M))
    return (U * np.clip(w, 0, None)) @ U.conj().T


def toeplitz_realize(u) -> np.ndarray:
    """Hermitian Toeplitz matrix with first column ``u`` (``u[0]`` must be real)."""
    u = np.asarray(u, dtype=complex).ravel()
    if abs(u[0].imag) > 1e-12 * max(1.0, abs(u[0])):
        raise ValueError("u[0] must be real for a Hermitian Toeplitz matrix")
    u = u.copy()
    u[0] = u[0].real
    return sla.toeplitz(u, u.conj())


def toeplitz_generator(M) -> np.ndarray:
    """First column ``u`` of the Hermitian Toeplitz matrix nearest to ``M``.

    Entry ``u[d]`` is the mean of the ``d``-th subdiagonal of the Hermitian
    part of ``M``.
    """
    H = hermitian_part(M)
    n = H.shape[0]
    u = np.array([np.diagonal(H, -d).mean() for d in range(n)])
    u[0] = u[0].real
    return u


# --------------------------------------------------------------------------
# Problem description


def entry_re(j: int, l: int, scale: float = 1.0) -> list[tuple[int, int, complex]]:
    """Coefficient triplets of the functional ``scale * Re Z[j, l]``."""
    if j == l:
        return [(j, j, complex(scale))]
    return [(j, l, complex(scale / 2)), (l, j, complex(scale / 2))]


def entry_im(j: int, l: int, scale: float = 1.0) -> list[tuple[int, int, complex]]:
    """Coefficient triplets of the functional ``scale * Im Z[j, l]`` (j != l)."""
    if j == l:
        raise ValueError("diagonal of a Hermitian matrix has no imaginary part")
    return [(j, l, 0.5j * scale), (l, j, -0.5j * scale)]


@dataclass(frozen=True)
class Functional:
    """Real-linear functional ``Z -> sum_b Re tr(F_b^H Z_b)`` stored as COO triplets."""

    terms: Mapping[int, tuple[np.ndarray, np.ndarray, np.ndarray]]

    def evaluate(self, blocks: Sequence[np.ndarray]) -> float:
        total = 0.0
        for b, (r, c, v) in self.terms.items():
            total += float(np.sum(np.conj(v) * blocks[b][r, c]).real)
        return total

    def dense(self, b: int, dim: int) -> np.ndarray:
        F = np.zeros((dim, dim), dtype=complex)
        if b in self.terms:
            r, c, v = self.terms[b]
            np.add.at(F, (r, c), v)
        return F

    def to_dict(self) -> dict:
        return {
            str(b): [[int(i), int(j), float(z.real), float(z.imag)] for i, j, z in zip(r, c, v)]
            for b, (r, c, v) in self.terms.items()
        }


def _as_triplets(F, dim: int):
    if isinstance(F, (list, tuple)):
        acc: dict[tuple[int, int], complex] = {}
        for r, c, v in F:
            if not (0 <= r < dim and 0 <= c < dim):
                raise IndexError(f"entry ({r}, {c}) outside a {dim}x{dim} block")
            acc[r, c] = acc.get((r, c), 0) + complex(v)
    else:
        coo = sp.coo_matrix(F, shape=(dim, dim), dtype=complex)
        coo.sum_duplicates()
        acc = dict(zip(zip(coo.row.tolist(), coo.col.tolist()), coo.data.tolist()))
    acc = {k: v for k, v in acc.items() if v != 0}
    scale = max([1.0] + [abs(v) for v in acc.values()])
    for (r, c), v in acc.items():
        if abs(acc.get((c, r), 0) - np.conj(v)) > 1e-12 * scale:
            raise ValueError("functional coefficients must be Hermitian")
    if not acc:
        return (np.zeros(0, int), np.zeros(0, int), np.zeros(0, complex))
    keys = list(acc)
    rows = np.array([k[0] for k in keys], dtype=int)
    cols = np.array([k[1] for k in keys], dtype=int)
    return rows, cols, np.array(list(acc.values()), dtype=complex)


class SdpBuilder:
    """Accumulates objective and constraints for an :class:`SdpProblem`.

    Coefficients per block may be a dense Hermitian array, a scipy sparse
    matrix, or a list of ``(row, col, value)`` triplets.
    """

    def __init__(self, block_dims: Sequence[int]):
        self.block_dims = tuple(int(d) for d in block_dims)
        self._objective = Functional({})
        self._constraints: list[Functional] = []
        self._rhs: list[float] = []

    def _functional(self, coeffs: Mapping[int, object]) -> Functional:
        terms = {}
        for b, F in coeffs.items():
            if not 0 <= b < len(self.block_dims):
                raise IndexError(f"no block {b}")
            terms[b] = _as_triplets(F, self.block_dims[b])
        return Functional(terms)

    def minimize(self, coeffs: Mapping[int, object]) -> "SdpBuilder":
        self._objective = self._functional(coeffs)
        return self

    def constrain(self, coeffs: Mapping[int, object], rhs: float) -> "SdpBuilder":
        self._constraints.append(self._functional(coeffs))
        self._rhs.append(float(rhs))
        return self

    def build(self) -> "SdpProblem":
        return SdpProblem(self.block_dims, self._objective, tuple(self._constraints), np.array(self._rhs))


def add_toeplitz_constraints(builder: SdpBuilder, blocks: Sequence[int], size: int, constant=None):
    """Require the top-left ``size x size`` corner of ``sum(blocks) + constant`` to be Toeplitz.

    ``constant`` is an optional fixed Hermitian matrix moved to the right-hand side.
    """
    C = None if constant is None else hermitian_part(constant)
    for j in range(1, size):
        for l in range(j, size):
            re = entry_re(j, l) + entry_re(j - 1, l - 1, -1.0)
            rhs = 0.0 if C is None else -(C[j, l] - C[j - 1, l - 1]).real
            builder.constrain({b: re for b in blocks}, rhs)
            if l > j:
                im = entry_im(j, l) + entry_im(j - 1, l - 1, -1.0)
                rhs = 0.0 if C is None else -(C[j, l] - C[j - 1, l - 1]).imag
                builder.constrain({b: im for b in blocks}, rhs)


@dataclass(frozen=True)
class SdpProblem:
    block_dims: tuple[int, ...]
    objective: Functional
    constraints: tuple[Functional, ...]
    rhs: np.ndarray

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([2 * d * d for d in self.block_dims])])

    def _row(self, f: Functional):
        cols, vals = [], []
        for b, (r, c, v) in f.terms.items():
            base = self.offsets[b] + 2 * (r * self.block_dims[b] + c)
            cols += [base, base + 1]
            vals += [v.real, v.imag]
        if not cols:
            return np.zeros(0, int), np.zeros(0)
        return np.concatenate(cols), np.concatenate(vals)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """Constraint map as a real sparse matrix acting on the interleaved block vector."""
        rows, cols, vals = [], [], []
        for i, f in enumerate(self.constraints):
            c, v = self._row(f)
            rows.append(np.full(c.size, i))
            cols.append(c)
            vals.append(v)
        n = int(self.offsets[-1])
        if not rows:
            return sp.csr_matrix((0, n))
        A = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_constraints, n),
        )
        A.eliminate_zeros()
        return A

    @cached_property
    def cost(self) -> np.ndarray:
        c = np.zeros(int(self.offsets[-1]))
        cols, vals = self._row(self.objective)
        np.add.at(c, cols, vals)
        return c

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        """Block matrices (complex views) of an interleaved real vector."""
        out = []
        for b, d in enumerate(self.block_dims):
            seg = x[self.offsets[b] : self.offsets[b + 1]]
            out.append(seg.view(complex).reshape(d, d))
        return out

    def to_json(self) -> str:
        """Canonical JSON dump for cross-solver debugging."""
        return json.dumps(
            {
                "block_dims": list(self.block_dims),
                "objective": self.objective.to_dict(),
                "constraints": [
                    {"terms": f.to_dict(), "rhs": float(r)} for f, r in zip(self.constraints, self.rhs)
                ],
            }
        )


@dataclass
class SdpSolution:
    blocks: list[np.ndarray]
    objective_value: float
    primal_residual: float
    dual_residual: float
    gap: float
    status: str
    iterations: int
    dual: np.ndarray = field(repr=False)
    seconds: float = 0.0
    history: list[tuple[int, float, float, float, float]] = field(default_factory=list, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


# --------------------------------------------------------------------------
# Solver


class _NormalSolver:
    """Solves ``(A A^T) y = r``; sparse LU when nonsingular, else a pseudo-inverse."""

    def __init__(self, A: sp.csr_matrix):
        K = A.shape[0]
        self.pinv = None
        self.range_basis = None
        AAt = (A @ A.T).tocsc()
        if K == 0:
            self.lu = None
            return
        try:
            self.lu = spla.splu(AAt)
            piv = np.abs(self.lu.U.diagonal())
            if piv.min() <= 1e-11 * piv.max():
                raise RuntimeError("nearly singular")
        except RuntimeError:
            self.lu = None
            w, U = np.linalg.eigh(AAt.toarray())
            keep = w > 1e-10 * w.max()
            self.range_basis = U[:, keep]
            self.pinv = (U[:, keep] / w[keep]) @ U[:, keep].T

    def __call__(self, r: np.ndarray) -> np.ndarray:
        if self.lu is not None:
            return self.lu.solve(r)
        if self.pinv is not None:
            return self.pinv @ r
        return r

    def consistent(self, b: np.ndarray) -> bool:
        if self.range_basis is None:
            return True
        P = self.range_basis
        return np.linalg.norm(b - P @ (P.T @ b)) <= 1e-8 * (1 + np.linalg.norm(b))


def _null_solution(problem: SdpProblem, status: str, t0: float) -> SdpSolution:
    blocks = [np.zeros((d, d), dtype=complex) for d in problem.block_dims]
    return SdpSolution(blocks, 0.0, np.inf, np.inf, np.inf, status, 0, np.zeros(problem.n_constraints),
                       time.perf_counter() - t0)


def solve(
    problem: SdpProblem,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    time_limit: float | None = None,
    mu: float = 1.0,
    anderson: int = 10,
    step: float = 1.6,
    check_every: int = 10,
    record_history: bool = False,
) -> SdpSolution:
    """Solve ``problem`` to relative accuracy ``tol``.

    Stops when primal infeasibility ``|A(Z) - rhs| / (1 + |rhs|)``, dual
    infeasibility ``|C - A^*(y) - S| / (1 + |C|)`` and the relative duality gap
    all fall below ``tol``.  On ``max_iters`` (or ``time_limit`` seconds) the
    best iterate seen is returned with status ``max_iters``.  Rows whose
    coefficients are all zero, or a right-hand side outside the range of the
    constraint map, give status ``infeasible``.

    The iteration is a fixed-point map ``V -> G(V)`` on the pre-projection
    matrix; with ``anderson > 0`` it is accelerated by safeguarded type-II
    Anderson mixing over that many past steps, restarted whenever the
    safeguard rejects a mixed step.  With ``anderson = 0`` the
    plain method runs with over-relaxation ``step`` and adaptive ``mu``.
    ``max_iters`` counts evaluations of the map.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    t0 = time.perf_counter()
    A0 = problem.matrix
    b0 = np.asarray(problem.rhs, dtype=float)
    c0 = problem.cost

    row_norm = np.sqrt(np.asarray(A0.multiply(A0).sum(axis=1)).ravel())
    empty = row_norm == 0
    if np.any(np.abs(b0[empty]) > 0):
        return _null_solution(problem, INFEASIBLE, t0)
    keep = ~empty
    D = 1.0 / row_norm[keep]
    A = (sp.diags(D) @ A0[keep]).tocsr()
    AT = A.T.tocsr()
    bD = D * b0[keep]
    sig_b = np.linalg.norm(bD) or 1.0
    sig_c = np.linalg.norm(c0) or 1.0
    b = bD / sig_b
    c = c0 / sig_c

    normal = _NormalSolver(A)
    if not normal.consistent(b):
        return _null_solution(problem, INFEASIBLE, t0)

    nb0 = np.linalg.norm(b0)
    nc0 = np.linalg.norm(c0)
    dims = problem.block_dims
    off = problem.offsets
    n = c.size

    def project(v, mu):
        x = np.empty(n)
        s = np.empty(n)
        for k, d in enumerate(dims):
            V = v[off[k] : off[k + 1]].view(complex).reshape(d, d)
            w, U = np.linalg.eigh(V)
            pos = w > 0
            Up, Un = U[:, pos], U[:, ~pos]
            s[off[k] : off[k + 1]] = ((Up * w[pos]) @ Up.conj().T).view(float).ravel()
            x[off[k] : off[k + 1]] = ((Un * (-w[~pos] / mu)) @ Un.conj().T).view(float).ravel()
        return x, s

    def dual_step(x, s, mu):
        y = -normal(mu * (A @ x - b) + A @ (s - c))
        return y, c - AT @ y - mu * x

    def residuals(x, y, s):
        # reported in the original (unscaled) problem units
        pr = np.linalg.norm(A0 @ (x * sig_b) - b0) / (1 + nb0)
        dr = sig_c * np.linalg.norm(c - AT @ y - s) / (1 + nc0)
        pobj = sig_b * sig_c * float(c @ x)
        dobj = sig_b * sig_c * float(b @ y)
        gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        return pr, dr, gap, pobj

    best = None
    history = []
    status = MAX_ITERS
    evals = 0

    def track(x, y, s):
        nonlocal best
        pr, dr, gap, pobj = residuals(x, y, s)
        if record_history:
            history.append((evals, pobj, pr, dr, gap))
        merit = max(pr, dr, gap)
        if best is None or merit < best[0]:
            best = (merit, x.copy(), y.copy(), s.copy(), (pr, dr, gap, pobj), evals)
        return merit

    def out_of_time():
        return time_limit is not None and time.perf_counter() - t0 > time_limit

    if anderson > 0:
        # state v; G(v) = dual_step(project(v)); fixed points solve the KKT system
        def G(v):
            nonlocal evals
            evals += 1
            x, s = project(v, mu)
            y, gv = dual_step(x, s, mu)
            return gv, (x, y, s)

        v = np.zeros(n)
        gv, state = G(v)
        res = gv - v
        dV, dR = [], []
        while evals < max_iters:
            if evals % check_every < 2 or evals >= max_iters - 1:
                if track(*state) <= tol:
                    status = OPTIMAL
                    break
                if out_of_time():
                    break
            if dR:
                R = np.array(dR).T
                Vd = np.array(dV).T
                RtR = R.T @ R
                RtR += 1e-10 * np.trace(RtR) * np.eye(RtR.shape[0])
                gamma = np.linalg.solve(RtR, R.T @ res)
                v_new = gv - (Vd + R) @ gamma
                g_new, st_new = G(v_new)
                r_new = g_new - v_new
                if np.linalg.norm(r_new) > np.linalg.norm(res):
                    # safeguard: fall back to the plain step and drop the
                    # stale history, which otherwise can stall the mixing
                    v_new = gv
                    g_new, st_new = G(v_new)
                    r_new = g_new - v_new
                    dV.clear()
                    dR.clear()
            else:
                v_new = gv
                g_new, st_new = G(v_new)
                r_new = g_new - v_new
            dV.append(v_new - v)
            dR.append(r_new - res)
            if len(dV) > anderson:
                dV.pop(0)
                dR.pop(0)
            v, gv, res, state = v_new, g_new, r_new, st_new
    else:
        x = np.zeros(n)
        s = np.zeros(n)
        trend = 0
        adapt_left = 40
        while evals < max_iters:
            evals += 1
            y, v = dual_step(x, s, mu)
            xn, s = project(v, mu)
            x = (1 - step) * x + step * xn
            if evals % check_every and evals != max_iters:
                continue
            pr, dr, gap, _ = residuals(xn, y, s)
            if track(xn, y, s) <= tol:
                status = OPTIMAL
                break
            if out_of_time():
                break
            # balance primal and dual progress; a bounded number of changes
            # keeps the tail of the iteration stationary
            if adapt_left > 0:
                ratio = pr / max(dr, 1e-300)
                trend = trend - 1 if ratio < 0.2 else trend + 1 if ratio > 5 else 0
                if abs(trend) >= 5:
                    mu = mu * 1.6 if trend > 0 else mu / 1.6
                    trend = 0
                    adapt_left -= 1

    _, xb, yb, sb, (pr, dr, gap, pobj), _ = best
    blocks = [hermitian_part(B * sig_b) for B in problem.split(xb)]
    dual = np.zeros(problem.n_constraints)
    dual[keep] = sig_c * D * yb
    sol = SdpSolution(blocks, pobj, pr, dr, gap, status, evals, dual, time.perf_counter() - t0, history)
    if _certification_logs:
        res, min_eig = certify(problem, sol)
        rec = {"status": status, "tol": tol, "residual": res, "min_eig": min_eig, "dims": dims}
        for log in _certification_logs:
            log.append(rec)
    return sol


def certify(problem: SdpProblem, solution: SdpSolution) -> tuple[float, float]:
    """Re-evaluate a solution from the raw functionals.

    Returns ``(relative constraint residual, minimum block eigenvalue)``; the
    eigenvalue is relative to ``max(1, largest eigenvalue)`` of its block.
    Independent of the compiled sparse map used inside :func:`solve`.
    """
    vals = np.array([f.evaluate(solution.blocks) for f in problem.constraints])
    rhs = np.asarray(problem.rhs, dtype=float)
    res = float(np.linalg.norm(vals - rhs) / (1 + np.linalg.norm(rhs))) if rhs.size else 0.0
    min_eig = np.inf
    for B in solution.blocks:
        w = np.linalg.eigvalsh(hermitian_part(B))
        min_eig = min(min_eig, float(w[0] / max(1.0, w[-1])))
    return res, min_eig
