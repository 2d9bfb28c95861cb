"""Exact slow/fast decoupling of two-time-scale linear plants.

A plant is held in partitioned form (:class:`PartitionedLinearModel`). For
the continuous kind the full state matrix is::

    [[A1,        A2       ],
     [A3 / eps,  A4 / eps ]]

and for the discrete kind (fast sampling)::

    [[I + eps*A1, eps*A2],
     [A3,         A4    ]]

The change of variables ``x_f = x2 + M x1`` and ``x_s = x1 - N x_f``
(discrete: ``x_s = x1 - eps N x_f``) block-diagonalises the state matrix
once ``M`` and ``N`` solve their algebraic equations. ``M`` comes from a
Newton iteration whose every step is a Sylvester equation; ``N`` from a
single Sylvester equation at the converged ``M``.
"""
from dataclasses import dataclass, field
import warnings

import numpy as np

from . import matlib
from .errors import DimensionMismatch, InputError, NoConvergence, SingularFastBlock, SingularMatrix

CONTINUOUS = "continuous"
DISCRETE = "discrete"
KINDS = (CONTINUOUS, DISCRETE)

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50


def _check_kind(kind):
    if kind not in KINDS:
        raise InputError(f"kind must be one of {KINDS}, got {kind!r}")
    return kind


@dataclass(frozen=True)
class PartitionedLinearModel:
    """Singularly perturbed plant in two-block form.

    ``epsilon`` may be 0 only as the reduced-order limit used when studying
    ``M(eps)``; models read from full matrices always have ``0 < eps < 1``.
    """

    kind: str
    A1: np.ndarray
    A2: np.ndarray
    A3: np.ndarray
    A4: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    epsilon: float

    def __post_init__(self):
        _check_kind(self.kind)
        for name in ("A1", "A2", "A3", "A4", "B1", "B2"):
            m = matlib.as_matrix(getattr(self, name), name).copy()
            m.setflags(write=False)
            object.__setattr__(self, name, m)
        n1, n2, m = self.n1, self.n2, self.m
        shapes = {"A1": (n1, n1), "A2": (n1, n2), "A3": (n2, n1), "A4": (n2, n2),
                  "B1": (n1, m), "B2": (n2, m)}
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise DimensionMismatch(f"{name} must be {shape}, got {getattr(self, name).shape}")
        eps = float(self.epsilon)
        if not (0.0 <= eps < 1.0):
            raise InputError(f"epsilon must lie in [0, 1), got {eps}")
        object.__setattr__(self, "epsilon", eps)
        fast = self.A4 if self.kind == CONTINUOUS else np.eye(n2) - self.A4
        if np.linalg.cond(fast) > matlib.TOL_SING:
            label = "A4" if self.kind == CONTINUOUS else "I - A4"
            raise SingularFastBlock(f"{label} is singular")

    @property
    def n1(self):
        return self.A1.shape[0]

    @property
    def n2(self):
        return self.A4.shape[0]

    @property
    def m(self):
        return self.B1.shape[1]

    def full_matrices(self):
        """Return ``(A, B)`` of the un-partitioned plant."""
        eps = self.epsilon
        if self.kind == CONTINUOUS:
            A = np.block([[self.A1, self.A2], [self.A3 / eps, self.A4 / eps]])
            B = np.vstack([self.B1, self.B2 / eps])
        else:
            A = np.block([[np.eye(self.n1) + eps * self.A1, eps * self.A2], [self.A3, self.A4]])
            B = np.vstack([eps * self.B1, self.B2])
        return A, B


def partition_full_model(A, B, n1, n2, epsilon, kind):
    """Split full ``(A, B)`` into the blocks of a :class:`PartitionedLinearModel`.

    The inverse of :meth:`PartitionedLinearModel.full_matrices`.
    """
    _check_kind(kind)
    A = matlib.as_matrix(A, "A")
    B = matlib.as_matrix(B, "B")
    n = n1 + n2
    if n1 < 1 or n2 < 1 or A.shape != (n, n) or B.shape[0] != n:
        raise DimensionMismatch(f"A must be {n}x{n} and B {n}xm; got {A.shape}, {B.shape}")
    eps = float(epsilon)
    if not (0.0 < eps < 1.0):
        raise InputError(f"epsilon must lie in (0, 1), got {eps}")
    s, f = slice(0, n1), slice(n1, n)
    if kind == CONTINUOUS:
        blocks = dict(A1=A[s, s], A2=A[s, f], A3=eps * A[f, s], A4=eps * A[f, f],
                      B1=B[s], B2=eps * B[f])
    else:
        blocks = dict(A1=(A[s, s] - np.eye(n1)) / eps, A2=A[s, f] / eps, A3=A[f, s], A4=A[f, f],
                      B1=B[s] / eps, B2=B[f])
    return PartitionedLinearModel(kind=kind, epsilon=eps, **blocks)


@dataclass(frozen=True)
class ChangDecomposition:
    """Decoupling matrices and the resulting pure-slow / pure-fast subsystems."""

    kind: str
    epsilon: float
    M: np.ndarray
    N: np.ndarray
    A_f: np.ndarray
    B_f: np.ndarray
    A_s: np.ndarray
    B_s: np.ndarray
    newton_iterations: int
    residual_M: float
    residual_N: float

    def transform(self, x1, x2):
        """Map original coordinates ``(x1, x2)`` to ``(x_s, x_f)``.

        Works on single vectors or on row-stacked batches.
        """
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if x1.shape[-1] != self.M.shape[1] or x2.shape[-1] != self.M.shape[0]:
            raise DimensionMismatch(f"expected x1 of size {self.M.shape[1]} and x2 of size {self.M.shape[0]}")
        x_f = x2 + x1 @ self.M.T
        scale = 1.0 if self.kind == CONTINUOUS else self.epsilon
        x_s = x1 - scale * (x_f @ self.N.T)
        return x_s, x_f

    def inverse_transform(self, x_s, x_f):
        x_s = np.asarray(x_s, dtype=float)
        x_f = np.asarray(x_f, dtype=float)
        scale = 1.0 if self.kind == CONTINUOUS else self.epsilon
        x1 = x_s + scale * (x_f @ self.N.T)
        x2 = x_f - x1 @ self.M.T
        return x1, x2

    def transform_matrices(self):
        """Row blocks ``(T_s, T_f)`` with ``x_s = T_s x`` and ``x_f = T_f x``."""
        n2, n1 = self.M.shape
        T_f = np.hstack([self.M, np.eye(n2)])
        scale = 1.0 if self.kind == CONTINUOUS else self.epsilon
        T_s = np.hstack([np.eye(n1), np.zeros((n1, n2))]) - scale * self.N @ T_f
        return T_s, T_f


@dataclass(frozen=True)
class DecompositionReport:
    spectrum_full: np.ndarray
    spectrum_union: np.ndarray
    max_eigen_gap: float
    residual_M: float
    residual_N: float
    tol: float
    spectrum_tol: float
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.failures


def _newton_terms(model, M):
    """``E1, E2, F`` of the Newton step ``E1 M' + M' E2 = F`` at ``M``."""
    eps = model.epsilon
    shift = model.A4 if model.kind == CONTINUOUS else model.A4 - np.eye(model.n2)
    E1 = shift + eps * M @ model.A2
    E2 = -eps * (model.A1 - model.A2 @ M)
    F = model.A3 + eps * M @ model.A2 @ M
    return E1, E2, F


def m_equation(model, M):
    """Left-hand side of the algebraic equation whose root decouples ``x1``."""
    eps = model.epsilon
    A1, A2, A3, A4 = model.A1, model.A2, model.A3, model.A4
    if model.kind == CONTINUOUS:
        return A3 + eps * M @ A1 - A4 @ M - eps * M @ A2 @ M
    return M + eps * M @ A1 - eps * M @ A2 @ M + A3 - A4 @ M


def n_equation(model, M, N):
    E1, E2, _ = _newton_terms(model, M)
    return N @ E1 + E2 @ N - model.A2


def newton_seed(model):
    shift = model.A4 if model.kind == CONTINUOUS else model.A4 - np.eye(model.n2)
    try:
        return matlib.solve_linear(shift, model.A3)
    except SingularMatrix as exc:
        raise SingularFastBlock(str(exc)) from exc


def solve_M(model, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER, seed=None):
    """Newton iteration for ``M``.

    Parameters
    ----------
    model : PartitionedLinearModel
    tol : float
        Frobenius bound on the residual of the ``M`` equation.
    max_iter : int
        Number of Sylvester solves allowed.
    seed : array_like, optional
        Starting iterate; defaults to ``A4^{-1} A3`` (continuous) or
        ``(A4 - I)^{-1} A3`` (discrete).

    Returns
    -------
    M : ndarray, iterations : int, residual : float

    Raises
    ------
    NoConvergence
        If the residual is still above ``tol`` after ``max_iter`` steps.
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    M = newton_seed(model) if seed is None else matlib.as_matrix(seed, "seed").copy()
    if M.shape != (model.n2, model.n1):
        raise DimensionMismatch(f"seed must be {(model.n2, model.n1)}")
    for it in range(max_iter + 1):
        res = float(np.linalg.norm(m_equation(model, M)))
        if res <= tol:
            return M, it, res
        if it == max_iter:
            break
        E1, E2, F = _newton_terms(model, M)
        M = matlib.solve_sylvester(E1, E2, F)
    raise NoConvergence(f"Newton iteration for M stalled at residual {res:.3g} after {max_iter} steps")


def solve_N(model, M):
    """Solve ``N E1 + E2 N = A2`` with ``E1, E2`` taken at the converged ``M``."""
    E1, E2, _ = _newton_terms(model, M)
    # N E1 + E2 N = A2  is  E2 N + N E1 = A2
    return matlib.solve_sylvester(E2, E1, model.A2)


def assemble_subsystems(model, M, N, iterations=0):
    eps = model.epsilon
    A1, A2, A4, B1, B2 = model.A1, model.A2, model.A4, model.B1, model.B2
    if model.kind == CONTINUOUS:
        A_f = (A4 + eps * M @ A2) / eps
        B_f = (B2 + eps * M @ B1) / eps
        A_s = A1 - A2 @ M
        B_s = B1 - N @ B_f
    else:
        A_f = eps * M @ A2 + A4
        B_f = M @ B1 + B2
        A_s = np.eye(model.n1) + eps * A1 - eps * A2 @ M
        B_s = B1 - eps * N @ B_f
    return ChangDecomposition(
        kind=model.kind, epsilon=eps, M=M, N=N, A_f=A_f, B_f=B_f, A_s=A_s, B_s=B_s,
        newton_iterations=iterations,
        residual_M=float(np.linalg.norm(m_equation(model, M))),
        residual_N=float(np.linalg.norm(n_equation(model, M, N))),
    )


def decompose(model, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER, seed=None):
    """Run the full pipeline: ``M``, then ``N``, then the two subsystems."""
    M, iterations, _ = solve_M(model, tol, max_iter, seed)
    N = solve_N(model, M)
    decomp = assemble_subsystems(model, M, N, iterations)
    overlap = np.min(np.abs(matlib.eigvals(decomp.A_s)[:, None] - matlib.eigvals(decomp.A_f)[None, :]))
    if overlap < 1e-8 * max(1.0, np.linalg.norm(decomp.A_f)):
        warnings.warn("slow and fast subsystem spectra overlap; time scales are not separated",
                      RuntimeWarning, stacklevel=2)
    return decomp


def verify_decomposition(model, decomp, tol=1e-10, spectrum_tol=1e-6):
    """Re-evaluate both algebraic equations and compare spectra.

    The residuals are recomputed from ``decomp.M`` and ``decomp.N`` rather
    than trusted from the decomposition record.
    """
    A_full, _ = model.full_matrices()
    spectrum_full = matlib.eigvals(A_full)
    spectrum_union = np.concatenate([matlib.eigvals(decomp.A_s), matlib.eigvals(decomp.A_f)])
    gap = matlib.matched_distance(spectrum_full, spectrum_union)
    res_M = float(np.linalg.norm(m_equation(model, decomp.M)))
    res_N = float(np.linalg.norm(n_equation(model, decomp.M, decomp.N)))
    failures = []
    if res_M > tol:
        failures.append(f"residual_M {res_M:.3g} exceeds {tol:.3g}")
    if res_N > tol * max(1.0, np.linalg.norm(model.A2)):
        failures.append(f"residual_N {res_N:.3g} exceeds {tol:.3g}")
    if gap > spectrum_tol:
        failures.append(f"eigenvalue gap {gap:.3g} exceeds {spectrum_tol:.3g}")
    return DecompositionReport(spectrum_full, spectrum_union, gap, res_M, res_N, tol, spectrum_tol, failures)
