"""Dense real-matrix kernels used by the decomposition and synthesis code.

Everything here is a pure function of its arguments. Matrices are plain
``numpy`` arrays of dtype float64; spectra are 1-D complex arrays.
"""
import numpy as np
import scipy.linalg as spla
from scipy.optimize import linear_sum_assignment

from .errors import (
    AsymmetryDrift,
    DimensionMismatch,
    InputError,
    NoConvergence,
    NonFiniteInput,
    NotStabilizable,
    PivotBreakdown,
    SingularMatrix,
    SpectrumOverlap,
)

TOL_RESIDUAL = 1e-10
TOL_SING = 1e12

__all__ = [
    "TOL_RESIDUAL",
    "TOL_SING",
    "as_matrix",
    "solve_linear",
    "eigvals",
    "sigma_max",
    "solve_sylvester",
    "solve_care",
    "solve_dare_cheap",
    "dare_cheap_map",
    "spectral_abscissa",
    "spectral_radius",
    "sqrtm_spd",
    "matched_distance",
]


def as_matrix(a, name="matrix"):
    """Coerce ``a`` to a finite 2-D float array.

    Scalars become 1x1 and 1-D sequences become single rows.
    """
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteInput(f"{name} has non-finite entries")
    return m


def _square(a, name):
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {m.shape}")
    return m


def solve_linear(A, B, tol_sing=TOL_SING):
    """Solve ``A X = B`` for a square, well-conditioned ``A``.

    ``B`` may be a vector, in which case a vector is returned.

    Raises
    ------
    SingularMatrix
        If the 2-norm condition number of ``A`` exceeds ``tol_sing``.
    """
    A = _square(A, "A")
    vector = np.ndim(B) == 1
    Bm = as_matrix(np.reshape(B, (-1, 1)) if vector else B, "B")
    if Bm.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"A is {A.shape}, B has {Bm.shape[0]} rows")
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > tol_sing:
        raise SingularMatrix(f"condition number {cond:.3g} exceeds {tol_sing:.3g}")
    X = np.linalg.solve(A, Bm)
    return X[:, 0] if vector else X


def eigvals(A):
    A = _square(A, "A")
    try:
        return np.linalg.eigvals(A).astype(complex)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"eigenvalue iteration failed: {exc}") from exc


def sigma_max(A):
    """Largest singular value of ``A`` (zero for an all-zero matrix)."""
    A = as_matrix(A, "A")
    if A.size == 0:
        return 0.0
    return float(np.linalg.svd(A, compute_uv=False)[0])


def spectral_abscissa(A):
    return float(np.max(eigvals(A).real))


def spectral_radius(A):
    return float(np.max(np.abs(eigvals(A))))


def sqrtm_spd(Q):
    """Symmetric square root of a symmetric positive-definite matrix."""
    Q = _square(Q, "Q")
    w, V = np.linalg.eigh((Q + Q.T) / 2)
    if w.min() <= 0:
        raise InputError("matrix is not positive definite")
    return (V * np.sqrt(w)) @ V.T


def matched_distance(spec_a, spec_b):
    """Largest pairwise gap under the minimum-weight perfect matching.

    Both arguments are multisets of complex numbers of equal size; the
    matching minimises the summed distance, and the worst matched pair is
    reported.
    """
    a = np.asarray(spec_a, dtype=complex).ravel()
    b = np.asarray(spec_b, dtype=complex).ravel()
    if a.size != b.size:
        raise DimensionMismatch(f"spectra have {a.size} and {b.size} values")
    if a.size == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def solve_sylvester(E1, E2, F, tol=TOL_RESIDUAL):
    """Solve ``E1 X + X E2 = F`` by Schur reduction and back-substitution.

    Both coefficient matrices are brought to (complex) Schur form with
    unitary similarities, which turns the equation into a triangular one
    that is solved column by column.

    Parameters
    ----------
    E1 : (p, p) array_like
    E2 : (q, q) array_like
    F : (p, q) array_like
    tol : float
        Relative residual bound, ``||E1 X + X E2 - F||_F <= tol * max(1, ||F||_F)``.

    Returns
    -------
    X : (p, q) ndarray

    Raises
    ------
    SpectrumOverlap
        If ``E1`` and ``-E2`` share an eigenvalue, or the computed solution
        misses the residual bound.
    """
    E1 = _square(E1, "E1")
    E2 = _square(E2, "E2")
    F = as_matrix(F, "F")
    p, q = E1.shape[0], E2.shape[0]
    if F.shape != (p, q):
        raise DimensionMismatch(f"F must be {(p, q)}, got {F.shape}")

    T1, U = spla.schur(E1, output="complex")
    T2, V = spla.schur(E2, output="complex")
    scale = max(1.0, np.linalg.norm(E1), np.linalg.norm(E2))
    gap = np.min(np.abs(np.diag(T1)[:, None] + np.diag(T2)[None, :]))
    if gap <= 1e-10 * scale:
        raise SpectrumOverlap(f"spectra of E1 and -E2 are {gap:.3g} apart")

    X = _schur_solve(T1, T2, U, V, F)

    bound = tol * max(1.0, np.linalg.norm(F))
    res = np.linalg.norm(E1 @ X + X @ E2 - F)
    if res > bound:
        # one step of iterative refinement before giving up
        X = X + _schur_solve(T1, T2, U, V, F - E1 @ X - X @ E2)
        res = np.linalg.norm(E1 @ X + X @ E2 - F)
        if res > bound:
            raise SpectrumOverlap(f"ill-conditioned Sylvester equation, residual {res:.3g}")
    return X


def _schur_solve(T1, T2, U, V, F):
    # T1 Y + Y T2 = U* F V with T1, T2 upper triangular, one column at a time
    p, q = F.shape
    G = U.conj().T @ F @ V
    Y = np.zeros((p, q), dtype=complex)
    eye = np.eye(p)
    for j in range(q):
        Y[:, j] = spla.solve_triangular(T1 + T2[j, j] * eye, G[:, j] - Y[:, :j] @ T2[:j, j])
    return (U @ Y @ V.conj().T).real


def _check_spd(M, name):
    M = _square(M, name)
    if np.linalg.norm(M - M.T) > 1e-12 * max(1.0, np.linalg.norm(M)):
        raise InputError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise InputError(f"{name} must be positive definite") from None
    return M


def care_residual(A, B, Q, R, P):
    return A.T @ P + P @ A + Q - P @ B @ np.linalg.solve(R, B.T @ P)


def solve_care(A, B, Q, R, tol=1e-8):
    """Stabilizing solution of ``A'P + PA + Q - P B R^{-1} B' P = 0``.

    The stable invariant subspace of the Hamiltonian matrix is read off an
    ordered real Schur form; one Newton (Kleinman) step then polishes the
    result.

    Raises
    ------
    NotStabilizable
        If the Hamiltonian has eigenvalues on the imaginary axis, or the
        refined solution fails the residual or closed-loop stability check.
    AsymmetryDrift
        If the raw subspace solution is far from symmetric.
    """
    A = _square(A, "A")
    B = as_matrix(B, "B")
    n = A.shape[0]
    if B.shape[0] != n:
        raise DimensionMismatch(f"B must have {n} rows, got {B.shape}")
    Q = _check_spd(Q, "Q")
    R = _check_spd(R, "R")
    if Q.shape != (n, n) or R.shape != (B.shape[1],) * 2:
        raise DimensionMismatch("Q must be n x n and R must be m x m")

    S = B @ np.linalg.solve(R, B.T)
    H = np.block([[A, -S], [-Q, -A.T]])
    T, Z, sdim = spla.schur(H, output="real", sort="lhp")
    if sdim != n:
        raise NotStabilizable(f"Hamiltonian has {sdim} stable eigenvalues, expected {n}")
    U11, U21 = Z[:n, :n], Z[n:, :n]
    try:
        P = solve_linear(U11.T, U21.T).T
    except SingularMatrix as exc:
        raise NotStabilizable("stable subspace is not a graph over the state space") from exc

    drift = np.linalg.norm(P - P.T) / max(np.linalg.norm(P), 1e-300)
    if drift > 1e-6:
        raise AsymmetryDrift(f"relative asymmetry {drift:.3g} of the Riccati solution")
    P = (P + P.T) / 2

    # Kleinman step: (A - S P)' X + X (A - S P) = -(Q + P S P)
    Acl = A - S @ P
    if spectral_abscissa(Acl) >= 0:
        raise NotStabilizable("closed loop from the Schur solution is not Hurwitz")
    P = solve_sylvester(Acl.T, Acl, -(Q + P @ S @ P))
    P = (P + P.T) / 2

    if spectral_abscissa(A - S @ P) >= 0:
        raise NotStabilizable("refined closed loop is not Hurwitz")
    res = np.linalg.norm(care_residual(A, B, Q, R, P))
    if res > tol * np.linalg.norm(Q):
        raise NotStabilizable(f"Riccati residual {res:.3g} did not reach tolerance")
    return P


def dare_cheap_map(A, B, Q, P, tol_sing=TOL_SING):
    """One application of ``P -> Q + A'PA - A'PB (B'PB)^{-1} B'PA``."""
    G = B.T @ P @ B
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > tol_sing:
        raise PivotBreakdown(f"B'PB is numerically singular (cond {cond:.3g})")
    PA = P @ A
    BtPA = B.T @ PA
    Pn = Q + A.T @ PA - BtPA.T @ np.linalg.solve(G, BtPA)
    return (Pn + Pn.T) / 2


def solve_dare_cheap(A, B, Q, tol=1e-12, max_iter=10_000, tol_sing=TOL_SING):
    """Fixed point of the control-weight-free discrete Riccati map.

    Iterates :func:`dare_cheap_map` from ``P = Q`` until successive iterates
    agree to ``tol`` relative (Frobenius).
    """
    A = _square(A, "A")
    B = as_matrix(B, "B")
    n = A.shape[0]
    if B.shape[0] != n or B.shape[1] > n:
        raise DimensionMismatch(f"B must be n x m with m <= n, got {B.shape}")
    Q = _check_spd(Q, "Q")
    if Q.shape != (n, n):
        raise DimensionMismatch("Q must be n x n")

    P = Q.copy()
    for _ in range(max_iter):
        Pn = dare_cheap_map(A, B, Q, P, tol_sing)
        done = np.linalg.norm(Pn - P) <= tol * np.linalg.norm(P)
        P = Pn
        if done:
            break
    else:
        raise NoConvergence(f"Riccati-like iteration did not settle in {max_iter} steps")

    res = np.linalg.norm(dare_cheap_map(A, B, Q, P, tol_sing) - P)
    if res > 1e-8 * np.linalg.norm(Q):
        raise NoConvergence(f"Riccati-like residual {res:.3g} above tolerance")
    return P
