"""Exact stationary covariance, expected current, and its eigenbasis anatomy.

For eta > 0 the truncated linear system has a unique Gaussian stationary
state whose covariance solves the Lyapunov equation A S + S A^T + Q = 0.
The expected ring-averaged current is trace(B S).  The same current can be
decomposed over the biorthogonal eigensystem into diagonal, off-diagonal,
antiresonant, near-resonant and bath-mode contributions; only the
near-resonant class survives as eta -> 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dynamics import DriftSystem, derivative_matrix
from .model import ModeIndex
from .spectral import EigenPair, eigendecompose

__all__ = [
    "StationaryCovariance",
    "CurrentReport",
    "InstabilityError",
    "ResonanceError",
    "stationary_covariance",
    "expected_current",
    "exact_current",
    "mode_pair_covariance",
    "decompose_current",
]

CLASSES = ("diagonal", "offDiagonal", "antiresonant", "nearResonant", "bathModes")


class InstabilityError(RuntimeError):
    """Some drift eigenvalue has nonnegative real part; no unique stationary
    covariance exists (this includes eta = 0, where the field modes are
    undamped)."""


class ResonanceError(RuntimeError):
    """|conj(lambda_m) + lambda_n| fell below the resolvable threshold."""


@dataclass
class StationaryCovariance:
    """Solution of the stationary Lyapunov equation with its residual."""

    Sigma: np.ndarray
    residual: float  # Frobenius norm of A S + S A^T + Q
    method: str
    tol: float

    def check(self, tol: float | None = None) -> None:
        tol = tol if tol is not None else self.tol
        S = self.Sigma
        sym_err = float(np.linalg.norm(S - S.T))
        if sym_err > tol * max(1.0, float(np.linalg.norm(S))):
            raise ValueError(f"covariance not symmetric: {sym_err:.3g}")
        evals = np.linalg.eigvalsh(0.5 * (S + S.T))
        if evals.min() < -tol * max(1.0, float(np.trace(S))):
            raise ValueError(f"covariance not PSD: min eigenvalue {evals.min():.3g}")


def _residual_norm(A: np.ndarray, S: np.ndarray, Q: np.ndarray) -> float:
    return float(np.linalg.norm(A @ S + S @ A.T + Q))


def _solve_eigenbasis(A: np.ndarray, Q: np.ndarray, min_denom: float) -> np.ndarray:
    w, V = np.linalg.eig(A)
    denom = w[:, None] + w[None, :]
    if np.min(np.abs(denom)) < min_denom:
        raise ResonanceError(
            f"eigenvalue-sum denominator {np.min(np.abs(denom)):.3g} below threshold"
        )
    Vinv = np.linalg.inv(V)
    G = Vinv @ Q @ Vinv.T
    Y = -G / denom
    S = (V @ Y @ V.T).real
    return 0.5 * (S + S.T)


def _solve_kronecker(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    d = A.shape[0]
    if d > 100:
        raise ValueError("kronecker solve limited to dimension <= 100 (M <= 24)")
    eye = np.eye(d)
    K = np.kron(eye, A) + np.kron(A, eye)
    S = np.linalg.solve(K, -Q.reshape(-1)).reshape(d, d)
    return 0.5 * (S + S.T)


def _solve_integration(A: np.ndarray, Q: np.ndarray, rtol: float = 1e-14) -> np.ndarray:
    """Integrate dS/dt = A S + S A^T + Q from 0 by interval doubling.

    Starts from a Van Loan block-exponential on a short interval, then uses
    S(2t) = S(t) + P(t) S(t) P(t)^T, P(2t) = P(t)^2 until the update is
    negligible.
    """
    d = A.shape[0]
    t0 = 0.25 / max(1.0, float(np.linalg.norm(A, ord=2)))
    aug = np.zeros((2 * d, 2 * d))
    aug[:d, :d] = A * t0
    aug[:d, d:] = Q * t0
    aug[d:, d:] = -A.T * t0
    E = scipy.linalg.expm(aug)
    P = E[:d, :d]
    S = E[:d, d:] @ P.T
    S = 0.5 * (S + S.T)
    for _ in range(200):
        update = P @ S @ P.T
        S = 0.5 * ((S + update) + (S + update).T)
        P = P @ P
        if np.linalg.norm(update) <= rtol * max(np.linalg.norm(S), 1e-300):
            break
    else:
        raise RuntimeError("integration method failed to reach stationarity")
    return S


def _gibbs_diagonal(ds: DriftSystem) -> np.ndarray:
    """Exact unit-temperature stationary covariance diag(Omega^-2, I, I)/2.

    Satisfies A D + D A^T = -Q_unit for every eta because the wave flow and
    the antisymmetric bath coupling both conserve the quadratic energy.
    """
    lay = ds.layout
    return np.concatenate([
        0.5 / lay.omega_squared(),
        0.5 * np.ones(lay.nfield),
        0.5 * np.ones(2),
    ])


def stationary_covariance(
    ds: DriftSystem,
    method: str = "eigenbasis",
    tol: float = 1e-9,
    max_refine: int = 6,
) -> StationaryCovariance:
    """Solve A S + S A^T + Q = 0 for the given drift system.

    The solution is split as S = Tbar * D + delta * S', with Tbar the mean
    temperature, D the exact unit-temperature (Gibbs) covariance and S' the
    response to the antisymmetric forcing Q' = diag(+1, -1) on the bath
    slots, delta = (T1 - T2)/2.  Only S' requires a numerical solve, so the
    equilibrium part carries no solver error and the current is exactly
    linear in the temperature difference.

    Methods for the S' solve: "eigenbasis" (transform to the eigenbasis,
    divide by the eigenvalue sums, transform back), "kronecker" (vectorized
    dense solve, small M only), "integration" (interval-doubled time
    integration).  The result is polished by residual refinement until the
    residual is below ``tol * ||Q||``.
    """
    A, Q = ds.A, ds.Q
    evals = np.linalg.eigvals(A)
    if np.max(evals.real) >= 0.0:
        raise InstabilityError(
            f"drift spectrum reaches Re lambda = {np.max(evals.real):.3g} >= 0 "
            f"(eta={ds.eta}); no unique stationary covariance"
        )
    norm_A = float(np.linalg.norm(A, ord=2))
    # guard against exactly undamped pairs while letting genuinely slow
    # (but stable) near-resonances through
    min_denom = 1e-14 * norm_A
    if method not in ("eigenbasis", "kronecker", "integration"):
        raise ValueError(f"unknown method {method!r}")

    def solve_once(rhs: np.ndarray) -> np.ndarray:
        if method == "eigenbasis":
            return _solve_eigenbasis(A, rhs, min_denom)
        if method == "kronecker":
            return _solve_kronecker(A, rhs)
        return _solve_integration(A, rhs)

    T1, T2 = ds.params.T1, ds.params.T2
    Tbar, delta = 0.5 * (T1 + T2), 0.5 * (T1 - T2)
    D = np.diag(Tbar * _gibbs_diagonal(ds))
    norm_Q = float(np.linalg.norm(Q))
    d = A.shape[0]

    if delta == 0.0:
        S = D
        res = _residual_norm(A, S, Q)
    else:
        Qd = np.zeros_like(Q)
        Qd[d - 2, d - 2] = 1.0
        Qd[d - 1, d - 1] = -1.0
        Sd = solve_once(Qd)
        norm_Qd = float(np.linalg.norm(Qd))
        res_d = _residual_norm(A, Sd, Qd)
        target = tol * norm_Q / abs(delta)
        for _ in range(max_refine):
            if res_d <= min(target, tol * norm_Qd):
                break
            R = A @ Sd + Sd @ A.T + Qd
            R = 0.5 * (R + R.T)
            correction = solve_once(R)
            S_new = 0.5 * ((Sd + correction) + (Sd + correction).T)
            res_new = _residual_norm(A, S_new, Qd)
            if res_new >= res_d:
                break
            Sd, res_d = S_new, res_new
        S = D + delta * Sd
        S = 0.5 * (S + S.T)
        res = _residual_norm(A, S, Q)
    cov = StationaryCovariance(Sigma=S, residual=res, method=method, tol=tol)
    cov.check()
    if res > tol * norm_Q:
        raise RuntimeError(
            f"Lyapunov residual {res:.3g} above tolerance {tol * norm_Q:.3g} "
            f"(method {method})"
        )
    return cov


def expected_current(cov: StationaryCovariance, B: np.ndarray) -> float:
    """Exact finite-M, finite-eta expected ring-averaged current trace(B Sigma)."""
    return float(np.sum(B * cov.Sigma))


def exact_current(ds: DriftSystem, method: str = "eigenbasis", tol: float = 1e-9) -> float:
    """Convenience wrapper: stationary covariance then trace(B Sigma)."""
    return expected_current(stationary_covariance(ds, method=method, tol=tol), ds.B)


def mode_pair_covariance(
    m: EigenPair,
    n: EigenPair,
    T1: float,
    T2: float,
    dim: int | None = None,
    min_denom: float = 1e-14,
) -> complex:
    """Stationary covariance E[Phi(f_m)^* Phi(f_n)] of two mode functionals.

    Linear case of the stationarity identity:
    -(f_{m,r}^* . diag(T1,T2) . f_{n,r}) / (conj(lambda_m) + lambda_n).
    """
    denom = m.lam.conjugate() + n.lam
    if abs(denom) < min_denom:
        raise ResonanceError(f"resonant pair {m.label} / {n.label}: denominator {denom:.3g}")
    fm_r = m.left[-2:]
    fn_r = n.left[-2:]
    num = (fm_r.conjugate() * np.array([T1, T2])) @ fn_r
    return complex(-num / denom)


@dataclass
class CurrentReport:
    """Current broken into the eigenbasis classes; values sum to the total."""

    total: float
    by_class: dict[str, float]
    by_mode: dict[int, float]  # near-resonant contribution per n

    def class_sum(self) -> float:
        return float(sum(self.by_class.values()))


def _pair_class(lm: ModeIndex, ln: ModeIndex) -> str:
    if lm == ln:
        return "diagonal"
    if lm.n == -1 or ln.n == -1:
        return "bathModes"
    if lm.n == ln.n and lm.branch == ln.branch:
        return "nearResonant"
    if lm.n == ln.n and lm.branch != ln.branch:
        return "antiresonant"
    return "offDiagonal"


def decompose_current(
    pairs: list[EigenPair],
    T1: float,
    T2: float,
    ds: DriftSystem,
    min_denom_factor: float = 1e-12,
) -> CurrentReport:
    """Eigenbasis double sum for the current, binned by resonance class.

    Each term is (1/2pi) <e_{m,pi}, d/dx e_{n,phi}> E[Phi(f_m)^* Phi(f_n)];
    the grand total matches trace(B Sigma) from the state-space route.
    """
    layout = ds.layout
    D = derivative_matrix(ds.M)
    N = len(pairs)
    Ep = np.column_stack([p.right[layout.p_slice] for p in pairs])
    Eq = np.column_stack([p.right[layout.q_slice] for p in pairs])
    Fr = np.column_stack([p.left[layout.r_slice] for p in pairs])
    lams = np.array([p.lam for p in pairs])

    ME = Ep.conjugate().T @ D @ Eq
    denom = lams.conjugate()[:, None] + lams[None, :]
    min_denom = min_denom_factor * float(np.linalg.norm(ds.A, ord=2))
    if np.min(np.abs(denom)) < min_denom:
        raise ResonanceError(
            f"resonant functional pair: min denominator {np.min(np.abs(denom)):.3g}"
        )
    T = np.array([T1, T2])
    COV = -((Fr.conjugate().T * T) @ Fr) / denom
    terms = ME * COV / (2.0 * math.pi)

    by_class = {c: 0.0 for c in CLASSES}
    by_mode: dict[int, float] = {}
    for i in range(N):
        for j in range(N):
            cls = _pair_class(pairs[i].label, pairs[j].label)
            val = terms[i, j].real
            by_class[cls] += val
            if cls == "nearResonant":
                by_mode[pairs[i].label.n] = by_mode.get(pairs[i].label.n, 0.0) + val
    total = float(terms.sum().real)
    return CurrentReport(total=total, by_class=by_class, by_mode=by_mode)
