"""Truncated drift generator, diffusion matrix and ring-averaged current form.

State layout (real orthonormal trigonometric basis on the circle):

    u = [a_0 .. a_M, b_1 .. b_M,   # field phi coefficients
         pc_0 .. pc_M, ps_1 .. ps_M,  # momentum pi coefficients
         r_1, r_2]                 # bath variables

with phi(x) = a_0/sqrt(2 pi) + sum_n (a_n cos nx + b_n sin nx)/sqrt(pi), so
the Euclidean norm of a coefficient block is the L2(0, 2pi) norm of the
function.  Total dimension 4M + 4.

Coupling convention: the pairing between the bath distributions and the
momentum field is scaled so that the second-order eigenvalue shifts are
exactly the eigenvalues mu_{n,sigma} of the 2x2 coupling matrix built from
the raw Fourier coefficients (the limiting current is invariant under this
overall scale).  Concretely the mode-n coupling vector is
sqrt(2) * (Re alpha_hat(n), -Im alpha_hat(n)) and alpha_hat(0) on the
constant mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import CouplingSpec, SystemParams, validate_coupling

__all__ = [
    "BasisLayout",
    "TruncatedState",
    "DriftSystem",
    "assemble_drift",
    "current_form",
    "derivative_matrix",
    "coupling_matrix",
    "apply_drift",
    "quadratic_energy",
]


@dataclass(frozen=True)
class BasisLayout:
    """Index bookkeeping for the flattened state vector."""

    M: int

    @property
    def nfield(self) -> int:
        return 2 * self.M + 1

    @property
    def dim(self) -> int:
        return 4 * self.M + 4

    def a(self, n: int) -> int:
        return n

    def b(self, n: int) -> int:
        return self.M + n

    def pc(self, n: int) -> int:
        return self.nfield + n

    def ps(self, n: int) -> int:
        return self.nfield + self.M + n

    @property
    def q_slice(self) -> slice:
        return slice(0, self.nfield)

    @property
    def p_slice(self) -> slice:
        return slice(self.nfield, 2 * self.nfield)

    @property
    def r_slice(self) -> slice:
        return slice(2 * self.nfield, 2 * self.nfield + 2)

    def omega_squared(self) -> np.ndarray:
        """(n^2 + 1) per field slot, cos block then sin block."""
        n_cos = np.arange(self.M + 1)
        n_sin = np.arange(1, self.M + 1)
        return np.concatenate([n_cos**2 + 1, n_sin**2 + 1]).astype(float)


@dataclass
class TruncatedState:
    """Field/momentum coefficients and bath variables for cutoff M."""

    M: int
    u: np.ndarray

    def __post_init__(self) -> None:
        layout = BasisLayout(self.M)
        self.u = np.asarray(self.u, dtype=float)
        if self.u.shape != (layout.dim,):
            raise ValueError(
                f"state has shape {self.u.shape}, expected ({layout.dim},) for M={self.M}"
            )
        if not np.all(np.isfinite(self.u)):
            raise ValueError("state contains non-finite entries")

    @staticmethod
    def zeros(M: int) -> "TruncatedState":
        return TruncatedState(M, np.zeros(BasisLayout(M).dim))


def coupling_matrix(spec: CouplingSpec, M: int) -> np.ndarray:
    """(2M+1) x 2 matrix of mode-space coupling vectors, one column per bath."""
    W = np.zeros((2 * M + 1, 2))
    a0 = spec.fourier(0)
    ns = np.arange(1, M + 1)
    a1, a2 = spec.fourier_array(ns)
    for i, (azero, an) in enumerate(zip(a0, (a1, a2))):
        W[0, i] = complex(azero).real
        W[1 : M + 1, i] = math.sqrt(2.0) * an.real
        W[M + 1 :, i] = -math.sqrt(2.0) * an.imag
    return W


@dataclass
class DriftSystem:
    """Drift matrix A, diffusion Q, current form B and bookkeeping for one run."""

    A: np.ndarray
    Q: np.ndarray
    B: np.ndarray
    M: int
    eta: float
    spec: CouplingSpec
    params: SystemParams
    layout: BasisLayout = field(init=False)
    W: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.layout = BasisLayout(self.M)
        self.W = coupling_matrix(self.spec, self.M)

    def dump_csv(self, prefix: str) -> list[str]:
        """Write A, Q, B as `{prefix}_A.csv` etc.; returns the paths."""
        paths = []
        for name, mat in (("A", self.A), ("Q", self.Q), ("B", self.B)):
            path = f"{prefix}_{name}.csv"
            np.savetxt(path, mat, delimiter=",", fmt="%.17g")
            paths.append(path)
        return paths


def assemble_drift(
    params: SystemParams,
    spec: CouplingSpec,
    *,
    skip_validation: bool = False,
    validate_n_max: int | None = None,
) -> DriftSystem:
    """Build the truncated linear generator for the given parameters.

    The wave block is the cutoff Klein-Gordon flow, the bath block is unit
    damping, and the eta-coupling ties the momentum rows to the bath columns
    antisymmetrically (so the deterministic flow dissipates energy only
    through -|r|^2).
    """
    M = params.M
    if not skip_validation:
        report = validate_coupling(spec, validate_n_max or M)
        if not report.passed:
            raise ValueError(
                "coupling fails the standing assumptions; "
                "pass skip_validation=True to override:\n" + report.summary()
            )
    layout = BasisLayout(M)
    d = layout.dim
    nf = layout.nfield
    A = np.zeros((d, d))
    A[layout.q_slice, layout.p_slice] = np.eye(nf)
    A[layout.p_slice, layout.q_slice] = -np.diag(layout.omega_squared())
    W = coupling_matrix(spec, M)
    A[layout.p_slice, layout.r_slice] = -params.eta * W
    A[layout.r_slice, layout.p_slice] = params.eta * W.T
    A[layout.r_slice, layout.r_slice] = -np.eye(2)

    Q = np.zeros((d, d))
    Q[d - 2, d - 2] = params.T1
    Q[d - 1, d - 1] = params.T2

    B = current_form(M)
    return DriftSystem(A=A, Q=Q, B=B, M=M, eta=params.eta, spec=spec, params=params)


def current_form(M: int) -> np.ndarray:
    """Symmetric form of the ring-averaged energy flow (1/2pi) int pi dphi/dx.

    In coefficients: u^T B u = (1/2pi) sum_n n (pc_n b_n - ps_n a_n).
    """
    layout = BasisLayout(M)
    B = np.zeros((layout.dim, layout.dim))
    for n in range(1, M + 1):
        w = n / (4.0 * math.pi)
        B[layout.pc(n), layout.b(n)] += w
        B[layout.b(n), layout.pc(n)] += w
        B[layout.ps(n), layout.a(n)] -= w
        B[layout.a(n), layout.ps(n)] -= w
    return B


def derivative_matrix(M: int) -> np.ndarray:
    """d/dx acting on a (2M+1) field coefficient block."""
    nf = 2 * M + 1
    D = np.zeros((nf, nf))
    for n in range(1, M + 1):
        D[n, M + n] = n  # (b_n sin nx)' contributes n b_n to the cos slot
        D[M + n, n] = -n
    return D


def apply_drift(ds: DriftSystem, state: TruncatedState) -> TruncatedState:
    """Matrix-free A @ u using the block structure."""
    if state.M != ds.M:
        raise ValueError(f"state cutoff M={state.M} does not match system M={ds.M}")
    layout = ds.layout
    u = state.u
    q = u[layout.q_slice]
    p = u[layout.p_slice]
    r = u[layout.r_slice]
    out = np.empty_like(u)
    out[layout.q_slice] = p
    out[layout.p_slice] = -layout.omega_squared() * q - ds.eta * (ds.W @ r)
    out[layout.r_slice] = -r + ds.eta * (ds.W.T @ p)
    return TruncatedState(ds.M, out)


def quadratic_energy(ds: DriftSystem, u: np.ndarray) -> float:
    """0.5 (|pi|^2 + |dphi|^2 + |phi|^2 + |r|^2) in coefficient space."""
    layout = ds.layout
    q = u[layout.q_slice]
    p = u[layout.p_slice]
    r = u[layout.r_slice]
    return 0.5 * float(p @ p + q @ (layout.omega_squared() * q) + r @ r)
