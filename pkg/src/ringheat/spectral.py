"""Perturbative eigensystem of the drift generator and its numerical twin.

For small coupling the eigenvalues sit in clusters around +-i sqrt(n^2+1)
(doubly degenerate for n >= 1) and around -1 (the two bath modes).  The
second-order shifts are the eigenvalues mu_{n,sigma} of a 2x2 matrix built
from the coupling Fourier coefficients; the numerical decomposition labels
its eigenpairs by nearest unperturbed eigenvalue and, inside a degenerate
pair, by overlap with the sigma-eigenvectors of that 2x2 matrix.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dynamics import DriftSystem, assemble_drift
from .model import CouplingSpec, ModeIndex, SystemParams

__all__ = [
    "EigenPair",
    "ShiftData",
    "ScalingReport",
    "DegenerateSumError",
    "MatchingAmbiguityError",
    "mu_shifts",
    "phase_and_nu",
    "shift_data",
    "perturbative_eigenvalue",
    "eigendecompose",
    "find_pair",
    "check_perturbation_orders",
]


class DegenerateSumError(ValueError):
    """alpha1_hat^2 + alpha2_hat^2 vanished, so the phase psi is undefined."""


class MatchingAmbiguityError(RuntimeError):
    """Eigenvalue clusters overlap; eta is too large for reliable labelling."""


@dataclass(frozen=True)
class EigenPair:
    """Labeled eigenvalue with right vector and left functional.

    Normalization: left-right pairing f^T e = 1 (real pairing, no conjugate)
    and, for n >= 0, the momentum block of the right vector has norm 1/2.
    """

    label: ModeIndex
    lam: complex
    right: np.ndarray
    left: np.ndarray
    source: str  # "perturbative" | "numerical" | "exact"
    residual: float = 0.0


@dataclass(frozen=True)
class ShiftData:
    """Second-order spectral data of mode n: shifts, phase and cross term."""

    n: int
    mu1: float
    mu2: float
    psi: float
    nu: float

    def __post_init__(self) -> None:
        if not (self.mu1 >= self.mu2 >= 0.0):
            raise ValueError(f"shifts must satisfy mu1 >= mu2 >= 0, got {self.mu1}, {self.mu2}")
        if not math.isfinite(self.nu):
            raise ValueError("nu must be finite")


def mu_shifts(spec: CouplingSpec, n: int) -> tuple[float, float]:
    """Second-order eigenvalue shifts (mu_{n,1}, mu_{n,2}), ordered mu1 >= mu2."""
    if n < 1:
        raise ValueError("mu shifts are defined for n >= 1")
    a1, a2 = spec.fourier(n)
    power = abs(a1) ** 2 + abs(a2) ** 2
    cross = abs(a1 * a1 + a2 * a2)
    return power + cross, power - cross


def phase_and_nu(spec: CouplingSpec, n: int) -> tuple[float, float]:
    """Phase psi of alpha1_hat^2 + alpha2_hat^2 and the imaginary cross term nu."""
    a1, a2 = spec.fourier(n)
    z = a1 * a1 + a2 * a2
    if z == 0:
        raise DegenerateSumError(f"alpha1_hat^2 + alpha2_hat^2 = 0 at n={n}")
    psi = cmath.phase(z)
    nu = ((a1.conjugate() ** 2) * (a2**2)).imag / abs(z)
    return psi, nu


def shift_data(spec: CouplingSpec, n: int) -> ShiftData:
    mu1, mu2 = mu_shifts(spec, n)
    psi, nu = phase_and_nu(spec, n)
    return ShiftData(n=n, mu1=mu1, mu2=mu2, psi=psi, nu=nu)


def _mu_for_mode(spec: CouplingSpec, mode: ModeIndex) -> float:
    if mode.n >= 1:
        mu1, mu2 = mu_shifts(spec, mode.n)
        return mu1 if mode.sigma == 1 else mu2
    # The constant mode is non-degenerate; its shift comes from the squared
    # n = 0 coefficients (real by the reality constraint).
    a1, a2 = spec.fourier(0)
    return float(a1.real**2 + a2.real**2)


def perturbative_eigenvalue(spec: CouplingSpec, eta: float, mode: ModeIndex) -> complex:
    """Eigenvalue to second order in eta, dropping the O(eta^4) remainder.

    For field modes: +-i sqrt(n^2+1) - eta^2 mu_{n,sigma} / (2 (+-i sqrt(n^2+1) + 1)).
    Bath modes (n = -1) return -1 (their shift is O(eta^2) with no closed form
    exposed here).
    """
    if mode.n == -1:
        return complex(-1.0)
    lam0 = 1j * mode.branch * math.sqrt(mode.n**2 + 1)
    mu = _mu_for_mode(spec, mode)
    return lam0 - eta**2 * mu / (2.0 * (lam0 + 1.0))


def _mode_coupling_2x2(spec: CouplingSpec, n: int) -> np.ndarray:
    """Real symmetric 2x2 coupling matrix of mode n; eigenvalues mu_{n,sigma}."""
    a1, a2 = spec.fourier(n)
    K = np.zeros((2, 2))
    for a in (a1, a2):
        v = math.sqrt(2.0) * np.array([a.real, -a.imag])
        K += np.outer(v, v)
    return K


def _sigma_vectors(spec: CouplingSpec, n: int) -> np.ndarray:
    """Columns: unit (cos, sin) eigenvectors for sigma = 1, 2 of mode n."""
    K = _mode_coupling_2x2(spec, n)
    vals, vecs = np.linalg.eigh(K)  # ascending
    return vecs[:, ::-1]  # sigma=1 (larger shift) first


def _exact_unperturbed_pairs(ds: DriftSystem) -> list[EigenPair]:
    """Closed-form eigensystem at eta = 0 with the standard normalization."""
    layout = ds.layout
    d = layout.dim
    pairs: list[EigenPair] = []
    for n in range(0, ds.M + 1):
        lam_abs = math.sqrt(n**2 + 1)
        if n == 0:
            patterns = [(None, np.array([1.0]))]
        else:
            vecs = _sigma_vectors(ds.spec, n)
            patterns = [(1, vecs[:, 0]), (2, vecs[:, 1])]
        for branch in (1, -1):
            lam = 1j * branch * lam_abs
            for sigma, pat in patterns:
                e = np.zeros(d, dtype=complex)
                f = np.zeros(d, dtype=complex)
                if n == 0:
                    slots = [layout.pc(0)]
                else:
                    slots = [layout.pc(n), layout.ps(n)]
                for slot, comp in zip(slots, np.atleast_1d(pat)):
                    e[slot] = 0.5 * comp
                    e[slot - layout.nfield] = 0.5 * comp / lam
                    f[slot] = comp
                    f[slot - layout.nfield] = lam * comp
                label = ModeIndex(n=n, branch=branch, sigma=sigma)
                pairs.append(EigenPair(label, lam, e, f, source="exact"))
    for sigma in (1, 2):
        e = np.zeros(d, dtype=complex)
        f = np.zeros(d, dtype=complex)
        e[d - 3 + sigma] = 1.0
        f[d - 3 + sigma] = 1.0
        label = ModeIndex(n=-1, sigma=sigma)
        pairs.append(EigenPair(label, complex(-1.0), e, f, source="exact"))
    return pairs


def _cluster_targets(ds: DriftSystem) -> list[tuple[complex, int, int | None, int]]:
    """(unperturbed eigenvalue, n, branch, multiplicity) for each cluster."""
    targets = []
    for n in range(0, ds.M + 1):
        lam_abs = math.sqrt(n**2 + 1)
        mult = 1 if n == 0 else 2
        targets.append((1j * lam_abs, n, 1, mult))
        targets.append((-1j * lam_abs, n, -1, mult))
    targets.append((complex(-1.0), -1, None, 2))
    return targets


def eigendecompose(ds: DriftSystem, tol: float | None = None) -> list[EigenPair]:
    """Full labeled eigensystem of the drift matrix.

    Labels are assigned by nearest unperturbed eigenvalue; inside a degenerate
    pair by maximal overlap of the momentum block with the sigma-eigenvectors
    of the mode's 2x2 coupling matrix.  Left functionals are binormalized so
    that f_m^T e_n = delta_mn.
    """
    if ds.eta == 0.0:
        return _exact_unperturbed_pairs(ds)

    norm_A = float(np.linalg.norm(ds.A, ord=2))
    if tol is None:
        tol = 1e-9 * norm_A

    w, vl, vr = scipy.linalg.eig(ds.A, left=True, right=True)
    targets = _cluster_targets(ds)
    target_vals = np.array([t[0] for t in targets])

    # nearest-target assignment
    assign = np.argmin(np.abs(w[:, None] - target_vals[None, :]), axis=1)
    clusters: dict[int, list[int]] = {}
    for idx, t in enumerate(assign):
        clusters.setdefault(int(t), []).append(idx)

    # separation check: each cluster must carry exactly its multiplicity and
    # stay within a quarter of the gap to the nearest other cluster center
    gaps = np.abs(target_vals[:, None] - target_vals[None, :])
    np.fill_diagonal(gaps, np.inf)
    min_gap = gaps.min(axis=1)
    for t_idx, (lam0, n, branch, mult) in enumerate(targets):
        members = clusters.get(t_idx, [])
        if len(members) != mult:
            raise MatchingAmbiguityError(
                f"cluster at {lam0:.4g} (n={n}) captured {len(members)} eigenvalues, "
                f"expected {mult}; eta={ds.eta} too large for labelling"
            )
        radius = max(abs(w[i] - lam0) for i in members)
        if 4.0 * radius > min_gap[t_idx]:
            raise MatchingAmbiguityError(
                f"cluster at {lam0:.4g} has radius {radius:.3g} vs gap {min_gap[t_idx]:.3g}"
            )

    layout = ds.layout
    pairs: list[EigenPair] = []
    for t_idx, (lam0, n, branch, mult) in enumerate(targets):
        members = clusters[t_idx]
        es = [vr[:, i].astype(complex) for i in members]
        fs = [np.conj(vl[:, i]) for i in members]
        lams = [complex(w[i]) for i in members]

        # re-biorthogonalize inside the cluster (essential near degeneracy)
        if mult > 1:
            G = np.array([[fi @ ej for ej in es] for fi in fs])
            if abs(np.linalg.det(G)) < 1e-14 * max(1.0, np.linalg.norm(G)):
                raise MatchingAmbiguityError(
                    f"ill-conditioned pairing inside cluster at {lam0:.4g}"
                )
            Ginv = np.linalg.inv(G)
            fs = [sum(Ginv[j, i] * fs[i] for i in range(mult)) for j in range(mult)]

        if n >= 1:
            vecs = _sigma_vectors(ds.spec, n)
            slots = [layout.pc(n), layout.ps(n)]
            proj = np.array([[e[s] for s in slots] for e in es])  # mult x 2
            overlap = np.abs(proj @ vecs)  # member x sigma
            if overlap[0, 0] * overlap[1, 1] >= overlap[0, 1] * overlap[1, 0]:
                order = [(0, 1), (1, 2)]
            else:
                order = [(1, 1), (0, 2)]
        elif n == 0:
            order = [(0, None)]
        else:
            r0 = abs(es[0][layout.dim - 2])
            r1 = abs(es[1][layout.dim - 2])
            order = [(0, 1), (1, 2)] if r0 >= r1 else [(1, 1), (0, 2)]

        for member, sigma in order:
            e, f, lam = es[member], fs[member], lams[member]
            f = f / (f @ e)
            if n >= 0:
                s = 0.5 / np.linalg.norm(e[layout.p_slice])
            else:
                s = 1.0 / np.linalg.norm(e[layout.r_slice])
            e = e * s
            f = f / s
            # deterministic phase: positive-real overlap with the reference slot
            if n >= 1:
                zeta = _sigma_vectors(ds.spec, n)[:, sigma - 1] @ np.array(
                    [e[layout.pc(n)], e[layout.ps(n)]]
                )
            elif n == 0:
                zeta = e[layout.pc(0)]
            else:
                zeta = e[layout.dim - 3 + sigma]
            if abs(zeta) > 0:
                phase = zeta.conjugate() / abs(zeta)
                e = e * phase
                f = f / phase
            residual = float(np.linalg.norm(ds.A @ e - lam * e))
            if residual > tol:
                raise MatchingAmbiguityError(
                    f"eigen-residual {residual:.3g} above tolerance {tol:.3g} "
                    f"for cluster at {lam0:.4g}"
                )
            label = ModeIndex(n=n, branch=branch, sigma=sigma)
            pairs.append(EigenPair(label, lam, e, f, source="numerical", residual=residual))

    pairs.sort(key=lambda p: (p.label.n, -(p.label.branch or 0), p.label.sigma or 0))
    return pairs


def find_pair(pairs: list[EigenPair], n: int, branch: int | None, sigma: int | None) -> EigenPair:
    """Lookup helper by (branch, n, sigma)."""
    for p in pairs:
        if p.label.n == n and p.label.branch == branch and p.label.sigma == sigma:
            return p
    raise KeyError(f"no eigenpair labeled ({branch},{n},{sigma})")


@dataclass
class ScalingReport:
    """Slope fits documenting the perturbation orders of one mode."""

    n: int
    sigma: int
    etas: np.ndarray
    eigenvalue_errors: np.ndarray
    eigenvalue_slope: float
    eigvec_errors: np.ndarray
    eigvec_slope: float
    coefficient_ks: np.ndarray
    coefficient_mags: np.ndarray

    def to_csv(self) -> str:
        lines = ["eta,eigenvalue_error,eigvec_cross_error"]
        for eta, ev, vec in zip(self.etas, self.eigenvalue_errors, self.eigvec_errors):
            lines.append(f"{eta:.17g},{ev:.17g},{vec:.17g}")
        lines.append(f"# eigenvalue_slope = {self.eigenvalue_slope:.17g}")
        lines.append(f"# eigvec_slope = {self.eigvec_slope:.17g}")
        lines.append("# k,coefficient_magnitude")
        for k, mag in zip(self.coefficient_ks, self.coefficient_mags):
            lines.append(f"# {k},{mag:.17g}")
        return "\n".join(lines) + "\n"


class FitFloorError(RuntimeError):
    """Too many error values at the numerical floor to fit a slope."""


def _loglog_slope(x: np.ndarray, y: np.ndarray, floor: float = 1e-13) -> float:
    mask = y > floor
    if mask.sum() < 3:
        raise FitFloorError("fewer than 3 points above the numerical floor")
    return float(np.polyfit(np.log(x[mask]), np.log(y[mask]), 1)[0])


def check_perturbation_orders(
    spec: CouplingSpec,
    n: int,
    eta_grid,
    M: int | None = None,
    sigma: int = 1,
) -> ScalingReport:
    """Fit the error orders of the perturbative eigenvalue and eigenvector.

    Expects slope ~ 4 for |lambda_num - lambda_pert| and ~ 2 for the
    cross-mode part of the momentum component, over a decreasing eta grid.
    Also extracts the cross-mode coefficient magnitudes at the largest eta
    for decay inspection (~ 1/|n^2 - k^2|).
    """
    etas = np.asarray(sorted(eta_grid, reverse=True), dtype=float)
    if len(etas) < 4:
        raise ValueError("need at least 4 eta values for a slope fit")
    if M is None:
        M = n + 4
    if n > M:
        raise ValueError(f"mode n={n} above cutoff M={M}")
    mode = ModeIndex(n=n, branch=1, sigma=sigma)
    sig_vec = _sigma_vectors(spec, n)[:, sigma - 1]

    ev_errors = []
    vec_errors = []
    coeff_by_eta = []
    for eta in etas:
        params = SystemParams(M=M, eta=float(eta), T1=1.0, T2=1.0)
        ds = assemble_drift(params, spec)
        pairs = eigendecompose(ds)
        pair = find_pair(pairs, n, 1, sigma)
        ev_errors.append(abs(pair.lam - perturbative_eigenvalue(spec, eta, mode)))

        layout = ds.layout
        ep = pair.right[layout.p_slice]
        e0 = np.zeros_like(ep)
        e0[[n, M + n]] = 0.5 * sig_vec
        # cross-mode content: everything outside the mode-n (cos, sin) plane
        diff = ep - e0
        diff[[n, M + n]] = 0.0
        vec_errors.append(float(np.linalg.norm(diff)))

        mags = []
        for k in range(1, M + 1):
            if k == n:
                continue
            mags.append((k, float(np.hypot(abs(ep[k]), abs(ep[M + k])))))
        coeff_by_eta.append(mags)

    ev_errors = np.array(ev_errors)
    vec_errors = np.array(vec_errors)
    ks, mags = zip(*coeff_by_eta[0])  # largest eta: best signal-to-floor
    return ScalingReport(
        n=n,
        sigma=sigma,
        etas=etas,
        eigenvalue_errors=ev_errors,
        eigenvalue_slope=_loglog_slope(etas, ev_errors),
        eigvec_errors=vec_errors,
        eigvec_slope=_loglog_slope(etas, vec_errors),
        coefficient_ks=np.array(ks),
        coefficient_mags=np.array(mags),
    )
