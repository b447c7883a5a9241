"""Domain types: mode labels, bath coupling specifications, and assumption checks.

The two heat baths couple to the momentum field through a pair of real
distributions whose Fourier coefficients must grow like ``|n|**theta`` with
``-1/2 < theta < 1/4`` and whose squared sum must stay away from zero
(non-degeneracy).  Everything here is an immutable value object.
"""

from __future__ import annotations

import cmath
import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

__all__ = [
    "ModeIndex",
    "CouplingSpec",
    "DeltaPairCoupling",
    "PowerLawCoupling",
    "CustomTableCoupling",
    "NonlinearitySpec",
    "SystemParams",
    "ValidationReport",
    "validate_coupling",
    "coupling_fourier",
    "coupling_to_config",
    "coupling_from_config",
    "custom_table_from_csv",
    "custom_table_to_csv",
]

THETA_MIN = -0.5
THETA_MAX = 0.25


@dataclass(frozen=True)
class ModeIndex:
    """Label (branch, n, sigma) of an eigenmode of the drift generator.

    ``n >= 1`` modes are doubly degenerate at zero coupling and carry both a
    frequency branch (+/-) and a sigma index; the ``n = 0`` mode has a branch
    but no sigma; the two bath modes are tagged ``n = -1`` with a sigma but no
    branch.
    """

    n: int
    branch: int | None = None  # +1 or -1
    sigma: int | None = None  # 1 or 2

    def __post_init__(self) -> None:
        if self.n < -1:
            raise ValueError(f"mode index n must be >= -1, got {self.n}")
        if self.branch not in (None, 1, -1):
            raise ValueError(f"branch must be +1, -1 or None, got {self.branch}")
        if self.sigma not in (None, 1, 2):
            raise ValueError(f"sigma must be 1, 2 or None, got {self.sigma}")
        if self.n >= 1 and (self.branch is None or self.sigma is None):
            raise ValueError("modes with n >= 1 need both a branch and a sigma index")
        if self.n == 0 and (self.branch is None or self.sigma is not None):
            raise ValueError("the n = 0 mode has a branch but no sigma index")
        if self.n == -1 and (self.branch is not None or self.sigma is None):
            raise ValueError("bath modes (n = -1) have a sigma index but no branch")

    def __str__(self) -> str:
        b = {1: "+", -1: "-", None: "."}[self.branch]
        s = "." if self.sigma is None else str(self.sigma)
        return f"({b},{self.n},{s})"


class CouplingError(ValueError):
    """Raised for invalid coupling parameters or out-of-range mode requests."""


class CouplingSpec:
    """Base class for the pair of bath coupling distributions.

    Subclasses provide the Fourier coefficients ``(alpha1_hat(n), alpha2_hat(n))``
    together with the growth exponent ``theta`` and the constants ``c1``, ``c2``
    used by the assumption checks.  Coefficients obey the reality constraint
    ``alpha_hat(-n) == conj(alpha_hat(n))``.
    """

    kind: str = "abstract"
    theta: float
    c1: float
    c2: float

    def fourier(self, n: int) -> tuple[complex, complex]:
        """Return ``(alpha1_hat(n), alpha2_hat(n))``."""
        a1, a2 = self.fourier_array(np.array([n]))
        return complex(a1[0]), complex(a2[0])

    def fourier_array(self, n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def max_mode(self) -> int | None:
        """Largest |n| with defined coefficients, or None if unbounded."""
        return None

    def config_items(self) -> dict[str, str]:
        raise NotImplementedError


def _check_theta(theta: float) -> None:
    if not (THETA_MIN < theta < THETA_MAX):
        raise CouplingError(
            f"growth exponent theta={theta} outside ({THETA_MIN}, {THETA_MAX})"
        )


@dataclass(frozen=True)
class DeltaPairCoupling(CouplingSpec):
    """Point contacts: alpha1 a unit delta at 0, alpha2 a delta of weight c at x1.

    Fourier coefficients are ``alpha1_hat(n) = 1`` and
    ``alpha2_hat(n) = c * exp(-i n x1)``, so theta = 0.
    """

    c: float
    x1: float
    c1: float = field(default=None)  # type: ignore[assignment]
    c2: float = field(default=None)  # type: ignore[assignment]
    theta: float = 0.0
    kind: str = field(default="delta_pair", init=False)

    def __post_init__(self) -> None:
        if not (0.0 < self.c < 1.0):
            raise CouplingError(f"delta-pair amplitude c={self.c} outside (0, 1)")
        if not (0.0 < self.x1 <= 2.0 * math.pi):
            raise CouplingError(f"delta-pair offset x1={self.x1} outside (0, 2*pi]")
        if self.theta != 0.0:
            raise CouplingError("delta-pair couplings have theta = 0")
        # Tightest constants that hold for every n: |alpha2_hat| = c bounds c1
        # from above, and the non-degeneracy ratio is minimized when the two
        # squared coefficients anti-align, |1 + c^2 e^{-2inx1}|^2 >= (1-c^2)^2.
        if self.c1 is None:
            c1 = min(self.c, (1.0 - self.c**2) ** 2 / (1.0 + self.c**2))
            object.__setattr__(self, "c1", c1)
        if self.c2 is None:
            object.__setattr__(self, "c2", 2.0)

    def fourier_array(self, n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = np.asarray(n)
        a1 = np.ones(n.shape, dtype=complex)
        a2 = self.c * np.exp(-1j * n * self.x1)
        return a1, a2

    def config_items(self) -> dict[str, str]:
        return {"kind": "delta_pair", "c": repr(self.c), "x1": repr(self.x1)}


@dataclass(frozen=True)
class PowerLawCoupling(CouplingSpec):
    """Couplings with power-law Fourier growth ``|n|**theta`` and a phase twist.

    ``alpha1_hat(n) = |n|**theta`` and ``alpha2_hat(n) = c |n|**theta e^{-i n x1}``
    for n != 0; the n = 0 coefficients are set to (1, c), which never enter the
    current.
    """

    theta: float
    c: float = 0.5
    x1: float = 1.0
    c1: float = field(default=None)  # type: ignore[assignment]
    c2: float = field(default=None)  # type: ignore[assignment]
    kind: str = field(default="power_law", init=False)

    def __post_init__(self) -> None:
        _check_theta(self.theta)
        if not (0.0 < self.c < 1.0):
            raise CouplingError(f"amplitude ratio c={self.c} outside (0, 1)")
        if not (0.0 < self.x1 <= 2.0 * math.pi):
            raise CouplingError(f"phase offset x1={self.x1} outside (0, 2*pi]")
        if self.c1 is None:
            c1 = min(self.c, (1.0 - self.c**2) ** 2 / (1.0 + self.c**2))
            object.__setattr__(self, "c1", c1)
        if self.c2 is None:
            object.__setattr__(self, "c2", 2.0)

    def fourier_array(self, n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = np.asarray(n)
        mag = np.where(n == 0, 1.0, np.abs(n).astype(float) ** self.theta)
        a1 = mag.astype(complex)
        a2 = self.c * mag * np.exp(-1j * n * self.x1)
        return a1, a2

    def config_items(self) -> dict[str, str]:
        return {
            "kind": "power_law",
            "theta": repr(self.theta),
            "c": repr(self.c),
            "x1": repr(self.x1),
        }


@dataclass(frozen=True)
class CustomTableCoupling(CouplingSpec):
    """Coupling given by an explicit table ``n -> (alpha1_hat, alpha2_hat)``.

    The table holds coefficients for n >= 0; negative n are filled in by the
    reality constraint.  c1/c2 default to the tightest constants over the
    supplied range (they are existential in the assumptions, so we infer and
    report rather than demand them).
    """

    table: Mapping[int, tuple[complex, complex]]
    theta: float = 0.0
    c1: float = field(default=None)  # type: ignore[assignment]
    c2: float = field(default=None)  # type: ignore[assignment]
    kind: str = field(default="custom_table", init=False)

    def __post_init__(self) -> None:
        _check_theta(self.theta)
        table = dict(self.table)
        if any(n < 0 for n in table):
            raise CouplingError("custom table rows must have n >= 0")
        if 0 in table:
            a1, a2 = table[0]
            if abs(complex(a1).imag) > 0 or abs(complex(a2).imag) > 0:
                raise CouplingError("n = 0 coefficients must be real")
        object.__setattr__(self, "table", table)
        positive = [n for n in table if n >= 1]
        if self.c1 is None or self.c2 is None:
            c1, c2 = self._inferred_constants(positive)
            if self.c1 is None:
                object.__setattr__(self, "c1", c1)
            if self.c2 is None:
                object.__setattr__(self, "c2", c2)

    def _inferred_constants(self, positive: list[int]) -> tuple[float, float]:
        if not positive:
            return 1.0, 2.0
        lo = math.inf
        hi = 0.0
        ratio = math.inf
        for n in positive:
            a1, a2 = self.table[n]
            scale = float(n) ** self.theta
            m1, m2 = abs(a1) / scale, abs(a2) / scale
            lo = min(lo, m1, m2)
            hi = max(hi, m1, m2)
            s = abs(a1 * a1 + a2 * a2) ** 2
            denom = abs(a1) ** 2 + abs(a2) ** 2
            if denom > 0:
                ratio = min(ratio, s / denom)
        # A degenerate squared sum (ratio 0) admits no positive constant at
        # all, so fall back to the growth constant and let validation flag it.
        if not math.isfinite(ratio) or ratio == 0.0:
            c1 = lo
        else:
            c1 = min(lo, ratio)
        return max(c1, 0.0), 2.0 * hi if hi > 0 else 2.0

    def max_mode(self) -> int | None:
        return max(self.table) if self.table else 0

    def fourier_array(self, n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = np.asarray(n)
        a1 = np.empty(n.shape, dtype=complex)
        a2 = np.empty(n.shape, dtype=complex)
        for idx, ni in np.ndenumerate(n):
            ni = int(ni)
            key = abs(ni)
            if key not in self.table:
                raise CouplingError(f"mode n={ni} outside the supplied table")
            v1, v2 = self.table[key]
            if ni < 0:
                v1, v2 = complex(v1).conjugate(), complex(v2).conjugate()
            a1[idx], a2[idx] = v1, v2
        return a1, a2

    def config_items(self) -> dict[str, str]:
        return {
            "kind": "custom_table",
            "theta": repr(self.theta),
            "table_csv": custom_table_to_csv(self).replace("\n", ";").rstrip(";"),
        }


@dataclass(frozen=True)
class NonlinearitySpec:
    """Optional bounded-Lipschitz restoring term applied pointwise to the field.

    ``func`` must be odd-saturating style with declared sup-norm ``bound`` and
    Lipschitz constant ``lipschitz``; both can be spot-checked on a grid.
    """

    kind: str = "zero"
    func: Callable[[np.ndarray], np.ndarray] | None = None
    bound: float = 0.0
    lipschitz: float = 0.0
    name: str = "zero"

    def __post_init__(self) -> None:
        if self.kind not in ("zero", "bounded_lipschitz"):
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")
        if self.kind == "bounded_lipschitz":
            if self.func is None:
                raise ValueError("bounded_lipschitz nonlinearity needs a function")
            if self.bound <= 0 or self.lipschitz <= 0:
                raise ValueError("declared bound and Lipschitz constant must be positive")

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    @staticmethod
    def zero() -> "NonlinearitySpec":
        return NonlinearitySpec()

    @staticmethod
    def tanh(amplitude: float = 1.0, slope: float = 1.0) -> "NonlinearitySpec":
        """Saturating odd nonlinearity a*tanh(s*y)."""
        return NonlinearitySpec(
            kind="bounded_lipschitz",
            func=lambda y: amplitude * np.tanh(slope * y),
            bound=amplitude,
            lipschitz=amplitude * slope,
            name=f"tanh(a={amplitude},s={slope})",
        )

    @staticmethod
    def clipped_cubic(cap: float = 1.0) -> "NonlinearitySpec":
        """Cubic y**3 clipped to [-cap, cap]; exploratory only."""
        return NonlinearitySpec(
            kind="bounded_lipschitz",
            func=lambda y: np.clip(y**3, -cap, cap),
            bound=cap,
            lipschitz=3.0 * cap ** (2.0 / 3.0),
            name=f"clipped_cubic(cap={cap})",
        )

    def spot_check(self, lo: float = -5.0, hi: float = 5.0, n: int = 2001) -> bool:
        """Verify the declared bound and Lipschitz constant on a sampled grid."""
        if self.is_zero:
            return True
        y = np.linspace(lo, hi, n)
        v = np.asarray(self.func(y))
        if np.max(np.abs(v)) > self.bound * (1 + 1e-12):
            return False
        slopes = np.abs(np.diff(v) / np.diff(y))
        return bool(np.max(slopes) <= self.lipschitz * (1 + 1e-6))


@dataclass(frozen=True)
class SystemParams:
    """Cutoff, coupling strength, bath temperatures and nonlinearity."""

    M: int
    eta: float
    T1: float
    T2: float
    g: NonlinearitySpec = field(default_factory=NonlinearitySpec.zero)

    def __post_init__(self) -> None:
        if self.M < 1:
            raise ValueError(f"cutoff M must be >= 1, got {self.M}")
        if not math.isfinite(self.eta) or self.eta < 0:
            raise ValueError(f"coupling strength eta={self.eta} must be finite and >= 0")
        for name, T in (("T1", self.T1), ("T2", self.T2)):
            if not math.isfinite(T) or T < 0:
                raise ValueError(f"temperature {name}={T} must be finite and >= 0")


@dataclass(frozen=True)
class Violation:
    n: int
    assumption: str  # "growth_lower", "growth_upper", "nondegeneracy"
    margin: float  # negative: amount by which the inequality fails


@dataclass
class ValidationReport:
    """Outcome of checking the coupling assumptions over 1 <= n <= n_max."""

    passed: bool
    n_max: int
    violations: list[Violation]
    worst_growth_margin: float
    worst_nondegeneracy_margin: float
    inferred_c1: float
    inferred_c2: float

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lines = [
            f"coupling assumptions: {status} (n <= {self.n_max})",
            f"  worst growth margin:        {self.worst_growth_margin:.6g}",
            f"  worst non-degeneracy margin: {self.worst_nondegeneracy_margin:.6g}",
            f"  tightest constants over range: c1={self.inferred_c1:.6g} c2={self.inferred_c2:.6g}",
        ]
        for v in self.violations[:20]:
            lines.append(f"  violated {v.assumption} at n={v.n} (margin {v.margin:.3g})")
        if len(self.violations) > 20:
            lines.append(f"  ... {len(self.violations) - 20} more violations")
        return "\n".join(lines)


def coupling_fourier(spec: CouplingSpec, n: int) -> tuple[complex, complex]:
    """Fourier coefficient pair ``(alpha1_hat(n), alpha2_hat(n))``."""
    return spec.fourier(n)


def validate_coupling(spec: CouplingSpec, n_max: int) -> ValidationReport:
    """Check the growth and non-degeneracy assumptions for 1 <= n <= n_max.

    Growth: ``c1 n^theta <= |alpha_i_hat(n)| <= c2 n^theta`` (the strict upper
    inequality is checked as <= with a reported margin).  Non-degeneracy:
    ``c1 (|a1|^2 + |a2|^2) <= |a1^2 + a2^2|^2``.  Violations are collected, not
    raised.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    top = spec.max_mode()
    if top is not None:
        n_max = min(n_max, top)
    ns = np.arange(1, n_max + 1)
    a1, a2 = spec.fourier_array(ns)
    scale = ns.astype(float) ** spec.theta
    m1, m2 = np.abs(a1), np.abs(a2)
    sq = np.abs(a1 * a1 + a2 * a2) ** 2
    power = m1**2 + m2**2

    violations: list[Violation] = []
    lower = np.minimum(m1 - spec.c1 * scale, m2 - spec.c1 * scale)
    upper = np.minimum(spec.c2 * scale - m1, spec.c2 * scale - m2)
    nondeg = sq - spec.c1 * power
    tol = 1e-12
    for i, n in enumerate(ns):
        if lower[i] < -tol * max(1.0, scale[i]):
            violations.append(Violation(int(n), "growth_lower", float(lower[i])))
        if upper[i] < -tol * max(1.0, scale[i]):
            violations.append(Violation(int(n), "growth_upper", float(upper[i])))
        if nondeg[i] < -tol * max(1.0, float(power[i])):
            violations.append(Violation(int(n), "nondegeneracy", float(nondeg[i])))

    with np.errstate(divide="ignore", invalid="ignore"):
        inferred_c1 = float(
            min(np.min(m1 / scale), np.min(m2 / scale), np.min(sq / np.maximum(power, 1e-300)))
        )
    inferred_c2 = float(max(np.max(m1 / scale), np.max(m2 / scale)))
    return ValidationReport(
        passed=not violations,
        n_max=int(n_max),
        violations=violations,
        worst_growth_margin=float(min(np.min(lower), np.min(upper))),
        worst_nondegeneracy_margin=float(np.min(nondeg)),
        inferred_c1=inferred_c1,
        inferred_c2=inferred_c2,
    )


# --- plain-text serialization -------------------------------------------------

def coupling_to_config(spec: CouplingSpec) -> dict[str, str]:
    """Key=value items describing the coupling (one config section)."""
    return spec.config_items()


def coupling_from_config(items: Mapping[str, str]) -> CouplingSpec:
    """Rebuild a coupling from the key=value items of a config section."""
    kind = items.get("kind", "").strip()
    if kind == "delta_pair":
        return DeltaPairCoupling(c=float(items["c"]), x1=float(items["x1"]))
    if kind == "power_law":
        return PowerLawCoupling(
            theta=float(items.get("theta", 0.0)),
            c=float(items.get("c", 0.5)),
            x1=float(items.get("x1", 1.0)),
        )
    if kind == "custom_table":
        text = items["table_csv"].replace(";", "\n")
        return custom_table_from_csv(io.StringIO(text), theta=float(items.get("theta", 0.0)))
    raise CouplingError(f"unknown coupling kind {kind!r}")


def custom_table_from_csv(source, theta: float = 0.0) -> CustomTableCoupling:
    """Read a table coupling from CSV rows (n, Re a1, Im a1, Re a2, Im a2)."""
    if isinstance(source, (str, bytes)):
        source = io.StringIO(source if isinstance(source, str) else source.decode())
    table: dict[int, tuple[complex, complex]] = {}
    for row in csv.reader(source):
        if not row or row[0].lstrip().startswith("#") or row[0].strip().lower() == "n":
            continue
        n, re1, im1, re2, im2 = (v.strip() for v in row[:5])
        table[int(n)] = (
            complex(float(re1), float(im1)),
            complex(float(re2), float(im2)),
        )
    return CustomTableCoupling(table=table, theta=theta)


def custom_table_to_csv(spec: CustomTableCoupling) -> str:
    """Inverse of :func:`custom_table_from_csv`."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    for n in sorted(spec.table):
        a1, a2 = (complex(v) for v in spec.table[n])
        writer.writerow([n, repr(a1.real), repr(a1.imag), repr(a2.real), repr(a2.imag)])
    return out.getvalue()
