"""Pure zero-displacement Gaussian states from a symmetric parameter matrix.

Conventions used throughout the package:

* mode operators are ordered as (a_1..a_N, a_1^dag..a_N^dag), so every
  covariance-level matrix is 2N x 2N with mode i occupying rows/columns
  i and i + N;
* the Husimi covariance of the vacuum is the identity.  In this scaling
  ``O = I - inv(Sigma)`` feeds the threshold-detector probability law with
  no extra prefactors and ``P(vacuum on T) = 1 / sqrt(det Sigma_T)``.

The state is parameterized by a real symmetric matrix: its Autonne-Takagi
factorization ``theta = U diag(r) U^T`` yields the per-mode squeezing
gains r_i >= 0 and the passive interferometer U.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidStateError

__all__ = [
    "ThetaMatrix",
    "TakagiFactors",
    "GaussianState",
    "takagi_decompose",
    "build_state",
    "state_from_theta",
    "vacuum_marginal",
    "upper_triangle_indices",
]

#: max-abs tolerance for unitarity / reconstruction / hermiticity checks
DECOMPOSITION_TOL = 1e-10


def _frozen_array(a, dtype=None):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


def upper_triangle_indices(n):
    """Row-major (i, j) pairs with i <= j; the canonical parameter order."""
    return [(i, j) for i in range(n) for j in range(i, n)]


@dataclass(frozen=True)
class ThetaMatrix:
    """Real symmetric N x N parameter matrix.

    Entries must be finite and exactly symmetric; use :meth:`from_upper`
    to build one from the row-major upper-triangle vector, which is the
    representation the optimizers work on.
    """

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"theta must be square, got shape {entries.shape}")
        if entries.shape[0] < 1:
            raise ValueError("theta needs at least one mode")
        if not np.all(np.isfinite(entries)):
            raise ValueError("theta entries must be finite")
        if not np.array_equal(entries, entries.T):
            raise ValueError("theta must be exactly symmetric")
        object.__setattr__(self, "entries", _frozen_array(entries))

    @property
    def n_modes(self):
        return self.entries.shape[0]

    @classmethod
    def from_upper(cls, n_modes, upper):
        """Assemble from the row-major upper triangle (diagonal included)."""
        upper = np.asarray(upper, dtype=float)
        pairs = upper_triangle_indices(n_modes)
        if upper.shape != (len(pairs),):
            raise ValueError(
                f"expected {len(pairs)} upper-triangle entries, got {upper.shape}"
            )
        entries = np.zeros((n_modes, n_modes))
        for (i, j), v in zip(pairs, upper):
            entries[i, j] = v
            entries[j, i] = v
        return cls(entries)

    def upper(self):
        """Row-major upper triangle as a vector (inverse of from_upper)."""
        return np.array([self.entries[i, j] for i, j in upper_triangle_indices(self.n_modes)])


@dataclass(frozen=True)
class TakagiFactors:
    """Autonne-Takagi factorization: unitary U and squeezings r >= 0.

    Satisfies ``U diag(r) U^T = theta`` with r sorted descending.
    """

    unitary: np.ndarray
    squeezings: np.ndarray

    def __post_init__(self):
        u = _frozen_array(self.unitary, dtype=complex)
        r = _frozen_array(self.squeezings, dtype=float)
        n = r.shape[0]
        if u.shape != (n, n):
            raise ValueError("unitary / squeezings shape mismatch")
        if np.any(r < 0):
            raise ValueError("squeezings must be nonnegative")
        if np.abs(u.conj().T @ u - np.eye(n)).max() > DECOMPOSITION_TOL:
            raise ValueError("factor is not unitary to tolerance")
        object.__setattr__(self, "unitary", u)
        object.__setattr__(self, "squeezings", r)

    @property
    def n_modes(self):
        return self.squeezings.shape[0]


@dataclass(frozen=True)
class GaussianState:
    """Husimi covariance Sigma plus the derived quantities the detectors need.

    ``o_matrix`` is ``I - inv(Sigma)``; ``sqrt_det_sigma`` normalizes the
    click-pattern probability law.  Instances are immutable and safe to
    share across threads.
    """

    sigma: np.ndarray
    o_matrix: np.ndarray
    sqrt_det_sigma: float

    def __post_init__(self):
        sigma = _frozen_array(self.sigma, dtype=complex)
        o = _frozen_array(self.o_matrix, dtype=complex)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1] or sigma.shape[0] % 2:
            raise InvalidStateError(f"covariance has invalid shape {sigma.shape}")
        if o.shape != sigma.shape:
            raise InvalidStateError("O matrix shape does not match covariance")
        if not self.sqrt_det_sigma > 0:
            raise InvalidStateError("sqrt(det Sigma) must be positive")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "o_matrix", o)

    @property
    def n_modes(self):
        return self.sigma.shape[0] // 2


def takagi_decompose(theta):
    """Autonne-Takagi factorization of a real symmetric matrix.

    For real symmetric input the factorization reduces to the
    eigendecomposition ``theta = V diag(lam) V^T`` with negative
    eigenvalues absorbed into column phases: ``r_i = |lam_i|`` and
    ``U_i = V_i`` for lam_i >= 0, ``U_i = 1j V_i`` otherwise.  Squeezings
    are returned in descending order, ties broken by the ascending
    eigendecomposition index, so the factorization is reproducible.
    """
    if not isinstance(theta, ThetaMatrix):
        theta = ThetaMatrix(theta)
    lam, vec = np.linalg.eigh(theta.entries)
    r = np.abs(lam)
    phases = np.where(lam >= 0, 1.0 + 0.0j, 1.0j)
    unitary = vec.astype(complex) * phases[np.newaxis, :]
    order = np.argsort(-r, kind="stable")
    return TakagiFactors(unitary=unitary[:, order], squeezings=r[order])


def build_state(factors):
    """Husimi covariance of squeezed vacua sent through an interferometer.

    With C = diag(cosh 2r) and S = diag(sinh 2r),

        Sigma = [[U C U^dag, U S U^T], [(U S U^T)*, (U C U^dag)*]] / 2 + I/2,

    which gives Sigma = I for the vacuum.  ``O = I - inv(Sigma)`` is
    computed by direct inversion and ``sqrt(det Sigma)`` from the
    log-determinant; both are validated here so downstream probability
    code can trust them.
    """
    u = factors.unitary
    r = factors.squeezings
    n = factors.n_modes
    ucu = (u * np.cosh(2.0 * r)[np.newaxis, :]) @ u.conj().T
    usu = (u * np.sinh(2.0 * r)[np.newaxis, :]) @ u.T
    sigma = 0.5 * np.block([[ucu, usu], [usu.conj(), ucu.conj()]]) + 0.5 * np.eye(2 * n)

    herm_defect = np.abs(sigma - sigma.conj().T).max()
    if herm_defect > DECOMPOSITION_TOL:
        raise InvalidStateError(f"covariance not Hermitian (defect {herm_defect:.2e})")
    # Husimi positivity in this scaling: Sigma - I/2 is positive definite
    # (eigenvalues pair up as cosh(r) exp(+-r), each above 1/2, with
    # det Sigma = prod cosh^2 r >= 1).
    eigs = np.linalg.eigvalsh(sigma)
    if eigs.min() < 0.5 - DECOMPOSITION_TOL:
        raise InvalidStateError(
            f"covariance eigenvalue {eigs.min()} below the Husimi floor 1/2"
        )

    try:
        o_matrix = np.eye(2 * n) - np.linalg.inv(sigma)
    except np.linalg.LinAlgError as exc:  # unreachable for finite r; guard anyway
        raise InvalidStateError("covariance is numerically singular") from exc

    sign, logdet = np.linalg.slogdet(sigma)
    if abs(sign - 1.0) > 1e-8:
        raise InvalidStateError(f"det Sigma is not real positive (sign {sign})")
    if logdet.real < -1e-10:
        raise InvalidStateError(f"det Sigma = {np.exp(logdet.real)} below 1")
    sqrt_det = float(np.exp(0.5 * logdet.real))
    return GaussianState(sigma=sigma, o_matrix=o_matrix, sqrt_det_sigma=sqrt_det)


def state_from_theta(theta):
    """Convenience composition of takagi_decompose and build_state."""
    return build_state(takagi_decompose(theta))


def reduced_sigma(state, modes):
    """Covariance of the reduced state on the given modes (keeps pairing)."""
    modes = _checked_modes(state.n_modes, modes)
    ix = np.concatenate([modes, modes + state.n_modes])
    return state.sigma[np.ix_(ix, ix)]


def vacuum_marginal(state, modes):
    """Probability of zero photons on every mode in ``modes``.

    Equals ``1 / sqrt(det Sigma_T)`` where Sigma_T is the reduced Husimi
    covariance on T; outcomes on the remaining modes are unconstrained.
    """
    sub = reduced_sigma(state, modes)
    det = np.linalg.det(sub)
    if not (det.real > 0 and abs(det.imag) <= 1e-8 * max(1.0, abs(det.real))):
        raise InvalidStateError(f"reduced covariance determinant {det} not real positive")
    return float(1.0 / np.sqrt(det.real))


def _checked_modes(n_modes, modes):
    modes = np.asarray(sorted(set(int(m) for m in modes)), dtype=int)
    if modes.size == 0:
        raise ValueError("mode subset must be nonempty")
    if modes.min() < 0 or modes.max() >= n_modes:
        raise ValueError(f"mode indices must lie in [0, {n_modes})")
    return modes
