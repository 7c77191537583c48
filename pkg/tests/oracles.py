"""Independent ground-truth oracles used by the test suite.

Nothing here touches covariance matrices, Torontonians, or the package's
QUBO assembly: the Fock oracle expands the squeezed state in the photon
number basis, the QUBO helpers re-derive energies from the raw objective,
and the second enumerator is a deliberately naive re-implementation.
"""

import itertools

import numpy as np

FOCK_CUTOFF = 20


def fock_state_amplitudes(unitary, squeezings, cutoff=FOCK_CUTOFF):
    """Photon-number amplitudes of squeezed vacua through an interferometer.

    The state is exp(1/2 sum_ij B_ij a_i^dag a_j^dag)|0> / prod sqrt(cosh r)
    with B = U diag(tanh r) U^T; the exponential series is applied term by
    term in a per-mode-truncated Fock space.  Truncation drops amplitudes
    above the cutoff, so probabilities summed from the result undercount
    by at most the (bounded-squeezing) tail mass.
    """
    n = len(squeezings)
    b = unitary @ np.diag(np.tanh(squeezings)) @ unitary.T
    shape = (cutoff + 1,) * n
    psi = np.zeros(shape, dtype=complex)
    psi[(0,) * n] = 1.0
    term = psi.copy()
    for k in range(1, 400):
        new = np.zeros_like(term)
        for i in range(n):
            for j in range(n):
                src = [slice(None)] * n
                dst = [slice(None)] * n
                if i == j:
                    src[i] = slice(0, cutoff - 1)
                    dst[i] = slice(2, cutoff + 1)
                    counts = np.arange(cutoff - 1)
                    weight = np.sqrt((counts + 1) * (counts + 2))
                    wshape = [1] * n
                    wshape[i] = cutoff - 1
                    new[tuple(dst)] += (
                        0.5 * b[i, j] * weight.reshape(wshape) * term[tuple(src)]
                    )
                else:
                    src[i] = slice(0, cutoff)
                    src[j] = slice(0, cutoff)
                    dst[i] = slice(1, cutoff + 1)
                    dst[j] = slice(1, cutoff + 1)
                    wi = np.sqrt(np.arange(1, cutoff + 1))
                    wj = np.sqrt(np.arange(1, cutoff + 1))
                    si = [1] * n
                    si[i] = cutoff
                    sj = [1] * n
                    sj[j] = cutoff
                    new[tuple(dst)] += (
                        0.5 * b[i, j] * wi.reshape(si) * wj.reshape(sj) * term[tuple(src)]
                    )
        term = new / k
        psi += term
        if np.linalg.norm(term) < 1e-18:
            break
    return psi / np.prod(np.sqrt(np.cosh(squeezings)))


def fock_threshold_probabilities(psi):
    """Map click patterns to probabilities by summing squared amplitudes."""
    n = psi.ndim
    weights = np.abs(psi) ** 2
    table = {}
    for pattern in itertools.product((0, 1), repeat=n):
        slicer = tuple(slice(0, 1) if b == 0 else slice(1, None) for b in pattern)
        table[pattern] = float(weights[slicer].sum())
    return table


def bounded_random_theta(rng, n, spectral_radius=0.5):
    """Random symmetric matrix rescaled so the Fock oracle converges.

    At cutoff 20 the truncated tail stays below ~1e-7 per mode when
    tanh(r) <= 0.5, comfortably inside the 1e-6 comparison tolerance.
    """
    a = rng.uniform(-1.0, 1.0, (n, n))
    theta = (a + a.T) / 2.0
    radius = np.abs(np.linalg.eigvalsh(theta)).max()
    if radius > spectral_radius:
        theta = theta * (spectral_radius / radius)
    return (theta + theta.T) / 2.0


def qubo_energy_by_loops(q, offset, x):
    """Plain-Python x^T q x + offset, summation order unlike numpy's."""
    n = len(x)
    total = offset
    for i in range(n):
        for j in range(n):
            total += q[i][j] * x[i] * x[j]
    return total


def enumerate_minimizers(q, offset, n):
    """Second brute-force enumerator: itertools + python loops."""
    best = None
    rows = []
    for bits in itertools.product((0, 1), repeat=n):
        x = bits[::-1]  # itertools varies the last element fastest
        value = qubo_energy_by_loops(q, offset, x)
        rows.append((x, value))
        if best is None or value < best:
            best = value
    scale = sum(abs(q[i][j]) for i in range(n) for j in range(n)) + abs(offset)
    tol = 1e-9 * max(1.0, scale)
    minimizers = [x for x, value in rows if value <= best + tol]
    return best, sorted(minimizers, key=lambda x: sum(b << i for i, b in enumerate(x)))


def fga_objective_direct(instance, x):
    """The raw assignment objective, written straight from its definition."""
    x = np.asarray(x)
    total = float(x @ instance.transfer @ x)
    grid = x.reshape(instance.n_flights, instance.n_gates)
    for f in range(instance.n_flights):
        total += instance.lambda_one * float(grid[f].sum() - 1.0) ** 2
    for i, j in instance.forbidden_pairs:
        for g in range(instance.n_gates):
            total += instance.lambda_not * float(grid[i, g] * grid[j, g])
    return total
