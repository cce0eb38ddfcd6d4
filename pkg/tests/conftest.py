"""Shared independent oracles for the test suite.

Nothing here imports evaluation code from the package under test: the
Laguerre oracle is the exact finite series in rational arithmetic, the
displacement oracles are a truncated matrix exponential (float64) and a
normal-ordered series in 50-digit arithmetic, and the joint-model
oracle builds the full 2^N product-space Hamiltonian with dense kron
products.  Tests freeze values computed from these, then compare the
package against them.
"""

from __future__ import annotations

from fractions import Fraction
import math

import numpy as np
import scipy.linalg


def laguerre_series(n: int, k: int, x) -> Fraction | float:
    """Finite-series associated Laguerre value, exact for rational x.

    L_n^(k)(x) = sum_j (-1)^j C(n+k, n-j) x^j / j!.  Returns a Fraction
    when given one (or an int); float inputs fall back to fsum.
    """
    exact = isinstance(x, (int, Fraction))
    xs = Fraction(x) if exact else float(x)
    total = Fraction(0) if exact else 0.0
    terms = []
    for j in range(n + 1):
        c = math.comb(n + k, n - j) if n + k >= n - j else 0
        term = (-1) ** j * c * xs**j / (math.factorial(j) if exact else float(math.factorial(j)))
        if exact:
            total += term
        else:
            terms.append(term)
    return total if exact else math.fsum(terms)


def displacement_expm(ncut: int, alpha: complex) -> np.ndarray:
    """exp(alpha ad - conj(alpha) a) on a truncated ladder via Pade expm.

    Accurate in the lower-left block well away from the cutoff; callers
    slice out the rows/cols they trust.
    """
    n = np.arange(1, ncut + 1)
    ad = np.diag(np.sqrt(n), -1)
    gen = alpha * ad - np.conj(alpha) * ad.conj().T
    return scipy.linalg.expm(gen)


def displacement_series_mp(n: int, k: int, alpha: complex, dps: int = 50):
    """<n|D[alpha]|k> by the normal-ordered double series in mpmath.

    D = e^{-|a|^2/2} e^{a ad} e^{-conj(a) a} gives
    <n|D|k> = e^{-x/2} sum_j a^(n-j) (-conj(a))^(k-j)
              sqrt(n! k!) / (j! (n-j)! (k-j)!),  j = 0..min(n,k),
    evaluated at ``dps`` digits.  Independent of the Laguerre route.
    """
    import mpmath as mp

    with mp.workdps(dps):
        a = mp.mpc(alpha)
        acc = mp.mpc(0)
        for j in range(min(n, k) + 1):
            num = mp.sqrt(mp.factorial(n) * mp.factorial(k))
            den = mp.factorial(j) * mp.factorial(n - j) * mp.factorial(k - j)
            acc += a ** (n - j) * (-mp.conj(a)) ** (k - j) * num / den
        return acc * mp.e ** (-abs(a) ** 2 / 2)


def product_space_hamiltonian(omega, delta, g, n_atoms, ncut) -> np.ndarray:
    """Full (ncut+1) * 2^N Hamiltonian in the sigma-x product basis.

    Site factor ordering: bit i of the spin index selects site i, bit
    value 1 = sigma-x eigenvalue -1.  Dense; referee for N <= 3.
    """
    dimf = ncut + 1
    nn = np.arange(dimf)
    a = np.diag(np.sqrt(nn[1:]), 1)
    xop = a + a.T
    nhat = np.diag(nn.astype(float))
    dims = 1 << n_atoms
    idx = np.arange(dims)
    H = np.zeros((dims * dimf, dims * dimf), dtype=complex)
    # field energy + coupling: diagonal in the spin index
    for s in range(dims):
        m = n_atoms - 2 * bin(s).count("1")  # sigma-x eigenvalue of this config
        blk = slice(s * dimf, (s + 1) * dimf)
        H[blk, blk] += omega * nhat + g * m * xop
    # splitting: sigma_z flips each site between the two sigma-x states
    for i in range(n_atoms):
        flipped = idx ^ (1 << i)
        for s in range(dims):
            H[flipped[s] * dimf : (flipped[s] + 1) * dimf, s * dimf : (s + 1) * dimf] += (
                delta / 2
            ) * np.eye(dimf)
    return H


def symmetric_sector_embedding(n_atoms: int, ncut: int) -> np.ndarray:
    """Isometry from the (N+1) x (ncut+1) symmetric sector into the
    2^N product space used by :func:`product_space_hamiltonian`."""
    dims = 1 << n_atoms
    dimf = ncut + 1
    cols = []
    for q in range(n_atoms + 1):
        vec = np.zeros(dims)
        for s in range(dims):
            if bin(s).count("1") == q:
                vec[s] = 1.0
        vec /= np.linalg.norm(vec)
        cols.append(vec)
    spin = np.stack(cols, axis=1)  # dims x (N+1)
    return np.kron(spin, np.eye(dimf))  # maps sector-major joint vectors
