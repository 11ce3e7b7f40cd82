"""Random and named generators for the bipartite state families.

Every generator takes an explicit numpy Generator; fixed seeds reproduce
bit-identical sample streams. Batch generation spawns one child seed per
item so items are independent of batch order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import (
    DegenerateDrawError,
    NotUnitaryError,
    ParamOutOfRangeError,
    RejectionBudgetExceededError,
)
from .linalg import DensityMatrix, hermitian_eigenvalues, hermitize, kron, partial_transpose


class StateFamily(IntEnum):
    MIX_SEP = 1
    NPT = 2
    CC = 3
    CQ = 4
    QC = 5
    BOUND_CANDIDATE = 6
    NAMED = 7

    @property
    def tag(self):
        return self.name.lower()

    @classmethod
    def from_tag(cls, tag):
        return cls[tag.upper()]


@dataclass(frozen=True)
class SeparableSamplerConfig:
    d: int
    m_max: int

    def __post_init__(self):
        if self.d < 2:
            raise ParamOutOfRangeError("local dimension must be >= 2")
        if self.m_max < 1:
            raise ParamOutOfRangeError("m_max must be >= 1")


@dataclass
class LabeledStateSet:
    family: StateFamily
    states: list
    d: int
    seed: int | None = None
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.states)


def ginibre(rows, cols, rng):
    """Matrix of i.i.d. complex entries with N(0,1) real and imaginary parts."""
    return rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))


def hs_random_state(dim, rng, dims=None):
    """Hilbert-Schmidt random state GG^dag / Tr(GG^dag) of global dimension dim."""
    for _ in range(100):
        g = ginibre(dim, dim, rng)
        m = g @ g.conj().T
        tr = m.trace().real
        if tr >= 1e-300:
            da, db = dims if dims is not None else (dim, 1)
            return DensityMatrix(da, db, hermitize(m / tr))
    raise DegenerateDrawError("repeated near-zero trace draws")


def haar_unitary(dim, rng):
    """Haar-distributed unitary via QR of a Ginibre matrix with phase fix."""
    q, r = np.linalg.qr(ginibre(dim, dim, rng))
    phases = np.diagonal(r).copy()
    phases /= np.abs(phases)
    return q * phases


def random_prob_vector(m, rng):
    """Flat-Dirichlet point on the simplex (normalized i.i.d. exponentials)."""
    e = rng.exponential(scale=1.0, size=m)
    return e / e.sum()


def separable_sample(cfg, rng):
    """Convex mixture of M <= m_max tensor products of local HS-random states."""
    d = cfg.d
    m = int(rng.integers(1, cfg.m_max + 1))
    probs = random_prob_vector(m, rng)
    acc = np.zeros((d * d, d * d), dtype=np.complex128)
    for p in probs:
        rho_a = hs_random_state(d, rng).mat
        rho_b = hs_random_state(d, rng).mat
        acc += p * kron(rho_a, rho_b)
    acc = hermitize(acc)
    acc /= acc.trace().real
    return DensityMatrix(d, d, acc)


def npt_sample(d, rng, max_rejections=100_000, tol=1e-10):
    """HS-random global state, rejection-sampled until its partial transpose is negative."""
    for _ in range(max_rejections):
        rho = hs_random_state(d * d, rng, dims=(d, d))
        min_eig = hermitian_eigenvalues(partial_transpose(rho))[0]
        if min_eig < -tol:
            return rho
    raise RejectionBudgetExceededError(f"no NPT state found in {max_rejections} draws at d={d}")


def cc_sample(d, rng):
    """Classical-classical: joint probabilities on products of two random local bases."""
    u_a = haar_unitary(d, rng)
    u_b = haar_unitary(d, rng)
    probs = random_prob_vector(d * d, rng)
    u = kron(u_a, u_b)
    mat = hermitize((u * probs) @ u.conj().T)
    return DensityMatrix(d, d, mat / mat.trace().real)


def cq_sample(d, rng):
    """Classical on A, arbitrary mixed states on B."""
    u_a = haar_unitary(d, rng)
    probs = random_prob_vector(d, rng)
    acc = np.zeros((d * d, d * d), dtype=np.complex128)
    for i in range(d):
        proj = np.outer(u_a[:, i], u_a[:, i].conj())
        acc += probs[i] * kron(proj, hs_random_state(d, rng).mat)
    acc = hermitize(acc)
    return DensityMatrix(d, d, acc / acc.trace().real)


def qc_sample(d, rng):
    """Arbitrary mixed states on A, classical on B."""
    u_b = haar_unitary(d, rng)
    probs = random_prob_vector(d, rng)
    acc = np.zeros((d * d, d * d), dtype=np.complex128)
    for j in range(d):
        proj = np.outer(u_b[:, j], u_b[:, j].conj())
        acc += probs[j] * kron(hs_random_state(d, rng).mat, proj)
    acc = hermitize(acc)
    return DensityMatrix(d, d, acc / acc.trace().real)


def local_unitary_conjugate(rho, u_a, u_b, unitary_tol=1e-10):
    """(U_A (x) U_B) rho (U_A (x) U_B)^dag."""
    for name, u in (("u_a", u_a), ("u_b", u_b)):
        defect = np.abs(u.conj().T @ u - np.eye(u.shape[0])).max()
        if defect > unitary_tol:
            raise NotUnitaryError(f"{name} unitarity defect {defect:.3e}")
    u = kron(u_a, u_b)
    mat = hermitize(u @ rho.mat @ u.conj().T)
    return DensityMatrix(rho.dim_a, rho.dim_b, mat)


def horodecki_3x3(a):
    """Two-qutrit PPT-entangled family with parameter a in (0, 1)."""
    if not 0.0 < a < 1.0:
        raise ParamOutOfRangeError(f"parameter must lie in (0, 1), got {a}")
    m = np.zeros((9, 9), dtype=np.complex128)
    for i in range(9):
        m[i, i] = a
    m[6, 6] = (1.0 + a) / 2.0
    m[8, 8] = (1.0 + a) / 2.0
    c = np.sqrt(1.0 - a * a) / 2.0
    m[6, 8] = c
    m[8, 6] = c
    for i, j in ((0, 4), (0, 8), (4, 8)):
        m[i, j] = a
        m[j, i] = a
    return DensityMatrix(3, 3, m / (8.0 * a + 1.0))


def _ket(i, d=3):
    v = np.zeros(d, dtype=np.complex128)
    v[i] = 1.0
    return v


def tiles_upb_state():
    """Two-qutrit PPT-entangled state from the tiles unextendible product basis."""
    s = 1.0 / np.sqrt(2.0)
    vecs = [
        np.kron(_ket(0), s * (_ket(0) - _ket(1))),
        np.kron(_ket(2), s * (_ket(1) - _ket(2))),
        np.kron(s * (_ket(0) - _ket(1)), _ket(2)),
        np.kron(s * (_ket(1) - _ket(2)), _ket(0)),
        np.kron(_ket(0) + _ket(1) + _ket(2), _ket(0) + _ket(1) + _ket(2)) / 3.0,
    ]
    proj = sum(np.outer(v, v.conj()) for v in vecs)
    return DensityMatrix(3, 3, hermitize((np.eye(9) - proj) / 4.0))


def bell_phi_minus():
    """Maximally entangled two-qubit state (|01> - |10>)/sqrt(2)."""
    psi = np.zeros(4, dtype=np.complex128)
    psi[1] = 1.0 / np.sqrt(2.0)
    psi[2] = -1.0 / np.sqrt(2.0)
    return DensityMatrix(2, 2, np.outer(psi, psi.conj()))


def maximally_mixed(d):
    n = d * d
    return DensityMatrix(d, d, np.eye(n, dtype=np.complex128) / n)


_SAMPLERS = {
    StateFamily.MIX_SEP: lambda d, rng, m_max: separable_sample(SeparableSamplerConfig(d, m_max), rng),
    StateFamily.NPT: lambda d, rng, m_max: npt_sample(d, rng),
    StateFamily.CC: lambda d, rng, m_max: cc_sample(d, rng),
    StateFamily.CQ: lambda d, rng, m_max: cq_sample(d, rng),
    StateFamily.QC: lambda d, rng, m_max: qc_sample(d, rng),
}


def sample_batch(family, d, n, seed, m_max=2):
    """Generate n states of one family with per-item spawned seeds."""
    if family not in _SAMPLERS:
        raise ParamOutOfRangeError(f"no random sampler for family {family.name}")
    sampler = _SAMPLERS[family]
    children = np.random.SeedSequence(seed).spawn(n)
    states = [sampler(d, np.random.Generator(np.random.PCG64(c)), m_max) for c in children]
    return LabeledStateSet(
        family=family,
        states=states,
        d=d,
        seed=seed,
        metadata={"m_max": m_max} if family == StateFamily.MIX_SEP else {},
    )
