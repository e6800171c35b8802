"""Constructors for the example systems used throughout: depolarizing
semigroups, classical-chain embeddings, tensor products, heat-bath Gibbs
samplers for commuting Hamiltonians, and the two-channel counterexample
family distinguishing the detailed-balance notions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .linalg import (
    DimensionMismatchError,
    FaithfulState,
    SuperOperator,
    ValidationError,
    as_complex_matrix,
    gamma_matrix,
    hermitian_part,
    left_right_matrix,
    require_hermitian,
    spectral_transform_matrix,
)
from .lindblad import GeneratorContext, Lindbladian, context_from_generator

DEFAULT_DIMENSION_GUARD = 64


# ---------------------------------------------------------------------------
# Depolarizing semigroup
# ---------------------------------------------------------------------------

def depolarizing(sigma) -> Lindbladian:
    """Depolarizing generator X -> Tr[sigma X] id - X toward a faithful state.

    Jumps are sqrt(s_x) |x><y| over all ordered pairs in sigma's eigenbasis,
    which reduces to d^(-1/2) |x><y| at the maximally mixed state. H = 0.
    """
    st = sigma if isinstance(sigma, FaithfulState) else FaithfulState(sigma)
    d = st.dim
    u = st.eigenvectors
    jumps = []
    for x in range(d):
        ket_x = u[:, x:x + 1]
        for y in range(d):
            bra_y = u[:, y:y + 1].conj().T
            jumps.append(np.sqrt(st.eigenvalues[x]) * (ket_x @ bra_y))
    return Lindbladian(np.zeros((d, d)), jumps)


def maximally_mixed(dim: int) -> FaithfulState:
    return FaithfulState(np.eye(dim) / dim)


# ---------------------------------------------------------------------------
# Classical chains
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ClassicalChain:
    """Continuous-time chain given by its rate matrix (rows sum to zero)."""

    rates: np.ndarray
    n: int = field(init=False)
    stationary: np.ndarray = field(init=False)
    reversible: bool = field(init=False)

    def __post_init__(self):
        q = np.asarray(self.rates, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValidationError(f"rate matrix must be square, got {q.shape}")
        n = q.shape[0]
        off = q - np.diag(np.diag(q))
        if np.min(off) < -1e-14:
            raise ValidationError("off-diagonal rates must be nonnegative")
        if np.max(np.abs(q.sum(axis=1))) > 1e-12:
            raise ValidationError("rate matrix rows must sum to zero")
        # pi Q = 0: kernel of Q^T, normalized to a probability vector.
        _, _, vh = np.linalg.svd(q.T)
        pi = np.real(vh[-1])
        pi = pi / pi.sum()
        if np.min(pi) < -1e-12:
            raise ValidationError("chain has no strictly positive stationary vector")
        pi = np.clip(pi, 0.0, None)
        pi = pi / pi.sum()
        if np.max(np.abs(pi @ q)) > 1e-12:
            raise ValidationError("stationary vector residual exceeds 1e-12")
        flux = pi[:, None] * q
        reversible = bool(np.max(np.abs(flux - flux.T)) <= 1e-12)
        object.__setattr__(self, "rates", q)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "stationary", pi)
        object.__setattr__(self, "reversible", reversible)

    def gap(self) -> float:
        """Smallest nonzero decay rate: -max nonzero Re eigenvalue of Q."""
        w = np.linalg.eigvals(self.rates)
        decay = sorted(-w.real)
        nonzero = [x for x in decay if x > 1e-12]
        if not nonzero:
            raise ValidationError("rate matrix has no spectral gap")
        return float(min(nonzero))


def classical_embedding(chain: ClassicalChain, coherence_damping: float | None = None) -> Lindbladian:
    """Embed a classical chain as a diagonal-sector Lindbladian.

    One jump sqrt(Q_ij) |j><i| per directed edge reproduces the chain on
    diagonal observables: L(diag g) = diag(Q g). The edge jumps alone leave
    coherences decaying at (kappa_i + kappa_j)/2, which can undercut the
    chain's gap, so per-state dephasing at rate ``coherence_damping``
    (default: the chain's gap) is added; it acts as zero on the diagonal
    sector and on diagonal-observable Dirichlet forms.
    """
    q = chain.rates
    n = chain.n
    jumps = []
    for i in range(n):
        for j in range(n):
            if i != j and q[i, j] > 0:
                e = np.zeros((n, n), dtype=complex)
                e[j, i] = np.sqrt(q[i, j])
                jumps.append(e)
    gamma = chain.gap() if coherence_damping is None else float(coherence_damping)
    if gamma > 0:
        for i in range(n):
            e = np.zeros((n, n), dtype=complex)
            e[i, i] = np.sqrt(gamma)
            jumps.append(e)
    return Lindbladian(np.zeros((n, n)), jumps)


# ---------------------------------------------------------------------------
# Tensor products
# ---------------------------------------------------------------------------

def _embed(op: np.ndarray, site: int, dims: list[int]) -> np.ndarray:
    """op acting on factor ``site`` of a tensor product, identity elsewhere."""
    out = np.eye(1, dtype=complex)
    for k, d in enumerate(dims):
        out = np.kron(out, op if k == site else np.eye(d))
    return out


def tensor_product(lindbladians: list[Lindbladian], dimension_guard: int = DEFAULT_DIMENSION_GUARD) -> Lindbladian:
    """Sum of factor generators acting on the tensor-product space."""
    dims = [l.dim for l in lindbladians]
    total = int(np.prod(dims))
    if total > dimension_guard:
        raise ValidationError(f"product dimension {total} exceeds guard {dimension_guard}")
    h = np.zeros((total, total), dtype=complex)
    jumps = []
    for site, lind in enumerate(lindbladians):
        h += _embed(lind.hamiltonian, site, dims)
        for l in lind.jumps:
            jumps.append(_embed(l, site, dims))
    return Lindbladian(h, jumps)


# ---------------------------------------------------------------------------
# Heat-bath Gibbs samplers for commuting Hamiltonians
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CommutingHamiltonian:
    """H = sum of commuting local terms on n sites of local dimension d."""

    n_sites: int
    local_dim: int
    terms: list[tuple[tuple[int, ...], np.ndarray]]
    beta: float
    max_support: int = 2

    def __post_init__(self):
        dims = [self.local_dim] * self.n_sites
        embedded = []
        for support, h in self.terms:
            if len(support) > self.max_support:
                raise ValidationError(f"support {support} exceeds max size {self.max_support}")
            if any(s < 0 or s >= self.n_sites for s in support):
                raise ValidationError(f"support {support} out of range")
            h = require_hermitian(h, name="local term")
            if np.linalg.norm(h, 2) > 1.0 + 1e-12:
                raise ValidationError("local terms must have operator norm at most 1")
            embedded.append(self._embed_term(support, h, dims))
        for i in range(len(embedded)):
            for j in range(i + 1, len(embedded)):
                comm = embedded[i] @ embedded[j] - embedded[j] @ embedded[i]
                if np.max(np.abs(comm)) > 1e-10:
                    raise ValidationError(f"terms {i} and {j} do not commute")
        object.__setattr__(self, "_embedded", embedded)

    def _embed_term(self, support: tuple[int, ...], h: np.ndarray, dims: list[int]) -> np.ndarray:
        # Permute the term's legs onto its support sites.
        n = self.n_sites
        d = self.local_dim
        full = np.kron(h, np.eye(d ** (n - len(support))))
        order = list(support) + [s for s in range(n) if s not in support]
        perm = np.argsort(order)
        t = full.reshape([d] * (2 * n))
        t = t.transpose(list(perm) + [n + p for p in perm])
        return t.reshape(d ** n, d ** n)

    def total(self) -> np.ndarray:
        dims = self.local_dim ** self.n_sites
        out = np.zeros((dims, dims), dtype=complex)
        for term in self._embedded:
            out += term
        return out

    def gibbs_state(self) -> np.ndarray:
        h = self.total()
        w, v = np.linalg.eigh(h)
        boltz = np.exp(-self.beta * (w - w.min()))
        omega = (v * boltz) @ v.conj().T
        return hermitian_part(omega / np.trace(omega).real)


@dataclass(frozen=True, eq=False)
class HeatBathModel:
    """Channel-difference Gibbs sampler sum_v (Psi_v - id)."""

    hamiltonian: CommutingHamiltonian
    gibbs: np.ndarray
    site_channels: list[SuperOperator]      # Heisenberg-picture Psi_v
    context: GeneratorContext


def _partial_trace(rho: np.ndarray, site: int, n: int, d: int) -> np.ndarray:
    t = rho.reshape([d] * (2 * n))
    t = np.trace(t, axis1=site, axis2=n + site)
    return t.reshape(d ** (n - 1), d ** (n - 1))


def _lift_complement(op: np.ndarray, site: int, n: int, d: int) -> np.ndarray:
    """Operator on the complement of ``site`` tensored with identity at site."""
    full = np.kron(op, np.eye(d))
    order = [s for s in range(n) if s != site] + [site]
    perm = np.argsort(order)
    t = full.reshape([d] * (2 * n))
    t = t.transpose(list(perm) + [n + p for p in perm])
    return t.reshape(d ** n, d ** n)


def heat_bath(h: CommutingHamiltonian, dimension_guard: int = DEFAULT_DIMENSION_GUARD) -> HeatBathModel:
    """Heat-bath generator: per site, partial trace followed by the recovery map.

    Schrodinger action of each channel:
    Psi_v*(rho) = omega^(1/2) omega_vc^(-1/2) (Tr_v[rho] (x) I_v) omega_vc^(-1/2) omega^(1/2),
    with omega the Gibbs state; the generator is sum_v (Psi_v - id).
    """
    n, d = h.n_sites, h.local_dim
    total = d ** n
    if total > dimension_guard:
        raise ValidationError(f"lattice dimension {total} exceeds guard {dimension_guard}")
    omega = h.gibbs_state()
    w, v = np.linalg.eigh(omega)
    sqrt_omega = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    channels = []
    gen = np.zeros((total * total, total * total), dtype=complex)
    for site in range(n):
        omega_vc = _partial_trace(omega, site, n, d)
        wc, vc = np.linalg.eigh(omega_vc)
        inv_sqrt_vc = (vc * (1.0 / np.sqrt(wc))) @ vc.conj().T
        lifted = _lift_complement(inv_sqrt_vc, site, n, d)
        left = sqrt_omega @ lifted
        # Psi_v*(rho) = left (Tr_v rho (x) I) left^dagger; assemble its matrix
        # from the partial-trace superoperator and the lift.
        ptrace = _partial_trace_superop(site, n, d)
        lift = _lift_superop(site, n, d)
        schro = left_right_matrix(left, left.conj().T) @ lift @ ptrace
        heis = schro.conj().T
        channels.append(SuperOperator(heis))
        gen += heis - np.eye(total * total)
    ctx = context_from_generator(SuperOperator(gen))
    return HeatBathModel(h, omega, channels, ctx)


def _partial_trace_superop(site: int, n: int, d: int) -> np.ndarray:
    """Matrix of rho -> Tr_site[rho] (maps d^n systems to d^(n-1))."""
    dim_in, dim_out = d ** n, d ** (n - 1)
    m = np.zeros((dim_out * dim_out, dim_in * dim_in), dtype=complex)
    unit = np.zeros((dim_in, dim_in), dtype=complex)
    for j in range(dim_in):
        for i in range(dim_in):
            unit[i, j] = 1.0
            m[:, j * dim_in + i] = _partial_trace(unit, site, n, d).reshape(-1, order="F")
            unit[i, j] = 0.0
    return m


def _lift_superop(site: int, n: int, d: int) -> np.ndarray:
    """Matrix of A -> A (x) I_site placed at position ``site``."""
    dim_in, dim_out = d ** (n - 1), d ** n
    m = np.zeros((dim_out * dim_out, dim_in * dim_in), dtype=complex)
    unit = np.zeros((dim_in, dim_in), dtype=complex)
    for j in range(dim_in):
        for i in range(dim_in):
            unit[i, j] = 1.0
            m[:, j * dim_in + i] = _lift_complement(unit, site, n, d).reshape(-1, order="F")
            unit[i, j] = 0.0
    return m


# ---------------------------------------------------------------------------
# Detailed-balance counterexample channels
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CounterexampleChannels:
    """Two-channel family separating the KMS/BKM/GNS symmetry notions.

    ``phi`` is the base channel built from rank-one Kraus pieces, ``psi`` its
    KMS-symmetrized square (KMS- but not BKM-symmetric), ``psi_tilde`` the
    BKM-twisted version (BKM- but not KMS-symmetric); both fix ``sigma``.
    ``p_channel`` is KMS- and BKM- but not GNS-symmetric.
    """

    phi: SuperOperator
    psi: SuperOperator
    psi_tilde: SuperOperator
    sigma: FaithfulState
    p_channel: SuperOperator
    p_sigma: FaithfulState


def counterexample_channels(v1, v2, p: float) -> CounterexampleChannels:
    """Build the channel family from two real unit vectors and a weight p.

    Constraints: <v1, v2> != 0, a + b != 1, a*b != 0, a != b with
    a = <v2, u1>^2, b = <v1, u2>^2 over the canonical basis (u1, u2), the
    fixed state must differ from id/2, and p must lie in (0, 1/2).
    """
    v1 = np.asarray(v1, dtype=float).reshape(2)
    v2 = np.asarray(v2, dtype=float).reshape(2)
    for name, v in (("v1", v1), ("v2", v2)):
        if abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise ValidationError(f"{name} must be a unit vector")
    if abs(v1 @ v2) < 1e-12:
        raise ValidationError("v1 and v2 must not be orthogonal")
    u1 = np.array([1.0, 0.0])
    u2 = np.array([0.0, 1.0])
    a = float(v2 @ u1) ** 2
    b = float(v1 @ u2) ** 2
    if a * b < 1e-14 or abs(a + b - 1.0) < 1e-9 or abs(a - b) < 1e-9:
        raise ValidationError("vectors violate the constraints a+b != 1, ab != 0, a != b")
    k1 = np.outer(v1, u1).astype(complex)
    k2 = np.outer(v2, u2).astype(complex)
    phi = SuperOperator(left_right_matrix(k1.conj().T, k1) + left_right_matrix(k2.conj().T, k2))
    sigma_mat = (a * np.outer(v1, v1) + b * np.outer(v2, v2)) / (a + b)
    sigma = FaithfulState(sigma_mat.astype(complex))
    if abs(sigma.eigenvalues[0] - 0.5) < 1e-9:
        raise ValidationError("fixed state coincides with id/2; pick different vectors")
    gamma = gamma_matrix(1.0, sigma)
    gamma_inv = gamma_matrix(-1.0, sigma)
    phi_kms = gamma_inv @ phi.matrix.conj().T @ gamma
    psi = SuperOperator(phi_kms @ phi.matrix)
    m_inv = spectral_transform_matrix("bkm_M_inverse", sigma)
    psi_tilde = SuperOperator(m_inv @ psi.matrix.conj().T @ gamma)

    if not 0.0 < p < 0.5:
        raise ValidationError("p must lie in (0, 1/2)")
    pk1 = np.diag([np.sqrt(p), np.sqrt(1 - p)]).astype(complex)
    pk2 = np.array([[0.0, np.sqrt(p)], [np.sqrt(1 - p), 0.0]], dtype=complex)
    p_channel = SuperOperator(left_right_matrix(pk1.conj().T, pk1) + left_right_matrix(pk2.conj().T, pk2))
    p_sigma = FaithfulState(np.diag([p, 1 - p]).astype(complex))
    return CounterexampleChannels(phi, psi, psi_tilde, sigma, p_channel, p_sigma)


def appendix_b_fixtures(v1=None, v2=None, p: float = 0.3) -> CounterexampleChannels:
    """Default instantiation of the counterexample family."""
    if v1 is None:
        v1 = np.array([np.cos(0.3), np.sin(0.3)])
    if v2 is None:
        v2 = np.array([np.cos(1.2), np.sin(1.2)])
    return counterexample_channels(v1, v2, p)
