"""Functional-inequality constants, commutator Lipschitz calculus, and the
closed-form concentration bounds they imply.

The chain runs: a log-Sobolev constant alpha_2 gives a
transportation-information constant C = 1/(8 alpha_2^2); C turns Fisher
information into a Wasserstein-distance bound; and together with the
statistics of a monitored observable this yields Gaussian-type tail bounds
for time-averaged trajectory signals. The Poincare constant (spectral gap)
gives a weaker, always-computable variant. Wasserstein distances are only
ever certified from below (feasible test observables); every consumed bound
needs just Lipschitz norms of explicit observables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .linalg import (
    FaithfulState,
    NumericalError,
    ValidationError,
    as_complex_matrix,
    hermitian_part,
    inner_product,
    require_hermitian,
    spectral_transform,
)
from .lindblad import GeneratorContext, bohr_frequencies, dirichlet_form, fisher_information

GAP_ZERO_TOL = 1e-10


@dataclass(frozen=True)
class FunctionalConstants:
    """Spectral gap plus optional LSI / transportation-information constants.

    Provenance per optional field is one of "computed", "closed_form",
    "user_supplied"; the gap is always computed.
    """

    spectral_gap: float
    lsi_alpha2: float | None = None
    lsi_provenance: str | None = None
    ti_constant: float | None = None
    ti_provenance: str | None = None

    def __post_init__(self):
        if self.spectral_gap < 0:
            raise ValidationError("spectral gap must be nonnegative")
        if self.lsi_alpha2 is not None:
            if self.lsi_alpha2 <= 0:
                raise ValidationError("alpha_2 must be positive")
            if self.lsi_alpha2 > self.spectral_gap + 1e-9:
                raise ValidationError(
                    f"alpha_2 = {self.lsi_alpha2!r} exceeds the spectral gap {self.spectral_gap!r}")


def spectral_gap(ctx: GeneratorContext) -> float:
    """Smallest nonzero decay rate of the KMS-symmetrized generator.

    Computed as the second-smallest eigenvalue of -sym(L) after conjugating
    to an ordinary Hermitian problem; the bottom eigenvalue is zero with
    eigenvector the identity.
    """
    ctx.require_faithful()
    w = np.linalg.eigvalsh(-ctx.kms_hermitian_part())
    if abs(w[0]) > 1e-8:
        raise NumericalError(f"generator has no zero mode (found {w[0]:.3e})")
    gap = float(w[1]) if len(w) > 1 else 0.0
    return max(gap, 0.0)


def functional_constants(ctx: GeneratorContext, lsi_alpha2: float | None = None,
                         lsi_provenance: str | None = None,
                         ti_constant: float | None = None,
                         ti_provenance: str | None = None) -> FunctionalConstants:
    """Assemble constants for a context; derives TI from LSI when absent."""
    gap = spectral_gap(ctx)
    if lsi_alpha2 is not None and ti_constant is None:
        ti_constant = ti_from_lsi(lsi_alpha2)
        ti_provenance = "computed"
    return FunctionalConstants(gap, lsi_alpha2, lsi_provenance, ti_constant, ti_provenance)


# ---------------------------------------------------------------------------
# Entropy functionals
# ---------------------------------------------------------------------------

def _clipped_log(rho: np.ndarray) -> np.ndarray:
    """Support-restricted matrix logarithm of a PSD matrix."""
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 0.0, None)
    logs = np.where(w > 0, np.log(np.where(w > 0, w, 1.0)), 0.0)
    return (v * logs) @ v.conj().T


def entropy_functional(kind: str, ctx: GeneratorContext, argument) -> float:
    """Variance, L2 entropy, relative entropy, or entropy production.

    variance/ent2 take an observable X (ent2 requires X >= 0); the entropy
    kinds take a state rho. All values are real; sigma must be faithful so
    the relative entropy is always finite.
    """
    st = ctx.require_faithful()
    a = as_complex_matrix(argument, "argument")
    if kind == "variance":
        mean = np.trace(st.matrix @ a)
        shifted = a - mean * np.eye(st.dim)
        return float(inner_product("KMS", st, shifted, shifted).real)
    if kind == "ent2":
        x = require_hermitian(a, tol=1e-8, name="X")
        quarter = st.power(0.25)
        gx = quarter @ x @ quarter
        rho_like = gx @ gx
        norm2 = float(np.trace(rho_like).real)
        if norm2 <= 0:
            return 0.0
        log_rho = _clipped_log(rho_like)
        log_sigma = _clipped_log(st.matrix)
        value = np.trace(rho_like @ (log_rho - log_sigma)).real - norm2 * math.log(norm2)
        return float(value)
    if kind == "relative_entropy":
        rho = _as_psd_state(a)
        log_sigma = _clipped_log(st.matrix)
        return float(np.trace(rho @ (_clipped_log(rho) - log_sigma)).real)
    if kind == "entropy_production":
        rho = _as_psd_state(a)
        log_sigma = _clipped_log(st.matrix)
        lstar_rho = ctx.schrodinger.apply(rho)
        return float(-np.trace(lstar_rho @ (_clipped_log(rho) - log_sigma)).real)
    raise ValidationError(f"unknown entropy functional kind {kind!r}")


def _as_psd_state(a: np.ndarray) -> np.ndarray:
    rho = require_hermitian(a, tol=1e-8, name="rho")
    w, v = np.linalg.eigh(rho)
    if w[0] < -1e-8:
        raise ValidationError(f"state has eigenvalue {w[0]:.3e}")
    rho = (v * np.clip(w, 0.0, None)) @ v.conj().T
    return rho / np.trace(rho).real


# ---------------------------------------------------------------------------
# Closed-form constants
# ---------------------------------------------------------------------------

def lsi_depolarizing(sigma) -> float:
    """Log-Sobolev constant of the depolarizing semigroup toward sigma:
    (1 - 2 s_min) / ln(1/s_min - 1), with the analytic limit 1/2 at s_min = 1/2."""
    st = sigma if isinstance(sigma, FaithfulState) else FaithfulState(sigma)
    s_min = float(st.eigenvalues[-1])
    if abs(s_min - 0.5) < 1e-9:
        return 0.5
    return (1.0 - 2.0 * s_min) / math.log(1.0 / s_min - 1.0)


def ti_from_lsi(alpha2: float) -> float:
    """Transportation-information constant implied by LSI: C = 1/(8 alpha_2^2)."""
    if alpha2 <= 0:
        raise ValidationError("alpha_2 must be positive")
    return 1.0 / (8.0 * alpha2 * alpha2)


# ---------------------------------------------------------------------------
# Lipschitz calculus and Wasserstein lower bounds
# ---------------------------------------------------------------------------

class LipschitzContext:
    """A derivation set [L_j, .] with modular weights defining the metric.

    The commutator Lipschitz seminorm is
    ||X||_Lip = sqrt( sum_j (e^{-w_j/2} + e^{w_j/2}) ||[L_j, X]||_inf^2 ),
    and its unit ball is the dual ball of the order-1 Wasserstein distance.
    Exists only when every derivation is a modular eigenvector (Bohr
    frequencies present).
    """

    def __init__(self, sigma: FaithfulState, derivations: list[np.ndarray], omegas: list[float]):
        if len(derivations) != len(omegas):
            raise ValidationError("need one modular frequency per derivation")
        self.sigma = sigma
        self.derivations = [as_complex_matrix(l, "derivation") for l in derivations]
        self.omegas = [float(w) for w in omegas]
        self.weights = np.array([math.exp(-w / 2.0) + math.exp(w / 2.0) for w in self.omegas])

    @classmethod
    def from_context(cls, ctx: GeneratorContext, normalize: bool = False) -> "LipschitzContext":
        """Derivations from the generator's own jumps.

        ``normalize`` rescales each jump to unit Frobenius norm, the
        convention under which the depolarizing metric is generated by bare
        matrix units. Rescaling by positive constants leaves the Bohr
        frequencies untouched.
        """
        st = ctx.require_faithful()
        lind = ctx.require_jumps()
        omegas = bohr_frequencies(ctx)
        if omegas is None:
            raise ValidationError("jumps are not modular eigenvectors; no Lipschitz calculus")
        derivs = []
        for l in lind.jumps:
            if normalize:
                n = np.linalg.norm(l)
                derivs.append(l / n if n > 1e-15 else l)
            else:
                derivs.append(l)
        return cls(st, derivs, omegas)


def lipschitz_norm(lip: LipschitzContext, x) -> float:
    """Commutator Lipschitz seminorm of a Hermitian observable."""
    x = require_hermitian(x, tol=1e-8, name="X")
    total = 0.0
    for w, l in zip(lip.weights, lip.derivations):
        comm = l @ x - x @ l
        total += w * np.linalg.norm(comm, 2) ** 2
    return float(math.sqrt(total))


def tilde_observable(ctx: GeneratorContext, u) -> np.ndarray:
    """Modular-smoothed observable Delta^(1/4)(L_u*) + Delta^(-1/4)(L_u).

    Hermitian for real direction vectors, with the same stationary mean as
    the raw observable L_u + L_u*.
    """
    st = ctx.require_faithful()
    lind = ctx.require_jumps()
    u = np.asarray(u, dtype=float).reshape(lind.k)
    l_u = sum(u[m] * lind.jumps[m] for m in range(lind.k))
    out = spectral_transform("delta_power", st, l_u.conj().T, power=0.25)
    out += spectral_transform("delta_power", st, l_u, power=-0.25)
    return out


def w1_lower_bound(lip: LipschitzContext, rho1, rho2, n_starts: int = 10, seed: int = 11) -> float:
    """Certified lower bound on the order-1 Wasserstein distance.

    Maximizes Tr[(rho1 - rho2) X] / ||X||_Lip over Hermitian X by
    derivative-free ascent from random starts plus the candidate
    X = rho1 - rho2; every feasible evaluation is a valid lower bound and
    the best one is returned.
    """
    rho1 = require_hermitian(rho1, tol=1e-8, name="rho1")
    rho2 = require_hermitian(rho2, tol=1e-8, name="rho2")
    delta = rho1 - rho2
    d = delta.shape[0]
    if np.max(np.abs(delta)) < 1e-14:
        return 0.0

    tri = np.triu_indices(d, k=1)
    n_params = d + 2 * tri[0].size

    def to_hermitian(params):
        x = np.zeros((d, d), dtype=complex)
        x[np.diag_indices(d)] = params[:d]
        re = params[d:d + tri[0].size]
        im = params[d + tri[0].size:]
        x[tri] = re + 1j * im
        x[(tri[1], tri[0])] = re - 1j * im
        return x

    best = 0.0
    degenerate_witness = False

    def ratio(params):
        nonlocal best, degenerate_witness
        x = to_hermitian(params)
        pairing = float(np.trace(delta @ x).real)
        norm = lipschitz_norm(lip, x)
        if norm < 1e-12:
            if abs(pairing) > 1e-10:
                degenerate_witness = True
            return 0.0
        value = abs(pairing) / norm
        best = max(best, value)
        return value

    rng = np.random.default_rng(seed)
    starts = [np.concatenate([np.diag(delta).real, delta[tri].real, delta[tri].imag])]
    for _ in range(n_starts):
        starts.append(rng.normal(size=n_params))
    for p0 in starts:
        scipy.optimize.minimize(lambda p: -ratio(p), p0, method="Powell",
                                options={"xtol": 1e-8, "maxiter": 2000})
    if degenerate_witness and best == 0.0:
        raise NumericalError("unbounded direction: zero Lipschitz norm with nonzero pairing")
    return best


def verify_poincare_ti(ctx: GeneratorContext, rho) -> tuple[float, float, bool]:
    """Check the trace-norm transportation-information bound
    ||rho - sigma||_1^2 <= (4/gap) I(rho); returns (lhs, rhs, holds)."""
    st = ctx.require_faithful()
    rho = require_hermitian(rho, tol=1e-8, name="rho")
    gap = spectral_gap(ctx)
    if gap <= GAP_ZERO_TOL:
        raise ValidationError("generator has no spectral gap")
    lhs = float(np.sum(np.abs(np.linalg.eigvalsh(rho - st.matrix))) ** 2)
    rhs = 4.0 / gap * fisher_information(ctx, rho)
    return lhs, rhs, lhs <= rhs + 1e-9


# ---------------------------------------------------------------------------
# Concentration bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConcentrationBound:
    """Tail bound of the form prefactor * exp(-coefficient * t * r^2)."""

    variant: str
    coefficient: float
    prefactor: float

    def exponent(self, t: float, r: float) -> float:
        return self.coefficient * t * r * r

    def bound(self, t: float, r: float) -> float:
        return self.prefactor * math.exp(-self.exponent(t, r))


def concentration_bound(variant: str, *, prefactor: float = 1.0,
                        ti_constant: float | None = None,
                        lipschitz_value: float | None = None,
                        gap: float | None = None,
                        sup_norm: float | None = None,
                        dim: int | None = None,
                        eigenvalue_spread: float | None = None,
                        lsi_alpha2: float | None = None,
                        n_factors: int | None = None,
                        alpha_u: float | None = None,
                        beta_h_norm: float | None = None,
                        hypothesis_attested: bool = False) -> ConcentrationBound:
    """Closed-form concentration coefficients, one per proved display.

    ti_gaussian      exp(-t r^2 / 4); requires the caller to attest that the
                     scaled smoothed observable pair lies in the test set.
    ti_lipschitz     exp(-t r^2 / (2 (1 + C ||O~||_Lip^2))).
    poincare         exp(-gap t r^2 / (2 (gap + 2 ||O~||_inf^2))).
    depolarizing     exp(-2 (d-2)^2 t r^2 / (4 (d-2)^2 + S d^2 ln(d-1)^2))
                     with S the eigenvalue pair spread sum and prefactor d.
    tensor           exp(-4 a2^2 t r^2 / (8 a2^2 + n alpha(u))).
    gibbs            exp(beta ||H|| / 2 - t r^2 / (2 (1 + C L_orn^2))) with
                     user-supplied C and Ornstein-Lipschitz value.
    """
    if variant == "ti_gaussian":
        if not hypothesis_attested:
            raise ValidationError("ti_gaussian requires hypothesis_attested=True (test-set membership)")
        return ConcentrationBound(variant, 0.25, prefactor)
    if variant == "ti_lipschitz":
        _need(ti_constant, "ti_constant")
        _need(lipschitz_value, "lipschitz_value")
        return ConcentrationBound(variant, 1.0 / (2.0 * (1.0 + ti_constant * lipschitz_value**2)), prefactor)
    if variant == "poincare":
        _need(gap, "gap")
        _need(sup_norm, "sup_norm")
        return ConcentrationBound(variant, gap / (2.0 * (gap + 2.0 * sup_norm**2)), prefactor)
    if variant == "depolarizing":
        _need(dim, "dim")
        _need(eigenvalue_spread, "eigenvalue_spread")
        num = 2.0 * (dim - 2) ** 2
        den = 4.0 * (dim - 2) ** 2 + eigenvalue_spread * dim**2 * math.log(dim - 1) ** 2
        return ConcentrationBound(variant, num / den, float(dim))
    if variant == "tensor":
        _need(lsi_alpha2, "lsi_alpha2")
        _need(n_factors, "n_factors")
        _need(alpha_u, "alpha_u")
        a2sq = lsi_alpha2**2
        return ConcentrationBound(variant, 4.0 * a2sq / (8.0 * a2sq + n_factors * alpha_u), prefactor)
    if variant == "gibbs":
        _need(ti_constant, "ti_constant")
        _need(lipschitz_value, "lipschitz_value")
        _need(beta_h_norm, "beta_h_norm")
        coeff = 1.0 / (2.0 * (1.0 + ti_constant * lipschitz_value**2))
        return ConcentrationBound(variant, coeff, math.exp(beta_h_norm / 2.0))
    raise ValidationError(f"unknown concentration variant {variant!r}")


def _need(value, name: str):
    if value is None:
        raise ValidationError(f"variant requires {name}")


def tensor_alpha_u(contexts: list[GeneratorContext], u: np.ndarray) -> float:
    """Coupling constant alpha(u) of the tensorized concentration bound:
    2 |J| max_{k,j} e^{w_{k,j}/2} || sum_i u_{k,i} [L_{k,j}, O~_{k,i}] ||_inf^2
    over factors k and local jumps j."""
    n = len(contexts)
    sizes = [ctx.require_jumps().k for ctx in contexts]
    if len(set(sizes)) != 1:
        raise ValidationError("factors must share the local jump count")
    j_count = sizes[0]
    u = np.asarray(u, dtype=float).reshape(n, j_count)
    worst = 0.0
    for k, ctx in enumerate(contexts):
        st = ctx.require_faithful()
        lind = ctx.require_jumps()
        omegas = bohr_frequencies(ctx)
        if omegas is None:
            raise ValidationError("tensor factors need Bohr frequencies")
        smoothed = np.zeros((st.dim, st.dim), dtype=complex)
        for i, l in enumerate(lind.jumps):
            term = spectral_transform("delta_power", st, l.conj().T, power=0.25)
            term += spectral_transform("delta_power", st, l, power=-0.25)
            smoothed += u[k, i] * term
        for j, l in enumerate(lind.jumps):
            comm = l @ smoothed - smoothed @ l
            value = math.exp(omegas[j] / 2.0) * np.linalg.norm(comm, 2) ** 2
            worst = max(worst, value)
    return 2.0 * j_count * worst


def tensorization_lsi_bounds(contexts: list[GeneratorContext]) -> tuple[float, float]:
    """Bracket for the log-Sobolev constant of a product of KMS-symmetric
    factors: min_k gap_k / (ln(d^4 max_k ||sigma_k^{-1}||) + 11) below,
    min_k gap_k / 2 above. The lower bound does not depend on the number of
    factors."""
    if not contexts:
        raise ValidationError("need at least one factor")
    dims = {ctx.dim for ctx in contexts}
    if len(dims) != 1:
        raise ValidationError("factors must share the local dimension")
    d = dims.pop()
    gaps = []
    inv_norms = []
    for ctx in contexts:
        if not ctx.primitive:
            raise ValidationError("every factor must be primitive")
        from .lindblad import check_detailed_balance
        if not check_detailed_balance("KMS", ctx).symmetric:
            raise ValidationError("every factor must be KMS-symmetric")
        gaps.append(spectral_gap(ctx))
        inv_norms.append(1.0 / float(ctx.require_faithful().eigenvalues[-1]))
    lower = min(gaps) / (math.log(d**4 * max(inv_norms)) + 11.0)
    upper = min(gaps) / 2.0
    return lower, upper
