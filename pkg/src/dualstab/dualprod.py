"""Computable scalar product on the dual space and its spectral constants.

Given a subspace W of the truth space and an SPD "stiffness" matrix S on W,
the surrogate dual product is

    c(f, g) = (Eᵀf)ᵀ S⁻¹ (Eᵀg),

which is the exact dual product of the adjoint projections P*f, P*g measured
through S.  Its quality is governed by the extreme eigenvalues kappa_star,
K_star of the pencil (S, G_W): on the dual image of W the surrogate is
equivalent to the exact dual product with constants [1/K_star, 1/kappa_star],
and on the range of a constraint operator B it is bounded below by c_star.
The inf-sup estimators tie c_star to the dual-norm inf-sup constant alpha_hat
and to the plain mixed-form inf-sup constants over (Q, W).

Deflation convention: every pressure pencil is restricted to the
G_Q-orthogonal complement of ker B_T, computed from the singular value
decomposition of B_T.  Mean-zero pressure spaces are realized this way, never
by modifying the basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import (
    DimensionMismatch,
    NotSpd,
    SpdFactorization,
    as_matrix,
    cholesky,
    require_symmetric,
    spd_solve,
    sym_generalized_eig,
)
from .hilbert import Subspace

# relative tolerance for the verified spectral bounds
BOUND_RTOL = 1e-9

# relative tolerance for the inf-sup chain and sandwich inequalities
CHAIN_RTOL = 1e-8

# singular values at or below this fraction of the largest are kernel
KERNEL_RTOL = 1e-12


class BoundViolated(Exception):
    """A verified spectral bound failed beyond tolerance."""

    def __init__(self, message, value=None):
        super().__init__(message)
        self.value = value


class DegeneratePencil(Exception):
    """A deflated pencil denominator is singular; constants are undefined."""


@dataclass(frozen=True)
class StiffnessForm:
    """SPD matrix S on a subspace with its spectral range against G_W."""

    matrix: np.ndarray
    fact: SpdFactorization
    kappa_star: float
    K_star: float
    choice: str


@dataclass(frozen=True)
class DualProduct:
    """Surrogate dual product determined by an auxiliary subspace and S."""

    aux: Subspace
    stiffness: StiffnessForm

    def __post_init__(self):
        if self.stiffness.fact.dim != self.aux.dim:
            raise DimensionMismatch(
                f"stiffness dim {self.stiffness.fact.dim} does not match subspace dim {self.aux.dim}"
            )


@dataclass(frozen=True)
class EquivalenceReport:
    """Measured spectral constants of one configuration."""

    kappa_star: float
    K_star: float
    c_star: float
    C_star: float
    alpha_hat: float
    beta_hat: float
    beta: float
    norm_B: float


def stiffness_from_matrix(sub, s, choice="custom"):
    """Build a StiffnessForm from an explicit SPD matrix on the subspace."""
    s = require_symmetric(s, "stiffness matrix")
    if s.shape[0] != sub.dim:
        raise DimensionMismatch(f"stiffness of dim {s.shape[0]} does not match subspace {sub.dim}")
    fact = cholesky(s, "stiffness matrix")
    spectrum = sym_generalized_eig(s, sub.fact).eigenvalues
    return StiffnessForm(
        matrix=s,
        fact=fact,
        kappa_star=float(spectrum[0]),
        K_star=float(spectrum[-1]),
        choice=choice,
    )


def make_stiffness(sub, choice="gramian"):
    """Build S on a subspace from one of the named choices.

    ``gramian``      S = G_W                 (kappa_star = K_star = 1)
    ``scaled:<s>``   S = s · G_W, s > 0      (kappa_star = K_star = s)
    ``lumped``       S = diag of row sums of G_W; NotSpd when a row sum is
                     nonpositive (e.g. stiffness-like Gramians).
    """
    if choice == "gramian":
        s = sub.gram_sub.copy()
    elif choice == "lumped":
        sums = sub.gram_sub.sum(axis=1)
        if sums.min() <= KERNEL_RTOL * max(sums.max(), 0.0):
            raise NotSpd("row-sum lumping produced a nonpositive diagonal entry")
        s = np.diag(sums)
    elif choice.startswith("scaled:"):
        try:
            sigma = float(choice.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"invalid scaled stiffness choice {choice!r}") from None
        if sigma <= 0.0:
            raise ValueError("stiffness scaling must be positive")
        s = sigma * sub.gram_sub
    else:
        raise ValueError(f"unknown stiffness choice {choice!r}")
    return stiffness_from_matrix(sub, s, choice=choice)


def c_apply(dp, f, g):
    """Evaluate the surrogate dual product c(f, g) = (Eᵀf)ᵀ S⁻¹ (Eᵀg)."""
    if f.dim != dp.aux.parent.dim or g.dim != dp.aux.parent.dim:
        raise DimensionMismatch("functionals do not live on the truth space of W")
    e = dp.aux.embedding
    wf = e.T @ f.action
    wg = e.T @ g.action
    return float(wf @ spd_solve(dp.stiffness.fact, wg))


def _bound_tol(bound):
    return BOUND_RTOL * max(1.0, abs(bound))


def dual_equivalence_interval(dp):
    """Extreme ratios of c against the exact dual product on the dual image of W.

    The exact dual Gramian of the biorthogonal functionals is G_W⁻¹, so the
    ratios are the eigenvalues of the pencil (S⁻¹, G_W⁻¹).
    """
    n = dp.aux.dim
    eye = np.eye(n)
    s_inv = spd_solve(dp.stiffness.fact, eye)
    s_inv = 0.5 * (s_inv + s_inv.T)
    gw_inv = spd_solve(dp.aux.fact, eye)
    gw_inv = 0.5 * (gw_inv + gw_inv.T)
    spectrum = sym_generalized_eig(s_inv, cholesky(gw_inv, "dual Gramian")).eigenvalues
    return float(spectrum[0]), float(spectrum[-1])


def verify_dual_equivalence(dp):
    """Check the equivalence interval against [1/K_star, 1/kappa_star].

    Returns (lower, upper) extreme ratios.
    """
    lower, upper = dual_equivalence_interval(dp)
    lo_bound = 1.0 / dp.stiffness.K_star
    hi_bound = 1.0 / dp.stiffness.kappa_star
    if lower < lo_bound - _bound_tol(lo_bound):
        raise BoundViolated(
            f"dual equivalence lower ratio {lower:.6e} below 1/K_star {lo_bound:.6e}",
            value=lower,
        )
    if upper > hi_bound + _bound_tol(hi_bound):
        raise BoundViolated(
            f"dual equivalence upper ratio {upper:.6e} above 1/kappa_star {hi_bound:.6e}",
            value=upper,
        )
    return lower, upper


def stiffness_dual_norm(dp):
    """Largest dual norm of S w over ‖w‖.

    S w is the functional whose dual-basis coefficients are S w⃗; its dual norm
    squared is w⃗ᵀ S G_W⁻¹ S w⃗, so the value is the root of the largest
    eigenvalue of (S G_W⁻¹ S, G_W).
    """
    s = dp.stiffness.matrix
    m = s @ spd_solve(dp.aux.fact, s)
    m = 0.5 * (m + m.T)
    top = sym_generalized_eig(m, dp.aux.fact).eigenvalues[-1]
    return float(np.sqrt(max(top, 0.0)))


def verify_stiffness_bound(dp):
    """Check that the boundedness constant of S does not exceed K_star."""
    value = stiffness_dual_norm(dp)
    bound = dp.stiffness.K_star
    if value > bound + _bound_tol(bound):
        raise BoundViolated(
            f"stiffness dual-norm bound {value:.6e} exceeds K_star {bound:.6e}", value=value
        )
    return value


def pressure_deflation(b_t, q_gram):
    """G_Q-orthonormal basis of the G_Q-orthogonal complement of ker B_T.

    Returns the identity when B_T has full column rank (no deflation needed);
    otherwise the returned basis Z satisfies Zᵀ G_Q Z = I and Zᵀ G_Q k = 0 for
    every kernel vector k of B_T.
    """
    b_t = as_matrix(b_t, "constraint matrix")
    q_gram = require_symmetric(q_gram, "pressure Gramian")
    if q_gram.shape[0] != b_t.shape[1]:
        raise DimensionMismatch("pressure Gramian does not match constraint matrix columns")
    _, svals, vt = np.linalg.svd(b_t)
    rank = int(np.sum(svals > KERNEL_RTOL * svals[0])) if svals[0] > 0.0 else 0
    n = b_t.shape[1]
    if rank == n:
        return np.eye(n)
    if rank == 0:
        raise DegeneratePencil("constraint matrix is identically zero")
    kernel = vt[rank:].T
    # Euclidean-orthogonal complement of G_Q · kernel, then G_Q-orthonormalize
    m = q_gram @ kernel
    _, _, vt2 = np.linalg.svd(m.T)
    comp = vt2[kernel.shape[1]:].T
    gram = comp.T @ (q_gram @ comp)
    gram = 0.5 * (gram + gram.T)
    w, v = np.linalg.eigh(gram)
    if w.min() <= KERNEL_RTOL * w.max():
        raise DegeneratePencil("deflated pressure Gramian is singular")
    return comp @ (v / np.sqrt(w))


def _deflated_pressure_matrices(dp, b_t, q_gram):
    """Deflated matrices shared by the inf-sup estimators.

    Returns a dict with the deflated constraint matrix restricted to W, the
    truth-dual Gramian of the constraint (for dual norms of B q), and the
    deflated pressure Gramian.
    """
    sub = dp.aux if isinstance(dp, DualProduct) else dp
    b_t = as_matrix(b_t, "constraint matrix")
    if b_t.shape[0] != sub.parent.dim:
        raise DimensionMismatch("constraint matrix rows do not match the truth space")
    z = pressure_deflation(b_t, q_gram)
    b_eff = b_t @ z
    b_w = sub.embedding.T @ b_eff
    sup_w = b_w.T @ spd_solve(sub.fact, b_w)
    dual_t = b_eff.T @ spd_solve(sub.parent.fact, b_eff)
    q_gram = require_symmetric(q_gram, "pressure Gramian")
    q_eff = z.T @ (q_gram @ z)
    return {
        "b_w": b_w,
        "sup_w": 0.5 * (sup_w + sup_w.T),
        "dual_t": 0.5 * (dual_t + dual_t.T),
        "q_eff": 0.5 * (q_eff + q_eff.T),
    }


def _dual_t_fact(mats):
    try:
        return cholesky(mats["dual_t"], "deflated dual Gramian")
    except NotSpd:
        raise DegeneratePencil("deflated dual-norm Gramian is singular") from None


def estimate_c_star(dp, b_t, q_gram):
    """Largest c_star with c(Bq, Bq) ≥ c_star ‖Bq‖₋₁² on the deflated pressures.

    Smallest eigenvalue of (B_Wᵀ S⁻¹ B_W, B_Tᵀ G⁻¹ B_T) after deflation.
    """
    mats = _deflated_pressure_matrices(dp, b_t, q_gram)
    numer = mats["b_w"].T @ spd_solve(dp.stiffness.fact, mats["b_w"])
    numer = 0.5 * (numer + numer.T)
    low = sym_generalized_eig(numer, _dual_t_fact(mats)).eigenvalues[0]
    return float(max(low, 0.0))


def infsup_qw(b_t, q_gram, sub):
    """Inf-sup constant of the mixed form over (deflated pressures, subspace).

    Square root of the smallest eigenvalue of (B_Wᵀ G_W⁻¹ B_W, G_Q); zero when
    the subspace cannot control every deflated pressure.
    """
    mats = _deflated_pressure_matrices(sub, b_t, q_gram)
    q_fact = cholesky(mats["q_eff"], "deflated pressure Gramian")
    low = sym_generalized_eig(mats["sup_w"], q_fact).eigenvalues[0]
    return float(np.sqrt(max(low, 0.0)))


def infsup_dual(b_t, q_gram, sub):
    """Dual-norm inf-sup constant: pressures measured through ‖B q‖₋₁.

    Square root of the smallest eigenvalue of (B_Wᵀ G_W⁻¹ B_W, B_Tᵀ G⁻¹ B_T)
    after deflation.
    """
    mats = _deflated_pressure_matrices(sub, b_t, q_gram)
    low = sym_generalized_eig(mats["sup_w"], _dual_t_fact(mats)).eigenvalues[0]
    return float(np.sqrt(max(low, 0.0)))


def equivalence_report(dp, b_t, q_gram):
    """Collect every spectral constant of a configuration in one report."""
    mats = _deflated_pressure_matrices(dp, b_t, q_gram)
    dual_fact = _dual_t_fact(mats)
    numer = mats["b_w"].T @ spd_solve(dp.stiffness.fact, mats["b_w"])
    numer = 0.5 * (numer + numer.T)
    c_star = float(max(sym_generalized_eig(numer, dual_fact).eigenvalues[0], 0.0))
    alpha_sq = sym_generalized_eig(mats["sup_w"], dual_fact).eigenvalues[0]
    alpha_hat = float(np.sqrt(max(alpha_sq, 0.0)))
    q_fact = cholesky(mats["q_eff"], "deflated pressure Gramian")
    beta_sq = sym_generalized_eig(mats["sup_w"], q_fact).eigenvalues[0]
    beta_hat = float(np.sqrt(max(beta_sq, 0.0)))
    full = sym_generalized_eig(mats["dual_t"], q_fact).eigenvalues
    beta = float(np.sqrt(max(full[0], 0.0)))
    norm_b = float(np.sqrt(max(full[-1], 0.0)))
    return EquivalenceReport(
        kappa_star=dp.stiffness.kappa_star,
        K_star=dp.stiffness.K_star,
        c_star=c_star,
        C_star=1.0 / dp.stiffness.kappa_star,
        alpha_hat=alpha_hat,
        beta_hat=beta_hat,
        beta=beta,
        norm_B=norm_b,
    )


def _chain_tol(value):
    return CHAIN_RTOL * max(1.0, abs(value))


def verify_cstar_infsup_link(dp, b_t, q_gram):
    """Check the two-way link between c_star and the dual-norm inf-sup constant.

    alpha_hat ≥ (c_star · kappa_star)^½ and c_star ≥ alpha_hat² / K_star; with
    S = G_W both hold with equality.  Returns the full report.
    """
    rep = equivalence_report(dp, b_t, q_gram)
    lower = float(np.sqrt(max(rep.c_star * rep.kappa_star, 0.0)))
    if rep.alpha_hat < lower - _chain_tol(lower):
        raise BoundViolated(
            f"alpha_hat {rep.alpha_hat:.6e} below (c_star kappa_star)^1/2 {lower:.6e}",
            value=rep.alpha_hat,
        )
    floor = rep.alpha_hat**2 / rep.K_star
    if rep.c_star < floor - _chain_tol(floor):
        raise BoundViolated(
            f"c_star {rep.c_star:.6e} below alpha_hat^2/K_star {floor:.6e}", value=rep.c_star
        )
    return rep


def verify_infsup_sandwich(dp, b_t, q_gram, rng=None, samples=100):
    """Check the sandwich between mixed-form and dual-norm inf-sup constants.

    beta_hat / norm_B ≤ alpha_hat ≤ beta_hat / beta, plus the two-sided norm
    equivalence beta ⦀q⦀ ≤ ‖B q‖₋₁ ≤ norm_B ⦀q⦀ on random deflated pressures.
    """
    rep = equivalence_report(dp, b_t, q_gram)
    if rep.beta <= 0.0:
        raise DegeneratePencil("truth inf-sup constant vanishes; sandwich undefined")
    lower = rep.beta_hat / rep.norm_B
    upper = rep.beta_hat / rep.beta
    if rep.alpha_hat < lower - _chain_tol(lower):
        raise BoundViolated(
            f"alpha_hat {rep.alpha_hat:.6e} below beta_hat/norm_B {lower:.6e}",
            value=rep.alpha_hat,
        )
    if rep.alpha_hat > upper + _chain_tol(upper):
        raise BoundViolated(
            f"alpha_hat {rep.alpha_hat:.6e} above beta_hat/beta {upper:.6e}",
            value=rep.alpha_hat,
        )
    mats = _deflated_pressure_matrices(dp, b_t, q_gram)
    if rng is None:
        rng = np.random.default_rng(0)
    for _ in range(samples):
        y = rng.standard_normal(mats["q_eff"].shape[0])
        p_norm = np.sqrt(max(y @ (mats["q_eff"] @ y), 0.0))
        b_norm = np.sqrt(max(y @ (mats["dual_t"] @ y), 0.0))
        if b_norm < rep.beta * p_norm - _chain_tol(rep.beta * p_norm):
            raise BoundViolated(
                f"random pressure with ‖Bq‖ {b_norm:.6e} below beta ⦀q⦀", value=b_norm
            )
        if b_norm > rep.norm_B * p_norm + _chain_tol(rep.norm_B * p_norm):
            raise BoundViolated(
                f"random pressure with ‖Bq‖ {b_norm:.6e} above norm_B ⦀q⦀", value=b_norm
            )
    return rep
