"""Stabilized saddle point systems and their verified constants.

The mixed problem  a(u,v) − b(p,v) + b(q,u) = ⟨F,v⟩ + ⟨G,q⟩  is posed with a
truth velocity space, a pressure basis, and a discretization (U, Q, W, c, γ)
where c is the surrogate dual product on W.  Two equivalent assemblies are
provided: the condensed stabilized system on U×Q obtained by augmenting the
constraint equation with the γ-weighted residual term, and the three-field
system on U×W×Q whose middle block is (1/γ)S.  Static condensation of the
latter must reproduce the former entrywise; the acceptance suite pins that.

Pressure handling: an optional column selection restricts the pressure basis,
and the retained columns are deflated against ker B_T (G_Q-orthogonal
complement, see dualprod).  Assembled systems live in deflated coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .algebra import (
    DimensionMismatch,
    as_matrix,
    cholesky,
    operator_norm,
    require_symmetric,
    spd_solve,
    sym_generalized_eig,
)
from .dualprod import (
    BoundViolated,
    DualProduct,
    estimate_c_star,
    infsup_qw,
    pressure_deflation,
)
from .hilbert import Functional, Subspace, orthogonal_project

# singular value ratio at or below this flags a singular system
SINGULAR_RTOL = 1e-12

# relative residual guaranteed by solve()
RESIDUAL_RTOL = 1e-10

# tolerance for the verified coercivity and relaxed inf-sup bounds
COERCIVITY_TOL = 1e-9


class SingularSystem(Exception):
    """Assembled system is numerically singular."""

    def __init__(self, message, smallest=None, largest=None):
        super().__init__(message)
        self.smallest = smallest
        self.largest = largest


class GammaZero(Exception):
    """Operation requires a positive stabilization parameter."""


class DegenerateDenominator(Exception):
    """Best-approximation denominator vanishes: exact solution is discrete."""

    def __init__(self, message, u_err=None, p_err=None):
        super().__init__(message)
        self.u_err = u_err
        self.p_err = p_err


class SaddleProblem:
    """Truth-level mixed problem data."""

    def __init__(self, truth, a_form, b_form, q_gram, load, constraint_rhs, label=""):
        self.truth = truth
        self.a_form = as_matrix(a_form, "a-form matrix")
        if self.a_form.shape != (truth.dim, truth.dim):
            raise DimensionMismatch("a-form matrix does not match the truth space")
        self.b_form = as_matrix(b_form, "constraint matrix")
        if self.b_form.shape[0] != truth.dim:
            raise DimensionMismatch("constraint matrix rows do not match the truth space")
        self.q_gram = require_symmetric(q_gram, "pressure Gramian")
        if self.q_gram.shape[0] != self.b_form.shape[1]:
            raise DimensionMismatch("pressure Gramian does not match constraint columns")
        self.q_fact = cholesky(self.q_gram, "pressure Gramian")
        if not isinstance(load, Functional):
            load = Functional(np.asarray(load, dtype=float))
        if load.dim != truth.dim:
            raise DimensionMismatch("load functional does not live on the truth space")
        self.load = load
        self.constraint_rhs = np.asarray(constraint_rhs, dtype=float)
        if self.constraint_rhs.shape != (self.b_form.shape[1],):
            raise DimensionMismatch("constraint right-hand side does not match pressure dim")
        self.label = label

    @property
    def pressure_dim(self):
        return self.b_form.shape[1]


class Discretization:
    """Choice of (U, Q-selection, W, dual product, gamma) for one problem."""

    def __init__(self, pb, u, dp, gamma, q_select=None):
        if not isinstance(dp, DualProduct):
            raise TypeError("dp must be a DualProduct")
        if u.parent is not pb.truth or dp.aux.parent is not pb.truth:
            raise DimensionMismatch("subspaces must embed into the problem's truth space")
        gamma = float(gamma)
        if not np.isfinite(gamma) or gamma < 0.0:
            raise ValueError("gamma must be a finite nonnegative real")
        self.U = u
        self.dp = dp
        self.gamma = gamma
        if q_select is None:
            idx = np.arange(pb.pressure_dim)
        else:
            idx = np.asarray(q_select, dtype=int)
            if idx.ndim != 1 or idx.size == 0 or np.unique(idx).size != idx.size:
                raise ValueError("q_select must be a nonempty list of distinct column indices")
            if idx.min() < 0 or idx.max() >= pb.pressure_dim:
                raise ValueError("q_select index out of range")
        self.q_select = idx
        b_sel = pb.b_form[:, idx]
        q_sel = pb.q_gram[np.ix_(idx, idx)]
        self.b_sel = b_sel
        self.q_sel = 0.5 * (q_sel + q_sel.T)
        z = pressure_deflation(b_sel, self.q_sel)
        self.deflation = z
        basis = np.zeros((pb.pressure_dim, z.shape[1]))
        basis[idx] = z
        self.pressure_basis = basis
        self.b_eff = b_sel @ z
        q_eff = z.T @ (self.q_sel @ z)
        self.q_eff = 0.5 * (q_eff + q_eff.T)
        self.q_eff_fact = cholesky(self.q_eff, "deflated pressure Gramian")
        self.g_eff = z.T @ pb.constraint_rhs[idx]
        self.p_dim = z.shape[1]

    @property
    def W(self):
        return self.dp.aux


@dataclass(frozen=True)
class StabilizedSystem:
    """Condensed system on U × Q (deflated pressure coordinates)."""

    matrix: np.ndarray
    rhs: np.ndarray
    u_dim: int
    p_dim: int
    gamma: float


@dataclass(frozen=True)
class ThreeFieldSystem:
    """Equivalent system on U × W × Q with middle block (1/γ) S."""

    matrix: np.ndarray
    rhs: np.ndarray
    u_dim: int
    w_dim: int
    p_dim: int
    gamma: float


def _blocks(pb, d):
    e_u = d.U.embedding
    e_w = d.W.embedding
    a_uu = e_u.T @ (pb.a_form @ e_u)
    a_wu = e_w.T @ (pb.a_form @ e_u)
    b_uq = e_u.T @ d.b_eff
    b_wq = e_w.T @ d.b_eff
    f_u = e_u.T @ pb.load.action
    f_w = e_w.T @ pb.load.action
    return a_uu, a_wu, b_uq, b_wq, f_u, f_w


def assemble_stabilized(pb, d):
    """Assemble the stabilized system on U × Q.

    Top row:     [A_UU, −B_UQ]
    Bottom row:  [B_UQᵀ − γ B_WQᵀ S⁻¹ A_WU,  γ B_WQᵀ S⁻¹ B_WQ]
    rhs:         (F_U,  G − γ B_WQᵀ S⁻¹ F_W)

    At γ = 0 this is the plain Galerkin block form.
    """
    a_uu, a_wu, b_uq, b_wq, f_u, f_w = _blocks(pb, d)
    gamma = d.gamma
    if gamma == 0.0:
        bottom_left = b_uq.T
        bottom_right = np.zeros((d.p_dim, d.p_dim))
        rhs_q = d.g_eff.copy()
    else:
        s_fact = d.dp.stiffness.fact
        s_inv_a = spd_solve(s_fact, a_wu)
        s_inv_b = spd_solve(s_fact, b_wq)
        s_inv_f = spd_solve(s_fact, f_w)
        bottom_left = b_uq.T - gamma * (b_wq.T @ s_inv_a)
        bottom_right = gamma * (b_wq.T @ s_inv_b)
        rhs_q = d.g_eff - gamma * (b_wq.T @ s_inv_f)
    matrix = np.block([[a_uu, -b_uq], [bottom_left, bottom_right]])
    rhs = np.concatenate([f_u, rhs_q])
    return StabilizedSystem(
        matrix=matrix, rhs=rhs, u_dim=d.U.dim, p_dim=d.p_dim, gamma=gamma
    )


def assemble_three_field(pb, d):
    """Assemble the three-field system on U × W × Q.

        [A_UU    0       −B_UQ ] (x)   (F_U)
        [A_WU  (1/γ)S    −B_WQ ] (z) = (F_W)
        [B_UQᵀ  B_WQᵀ      0   ] (y)   (G)
    """
    if d.gamma <= 0.0:
        raise GammaZero("three-field assembly requires gamma > 0")
    a_uu, a_wu, b_uq, b_wq, f_u, f_w = _blocks(pb, d)
    k, n, l = d.U.dim, d.W.dim, d.p_dim
    s_block = d.dp.stiffness.matrix / d.gamma
    matrix = np.block(
        [
            [a_uu, np.zeros((k, n)), -b_uq],
            [a_wu, s_block, -b_wq],
            [b_uq.T, b_wq.T, np.zeros((l, l))],
        ]
    )
    rhs = np.concatenate([f_u, f_w, d.g_eff])
    return ThreeFieldSystem(matrix=matrix, rhs=rhs, u_dim=k, w_dim=n, p_dim=l, gamma=d.gamma)


def _three_field_slices(tf):
    k, n = tf.u_dim, tf.w_dim
    return slice(0, k), slice(k, k + n), slice(k + n, k + n + tf.p_dim)


def static_condense(tf):
    """Eliminate the auxiliary field from an assembled three-field system.

    Works from the assembled matrix alone, so the result is an independent
    route to the stabilized system and must agree with it entrywise.
    """
    iu, iw, ip = _three_field_slices(tf)
    m, rhs = tf.matrix, tf.rhs
    a_uu = m[iu, iu]
    b_uq = -m[iu, ip]
    a_wu = m[iw, iu]
    s_block = m[iw, iw]
    b_wq = -m[iw, ip]
    b_uqt = m[ip, iu]
    b_wqt = m[ip, iw]
    s_fact = cholesky(s_block, "auxiliary block")
    bottom_left = b_uqt - b_wqt @ spd_solve(s_fact, a_wu)
    bottom_right = b_wqt @ spd_solve(s_fact, b_wq)
    rhs_q = rhs[ip] - b_wqt @ spd_solve(s_fact, rhs[iw])
    matrix = np.block([[a_uu, -b_uq], [bottom_left, bottom_right]])
    out_rhs = np.concatenate([rhs[iu], rhs_q])
    return StabilizedSystem(
        matrix=matrix, rhs=out_rhs, u_dim=tf.u_dim, p_dim=tf.p_dim, gamma=tf.gamma
    )


def recover_aux(tf, x, y):
    """Auxiliary component of the three-field solution from (x, y)."""
    iu, iw, ip = _three_field_slices(tf)
    m, rhs = tf.matrix, tf.rhs
    s_fact = cholesky(m[iw, iw], "auxiliary block")
    b_wq = -m[iw, ip]
    return spd_solve(s_fact, rhs[iw] - m[iw, iu] @ x + b_wq @ y)


def solve(system):
    """Dense solve with singularity screening.

    Raises SingularSystem when the smallest singular value is at or below
    SINGULAR_RTOL times the largest.  Returns (x, y) for a stabilized system
    and (x, z, y) for a three-field system.
    """
    m, rhs = system.matrix, system.rhs
    svals = np.linalg.svd(m, compute_uv=False)
    if svals[0] == 0.0 or svals[-1] <= SINGULAR_RTOL * svals[0]:
        raise SingularSystem(
            f"system is singular: smallest/largest singular values "
            f"{svals[-1]:.3e} / {svals[0]:.3e}",
            smallest=float(svals[-1]),
            largest=float(svals[0]),
        )
    sol = np.linalg.solve(m, rhs)
    resid = np.linalg.norm(m @ sol - rhs)
    scale = np.linalg.norm(m, "fro") * np.linalg.norm(sol) + np.linalg.norm(rhs)
    if resid > RESIDUAL_RTOL * max(scale, np.finfo(float).tiny):
        raise SingularSystem(f"solver residual {resid:.3e} exceeds tolerance")
    if isinstance(system, ThreeFieldSystem):
        iu, iw, ip = _three_field_slices(system)
        return sol[iu], sol[iw], sol[ip]
    k = system.u_dim
    return sol[:k], sol[k:]


@dataclass(frozen=True)
class ConstantsReport:
    """Measured problem and stabilization constants."""

    alpha: float
    norm_A: float
    norm_B: float
    beta: float
    c_hat: float
    C_hat: float
    kappa_star: float
    K_star: float
    c_star: float
    C_star: float
    gamma0: float
    gamma_tilde0: float

    def beta_gamma(self, gamma):
        """Guaranteed coercivity constant of the stabilized form at this gamma."""
        gamma = float(gamma)
        if gamma < 0.0:
            raise ValueError("gamma must be nonnegative")
        if gamma == 0.0:
            return 0.0
        if self.c_star <= 0.0:
            return float("-inf")
        margin = min(
            gamma * self.c_star / 2.0,
            self.alpha - gamma * self.C_star**2 * self.norm_A**2 / (2.0 * self.c_star),
        )
        return margin * self.c_hat


def constants(pb, d):
    """Measure every constant entering the stabilization bounds.

    alpha and norm_A are truth-level properties of the a-form; beta and norm_B
    are the deflated truth inf-sup constants of the full pressure space;
    c_star is measured on the selected pressure columns through the configured
    dual product.
    """
    g_fact = pb.truth.fact
    sym_a = 0.5 * (pb.a_form + pb.a_form.T)
    alpha = float(sym_generalized_eig(sym_a, g_fact).eigenvalues[0])
    norm_a = operator_norm(pb.a_form, g_fact, g_fact)
    z = pressure_deflation(pb.b_form, pb.q_gram)
    b_eff = pb.b_form @ z
    dual_t = b_eff.T @ spd_solve(g_fact, b_eff)
    dual_t = 0.5 * (dual_t + dual_t.T)
    q_eff = z.T @ (pb.q_gram @ z)
    q_eff = 0.5 * (q_eff + q_eff.T)
    spectrum = sym_generalized_eig(dual_t, cholesky(q_eff, "deflated pressure Gramian")).eigenvalues
    beta = float(np.sqrt(max(spectrum[0], 0.0)))
    norm_b = float(np.sqrt(max(spectrum[-1], 0.0)))
    c_star = estimate_c_star(d.dp, d.b_sel, d.q_sel)
    kappa = d.dp.stiffness.kappa_star
    big_k = d.dp.stiffness.K_star
    c_upper = 1.0 / kappa
    gamma0 = 2.0 * alpha * c_star / (norm_a**2 * c_upper**2)
    return ConstantsReport(
        alpha=alpha,
        norm_A=norm_a,
        norm_B=norm_b,
        beta=beta,
        c_hat=min(1.0, beta**2),
        C_hat=max(1.0, norm_b**2),
        kappa_star=kappa,
        K_star=big_k,
        c_star=c_star,
        C_star=c_upper,
        gamma0=gamma0,
        gamma_tilde0=2.0 * kappa * alpha / norm_a**2,
    )


def verify_coercivity(pb, d, report=None):
    """Measured vs predicted coercivity of the stabilized form.

    measured = smallest eigenvalue of (sym K, blockdiag(G_U, G_Q-deflated));
    asserts measured ≥ beta_gamma(γ) − tol.  Returns (measured, predicted).
    """
    rep = constants(pb, d) if report is None else report
    if d.gamma > 0.0 and d.gamma >= rep.gamma0:
        raise ValueError(
            f"gamma {d.gamma:g} is not below gamma0 {rep.gamma0:g}; no coercivity is predicted"
        )
    system = assemble_stabilized(pb, d)
    sym_k = 0.5 * (system.matrix + system.matrix.T)
    norms = scipy.linalg.block_diag(d.U.gram_sub, d.q_eff)
    measured = float(sym_generalized_eig(sym_k, cholesky(norms, "norm block")).eigenvalues[0])
    predicted = rep.beta_gamma(d.gamma)
    if measured < predicted - COERCIVITY_TOL * max(1.0, abs(predicted)):
        raise BoundViolated(
            f"stabilized coercivity {measured:.6e} below predicted {predicted:.6e}",
            value=measured,
        )
    return measured, predicted


def combined_subspace(truth, *embeddings, rank_rtol=1e-12):
    """Subspace spanned jointly by several embeddings, deduplicated.

    Columns are merged and G-orthonormalized through the eigendecomposition of
    their Gramian; directions below ``rank_rtol`` times the top eigenvalue are
    dropped, so nested or overlapping spaces do not inflate the dimension.
    """
    cat = np.hstack(embeddings)
    gram = cat.T @ (truth.gramian @ cat)
    gram = 0.5 * (gram + gram.T)
    w, v = np.linalg.eigh(gram)
    keep = w > rank_rtol * w[-1]
    basis = cat @ (v[:, keep] / np.sqrt(w[keep]))
    return Subspace(truth, basis)


def verify_relaxed_infsup(pb, d):
    """Inf-sup constant of the pair (Q, U+W); never below the W-only constant."""
    joint = combined_subspace(pb.truth, d.U.embedding, d.W.embedding)
    value = infsup_qw(d.b_sel, d.q_sel, joint)
    floor = infsup_qw(d.b_sel, d.q_sel, d.W)
    if value < floor - COERCIVITY_TOL * max(1.0, floor):
        raise BoundViolated(
            f"relaxed inf-sup {value:.6e} below W-only constant {floor:.6e}", value=value
        )
    return value


def project_pressure(pb, d, y_raw):
    """Deflated coordinates of the G_Q-orthogonal projection of a raw pressure."""
    y_raw = np.asarray(y_raw, dtype=float)
    if y_raw.shape != (pb.pressure_dim,):
        raise DimensionMismatch("raw pressure vector does not match the pressure space")
    return spd_solve(d.q_eff_fact, d.pressure_basis.T @ (pb.q_gram @ y_raw))


@dataclass(frozen=True)
class QuasiOptimality:
    """Errors, best-approximation errors, and their ratio for one solve."""

    u_err: float
    p_err: float
    best_u: float
    best_p: float
    ratio: float


def quasi_optimality(pb, d, exact, report=None):
    """Solve and compare the error against the best-approximation error.

    ``exact`` is the pair (truth velocity coefficients, raw pressure
    coefficients).  Best approximations are the G- and G_Q-orthogonal
    projections onto U and the deflated pressure space.
    """
    rep = constants(pb, d) if report is None else report
    if d.gamma > 0.0 and d.gamma >= rep.gamma0:
        raise ValueError(f"gamma {d.gamma:g} is not below gamma0 {rep.gamma0:g}")
    xe, ye = exact
    xe = np.asarray(xe, dtype=float)
    ye = np.asarray(ye, dtype=float)
    x, y = solve(assemble_stabilized(pb, d))
    du = d.U.embedding @ x - xe
    u_err = pb.truth.norm(du)
    y_ref = project_pressure(pb, d, ye)
    dp_vec = y_ref - y
    p_err = float(np.sqrt(max(dp_vec @ (d.q_eff @ dp_vec), 0.0)))
    ru = xe - d.U.embedding @ orthogonal_project(d.U, xe)
    best_u = pb.truth.norm(ru)
    rp = ye - d.pressure_basis @ y_ref
    best_p = float(np.sqrt(max(rp @ (pb.q_gram @ rp), 0.0)))
    denom = best_u + best_p
    scale = pb.truth.norm(xe) + float(np.sqrt(max(ye @ (pb.q_gram @ ye), 0.0)))
    if denom <= 1e-12 * max(1.0, scale):
        raise DegenerateDenominator(
            "exact solution lies in the discrete spaces; quasi-optimality ratio undefined",
            u_err=u_err,
            p_err=p_err,
        )
    return QuasiOptimality(
        u_err=u_err,
        p_err=p_err,
        best_u=best_u,
        best_p=best_p,
        ratio=(u_err + p_err) / denom,
    )
