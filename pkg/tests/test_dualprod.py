import numpy as np
import pytest

from dualstab.algebra import NotSpd, spd_solve
from dualstab.dualprod import (
    BoundViolated,
    DegeneratePencil,
    DualProduct,
    c_apply,
    dual_equivalence_interval,
    equivalence_report,
    estimate_c_star,
    infsup_dual,
    infsup_qw,
    make_stiffness,
    pressure_deflation,
    stiffness_dual_norm,
    stiffness_from_matrix,
    verify_cstar_infsup_link,
    verify_dual_equivalence,
    verify_infsup_sandwich,
    verify_stiffness_bound,
)
from dualstab.hilbert import Functional, Subspace, TruthSpace, dual_norm
from dualstab.models import p1_interior_mass, p1_stiffness, prolongation_p1


def random_truth(rng, n, lo=0.1, hi=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = np.exp(rng.uniform(np.log(lo), np.log(hi), n))
    return TruthSpace(q @ (ev[:, None] * q.T))


def mass_pair(truth_elems=64, coarse_elems=8):
    """Coarse P1 space inside a fine P1 mass space; lumping is SPD here."""
    ts = TruthSpace(p1_interior_mass(truth_elems), label="mass")
    return ts, Subspace(ts, prolongation_p1(truth_elems, coarse_elems))


class TestStiffnessChoices:
    def test_gramian_spectrum_is_one(self):
        rng = np.random.default_rng(1)
        ts = random_truth(rng, 20)
        sub = Subspace(ts, rng.standard_normal((20, 7)))
        sf = make_stiffness(sub, "gramian")
        assert sf.kappa_star == pytest.approx(1.0, abs=1e-12)
        assert sf.K_star == pytest.approx(1.0, abs=1e-12)

    def test_scaled_spectrum(self):
        rng = np.random.default_rng(2)
        ts = random_truth(rng, 15)
        sub = Subspace(ts, rng.standard_normal((15, 6)))
        sf = make_stiffness(sub, "scaled:2")
        assert sf.kappa_star == pytest.approx(2.0, rel=1e-12)
        assert sf.K_star == pytest.approx(2.0, rel=1e-12)

    def test_lumped_mass_is_spd_with_spread(self):
        _, sub = mass_pair()
        sf = make_stiffness(sub, "lumped")
        assert sf.kappa_star == pytest.approx(1.0, rel=1e-10)
        assert sf.K_star > 1.5  # strictly separated spectrum

    def test_lumped_stiffness_rejected(self):
        # interior rows of a stiffness Gramian sum to ~0: not SPD by design
        ts = TruthSpace(p1_stiffness(32))
        sub = Subspace(ts, prolongation_p1(32, 8))
        with pytest.raises(NotSpd):
            make_stiffness(sub, "lumped")

    def test_bad_choices_rejected(self):
        _, sub = mass_pair(16, 4)
        with pytest.raises(ValueError):
            make_stiffness(sub, "scaled:0")
        with pytest.raises(ValueError):
            make_stiffness(sub, "scaled:x")
        with pytest.raises(ValueError):
            make_stiffness(sub, "diag")

    def test_custom_matrix_spectrum(self):
        rng = np.random.default_rng(3)
        ts = random_truth(rng, 12)
        sub = Subspace(ts, rng.standard_normal((12, 5)))
        sf = stiffness_from_matrix(sub, 3.0 * sub.gram_sub, choice="x3")
        assert sf.kappa_star == pytest.approx(3.0, rel=1e-12)
        assert sf.choice == "x3"

    def test_stiffness_dim_must_match_subspace(self):
        rng = np.random.default_rng(4)
        ts = random_truth(rng, 10)
        sub = Subspace(ts, rng.standard_normal((10, 4)))
        other = Subspace(ts, rng.standard_normal((10, 3)))
        with pytest.raises(Exception):
            DualProduct(aux=sub, stiffness=make_stiffness(other))


class TestCApply:
    def test_exact_on_full_space(self):
        # W = truth, S = G: c(f, g) is the exact dual scalar product
        rng = np.random.default_rng(11)
        ts = random_truth(rng, 25)
        sub = Subspace(ts, np.eye(25))
        dp = DualProduct(aux=sub, stiffness=make_stiffness(sub, "gramian"))
        for _ in range(20):
            f = Functional(rng.standard_normal(25))
            g = Functional(rng.standard_normal(25))
            exact = float(f.action @ spd_solve(ts.fact, g.action))
            assert c_apply(dp, f, g) == pytest.approx(exact, rel=1e-12, abs=1e-12)

    def test_symmetric_and_positive(self):
        rng = np.random.default_rng(12)
        ts = random_truth(rng, 18)
        sub = Subspace(ts, rng.standard_normal((18, 9)))
        dp = DualProduct(aux=sub, stiffness=make_stiffness(sub, "scaled:1.5"))
        f = Functional(rng.standard_normal(18))
        g = Functional(rng.standard_normal(18))
        assert c_apply(dp, f, g) == pytest.approx(c_apply(dp, g, f), rel=1e-12)
        assert c_apply(dp, f, f) >= 0.0

    def test_scaling_inverse_in_s(self):
        # c with S = 2 G_W is exactly half of c with S = G_W
        rng = np.random.default_rng(13)
        ts = random_truth(rng, 16)
        sub = Subspace(ts, rng.standard_normal((16, 6)))
        dp1 = DualProduct(aux=sub, stiffness=make_stiffness(sub, "gramian"))
        dp2 = DualProduct(aux=sub, stiffness=make_stiffness(sub, "scaled:2"))
        f = Functional(rng.standard_normal(16))
        assert c_apply(dp2, f, f) == pytest.approx(0.5 * c_apply(dp1, f, f), rel=1e-12)


class TestEquivalenceInterval:
    def test_gramian_interval_collapses_to_one(self):
        rng = np.random.default_rng(21)
        ts = random_truth(rng, 14)
        sub = Subspace(ts, rng.standard_normal((14, 6)))
        dp = DualProduct(aux=sub, stiffness=make_stiffness(sub, "gramian"))
        lo, hi = dual_equivalence_interval(dp)
        assert lo == pytest.approx(1.0, rel=1e-11)
        assert hi == pytest.approx(1.0, rel=1e-11)
        verify_dual_equivalence(dp)

    def test_scaled_interval_is_half(self):
        rng = np.random.default_rng(22)
        ts = random_truth(rng, 14)
        sub = Subspace(ts, rng.standard_normal((14, 5)))
        dp = DualProduct(aux=sub, stiffness=make_stiffness(sub, "scaled:2"))
        lo, hi = dual_equivalence_interval(dp)
        assert lo == pytest.approx(0.5, rel=1e-11)
        assert hi == pytest.approx(0.5, rel=1e-11)
        verify_dual_equivalence(dp)

    def test_lumped_interval_matches_bounds_exactly(self):
        # the interval ends ARE [1/K, 1/kappa] for any SPD S
        _, sub = mass_pair()
        dp = DualProduct(aux=sub, stiffness=make_stiffness(sub, "lumped"))
        lo, hi = dual_equivalence_interval(dp)
        assert lo == pytest.approx(1.0 / dp.stiffness.K_star, rel=1e-10)
        assert hi == pytest.approx(1.0 / dp.stiffness.kappa_star, rel=1e-10)
        verify_dual_equivalence(dp)

    def test_rayleigh_sweep_inside_interval(self):
        # c(f,f) / ||P*f||^2 stays within the verified interval
        rng = np.random.default_rng(23)
        ts, sub = mass_pair(32, 8)
        dp = DualProduct(aux=sub, stiffness=make_stiffness(sub, "lumped"))
        lo, hi = verify_dual_equivalence(dp)
        e = sub.embedding
        for _ in range(100):
            f = Functional(rng.standard_normal(ts.dim))
            w = e.T @ f.action
            if np.abs(w).max() < 1e-12:
                continue
            cval = c_apply(dp, f, f)
            # squared dual norm of the W-restriction: w^T G_W^-1 w
            pnorm = float(w @ spd_solve(sub.fact, w))
            assert lo - 1e-10 <= cval / pnorm <= hi + 1e-10

    def test_stiffness_dual_norm_equals_k_star(self):
        _, sub = mass_pair()
        for choice in ("gramian", "scaled:3", "lumped"):
            dp = DualProduct(aux=sub, stiffness=make_stiffness(sub, choice))
            assert stiffness_dual_norm(dp) == pytest.approx(dp.stiffness.K_star, rel=1e-9)
            verify_stiffness_bound(dp)


class TestPressureDeflation:
    def test_full_rank_returns_identity(self):
        rng = np.random.default_rng(31)
        b = rng.standard_normal((10, 4))
        np.testing.assert_array_equal(pressure_deflation(b, np.eye(4)), np.eye(4))

    def test_removes_kernel_and_orthonormalizes(self):
        rng = np.random.default_rng(32)
        b0 = rng.standard_normal((12, 4))
        mix = np.hstack([b0, b0 @ rng.standard_normal((4, 2))])  # rank 4, 6 cols
        qg = np.eye(6) + 0.1 * np.ones((6, 6))
        z = pressure_deflation(mix, qg)
        assert z.shape == (6, 4)
        np.testing.assert_allclose(z.T @ qg @ z, np.eye(4), atol=1e-10)
        # deflated directions carry no kernel component: B z has full rank 4
        s = np.linalg.svd(mix @ z, compute_uv=False)
        assert s[-1] > 1e-10 * s[0]

    def test_zero_matrix_degenerate(self):
        with pytest.raises(DegeneratePencil):
            pressure_deflation(np.zeros((5, 3)), np.eye(3))


def model_setup(truth=64, coarse=8):
    """Well-posed (truth, W, B, G_Q) quadruple on nested mass spaces."""
    ts, w_sub = mass_pair(truth, coarse * 2)
    b = p1_interior_mass(truth) @ prolongation_p1(truth, coarse)  # full column rank
    b = b[:, : coarse - 1]
    qg = np.eye(coarse - 1) + 0.05 * np.ones((coarse - 1, coarse - 1))
    return ts, w_sub, b, qg


class TestConstants:
    def test_exactness_limit(self):
        # W = truth, S = G: c_star = alpha_hat = 1
        rng = np.random.default_rng(41)
        ts = random_truth(rng, 30)
        sub = Subspace(ts, np.eye(30))
        dp = DualProduct(aux=sub, stiffness=make_stiffness(sub, "gramian"))
        b = rng.standard_normal((30, 6))
        rep = equivalence_report(dp, b, np.eye(6))
        assert rep.c_star == pytest.approx(1.0, abs=1e-9)
        assert rep.alpha_hat == pytest.approx(1.0, abs=1e-9)
        assert rep.C_star == pytest.approx(1.0, abs=1e-12)

    def test_chain_link_and_equality_at_gramian(self):
        ts, w_sub, b, qg = model_setup()
        dp = DualProduct(aux=w_sub, stiffness=make_stiffness(w_sub, "gramian"))
        rep = verify_cstar_infsup_link(dp, b, qg)
        # with S = G_W the chain holds with equality: c_star = alpha_hat^2
        assert rep.c_star == pytest.approx(rep.alpha_hat**2, rel=1e-9)

    def test_chain_with_lumped_s(self):
        ts, w_sub, b, qg = model_setup()
        dp = DualProduct(aux=w_sub, stiffness=make_stiffness(w_sub, "lumped"))
        rep = verify_cstar_infsup_link(dp, b, qg)
        assert rep.alpha_hat >= np.sqrt(rep.c_star * rep.kappa_star) - 1e-8
        assert rep.c_star >= rep.alpha_hat**2 / rep.K_star - 1e-8

    def test_sandwich_holds(self):
        ts, w_sub, b, qg = model_setup()
        dp = DualProduct(aux=w_sub, stiffness=make_stiffness(w_sub, "gramian"))
        rep = verify_infsup_sandwich(dp, b, qg, rng=np.random.default_rng(0))
        assert rep.beta_hat / rep.norm_B <= rep.alpha_hat * (1 + 1e-9)
        assert rep.alpha_hat <= rep.beta_hat / rep.beta * (1 + 1e-9)

    def test_beta_normb_bracket_random_pressures(self):
        rng = np.random.default_rng(45)
        ts, w_sub, b, qg = model_setup()
        dp = DualProduct(aux=w_sub, stiffness=make_stiffness(w_sub, "gramian"))
        rep = equivalence_report(dp, b, qg)
        z = pressure_deflation(b, qg)
        for _ in range(100):
            y = rng.standard_normal(z.shape[1])
            q_norm = np.sqrt(y @ (z.T @ qg @ z) @ y)
            b_norm = dual_norm(ts, Functional(b @ (z @ y)))
            assert rep.beta * q_norm <= b_norm * (1 + 1e-9)
            assert b_norm <= rep.norm_B * q_norm * (1 + 1e-9)

    def test_w_only_constants_never_exceed_truth(self):
        # restricting the sup space can only lower an inf-sup constant
        ts, w_sub, b, qg = model_setup()
        full = Subspace(ts, np.eye(ts.dim))
        assert infsup_qw(b, qg, w_sub) <= infsup_qw(b, qg, full) * (1 + 1e-10)
        assert infsup_dual(b, qg, w_sub) <= infsup_dual(b, qg, full) * (1 + 1e-10)
        # on the full space the dual-norm constant is exactly 1
        assert infsup_dual(b, qg, full) == pytest.approx(1.0, rel=1e-10)

    def test_c_star_zero_when_w_misses_constraint_range(self):
        # B maps into the orthogonal complement of span(W): c_star must vanish
        ts = TruthSpace(np.eye(8))
        w_sub = Subspace(ts, np.eye(8)[:, :4])
        b = np.eye(8)[:, 4:6]  # functionals supported off W entirely
        dp = DualProduct(aux=w_sub, stiffness=make_stiffness(w_sub, "gramian"))
        assert estimate_c_star(dp, b, np.eye(2)) == pytest.approx(0.0, abs=1e-12)
        assert infsup_qw(b, np.eye(2), w_sub) == pytest.approx(0.0, abs=1e-12)

    def test_continuity_of_c_against_dual_norms(self):
        # |c(f, g)| <= C_star ||f|| ||g|| with C_star = 1/kappa_star
        rng = np.random.default_rng(47)
        ts, w_sub, b, qg = model_setup()
        dp = DualProduct(aux=w_sub, stiffness=make_stiffness(w_sub, "lumped"))
        cs = 1.0 / dp.stiffness.kappa_star
        for _ in range(60):
            f = Functional(rng.standard_normal(ts.dim))
            g = Functional(rng.standard_normal(ts.dim))
            bound = cs * dual_norm(ts, f) * dual_norm(ts, g)
            assert abs(c_apply(dp, f, g)) <= bound * (1 + 1e-9)


class TestVerifyFailurePaths:
    def test_mismatched_constraint_rows_rejected(self):
        ts, w_sub, _, _ = model_setup()
        dp = DualProduct(aux=w_sub, stiffness=make_stiffness(w_sub, "gramian"))
        with pytest.raises(Exception, match="constraint matrix"):
            verify_cstar_infsup_link(dp, np.ones((5, 2)), np.eye(2))

    def test_bound_violated_carries_value(self):
        err = BoundViolated("msg", value=1.5)
        assert err.value == 1.5
