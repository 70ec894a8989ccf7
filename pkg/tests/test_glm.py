import math
import random

import numpy as np
import pytest

import support
from vctrace.delabel import glm
from vctrace.delabel.kernels import BACKEND, HAVE_COMPILED
from vctrace.errors import NormalizationError


def test_size_factors_hand_case():
    counts = np.array([[2.0, 4.0], [3.0, 6.0]])
    sf = glm.size_factors(counts)
    assert sf == pytest.approx([1 / math.sqrt(2), math.sqrt(2)], abs=1e-12)


def test_size_factors_identical_columns_are_one():
    counts = np.array([[5.0, 5.0, 5.0], [9.0, 9.0, 9.0], [2.0, 2.0, 2.0]])
    assert glm.size_factors(counts) == pytest.approx([1.0, 1.0, 1.0])


def test_size_factors_product_positive():
    rng = np.random.default_rng(5)
    counts = rng.poisson(50.0, size=(40, 6)).astype(float) + 1.0
    sf = glm.size_factors(counts)
    assert np.all(sf > 0)


def test_size_factors_requires_an_all_positive_gene():
    counts = np.array([[0.0, 4.0], [3.0, 0.0]])
    with pytest.raises(NormalizationError):
        glm.size_factors(counts)


def _design(n_per: int):
    return np.ones(2 * n_per), np.array([False] * n_per + [True] * n_per)


def test_fit_exact_doubling_recovers_log2fc_one():
    control = np.array([10.0, 12.0, 11.0, 13.0, 9.0, 11.0])
    counts = np.concatenate([control, 2 * control])[None, :]
    sf, treated = _design(6)
    fit = glm.nb_glm_fit_many(counts, sf, treated)
    assert fit["status"][0] == glm.STATUS_OK
    assert fit["beta1"][0] / math.log(2) == pytest.approx(1.0, abs=1e-6)


def test_fit_equal_groups_gives_null_wald():
    control = np.array([10.0, 12.0, 11.0, 13.0, 9.0, 11.0])
    counts = np.concatenate([control, control])[None, :]
    sf, treated = _design(6)
    fit = glm.nb_glm_fit_many(counts, sf, treated)
    z, p = glm.wald_test(fit["beta1"][0], fit["se1"][0])
    assert abs(fit["beta1"][0]) < 1e-9
    assert p == pytest.approx(1.0, abs=1e-9)


def test_fit_honors_size_factor_offsets():
    # doubling every treated sample's depth with identical expression
    # must fit beta1 = 0 once size factors absorb the depth
    control = np.array([20.0, 22.0, 18.0, 21.0])
    counts = np.concatenate([control, 2 * control])[None, :]
    sf = np.array([1.0] * 4 + [2.0] * 4)
    treated = np.array([False] * 4 + [True] * 4)
    fit = glm.nb_glm_fit_many(counts, sf, treated)
    assert abs(fit["beta1"][0]) < 1e-8


def test_all_zero_gene_status():
    counts = np.zeros((1, 12))
    sf, treated = _design(6)
    fit = glm.nb_glm_fit_many(counts, sf, treated)
    assert fit["status"][0] == glm.STATUS_ALL_ZERO
    assert math.isnan(fit["beta1"][0])


def test_one_sided_zero_gene_does_not_crash():
    counts = np.concatenate([np.full(6, 30.0), np.zeros(6)])[None, :]
    sf, treated = _design(6)
    fit = glm.nb_glm_fit_many(counts, sf, treated)
    assert fit["status"][0] in (glm.STATUS_OK, glm.STATUS_NON_CONVERGED)


def test_design_preconditions():
    counts = np.ones((1, 3))
    with pytest.raises(ValueError):
        glm.nb_glm_fit_many(counts, np.ones(3), np.array([True, True, False]))


def test_moment_dispersion_recovers_scale():
    rng = np.random.default_rng(0)
    mu = 200.0
    disp = 0.15
    r = 1 / disp
    counts = rng.negative_binomial(r, r / (r + mu), size=(400, 40)).astype(float)
    sf = np.ones(40)
    treated = np.array([False] * 20 + [True] * 20)
    alpha = glm.moment_dispersion(counts, sf, treated)
    assert np.median(alpha) == pytest.approx(disp, rel=0.25)


def test_wald_known_quantile():
    z, p = glm.wald_test(1.959964, 1.0)
    assert p == pytest.approx(0.05, abs=1e-6)


def test_wald_two_sided_symmetry():
    _, p_pos = glm.wald_test(3.0, 1.0)
    _, p_neg = glm.wald_test(-3.0, 1.0)
    assert p_pos == p_neg


def test_wald_zero_beta():
    z, p = glm.wald_test(0.0, 2.0)
    assert z == 0.0 and p == 1.0


def test_wald_requires_positive_se():
    with pytest.raises(ValueError):
        glm.wald_test(1.0, 0.0)


def test_bh_hand_case():
    adj = glm.bh_adjust([0.01, 0.02, 0.03, 0.04])
    assert adj == pytest.approx([0.04, 0.04, 0.04, 0.04], abs=1e-15)


def test_bh_single_p_unchanged():
    assert glm.bh_adjust([0.3]) == pytest.approx([0.3])


def test_bh_rejects_out_of_range():
    with pytest.raises(ValueError):
        glm.bh_adjust([0.5, 1.5])
    with pytest.raises(ValueError):
        glm.bh_adjust([0.5, float("nan")])


def test_bh_empty_vector():
    assert glm.bh_adjust([]).size == 0


def test_bh_matches_brute_force_on_random_vectors():
    rng = random.Random(77)
    for _ in range(400):
        n = rng.randint(1, 12)
        p = [round(rng.random(), 6) for _ in range(n)]
        got = glm.bh_adjust(p)
        want = support.brute_force_bh(p)
        assert np.allclose(got, want, atol=1e-12)


def test_bh_bounded_and_order_preserving():
    rng = np.random.default_rng(4)
    p = rng.random(200)
    adj = glm.bh_adjust(p)
    assert np.all((adj >= 0) & (adj <= 1))
    order = np.argsort(p, kind="stable")
    assert np.all(np.diff(adj[order]) >= -1e-15)


def test_backend_is_reported():
    assert BACKEND in ("compiled", "pure")


@pytest.mark.skipif(not HAVE_COMPILED, reason="compiled kernel not built")
def test_compiled_matches_pure_on_random_matrices():
    from vctrace.delabel import _nbglm

    rng = np.random.default_rng(123)
    mu0 = rng.uniform(0.5, 800.0, size=500)
    r = 8.0
    counts = rng.negative_binomial(
        r, r / (r + mu0[:, None]), size=(500, 10)
    ).astype(float)
    counts[:5] = 0.0  # force all_zero rows
    sf = rng.uniform(0.5, 2.0, size=10)
    treated = np.array([False] * 5 + [True] * 5)
    pure = glm.nb_glm_fit_many(counts, sf, treated)
    comp = _nbglm.nb_glm_fit_many(counts, sf, treated)
    for key in ("beta0", "beta1", "se1", "alpha"):
        assert np.allclose(
            pure[key], comp[key], rtol=1e-9, atol=1e-12, equal_nan=True
        ), key
    assert np.array_equal(pure["status"], comp["status"])
    assert np.array_equal(pure["n_iter"], comp["n_iter"])


def test_null_simulation_calibration():
    rng = np.random.default_rng(2027)
    n_genes = 2000
    mu0 = rng.uniform(50.0, 500.0, size=n_genes)
    disp = 0.05
    r = 1 / disp
    counts = rng.negative_binomial(
        r, r / (r + mu0[:, None]), size=(n_genes, 20)
    ).astype(float)
    sf = np.ones(20)
    treated = np.array([False] * 10 + [True] * 10)
    fit = glm.nb_glm_fit_many(counts, sf, treated)
    ok = fit["status"] == glm.STATUS_OK
    _, p = glm.wald_test_many(fit["beta1"][ok], fit["se1"][ok])
    frac = float(np.mean(p < 0.05))
    assert 0.02 <= frac <= 0.08
