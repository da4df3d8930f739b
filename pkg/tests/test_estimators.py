import numpy as np
import pytest

from proxpath.bridges.parametric import BridgeMaps, ParametricDesign, fit_all_parametric, fit_h_chain
from proxpath.data import Dataset
from proxpath.dgp import CONSISTENT, MisspecificationMode, default_spec, oracle_effects, oracle_psi, simulate
from proxpath.errors import ConfigurationError, EstimationError
from proxpath.estimators import (ESTIMATORS, BridgeSet, EstimateReport, effect_reports, effect_summaries,
                                 eif_values, ey1_proximal, fit_ey1_parametric, psi_hybrid1, psi_hybrid2,
                                 psi_pipw, psi_por, psi_quadr, ramy_gradient, ramy_value)

from conftest import tiny_dataset


class Fixed:
    """Bridge returning a constant or a fixed function of the rows."""

    def __init__(self, kind, value):
        self.kind, self.value = kind, value

    def evaluate(self, ds):
        if callable(self.value):
            return np.asarray(self.value(ds), dtype=float)
        return np.full(ds.n, float(self.value))


def const_set(**vals):
    return BridgeSet(**{k: Fixed(k, v) for k, v in vals.items()})


@pytest.fixture(scope="module")
def psi_true(spec):
    return oracle_psi(spec, 10**6, seed=77)


def _with_a(ds, a):
    return Dataset(ds.y, np.full(ds.n, a), ds.d, ds.m, ds.z, ds.w, ds.x)


# --------------------------------------------------------------------------
# plug-ins on hand-built bridges


def test_por_constant_and_shift(small):
    assert psi_por(small, Fixed("h0", 1.75)) == pytest.approx(1.75, abs=1e-15)
    h0 = fit_h_chain(small)[2]
    base = psi_por(small, h0)
    shifted = psi_por(small, Fixed("h0", lambda d: h0.evaluate(d) + 0.3))
    assert shifted - base == pytest.approx(0.3, abs=1e-12)


def test_pipw_examples(small):
    assert psi_pipw(_with_a(small, 0), Fixed("q2", 5.0)) == 0.0
    ds = _with_a(small, 1)
    assert psi_pipw(ds, Fixed("q2", 2.0)) == pytest.approx(2 * ds.y.mean(), rel=1e-14)


def test_hybrid_examples(small):
    assert psi_hybrid1(_with_a(small, 0), Fixed("h1", 3.0), Fixed("q0", 1.0)) == 0.0
    assert psi_hybrid1(_with_a(small, 1), Fixed("h1", 3.0), Fixed("q0", 1.0)) == pytest.approx(3.0)
    assert psi_hybrid2(_with_a(small, 1), Fixed("h2", 3.0), Fixed("q1", 1.0)) == 0.0
    assert psi_hybrid2(_with_a(small, 0), Fixed("h2", 3.0), Fixed("q1", 1.0)) == pytest.approx(3.0)


def test_empty_dataset_rejected():
    ds = tiny_dataset(y=(), a=())
    with pytest.raises(EstimationError):
        psi_por(ds, Fixed("h0", 1.0))


def test_bridge_slot_mismatch():
    with pytest.raises(ConfigurationError):
        BridgeSet(h0=Fixed("h1", 1.0))
    with pytest.raises(ConfigurationError, match="q2"):
        psi_quadr(tiny_dataset(), const_set(h2=0, h1=0, h0=0, q0=0, q1=0))


def test_unknown_report_tag():
    with pytest.raises(ConfigurationError):
        EstimateReport("P-XYZ", 0.0)


# --------------------------------------------------------------------------
# influence function


def test_eif_row_cancellation():
    # one treated row with q0 = q2 = 1, h2 = y, h1 = h0 = c, psi = c
    ds = Dataset([2.5], [1], [0.1], [0.2], [0.3], [0.4], [0.5])
    b = const_set(h2=2.5, h1=1.2, h0=1.2, q0=1.0, q1=7.0, q2=1.0)
    assert eif_values(ds, b, 1.2)[0] == 0.0


def test_eif_control_row_reduces_to_h0(small):
    ds = _with_a(small, 0)
    b = BridgeSet(h2=Fixed("h2", lambda d: d.w[:, 0]), h1=Fixed("h1", lambda d: d.z[:, 0]),
                  h0=Fixed("h0", lambda d: d.x[:, 0]), q0=Fixed("q0", 3.0), q1=Fixed("q1", 0.0),
                  q2=Fixed("q2", 4.0))
    np.testing.assert_array_equal(eif_values(ds, b, 0.4), ds.x[:, 0] - 0.4)


def test_quadr_telescoping(small):
    c = 0.8
    q2 = lambda d: 1 + d.z[:, 0] ** 2
    b = BridgeSet(h2=Fixed("h2", c), h1=Fixed("h1", c), h0=Fixed("h0", c), q0=Fixed("q0", lambda d: d.x[:, 0]),
                  q1=Fixed("q1", -2.0), q2=Fixed("q2", q2))
    expected = np.mean(small.a * q2(small) * (small.y - c)) + c
    assert psi_quadr(small, b).psi_hat == pytest.approx(expected, rel=1e-14, abs=1e-15)


def test_quadr_is_mean_of_uncentered_eif(small):
    b = BridgeSet.from_dict(fit_all_parametric(small))
    r = psi_quadr(small, b)
    assert r.psi_hat == np.mean(eif_values(small, b, 0.0))
    d = r.diagnostics
    assert sum(d["term_means"]) == pytest.approx(r.psi_hat, abs=1e-12)
    assert d["P-OR"] == psi_por(small, b.h0)
    assert d["P-IPW"] == psi_pipw(small, b.q2)
    assert d["eif_se"] > 0


def test_eif_mean_zero_at_truth(big, psi_true):
    b = BridgeSet.from_dict(fit_all_parametric(big))
    phi = eif_values(big, b, psi_true[0])
    assert abs(phi.mean()) <= 4 * phi.std() / np.sqrt(big.n)


def test_estimators_permutation_invariant(small):
    perm = np.random.default_rng(8).permutation(small.n)
    e1 = ParametricDesign(small).estimates()[0]
    e2 = ParametricDesign(small.take(perm)).estimates()[0]
    np.testing.assert_allclose(e1, e2, rtol=0, atol=1e-10)


def test_design_matches_function_api(small):
    b = fit_all_parametric(small)
    direct = [psi_por(small, b["h0"]), psi_pipw(small, b["q2"]), psi_hybrid1(small, b["h1"], b["q0"]),
              psi_hybrid2(small, b["h2"], b["q1"]), psi_quadr(small, BridgeSet.from_dict(b)).psi_hat]
    np.testing.assert_allclose(ParametricDesign(small).estimates()[0], direct, rtol=1e-10)


# --------------------------------------------------------------------------
# large-sample behavior against the oracle


def _plugin_ses(ds, maps=None):
    b = fit_all_parametric(ds, maps)
    bs = BridgeSet.from_dict(b)
    v = bs.values(ds, "h2", "h1", "h0", "q0", "q1", "q2")
    a, y = ds.a, ds.y
    rows = [v["h0"], a * y * v["q2"], a * v["h1"] * v["q0"], (1 - a) * v["h2"] * v["q1"],
            eif_values(ds, bs, 0.0)]
    # spread of each estimator's summand, a conservative standard error here
    est = np.array([r.mean() for r in rows])
    se = np.array([r.std() for r in rows]) / np.sqrt(ds.n)
    return est, se


def test_all_plugins_agree_with_oracle(big, psi_true):
    psi, mc = psi_true
    est, se = _plugin_ses(big)
    for name, e, s in zip(ESTIMATORS, est, se):
        assert abs(e - psi) < 4 * np.hypot(s, mc), name


@pytest.mark.parametrize("scenario", [2, 3, 4, 5])
def test_quadruple_robustness(big, psi_true, scenario):
    psi, mc = psi_true
    maps = BridgeMaps.default().corrupted(MisspecificationMode.for_scenario(scenario))
    est, se = _plugin_ses(big, maps)
    z = np.abs(est - psi) / np.hypot(se, mc)
    good = CONSISTENT[scenario]
    for name, zi in zip(ESTIMATORS, z):
        if name in good:
            assert zi < 5, (name, zi)
    assert max(zi for name, zi in zip(ESTIMATORS, z) if name not in good) > 10


# --------------------------------------------------------------------------
# E[Y(1)] and effect summaries


def test_ey1_modes_on_constant_outcome(small):
    ds = Dataset(np.full(small.n, 1.5), small.a, small.d, small.m, small.z, small.w, small.x)
    for mode in ("outcome-bridge", "treatment-bridge", "doubly-robust"):
        assert ey1_proximal(ds, mode) == pytest.approx(1.5, abs=1e-10)
    with pytest.raises(ConfigurationError):
        ey1_proximal(ds, "plug-in")


def test_ey1_modes_against_oracle(spec, big):
    o = oracle_effects(spec, 10**6, seed=78)
    h, q0 = fit_ey1_parametric(big)
    hv, qv = h.evaluate(big), q0.evaluate(big)
    for mode, rows in (("outcome-bridge", hv), ("treatment-bridge", big.a * big.y * qv),
                       ("doubly-robust", big.a * qv * (big.y - hv) + hv)):
        est = ey1_proximal(big, mode, bridges=(h, q0))
        assert est == pytest.approx(rows.mean(), rel=1e-12)
        assert abs(est - o.ey1) < 4 * np.hypot(rows.std() / np.sqrt(big.n), o.ey1_se), mode


def test_ey1_doubly_robust_with_corrupted_outcome_bridge(spec, big):
    o = oracle_effects(spec, 10**6, seed=78)
    maps = BridgeMaps.default().corrupted(MisspecificationMode.SCENARIO3)
    h, q0 = fit_ey1_parametric(big, maps)
    rows = big.a * q0.evaluate(big) * (big.y - h.evaluate(big)) + h.evaluate(big)
    assert abs(rows.mean() - o.ey1) < 5 * np.hypot(rows.std() / np.sqrt(big.n), o.ey1_se)


def test_effect_summaries_null_effect():
    assert effect_summaries(0.4, 0.4) == (0.0, None)
    assert effect_summaries(0.4, 0.4, "binary") == (0.0, 0.0)


def test_ramy_hand_arithmetic():
    # p1 = 0.0004, p0 = 0.001: odds ratio 0.4 * 0.999 / 0.9996, so R = 0.6 / 0.9996
    pamy, ramy = effect_summaries(0.9996, 0.9990, "binary")
    assert pamy == pytest.approx(0.0006, abs=1e-15)
    assert ramy == pytest.approx(0.6 / 0.9996, rel=1e-12)
    assert ramy == pytest.approx(0.600240096, abs=1e-9)


def test_ramy_degenerate_odds():
    with pytest.raises(EstimationError):
        effect_summaries(0.9, 1.0, "binary")
    with pytest.raises(EstimationError):
        effect_summaries(0.0, 0.5, "binary")
    with pytest.raises(ConfigurationError):
        effect_summaries(0.5, 0.5, "count")


def test_ramy_gradient_matches_finite_differences():
    e, p, h = 0.7, 0.55, 1e-6
    g1, g0 = ramy_gradient(e, p)
    assert g1 == pytest.approx((ramy_value(e + h, p) - ramy_value(e - h, p)) / (2 * h), rel=1e-6)
    assert g0 == pytest.approx((ramy_value(e, p + h) - ramy_value(e, p - h)) / (2 * h), rel=1e-6)


def test_effect_reports_pairing():
    rng = np.random.default_rng(0)
    base = rng.normal(size=500)
    # perfectly correlated influence values: the difference has zero spread
    e1, ps = 0.7 + 0.1 * base, 0.5 + 0.1 * base
    reps = effect_reports(e1, ps, "binary")
    assert [r.tag for r in reps] == ["EY1", "P_AMY", "R_AMY"]
    assert reps[1].psi_hat == pytest.approx(0.2)
    assert reps[1].se == pytest.approx(0.0, abs=1e-14)
    assert reps[2].psi_hat == pytest.approx(ramy_value(e1.mean(), ps.mean()), rel=1e-12)
    assert reps[0].ci[0] < reps[0].psi_hat < reps[0].ci[1]
    assert len(effect_reports(base, base)) == 2


def test_binary_effects_against_oracle():
    spec = default_spec(outcome="binary")
    ds = simulate(spec, 10**5, seed=31)
    o = oracle_effects(spec, 10**6, seed=32)
    h, q0 = fit_ey1_parametric(ds)
    ey1_phi = ds.a * q0.evaluate(ds) * (ds.y - h.evaluate(ds)) + h.evaluate(ds)
    psi_phi = eif_values(ds, BridgeSet.from_dict(fit_all_parametric(ds)), 0.0)
    ey1, pamy, ramy = effect_reports(ey1_phi, psi_phi, "binary")
    assert abs(pamy.psi_hat - o.pamy) < 5 * np.hypot(pamy.se, o.pamy_se)
    assert abs(ramy.psi_hat - o.ramy) < 5 * np.hypot(ramy.se, o.ramy_se)
