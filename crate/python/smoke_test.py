"""Smoke test for the compiled extension: `pip install` the wheel built from
crates/py, then run `python python/smoke_test.py` or `pytest python/`."""

import math

import pmvol


def test_simulated_panel_roundtrip():
    panel, signal = pmvol.simulate_panel(seed=7)
    assert len(panel) > 200
    assert signal in panel
    again = pmvol.Panel.from_csv(panel.to_csv())
    assert again.columns == panel.columns
    assert again.column("BTC.rvol5") == panel.column("BTC.rvol5")


def test_estimate_recovers_planted_signal():
    panel, signal = pmvol.simulate_panel(seed=11)
    fit = pmvol.estimate(
        panel,
        "BTC.rvol5",
        [("BTC.har1", 0), ("BTC.har5", 0), ("BTC.har20", 0), ("vix", 0), ("dxy_ret", 0), ("spx_ret", 0), (signal, 1)],
    )
    est, se, _, _ = fit.term("L1." + signal)
    assert fit.names[0] == "const"
    assert abs(est - 0.639) < 4 * se


def test_ols_and_covariance():
    x = [[1.0, float(i), math.sin(i)] for i in range(30)]
    y = [0.5 + 0.2 * r[1] - r[2] + 0.01 * ((i * 7) % 5) for i, r in enumerate(x)]
    fit = pmvol.ols(x, y)
    assert abs(fit["coefficients"][1] - 0.2) < 1e-2
    nw0 = pmvol.covariance(x, fit["residuals"], "nw", 0, False)
    hc0 = pmvol.covariance(x, fit["residuals"], "hc0")
    assert max(abs(a - b) for ra, rb in zip(nw0, hc0) for a, b in zip(ra, rb)) < 1e-14


def test_volatility_and_inference():
    rv = pmvol.realized_vol([0.01, -0.02, 0.015, None, 0.005], 2)
    assert rv[0] is not None and rv[-1] is None
    adjusted, rejected = pmvol.benjamini_hochberg([0.001, 0.02, 0.04, 0.5], 0.05)
    assert rejected == [True, True, False, False]
    assert all(a >= p for a, p in zip(adjusted, [0.001, 0.02, 0.04, 0.5]))
    assert pmvol.vol_managed_weights([0.1, 0.4, 0.0, None], 0.2) == [2.0, 0.5, 2.0, None]


def test_garch_and_out_of_sample():
    panel, signal = pmvol.simulate_panel(seed=3)
    returns = [r for r in panel.column("BTC.ret") if r is not None]
    g = pmvol.garch11_fit(returns)
    assert 0.0 < g["persistence"] < 1.0
    base = [("BTC.har1", 0), ("BTC.har5", 0), ("BTC.har20", 0)]
    res = pmvol.out_of_sample(panel, "BTC.rvol5", base, [(signal, 1)])
    assert res["n_oos"] == len(res["cssed"]) > 0
    assert res["cw_p"] is not None and 0.0 <= res["cw_p"] <= 1.0


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_"):
            fn()
            print("ok", name)
